"""Regenerates the rendered-prompt golden files: python3 generate.py

The template wording below is typed in independently of the shipped
template resources, so a drift in either one shows up as a golden mismatch.
Encoding and reasoning goldens hold system + "\n" + user; the fact golden
holds the user prompt only (the fact prompt has no system part).
"""

import json
import pathlib

NONE = "(none)"
NO_JUDGEMENT = "(no judgement extracted)"

FACT = "Summarize in 50 words: {c_Bg}"

REASONING_SYSTEM = "Assuming you are a legal expert from Federal Court of Canada."
REASONING_USER = (
    "Given a case with its legal facts: {c_Fact}.\n"
    "Legal fact relation triplets: {R_Fact}.\n"
    "Legal issues: {c_Issue}.\n"
    "Legal issue relation triplets: {R_Issue}.\n"
    "Final case judgement: {c_Jud}.\n"
    "Please explain how to deduce the final judgement from both legal facts and legal issues in 100 words."
)

ENCODE_SYSTEM = "The following contains key components of a legal case."
ENCODE_USER = {
    "default": (
        "Legal facts: {c_Fact}.\n"
        "Legal fact relation triplets: {R_Fact}.\n"
        "Legal issues: {c_Issue}.\n"
        "Legal issue relation triplets: {R_Issue}.\n"
        "Legal reasoning: {c_Reason}."
    ),
    "prompt1": (
        "Provide the key factual background: {c_Fact}.\n"
        "Provide the legal fact relation triplets: {R_Fact}.\n"
        "Provide the key legal disputes: {c_Issue}.\n"
        "Provide the legal issue relation triplets: {R_Issue}.\n"
        "Provide the legal reasoning between legal facts and legal issues: {c_Reason}."
    ),
    "prompt2": (
        "List the important legal facts as: {c_Fact}.\n"
        "List the important fact relations among events and parties as: {R_Fact}.\n"
        "List the important legal issues as: {c_Issue}.\n"
        "List the important issue relations among events and parties as: {R_Issue}.\n"
        "List the important legal reasoning as: {c_Reason}."
    ),
}


def triplets(rows):
    if not rows:
        return NONE
    return "; ".join(f"({h}, {r}, {t})" for h, r, t in rows)


def nonempty(text):
    return text if text.strip() else NONE


def fill(template, values):
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def main():
    root = pathlib.Path(__file__).parent
    cases = json.loads((root / "cases.json").read_text(encoding="utf-8"))
    golden = root / "golden"
    golden.mkdir(exist_ok=True)
    for case in cases:
        cid = case["case_id"]
        values = {
            "c_Fact": nonempty(case["facts"]),
            "R_Fact": triplets(case["fact_triplets"]),
            "c_Issue": nonempty(" ".join(case["issues"])),
            "R_Issue": triplets(case["issue_triplets"]),
            "c_Jud": case["judgement"] if case["judgement"].strip() else NO_JUDGEMENT,
            "c_Reason": nonempty(case["reasoning"]),
        }
        files = {
            "fact": fill(FACT, {"c_Bg": case["background"]}),
            "reasoning": REASONING_SYSTEM + "\n" + fill(REASONING_USER, values),
        }
        for tid, user in ENCODE_USER.items():
            files[tid] = ENCODE_SYSTEM + "\n" + fill(user, values)
        for name, text in files.items():
            (golden / f"{cid}.{name}.txt").write_text(text, encoding="utf-8")


if __name__ == "__main__":
    main()
