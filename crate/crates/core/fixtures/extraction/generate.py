"""Regenerates the labeled extraction fixture: python3 generate.py

Each document is assembled from labeled parts, so the expected issues and
judgement are known by construction:

* analysis sentences flagged as issues carry a placeholder token;
* judgement sentences follow the first concluding heading;
* attribution lines and French lines never reach the expected output.
"""

import json
import pathlib

PH = "FRAGMENT_SUPPRESSED"
FRENCH = "Le demandeur a déposé une demande de contrôle de la décision {ph} et de la cour."

BACKGROUND = [
    "The applicant is a citizen of Mexico who arrived in Canada in 2015.",
    "An immigration officer refused the application for permanent residence.",
    "The respondent is the Minister of Citizenship and Immigration.",
    "The decision was communicated by letter dated March 3, 2019.",
    "Acme Inc. employed the applicant as a welder for three years.",
]

# (text, is_issue)
ANALYSIS = [
    (f"The standard of review is reasonableness, as confirmed in {PH}.", True),
    ("The officer considered the employment evidence in some detail.", False),
    (f"In Smith v. Canada, {PH}, the Court held that reasons must be intelligible.", True),
    ("The applicant relies on affidavit No. 12 filed with the record.", False),
    (f"Acme Inc. is not a party, but {PH} explains why its letter matters.", True),
    ("Costs were not sought by either party.", False),
    (f"The duty of fairness varies with context ({PH}).", True),
    ("Counsel for the respondent conceded the point at the hearing.", False),
    (f"An officer must grapple with contradictory evidence ({PH}; {PH}).", True),
    ("The record does not show that the letter was read.", False),
    ("The Court is not persuaded by the remaining arguments.", False),
    (f"Deference does not mean blind acceptance, per {PH} at para. 14.", True),
]

JUDGEMENT = [
    "The application for judicial review is allowed.",
    "The matter is remitted to a different officer for redetermination.",
    "No question of general importance is certified.",
    "There is no order as to costs.",
    "The application is dismissed.",
]

ATTRIBUTION = [
    "Editor: J. Smith",
    "Solicitors of record: Doe LLP, Toronto, Ontario",
    "Counsel for the applicant: R. Roe",
    "Editor's note: corrigendum issued.",
]


def pick(pool, start, n):
    return [pool[(start + i) % len(pool)] for i in range(n)]


def wrap(sentences, per_line):
    """Joins sentences, breaking lines every `per_line` sentences."""
    lines = []
    for i in range(0, len(sentences), per_line):
        lines.append(" ".join(sentences[i:i + per_line]))
    return lines


def build(i):
    """Returns (text, expected_issues, expected_judgement) for document i."""
    lines = []
    variant = i % 5
    bg = pick(BACKGROUND, i, 2 + i % 3)
    analysis = pick(ANALYSIS, i * 2, 3 + i % 5)
    jud = pick(JUDGEMENT, i, 1 + i % 3)

    has_bg_heading = i % 4 != 3
    has_analysis = i not in (4, 13, 22)
    conclusion_heading = [
        "JUDGMENT", "Order", "JUDGEMENT", "ORDER:", "JUDGMENT.",
    ][i % 5] if i not in (7, 16) else None

    if has_bg_heading:
        lines.append(["BACKGROUND", "I. BACKGROUND", "Background"][i % 3])
    lines.extend(wrap(bg, 1 + i % 2))
    if not has_analysis:
        # placeholder text in the background must not count as an issue
        lines.append(f"The applicant cites {PH} in the notice of application.")

    issues = []
    if has_analysis:
        lines.append(["ANALYSIS", "REASONS", "III. ANALYSIS", "Analysis", "Reasons:"][variant])
        body = [s for s, _ in analysis]
        issues = [s for s, flag in analysis if flag]
        if i % 3 == 0:
            # a French line is removed before sentence splitting
            split = len(body) // 2
            lines.extend(wrap(body[:split], 2))
            lines.append(FRENCH.format(ph=PH))
            lines.extend(wrap(body[split:], 2))
        else:
            lines.extend(wrap(body, 1 + i % 3))

    judgement = ""
    if conclusion_heading is not None:
        lines.append(conclusion_heading)
        out = list(jud)
        if i % 6 == 1:
            # a second concluding heading inside the conclusion is skipped
            lines.append(" ".join(jud[:1]))
            lines.append("ORDER")
            extra = "The applicant shall pay costs fixed at $500."
            lines.append(extra)
            lines.extend(jud[1:])
            out = jud[:1] + [extra] + jud[1:]
        else:
            lines.extend(wrap(jud, 2))
        n_attr = i % 3
        if i % 5 == 1:
            n_attr = 2
        lines.extend(pick(ATTRIBUTION, i, n_attr))
        judgement = " ".join(out)
    else:
        # a trailing decision without a qualifying heading yields no judgement
        lines.append("DISPOSITION")
        lines.extend(jud)

    return "\n".join(lines) + "\n", issues, judgement


def main():
    root = pathlib.Path(__file__).parent
    docs = root / "docs"
    docs.mkdir(exist_ok=True)
    expected = []
    for i in range(25):
        case_id = f"ext-{i:02d}"
        text, issues, judgement = build(i)
        (docs / f"{case_id}.txt").write_text(text, encoding="utf-8")
        expected.append({"case_id": case_id, "issues": issues, "judgement": judgement})
    (root / "expected.json").write_text(
        json.dumps(expected, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


if __name__ == "__main__":
    main()
