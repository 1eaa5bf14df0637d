"""Regenerates the synthetic clustered corpus: python3 generate.py"""

import pathlib
import random

TOPICS = {
    "visa": {
        "facts": [
            "The applicant applied for a temporary resident visa to visit relatives in {city}.",
            "A visa officer at the embassy in {city} refused the application in {year}.",
            "The officer was not satisfied that the applicant would leave Canada at the end of the authorized stay.",
            "The applicant submitted bank statements, an employment letter and a travel history.",
            "The refusal letter cited insufficient family ties to the country of residence.",
            "The applicant had previously been refused a study permit.",
            "The sponsor offered to pay all travel and accommodation expenses.",
            "The global case management notes were brief and did not mention the employment letter.",
            "The applicant holds a valid passport and has travelled to Europe twice.",
            "A second visa application was filed with additional financial documents.",
        ],
        "issues": [
            "The officer fettered discretion by ignoring the employment letter, contrary to FRAGMENT_SUPPRESSED.",
            "Visa officers must consider evidence that contradicts their conclusions, as held in FRAGMENT_SUPPRESSED.",
            "The reasons for the visa refusal were not transparent or intelligible under FRAGMENT_SUPPRESSED.",
            "The duty of procedural fairness owed to a visa applicant is at the low end of the spectrum, per FRAGMENT_SUPPRESSED.",
            "An officer may rely on the absence of travel history only with care, following FRAGMENT_SUPPRESSED.",
            "The officer did not explain why the family ties in Canada outweighed the ties abroad.",
            "Financial documents showing sufficient funds were not addressed in the notes.",
            "The applicant bears the onus of establishing that the visa should be issued.",
        ],
    },
    "refugee": {
        "facts": [
            "The claimant fled {country} after threats from an armed group in {year}.",
            "The Refugee Protection Division rejected the claim for lack of credibility.",
            "The claimant testified that police officers detained and beat him twice.",
            "A medical report documented scars consistent with the alleged beatings.",
            "The panel found that an internal flight alternative existed in the capital.",
            "The claimant's brother was granted refugee protection in Germany.",
            "The Refugee Appeal Division confirmed the decision without an oral hearing.",
            "The claimant filed new evidence of a summons issued after his departure.",
            "Country condition documents describe persecution of political opponents.",
            "The claimant delayed seeking protection in the United States for two months.",
        ],
        "issues": [
            "The panel erred in its credibility findings by relying on minor inconsistencies, contrary to FRAGMENT_SUPPRESSED.",
            "The internal flight alternative analysis failed the two-prong test set out in FRAGMENT_SUPPRESSED.",
            "Sworn testimony of a refugee claimant is presumed true, as stated in FRAGMENT_SUPPRESSED.",
            "The appeal division must conduct its own assessment of the persecution risk, following FRAGMENT_SUPPRESSED.",
            "Medical evidence corroborating torture cannot be dismissed without reasons, per FRAGMENT_SUPPRESSED.",
            "The new evidence of the summons met the test for admission on appeal.",
            "Delay in claiming protection is relevant but not determinative of subjective fear.",
            "The panel did not engage with the country condition documents.",
        ],
    },
    "tax": {
        "facts": [
            "The Minister of National Revenue reassessed the taxpayer for the {year} taxation year.",
            "The taxpayer claimed business losses from a rental property in {city}.",
            "The Canada Revenue Agency denied the deduction of interest expenses.",
            "The taxpayer requested relief from penalties and interest under the taxpayer relief provisions.",
            "A delegate of the Minister refused the request for relief in a second review.",
            "The taxpayer filed returns late because of a serious illness.",
            "The auditor relied on bank deposits analysis to estimate unreported income.",
            "The taxpayer paid the assessed amounts under protest.",
            "The notice of objection was filed one day after the deadline.",
            "The corporation paid dividends to the sole shareholder during the audit period.",
        ],
        "issues": [
            "The delegate failed to consider the taxpayer's illness as an extraordinary circumstance, contrary to FRAGMENT_SUPPRESSED.",
            "Taxpayer relief decisions are reviewed on the reasonableness standard, as held in FRAGMENT_SUPPRESSED.",
            "This Court lacks jurisdiction over the correctness of an assessment, following FRAGMENT_SUPPRESSED.",
            "A delegate must address each ground raised in the relief request, per FRAGMENT_SUPPRESSED.",
            "Penalties and interest may be waived where the Minister caused processing delays, under FRAGMENT_SUPPRESSED.",
            "The second review was conducted by a delegate who had not participated in the first.",
            "The bank deposits analysis is a recognized method of estimating income.",
            "The late notice of objection could only be cured by an extension of time.",
        ],
    },
    "patent": {
        "facts": [
            "The plaintiff owns a patent for a pharmaceutical compound filed in {year}.",
            "The defendant launched a generic version of the drug in {city}.",
            "The plaintiff alleged infringement of claims 1 to 12 of the patent.",
            "The defendant counterclaimed that the patent was invalid for obviousness.",
            "Expert witnesses disagreed about the skilled person's common general knowledge.",
            "The patent describes a crystalline form with improved stability.",
            "A prior art reference published in a scientific journal disclosed a similar compound.",
            "The plaintiff sought an injunction and an accounting of profits.",
            "The defendant argued that the claims were anticipated by an earlier patent application.",
            "Clinical trial data supported the promised utility of the invention.",
        ],
        "issues": [
            "Claims construction precedes any analysis of infringement or validity, as held in FRAGMENT_SUPPRESSED.",
            "The obviousness inquiry follows the four-step approach set out in FRAGMENT_SUPPRESSED.",
            "Anticipation requires both disclosure and enablement in a single prior art reference, per FRAGMENT_SUPPRESSED.",
            "The skilled person is unimaginative but possesses the common general knowledge, following FRAGMENT_SUPPRESSED.",
            "Utility must be established as of the filing date of the patent, under FRAGMENT_SUPPRESSED.",
            "The crystalline form was not obvious to try in light of the prior art.",
            "An accounting of profits is an equitable remedy in the discretion of the Court.",
            "The expert evidence of the plaintiff was preferred on the common general knowledge.",
        ],
    },
    "trademark": {
        "facts": [
            "The applicant sought to register a trademark for clothing and footwear in {year}.",
            "The opponent owns a registered trademark used for sportswear in {city}.",
            "The Trademarks Opposition Board rejected the opposition.",
            "The opponent filed new evidence of survey results on appeal.",
            "Both marks share the same first syllable and a similar design element.",
            "The applicant's goods are sold in department stores across Canada.",
            "The opponent alleged that the applicant's mark was confusing with its registered mark.",
            "The registrar found that the opponent's mark had acquired limited distinctiveness.",
            "The applicant began using the mark on online sales before filing.",
            "Market survey evidence showed low consumer recognition of the opponent's brand.",
        ],
        "issues": [
            "Confusion is assessed from the perspective of the casual consumer somewhat in a hurry, as held in FRAGMENT_SUPPRESSED.",
            "Resemblance between the marks is often the most important confusion factor, per FRAGMENT_SUPPRESSED.",
            "New evidence on appeal that would materially affect the decision triggers correctness review, following FRAGMENT_SUPPRESSED.",
            "Survey evidence must be reliable and valid to be given weight, under FRAGMENT_SUPPRESSED.",
            "Acquired distinctiveness of a registered trademark widens its scope of protection, as stated in FRAGMENT_SUPPRESSED.",
            "The channels of trade for the goods overlapped in department stores.",
            "The first syllable of a trademark is generally the most significant for distinctiveness.",
            "The registrar reasonably weighed the limited evidence of use.",
        ],
    },
    "labour": {
        "facts": [
            "The grievor was a federal public servant employed in {city} since {year}.",
            "The employer terminated the grievor's employment for misconduct.",
            "The grievor filed a grievance alleging discipline without just cause.",
            "The adjudicator of the labour board upheld the termination.",
            "An investigation found that the grievor had misused a government credit card.",
            "The grievor claimed the misconduct resulted from an untreated disability.",
            "The collective agreement requires progressive discipline for minor infractions.",
            "The union represented the grievor at the hearing before the board.",
            "The employer did not consider accommodation of the disability before dismissal.",
            "The grievor had no prior disciplinary record.",
        ],
        "issues": [
            "The board's interpretation of the collective agreement attracts deference, as held in FRAGMENT_SUPPRESSED.",
            "Termination for misconduct requires proportionality to the seriousness of the conduct, per FRAGMENT_SUPPRESSED.",
            "An employer's duty to accommodate a disability arises before discipline is imposed, following FRAGMENT_SUPPRESSED.",
            "Progressive discipline applies unless the misconduct irreparably breaks the employment relationship, under FRAGMENT_SUPPRESSED.",
            "The adjudicator must weigh mitigating factors such as a clean disciplinary record, as stated in FRAGMENT_SUPPRESSED.",
            "The misuse of the credit card was deliberate and repeated.",
            "The medical evidence did not establish a causal link between disability and misconduct.",
            "The union did not raise accommodation until the hearing.",
        ],
    },
}

GENERIC = [
    "The hearing took place over two days.",
    "Both parties were represented by counsel.",
    "The record before the Court is voluminous.",
    "The standard of review is reasonableness.",
    "The parties agree on the applicable legal framework.",
    "The Court has considered the written and oral submissions.",
    "Costs were sought by both parties.",
    "The respondent filed a memorandum of argument.",
]

CITIES = ["Toronto", "Vancouver", "Montreal", "Calgary", "Ottawa", "Halifax", "Winnipeg", "Regina", "Victoria", "Edmonton"]
COUNTRIES = ["Colombia", "Nigeria", "Haiti", "Iran", "Eritrea", "Mexico", "Pakistan", "Sri Lanka"]
ORDERS = [
    "The application for judicial review is allowed and the matter is returned for redetermination.",
    "The application for judicial review is dismissed.",
    "The appeal is allowed with costs.",
    "The appeal is dismissed with costs to the respondent.",
]

SIBLING = {"visa": "refugee", "refugee": "visa", "tax": "labour", "labour": "tax", "patent": "trademark", "trademark": "patent"}

ORDER = list(TOPICS)
QUERIES_PER_TOPIC = 2
CANDIDATES_PER_TOPIC = 8


def fill(rng, s):
    return s.format(city=rng.choice(CITIES), year=rng.randint(2005, 2022), country=rng.choice(COUNTRIES))


def case_text(rng, topic):
    t = TOPICS[topic]
    sib = TOPICS[SIBLING[topic]]
    facts = [fill(rng, s) for s in rng.sample(t["facts"], 4)]
    facts.insert(rng.randint(1, 4), fill(rng, rng.choice(sib["facts"])))
    facts.append(rng.choice(GENERIC))
    issues = rng.sample(t["issues"], 4)
    issues.insert(rng.randint(0, 4), rng.choice(sib["issues"]))
    analysis = issues + rng.sample(GENERIC, 2)
    rng.shuffle(analysis)
    lines = ["BACKGROUND", " ".join(facts), "", "ANALYSIS", " ".join(analysis), "", "ORDER", rng.choice(ORDERS)]
    return "\n".join(lines) + "\n"


def main():
    rng = random.Random(20240601)
    root = pathlib.Path(__file__).parent
    cases = root / "cases"
    cases.mkdir(exist_ok=True)
    for old in cases.glob("*.txt"):
        old.unlink()
    qrels = []
    for ti, topic in enumerate(ORDER):
        cands = [f"{topic}-c{i}" for i in range(CANDIDATES_PER_TOPIC)]
        queries = [f"{topic}-q{i}" for i in range(QUERIES_PER_TOPIC)]
        for cid in queries + cands:
            (cases / f"{cid}.txt").write_text(case_text(rng, topic))
        for q in queries:
            for c in cands:
                qrels.append(f"{q}\t{c}")
    (root / "qrels.tsv").write_text("\n".join(qrels) + "\n")


if __name__ == "__main__":
    main()
