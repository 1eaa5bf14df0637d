"""Regenerates the BM25 oracle values: python3 generate.py

Okapi BM25 with idf = ln(1 + (N - df + 0.5) / (df + 0.5)), computed here
from scratch over the documents in corpus.json.
"""

import json
import math
import pathlib
import re


def tokenize(text, stopwords):
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t and t not in stopwords]


def index(docs, stopwords):
    toks = {d["id"]: tokenize(d["text"], stopwords) for d in docs}
    n = len(toks)
    avgdl = sum(len(t) for t in toks.values()) / n
    df = {}
    for t in toks.values():
        for term in set(t):
            df[term] = df.get(term, 0) + 1
    return toks, n, avgdl, df


def score(query, doc_id, toks, n, avgdl, df, stopwords, k1, b):
    dl = len(toks[doc_id])
    total = 0.0
    for term in tokenize(query, stopwords):
        tf = toks[doc_id].count(term)
        if tf == 0:
            continue
        idf = math.log(1.0 + (n - df[term] + 0.5) / (df[term] + 0.5))
        total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
    return total


def main():
    root = pathlib.Path(__file__).parent
    spec = json.loads((root / "corpus.json").read_text())
    k1, b = spec["k1"], spec["b"]
    sw = set(spec["stopwords"])
    toks, n, avgdl, df = index(spec["documents"], sw)
    scores = []
    for q in spec["queries"]:
        for d in spec["documents"]:
            s = score(q, d["id"], toks, n, avgdl, df, sw, k1, b)
            scores.append({"query": q, "doc": d["id"], "score": repr(s)})

    m = spec["mining"]
    mtoks, mn, mavg, mdf = index(m["documents"], sw)
    qtext = next(d["text"] for d in m["documents"] if d["id"] == m["query"])
    ranked = sorted(
        ((-score(qtext, d, mtoks, mn, mavg, mdf, sw, k1, b), d) for d in mtoks),
    )
    mined = [d for _, d in ranked if d != m["query"] and d not in m["positives"]]

    out = {
        "num_docs": n,
        "avg_doc_length": repr(avgdl),
        "doc_lengths": {d: len(t) for d, t in sorted(toks.items())},
        "doc_frequencies": dict(sorted(df.items())),
        "scores": scores,
        "mining_ranking": [d for _, d in ranked],
        "mined_first": mined[0],
    }
    (root / "expected.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
