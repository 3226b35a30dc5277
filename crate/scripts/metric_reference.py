"""Regenerates crates/core/tests/data/metric_reference.json.

Scores 50 random hypothesis/reference pairs with sacrebleu (BLEU), nltk
(NIST) and pycocoevalcap (ROUGE-L, CIDEr). Needs those three packages:

    pip install sacrebleu nltk pycocoevalcap
    python scripts/metric_reference.py > crates/core/tests/data/metric_reference.json
"""

import json
import random

import sacrebleu
from nltk.translate.nist_score import corpus_nist
from pycocoevalcap.cider.cider import Cider
from pycocoevalcap.rouge.rouge import Rouge

VOCAB = (
    "restaurace X-name X-area X-food X-price_range je v se nabízí kuchyni "
    "a na dobrá levná podnik blízko . , ? jídlo"
).split()


def edit(tokens, rng):
    out = list(tokens)
    for _ in range(rng.randint(0, 4)):
        op = rng.choice(["del", "sub", "ins", "swap"])
        if op == "del" and len(out) > 1:
            del out[rng.randrange(len(out))]
        elif op == "sub":
            out[rng.randrange(len(out))] = rng.choice(VOCAB)
        elif op == "ins":
            out.insert(rng.randrange(len(out) + 1), rng.choice(VOCAB))
        elif op == "swap" and len(out) > 1:
            i = rng.randrange(len(out) - 1)
            out[i], out[i + 1] = out[i + 1], out[i]
    return out


def main():
    rng = random.Random(20240517)
    pairs = []
    for _ in range(50):
        ref = [rng.choice(VOCAB) for _ in range(rng.randint(5, 14))]
        hyp = edit(ref, rng)
        while len(hyp) < 5:
            hyp.append(rng.choice(VOCAB))
        pairs.append((hyp, ref))

    hyps = [" ".join(h) for h, _ in pairs]
    refs = [" ".join(r) for _, r in pairs]

    bleu = sacrebleu.corpus_bleu(hyps, [refs], tokenize="none", smooth_method="none", force=True).score
    nist = corpus_nist([[r] for _, r in pairs], [h for h, _ in pairs], n=5)
    gts = {i: [r] for i, r in enumerate(refs)}
    res = {i: [h] for i, h in enumerate(hyps)}
    rouge, _ = Rouge().compute_score(gts, res)
    cider, _ = Cider().compute_score(gts, res)

    print(json.dumps(
        {
            "pairs": [{"hyp": h, "ref": r} for h, r in zip(hyps, refs)],
            "bleu": bleu,
            "nist": nist,
            "rouge_l": rouge * 100.0,
            "cider": float(cider),
        },
        ensure_ascii=False,
        indent=1,
    ))


if __name__ == "__main__":
    main()
