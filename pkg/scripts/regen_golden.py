"""Recompute tests/golden/mini.json from the bundled mini-corpus.

Run from the repository root after an intentional behaviour change:

    python3 scripts/regen_golden.py
"""

import json
import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "tests"))

from conftest import GOLDEN, Mini  # noqa: E402
from previse.classifier import evaluate_classifier, majority_baseline  # noqa: E402
from previse.corpus import Corpus, make_constraint_sets  # noqa: E402
from previse.metrics import assemble_report  # noqa: E402
from previse.ngram import eval_nll, nll_per_token  # noqa: E402
from previse.sampler import SamplerConfig, init_state, run_batch  # noqa: E402

N_INPUTS, STEPS = 20, 50


def end_to_end(m):
    """Pinned-seed constraint run scored with the held-out evaluation LM."""
    sets = make_constraint_sets(Corpus(tuple(tuple(s) for s in m.test), "test"), 4, N_INPUTS, 0)
    states = [init_state(m.flm, c) for c in sets]
    res, _ = run_batch(states, m.models, SamplerConfig(steps=STEPS, seed=0))
    hyps = [m.vocab.decode(r.best[1:-1]) for r in res]
    nlls = [nll_per_token(m.eval_lm, r.best) for r in res]
    return hyps, assemble_report(hyps, nlls=nlls)


def main():
    m = Mini()
    rep = evaluate_classifier(m.clf, m.synth_valid)
    hyps, report = end_to_end(m)
    out = {
        "flm_valid_nll": eval_nll(m.flm, m.valid),
        "blm_valid_nll": eval_nll(m.blm, m.valid),
        "vocab_size": len(m.vocab),
        "vocab_hash": m.vocab.hash,
        "synth_valid_size": len(m.synth_valid),
        "classifier_macro_f1": rep["macro"]["f1"],
        "classifier_insert_recall": rep["insert"]["r"],
        "majority_macro_f1": majority_baseline(m.synth_valid)["macro"]["f1"],
        "end_to_end": {"inputs": N_INPUTS, "steps": STEPS, "outputs": [" ".join(h) for h in hyps],
                       "report": report.to_dict()},
        "classifier_weight_checksum": float(np.abs(m.clf.W).sum()),
    }
    os.makedirs(os.path.dirname(GOLDEN), exist_ok=True)
    with open(GOLDEN, "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print("wrote", GOLDEN)


if __name__ == "__main__":
    main()
