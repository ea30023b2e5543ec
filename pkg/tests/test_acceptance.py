"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines appear in
the terminal output even when pytest captures stdout.
"""

import filecmp
import math
import os
import shutil
import time

import numpy as np
import pytest

from conftest import MINI
from oracles import CountOracle, gibbs_enumeration
from previse.classifier import (TokenClassifier, _stack, evaluate_classifier,
                                majority_baseline)
from previse.cli import main
from previse.corpus import BLANK, Corpus, Vocabulary, make_constraint_sets, make_templates
from previse.metrics import (corpus_bleu, distinct_n, entropy_n, is_repetitive, self_bleu)
from previse.ngram import nll_per_token, train_lm
from previse.proposal import build_replacement_set
from previse.sampler import Models, SamplerConfig, SentenceState, init_state, run_batch, step

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print("\nCRITERION %s: %s  %s" % (n, "PASS" if ok else "FAIL", detail))
        return ok
    return emit


def _lm_over(n_content, n_sents, max_len, seed):
    toks = ["<BOS>", "<EOS>", "<MASK>", "<UNK>"] + ["w%d" % i for i in range(n_content)]
    vocab = Vocabulary(toks)
    rng = np.random.default_rng(seed)
    sents = [[int(x) for x in rng.integers(4, len(toks), size=rng.integers(1, max_len + 1))]
             for _ in range(n_sents)]
    return vocab, sents, train_lm(sents, vocab, 3, "forward"), train_lm(sents, vocab, 3, "backward")


# 1 -----------------------------------------------------------------------

def test_criterion_1_gibbs_oracle(report):
    t0 = time.time()
    vocab, sents, flm, blm = _lm_over(16, 60, 6, seed=11)
    oracle = CountOracle(sents, len(vocab))
    eligible = list(range(4, len(vocab)))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(12):
        n = int(rng.integers(1, 7))
        s = [0] + [int(x) for x in rng.integers(4, len(vocab), size=n)] + [1]
        i = int(rng.integers(1, n + 1))
        cs = build_replacement_set(flm, blm, s, i, len(eligible))
        assert sorted(cs.tokens) == eligible
        exact = gibbs_enumeration(oracle, s, i, eligible)
        worst = max(worst, max(abs(p - exact[t]) for t, p in zip(cs.tokens, cs.probs)))
    elapsed = time.time() - t0
    ok = worst < 1e-9 and elapsed < 10
    report(1, ok, "max |q - enumeration| = %.2e (< 1e-9), %.1fs (< 10s), |V| = %d"
           % (worst, elapsed, len(vocab)))
    assert ok


# 2 -----------------------------------------------------------------------

def test_criterion_2_stationarity(report):
    t0 = time.time()
    vocab = Vocabulary(["<BOS>", "<EOS>", "<MASK>", "<UNK>", "a", "b", "c", "d", "e"])
    rng = np.random.default_rng(5)
    sents = [[int(x) for x in rng.integers(4, 9, size=rng.integers(1, 5))] for _ in range(40)]
    flm, blm = train_lm(sents, vocab, 3, "forward"), train_lm(sents, vocab, 3, "backward")
    oracle = CountOracle(sents, len(vocab))
    # enumerated target over all 5^3 length-3 sentences
    space = [(a, b, c) for a in range(4, 9) for b in range(4, 9) for c in range(4, 9)]
    lp = np.array([oracle.log_score([0, *x, 1]) for x in space])
    target = np.exp(lp - lp.max())
    target /= target.sum()
    index = {x: j for j, x in enumerate(space)}

    cfg = SamplerConfig(k=5, actions=("replace",), prior="uniform")
    models = Models(flm, blm)
    ids = (0, 4, 5, 6, 1)
    st = SentenceState(ids, (False,) * 5, None, flm.score(ids))
    chain = np.random.default_rng(2)
    for _ in range(10_000):
        st, _ = step(st, models, cfg, chain)
    counts = np.zeros(len(space))
    n = 200_000
    for _ in range(n):
        st, _ = step(st, models, cfg, chain)
        counts[index[st.ids[1:4]]] += 1
    tv = 0.5 * np.abs(counts / n - target).sum()
    elapsed = time.time() - t0
    ok = tv < 0.05 and elapsed < 120
    report(2, ok, "TV = %.4f (< 0.05) over %d steps, %.0fs (< 120s)" % (tv, n, elapsed))
    assert ok


# 3 -----------------------------------------------------------------------

class _HalfLM:
    vocab_size = 6

    def dist(self, context):
        return np.full(6, 1 / 6)

    def score(self, s):
        return math.log(0.01) + (len(s) - 3) * math.log(0.5)


def test_criterion_3_mh_acceptance(report):
    vocab, sents, flm, blm = _lm_over(8, 50, 5, seed=3)
    oracle = CountOracle(sents, len(vocab))
    models = Models(flm, blm)
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(1, 6))
        ids = tuple([0] + [int(x) for x in rng.integers(4, len(vocab), size=n)] + [1])
        k = int(rng.integers(1, 9))
        st = SentenceState(ids, (False,) * len(ids), None, flm.score(ids))
        cfg = SamplerConfig(k=k, actions=("insert",), prior="uniform")
        _, rec = step(st, models, cfg, rng)
        assert rec.action == "insert"
        p = rec.position
        toks = oracle.top_k(list(ids), p, k, insert=True)
        total = sum(math.exp(oracle.log_score(list(ids[:p]) + [w] + list(ids[p:])))
                    for w in toks)
        want = min(1.0, total / math.exp(oracle.log_score(list(ids))))
        worst = max(worst, abs(rec.acceptance - want))

    # each proposal halves the sentence probability and K = 1, so A = 0.5
    lm = _HalfLM()
    ids = (0, 4, 1)
    st = SentenceState(ids, (False, True, False), None, lm.score(ids))
    cfg = SamplerConfig(k=1, actions=("insert",), prior="uniform")
    r2 = np.random.default_rng(7)
    recs = [step(st, Models(lm, lm), cfg, r2)[1] for _ in range(10_000)]
    a_set = {round(r.acceptance, 12) for r in recs}
    freq = float(np.mean([r.accepted for r in recs]))
    ok = worst < 1e-9 and a_set == {0.5} and abs(freq - 0.5) <= 0.02
    report(3, ok, "max |A - recomputed| = %.2e (< 1e-9); A = 0.5 accept freq %.4f (0.5 +/- 0.02)"
           % (worst, freq))
    assert ok


# 4 -----------------------------------------------------------------------

def _subsequence(sub, seq):
    it = iter(seq)
    return all(any(t == u for u in it) for t in sub)


def test_criterion_4_preservation(mini, report):
    corpus = Corpus(tuple(tuple(s) for s in mini.test), "test")
    bad_constraint = n_states = 0
    for k in (1, 2, 3, 4):
        sets = make_constraint_sets(corpus, k, 250, seed=k)
        for j, cons in enumerate(sets):
            actions = ("replace", "insert", "delete") if j % 4 == 0 else ("replace", "insert")
            cfg = SamplerConfig(steps=30, k=20, actions=actions)
            rng = np.random.default_rng([k, j])
            st = init_state(mini.flm, cons)
            for t in range(cfg.steps + 1):
                if t:
                    st, _ = step(st, mini.models, cfg, rng, t)
                n_states += 1
                if st.protected_tokens() != list(cons) or not _subsequence(cons, st.ids):
                    bad_constraint += 1

    bad_template = outside = n_tpl_states = n_tpl = 0
    sents = [s for s in mini.test_tokens if all(w in mini.vocab for w in s)][:100]
    for strategy in ("middle", "random"):
        for ratio in (0.25, 0.5, 0.75):
            for j, (tpl, _) in enumerate(make_templates(sents, strategy, ratio, seed=j_seed(
                    strategy, ratio))):
                n_tpl += 1
                fixed = mini.vocab.encode(tpl.fixed)
                # open[g]: whether the gap before fixed token g (g = len: before EOS) is a blank
                open_gap, g = [False] * (len(fixed) + 1), 0
                for item in tpl.items:
                    if item == BLANK:
                        open_gap[g] = True
                    else:
                        g += 1
                cfg = SamplerConfig(steps=30, k=20)
                rng = np.random.default_rng([j, int(ratio * 100), len(strategy)])
                st = init_state(mini.flm, template=tpl, vocab=mini.vocab)
                for t in range(cfg.steps + 1):
                    if t:
                        st, _ = step(st, mini.models, cfg, rng, t)
                    n_tpl_states += 1
                    if st.protected_tokens() != fixed or not _subsequence(fixed, st.ids):
                        bad_template += 1
                    prot = [i for i, f in enumerate(st.protected) if f]
                    edges = [0] + prot + [len(st.ids) - 1]
                    gaps = [b - a - 1 for a, b in zip(edges, edges[1:])]
                    outside += sum(1 for gi, size in enumerate(gaps) if size and not open_gap[gi])
    ok = bad_constraint == 0 and bad_template == 0 and outside == 0 and n_tpl == 600
    report(4, ok, "1000 chains / %d states: %d violations; %d templates / %d states: "
           "%d violations, %d insertions outside blanks"
           % (n_states, bad_constraint, n_tpl, n_tpl_states, bad_template, outside))
    assert ok


def j_seed(strategy, ratio):
    return {"middle": 0, "random": 1}[strategy] * 10 + int(ratio * 4)


# 5, 6, 8 ------------------------------------------------------------------

N_INPUTS = 100
ARMS = ("classifier", "uniform-actions", "uniform-positions", "uniform")


def _best_prefix(initial, trace, steps):
    """Best (lowest FLM per-token NLL) state among the first ``steps`` transitions."""
    ids, best, best_nll = initial, None, math.inf
    for rec in trace[:steps]:
        if rec.accepted:
            ids = tuple(rec.proposal)
        if rec.nll < best_nll:
            best, best_nll = ids, rec.nll
    return best


@pytest.fixture(scope="module")
def arms(mini):
    t0 = time.time()
    corpus = Corpus(tuple(tuple(s) for s in mini.test), "test")
    sets = make_constraint_sets(corpus, 4, N_INPUTS, seed=0)
    states = [init_state(mini.flm, c) for c in sets]
    out = {}
    for prior in ARMS:
        cfg = SamplerConfig(steps=200, k=50, prior=prior, seed=0)
        res, rates = run_batch(states, mini.models, cfg)
        for r, s in zip(res, states):
            assert _best_prefix(s.ids, r.trace, 200) == r.best
        out[prior] = {
            "nll": float(np.mean([nll_per_token(mini.eval_lm, r.best) for r in res])),
            "nll_50": float(np.mean([nll_per_token(mini.eval_lm, _best_prefix(s.ids, r.trace, 50))
                                     for r, s in zip(res, states)])),
            "rates": rates,
        }
    out["elapsed"] = time.time() - t0
    return out


def test_criterion_5_guided_vs_uniform(arms, report):
    g, u = arms["classifier"], arms["uniform"]
    gi, ui = g["rates"]["insert"], u["rates"]["insert"]
    gr, ur = g["rates"]["replace"], u["rates"]["replace"]
    a_ok = g["nll"] < u["nll"]
    b_ok = gi["rate"] > ui["rate"] and gr["effective_rate"] > ur["effective_rate"]
    time_ok = arms["elapsed"] < 15 * 60
    ok = a_ok and b_ok and time_ok
    report("5", ok,
           "(a) %s eval NLL guided %.4f vs uniform %.4f | (b) %s insert accept %.3f vs %.3f, "
           "replace accept %.3f vs %.3f (effective, sentence changed; formal %.3f vs %.3f) "
           "| %.0fs for %d arms"
           % ("PASS" if a_ok else "FAIL", g["nll"], u["nll"], "PASS" if b_ok else "FAIL",
              gi["rate"], ui["rate"], gr["effective_rate"], ur["effective_rate"],
              gr["rate"], ur["rate"], arms["elapsed"], len(ARMS)))
    assert ok


def test_criterion_6_step_efficiency(arms, report):
    g50, u200 = arms["classifier"]["nll_50"], arms["uniform"]["nll"]
    ok = g50 <= u200 + 0.05
    report(6, ok, "guided T=50 %.4f <= uniform T=200 %.4f + 0.05" % (g50, u200))
    assert ok


def test_criterion_8_ablation_ordering(arms, report):
    c, ua, up, u = (arms[a]["nll"] for a in ARMS)
    checks = [c <= ua + 0.02, ua <= up + 0.02, abs(up - u) <= 0.1]
    ok = all(checks)
    report(8, ok, "classifier %.4f <= uniform-actions %.4f (%s) <= uniform-positions %.4f (%s) "
           "~ uniform %.4f (%s)" % (c, ua, checks[0], up, checks[1], u, checks[2]))
    assert ok


# 7 -----------------------------------------------------------------------

def test_criterion_7_classifier_gate(mini, report):
    rep = evaluate_classifier(mini.clf, mini.synth_valid)
    base = majority_baseline(mini.synth_valid)["macro"]["f1"]
    macro, recall = rep["macro"]["f1"], rep["insert"]["r"]

    batch = mini.synth_valid[:10]
    clf = TokenClassifier(len(mini.vocab), mini.vocab.hash, buckets=1024, lm_features=True)
    clf.attach(mini.flm, mini.blm)
    rng = np.random.default_rng(0)
    clf.W = rng.normal(scale=0.1, size=clf.W.shape)
    clf.b = rng.normal(scale=0.1, size=4)
    X, y = _stack(batch, clf)
    l2 = 1e-3
    _, gW, gb = clf.loss_and_grad(X, y, l2)
    feats = np.unique(X)
    picks = [(int(f), c) for f in rng.choice(feats, size=min(60, len(feats)), replace=False)
             for c in range(4)]
    eps = 1e-6
    ana, num = [], []
    for f, c in picks:
        old = clf.W[f, c]
        clf.W[f, c] = old + eps
        up = clf.loss_and_grad(X, y, l2)[0]
        clf.W[f, c] = old - eps
        down = clf.loss_and_grad(X, y, l2)[0]
        clf.W[f, c] = old
        ana.append(gW[f, c])
        num.append((up - down) / (2 * eps))
    for c in range(4):
        old = clf.b[c]
        clf.b[c] = old + eps
        up = clf.loss_and_grad(X, y, l2)[0]
        clf.b[c] = old - eps
        down = clf.loss_and_grad(X, y, l2)[0]
        clf.b[c] = old
        ana.append(gb[c])
        num.append((up - down) / (2 * eps))
    ana, num = np.array(ana), np.array(num)
    rel = np.linalg.norm(ana - num) / max(np.linalg.norm(ana), np.linalg.norm(num))

    ok = macro - base >= 0.15 and recall >= 0.5 and rel < 1e-4
    report(7, ok, "macro-F1 %.3f vs majority %.3f (margin %.3f >= 0.15); insert recall %.3f "
           "(>= 0.5); gradient relative error %.2e (< 1e-4)" % (macro, base, macro - base,
                                                                 recall, rel))
    assert ok


# 9 -----------------------------------------------------------------------

def test_criterion_9_metric_suite(mini, report):
    s = "the cat sat on the mat".split()
    checks = {
        "bleu identity": corpus_bleu([s], [s]) == pytest.approx(1.0, abs=1e-12),
        "self-bleu identical": self_bleu([s, s, s]) == pytest.approx(1.0, abs=1e-12),
        "distinct-2": distinct_n(["a b a b".split()], 2) == pytest.approx(2 / 3, abs=1e-15),
        "entropy ln2": abs(entropy_n([["a", "b"]], 1) - math.log(2)) <= 1e-12,
        "repetition rules": (is_repetitive("a a a a".split()),
                             is_repetitive("a b a b a b".split()),
                             is_repetitive("a b c d e".split())) == (True, True, False),
    }
    sents = [x for x in mini.test_tokens if all(w in mini.vocab for w in x)][:N_INPUTS]
    pairs = make_templates(sents, "random", 0.5, seed=0)
    states = [init_state(mini.flm, template=t, vocab=mini.vocab) for t, _ in pairs]
    res, _ = run_batch(states, mini.models, SamplerConfig(steps=30, k=20, seed=0))
    hyps = [mini.vocab.decode(r.best[1:-1]) for r in res]
    refs = [src for _, src in pairs]
    bp, no_bp = corpus_bleu(hyps, refs, 4), corpus_bleu(hyps, refs, 4, use_bp=False)
    per_sentence = all(corpus_bleu([h], [r], 4, use_bp=False) >= corpus_bleu([h], [r], 4)
                       for h, r in zip(hyps, refs))
    checks["no-BP >= BP"] = no_bp >= bp and per_sentence
    ok = all(checks.values())
    report(9, ok, "; ".join("%s %s" % (k, "ok" if v else "FAILED") for k, v in checks.items())
           + " (infill BLEU-4 %.3f, w/o BP %.3f over %d outputs)" % (bp, no_bp, len(hyps)))
    assert ok


# 10 ----------------------------------------------------------------------

def _head(src, dst, n):
    with open(src, encoding="utf-8") as f:
        dst.write_text("".join(next(f) for _ in range(n)), encoding="utf-8")


def test_criterion_10_determinism(tmp_path, report):
    for name, n in (("train.txt", 3000), ("valid.txt", 500), ("test.txt", 100)):
        _head(os.path.join(MINI, name), tmp_path / name, n)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train = {0}/train.txt\nheldout = {0}/valid.txt\neval_corpus = {0}/valid.txt\n"
                   "test = {0}/test.txt\nmodel_dir = {0}/models\nclf_epochs = 2\n"
                   "clf_buckets = 4096\nsteps = 20\nk = 10\n".format(tmp_path))
    base = ["--config", str(cfg)]
    out = tmp_path / "out"
    commands = [
        ["train-lm"], ["gen-synth"], ["train-classifier"],
        ["make-inputs", "constraints", "-o", str(out / "cons.txt"), "--n", "8"],
        ["make-inputs", "templates", "-o", str(out / "tpl.txt"), "--n", "8",
         "--strategy", "random"],
        ["generate", str(out / "cons.txt"), "-o", str(out / "gen.jsonl"), "--trace"],
        ["infill", str(out / "tpl.txt"), "-o", str(out / "inf.jsonl")],
        ["evaluate", str(out / "gen.jsonl"), "-o", str(out / "gen_eval")],
        ["evaluate", str(out / "inf.jsonl"), "--references", str(out / "tpl.ref.txt"),
         "-o", str(out / "inf_eval")],
    ]
    snapshots = []
    for rerun in range(2):
        shutil.rmtree(tmp_path / "models", ignore_errors=True)
        shutil.rmtree(out, ignore_errors=True)
        out.mkdir()
        for c in commands:
            assert main(c + base) == 0, c
        snap = tmp_path / ("snap%d" % rerun)
        shutil.copytree(tmp_path / "models", snap / "models")
        shutil.copytree(out, snap / "out")
        snapshots.append(snap)
    files = sorted(os.path.relpath(os.path.join(d, f), snapshots[0])
                   for d, _, fs in os.walk(snapshots[0]) for f in fs)
    match, mismatch, errors = filecmp.cmpfiles(snapshots[0], snapshots[1], files, shallow=False)
    # the generated outputs with a different worker count must match as well
    assert main(["generate", str(snapshots[0] / "out" / "cons.txt"), "-o",
                 str(tmp_path / "gen_jobs2.jsonl"), "--trace", "--jobs", "2"] + base) == 0
    jobs_ok = (tmp_path / "gen_jobs2.jsonl").read_bytes() == \
        (snapshots[0] / "out" / "gen.jsonl").read_bytes()
    ok = not mismatch and not errors and jobs_ok and len(match) == len(files) >= 15
    report(10, ok, "%d/%d files byte-identical across reruns (%d commands); jobs=2 output %s"
           % (len(match), len(files), len(commands), "identical" if jobs_ok else "DIFFERS"))
    assert ok
