"""BLEU, Self-BLEU, Distinct-n, Entropy-n, repetition rate and report assembly.

All functions take sentences as lists of token strings (or ids; anything
hashable works).
"""

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np


def ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _as_refs(ref):
    # a single reference is a list of tokens; multi-reference is a list of lists
    if ref and isinstance(ref[0], (list, tuple)):
        return [list(r) for r in ref]
    return [list(ref)]


def _bleu_stats(hyp, refs, max_n):
    """Clipped matches and totals per order, hypothesis and closest-reference length."""
    matches, totals = [0] * max_n, [0] * max_n
    for n in range(1, max_n + 1):
        h = Counter(ngrams(hyp, n))
        max_ref = Counter()
        for r in refs:
            for g, c in Counter(ngrams(r, n)).items():
                if c > max_ref[g]:
                    max_ref[g] = c
        matches[n - 1] = sum(min(c, max_ref[g]) for g, c in h.items())
        totals[n - 1] = sum(h.values())
    h_len = len(hyp)
    r_len = min((abs(len(r) - h_len), len(r)) for r in refs)[1]
    return matches, totals, h_len, r_len


def _bleu_from_stats(matches, totals, h_len, r_len, use_bp):
    if h_len == 0 or matches[0] == 0:
        return 0.0
    log_p = 0.0
    for n, (m, t) in enumerate(zip(matches, totals)):
        if m == 0:
            # add-one smoothing, only for zero higher-order precisions
            m, t = m + 1, t + 1
        log_p += math.log(m / t)
    score = math.exp(log_p / len(matches))
    if use_bp and h_len < r_len:
        score *= math.exp(1.0 - r_len / h_len)
    return score


def corpus_bleu(hypotheses, references, max_n=4, use_bp=True):
    """Corpus-level BLEU as a fraction in [0, 1]."""
    if len(hypotheses) != len(references):
        raise ValueError("got %d hypotheses but %d references" % (len(hypotheses), len(references)))
    if not hypotheses:
        raise ValueError("corpus_bleu needs at least one hypothesis")
    M, T = np.zeros(max_n, dtype=np.int64), np.zeros(max_n, dtype=np.int64)
    H = R = 0
    for hyp, ref in zip(hypotheses, references):
        m, t, h, r = _bleu_stats(list(hyp), _as_refs(ref), max_n)
        M += m
        T += t
        H += h
        R += r
    return _bleu_from_stats(M.tolist(), T.tolist(), H, R, use_bp)


def sentence_bleu(hypothesis, references, max_n=4, use_bp=True):
    m, t, h, r = _bleu_stats(list(hypothesis), _as_refs(references), max_n)
    return _bleu_from_stats(m, t, h, r, use_bp)


def self_bleu(sentences, max_n=4):
    """Mean BLEU of each sentence against all the others."""
    sentences = [list(s) for s in sentences]
    if len(sentences) < 2:
        raise ValueError("self_bleu needs at least two sentences")
    scores = [sentence_bleu(s, sentences[:i] + sentences[i + 1:], max_n)
              for i, s in enumerate(sentences)]
    return float(np.mean(scores))


def _ngram_counts(sentences, n):
    c = Counter()
    for s in sentences:
        c.update(ngrams(list(s), n))
    if not c:
        raise ValueError("no %d-grams in input" % n)
    return c


def distinct_n(sentences, n):
    c = _ngram_counts(sentences, n)
    return len(c) / sum(c.values())


def entropy_n(sentences, n):
    """Shannon entropy (nats) of the pooled n-gram frequency distribution."""
    c = _ngram_counts(sentences, n)
    f = np.array(list(c.values()), dtype=float)
    f /= f.sum()
    return float(-(f * np.log(f)).sum())


def is_repetitive(tokens):
    tokens = list(tokens)
    limits = {1: 3, 2: 2, 3: 1}
    return any(max(Counter(ngrams(tokens, n)).values(), default=0) > lim
               for n, lim in limits.items())


def repetition_rate(sentences):
    sentences = list(sentences)
    if not sentences:
        return 0.0
    return sum(is_repetitive(s) for s in sentences) / len(sentences)


@dataclass
class MetricReport:
    n: int
    nll: float = None
    bleu: float = None
    bleu_no_bp: float = None
    self_bleu: float = None
    distinct: float = None
    entropy: float = None
    repetition: float = None
    bleu_n: int = 2
    self_bleu_n: int = 4
    distinct_n: int = 2
    entropy_n: int = 4

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self, **extra):
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)

    def to_text(self):
        rows = [("samples", str(self.n))]
        if self.nll is not None:
            rows.append(("NLL (eval LM)", "%.3f" % self.nll))
        if self.bleu is not None:
            rows.append(("BLEU-%d" % self.bleu_n, "%.1f%%" % (100 * self.bleu)))
        if self.bleu_no_bp is not None:
            rows.append(("BLEU-%d (w/o BP)" % self.bleu_n, "%.1f%%" % (100 * self.bleu_no_bp)))
        if self.self_bleu is not None:
            rows.append(("Self-BLEU-%d" % self.self_bleu_n, "%.1f%%" % (100 * self.self_bleu)))
        if self.distinct is not None:
            rows.append(("Distinct-%d" % self.distinct_n, "%.1f%%" % (100 * self.distinct)))
        if self.entropy is not None:
            rows.append(("Entropy-%d" % self.entropy_n, "%.3f" % self.entropy))
        if self.repetition is not None:
            rows.append(("Repetition", "%.1f%%" % (100 * self.repetition)))
        w = max(len(k) for k, _ in rows)
        return "\n".join("%-*s  %s" % (w, k, v) for k, v in rows) + "\n"


def assemble_report(hypotheses, nlls=None, references=None, infill=False,
                    bleu_n=None, self_bleu_n=4, distinct_n_=2, entropy_n_=4):
    """Compute every metric that applies to a list of tokenized outputs.

    ``nlls`` are per-sentence per-token NLLs from the evaluation LM. BLEU is
    only computed with references; the no-brevity-penalty variant only in
    infill mode.
    """
    hypotheses = [list(h) for h in hypotheses]
    if not hypotheses:
        raise ValueError("no results to report on")
    if bleu_n is None:
        bleu_n = 4 if infill else 2
    rep = MetricReport(n=len(hypotheses), bleu_n=bleu_n, self_bleu_n=self_bleu_n,
                       distinct_n=distinct_n_, entropy_n=entropy_n_)
    if nlls is not None:
        rep.nll = float(np.mean(nlls))
    if references is not None:
        rep.bleu = corpus_bleu(hypotheses, references, bleu_n, use_bp=True)
        if infill:
            rep.bleu_no_bp = corpus_bleu(hypotheses, references, bleu_n, use_bp=False)
    if len(hypotheses) >= 2:
        rep.self_bleu = self_bleu(hypotheses, self_bleu_n)
    try:
        rep.distinct = distinct_n(hypotheses, distinct_n_)
    except ValueError:
        pass
    try:
        rep.entropy = entropy_n(hypotheses, entropy_n_)
    except ValueError:
        pass
    rep.repetition = repetition_rate(hypotheses)
    return rep
