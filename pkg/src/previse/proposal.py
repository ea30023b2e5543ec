"""Top-K candidate generation for replace / insert / delete moves."""

from dataclasses import dataclass

import numpy as np

from .corpus import N_SPECIAL
from .ngram import logsumexp

MODES = ("flm_blm", "flm", "blm")


@dataclass(frozen=True)
class CandidateSet:
    action: str
    position: int
    tokens: tuple  # fill token per candidate (None for delete)
    sentences: tuple  # successor sentences, framed
    log_probs: np.ndarray  # FLM log p of each successor
    probs: np.ndarray  # normalized proposal distribution

    def __len__(self):
        return len(self.sentences)

    @property
    def log_total(self):
        """log of the summed successor probabilities."""
        return logsumexp(self.log_probs)


def _normalize(log_probs):
    log_probs = np.asarray(log_probs, dtype=float)
    return np.exp(log_probs - logsumexp(log_probs))


def token_scores(flm, blm, sentence, i, insert=False, mode="flm_blm"):
    """log P_f(w | x_<i) + log P_b(w | x_>i) for every w.

    For insertion the right context starts at x_i itself.
    """
    if mode not in MODES:
        raise ValueError("unknown candidate generator %r" % mode)
    left = sentence[:i]
    right = sentence[i:] if insert else sentence[i + 1:]
    score = np.zeros(flm.vocab_size)
    if mode in ("flm_blm", "flm"):
        score = score + np.log(flm.dist(left))
    if mode in ("flm_blm", "blm"):
        score = score + np.log(blm.dist(right[::-1]))
    return score


def _rank(score, ids):
    # descending score, ties by ascending id
    ids = np.asarray(ids)
    order = np.lexsort((ids, -score[ids]))
    return ids[order]


def top_k_tokens(flm, blm, sentence, i, k, mode="flm_blm", insert=False):
    if k < 1:
        raise ValueError("K must be >= 1")
    score = token_scores(flm, blm, sentence, i, insert=insert, mode=mode)
    eligible = np.arange(N_SPECIAL, flm.vocab_size)
    if k < len(eligible):
        # cheap pre-selection, then an exact ordered sort of the survivors
        cut = np.partition(score[eligible], len(eligible) - k)[len(eligible) - k]
        eligible = eligible[score[eligible] >= cut]
    return [int(t) for t in _rank(score, eligible)[:k]]


def _check_editable(sentence, i, protected, what):
    if i <= 0 or i >= len(sentence) - 1:
        raise ValueError("cannot %s the sentence boundary at position %d" % (what, i))
    if protected is not None and protected[i]:
        raise ValueError("cannot %s protected position %d" % (what, i))


def build_replacement_set(flm, blm, sentence, i, k, protected=None, mode="flm_blm"):
    _check_editable(sentence, i, protected, "replace")
    sentence = tuple(sentence)
    tokens = top_k_tokens(flm, blm, sentence, i, k, mode=mode)
    current = sentence[i]
    if current not in tokens:
        if len(tokens) >= k:
            tokens[-1] = current
        else:
            tokens.append(current)
        score = token_scores(flm, blm, sentence, i, mode=mode)
        tokens = [int(t) for t in _rank(score, tokens)]
    sents = tuple(sentence[:i] + (t,) + sentence[i + 1:] for t in tokens)
    lps = np.array([flm.score(s) for s in sents])
    return CandidateSet("replace", i, tuple(tokens), sents, lps, _normalize(lps))


def build_insertion_set(flm, blm, sentence, i, k, mode="flm_blm"):
    if i <= 0 or i >= len(sentence):
        raise ValueError("insertion position must lie in 1..%d" % (len(sentence) - 1))
    sentence = tuple(sentence)
    tokens = top_k_tokens(flm, blm, sentence, i, k, mode=mode, insert=True)
    sents = tuple(sentence[:i] + (t,) + sentence[i:] for t in tokens)
    lps = np.array([flm.score(s) for s in sents])
    return CandidateSet("insert", i, tuple(tokens), sents, lps, _normalize(lps))


def build_deletion_set(flm, sentence, i, protected=None):
    _check_editable(sentence, i, protected, "delete")
    sentence = tuple(sentence)
    s = sentence[:i] + sentence[i + 1:]
    lp = np.array([flm.score(s)])
    return CandidateSet("delete", i, (None,), (s,), lp, np.ones(1))


def gibbs_conditional_exact(flm, sentence, i, tokens=None):
    """Exact q(x_i = w | x_-i) by rescoring the full sentence for every w.

    ``tokens`` restricts the support (renormalized); entries outside it are 0.
    Cost is one full-sentence score per vocabulary entry.
    """
    sentence = tuple(sentence)
    support = range(flm.vocab_size) if tokens is None else sorted(set(tokens))
    support = list(support)
    lps = np.array([flm.score(sentence[:i] + (w,) + sentence[i + 1:]) for w in support])
    out = np.zeros(flm.vocab_size)
    out[support] = _normalize(lps)
    return out
