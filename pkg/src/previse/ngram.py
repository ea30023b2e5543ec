"""Interpolated absolute-discounting n-gram language models.

A forward model reads ``BOS x_1 ... x_n EOS`` left to right. A backward model
is the same machine trained on reversed sentences with the roles of BOS and
EOS swapped, so it reads ``EOS x_n ... x_1 BOS``.

    P(w | c) = max(n(c, w) - d, 0) / n(c) + d * T(c) / n(c) * P(w | c')

where ``T(c)`` is the number of distinct continuations of ``c`` and ``c'``
drops the oldest context token. The recursion bottoms out at 1/|V|.
"""

import json
import math
from collections import defaultdict

import numpy as np

from .corpus import BOS_ID, EOS_ID, FormatError

LM_HEADER = "PREVISE-LM v1"


def logsumexp(xs):
    xs = np.asarray(xs, dtype=float)
    m = xs.max()
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.exp(xs - m).sum()))


class _Context:
    __slots__ = ("total", "types", "words", "counts", "lookup")

    def __init__(self, table):
        words = sorted(table)
        self.words = np.array(words, dtype=np.int64)
        self.counts = np.array([table[w] for w in words], dtype=float)
        self.total = float(self.counts.sum())
        self.types = len(words)
        self.lookup = {w: table[w] for w in words}


class NGramLM:
    def __init__(self, order, direction, discount, vocab_size, vocab_hash, levels):
        self.order = order
        self.direction = direction
        self.discount = discount
        self.vocab_size = vocab_size
        self.vocab_hash = vocab_hash
        # levels[m] maps a length-m context tuple to its continuation counts
        self.levels = levels
        self._ctx = [{c: _Context(t) for c, t in lvl.items()} for lvl in levels]
        self._lp = {}
        self._dist = {}

    @property
    def start_id(self):
        return BOS_ID if self.direction == "forward" else EOS_ID

    @property
    def end_id(self):
        return EOS_ID if self.direction == "forward" else BOS_ID

    def _trim(self, context):
        n = self.order - 1
        if n == 0:
            return ()
        return tuple(context[-n:]) if len(context) > n else tuple(context)

    def prob(self, word, context):
        return math.exp(self.log_prob(word, context))

    def log_prob(self, word, context):
        ctx = self._trim(context)
        key = (ctx, word)
        lp = self._lp.get(key)
        if lp is None:
            d = self.discount
            p = 1.0 / self.vocab_size
            for m in range(len(ctx) + 1):
                c = self._ctx[m].get(ctx[len(ctx) - m:])
                if c is None:
                    break
                p = max(c.lookup.get(word, 0) - d, 0.0) / c.total + d * c.types / c.total * p
            lp = math.log(p)
            self._lp[key] = lp
        return lp

    def dist(self, context):
        """Full next-token distribution as a read-only array of length |V|."""
        ctx = self._trim(context)
        p = self._dist.get(ctx)
        if p is None:
            d = self.discount
            p = np.full(self.vocab_size, 1.0 / self.vocab_size)
            for m in range(len(ctx) + 1):
                c = self._ctx[m].get(ctx[len(ctx) - m:])
                if c is None:
                    break
                p *= d * c.types / c.total
                p[c.words] += (c.counts - d) / c.total
            p.flags.writeable = False
            if len(self._dist) > 200000:
                self._dist.clear()
            self._dist[ctx] = p
        return p

    def reading_order(self, sentence):
        """The framed sentence in the order this model reads it."""
        return list(sentence) if self.direction == "forward" else list(reversed(sentence))

    def score(self, sentence):
        seq = self.reading_order(sentence)
        if seq[0] != self.start_id:
            raise ValueError("sentence is not framed for a %s model" % self.direction)
        n = self.order - 1
        total = 0.0
        for t in range(1, len(seq)):
            total += self.log_prob(seq[t], seq[max(0, t - n):t])
        return total

    def clear_cache(self):
        self._lp.clear()
        self._dist.clear()

    # -- persistence

    def to_dict(self):
        return {
            "order": self.order,
            "direction": self.direction,
            "discount": self.discount,
            "vocab_size": self.vocab_size,
            "vocab_hash": self.vocab_hash,
            "levels": [
                [[list(c), sorted(t.items())] for c, t in sorted(lvl.items())]
                for lvl in self.levels
            ],
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(LM_HEADER + "\n")
            json.dump(self.to_dict(), f, separators=(",", ":"))
            f.write("\n")

    @classmethod
    def load(cls, path, vocab=None):
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != LM_HEADER:
                raise FormatError("%s: expected header %r, got %r" % (path, LM_HEADER, header))
            d = json.loads(f.read())
        if vocab is not None and d["vocab_hash"] != vocab.hash:
            raise FormatError("%s: vocabulary hash %s does not match %s"
                              % (path, d["vocab_hash"], vocab.hash))
        levels = [{tuple(c): dict((w, n) for w, n in t) for c, t in lvl} for lvl in d["levels"]]
        return cls(d["order"], d["direction"], d["discount"], d["vocab_size"],
                   d["vocab_hash"], levels)


def train_lm(sentences, vocab, order=3, direction="forward", discount=0.75):
    """Count n-grams over unframed id sequences and build an NGramLM."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    start, end = (BOS_ID, EOS_ID) if direction == "forward" else (EOS_ID, BOS_ID)
    levels = [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
    n_sent = 0
    for s in sentences:
        n_sent += 1
        seq = [start] + (list(s) if direction == "forward" else list(reversed(s))) + [end]
        for t in range(1, len(seq)):
            w = seq[t]
            for m in range(min(order - 1, t) + 1):
                levels[m][tuple(seq[t - m:t])][w] += 1
    if n_sent == 0:
        raise ValueError("cannot train a language model on an empty corpus")
    levels = [{c: dict(t) for c, t in lvl.items()} for lvl in levels]
    return NGramLM(order, direction, discount, len(vocab), vocab.hash, levels)


def next_token_dist(lm, context):
    return lm.dist(context)


def sentence_log_prob(lm, sentence):
    """Natural-log probability of a BOS...EOS framed sentence; EOS is scored, BOS is not."""
    return lm.score(sentence)


def nll_per_token(lm, sentence):
    return -lm.score(sentence) / (len(sentence) - 1)


def frame(ids):
    return [BOS_ID] + list(ids) + [EOS_ID]


def eval_nll(lm, sentences):
    """Mean per-token NLL over unframed id sequences."""
    sentences = list(sentences)
    if not sentences:
        raise ValueError("eval_nll needs at least one sentence")
    return float(np.mean([nll_per_token(lm, frame(s)) for s in sentences]))
