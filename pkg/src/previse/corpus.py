"""Tokenization, vocabulary, corpus splits, constraint sets and infill templates."""

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

BOS, EOS, MASK, UNK = "<BOS>", "<EOS>", "<MASK>", "<UNK>"
SPECIALS = (BOS, EOS, MASK, UNK)
BOS_ID, EOS_ID, MASK_ID, UNK_ID = 0, 1, 2, 3
N_SPECIAL = 4

BLANK = "__"
VOCAB_HEADER = "PREVISE-VOCAB v1"


class FormatError(ValueError):
    """A persisted artifact has the wrong header, version or vocabulary hash."""


def tokenize(text):
    return text.split()


class Vocabulary:
    """Bijective token <-> id map; ids 0..3 are BOS, EOS, MASK, UNK."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:N_SPECIAL]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens %s" % (SPECIALS,))
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._hash = None

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token):
        return self.index.get(token, UNK_ID)

    def encode(self, tokens):
        return [self.index.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        n = len(self.tokens)
        out = []
        for i in ids:
            if not 0 <= i < n:
                raise IndexError("token id %d outside vocabulary of size %d" % (i, n))
            out.append(self.tokens[i])
        return out

    def is_content(self, i):
        """True for ids that may appear as ordinary sentence tokens."""
        return i >= N_SPECIAL

    @property
    def hash(self):
        if self._hash is None:
            h = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
            self._hash = h.hexdigest()[:16]
        return self._hash

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(VOCAB_HEADER + "\n")
            for t in self.tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        if not lines or lines[0] != VOCAB_HEADER:
            raise FormatError("%s: expected header %r" % (path, VOCAB_HEADER))
        return cls([t for t in lines[1:] if t])


def build_vocab(sentences, max_size):
    """Specials plus the ``max_size - 4`` most frequent tokens.

    ``sentences`` is an iterable of token lists. Ties in frequency go to the
    token seen first.
    """
    if max_size < N_SPECIAL:
        raise ValueError("max_size must be at least %d" % N_SPECIAL)
    counts = Counter()
    first = {}
    for sent in sentences:
        for t in sent:
            counts[t] += 1
            if t not in first:
                first[t] = len(first)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocabulary(list(SPECIALS) + ranked[:max_size - N_SPECIAL])


@dataclass(frozen=True)
class Corpus:
    sentences: tuple  # tuple of tuples of ids, unframed
    split: str = "train"

    def __post_init__(self):
        for s in self.sentences:
            if not s:
                raise ValueError("corpus sentences must be non-empty")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [tokenize(line) for line in f if line.strip()]


def load_corpus(path, vocab, split="train"):
    sents = tuple(tuple(vocab.encode(toks)) for toks in read_lines(path))
    if not sents:
        raise ValueError("%s: empty corpus" % path)
    return Corpus(sents, split)


def make_constraint_sets(corpus, k, n_sets, seed):
    """Sample ``n_sets`` ordered k-keyword tuples (as ids) from test sentences.

    Each tuple comes from one sentence; positions are distinct and their
    left-to-right order is kept. Specials and UNK are never picked.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    usable = []
    for s in corpus:
        pos = [j for j, t in enumerate(s) if t >= N_SPECIAL]
        if len(pos) >= k:
            usable.append((s, pos))
    if not usable:
        raise ValueError("no sentence has %d usable tokens" % k)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sets):
        s, pos = usable[rng.integers(len(usable))]
        chosen = sorted(rng.choice(len(pos), size=k, replace=False))
        out.append(tuple(s[pos[c]] for c in chosen))
    return out


@dataclass(frozen=True)
class Template:
    """Fixed tokens interleaved with blanks; ``items`` holds token strings and BLANK."""

    items: tuple

    def __post_init__(self):
        if not self.items:
            raise ValueError("template needs at least one token or blank")

    @property
    def n_blanks(self):
        return sum(1 for t in self.items if t == BLANK)

    @property
    def fixed(self):
        return [t for t in self.items if t != BLANK]

    def __str__(self):
        return " ".join(self.items)


def parse_template(line):
    items = []
    for t in tokenize(line):
        if t == BLANK and items and items[-1] == BLANK:
            continue
        items.append(t)
    if not items:
        raise ValueError("empty template")
    return Template(tuple(items))


def _template_from_removed(tokens, removed):
    items = []
    for j, t in enumerate(tokens):
        if j in removed:
            if not items or items[-1] != BLANK:
                items.append(BLANK)
        else:
            items.append(t)
    return Template(tuple(items))


def n_removed(n, ratio):
    return math.ceil(Fraction(ratio).limit_denominator(1000) * n)


def mask_middle(tokens, ratio):
    n = len(tokens)
    m = n_removed(n, ratio)
    start = (n - m) // 2
    return _template_from_removed(tokens, set(range(start, start + m)))


def mask_random(tokens, ratio, rng):
    n = len(tokens)
    m = n_removed(n, ratio)
    removed = set(int(j) for j in rng.choice(n, size=m, replace=False))
    return _template_from_removed(tokens, removed)


def make_templates(sentences, strategy, ratio, seed):
    """Blank out ``ceil(ratio * n)`` tokens of each sentence (token lists).

    Returns ``(template, source_tokens)`` pairs; sentences shorter than two
    tokens are skipped.
    """
    if strategy not in ("middle", "random"):
        raise ValueError("unknown mask strategy %r" % strategy)
    sentences = [s for s in sentences if len(s) >= 2]
    if not sentences:
        raise ValueError("no sentence long enough to mask")
    rng = np.random.default_rng(seed)
    out = []
    for s in sentences:
        t = mask_middle(s, ratio) if strategy == "middle" else mask_random(s, ratio, rng)
        out.append((t, list(s)))
    return out
