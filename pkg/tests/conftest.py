import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from previse.classifier import (SynthConfig, TrainParams, gen_synthetic, split_synthetic,
                                train_classifier)
from previse.corpus import Vocabulary, build_vocab, read_lines
from previse.ngram import train_lm
from previse.sampler import Models

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MINI = os.path.join(ROOT, "data", "mini")

TOY_TEXT = [
    "the cat sat",
    "the dog sat",
    "a cat ran",
    "the cat ran home",
    "a dog sat home",
    "the dog ran",
    "cat sat",
]


class Toy:
    """Tiny corpus with trained forward/backward trigram models."""

    def __init__(self, text=TOY_TEXT, order=3, discount=0.75):
        toks = [t.split() for t in text]
        self.vocab = build_vocab(toks, 100)
        self.sentences = [self.vocab.encode(s) for s in toks]
        self.flm = train_lm(self.sentences, self.vocab, order, "forward", discount)
        self.blm = train_lm(self.sentences, self.vocab, order, "backward", discount)
        self.order, self.discount = order, discount

    def ids(self, text):
        return [0] + self.vocab.encode(text.split()) + [1]


@pytest.fixture(scope="session")
def toy():
    return Toy()


def five_token_lm(order=3):
    """LMs over exactly five content tokens, used by the enumeration tests."""
    vocab = Vocabulary(["<BOS>", "<EOS>", "<MASK>", "<UNK>", "a", "b", "c", "d", "e"])
    rng = np.random.default_rng(5)
    sents = [list(rng.integers(4, 9, size=rng.integers(1, 5))) for _ in range(40)]
    sents = [[int(x) for x in s] for s in sents]
    flm = train_lm(sents, vocab, order, "forward")
    blm = train_lm(sents, vocab, order, "backward")
    return vocab, sents, flm, blm


class Mini:
    """The bundled corpus trained end to end with the default settings (seed 0)."""

    def __init__(self, seed=0):
        train = read_lines(os.path.join(MINI, "train.txt"))
        self.vocab = build_vocab(train, 5000)
        self.train = [self.vocab.encode(s) for s in train]
        self.flm = train_lm(self.train, self.vocab, 3, "forward")
        self.blm = train_lm(self.train, self.vocab, 3, "backward")
        # evaluation LM: held-out split only, disjoint from the generator's data
        self.valid = [self.vocab.encode(s) for s in read_lines(os.path.join(MINI, "valid.txt"))]
        self.eval_lm = train_lm(self.valid, self.vocab, 3, "forward")
        self.test = [self.vocab.encode(s) for s in read_lines(os.path.join(MINI, "test.txt"))]
        self.test_tokens = read_lines(os.path.join(MINI, "test.txt"))
        data = gen_synthetic(self.train, self.flm, self.blm, SynthConfig(seed=seed),
                             len(self.vocab))
        self.synth_train, self.synth_valid = split_synthetic(data, 0.1)
        self.clf = train_classifier(self.synth_train, len(self.vocab), TrainParams(seed=seed),
                                    valid=self.synth_valid, vocab_hash=self.vocab.hash,
                                    lms=(self.flm, self.blm))
        self.models = Models(self.flm, self.blm, self.clf)


@pytest.fixture(scope="session")
def mini():
    return Mini()


GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "mini.json")


@pytest.fixture(scope="session")
def golden():
    with open(GOLDEN, encoding="utf-8") as f:
        return json.load(f)
