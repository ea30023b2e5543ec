"""Synthetic edit data, the token-level action labeler, and the learned prior.

Labels: 0 copy, 1 replace, 2 insert (something belongs before this token),
3 delete (this token should go).
"""

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import BOS_ID, EOS_ID, N_SPECIAL, FormatError
from .proposal import token_scores, top_k_tokens

COPY, REPLACE, INSERT, DELETE = 0, 1, 2, 3
LABEL_NAMES = ("copy", "replace", "insert", "delete")
ACTIONS = ("replace", "insert", "delete")
ACTION_LABEL = {"replace": REPLACE, "insert": INSERT, "delete": DELETE}
PRIOR_MODES = ("classifier", "uniform", "uniform-actions", "uniform-positions")

SYNTH_HEADER = "PREVISE-SYNTH v1"
CLF_HEADER = b"PREVISE-CLF v1"


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class LabeledSentence:
    ids: tuple
    labels: tuple
    method: str = "random"
    # in-memory provenance, not persisted
    source: tuple = ()
    edits: tuple = ()

    def __post_init__(self):
        if len(self.ids) != len(self.labels):
            raise ValueError("ids and labels differ in length")
        if self.labels and self.labels[0] != COPY:
            raise ValueError("BOS must carry the copy label")
        for j in (0, len(self.ids) - 1):
            if self.labels[j] in (REPLACE, DELETE):
                raise ValueError("replace/delete labels cannot sit on BOS or EOS")


@dataclass
class SynthConfig:
    top_n: int = 20
    mix: float = 30 / 36  # fraction of examples made with the LM method
    min_edits: int = 1
    max_edits: int = 3
    perturbations: tuple = ("deletion", "replacement", "insertion")
    crop_prob: float = 0.5
    min_segment: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")
        if not 0 <= self.min_edits <= self.max_edits:
            raise ValueError("need 0 <= min_edits <= max_edits")


def _lm_pick(flm, blm, framed, pos, insert, top_n, rng):
    """Sample from the top-N of the FLM x BLM distribution at ``pos``."""
    cand = top_k_tokens(flm, blm, framed, pos, top_n, insert=insert)
    score = token_scores(flm, blm, framed, pos, insert=insert)[cand]
    p = np.exp(score - score.max())
    p /= p.sum()
    return int(cand[_draw(p, rng)])


def _draw(p, rng):
    j = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(j, len(p) - 1)


def _pick_token(flm, blm, cur, pos, insert, method, config, vocab_size, rng):
    if method == "lm":
        return _lm_pick(flm, blm, [BOS_ID] + cur + [EOS_ID], pos + 1, insert, config.top_n, rng)
    return int(rng.integers(N_SPECIAL, vocab_size))


def deletion_labels(segment, gone, left_cut=False, right_cut=False):
    """Tokens left after deleting positions ``gone`` from ``segment`` and their labels.

    A surviving token is labeled insert when its predecessor was deleted, or
    when it opens a segment cut from a longer sentence. Returns (tokens,
    labels, eos_label).
    """
    cur, labels = [], []
    for j, t in enumerate(segment):
        if j in gone:
            continue
        cur.append(t)
        missing = (j == 0 and left_cut) or (j > 0 and (j - 1) in gone)
        labels.append(INSERT if missing else COPY)
    eos = INSERT if (right_cut or (len(segment) - 1) in gone) else COPY
    return cur, labels, eos


def perturb(sentence, flm, blm, config, vocab_size, rng):
    """Make one LabeledSentence from an unframed id sequence, or None to skip."""
    s = list(sentence)
    n = len(s)
    start, length = 0, n
    if config.crop_prob > 0 and rng.random() < config.crop_prob:
        lo = min(config.min_segment, n)
        length = int(rng.integers(lo, n + 1))
        start = int(rng.integers(0, n - length + 1))
    seg = s[start:start + length]
    left_cut, right_cut = start > 0, start + length < n
    kind = config.perturbations[int(rng.integers(len(config.perturbations)))]
    n_edits = int(rng.integers(config.min_edits, config.max_edits + 1))
    method = "lm" if rng.random() < config.mix else "random"
    L = len(seg)

    if kind == "deletion":
        if n_edits > L - 1:
            return None
        gone = set(int(j) for j in rng.choice(L, size=n_edits, replace=False)) if n_edits else set()
        cur, labels, eos = deletion_labels(seg, gone, left_cut, right_cut)
        edits = [("del", j, seg[j]) for j in sorted(gone)]
    elif kind == "replacement":
        if n_edits > L:
            return None
        cur = list(seg)
        labels = [COPY] * L
        if left_cut:
            labels[0] = INSERT
        edits = []
        for j in sorted(int(x) for x in rng.choice(L, size=n_edits, replace=False)) if n_edits else []:
            orig = cur[j]
            tok = _pick_token(flm, blm, cur, j, False, method, config, vocab_size, rng)
            if tok == orig:
                tok = _pick_token(flm, blm, cur, j, False, method, config, vocab_size, rng)
            if tok == orig:
                continue
            cur[j] = tok
            labels[j] = REPLACE
            edits.append(("sub", j, orig))
        eos = INSERT if right_cut else COPY
    elif kind == "insertion":
        cur = list(seg)
        inserted = [False] * L
        for _ in range(n_edits):
            g = int(rng.integers(0, len(cur) + 1))
            tok = _pick_token(flm, blm, cur, g, True, method, config, vocab_size, rng)
            cur.insert(g, tok)
            inserted.insert(g, True)
        labels = [DELETE if x else COPY for x in inserted]
        if left_cut and not inserted[0]:
            labels[0] = INSERT
        edits = tuple(("ins", j, cur[j]) for j, x in enumerate(inserted) if x)
        eos = INSERT if right_cut else COPY
    else:
        raise ValueError("unknown perturbation %r" % kind)

    return LabeledSentence(
        ids=tuple([BOS_ID] + cur + [EOS_ID]),
        labels=tuple([COPY] + labels + [eos]),
        method=method,
        source=tuple(seg),
        edits=tuple(edits),
    )


def invert_edits(example):
    """Undo the recorded edits; returns the original segment ids."""
    content = list(example.ids[1:-1])
    labels = example.labels[1:-1]
    kinds = {e[0] for e in example.edits}
    if "sub" in kinds:
        for _, j, orig in example.edits:
            content[j] = orig
    if "ins" in kinds:
        content = [t for t, lab in zip(content, labels) if lab != DELETE]
    if "del" in kinds:
        for _, j, tok in sorted(example.edits):
            content.insert(j, tok)
    return tuple(content)


_SYNTH = {}


def _init_synth(flm, blm, config, vocab_size):
    _SYNTH.update(flm=flm, blm=blm, config=config, vocab_size=vocab_size)


def _perturb_range(lo, sentences, flm, blm, config, vocab_size):
    out = []
    for idx, s in enumerate(sentences, start=lo):
        rng = np.random.default_rng([config.seed, idx])
        out.append(perturb(s, flm, blm, config, vocab_size, rng))
    return out


def _synth_chunk(args):
    lo, chunk = args
    w = _SYNTH
    return _perturb_range(lo, chunk, w["flm"], w["blm"], w["config"], w["vocab_size"])


def gen_synthetic(sentences, flm, blm, config, vocab_size, jobs=1):
    """One perturbed example per usable source sentence, shuffled.

    Each sentence gets its own RNG stream derived from (seed, index), so the
    output does not depend on ``jobs``.
    """
    sentences = list(sentences)
    if jobs > 1 and len(sentences) > 1:
        size = -(-len(sentences) // (4 * jobs))
        work = [(lo, sentences[lo:lo + size]) for lo in range(0, len(sentences), size)]
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_synth,
                                 initargs=(flm, blm, config, vocab_size)) as ex:
            made = [e for part in ex.map(_synth_chunk, work) for e in part]
    else:
        made = _perturb_range(0, sentences, flm, blm, config, vocab_size)
    out = [e for e in made if e is not None]
    order = np.random.default_rng([config.seed, len(out), 7]).permutation(len(out))
    return [out[i] for i in order]


def split_synthetic(examples, valid_ratio):
    """(train, valid): the first ``floor(valid_ratio * n)`` shuffled examples are validation."""
    n_valid = int(len(examples) * valid_ratio)
    return list(examples[n_valid:]), list(examples[:n_valid])


def save_synthetic(path, examples, vocab):
    with open(path, "w", encoding="utf-8") as f:
        f.write("%s vocab=%s\n" % (SYNTH_HEADER, vocab.hash))
        for ex in examples:
            f.write(" ".join(vocab.decode(ex.ids)) + "\n")
            f.write(" ".join(str(x) for x in ex.labels) + "\n\n")


def load_synthetic(path, vocab):
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if header[:2] != SYNTH_HEADER.split():
            raise FormatError("%s: expected header %r" % (path, SYNTH_HEADER))
        if len(header) > 2 and header[2] != "vocab=" + vocab.hash:
            raise FormatError("%s: vocabulary hash mismatch (%s)" % (path, header[2]))
        blocks = f.read().strip().split("\n\n")
    out = []
    for b in blocks:
        if not b.strip():
            continue
        toks, labs = b.strip().split("\n")
        out.append(LabeledSentence(tuple(vocab.encode(toks.split())),
                                   tuple(int(x) for x in labs.split())))
    return out


# ---------------------------------------------------------------------------
# classifier

@dataclass
class TrainParams:
    radius: int = 3
    buckets: int = 1 << 14
    epochs: int = 6
    batch_size: int = 256
    lr: float = 0.1
    l2: float = 1e-6
    patience: int = 2
    lm_features: bool = True
    seed: int = 0


# hashed conjunctions over window offsets
CONJUNCTIONS = ((-1, 0), (0, 1), (-2, -1), (1, 2), (-1, 0, 1))
_PRIMES = (1000003, 999983, 998244353)


# binned LM surprisal features: width-1 nat bins, clipped
N_BINS = 12
LM_BLOCKS = 5


def _bin(lp):
    return np.minimum((-np.asarray(lp)).astype(np.int64), N_BINS - 1)


class TokenClassifier:
    """Windowed multinomial log-linear labeler over 4 action labels.

    With ``lm_features`` the forward/backward LM surprisal of each token (and
    of its right neighbour) is added as binned indicator features; the LMs
    must then be attached with :meth:`attach` before predicting.
    """

    def __init__(self, vocab_size, vocab_hash="", radius=3, buckets=1 << 14, lm_features=False):
        self.vocab_size = vocab_size
        self.vocab_hash = vocab_hash
        self.radius = radius
        self.buckets = buckets
        self.lm_features = lm_features
        self.n_features = (2 * radius + 1) * (vocab_size + 1) + len(CONJUNCTIONS) * buckets + 4
        if lm_features:
            self.n_features += LM_BLOCKS * N_BINS * N_BINS
        self.W = np.zeros((self.n_features, 4))
        self.b = np.zeros(4)
        self.trained = False
        self.flm = self.blm = None

    def attach(self, flm, blm):
        self.flm, self.blm = flm, blm
        return self

    def _surprisal(self, ids):
        """Per-position forward and backward token log-probs (0 at BOS / EOS)."""
        n = len(ids)
        fwd, bwd = np.zeros(n), np.zeros(n)
        fo, bo = self.flm.order - 1, self.blm.order - 1
        for p in range(1, n):
            fwd[p] = self.flm.log_prob(ids[p], ids[max(0, p - fo):p])
        rev = ids[::-1]
        for q in range(1, n):
            bwd[n - 1 - q] = self.blm.log_prob(rev[q], rev[max(0, q - bo):q])
        return fwd, bwd

    def features(self, ids):
        """(len(ids), F) matrix of active feature indices; every feature has value 1."""
        ids = np.asarray(ids, dtype=np.int64)
        n = len(ids)
        r = self.radius
        pad = self.vocab_size
        padded = np.concatenate([np.full(r, pad), ids, np.full(r, pad)])
        cols = []
        block = self.vocab_size + 1
        off = 0
        window = {}
        for o in range(-r, r + 1):
            w = padded[r + o:r + o + n]
            window[o] = w
            cols.append(off + w)
            off += block
        for k, conj in enumerate(CONJUNCTIONS if self.buckets else ()):
            h = np.full(n, k + 1, dtype=np.int64)
            for p, o in zip(_PRIMES, conj):
                h = (h * p + window[o]) % self.buckets
            cols.append(off + h)
            off += self.buckets
        pos = np.arange(n)
        cols.append(off + (pos == 1).astype(np.int64))
        cols.append(off + 2 + (pos == n - 2).astype(np.int64))
        off += 4
        if self.lm_features:
            if self.flm is None:
                raise RuntimeError("classifier uses LM features; call attach(flm, blm) first")
            fwd, bwd = self._surprisal(list(ids))
            f, b = _bin(fwd), _bin(bwd)
            f_next = np.append(f[1:], 0)
            b_prev = np.insert(b[:-1], 0, 0)
            sq = N_BINS * N_BINS
            for k, (x, y) in enumerate([(f, b), (f, f_next), (b_prev, b), (f, b_prev), (f_next, b)]):
                cols.append(off + k * sq + x * N_BINS + y)
        return np.stack(cols, axis=1)

    def logits(self, X):
        return self.W[X].sum(axis=1) + self.b

    def predict_proba(self, ids):
        z = self.logits(self.features(ids))
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def _log_softmax(self, X):
        z = self.logits(X)
        z -= z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def sparse_grad(self, X, y, l2=0.0):
        """Gradient of the mean cross-entropy (+ L2) on the rows of W that X touches.

        Returns (feature ids, their gradient rows, bias gradient); this is the
        update training applies.
        """
        g = np.exp(self._log_softmax(X))
        g[np.arange(len(y)), y] -= 1.0
        g /= len(y)
        feats, inv = np.unique(X.ravel(), return_inverse=True)
        gW = np.zeros((len(feats), 4))
        np.add.at(gW, inv, np.repeat(g, X.shape[1], axis=0))
        gW += l2 * self.W[feats]
        return feats, gW, g.sum(axis=0)

    def loss_and_grad(self, X, y, l2=0.0):
        """Mean cross-entropy (+ L2) and its dense gradient wrt (W, b)."""
        logp = self._log_softmax(X)
        loss = -logp[np.arange(len(y)), y].mean() + 0.5 * l2 * (self.W ** 2).sum()
        feats, rows, gb = self.sparse_grad(X, y, l2)
        gW = l2 * self.W
        gW[feats] = rows
        return loss, gW, gb

    # -- persistence

    def save(self, path):
        # consecutive .npy records; unlike npz there is no timestamped zip wrapper
        buf = io.BytesIO()
        meta = np.array([self.vocab_size, self.radius, self.buckets, int(self.lm_features)],
                        dtype=np.int64)
        for arr in (meta, self.W, self.b):
            np.save(buf, arr, allow_pickle=False)
        with open(path, "wb") as f:
            f.write(CLF_HEADER + b" vocab=" + self.vocab_hash.encode("ascii") + b"\n")
            f.write(buf.getvalue())

    @classmethod
    def load(cls, path, vocab=None, lms=None):
        """Read a saved classifier; ``lms`` = (flm, blm) is required when it uses LM features."""
        with open(path, "rb") as f:
            header = f.readline().rstrip(b"\n").split(b" ")
            blob = f.read()
        if b" ".join(header[:2]) != CLF_HEADER:
            raise FormatError("%s: expected header %r" % (path, CLF_HEADER.decode()))
        vhash = header[2].split(b"=", 1)[1].decode() if len(header) > 2 else ""
        if vocab is not None and vhash != vocab.hash:
            raise FormatError("%s: vocabulary hash %s does not match %s" % (path, vhash, vocab.hash))
        buf = io.BytesIO(blob)
        try:
            meta, W, b = (np.load(buf, allow_pickle=False) for _ in range(3))
        except ValueError as e:
            raise FormatError("%s: corrupt weight records (%s)" % (path, e)) from None
        vocab_size, radius, buckets, lm_features = (int(x) for x in meta)
        clf = cls(vocab_size, vhash, radius, buckets, bool(lm_features))
        if clf.W.shape != W.shape or b.shape != (4,):
            raise FormatError("%s: weight shapes %s, %s do not match the header"
                              % (path, W.shape, b.shape))
        if lms is not None:
            clf.attach(*lms)
        elif lm_features:
            raise ValueError("%s uses LM features; pass lms=(flm, blm)" % path)
        clf.W, clf.b = W, b
        clf.trained = True
        return clf


def _stack(dataset, clf):
    X = np.concatenate([clf.features(ex.ids) for ex in dataset])
    y = np.concatenate([np.asarray(ex.labels, dtype=np.int64) for ex in dataset])
    return X, y


def train_classifier(dataset, vocab_size, params=None, valid=None, vocab_hash="", log=None,
                     lms=None):
    """Mini-batch AdaGrad on token cross-entropy.

    With ``valid`` given, the weights from the epoch with the best validation
    macro-F1 are kept and training stops after ``patience`` epochs without
    improvement.
    """
    params = params or TrainParams()
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training set")
    clf = TokenClassifier(vocab_size, vocab_hash, params.radius, params.buckets,
                          params.lm_features)
    if params.lm_features:
        if lms is None:
            raise ValueError("lm_features needs lms=(flm, blm)")
        clf.attach(*lms)
    X, y = _stack(dataset, clf)
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class; nothing to learn")
    rng = np.random.default_rng(params.seed)
    accW = np.full_like(clf.W, 1e-8)
    accb = np.full_like(clf.b, 1e-8)
    best = (-1.0, clf.W.copy(), clf.b.copy())
    stale = 0
    history = []
    for epoch in range(params.epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), params.batch_size):
            idx = order[s:s + params.batch_size]
            feats, g, gb = clf.sparse_grad(X[idx], y[idx], params.l2)
            accW[feats] += g * g
            clf.W[feats] -= params.lr * g / np.sqrt(accW[feats])
            accb += gb * gb
            clf.b -= params.lr * gb / np.sqrt(accb)
        clf.trained = True
        loss = clf.loss_and_grad(X[:20000], y[:20000])[0]
        entry = {"epoch": epoch + 1, "train_loss": float(loss)}
        if valid is not None:
            f1 = evaluate_classifier(clf, valid)["macro"]["f1"]
            entry["valid_macro_f1"] = f1
            if f1 > best[0]:
                best = (f1, clf.W.copy(), clf.b.copy())
                stale = 0
            else:
                stale += 1
        history.append(entry)
        if log:
            log(entry)
        if valid is not None and stale >= params.patience:
            break
    if valid is not None:
        clf.W, clf.b = best[1], best[2]
    clf.history = history
    return clf


def predict_labels(clf, ids):
    return clf.predict_proba(ids)


def evaluate_classifier(clf, dataset, predictions=None):
    """One-vs-rest precision/recall/F1 per label plus macro averages.

    BOS positions are excluded (their label is fixed). ``predictions`` may
    supply per-example label arrays instead of running the classifier.
    """
    gold, pred = [], []
    for i, ex in enumerate(dataset):
        gold.append(np.asarray(ex.labels[1:]))
        if predictions is not None:
            pred.append(np.asarray(predictions[i])[1:])
        else:
            pred.append(clf.predict_proba(ex.ids).argmax(axis=1)[1:])
    gold = np.concatenate(gold)
    pred = np.concatenate(pred)
    report = {}
    for lab, name in enumerate(LABEL_NAMES):
        tp = int(((pred == lab) & (gold == lab)).sum())
        fp = int(((pred == lab) & (gold != lab)).sum())
        fn = int(((pred != lab) & (gold == lab)).sum())
        zero = []
        p = tp / (tp + fp) if tp + fp else (zero.append("precision") or 0.0)
        r = tp / (tp + fn) if tp + fn else (zero.append("recall") or 0.0)
        f = 2 * p * r / (p + r) if p + r else 0.0
        report[name] = {"p": p, "r": r, "f1": f, "support": int((gold == lab).sum()),
                        "zero_division": zero}
    report["macro"] = {k: float(np.mean([report[n][k] for n in LABEL_NAMES]))
                       for k in ("p", "r", "f1")}
    report["accuracy"] = float((pred == gold).mean())
    return report


def majority_baseline(dataset):
    """Scores of a predictor that always emits the most frequent label."""
    gold = np.concatenate([np.asarray(ex.labels) for ex in dataset])
    lab = int(np.bincount(gold[gold >= 0], minlength=4).argmax())
    preds = [np.full(len(ex.labels), lab) for ex in dataset]
    return evaluate_classifier(None, dataset, predictions=preds)


# ---------------------------------------------------------------------------
# prior table

@dataclass
class PriorTable:
    actions: tuple
    probs: np.ndarray  # (len(actions), n), sums to 1 unless nothing is legal
    legal: np.ndarray  # bool, same shape
    fallback: bool = False

    @property
    def any_legal(self):
        return bool(self.legal.any())


def legal_mask(state, actions):
    """Which (action, position) pairs a chain state allows."""
    n = len(state.ids)
    mask = np.zeros((len(actions), n), dtype=bool)
    for a, act in enumerate(actions):
        for p in range(1, n):
            if act == "insert":
                mask[a, p] = state.can_insert(p)
            elif p < n - 1 and not state.protected[p]:
                mask[a, p] = True
    return mask


def _normalized(table, legal):
    table = np.where(legal, table, 0.0)
    total = table.sum()
    if total > 0:
        return table / total, False
    if legal.any():
        return legal / legal.sum(), True
    return np.zeros(legal.shape), False


def build_prior(clf, state, actions=("replace", "insert")):
    """Classifier probabilities for each action, masked and renormalized."""
    legal = legal_mask(state, actions)
    if clf is None:
        table = legal.astype(float)
    else:
        proba = clf.predict_proba(state.ids)
        table = np.stack([proba[:, ACTION_LABEL[a]] for a in actions])
    probs, fallback = _normalized(table, legal)
    return PriorTable(tuple(actions), probs, legal, fallback)


def _pick(weights, u):
    c = np.cumsum(weights)
    j = min(int(np.searchsorted(c, u * c[-1], side="right")), len(weights) - 1)
    while weights[j] <= 0:  # u * c[-1] rounded up onto the total
        j -= 1
    return j


def sample_action_position(prior, rng, mode="classifier"):
    """Draw (action, position) from the table; returns None when nothing is legal.

    Always consumes exactly two uniforms so chains stay aligned across modes.
    """
    u1, u2 = rng.random(), rng.random()
    if not prior.any_legal:
        return None
    legal = prior.legal
    if mode == "uniform":
        flat = legal.ravel().astype(float)
        k = _pick(flat, u1)
        a, p = divmod(k, legal.shape[1])
        return prior.actions[a], int(p)
    if mode in ("classifier", "uniform-positions"):
        a = _pick(prior.probs.sum(axis=1), u1)
    elif mode == "uniform-actions":
        a = _pick(legal.any(axis=1).astype(float), u1)
    else:
        raise ValueError("unknown prior mode %r" % mode)
    row = legal[a].astype(float) if mode == "uniform-positions" else prior.probs[a]
    if row.sum() <= 0:
        row = legal[a].astype(float)
    return prior.actions[a], _pick(row, u2)
