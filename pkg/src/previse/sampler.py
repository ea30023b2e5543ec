"""Predict-and-revise MCMC over sentences.

Each step samples an (action, position) pair from a prior table, proposes a
successor from the top-K candidate set at that position and accepts it with
the Metropolis-Hastings rule for that action:

* replace: Gibbs-style move, always accepted.
* insert:  A = min(1, sum_{X in S} p(X) / p(X_t)), S the insertion candidates.
* delete:  A = min(1, p(X') / sum_{X in S'} p(X)), S' the insertion set that
  would re-grow the deleted slot from X'.

Prior probabilities never enter the acceptance ratio.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .classifier import ACTIONS, PRIOR_MODES, build_prior, sample_action_position
from .corpus import BLANK, BOS_ID, EOS_ID
from .proposal import build_deletion_set, build_insertion_set, build_replacement_set


@dataclass(frozen=True)
class SentenceState:
    ids: tuple
    protected: tuple
    # infill mode: True on tokens that close a blank. None means every
    # position after BOS accepts insertions (constraint mode).
    anchors: tuple = None
    log_prob: float = 0.0

    @property
    def nll(self):
        return -self.log_prob / (len(self.ids) - 1)

    @property
    def content_length(self):
        return len(self.ids) - 2

    def can_insert(self, p):
        if p < 1 or p >= len(self.ids):
            return False
        if self.anchors is None:
            return True
        if self.anchors[p]:
            return True
        return p < len(self.ids) - 1 and not self.protected[p]

    def protected_tokens(self):
        return [t for t, f in zip(self.ids, self.protected) if f]

    def with_insert(self, p, token, log_prob):
        anchors = None if self.anchors is None else self.anchors[:p] + (False,) + self.anchors[p:]
        return SentenceState(self.ids[:p] + (token,) + self.ids[p:],
                             self.protected[:p] + (False,) + self.protected[p:],
                             anchors, log_prob)

    def with_replace(self, p, token, log_prob):
        return replace(self, ids=self.ids[:p] + (token,) + self.ids[p + 1:], log_prob=log_prob)

    def with_delete(self, p, log_prob):
        anchors = None if self.anchors is None else self.anchors[:p] + self.anchors[p + 1:]
        return SentenceState(self.ids[:p] + self.ids[p + 1:],
                             self.protected[:p] + self.protected[p + 1:],
                             anchors, log_prob)


@dataclass
class SamplerConfig:
    steps: int = 200
    k: int = 50
    prior: str = "classifier"
    actions: tuple = ("replace", "insert")
    max_length: int = 64
    generator: str = "flm_blm"
    seed: int = 0

    def __post_init__(self):
        self.actions = tuple(self.actions)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.actions or any(a not in ACTIONS for a in self.actions):
            raise ValueError("actions must be a non-empty subset of %s" % (ACTIONS,))
        if self.prior not in PRIOR_MODES:
            raise ValueError("prior must be one of %s" % (PRIOR_MODES,))


@dataclass
class Models:
    flm: object
    blm: object
    classifier: object = None


@dataclass
class ChainStep:
    t: int
    action: str
    position: int
    proposal: list  # proposed ids, framed
    acceptance: float
    alpha: float
    accepted: bool
    nll: float
    changed: bool = False  # accepted and the sentence actually moved

    def to_dict(self):
        return asdict(self)


@dataclass
class ChainResult:
    best: tuple
    best_nll: float
    trace: list
    acceptance: dict
    initial: tuple = ()

    def acceptance_rate(self, action, key="accepted"):
        """Fraction of proposals of ``action`` that were accepted (or, with
        ``key="changed"``, that moved the chain to a different sentence)."""
        a = self.acceptance.get(action)
        return a[key] / a["proposed"] if a and a["proposed"] else None


def init_state(flm, constraints=None, template=None, vocab=None):
    """Initial chain state from constraint ids or a Template (with vocab)."""
    if template is not None:
        if vocab is None:
            raise ValueError("a vocabulary is needed to encode a template")
        ids, prot, anchors = [BOS_ID], [False], [False]
        pending = False
        for item in template.items:
            if item == BLANK:
                pending = True
                continue
            ids.append(vocab.id(item))
            prot.append(True)
            anchors.append(pending)
            pending = False
        ids.append(EOS_ID)
        prot.append(False)
        anchors.append(pending)
        ids = tuple(ids)
        return SentenceState(ids, tuple(prot), tuple(anchors), flm.score(ids))
    if not constraints:
        raise ValueError("need a non-empty constraint set or a template")
    ids = (BOS_ID,) + tuple(constraints) + (EOS_ID,)
    prot = (False,) + (True,) * len(constraints) + (False,)
    return SentenceState(ids, prot, None, flm.score(ids))


def _draw_index(probs, u):
    c = np.cumsum(probs)
    return min(int(np.searchsorted(c, u * c[-1], side="right")), len(probs) - 1)


def step(state, models, config, rng, t=0):
    """One predict-and-revise transition. Returns (new_state, ChainStep).

    RNG use per step is fixed: two draws for (action, position), one for the
    candidate, one for alpha.
    """
    clf = models.classifier if config.prior != "uniform" else None
    if config.prior != "uniform" and clf is None:
        raise ValueError("prior mode %r needs a classifier" % config.prior)
    prior = build_prior(clf, state, config.actions)
    move = sample_action_position(prior, rng, config.prior)
    u_cand, alpha = rng.random(), rng.random()
    if move is None:
        return state, ChainStep(t, "none", -1, list(state.ids), 0.0, float(alpha), False,
                                state.nll)
    action, pos = move
    flm, blm = models.flm, models.blm

    if action == "replace":
        cands = build_replacement_set(flm, blm, state.ids, pos, config.k, state.protected,
                                      mode=config.generator)
        j = _draw_index(cands.probs, u_cand)
        new = state.with_replace(pos, cands.tokens[j], float(cands.log_probs[j]))
        acc = 1.0
    elif action == "insert":
        cands = build_insertion_set(flm, blm, state.ids, pos, config.k, mode=config.generator)
        j = _draw_index(cands.probs, u_cand)
        new = state.with_insert(pos, cands.tokens[j], float(cands.log_probs[j]))
        acc = min(1.0, math.exp(min(0.0, cands.log_total - state.log_prob)))
    else:
        cands = build_deletion_set(flm, state.ids, pos, state.protected)
        new = state.with_delete(pos, float(cands.log_probs[0]))
        back = build_insertion_set(flm, blm, new.ids, pos, config.k, mode=config.generator)
        acc = min(1.0, math.exp(min(0.0, new.log_prob - back.log_total)))

    if new.content_length > config.max_length:
        acc = 0.0
    accepted = alpha < acc
    nxt = new if accepted else state
    return nxt, ChainStep(t, action, int(pos), list(new.ids), float(acc), float(alpha),
                          bool(accepted), nxt.nll, bool(accepted and new.ids != state.ids))


def run_chain(state, models, config, rng=None):
    """Run ``config.steps`` transitions from ``state``; keep the lowest per-token NLL."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    trace = []
    counts = {a: {"proposed": 0, "accepted": 0, "changed": 0} for a in config.actions}
    best, best_nll = None, math.inf
    initial = state.ids
    for t in range(1, config.steps + 1):
        state, rec = step(state, models, config, rng, t)
        trace.append(rec)
        if rec.action in counts:
            counts[rec.action]["proposed"] += 1
            counts[rec.action]["accepted"] += int(rec.accepted)
            counts[rec.action]["changed"] += int(rec.changed)
        if state.nll < best_nll:
            best, best_nll = state.ids, state.nll
    return ChainResult(best, best_nll, trace, counts, initial)


_WORKER = {}


def _init_worker(models, config):
    _WORKER["models"], _WORKER["config"] = models, config


def _run_one(args):
    state, seed_seq = args
    return run_chain(state, _WORKER["models"], _WORKER["config"], np.random.default_rng(seed_seq))


def aggregate_acceptance(results, actions):
    """Pooled counts per action across chains.

    ``rate`` is accepted/proposed; ``effective_rate`` counts only accepted
    proposals that changed the sentence, which is what distinguishes
    replacement moves (their acceptance probability is always 1).
    """
    out = {}
    for a in actions:
        prop = sum(r.acceptance[a]["proposed"] for r in results)
        acc = sum(r.acceptance[a]["accepted"] for r in results)
        ch = sum(r.acceptance[a]["changed"] for r in results)
        out[a] = {"proposed": prop, "accepted": acc, "changed": ch,
                  "rate": acc / prop if prop else None,
                  "effective_rate": ch / prop if prop else None}
    return out


def run_batch(states, models, config, jobs=1, seed_seqs=None):
    """Independent chains, one per initial state.

    Chain i uses the i-th child of ``SeedSequence(config.seed)`` (or
    ``seed_seqs[i]``), so results do not depend on ``jobs``.
    """
    states = list(states)
    seqs = seed_seqs if seed_seqs is not None else \
        np.random.SeedSequence(config.seed).spawn(len(states))
    if len(seqs) != len(states):
        raise ValueError("need one seed sequence per chain")
    if jobs > 1 and len(states) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(models, config)) as ex:
            results = list(ex.map(_run_one, zip(states, seqs),
                                  chunksize=max(1, len(states) // (4 * jobs))))
    else:
        results = [run_chain(s, models, config, np.random.default_rng(q))
                   for s, q in zip(states, seqs)]
    return results, aggregate_acceptance(results, config.actions)
