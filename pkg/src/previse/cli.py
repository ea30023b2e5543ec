"""Command-line pipeline: train-lm, gen-synth, train-classifier, generate, infill, evaluate.

Every command reads one key = value config file (``--config``) whose entries
can be overridden by flags. Primary outputs are byte-identical across reruns
with the same config and seed.
"""

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .classifier import (ACTIONS, LABEL_NAMES, PRIOR_MODES, SynthConfig, TokenClassifier,
                         TrainParams, evaluate_classifier, gen_synthetic, load_synthetic,
                         majority_baseline, save_synthetic, split_synthetic,
                         train_classifier)
from .corpus import (BLANK, N_SPECIAL, SPECIALS, FormatError, Vocabulary, build_vocab,
                     load_corpus, make_constraint_sets, make_templates, parse_template,
                     read_lines, tokenize)
from .metrics import assemble_report
from .ngram import NGramLM, eval_nll, frame, nll_per_token, train_lm
from .proposal import MODES
from .sampler import Models, SamplerConfig, init_state, run_batch

log = logging.getLogger("previse")


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1
    train: str = "data/mini/train.txt"
    heldout: str = "data/mini/valid.txt"
    test: str = "data/mini/test.txt"
    eval_corpus: str = "data/mini/valid.txt"
    model_dir: str = "models"
    vocab_size: int = 5000
    order: int = 3
    discount: float = 0.75
    synth_valid_ratio: float = 0.1
    synth_top_n: int = 20
    synth_mix: float = 30 / 36
    synth_min_edits: int = 1
    synth_max_edits: int = 3
    synth_crop_prob: float = 0.5
    synth_min_segment: int = 3
    clf_radius: int = 3
    clf_buckets: int = 1 << 14
    clf_epochs: int = 6
    clf_batch_size: int = 256
    clf_lr: float = 0.1
    clf_l2: float = 1e-6
    clf_patience: int = 2
    clf_lm_features: bool = True
    steps: int = 200
    k: int = 50
    prior: str = "classifier"
    actions: tuple = ("replace", "insert")
    max_length: int = 64
    generator: str = "flm_blm"
    trace: bool = False
    bleu_n: int = 0
    self_bleu_n: int = 4
    distinct_n: int = 2
    entropy_n: int = 4

    def __post_init__(self):
        if isinstance(self.actions, str):
            self.actions = tuple(a.strip() for a in self.actions.split(",") if a.strip())
        self.actions = tuple(self.actions)
        if self.prior not in PRIOR_MODES:
            raise ValueError("prior must be one of %s" % ", ".join(PRIOR_MODES))
        if any(a not in ACTIONS for a in self.actions):
            raise ValueError("actions must be drawn from %s" % ", ".join(ACTIONS))
        if self.generator not in MODES:
            raise ValueError("generator must be one of %s" % ", ".join(MODES))
        if not 0.0 < self.synth_valid_ratio < 1.0:
            raise ValueError("synth_valid_ratio must lie in (0, 1)")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["actions"] = list(self.actions)
        return d

    @property
    def hash(self):
        """Hash of every setting that can change an output (``jobs`` cannot)."""
        d = self.to_dict()
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def path(self, name):
        return os.path.join(self.model_dir, name)

    def synth_config(self):
        return SynthConfig(top_n=self.synth_top_n, mix=self.synth_mix,
                           min_edits=self.synth_min_edits, max_edits=self.synth_max_edits,
                           crop_prob=self.synth_crop_prob, min_segment=self.synth_min_segment,
                           seed=self.seed)

    def train_params(self):
        return TrainParams(radius=self.clf_radius, buckets=self.clf_buckets,
                           epochs=self.clf_epochs, batch_size=self.clf_batch_size,
                           lr=self.clf_lr, l2=self.clf_l2, patience=self.clf_patience,
                           lm_features=self.clf_lm_features, seed=self.seed)

    def sampler_config(self):
        return SamplerConfig(steps=self.steps, k=self.k, prior=self.prior, actions=self.actions,
                             max_length=self.max_length, generator=self.generator,
                             seed=self.seed)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, value):
    if key not in _TYPES:
        raise ValueError("unknown config key %r" % key)
    kind = _TYPES[key]
    value = value.strip()
    if kind is bool:
        states = configparser.ConfigParser.BOOLEAN_STATES
        if value.lower() not in states:
            raise ValueError("%s: expected a boolean, got %r" % (key, value))
        return states[value.lower()]
    if kind is tuple:
        return value
    return kind(value)


def read_config(path=None, overrides=()):
    """RunConfig from an optional key = value file plus ``(key, value)`` overrides."""
    values = {}
    if path:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            with open(path, encoding="utf-8") as f:
                cp.read_string("[run]\n" + f.read(), source=path)
        except configparser.Error as e:
            raise ValueError("%s: %s" % (path, e)) from None
        for key, value in cp["run"].items():
            values[key] = _convert(key, value)
    for key, value in overrides:
        values[key] = _convert(key, value)
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# artifacts

def load_vocab(cfg):
    return Vocabulary.load(cfg.path("vocab.txt"))


def load_lms(cfg, vocab):
    flm = NGramLM.load(cfg.path("flm.lm"), vocab)
    blm = NGramLM.load(cfg.path("blm.lm"), vocab)
    return flm, blm


def load_models(cfg, vocab, need_classifier):
    flm, blm = load_lms(cfg, vocab)
    clf = None
    if need_classifier:
        clf = TokenClassifier.load(cfg.path("classifier.clf"), vocab, lms=(flm, blm))
    return Models(flm, blm, clf)


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def _read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _input_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


# ---------------------------------------------------------------------------
# commands

def cmd_train_lm(cfg, args):
    train = read_lines(cfg.train)
    if not train:
        raise ValueError("%s: empty corpus" % cfg.train)
    vocab = build_vocab(train, cfg.vocab_size)
    ids = [vocab.encode(s) for s in train]
    os.makedirs(cfg.model_dir, exist_ok=True)
    vocab.save(cfg.path("vocab.txt"))
    heldout = load_corpus(cfg.heldout, vocab, "heldout")
    for direction, name in (("forward", "flm.lm"), ("backward", "blm.lm")):
        lm = train_lm(ids, vocab, cfg.order, direction, cfg.discount)
        lm.save(cfg.path(name))
        print("%-8s order=%d  held-out NLL %.4f" % (direction, cfg.order, eval_nll(lm, heldout)))
    print("vocabulary %d types (hash %s) -> %s" % (len(vocab), vocab.hash, cfg.model_dir))
    return 0


def cmd_gen_synth(cfg, args):
    vocab = load_vocab(cfg)
    flm, blm = load_lms(cfg, vocab)
    train = [vocab.encode(s) for s in read_lines(cfg.train)]
    data = gen_synthetic(train, flm, blm, cfg.synth_config(), len(vocab), jobs=cfg.jobs)
    train_part, valid_part = split_synthetic(data, cfg.synth_valid_ratio)
    save_synthetic(cfg.path("synth_train.txt"), train_part, vocab)
    save_synthetic(cfg.path("synth_valid.txt"), valid_part, vocab)
    counts = np.bincount(np.concatenate([ex.labels for ex in data]), minlength=4)
    print("%d examples (%d train, %d valid); label counts %s"
          % (len(data), len(train_part), len(valid_part),
             ", ".join("%s=%d" % (n, c) for n, c in zip(LABEL_NAMES, counts))))
    return 0


def format_f1_table(report):
    rows = ["%-8s %7s %7s %7s" % ("", "P", "R", "F1")]
    for name in LABEL_NAMES + ("macro",):
        r = report[name]
        rows.append("%-8s %7.3f %7.3f %7.3f" % (name, r["p"], r["r"], r["f1"]))
    return "\n".join(rows)


def cmd_train_classifier(cfg, args):
    vocab = load_vocab(cfg)
    lms = load_lms(cfg, vocab)
    train = load_synthetic(cfg.path("synth_train.txt"), vocab)
    valid = load_synthetic(cfg.path("synth_valid.txt"), vocab)
    clf = train_classifier(train, len(vocab), cfg.train_params(), valid=valid,
                           vocab_hash=vocab.hash, lms=lms,
                           log=lambda e: log.info("epoch %(epoch)d  loss %(train_loss).4f  "
                                                  "valid macro-F1 %(valid_macro_f1).4f", e))
    clf.save(cfg.path("classifier.clf"))
    report = evaluate_classifier(clf, valid)
    base = majority_baseline(valid)
    report["majority_macro_f1"] = base["macro"]["f1"]
    report["history"] = clf.history
    with open(cfg.path("classifier_report.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    print(format_f1_table(report))
    print("majority-class macro-F1 %.3f" % base["macro"]["f1"])
    return 0


def _acceptance_summary(result):
    out = {}
    for a, c in sorted(result.acceptance.items()):
        p = c["proposed"]
        out[a] = dict(c, rate=c["accepted"] / p if p else None,
                      effective_rate=c["changed"] / p if p else None)
    return out


def _run_inputs(cfg, lines, parse, kind, output):
    """Shared body of generate / infill: parse every line, run valid ones, emit records."""
    vocab = load_vocab(cfg)
    models = load_models(cfg, vocab, cfg.prior != "uniform")
    scfg = cfg.sampler_config()
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(lines))
    records, states, keep = [None] * len(lines), [], []
    for i, line in enumerate(lines):
        rec = {"index": i, kind: line.strip()}
        try:
            states.append(parse(line, vocab, models.flm))
            keep.append(i)
        except ValueError as e:
            rec["error"] = str(e)
        records[i] = rec
    results, agg = run_batch(states, models, scfg, jobs=cfg.jobs,
                             seed_seqs=[seqs[i] for i in keep])
    for i, res in zip(keep, results):
        rec = records[i]
        rec.update(output=" ".join(vocab.decode(res.best[1:-1])), nll=res.best_nll,
                   steps=scfg.steps, prior=scfg.prior, acceptance=_acceptance_summary(res),
                   seed=cfg.seed, config_hash=cfg.hash)
        if cfg.trace:
            trace = []
            for s in res.trace:
                d = s.to_dict()
                d["proposal"] = " ".join(vocab.decode(d["proposal"][1:-1]))
                trace.append(d)
            rec["trace"] = trace
    _write_jsonl(output, records)
    n_err = len(lines) - len(keep)
    rates = ", ".join("%s %.3f" % (a, v["rate"]) for a, v in agg.items() if v["rate"] is not None)
    print("%d records (%d errors) -> %s; acceptance %s"
          % (len(lines), n_err, output, rates or "n/a"))
    return 0


def _parse_constraints(line, vocab, flm):
    toks = tokenize(line)
    if not toks:
        raise ValueError("empty constraint set")
    bad = [t for t in toks if t not in vocab or vocab.id(t) < N_SPECIAL]
    if bad:
        raise ValueError("out-of-vocabulary constraint token(s): %s" % " ".join(bad))
    return init_state(flm, constraints=vocab.encode(toks))


def _parse_template(line, vocab, flm):
    if not line.strip():
        raise ValueError("malformed template: empty line")
    t = parse_template(line)
    bad = [w for w in t.fixed if w not in vocab or w in SPECIALS]
    if bad:
        raise ValueError("malformed template: unknown token(s) %s" % " ".join(bad))
    return init_state(flm, template=t, vocab=vocab)


def cmd_generate(cfg, args):
    return _run_inputs(cfg, _input_lines(args.inputs), _parse_constraints, "constraints",
                       args.output)


def cmd_infill(cfg, args):
    return _run_inputs(cfg, _input_lines(args.inputs), _parse_template, "template",
                       args.output)


def cmd_evaluate(cfg, args):
    records = _read_jsonl(args.results)
    ok = [r for r in records if "error" not in r]
    if not ok:
        raise ValueError("%s: no successful records to evaluate" % args.results)
    infill = "template" in ok[0]
    vocab = load_vocab(cfg)
    eval_lm = train_lm(load_corpus(cfg.eval_corpus, vocab, "eval"), vocab, cfg.order,
                       "forward", cfg.discount)
    hyps = [tokenize(r["output"]) for r in ok]
    nlls = [nll_per_token(eval_lm, frame(vocab.encode(h))) for h in hyps]
    refs = None
    if args.references:
        lines = _input_lines(args.references)
        short = [r["index"] for r in ok if r["index"] >= len(lines)]
        if short:
            raise ValueError("%s has %d lines but results reference input line %d"
                             % (args.references, len(lines), short[0] + 1))
        refs = [tokenize(lines[r["index"]]) for r in ok]
    rep = assemble_report(hyps, nlls=nlls, references=refs, infill=infill,
                          bleu_n=cfg.bleu_n or None, self_bleu_n=cfg.self_bleu_n,
                          distinct_n_=cfg.distinct_n, entropy_n_=cfg.entropy_n)
    seeds = sorted({r.get("seed") for r in ok})
    hashes = sorted({r.get("config_hash") for r in ok})
    extra = {"results": os.path.basename(args.results), "errors": len(records) - len(ok),
             "generation_seed": seeds[0] if len(seeds) == 1 else seeds,
             "generation_config_hash": hashes[0] if len(hashes) == 1 else hashes,
             "seed": cfg.seed, "config_hash": cfg.hash, "infill": infill}
    with open(args.output + ".json", "w", encoding="utf-8") as f:
        f.write(rep.to_json(**extra) + "\n")
    text = rep.to_text() + "seed %s  config %s\n" % (cfg.seed, cfg.hash)
    with open(args.output + ".txt", "w", encoding="utf-8") as f:
        f.write(text)
    sys.stdout.write(text)
    return 0


def cmd_make_inputs(cfg, args):
    """Constraint sets or infill templates (plus references) from the test split."""
    if args.kind == "constraints":
        vocab = load_vocab(cfg)
        corpus = load_corpus(cfg.test, vocab, "test")
        sets = make_constraint_sets(corpus, args.num_keywords, args.n, cfg.seed)
        lines = [" ".join(vocab.decode(s)) for s in sets]
        refs = None
    else:
        sents = read_lines(cfg.test)
        pairs = make_templates(sents, args.strategy, args.ratio, cfg.seed)[:args.n]
        lines = [str(t) for t, _ in pairs]
        refs = [" ".join(src) for _, src in pairs]
    with open(args.output, "w", encoding="utf-8") as f:
        f.write("".join(line + "\n" for line in lines))
    if refs is not None:
        root, ext = os.path.splitext(args.output)
        with open(root + ".ref" + ext, "w", encoding="utf-8") as f:
            f.write("".join(r + "\n" for r in refs))
    print("%d %s -> %s" % (len(lines), args.kind, args.output))
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes for chains / synthetic data")
    common.add_argument("--prior", choices=PRIOR_MODES)
    common.add_argument("--steps", type=int)
    common.add_argument("--k", type=int, help="candidate set size K")
    common.add_argument("--actions", help="comma-separated subset of %s" % ",".join(ACTIONS))
    common.add_argument("--trace", action="store_true", default=None,
                        help="store the full chain trace in each record")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="previse", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train-lm", parents=[common], help="train forward/backward LMs + vocabulary")
    sub.add_parser("gen-synth", parents=[common], help="create the synthetic edit dataset")
    sub.add_parser("train-classifier", parents=[common], help="train the action classifier")
    for name, what in (("generate", "constraint sets, one per line"),
                       ("infill", "templates with %s blanks, one per line" % BLANK)):
        s = sub.add_parser(name, parents=[common], help="run chains on " + what)
        s.add_argument("inputs", help=what)
        s.add_argument("-o", "--output", required=True, help="results JSONL")
    s = sub.add_parser("evaluate", parents=[common], help="metrics over a results file")
    s.add_argument("results")
    s.add_argument("--references", help="one reference per input line")
    s.add_argument("-o", "--output", required=True, help="report prefix (.json and .txt)")
    s = sub.add_parser("make-inputs", parents=[common],
                       help="constraint sets or templates from the test split")
    s.add_argument("kind", choices=("constraints", "templates"))
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--num-keywords", type=int, default=4)
    s.add_argument("--strategy", choices=("middle", "random"), default="middle")
    s.add_argument("--ratio", type=float, default=0.5)
    return p


COMMANDS = {
    "train-lm": cmd_train_lm,
    "gen-synth": cmd_gen_synth,
    "train-classifier": cmd_train_classifier,
    "generate": cmd_generate,
    "infill": cmd_infill,
    "evaluate": cmd_evaluate,
    "make-inputs": cmd_make_inputs,
}


def config_from_args(args):
    overrides = []
    for item in args.set:
        if "=" not in item:
            raise ValueError("--set expects KEY=VALUE, got %r" % item)
        overrides.append(tuple(item.split("=", 1)))
    for key in ("seed", "jobs", "prior", "steps", "k", "actions", "trace"):
        v = getattr(args, key)
        if v is not None:
            overrides.append((key, str(v)))
    return read_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (OSError, FormatError, ValueError) as e:
        print("previse %s: error: %s" % (args.command, e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
