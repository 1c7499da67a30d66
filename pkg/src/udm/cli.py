"""Command-line entry point: ``udm <subcommand> [flags]``.

Every subcommand accepts ``--config FILE``, a JSON object whose keys are
flag names (dashes or underscores); explicit flags override the file.
``UDM_LOG`` sets the log level (DEBUG, INFO, WARNING, ERROR; default WARNING).

Exit codes: 0 success, 1 internal failure, 2 user or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import vae as vae_mod
from .classifier import TrainSet, save_bundle, train_concept
from .dataset import (
    build_vocabulary,
    load_concept_categories,
    load_descriptions,
    load_features,
    load_stopwords,
)
from .errors import InvalidConfig, IoError, MissingCategoryManifest, NonFiniteLoss, UdmError
from .evaluate import (
    METHODS,
    ClassifierConfig,
    EvalProtocol,
    LeakageAudit,
    NegativeConfig,
    ablate,
    emit_ablation,
    emit_report,
    emit_table1,
    run_method,
)
from .negatives import (
    ALL_NONPOSITIVE,
    SEMANTIC_DISTANT,
    export_doc_vectors,
    negatives_all,
    negatives_semantic,
    train_pvdm,
)
from .synth import SynthConfig, generate

logger = logging.getLogger("udm")


class UsageError(UdmError):
    """Bad flag values or flag combinations."""


# -- argument helpers --------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _fraction_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated fractions, got {text!r}")
    if not vals or any(not 0.0 < v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError(f"fractions must lie in (0, 1], got {text!r}")
    return vals


def _range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of flag values; explicit flags win")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")


def _vae_flags(p: argparse.ArgumentParser, multi_dim: bool = False) -> None:
    g = p.add_argument_group("VAE")
    g.add_argument("--hidden-dim", type=int, default=500, help="encoder/decoder hidden units (default 500)")
    if multi_dim:
        g.add_argument("--latent-dim", type=_int_list, default=[50],
                       help="latent size, or a comma list such as 12,50,100 for one run per size "
                            "(default 50)")
    else:
        g.add_argument("--latent-dim", type=int, default=50, help="latent size d (default 50)")
    g.add_argument("--vae-lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    g.add_argument("--batch-size", type=int, default=32, help="minibatch size (default 32)")
    g.add_argument("--vae-epochs", type=int, default=300, help="training epochs (default 300)")
    g.add_argument("--embedding", choices=("mu_and_var", "mu_only"), default="mu_and_var",
                   help="classifier input: [mu; spread] or mu alone (default mu_and_var)")
    g.add_argument("--spread", choices=("var", "stddev"), default="var",
                   help="second half of the embedding (default var)")
    g.add_argument("--no-standardize", action="store_true",
                   help="feed raw features to the VAE instead of z-scores")


def _data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--features", type=Path, help="features CSV (instance_id,object_id,f0,...)")
    g.add_argument("--descriptions", type=Path, help="descriptions TSV (object_id<TAB>text)")
    g.add_argument("--language", default="en", help="language tag of the descriptions (default en)")
    g.add_argument("--manifest", type=Path, help="category manifest JSON: name -> [start, end)")
    g.add_argument("--concept-categories", type=Path,
                   help="JSON map concept -> category name(s), used for reporting and the "
                        "predefined_category baseline")
    g.add_argument("--stopwords", type=Path, help="stopword file, one word per line")
    g.add_argument("--min-count", type=int, default=2, help="minimum token count for a concept (default 2)")


def _negative_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("negatives")
    g.add_argument("--negatives", choices=(ALL_NONPOSITIVE, SEMANTIC_DISTANT), default=ALL_NONPOSITIVE,
                   help="negative-example strategy (default all_nonpositive)")
    g.add_argument("--ratio", type=float, default=None,
                   help="semantic_distant: negatives per positive (default 1.5)")
    g.add_argument("--aggregate", choices=("max", "centroid"), default=None,
                   help="semantic_distant: similarity to the positive set (default max)")
    g.add_argument("--pv-dim", type=int, default=50, help="paragraph-vector size (default 50)")
    g.add_argument("--pv-epochs", type=int, default=100, help="PV-DM epochs (default 100)")


def _classifier_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("classifier")
    g.add_argument("--l2", type=float, default=1e-3, help="L2 penalty on weights (default 1e-3)")
    g.add_argument("--clf-epochs", type=int, default=500, help="gradient-descent epochs (default 500)")
    g.add_argument("--clf-lr", type=float, default=0.1, help="gradient-descent step (default 0.1)")


def _eval_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("evaluation")
    g.add_argument("--folds", type=int, default=4, help="object-level folds (default 4)")
    g.add_argument("--trials", type=int, default=10, help="test draws per concept and fold (default 10)")
    g.add_argument("--pos-per-trial", type=_range, default=(3, 4), help="positive images per draw, LO,HI")
    g.add_argument("--neg-per-trial", type=_range, default=(4, 6), help="negative images per draw, LO,HI")
    g.add_argument("--threshold", type=float, default=0.5, help="decision threshold (default 0.5)")
    g.add_argument("--vae-data", choices=("all_train", "labeled"), default="all_train",
                   help="images used to pre-train the VAE when --train-fraction < 1 (default all_train)")
    g.add_argument("--jobs", type=int, default=1, help="folds evaluated concurrently (default 1)")
    g.add_argument("--audit", type=Path, help="write the leakage audit as JSON to this path")
    g.add_argument("--out", type=Path, required=False, help="output directory for report CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="udm", description="Concept grounding with a VAE embedding and per-concept classifiers.",
        epilog="Log verbosity is read from the UDM_LOG environment variable.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic dataset")
    _common(p)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--n-objects", type=int, default=72, help="objects (default 72)")
    p.add_argument("--images-per-object", type=int, default=4, help="images per object (default 4)")
    p.add_argument("--dim", type=int, default=120, help="feature dimension D (default 120)")
    p.add_argument("--noise", type=float, default=0.2, help="annotation noise (default 0.2)")
    p.add_argument("--descriptions-per-object", type=int, default=SynthConfig.descriptions_per_object,
                   help=f"descriptions per object (default {SynthConfig.descriptions_per_object})")
    p.add_argument("--separation", type=float, default=SynthConfig.separation,
                   help=f"distance of concept centres from the origin (default {SynthConfig.separation})")
    p.add_argument("--scale-decades", type=float, default=SynthConfig.scale_decades,
                   help=f"spread of per-column units in decades (default {SynthConfig.scale_decades})")
    p.add_argument("--classes", type=int, default=SynthConfig.n_classes,
                   help=f"object classes (default {SynthConfig.n_classes})")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train-vae", help="train a VAE on a feature file")
    _common(p)
    p.add_argument("--features", type=Path, help="features CSV")
    p.add_argument("--out", type=Path, help="model JSON to write")
    _vae_flags(p)
    p.set_defaults(handler=cmd_train_vae)

    p = sub.add_parser("embed", help="write latent embeddings of a feature file")
    _common(p)
    p.add_argument("--model", type=Path, help="trained model JSON")
    p.add_argument("--features", type=Path, help="features CSV")
    p.add_argument("--out", type=Path, help="embedding CSV to write")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("train-concepts", help="fit one classifier per concept on all objects")
    _common(p)
    _data_flags(p)
    p.add_argument("--model", type=Path,
                   help="trained VAE; classifiers use its embedding (omit for raw features)")
    _negative_flags(p)
    _classifier_flags(p)
    p.add_argument("--doc-vectors", type=Path, help="semantic_distant: also write paragraph vectors CSV")
    p.add_argument("--out", type=Path, help="classifier bundle JSON to write")
    p.set_defaults(handler=cmd_train_concepts)

    p = sub.add_parser("evaluate", help="cross-validated evaluation of one method")
    _common(p)
    p.add_argument("--method", choices=METHODS, default="udm", help="method to evaluate (default udm)")
    p.add_argument("--train-fraction", type=float, default=1.0,
                   help="share of training objects that keep their labels (default 1.0)")
    _data_flags(p)
    _vae_flags(p, multi_dim=True)
    _negative_flags(p)
    _classifier_flags(p)
    _eval_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluation over several labelled-data fractions")
    _common(p)
    p.add_argument("--method", default="udm",
                   help="method or comma list of methods (default udm)")
    p.add_argument("--fractions", type=_fraction_list, default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
                   help="comma list of training fractions (default 0.1,...,0.7)")
    _data_flags(p)
    _vae_flags(p)
    _negative_flags(p)
    _classifier_flags(p)
    _eval_flags(p)
    p.set_defaults(handler=cmd_ablate)
    return parser


# -- config file merging -----------------------------------------------------

def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv) -> argparse.Namespace:
    """Parse ``argv`` with ``--config`` values as defaults under explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        doc = json.loads(args.config.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{args.config}: expected a JSON object")
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise InvalidConfig(f"{args.config}: unknown option {key!r} for {args.command}")
        action = actions[dest]
        # file values go through the flag's own converter
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if action.type is not None and value is not None:
            try:
                value = action.type(value if action.type in (int, float) else str(value))
            except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
                raise InvalidConfig(f"{args.config}: bad value for {key!r}: {exc}") from exc
        if action.choices is not None and value not in action.choices:
            raise InvalidConfig(f"{args.config}: {key!r} must be one of {sorted(action.choices)}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- shared loading ------------------------------------------------------------

def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise IoError(f"no such file: {p}")


def _check_negative_flags(args) -> None:
    if args.negatives != SEMANTIC_DISTANT and (args.ratio is not None or args.aggregate is not None):
        raise UsageError("--ratio and --aggregate only apply to --negatives semantic_distant")


def _negative_config(args) -> NegativeConfig:
    return NegativeConfig(strategy=args.negatives,
                          ratio=1.5 if args.ratio is None else args.ratio,
                          aggregate=args.aggregate or "max", m=args.pv_dim, epochs=args.pv_epochs)


def _vae_config(args, input_dim: int, latent_dim: int | None = None) -> vae_mod.VaeConfig:
    if latent_dim is None:
        latent_dim = args.latent_dim[0] if isinstance(args.latent_dim, list) else args.latent_dim
    return vae_mod.VaeConfig(
        input_dim=input_dim, hidden_dim=args.hidden_dim,
        latent_dim=latent_dim,
        learning_rate=args.vae_lr, batch_size=args.batch_size, epochs=args.vae_epochs,
        seed=args.seed, standardize=not args.no_standardize, embedding=args.embedding,
        spread=args.spread)


def _load_text_data(args):
    """Features, corpus, vocabulary and concept categories named by the data flags."""
    _require(args, "features", "descriptions")
    _require_files(args.features, args.descriptions, args.manifest, args.concept_categories,
                   args.stopwords)
    features = load_features(args.features, args.manifest)
    corpus = load_descriptions(args.descriptions, args.language)
    stop = load_stopwords(args.stopwords) if args.stopwords else None
    vocab = build_vocabulary(corpus, args.min_count, stop)
    cats = load_concept_categories(args.concept_categories) if args.concept_categories else None
    logger.info("%d images, %d objects, %d concepts", len(features), len(features.objects), len(vocab))
    return features, corpus, vocab, cats


def _protocol(args) -> EvalProtocol:
    return EvalProtocol(k=args.folds, trials=args.trials, pos_per_trial=tuple(args.pos_per_trial),
                        neg_per_trial=tuple(args.neg_per_trial), threshold=args.threshold,
                        seed=args.seed)


def _check_eval_flags(args) -> None:
    _require(args, "out")
    _check_negative_flags(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    methods = args.method if isinstance(args.method, list) else [args.method]
    if "udm" not in methods:
        vae_defaults = {"hidden_dim": 500, "vae_lr": 1e-3, "batch_size": 32, "vae_epochs": 300,
                        "embedding": "mu_and_var", "spread": "var", "no_standardize": False,
                        "vae_data": "all_train"}
        changed = [k for k, v in vae_defaults.items() if getattr(args, k) != v]
        ld = args.latent_dim if isinstance(args.latent_dim, list) else [args.latent_dim]
        if ld != [50]:
            changed.append("latent_dim")
        if changed:
            raise UsageError("VAE options ({}) only apply to --method udm".format(
                ", ".join("--" + c.replace("_", "-") for c in changed)))
    if "predefined_category" in methods and (args.manifest is None or args.concept_categories is None):
        raise MissingCategoryManifest(
            "predefined_category needs --manifest and --concept-categories")


def _write_audit(audit: LeakageAudit, path: Path) -> None:
    doc = {"violations": [{"fold": f, "stage": s, "objects": o} for f, s, o in audit.violations()],
           "events": [{"fold": f, "stage": s, "n_objects": len(o)} for f, s, o in audit.events],
           "stages": sorted(audit.stages_seen())}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write audit {path}: {exc}") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    _require(args, "out")
    cfg = SynthConfig(n_objects=args.n_objects, images_per_object=args.images_per_object, D=args.dim,
                      annotation_noise=args.noise, descriptions_per_object=args.descriptions_per_object,
                      seed=args.seed, separation=args.separation, scale_decades=args.scale_decades,
                      n_classes=args.classes)
    res = generate(cfg, args.out)
    for path in res.paths.values():
        print(path)
    return 0


def cmd_train_vae(args) -> int:
    _require(args, "features", "out")
    _require_files(args.features)
    features = load_features(args.features)
    cfg = _vae_config(args, features.dim)
    print(f"hidden_dim={cfg.hidden_dim} latent_dim={cfg.latent_dim} epochs={cfg.epochs} "
          f"batch_size={cfg.batch_size} lr={cfg.learning_rate:g}")
    model = vae_mod.train(features, cfg)
    vae_mod.save_model(model, args.out)
    if model.history:
        print(f"epoch 1 loss {model.history[0]['loss']:.4f}")
        print(f"epoch {len(model.history)} loss {model.history[-1]['loss']:.4f}")
    print(args.out)
    return 0


def cmd_embed(args) -> int:
    _require(args, "model", "features", "out")
    _require_files(args.model, args.features)
    model = vae_mod.load_model(args.model)
    features = load_features(args.features)
    Z = vae_mod.embed(model, features.X)
    try:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["instance_id", "object_id"] + [f"z{j}" for j in range(Z.shape[1])])
            for iid, oid, row in zip(features.instance_ids, features.object_ids, Z):
                w.writerow([iid, oid] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write embeddings {args.out}: {exc}") from exc
    print(args.out)
    return 0


def cmd_train_concepts(args) -> int:
    _require(args, "out")
    _check_negative_flags(args)
    if args.doc_vectors is not None and args.negatives != SEMANTIC_DISTANT:
        raise UsageError("--doc-vectors needs --negatives semantic_distant")
    _require_files(args.model)
    features, corpus, vocab, _ = _load_text_data(args)
    if args.model is not None:
        model = vae_mod.load_model(args.model)
        X, kind = vae_mod.embed(model, features.X), "latent"
    else:
        X, kind = features.X, "raw"
    objects = features.objects
    neg_cfg = _negative_config(args)
    pv = None
    if neg_cfg.strategy == SEMANTIC_DISTANT:
        pv = train_pvdm(corpus, neg_cfg.m, neg_cfg.window, neg_cfg.neg_k, neg_cfg.epochs, args.seed,
                        neg_cfg.lr)
        if args.doc_vectors is not None:
            export_doc_vectors(pv, args.doc_vectors)
    classifiers = []
    for concept in vocab.tokens:
        pos = vocab.positives(concept) & set(objects)
        if not pos:
            logger.warning("concept %r has no objects with features; skipped", concept)
            continue
        if pv is not None:
            negs = negatives_semantic(concept, vocab, pv, neg_cfg.ratio, neg_cfg.aggregate, objects)
        else:
            negs = negatives_all(concept, vocab, objects)
        ts = TrainSet(X[features.object_mask(pos)], X[features.object_mask(negs.object_ids)])
        classifiers.append(train_concept(ts, args.l2, args.clf_epochs, args.clf_lr,
                                         concept=concept, input_kind=kind))
    save_bundle(classifiers, args.out)
    print(f"{len(classifiers)} classifiers -> {args.out}")
    return 0


def _run_kwargs(args, features, cats, latent_dim=None):
    return dict(vae_cfg=_vae_config(args, features.dim, latent_dim), neg_cfg=_negative_config(args),
                clf_cfg=ClassifierConfig(args.l2, args.clf_epochs, args.clf_lr),
                concept_categories=cats, jobs=args.jobs, vae_data=args.vae_data)


def cmd_evaluate(args) -> int:
    _check_eval_flags(args)
    if not 0.0 < args.train_fraction <= 1.0:
        raise UsageError("--train-fraction must lie in (0, 1]")
    features, corpus, vocab, cats = _load_text_data(args)
    protocol = _protocol(args)
    audit = LeakageAudit() if args.audit else None
    dims = args.latent_dim if args.method == "udm" else [None]
    reports = {}
    for d in dims:
        report = run_method(args.method, features, corpus, vocab, protocol,
                            train_fraction=args.train_fraction, audit=audit,
                            **_run_kwargs(args, features, cats, d))
        out = args.out if len(dims) == 1 else args.out / f"dim{d}"
        paths = emit_report(report, out)
        print(paths["summary"])
        reports[f"Dim {d}" if d is not None else args.method] = report
    if len(dims) > 1:
        print(emit_table1(reports, args.out / "table1.csv"))
    if audit is not None:
        _write_audit(audit, args.audit)
        if audit.violations():
            logger.error("leakage audit found %d violations", len(audit.violations()))
            return 1
    return 0


def cmd_ablate(args) -> int:
    args.method = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in args.method:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    _check_eval_flags(args)
    features, corpus, vocab, cats = _load_text_data(args)
    protocol = _protocol(args)
    audit = LeakageAudit() if args.audit else None
    results = []
    for method in args.method:
        res = ablate(method, args.fractions, features, corpus, vocab, protocol, audit=audit,
                     **_run_kwargs(args, features, cats))
        for frac, report in zip(res.fractions, res.reports):
            emit_report(report, args.out / method / f"fraction_{frac:g}")
        results.append(res)
    print(emit_ablation(results, args.out))
    if audit is not None:
        _write_audit(audit, args.audit)
        if audit.violations():
            return 1
    return 0


def _configure_logging() -> None:
    level_name = os.environ.get("UDM_LOG", "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    try:
        args = parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:  # argparse: --help exits 0, usage errors exit 2
        return int(exc.code or 0)
    except NonFiniteLoss as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (UdmError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort report for internal failures
        logger.exception("internal failure")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main_exit() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
