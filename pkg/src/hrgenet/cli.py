"""Command-line surface: synth, train, eval, retrieve, gradcheck.

Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numeric failure.  Flags override config-file values, which override
defaults; the config file is flat ``key=value`` lines keyed by flag
destination names (e.g. ``epochs=5``).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import checkpoint, data
from .errors import (
    ConfigError,
    DataFormatError,
    EmptyInputError,
    HrgeError,
    LabelError,
    NumericError,
)
from .gradcheck import check_gradients
from .graph import VARIANT_NAMES, HrgeModel, hrge_forward
from .retrieval import build_index, evaluate_retrieval
from .training import Classifier, TrainConfig, evaluate_accuracy, predict_batch, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {line!r}")
            values[key.strip()] = value.strip()
    return values


def build_parser() -> _Parser:
    parser = _Parser(prog="hrgenet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="flat key=value config file; "
                        "flags take precedence over its entries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic HRGF dataset")
    p.add_argument("--mode", default="prototype",
                   choices=list(data.GENERATOR_KINDS))
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--views", type=int, default=12)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--fine-per-class", type=int, default=0)
    p.add_argument("--stride", type=int, default=2,
                   help="target model stride, for geometry validation")
    p.add_argument("--depth", type=int, default=None,
                   help="target hierarchy depth, for geometry validation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on an HRGF dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="full", choices=list(VARIANT_NAMES))
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=72)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr-decay-factor", type=float, default=0.5)
    p.add_argument("--lr-decay-period", type=int, default=20)
    p.add_argument("--use-fine-labels", action="store_true",
                   help="train against fine (sub-category) labels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="run directory")

    p = sub.add_parser("eval", help="evaluate classification accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="optional report path")

    p = sub.add_parser("retrieve", help="descriptor retrieval + metric suite")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True,
                   help="coarse-category model checkpoint")
    p.add_argument("--fine-checkpoint", default=None,
                   help="optional sub-category model for re-ranking")
    p.add_argument("--tau", type=float, default=math.inf,
                   help="distance threshold; results farther away are dropped")
    p.add_argument("--out", required=True, help="run directory")

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients by finite differences")
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--variant", default="full", choices=list(VARIANT_NAMES))
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--perturb", type=float, default=0.0,
                   help="corrupt one analytic gradient by this amount "
                   "(negative control)")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config_file(parser, argv):
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a path argument")
    values = _read_config_file(argv[idx + 1])
    for action in parser._subparsers._group_actions[0].choices.values():
        defaults = {}
        dests = {a.dest: a for a in action._actions}
        for key, value in values.items():
            if key in dests:
                a = dests[key]
                defaults[key] = (value if a.type is None
                                 else a.type(value))
        action.set_defaults(**defaults)
    return argv


def _validate_geometry(views, stride, depth):
    if depth is None:
        return
    if stride < 1 or depth < 0:
        raise ConfigError("stride must be >= 1 and depth >= 0")
    if views % (stride ** depth) != 0:
        raise ConfigError(
            f"{views} views are not divisible by stride^depth = "
            f"{stride ** depth}")


def _write_manifest(run_dir, args):
    os.makedirs(run_dir, exist_ok=True)
    skip = {"command", "config"}
    with open(os.path.join(run_dir, "manifest.txt"), "w") as f:
        f.write(f"command={args.command}\n")
        for key in sorted(vars(args)):
            if key in skip:
                continue
            f.write(f"{key}={getattr(args, key)}\n")


def _cmd_synth(args):
    _validate_geometry(args.views, args.stride, args.depth)
    spec = data.SyntheticSpec(
        num_classes=args.classes, shapes_per_class=args.per_class,
        num_views=args.views, dim=args.dim, noise=args.noise,
        kind=args.mode, seed=args.seed, fine_per_class=args.fine_per_class)
    dataset = data.generate_synthetic(spec)
    data.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} records to {args.out}")
    return EXIT_OK


def _relabel_fine(dataset):
    if dataset.num_fine_classes == 0:
        raise ConfigError("--use-fine-labels needs a dataset with fine labels")
    records = [data.ShapeRecord(id=r.id, views=r.views,
                                coarse_label=r.fine_label)
               for r in dataset.records]
    return data.FeatureDataset(records=records,
                               num_classes=dataset.num_fine_classes)


def _cmd_train(args):
    dataset = data.load_dataset(args.data)
    if args.use_fine_labels:
        dataset = _relabel_fine(dataset)
    model = HrgeModel(num_views=dataset.num_views, width=dataset.dim,
                      variant=args.variant, stride=args.stride,
                      depth=args.depth, seed=args.seed)
    classifier = Classifier(model.descriptor_length, dataset.num_classes,
                            seed=args.seed + 1)
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs,
                      learning_rate=args.lr, weight_decay=args.weight_decay,
                      lr_decay_factor=args.lr_decay_factor,
                      lr_decay_period=args.lr_decay_period, seed=args.seed)
    _write_manifest(args.out, args)
    log = train(model, classifier, dataset, cfg)
    log.save(os.path.join(args.out, "train.log"))
    ckpt = os.path.join(args.out, "checkpoint.hrgm")
    checkpoint.save_model(model, ckpt, classifier)
    final = log.epoch_records()[-1]
    print(f"trained {args.variant} for {args.epochs} epochs: "
          f"loss={final['loss']:.6f} acc={final['acc']:.4f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def accuracy_report_lines(per_instance, per_class):
    return [f"per_instance_acc={per_instance:.10g}",
            f"per_class_acc={per_class:.10g}"]


def parse_accuracy_report(text):
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if line:
            key, _, value = line.partition("=")
            values[key] = float(value)
    return values["per_instance_acc"], values["per_class_acc"]


def _cmd_eval(args):
    dataset = data.load_dataset(args.data)
    model, classifier = checkpoint.load_model(args.checkpoint)
    if classifier is None:
        raise ConfigError(f"{args.checkpoint} holds no classifier head")
    per_instance, per_class = evaluate_accuracy(model, classifier, dataset)
    lines = accuracy_report_lines(per_instance, per_class)
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w") as f:
            f.write("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_retrieve(args):
    dataset = data.load_dataset(args.data)
    model, _ = checkpoint.load_model(args.checkpoint)
    index = build_index(model, dataset)
    predict_fine = None
    if args.fine_checkpoint:
        fine_model, fine_clf = checkpoint.load_model(args.fine_checkpoint)
        if fine_clf is None:
            raise ConfigError(
                f"{args.fine_checkpoint} holds no classifier head")
        _, fine_preds = predict_batch(fine_model, fine_clf,
                                      [r.views for r in dataset.records])
        fine_by_id = dict(zip([r.id for r in dataset.records], fine_preds))
        predict_fine = fine_by_id.__getitem__
    report, ranked_lists = evaluate_retrieval(index, threshold=args.tau,
                                              predict_fine=predict_fine)
    _write_manifest(args.out, args)
    with open(os.path.join(args.out, "metrics.txt"), "w") as f:
        f.write("\n".join(report.to_lines()) + "\n")
    with open(os.path.join(args.out, "ranked.txt"), "w") as f:
        for ranked in ranked_lists:
            row = " ".join(f"{i}:{d:.8g}"
                           for i, d in zip(ranked.ids, ranked.distances))
            f.write(f"{ranked.query_id}\t{row}\n")
    print(report.render_table())
    return EXIT_OK


def _cmd_gradcheck(args):
    from . import autograd as ag
    from .layers import linear_forward

    _validate_geometry(args.views, args.stride,
                       args.depth if args.depth is not None else 0)
    rng = np.random.default_rng(args.seed)
    model = HrgeModel(num_views=args.views, width=args.dim,
                      variant=args.variant, stride=args.stride,
                      depth=args.depth, seed=args.seed)
    classifier = Classifier(model.descriptor_length, args.classes,
                            seed=args.seed + 1)
    views = rng.normal(size=(args.views, args.dim))
    label = np.array([int(rng.integers(args.classes))])

    def loss_fn():
        desc = hrge_forward(model, views).concat
        logits = linear_forward(classifier.head, ag.stack_rows([desc]))
        return ag.softmax_cross_entropy(logits, label)

    named = _named_parameters(model, classifier)
    for _, p in named:
        p.zero_grad()
    loss_fn().backward()
    if args.perturb:
        named[0][1].grad.ravel()[0] += args.perturb
    saved = [(name, p.grad.copy()) for name, p in named]
    report = {}
    from .gradcheck import numeric_gradient
    for (name, param), (_, analytic) in zip(named, saved):
        numeric = numeric_gradient(loss_fn, param)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
        report[name] = float(np.max(np.abs(analytic - numeric) / denom))
    failed = False
    for name, err in report.items():
        status = "ok" if err < args.tol else "FAIL"
        print(f"{status:4} {name:32} max_rel_err={err:.3e}")
        failed = failed or err >= args.tol
    if failed:
        print(f"gradient check FAILED at tolerance {args.tol:g}")
        return EXIT_NUMERIC
    print(f"gradient check passed at tolerance {args.tol:g}")
    return EXIT_OK


def _named_parameters(model, classifier):
    from .checkpoint import _blocks
    return _blocks(model, classifier)


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "retrieve": _cmd_retrieve,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, EmptyInputError, LabelError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError,) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HrgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
