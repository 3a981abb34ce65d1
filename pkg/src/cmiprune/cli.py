"""Command-line driver: extract, order, prune, retrain, report.

Flags map one-to-one onto RunConfig fields; `retrain` and `report` operate
on the output directory of an earlier `prune`.  Worker threads for
candidate scoring are capped by the CMIPRUNE_THREADS environment
variable.
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig
from .pipeline import run_extract, run_order, run_prune, run_report, run_retrain

_STRATEGY_ALIASES = {
    "per-layer": "per_layer",
    "per_layer": "per_layer",
    "full": "cross_full",
    "cross_full": "cross_full",
    "compact": "cross_compact",
    "cross_compact": "cross_compact",
}
_MODE_ALIASES = {"zero-weight": "zero_weight", "zero_weight": "zero_weight", "actual": "actual"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="run_out", help="output directory for artifacts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.01, help="entropy order parameter")
    p.add_argument("--kernel", choices=["rbf", "delta"], default="rbf")
    p.add_argument("--sigma", type=float, default=None, help="fixed RBF bandwidth (default: median heuristic)")
    p.add_argument("--features", default=None, metavar="DIR",
                   help="read features from a dump directory instead of the toy model")
    p.add_argument("--extract-batch", type=int, default=256)
    # toy harness knobs
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--train-samples", type=int, default=512)
    p.add_argument("--test-samples", type=int, default=256)
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--batch-norm", action="store_true")
    p.add_argument("--train-epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--model-dir", default=None, help="load toy weights instead of training")


def _add_prune_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=sorted(_STRATEGY_ALIASES), default="compact")
    p.add_argument("--cutoff", choices=["scree", "xmeans", "permutation"], default="scree")
    p.add_argument("--direction", choices=["forward", "bidirectional"], default="bidirectional")
    p.add_argument("--target-accuracy", type=float, default=None)
    p.add_argument("--accuracy-drop", type=float, default=None,
                   help="accuracy floor = full accuracy minus this (default 0.01)")
    p.add_argument("--mode", choices=sorted(_MODE_ALIASES), default="actual")
    p.add_argument("--K", type=int, default=3, dest="top_k", help="scree cutoff candidates")
    p.add_argument("--scree-fallback", choices=["max_index", "best_accuracy"], default="max_index")
    p.add_argument("--xmeans-k-init", type=int, default=1)
    p.add_argument("--xmeans-k-max", type=int, default=None)
    p.add_argument("--permutations", type=int, default=100)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--prune-last-layer", action="store_true",
                   help="allow pruning the final conv layer (zero-weight mode only)")
    p.add_argument("--stage1-masks", choices=["discard", "seed_trial_model"], default="discard")
    p.add_argument("--retrain-epochs", type=int, default=0)


def _config_from(args: argparse.Namespace) -> RunConfig:
    target = getattr(args, "target_accuracy", None)
    drop = getattr(args, "accuracy_drop", None)
    if target is None and drop is None:
        drop = 0.01
    return RunConfig(
        strategy=_STRATEGY_ALIASES[getattr(args, "strategy", "compact")],
        cutoff=getattr(args, "cutoff", "scree"),
        direction=getattr(args, "direction", "bidirectional"),
        target_accuracy=target,
        accuracy_drop=drop,
        mode=_MODE_ALIASES[getattr(args, "mode", "actual")],
        alpha=args.alpha,
        kernel=args.kernel,
        sigma=args.sigma,
        top_k=getattr(args, "top_k", 3),
        scree_fallback=getattr(args, "scree_fallback", "max_index"),
        xmeans_k_init=getattr(args, "xmeans_k_init", 1),
        xmeans_k_max=getattr(args, "xmeans_k_max", None),
        permutations=getattr(args, "permutations", 100),
        significance=getattr(args, "significance", 0.05),
        prune_last_layer=getattr(args, "prune_last_layer", False),
        stage1_masks=getattr(args, "stage1_masks", "discard"),
        source="dump" if args.features else "toy",
        features_dir=args.features,
        model_dir=args.model_dir,
        classes=args.classes,
        train_samples=args.train_samples,
        test_samples=args.test_samples,
        image_size=args.image_size,
        batch_norm=args.batch_norm,
        train_epochs=args.train_epochs,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        batch_size=args.batch_size,
        extract_batch=args.extract_batch,
        retrain_epochs=getattr(args, "retrain_epochs", 0),
        seed=args.seed,
        out_dir=args.out,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmiprune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="train the toy model and write its feature dump")
    _add_common(p)

    p = sub.add_parser("order", help="rank one layer's features and emit its score curve")
    _add_common(p)
    p.add_argument("--layer", type=int, default=None, help="1-based conv layer (default: all)")

    p = sub.add_parser("prune", help="run the full pruning pipeline")
    _add_common(p)
    _add_prune_flags(p)

    p = sub.add_parser("retrain", help="fine-tune the pruned model of a previous run")
    p.add_argument("--run", required=True, help="output directory of a prune run")
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("report", help="print the report of a previous run")
    p.add_argument("--run", required=True, help="output directory of a prune run")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "extract":
        result = run_extract(_config_from(args))
    elif args.command == "order":
        result = run_order(_config_from(args), args.layer)
    elif args.command == "prune":
        result = run_prune(_config_from(args))
    elif args.command == "retrain":
        result = run_retrain(args.run, args.epochs)
    else:
        result = run_report(args.run)
    if result.status != 0:
        print(f"error in stage {result.failed_stage}: {result.error}", file=sys.stderr)
    elif result.artifacts:
        for name, path in sorted(result.artifacts.items()):
            print(f"{name}: {path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
