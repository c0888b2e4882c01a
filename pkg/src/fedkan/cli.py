"""Command line entry point: ``fedkan run | compare | inspect``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment
from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, FedKanError, NumericError

_CATEGORY = {ConfigError: "config", DataError: "data", NumericError: "numeric"}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags given here win over it")
    p.add_argument("--data", dest="data_path", help="CSV dataset (default: $FKAN_DATA_DIR/iris.csv or bundled Iris)")
    p.add_argument("--no-header", dest="header", action="store_const", const=False, help="CSV has no header row")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--clients", dest="n_clients", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--parallel", type=int, help="worker threads for client training (default: one per client)")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--aggregation", choices=("sample_weighted", "uniform"))
    p.add_argument("-v", "--verbose", action="store_true", help="log per-round metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedkan", description="Federated KAN / MLP simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one model kind and write metrics, summary and checkpoint")
    _add_run_flags(p_run)
    p_run.add_argument("--model", choices=("kan", "mlp"))

    p_cmp = sub.add_parser("compare", help="train KAN and MLP on identical shards")
    _add_run_flags(p_cmp)

    p_ins = sub.add_parser("inspect", help="validate a checkpoint and print its tensors")
    p_ins.add_argument("checkpoint", help="path to the checkpoint manifest (.json)")
    return parser


_OVERRIDES = (
    "data_path", "header", "seed", "out_dir", "n_clients", "rounds", "steps",
    "parallel", "learning_rate", "test_fraction", "aggregation", "model",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.override(**{k: getattr(args, k, None) for k in _OVERRIDES})


def inspect_checkpoint(path: str, out=None) -> int:
    out = out or sys.stdout
    if not path:
        raise ConfigError("inspect needs a checkpoint path")
    params, meta = load_checkpoint(Path(path))
    if meta:
        print("metadata: " + ", ".join(f"{k}={v}" for k, v in meta.items()), file=out)
    width = max((len(n) for n in params), default=4)
    print(f"{'name':<{width}}  {'shape':<14} {'count':>7}  {'l2 norm':>12}", file=out)
    for name, values in params.items():
        shape = "x".join(map(str, values.shape)) or "scalar"
        print(f"{name:<{width}}  {shape:<14} {values.size:>7}  {np.linalg.norm(values):>12.6f}", file=out)
    total = params.num_parameters()
    print(f"total parameters: {total}", file=out)
    return total


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "inspect":
            inspect_checkpoint(args.checkpoint)
            return 0
        cfg = resolve_config(args)
        if args.command == "run":
            summary = experiment.run(cfg)
            test = summary["final"]["test"]
            print(
                f"{summary['model']}: final test accuracy {test['accuracy']:.4f}, "
                f"loss {test['loss']:.4f}, {summary['wall_clock_seconds']:.2f}s -> {cfg.out_dir}"
            )
        else:
            summary = experiment.compare(cfg)
            c = summary["comparison"]
            print(
                f"kan: test accuracy {c['kan_final_test_accuracy']:.4f} in {c['kan_wall_clock_seconds']:.2f}s | "
                f"mlp: test accuracy {c['mlp_final_test_accuracy']:.4f} in {c['mlp_wall_clock_seconds']:.2f}s "
                f"-> {cfg.out_dir}"
            )
        return 0
    except FedKanError as exc:
        category = next((v for k, v in _CATEGORY.items() if isinstance(exc, k)), "internal")
        print(f"fedkan: {category} error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
