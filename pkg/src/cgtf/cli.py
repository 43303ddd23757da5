"""Command-line entry point.

Subcommands: impute, snr-sweep, communities, roc, synth.  Each takes an
optional JSON config file plus overriding flags, writes its outputs into
--out, and exits 0 on success, 2 when the solver stopped at the iteration
cap, 1 on any error.

The CGTF_THREADS environment variable caps the linear-algebra thread pools;
it is applied before the numeric stack is imported, which is why the worker
modules are imported inside main().
"""

import argparse
import os
import sys

_SUBCOMMANDS = ("impute", "snr-sweep", "communities", "roc", "synth")

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap() -> None:
    raw = os.environ.get("CGTF_THREADS")
    if raw is None:
        return
    if not raw.isdigit() or int(raw) < 1:
        raise ValueError(f"CGTF_THREADS must be a positive integer, got {raw!r}")
    for var in _THREAD_VARS:
        os.environ.setdefault(var, raw)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgtf",
        description=(
            "Joint factorization of a partially observed tensor with "
            "per-mode similarity graphs: imputation, community detection, "
            "and synthetic benchmarks."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("impute", "fit one dataset and write completed tensor/graphs"),
        ("snr-sweep", "imputation error vs noise level, with baseline"),
        ("communities", "fit, assign communities, score against truth"),
        ("roc", "detection sweep on held-out entries"),
        ("synth", "generate a synthetic dataset to files"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--rank", type=int, metavar="R")
        p.add_argument("--mu", type=float, metavar="F", help="graph coupling weight")
        p.add_argument("--rho", type=float, metavar="F", help="consensus penalty")
        p.add_argument("--max-iters", type=int, metavar="N", dest="max_iters")
        p.add_argument("--tol", type=float, metavar="F", help="stopping tolerance")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        # imported here so the thread cap precedes the numeric stack
        from . import experiments

        overrides = {
            key: getattr(args, key)
            for key in ("seed", "out", "rank", "mu", "rho", "max_iters", "tol")
        }
        cfg = experiments.ExperimentConfig.load(
            args.command, args.config, overrides
        )
        runner = {
            "impute": experiments.run_impute,
            "snr-sweep": experiments.run_snr_sweep,
            "communities": experiments.run_communities,
            "roc": experiments.run_roc,
            "synth": experiments.run_synth,
        }[args.command]
        return runner(cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
