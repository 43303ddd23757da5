"""Coupled graph-tensor factorization.

Joint low-rank factorization of a partially observed 3-way tensor and
per-mode partially observed graph adjacency matrices, solved by ADMM with
closed-form block updates, plus factor-based community detection, evaluation
metrics, synthetic data generation, and a CLI experiment runner.

Submodules are loaded lazily so the CLI can configure BLAS thread limits
from the environment before numpy is first imported.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "cli",
    "community",
    "dataio",
    "errors",
    "experiments",
    "figures",
    "metrics",
    "multilinear",
    "rng",
    "solver",
    "synthgen",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES))
