"""Evaluation metrics: partition agreement (entropy / mutual information /
NMI), graph community quality (conductance, coverage), reconstruction error
(NMSE), and detection ROC sweeps.

Entropy and mutual information use the natural logarithm; NMI is a ratio and
does not depend on the base.
"""

import warnings
from typing import NamedTuple, Optional

import numpy as np

from .community import Partition
from .errors import ConfigurationError
from .multilinear import Mask3, Tensor3

__all__ = [
    "RocPoint",
    "CoveragePoint",
    "entropy",
    "mutual_info",
    "nmi",
    "conductance",
    "coverage",
    "coverage_curve",
    "nmse",
    "roc_sweep",
]


class RocPoint(NamedTuple):
    threshold: float
    tpr: float
    fpr: float


class CoveragePoint(NamedTuple):
    alpha: float
    coverage: float


# ------------------------------------------------------- partition agreement


def _sizes(p: Partition) -> np.ndarray:
    return np.bincount(p.labels, minlength=p.num_communities + 1)[1:]


def entropy(p: Partition) -> float:
    """H(S) = -sum_c (|C_c|/I) log(|C_c|/I); empty communities contribute 0."""
    sizes = _sizes(p)
    frac = sizes[sizes > 0] / p.size
    return float(-(frac * np.log(frac)).sum())


def mutual_info(s: Partition, s_hat: Partition) -> float:
    """MI over the joint label contingency; empty cells contribute 0."""
    if s.size != s_hat.size:
        raise ConfigurationError(
            f"partition sizes differ: {s.size} != {s_hat.size}"
        )
    n = s.size
    joint = np.zeros((s.num_communities, s_hat.num_communities))
    np.add.at(joint, (s.labels - 1, s_hat.labels - 1), 1.0)
    row = joint.sum(axis=1, keepdims=True)
    col = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (joint / n) * np.log(joint * n / (row * col))
    return float(np.nansum(terms))


def nmi(s: Partition, s_hat: Partition) -> float:
    """2 MI / (H(S) + H(S_hat)), in [0, 1].

    Both-trivial partitions (two single clusters, which agree exactly) have
    0/0; that case is defined as 1 and flagged with a warning.
    """
    denom = entropy(s) + entropy(s_hat)
    if denom == 0.0:
        warnings.warn(
            "both partitions are single clusters; NMI defined as 1",
            stacklevel=2,
        )
        return 1.0
    mi = mutual_info(s, s_hat)
    if mi <= 0.0:
        return 0.0
    return min(2.0 * mi / denom, 1.0)


# --------------------------------------------------------------- graph side


def _community_flags(n: int, community) -> np.ndarray:
    community = np.asarray(community)
    if community.dtype == bool:
        if community.shape != (n,):
            raise ConfigurationError("boolean community mask has wrong length")
        return community
    flags = np.zeros(n, dtype=bool)
    flags[community.astype(int)] = True
    return flags


def conductance(g: np.ndarray, community) -> float:
    """cut(C, ~C) / min(vol(C), vol(~C)), worst-case 1 for degenerate C.

    vol sums every incident weight as stored (inputs are expected hollow;
    any self-weights present are simply counted).
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    inside = _community_flags(n, community)
    k = int(inside.sum())
    if k == 0 or k == n:
        return 1.0
    cut = g[np.ix_(inside, ~inside)].sum()
    denom = min(g[inside].sum(), g[~inside].sum())
    if denom <= 0.0:
        return 1.0
    # cut <= vol on either side (vol = 2*internal + cut), so any excess over
    # 1 is summation-order rounding; keep the documented [0, 1] range
    return min(float(cut / denom), 1.0)


def coverage(g: np.ndarray, p: Partition, alpha: float) -> float:
    """Fraction of nodes in communities whose conductance is below alpha."""
    g = np.asarray(g, dtype=float)
    covered = 0
    for members in p.cover_sets():
        if members.size and conductance(g, members) < alpha:
            covered += members.size
    return covered / p.size


def coverage_curve(g: np.ndarray, p: Partition, alphas=None) -> list:
    """Coverage sampled along a conductance-threshold grid (default 0..1
    in steps of 0.1), for plotting coverage against the threshold."""
    if alphas is None:
        alphas = np.linspace(0.0, 1.0, 11)
    return [CoveragePoint(float(a), coverage(g, p, float(a))) for a in alphas]


# ------------------------------------------------------------ reconstruction


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Tensor3) else np.asarray(x, dtype=float)


def nmse(x_hat, x_true, mask: Optional[np.ndarray] = None) -> float:
    """||x_hat - x_true||^2 / ||x_true||^2, optionally restricted to the
    entries selected by a boolean mask."""
    a = _values(x_hat)
    b = _values(x_true)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is not None:
        flags = mask.flags if isinstance(mask, Mask3) else np.asarray(mask)
        a = a[flags]
        b = b[flags]
    err = float(((a - b) ** 2).sum())
    ref = float((b**2).sum())
    if ref == 0.0:
        return 0.0 if err == 0.0 else np.inf
    return err / ref


# -------------------------------------------------------------------- ROC


def roc_sweep(scores, truth, num_thresholds: int = 101) -> list:
    """Detection rates while sweeping a decision threshold over the scores.

    Thresholds are a uniform grid over [min score, max score]; an entry is
    declared positive when score >= threshold.  One extra threshold above
    the max is appended so the sweep always ends at (TPR 0, FPR 0); the
    first grid point classifies everything positive, giving (1, 1).  A rate
    whose denominator is empty (truth all one class) is reported as 0.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth).astype(bool).ravel()
    if scores.size != truth.size:
        raise ConfigurationError("scores and truth must align")
    if scores.size == 0:
        raise ConfigurationError("need at least one held-out entry")
    if num_thresholds < 2:
        raise ConfigurationError("need at least two thresholds")
    lo, hi = float(scores.min()), float(scores.max())
    grid = np.unique(np.linspace(lo, hi, num_thresholds))
    step = grid[-1] - grid[-2] if grid.size > 1 else 1.0
    grid = np.append(grid, grid[-1] + step)
    pos = int(truth.sum())
    neg = truth.size - pos
    out = []
    for t in grid:
        hit = scores >= t
        tp = int((hit & truth).sum())
        fp = int((hit & ~truth).sum())
        out.append(
            RocPoint(
                threshold=float(t),
                tpr=tp / pos if pos else 0.0,
                fpr=fp / neg if neg else 0.0,
            )
        )
    return out
