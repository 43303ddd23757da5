"""Community assignment from nonnegative factor matrices.

A factor matrix A (I x R, nonnegative) together with its column weights d
is first rescaled to C = A diag(sqrt(d)), so the weights move into the row
geometry.  Hard assignments then come either from the row-wise argmax of C
(when the expected number of communities equals the number of columns) or
from k-means on the rows of C (when it does not).  A row-stochastic variant
is available for overlapping / soft membership.

Labels are 1-based community ids.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .rng import substream

__all__ = [
    "Partition",
    "ScaledFactor",
    "scale_factor",
    "assign_argmax",
    "assign_kmeans",
    "soft_assign",
    "detect",
]


@dataclass(frozen=True)
class Partition:
    """Hard assignment of I items into communities 1..num_communities.

    zero_rows lists row indices (0-based) that carried no signal (all-zero
    rows of the scaled factor); they received the tie-rule label 1 and are
    surfaced here so callers can treat them as unassigned if they prefer.
    """

    labels: np.ndarray
    num_communities: int
    zero_rows: tuple = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise ConfigurationError("labels must be a vector")
        if self.num_communities < 1:
            raise ConfigurationError("need at least one community")
        if labels.size and (
            labels.min() < 1 or labels.max() > self.num_communities
        ):
            raise ConfigurationError(
                f"labels must lie in 1..{self.num_communities}"
            )

    @property
    def size(self) -> int:
        return self.labels.size

    def cover_sets(self) -> list:
        """Index sets per community; together they partition 0..I-1."""
        return [
            np.flatnonzero(self.labels == c)
            for c in range(1, self.num_communities + 1)
        ]

    @classmethod
    def from_cover_sets(cls, sets, size: int) -> "Partition":
        labels = np.zeros(size, dtype=int)
        for c, idx in enumerate(sets, start=1):
            labels[np.asarray(idx, dtype=int)] = c
        if np.any(labels == 0):
            raise ConfigurationError("cover sets do not cover every item")
        return cls(labels, len(sets))


@dataclass(frozen=True)
class ScaledFactor:
    """A factor with its column weights folded in: values = A diag(sqrt(d))."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ConfigurationError("scaled factor must be a matrix")

    @property
    def rank(self) -> int:
        return self.values.shape[1]


def _rows(c) -> np.ndarray:
    return c.values if isinstance(c, ScaledFactor) else np.asarray(c, dtype=float)


def scale_factor(a: np.ndarray, d: np.ndarray) -> ScaledFactor:
    """Fold column weights into the factor: C = A diag(sqrt(max(d, 0))).

    Negative weights can appear transiently in unconverged solver state;
    they carry no community signal and are clamped before the root.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.ndim != 2 or d.shape != (a.shape[1],):
        raise ConfigurationError("need an I x R factor and a length-R weight")
    return ScaledFactor(a * np.sqrt(np.maximum(d, 0.0)))


def assign_argmax(c) -> Partition:
    """Label each row by its largest column (1-based); ties -> lowest index.

    Rows that are entirely zero have no preference; they get label 1 via the
    tie rule and are reported in Partition.zero_rows.
    """
    rows = _rows(c)
    labels = rows.argmax(axis=1) + 1  # argmax already takes the first maximum
    zero = tuple(np.flatnonzero(~rows.any(axis=1)).tolist())
    return Partition(labels, rows.shape[1], zero_rows=zero)


def soft_assign(c) -> np.ndarray:
    """Row-normalize C into membership probabilities.

    Zero rows are uninformative and map to the uniform distribution.
    """
    rows = _rows(c)
    sums = rows.sum(axis=1, keepdims=True)
    out = np.divide(rows, sums, out=np.zeros_like(rows), where=sums != 0)
    out[(sums == 0).ravel()] = 1.0 / rows.shape[1]
    return out


# ------------------------------------------------------------------ k-means


def _plusplus_seed(x: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding: spread initial centers by squared distance."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    for j in range(1, k):
        d2 = np.min(
            ((x[:, None, :] - centers[None, :j, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # all points coincide with a center
        centers[j] = x[idx]
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iters=300, tol=1e-8):
    """Lloyd iterations until the centers stop moving. Returns labels, wcss."""
    k = centers.shape[0]
    labels = np.zeros(x.shape[0], dtype=int)
    for _ in range(max_iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
            else:
                # empty cluster: restart it at the point farthest from its
                # current center so the next pass can carve off a group
                new_centers[j] = x[d2.min(axis=1).argmax()]
        shift = np.linalg.norm(new_centers - centers)
        centers = new_centers
        if shift <= tol:
            break
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    wcss = float(d2[np.arange(x.shape[0]), labels].sum())
    return labels, wcss


def assign_kmeans(c, k: int, seed: int = 0, restarts: int = 10) -> Partition:
    """Cluster the rows of C into k groups; best of `restarts` runs by
    within-cluster sum of squares (ties -> earliest restart).  Deterministic
    given seed: each restart draws from its own seed-derived stream.
    """
    rows = _rows(c)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in 1..{n}, got {k}")
    if restarts < 1:
        raise ConfigurationError("need at least one restart")
    best_labels, best_wcss = None, np.inf
    for r in range(restarts):
        rng = substream(seed, f"kmeans-restart{r}")
        centers = _plusplus_seed(rows, k, rng)
        labels, wcss = _lloyd(rows, centers)
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return Partition(best_labels + 1, k)


def detect(model, mode: int, known_communities=None, seed: int = 0) -> Partition:
    """Assign the items of one mode to communities from a fitted model.

    The scaled factor's argmax is used when the expected community count is
    unknown or matches the rank; otherwise k-means with that count.
    """
    if mode not in (1, 2, 3):
        raise ConfigurationError(f"mode must be 1, 2, or 3, got {mode}")
    c = scale_factor(model.factors[mode - 1], model.weights[mode - 1])
    if known_communities is None or known_communities == c.rank:
        return assign_argmax(c)
    return assign_kmeans(c, known_communities, seed=seed)
