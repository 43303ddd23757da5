"""Dense 3-way tensor algebra.

Storage conventions used throughout the package:

- A tensor is a dense float array of shape (I1, I2, I3); flat layouts are
  column-major (mode-1 index fastest), matching ``order='F'`` reshapes.
- ``unfold(t, mode)`` has shape (prod of the other dims) x I_mode, with the
  row index running over the remaining modes in ascending order, the
  lower-numbered one varying fastest.  Under this orientation
  ``unfold(cp_reconstruct(A1, A2, A3), 1) == khatri_rao(A3, A2) @ A1.T``.
- ``vec`` of a matrix is column-major, so
  ``vec(A @ diag(d) @ B.T) == khatri_rao(B, A) @ d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor3",
    "Mask3",
    "ObservedTensor",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "mask_project",
]

_MODES = (1, 2, 3)


def _values3(t) -> np.ndarray:
    """Coerce a Tensor3 or array-like to a float ndarray of ndim 3."""
    x = t.values if isinstance(t, Tensor3) else np.asarray(t, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way array, got ndim={x.ndim}")
    return x


def _flags3(m) -> np.ndarray:
    x = m.flags if isinstance(m, Mask3) else np.asarray(m)
    if x.ndim != 3 or x.dtype != bool:
        raise ValueError("expected a 3-way boolean mask")
    return x


@dataclass(frozen=True)
class Tensor3:
    """Dense real 3-way array."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _values3(self.values))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def from_flat(cls, dims, flat) -> "Tensor3":
        """Build from a column-major flat value sequence."""
        dims = tuple(int(d) for d in dims)
        flat = np.asarray(flat, dtype=float)
        if flat.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"flat length {flat.size} does not match dims {dims}"
            )
        return cls(flat.reshape(dims, order="F"))

    def flat(self) -> np.ndarray:
        """Column-major flattening (mode-1 index fastest)."""
        return self.values.ravel(order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class Mask3:
    """Boolean observation mask; True marks an observed entry."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.dtype != bool:
            flags = flags.astype(bool)
        if flags.ndim != 3:
            raise ValueError(f"expected a 3-way mask, got ndim={flags.ndim}")
        object.__setattr__(self, "flags", flags)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.flags.shape

    @classmethod
    def full(cls, dims) -> "Mask3":
        return cls(np.ones(tuple(dims), dtype=bool))


@dataclass(frozen=True)
class ObservedTensor:
    """Tensor with an observation mask; unobserved entries are stored as 0."""

    data: Tensor3
    mask: Mask3

    def __post_init__(self):
        if self.data.dims != self.mask.dims:
            raise ValueError(
                f"data dims {self.data.dims} != mask dims {self.mask.dims}"
            )
        if np.any(self.data.values[~self.mask.flags] != 0.0):
            raise ValueError("unobserved entries must be stored as 0")

    @classmethod
    def create(cls, values, flags=None) -> "ObservedTensor":
        """Build from raw arrays, zeroing whatever the mask hides."""
        values = _values3(values)
        if flags is None:
            flags = np.ones(values.shape, dtype=bool)
        flags = np.asarray(flags).astype(bool)
        return cls(Tensor3(np.where(flags, values, 0.0)), Mask3(flags))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.dims


def unfold(t, mode: int) -> np.ndarray:
    """Mode-`mode` unfolding, shape (prod of other dims) x I_mode.

    Column i holds the mode-`mode` fiber at slab index i; the row index
    runs over the remaining modes with the lower-numbered one fastest.
    """
    x = _values3(t)
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode}")
    ax = mode - 1
    others = [a for a in range(3) if a != ax]
    # order='F' makes the first listed remaining mode the fastest index
    return np.transpose(x, (*others, ax)).reshape(
        -1, x.shape[ax], order="F"
    )


def fold(mat, mode: int, dims) -> np.ndarray:
    """Inverse of unfold: rebuild the (I1, I2, I3) array."""
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode}")
    mat = np.asarray(mat, dtype=float)
    dims = tuple(int(d) for d in dims)
    ax = mode - 1
    others = [a for a in range(3) if a != ax]
    expected = (dims[others[0]] * dims[others[1]], dims[ax])
    if mat.shape != expected:
        raise ValueError(f"matrix shape {mat.shape} != expected {expected}")
    cube = mat.reshape(dims[others[0]], dims[others[1]], dims[ax], order="F")
    return np.transpose(cube, np.argsort((*others, ax)))


def khatri_rao(x, y) -> np.ndarray:
    """Column-wise Kronecker product; x's row index is the slower one."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if x.shape[1] != y.shape[1]:
        raise ValueError(
            f"column counts differ: {x.shape[1]} != {y.shape[1]}"
        )
    i, r = x.shape
    j = y.shape[0]
    return (x[:, None, :] * y[None, :, :]).reshape(i * j, r)


def cp_reconstruct(a1, a2, a3) -> np.ndarray:
    """Rank-R reconstruction: entry (i,j,k) = sum_r A1[i,r] A2[j,r] A3[k,r]."""
    a1, a2, a3 = (np.asarray(a, dtype=float) for a in (a1, a2, a3))
    cols = {a.shape[1] for a in (a1, a2, a3) if a.ndim == 2}
    if any(a.ndim != 2 for a in (a1, a2, a3)) or len(cols) != 1:
        raise ValueError("factors must be matrices with a shared column count")
    return np.einsum("ir,jr,kr->ijk", a1, a2, a3)


def mask_project(t, m, keep: str) -> np.ndarray:
    """Zero the entries whose mask state disagrees with `keep`.

    keep='observed' keeps entries where the mask is True; keep='unobserved'
    keeps the complement.  The two projections sum back to the input.
    """
    x = _values3(t)
    flags = _flags3(m)
    if x.shape != flags.shape:
        raise ValueError(f"dims {x.shape} != mask dims {flags.shape}")
    if keep == "observed":
        return np.where(flags, x, 0.0)
    if keep == "unobserved":
        return np.where(flags, 0.0, x)
    raise ValueError(f"keep must be 'observed' or 'unobserved', got {keep!r}")
