"""Reproducible synthetic problem instances.

Ground truth is a nonnegative factor model: per-mode factors drawn uniform,
optionally with planted community structure (each row dominated by its
community's column so a row-wise argmax recovers the plant), unit column
weights, graphs formed exactly as A diag(d) A^T, and the tensor as the
factors' trilinear reconstruction.  On top of that: SNR-calibrated Gaussian
noise and entry / slab / symmetric-pair / cold-start missingness masks.

Every operation takes a seed or a Generator; the dataset builder routes all
draws through named substreams of one top-level seed, so regenerating with
the same spec is bit-reproducible and changing e.g. the noise draw does not
perturb the masks.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError
from .multilinear import Mask3, ObservedTensor, Tensor3, cp_reconstruct
from .rng import substream
from .solver import FactorModel, ObservedGraph

__all__ = [
    "SynthSpec",
    "SynthDataset",
    "planted_labels",
    "gen_factors",
    "gen_graphs",
    "add_noise_snr",
    "gen_tensor_mask",
    "gen_graph_mask",
    "make_dataset",
]


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic instance.

    community_counts: per-mode planted community count, or None for an
    unstructured uniform factor.  graph_missing / cold_start are per mode;
    cold-start missingness hides whole rows+columns of sampled nodes rather
    than independent pairs.
    """

    dims: tuple
    rank: int
    community_counts: tuple = (None, None, None)
    snr_db: Optional[float] = None
    tensor_missing: float = 0.0
    graph_missing: tuple = (0.0, 0.0, 0.0)
    mask_style: str = "iid"
    slab_mode: int = 1
    cold_start: tuple = (False, False, False)
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ConfigurationError(f"dims must be 3 positive sizes: {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.rank < 1:
            raise ConfigurationError("rank must be positive")
        if len(self.community_counts) != 3 or len(self.graph_missing) != 3:
            raise ConfigurationError("per-mode settings need 3 entries")
        for n, c in zip(self.dims, self.community_counts):
            if c is None:
                continue
            if not 1 <= c <= min(n, self.rank):
                raise ConfigurationError(
                    f"community count {c} must be in 1..min(dim={n}, rank={self.rank})"
                )
        fracs = (self.tensor_missing, *self.graph_missing)
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise ConfigurationError("missing fractions must lie in [0, 1]")
        if self.mask_style not in ("iid", "slab"):
            raise ConfigurationError(f"unknown mask style {self.mask_style!r}")
        if self.slab_mode not in (1, 2, 3):
            raise ConfigurationError("slab_mode must be 1, 2, or 3")


def planted_labels(n: int, count: int) -> np.ndarray:
    """Contiguous community blocks, sizes as equal as possible; 1-based."""
    if not 1 <= count <= n:
        raise ConfigurationError(f"count must be in 1..{n}")
    sizes = np.full(count, n // count)
    sizes[: n % count] += 1
    return np.repeat(np.arange(1, count + 1), sizes)


def gen_factors(spec: SynthSpec) -> FactorModel:
    """Ground-truth factors: uniform[0,1) rows, or community-structured
    rows (dominant entry uniform[0.7,1), the rest uniform[0,0.2)) when the
    mode has a planted community count.  Weights are all ones."""
    factors = []
    for m, (n, count) in enumerate(zip(spec.dims, spec.community_counts)):
        rng = substream(spec.seed, f"factors-mode{m + 1}")
        if count is None:
            factors.append(rng.uniform(0.0, 1.0, (n, spec.rank)))
        else:
            a = rng.uniform(0.0, 0.2, (n, spec.rank))
            labels = planted_labels(n, count)
            a[np.arange(n), labels - 1] = rng.uniform(0.7, 1.0, n)
            factors.append(a)
    weights = [np.ones(spec.rank) for _ in range(3)]
    return FactorModel(factors, weights)


def _symmetric_product(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    # einsum fixes the accumulation order, and mirroring the upper triangle
    # makes the result exactly symmetric (the two orientations of a float
    # product chain round differently, so a plain a.T product is not)
    s = np.einsum("ir,r,jr->ij", a, d, a)
    return np.triu(s) + np.triu(s, 1).T


def gen_graphs(factors, weights) -> list:
    """Exact per-mode graphs G_n = A_n diag(d_n) A_n^T (bitwise symmetric)."""
    return [_symmetric_product(a, d) for a, d in zip(factors, weights)]


def add_noise_snr(t, snr_db: Optional[float], seed_or_rng=0) -> Tensor3:
    """Add iid Gaussian noise scaled for a target SNR in dB.

    Noise variance = mean signal power / 10^(snr_db/10); None or +inf
    means no noise.  The empirical SNR of a realization concentrates near
    the target as the tensor grows (within ~0.5 dB by 10^4 entries).
    """
    x = t.values if isinstance(t, Tensor3) else np.asarray(t, dtype=float)
    if snr_db is None or np.isinf(snr_db):
        return Tensor3(x.copy())
    power = float((x**2).mean())
    var = power / (10.0 ** (snr_db / 10.0))
    noise = _rng(seed_or_rng).normal(0.0, np.sqrt(var), x.shape)
    return Tensor3(x + noise)


def gen_tensor_mask(
    dims, missing: float, style: str = "iid", slab_mode: int = 1, seed_or_rng=0
) -> Mask3:
    """Observation mask: True = observed.

    iid blanks entries independently; slab blanks whole mode-k slabs
    (each slab independently with the given probability).
    """
    if not 0.0 <= missing <= 1.0:
        raise ConfigurationError("missing fraction must lie in [0, 1]")
    rng = _rng(seed_or_rng)
    if style == "iid":
        return Mask3(rng.random(dims) >= missing)
    if style == "slab":
        ax = slab_mode - 1
        keep = rng.random(dims[ax]) >= missing
        shape = [1, 1, 1]
        shape[ax] = dims[ax]
        return Mask3(
            np.broadcast_to(keep.reshape(shape), tuple(dims)).copy()
        )
    raise ConfigurationError(f"unknown mask style {style!r}")


def gen_graph_mask(
    n: int, missing: float, cold_start: bool = False, seed_or_rng=0
) -> np.ndarray:
    """Symmetric observation mask for an n x n graph.

    Pairwise mode blanks unordered pairs independently; cold-start mode
    picks round(missing * n) nodes and blanks their entire rows+columns
    (nodes with no observed similarities at all).
    """
    if not 0.0 <= missing <= 1.0:
        raise ConfigurationError("missing fraction must lie in [0, 1]")
    rng = _rng(seed_or_rng)
    if cold_start:
        k = int(round(missing * n))
        hidden = rng.choice(n, size=k, replace=False)
        mask = np.ones((n, n), dtype=bool)
        mask[hidden, :] = False
        mask[:, hidden] = False
        return mask
    upper = rng.random((n, n)) >= missing
    mask = np.triu(upper)
    return mask | mask.T


class SynthDataset(NamedTuple):
    tensor: ObservedTensor
    graphs: list  # per-mode ObservedGraph
    truth: FactorModel
    clean: Tensor3
    labels: list  # per-mode planted labels (None when unstructured)


def make_dataset(spec: SynthSpec) -> SynthDataset:
    """Full pipeline: factors -> graphs + clean tensor -> noise -> masks."""
    truth = gen_factors(spec)
    clean = Tensor3(cp_reconstruct(*truth.factors))
    graphs_full = gen_graphs(truth.factors, truth.weights)

    noisy = add_noise_snr(clean, spec.snr_db, substream(spec.seed, "noise"))
    tmask = gen_tensor_mask(
        spec.dims,
        spec.tensor_missing,
        style=spec.mask_style,
        slab_mode=spec.slab_mode,
        seed_or_rng=substream(spec.seed, "tensor-mask"),
    )
    tensor = ObservedTensor.create(noisy.values, tmask.flags)

    graphs = []
    for m in range(3):
        gmask = gen_graph_mask(
            spec.dims[m],
            spec.graph_missing[m],
            cold_start=spec.cold_start[m],
            seed_or_rng=substream(spec.seed, f"graph-mask-mode{m + 1}"),
        )
        graphs.append(ObservedGraph.create(graphs_full[m], gmask))

    labels = [
        None if c is None else planted_labels(n, c)
        for n, c in zip(spec.dims, spec.community_counts)
    ]
    return SynthDataset(tensor, graphs, truth, clean, labels)
