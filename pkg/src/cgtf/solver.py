"""ADMM solver for coupled graph-tensor factorization.

The model couples a rank-R CP decomposition of a partially observed 3-way
tensor with diagonally scaled symmetric factorizations G_n ~ A_n diag(d_n)
A_n^T of per-mode graph adjacency matrices, sharing the factor A_n.  The
solver splits each A_n into an auxiliary copy Abar_n (decoupling the
symmetric product) and a nonnegative copy Atilde_n, and each d_n into a
nonnegative copy dtilde_n, then alternates closed-form block updates with
dual ascent on the consensus constraints.

Every block update is the exact minimizer of the augmented Lagrangian in
its own block, which is what makes the fixed points KKT points; the
`augmented_lagrangian` and `kkt_residual` functions expose the quantities
the tests differentiate and monitor.

Missing data is handled by imputation: the working tensor is refreshed as
observed data plus the current reconstruction at unobserved entries each
iteration, and likewise for each present graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, DivergenceError
from .multilinear import (
    ObservedTensor,
    Tensor3,
    cp_reconstruct,
    khatri_rao,
    mask_project,
    unfold,
)
from .rng import substream

__all__ = [
    "ObservedGraph",
    "FactorModel",
    "SolverConfig",
    "AdmmState",
    "Workspace",
    "FitReport",
    "FitResult",
    "snmf_init",
    "update_factor",
    "update_weights",
    "update_factor_bar",
    "project_nonneg",
    "impute_tensor",
    "impute_graph",
    "update_duals",
    "objective",
    "augmented_lagrangian",
    "kkt_residual",
    "fit",
]

# 0-based indices of the (slower, faster) factors in each mode's
# Khatri-Rao companion:  M_1 = A3 kr A2,  M_2 = A3 kr A1,  M_3 = A2 kr A1.
_KR_PAIR = {1: (2, 1), 2: (2, 0), 3: (1, 0)}

_MODES = (1, 2, 3)


def _fro(x) -> float:
    return float(np.linalg.norm(x))


def _mode_companion(factors, mode: int) -> np.ndarray:
    hi, lo = _KR_PAIR[mode]
    return khatri_rao(factors[hi], factors[lo])


def _solve_right(s: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve X @ s = b for X, with s symmetric positive definite.

    The systems here are PD whenever the penalties are positive, so the
    escalating diagonal jitter only guards against round-off; the last
    resort is a least-squares solve.  Never raises for singularity.
    """
    s = 0.5 * (s + s.T)
    b2 = np.atleast_2d(b)
    base = max(np.trace(s) / s.shape[0], 1.0)
    for eps in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            c = sla.cho_factor(s + (eps * base) * np.eye(s.shape[0]))
            out = sla.cho_solve(c, b2.T).T
            break
        except np.linalg.LinAlgError:
            continue
    else:
        out = np.linalg.lstsq(s, b2.T, rcond=None)[0].T
    return out.reshape(np.shape(b))


# ----------------------------------------------------------------- types


@dataclass
class ObservedGraph:
    """Symmetric nonnegative adjacency with a symmetric observation mask.

    `present=False` marks a mode that has no graph at all; such a
    placeholder carries empty-ish arrays and is skipped by every
    graph-coupled computation.
    """

    values: np.ndarray
    mask: np.ndarray
    present: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask).astype(bool)
        v, m = self.values, self.mask
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigurationError(f"graph values must be square, got {v.shape}")
        if m.shape != v.shape:
            raise ConfigurationError(f"mask shape {m.shape} != values shape {v.shape}")
        if not np.array_equal(m, m.T):
            raise ConfigurationError("graph mask must be symmetric")
        if not np.array_equal(v, v.T):
            raise ConfigurationError("graph values must be symmetric")
        if np.any(v[m] < 0):
            raise ConfigurationError("observed graph weights must be nonnegative")
        if np.any(v[~m] != 0.0):
            raise ConfigurationError("unobserved graph entries must be stored as 0")

    @classmethod
    def create(cls, values, mask=None, present=True) -> "ObservedGraph":
        """Build from raw arrays: symmetrize exactly, zero hidden entries."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigurationError(f"graph values must be square, got {values.shape}")
        scale = max(np.abs(values).max(initial=0.0), 1.0)
        if np.abs(values - values.T).max(initial=0.0) > 1e-8 * scale:
            raise ConfigurationError("graph values are not symmetric")
        values = 0.5 * (values + values.T)
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        mask = np.asarray(mask).astype(bool)
        mask = mask & mask.T
        return cls(np.where(mask, values, 0.0), mask, present)

    @classmethod
    def absent(cls, n: int) -> "ObservedGraph":
        return cls(np.zeros((n, n)), np.zeros((n, n), dtype=bool), present=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class FactorModel:
    """Per-mode factor matrices A_n (I_n x R) and weight vectors d_n (R)."""

    factors: list[np.ndarray]
    weights: list[np.ndarray]

    def __post_init__(self):
        self.factors = [np.asarray(a, dtype=float) for a in self.factors]
        self.weights = [np.asarray(d, dtype=float) for d in self.weights]
        if len(self.factors) != 3 or len(self.weights) != 3:
            raise ConfigurationError("expected 3 factors and 3 weight vectors")
        ranks = {a.shape[1] for a in self.factors} | {d.shape[0] for d in self.weights}
        if any(a.ndim != 2 for a in self.factors) or len(ranks) != 1:
            raise ConfigurationError("factors/weights must share one rank")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(a.shape[0] for a in self.factors)

    def copy(self) -> "FactorModel":
        return FactorModel(
            [a.copy() for a in self.factors], [d.copy() for d in self.weights]
        )

    def clamped(self) -> "FactorModel":
        """Exported form: negatives (which vanish only asymptotically) cut to 0."""
        return FactorModel(
            [np.maximum(a, 0.0) for a in self.factors],
            [np.maximum(d, 0.0) for d in self.weights],
        )


@dataclass
class SolverConfig:
    rank: int
    mu: float = 1.0
    rho: float = 100.0
    max_iters: int = 1000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    seed: int = 0
    init: str = "snmf"  # or "random"

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigurationError(f"rank must be >= 1, got {self.rank}")
        if self.mu < 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        if self.rho <= 0:
            raise ConfigurationError(f"rho must be > 0, got {self.rho}")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ConfigurationError("tolerances must be > 0")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.init not in ("snmf", "random"):
            raise ConfigurationError(f"init must be 'snmf' or 'random', got {self.init!r}")


@dataclass
class AdmmState:
    """All primal blocks, their auxiliary copies, duals, and penalties."""

    model: FactorModel
    aux_bar: list[np.ndarray]
    aux_tilde: list[np.ndarray]
    d_tilde: list[np.ndarray]
    dual_bar: list[np.ndarray]
    dual_tilde: list[np.ndarray]
    dual_d: list[np.ndarray]
    rho_bar: float
    rho_tilde: float
    rho_d: float
    mu: float
    iteration: int = 0

    @classmethod
    def initial(cls, model: FactorModel, rho: float, mu: float) -> "AdmmState":
        return cls(
            model=model,
            aux_bar=[a.copy() for a in model.factors],
            aux_tilde=[np.maximum(a, 0.0) for a in model.factors],
            d_tilde=[np.maximum(d, 0.0) for d in model.weights],
            dual_bar=[np.zeros_like(a) for a in model.factors],
            dual_tilde=[np.zeros_like(a) for a in model.factors],
            dual_d=[np.zeros_like(d) for d in model.weights],
            rho_bar=float(rho),
            rho_tilde=float(rho),
            rho_d=float(rho),
            mu=float(mu),
        )


@dataclass
class Workspace:
    """Observed data plus the current completed working copies.

    `x` is the completed tensor (observed entries fixed, unobserved filled
    with the current reconstruction); `g[m]` likewise per present graph,
    or None for absent modes.
    """

    tensor: ObservedTensor
    graphs: tuple[ObservedGraph, ObservedGraph, ObservedGraph]
    x: np.ndarray
    g: list[Optional[np.ndarray]]

    @classmethod
    def initial(cls, tensor: ObservedTensor, graphs) -> "Workspace":
        graphs = tuple(graphs)
        return cls(
            tensor=tensor,
            graphs=graphs,
            x=tensor.data.values.copy(),
            g=[gr.values.copy() if gr.present else None for gr in graphs],
        )


@dataclass
class FitReport:
    """Iteration diagnostics; history rows are raw (unnormalized) gaps."""

    iterations: int
    converged: bool
    primal_gap_bar: np.ndarray  # (iterations, 3): ||A_n - Abar_n||_F
    primal_gap_tilde: np.ndarray  # (iterations, 3): ||A_n - Atilde_n||_F
    primal_gap_d: np.ndarray  # (iterations, 3): ||d_n - dtilde_n||_2
    dual_step_bar: np.ndarray  # (iterations, 3): ||increment of Y_bar||_F
    dual_step_tilde: np.ndarray
    dual_step_d: np.ndarray
    objective_history: np.ndarray  # (iterations + 1,): entry 0 is at init
    objective: float
    kkt_residual: float


class FitResult(NamedTuple):
    model: FactorModel
    completed: Tensor3
    graphs: list[Optional[np.ndarray]]
    report: FitReport


# --------------------------------------------------------- initialization


def snmf_init(
    graph: ObservedGraph, rank: int, seed=0, iters: int = 200, starts: int = 5
) -> np.ndarray:
    """Nonnegative factor A with A @ A.T fitting the observed graph.

    Alternating column-wise nonnegative updates on
    ||G - A B^T||_F^2 + alpha ||A - B||_F^2 with unobserved entries
    treated as zeros, returning the symmetrized (A+B)/2 of the best of a
    few starts (graph-column anchors first, then uniform random), scored
    by the symmetric residual.  Deterministic given the seed (an int or a
    Generator).
    """
    if not graph.present:
        raise ConfigurationError("snmf_init requires a present graph")
    n = graph.n
    if rank > n:
        raise ConfigurationError(f"rank {rank} exceeds node count {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = graph.values
    col_norms = np.linalg.norm(g, axis=0)
    scale = np.sqrt(max(g.mean(), 1e-12) / rank)
    alpha = max(np.abs(g).mean(), 1e-12)
    best, best_score = None, np.inf
    for s in range(max(starts, 1)):
        if s < 2 and col_norms.sum() > 0:
            a = _anchor_start(g, rank, col_norms, scale, rng)
        else:
            a = rng.uniform(0.0, 2.0 * scale, (n, rank))
        b = a.copy()
        for _ in range(iters):
            a = _hals_pass(g, a, b, alpha, scale, rng)
            b = _hals_pass(g, b, a, alpha, scale, rng)
        c = np.maximum(0.5 * (a + b), 0.0)
        score = _fro(g - c @ c.T)
        if score < best_score:
            best, best_score = c, score
    return best


def _anchor_start(g, rank, col_norms, scale, rng):
    """Seed factor columns from graph columns, sampled by squared norm.

    A column of G is a plausible membership indicator for the community
    its node belongs to; the alternating sweeps then refine scales.
    """
    n = g.shape[0]
    p = col_norms**2
    k = min(rank, int(np.count_nonzero(p)))
    cols = rng.choice(n, size=k, replace=False, p=p / p.sum())
    a = np.empty((n, rank))
    for j, c in enumerate(cols):
        a[:, j] = g[:, c] / np.sqrt(max(col_norms[c], 1e-12))
    for j in range(k, rank):
        a[:, j] = rng.uniform(0.0, 2.0 * scale, n)
    return a


def _hals_pass(g, a, b, alpha, scale, rng):
    """One sweep of column updates of a in ||g - a b^T||^2 + alpha||a - b||^2."""
    btb = b.T @ b
    gb = g @ b
    for r in range(a.shape[1]):
        num = gb[:, r] - a @ btb[:, r] + a[:, r] * btb[r, r] + alpha * b[:, r]
        col = np.maximum(num / (btb[r, r] + alpha), 0.0)
        if not col.any():
            # collapsed column: reseed so the rank is not silently lost
            col = rng.uniform(0.0, scale + 1e-12, a.shape[0])
        a[:, r] = col
    return a


# ------------------------------------------------------------ block updates


def update_factor(state: AdmmState, ws: Workspace, mode: int) -> np.ndarray:
    """Closed-form A_mode update: the R x R normal equations of the
    tensor fit, the graph fit (dropped when the mode has no graph), and
    both consensus penalties."""
    m = mode - 1
    model = state.model
    companion = _mode_companion(model.factors, mode)
    xn = unfold(ws.x, mode)
    r = model.rank
    lhs = companion.T @ companion + (state.rho_tilde + state.rho_bar) * np.eye(r)
    rhs = (
        xn.T @ companion
        + state.rho_bar * state.aux_bar[m]
        + state.rho_tilde * state.aux_tilde[m]
        - state.dual_tilde[m]
        - state.dual_bar[m]
    )
    if ws.graphs[m].present:
        d = model.weights[m]
        ab = state.aux_bar[m]
        lhs = lhs + state.mu * (d[:, None] * (ab.T @ ab) * d[None, :])
        rhs = rhs + state.mu * (ws.g[m] @ (ab * d))
    return _solve_right(lhs, rhs)


def update_weights(state: AdmmState, ws: Workspace, mode: int) -> np.ndarray:
    """Closed-form d_mode update.  Only meaningful when the mode's graph is
    present; graph-free modes keep d frozen (it appears nowhere else)."""
    m = mode - 1
    if not ws.graphs[m].present:
        raise ConfigurationError(f"mode {mode} has no graph; d is frozen there")
    a = state.model.factors[m]
    ab = state.aux_bar[m]
    r = state.model.rank
    # Khatri-Rao Gram identities: (B kr A)^T (B kr A) = (B^T B) * (A^T A)
    # and (B kr A)^T vec(G) = diag(A^T G B)
    gram = (ab.T @ ab) * (a.T @ a)
    proj = np.einsum("ir,ij,jr->r", a, ws.g[m], ab)
    lhs = state.mu * gram + state.rho_d * np.eye(r)
    rhs = state.mu * proj + state.rho_d * state.d_tilde[m] - state.dual_d[m]
    return _solve_right(lhs, rhs)


def update_factor_bar(state: AdmmState, ws: Workspace, mode: int) -> np.ndarray:
    """Closed-form Abar_mode update; graph-free modes copy A_mode directly."""
    m = mode - 1
    a = state.model.factors[m]
    if not ws.graphs[m].present:
        return a.copy()
    d = state.model.weights[m]
    r = state.model.rank
    lhs = state.mu * (d[:, None] * (a.T @ a) * d[None, :]) + state.rho_bar * np.eye(r)
    rhs = state.mu * (ws.g[m].T @ (a * d)) + state.rho_bar * a + state.dual_bar[m]
    return _solve_right(lhs, rhs)


def project_nonneg(state: AdmmState, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative copies: elementwise max(0, primal + dual/penalty)."""
    m = mode - 1
    at = np.maximum(
        state.model.factors[m] + state.dual_tilde[m] / state.rho_tilde, 0.0
    )
    dt = np.maximum(state.model.weights[m] + state.dual_d[m] / state.rho_d, 0.0)
    return at, dt


def impute_tensor(state: AdmmState, ws: Workspace) -> np.ndarray:
    """Reconstruction restricted to the unobserved tensor entries."""
    recon = cp_reconstruct(*state.model.factors)
    return mask_project(recon, ws.tensor.mask.flags, "unobserved")


def impute_graph(
    state: AdmmState, ws: Workspace, mode: int, symmetrize: bool = False
) -> np.ndarray:
    """Model fill S = A diag(d) Abar^T at the unobserved graph positions.

    The working completion uses the raw product (that is the quantity the
    block updates' fixed points assume); exported graphs pass
    symmetrize=True, averaging S with S^T before masking, since the
    model's target is symmetric while S is not until Abar meets A.
    """
    m = mode - 1
    if not ws.graphs[m].present:
        raise ConfigurationError(f"mode {mode} has no graph to impute")
    a, d = state.model.factors[m], state.model.weights[m]
    s = (a * d) @ state.aux_bar[m].T
    if symmetrize:
        s = 0.5 * (s + s.T)
    return np.where(ws.graphs[m].mask, 0.0, s)


def update_duals(
    state: AdmmState,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Dual ascent on every consensus constraint; returns the new duals."""
    new_bar, new_tilde, new_d = [], [], []
    for m in range(3):
        a, d = state.model.factors[m], state.model.weights[m]
        new_bar.append(state.dual_bar[m] + state.rho_bar * (a - state.aux_bar[m]))
        new_tilde.append(
            state.dual_tilde[m] + state.rho_tilde * (a - state.aux_tilde[m])
        )
        new_d.append(state.dual_d[m] + state.rho_d * (d - state.d_tilde[m]))
    return new_bar, new_tilde, new_d


# -------------------------------------------------------------- diagnostics


def objective(model: FactorModel, ws: Workspace, mu: float) -> float:
    """Model cost on the completed data: squared Frobenius tensor misfit
    plus mu times the symmetric-factorization misfit of each present graph
    (using A diag(d) A^T, the original coupled model)."""
    recon = cp_reconstruct(*model.factors)
    val = _fro(ws.x - recon) ** 2
    for m in range(3):
        if ws.graphs[m].present:
            a, d = model.factors[m], model.weights[m]
            val += mu * _fro(ws.g[m] - (a * d) @ a.T) ** 2
    return float(val)


def augmented_lagrangian(state: AdmmState, ws: Workspace) -> float:
    """Augmented Lagrangian whose exact block minimizers are the update ops.

    Uses the half-square fit convention (1/2 ||tensor misfit||^2 and
    mu/2 per graph term with the Abar-decoupled product) plus linear dual
    terms and rho/2 consensus penalties; `objective` reports the
    full-square model cost instead.
    """
    model = state.model
    recon = cp_reconstruct(*model.factors)
    val = 0.5 * _fro(ws.x - recon) ** 2
    for m in range(3):
        a, d = model.factors[m], model.weights[m]
        if ws.graphs[m].present:
            s = (a * d) @ state.aux_bar[m].T
            val += 0.5 * state.mu * _fro(ws.g[m] - s) ** 2
        gap_bar = a - state.aux_bar[m]
        gap_tilde = a - state.aux_tilde[m]
        gap_d = d - state.d_tilde[m]
        val += float(np.sum(state.dual_bar[m] * gap_bar))
        val += 0.5 * state.rho_bar * _fro(gap_bar) ** 2
        val += float(np.sum(state.dual_tilde[m] * gap_tilde))
        val += 0.5 * state.rho_tilde * _fro(gap_tilde) ** 2
        val += float(np.dot(state.dual_d[m], gap_d))
        val += 0.5 * state.rho_d * _fro(gap_d) ** 2
    return float(val)


def kkt_residual(state: AdmmState, ws: Workspace) -> float:
    """Worst normalized block violation of the first-order conditions.

    Covers stationarity in A_n, d_n, Abar_n (each scaled by 1 plus the
    norms of its additive operands), the consensus gaps, the sign
    conditions on the nonnegativity duals and copies, and complementarity.
    """
    model = state.model
    worst = 0.0
    for mode in _MODES:
        m = mode - 1
        a, d = model.factors[m], model.weights[m]
        ab, at, dt = state.aux_bar[m], state.aux_tilde[m], state.d_tilde[m]
        yb, yt, yd = state.dual_bar[m], state.dual_tilde[m], state.dual_d[m]
        present = ws.graphs[m].present

        companion = _mode_companion(model.factors, mode)
        xc = unfold(ws.x, mode).T @ companion
        stat_a = xc - a @ (companion.T @ companion) - yt - yb
        scale_a = 1.0 + _fro(xc) + _fro(yt) + _fro(yb)
        if present:
            abd = ab * d
            gabd = state.mu * (ws.g[m] @ abd)
            stat_a = stat_a + gabd - state.mu * ((a * d) @ (ab.T @ abd))
            scale_a += _fro(gabd)
        worst = max(worst, _fro(stat_a) / scale_a)

        if present:
            gram = (ab.T @ ab) * (a.T @ a)
            proj = state.mu * np.einsum("ir,ij,jr->r", a, ws.g[m], ab)
            stat_d = proj - state.mu * (gram @ d) - yd
            worst = max(worst, _fro(stat_d) / (1.0 + _fro(proj) + _fro(yd)))

            ad = a * d
            gad = state.mu * (ws.g[m].T @ ad)
            stat_ab = gad - state.mu * (ab @ (ad.T @ ad)) + yb
            worst = max(worst, _fro(stat_ab) / (1.0 + _fro(gad) + _fro(yb)))

        worst = max(worst, _fro(a - ab) / (1.0 + _fro(a)))
        worst = max(worst, _fro(a - at) / (1.0 + _fro(a)))
        worst = max(worst, _fro(d - dt) / (1.0 + _fro(d)))

        worst = max(worst, _fro(np.maximum(yt, 0.0)) / (1.0 + _fro(yt)))
        worst = max(worst, _fro(np.maximum(-at, 0.0)) / (1.0 + _fro(at)))
        worst = max(worst, _fro(np.maximum(yd, 0.0)) / (1.0 + _fro(yd)))
        worst = max(worst, _fro(np.maximum(-dt, 0.0)) / (1.0 + _fro(dt)))

        worst = max(worst, _fro(yt * at) / (1.0 + _fro(yt) + _fro(at)))
        worst = max(worst, _fro(yd * dt) / (1.0 + _fro(yd) + _fro(dt)))
    return float(worst)


# ----------------------------------------------------------------- driver


def _normalize_graphs(tensor: ObservedTensor, graphs) -> tuple:
    dims = tensor.dims
    if graphs is None:
        graphs = [None, None, None]
    graphs = list(graphs)
    if len(graphs) != 3:
        raise ConfigurationError(f"expected 3 graph slots, got {len(graphs)}")
    out = []
    for m, gr in enumerate(graphs):
        if gr is None:
            gr = ObservedGraph.absent(dims[m])
        if not isinstance(gr, ObservedGraph):
            raise ConfigurationError(f"graph slot {m + 1} is not an ObservedGraph")
        if gr.present and gr.n != dims[m]:
            raise ConfigurationError(
                f"graph {m + 1} has {gr.n} nodes but tensor dim is {dims[m]}"
            )
        out.append(gr)
    return tuple(out)


def fit(tensor: ObservedTensor, graphs, cfg: SolverConfig) -> FitResult:
    """Run the full ADMM loop and return factors, completions, and report.

    Initialization fits each present graph's factor by `snmf_init` (or
    uniform random when absent or cfg.init='random'); weights start at
    all-ones; auxiliary copies start at the primal values and duals at 0.
    Each iteration then updates, in order: A_n for n=1,2,3 (Gauss-Seidel),
    d_n (present modes), Abar_n, the nonnegative projections, the tensor
    and graph completions, and the duals.  Stops when the largest
    normalized consensus gap and the largest normalized dual increment
    both fall below the tolerances.
    """
    if not isinstance(tensor, ObservedTensor):
        raise ConfigurationError("fit expects an ObservedTensor")
    graphs = _normalize_graphs(tensor, graphs)
    dims = tensor.dims
    r = cfg.rank

    factors = []
    for m in range(3):
        rng = substream(cfg.seed, f"init-mode{m + 1}")
        if graphs[m].present and cfg.init == "snmf":
            factors.append(snmf_init(graphs[m], r, rng))
        else:
            factors.append(rng.uniform(0.0, 1.0, (dims[m], r)))
    model = FactorModel(factors, [np.ones(r) for _ in range(3)])
    state = AdmmState.initial(model, rho=cfg.rho, mu=cfg.mu)
    ws = Workspace.initial(tensor, graphs)

    hist = {
        name: []
        for name in (
            "gap_bar",
            "gap_tilde",
            "gap_d",
            "step_bar",
            "step_tilde",
            "step_d",
            "objective",
        )
    }
    converged = False
    hist["objective"].append(objective(state.model, ws, state.mu))
    # For graph-free modes the consensus copies track A_n exactly (zero gap
    # by construction), so the gap-based test alone would stop immediately;
    # the factor increment stands in for the collapsed blocks' residual.
    free = [m for m in range(3) if not ws.graphs[m].present]
    prev_free = {m: state.model.factors[m].copy() for m in free}

    for it in range(1, cfg.max_iters + 1):
        state.iteration = it
        # guard before the solves: a non-finite working copy (bad input or
        # a blow-up last iteration) would otherwise surface as an opaque
        # linear-algebra error inside the factor updates
        finite = np.all(np.isfinite(ws.x)) and all(
            ws.g[m] is None or np.all(np.isfinite(ws.g[m])) for m in range(3)
        )
        if not finite:
            raise DivergenceError(
                f"working data became non-finite at iteration {it}",
                iteration=it,
            )
        for mode in _MODES:
            state.model.factors[mode - 1] = update_factor(state, ws, mode)
        for mode in _MODES:
            if ws.graphs[mode - 1].present:
                state.model.weights[mode - 1] = update_weights(state, ws, mode)
        for mode in _MODES:
            state.aux_bar[mode - 1] = update_factor_bar(state, ws, mode)
        for mode in _MODES:
            at, dt = project_nonneg(state, mode)
            state.aux_tilde[mode - 1] = at
            state.d_tilde[mode - 1] = dt

        ws.x = tensor.data.values + impute_tensor(state, ws)
        for mode in _MODES:
            if ws.graphs[mode - 1].present:
                ws.g[mode - 1] = graphs[mode - 1].values + impute_graph(
                    state, ws, mode, symmetrize=False
                )

        new_bar, new_tilde, new_d = update_duals(state)
        step_bar = [_fro(new_bar[m] - state.dual_bar[m]) for m in range(3)]
        step_tilde = [_fro(new_tilde[m] - state.dual_tilde[m]) for m in range(3)]
        step_d = [_fro(new_d[m] - state.dual_d[m]) for m in range(3)]
        state.dual_bar, state.dual_tilde, state.dual_d = new_bar, new_tilde, new_d

        gap_bar = [
            _fro(state.model.factors[m] - state.aux_bar[m]) for m in range(3)
        ]
        gap_tilde = [
            _fro(state.model.factors[m] - state.aux_tilde[m]) for m in range(3)
        ]
        gap_d = [_fro(state.model.weights[m] - state.d_tilde[m]) for m in range(3)]
        obj = objective(state.model, ws, state.mu)

        hist["gap_bar"].append(gap_bar)
        hist["gap_tilde"].append(gap_tilde)
        hist["gap_d"].append(gap_d)
        hist["step_bar"].append(step_bar)
        hist["step_tilde"].append(step_tilde)
        hist["step_d"].append(step_d)
        hist["objective"].append(obj)

        finite = np.isfinite(obj) and all(
            np.all(np.isfinite(state.model.factors[m]))
            and np.all(np.isfinite(state.model.weights[m]))
            for m in range(3)
        )
        if not finite:
            raise DivergenceError(
                f"solver state became non-finite at iteration {it}", iteration=it
            )

        rel_primal = 0.0
        rel_dual = 0.0
        for m in range(3):
            sa = 1.0 + _fro(state.model.factors[m])
            sd = 1.0 + _fro(state.model.weights[m])
            rel_primal = max(
                rel_primal, gap_bar[m] / sa, gap_tilde[m] / sa, gap_d[m] / sd
            )
            rel_dual = max(
                rel_dual, step_bar[m] / sa, step_tilde[m] / sa, step_d[m] / sd
            )
        for m in free:
            sa = 1.0 + _fro(state.model.factors[m])
            inc = _fro(state.model.factors[m] - prev_free[m])
            prev_free[m] = state.model.factors[m].copy()
            rel_primal = max(rel_primal, inc / sa)
            rel_dual = max(rel_dual, state.rho_bar * inc / sa)
        if rel_primal <= cfg.tol_primal and rel_dual <= cfg.tol_dual:
            converged = True
            break

    iterations = state.iteration
    report = FitReport(
        iterations=iterations,
        converged=converged,
        primal_gap_bar=np.array(hist["gap_bar"]),
        primal_gap_tilde=np.array(hist["gap_tilde"]),
        primal_gap_d=np.array(hist["gap_d"]),
        dual_step_bar=np.array(hist["step_bar"]),
        dual_step_tilde=np.array(hist["step_tilde"]),
        dual_step_d=np.array(hist["step_d"]),
        objective_history=np.array(hist["objective"]),
        objective=float(hist["objective"][-1]),
        kkt_residual=kkt_residual(state, ws),
    )
    completed_graphs: list[Optional[np.ndarray]] = []
    for mode in _MODES:
        m = mode - 1
        if graphs[m].present:
            fill = impute_graph(state, ws, mode, symmetrize=True)
            completed_graphs.append(graphs[m].values + fill)
        else:
            completed_graphs.append(None)
    return FitResult(
        model=state.model.clamped(),
        completed=Tensor3(ws.x.copy()),
        graphs=completed_graphs,
        report=report,
    )
