"""Experiment drivers: config parsing/validation and the run_* entry points
behind the command line.

Config files are JSON objects; every key must be recognized (typos fail
instead of silently using a default).  Command-line flags override file
values.  Each driver writes its delimited outputs plus rendered figures
into the configured output directory and returns a process exit code:
0 = success (solver converged where one ran), 2 = solver hit the iteration
cap (outputs still written), nonzero errors are raised and mapped to 1 by
the command line.
"""

import dataclasses
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .community import Partition, detect
from .dataio import load_graph, load_tensor, save_graph, save_tensor, write_csv
from .errors import ConfigurationError
from .figures import (
    convergence_figure,
    coverage_figure,
    nmse_vs_snr_figure,
    roc_figure,
)
from .metrics import coverage_curve, nmi, nmse, roc_sweep
from .multilinear import ObservedTensor
from .rng import substream
from .solver import ObservedGraph, SolverConfig, fit
from .synthgen import SynthSpec, gen_graphs, make_dataset

__all__ = [
    "ExperimentConfig",
    "run_impute",
    "run_snr_sweep",
    "run_communities",
    "run_roc",
    "run_synth",
]

KINDS = ("impute", "snr-sweep", "communities", "roc", "synth")

_COMMON_KEYS = {
    "kind",
    "out",
    "seed",
    "rank",
    "mu",
    "rho",
    "max_iters",
    "tol",
    "init",
    "tensor",
    "graphs",
    "truth_tensor",
    "synth",
}
_KIND_KEYS = {
    "impute": set(),
    "snr-sweep": {"snr_grid", "sweep_seeds"},
    "communities": {"known_communities"},
    "roc": {"roc_threshold_quantile", "num_thresholds"},
    "synth": set(),
}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthSpec)}


def _synth_from_mapping(data, default_seed: int) -> SynthSpec:
    if not isinstance(data, dict):
        raise ConfigurationError("`synth` must be an object")
    unknown = sorted(set(data) - _SYNTH_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown synth keys: {', '.join(unknown)}")
    kwargs = dict(data)
    kwargs.setdefault("seed", default_seed)
    for key in ("dims", "community_counts", "graph_missing", "cold_start"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SynthSpec(**kwargs)


@dataclass
class ExperimentConfig:
    """Validated union of the config file and command-line overrides."""

    kind: str
    out: str = "cgtf-out"
    seed: int = 0
    rank: Optional[int] = None
    mu: float = 1.0
    rho: float = 100.0
    max_iters: int = 1000
    tol: float = 1e-6
    init: str = "snmf"
    tensor: Optional[str] = None
    graphs: Optional[list] = None
    truth_tensor: Optional[str] = None
    synth: Optional[SynthSpec] = None
    snr_grid: Optional[list] = None
    sweep_seeds: int = 5
    known_communities: Optional[list] = None
    roc_threshold_quantile: float = 0.5
    num_thresholds: int = 101

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.synth is not None and self.tensor is not None:
            raise ConfigurationError("give either `synth` or `tensor`, not both")
        if self.synth is None and self.tensor is None:
            raise ConfigurationError(f"{self.kind} needs a `synth` spec or a `tensor` path")
        if self.kind in ("snr-sweep", "roc", "synth") and self.synth is None:
            raise ConfigurationError(f"{self.kind} requires a `synth` spec (needs ground truth)")
        if self.graphs is not None:
            if self.tensor is None:
                raise ConfigurationError("`graphs` only applies to file datasets")
            if len(self.graphs) != 3:
                raise ConfigurationError("`graphs` needs one entry per mode (null for none)")
        if self.kind == "snr-sweep":
            if not self.snr_grid:
                raise ConfigurationError("snr-sweep needs a non-empty `snr_grid`")
            if self.sweep_seeds < 1:
                raise ConfigurationError("sweep_seeds must be positive")
        if self.known_communities is not None and len(self.known_communities) != 3:
            raise ConfigurationError("known_communities needs one entry per mode")
        if not 0.0 <= self.roc_threshold_quantile <= 1.0:
            raise ConfigurationError("roc_threshold_quantile must lie in [0, 1]")
        if self.num_thresholds < 2:
            raise ConfigurationError("need at least two ROC thresholds")
        if self.rank is None and self.synth is not None:
            self.rank = self.synth.rank
        if self.kind != "synth" and (self.rank is None or self.rank < 1):
            raise ConfigurationError("a positive `rank` is required")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ConfigurationError(
                f"config `kind` must be one of {', '.join(KINDS)}; got {kind!r}"
            )
        unknown = sorted(set(data) - _COMMON_KEYS - _KIND_KEYS[kind])
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = dict(data)
        seed = kwargs.get("seed", 0)
        if kwargs.get("synth") is not None:
            kwargs["synth"] = _synth_from_mapping(kwargs["synth"], seed)
        return cls(**kwargs)

    @classmethod
    def load(cls, kind: str, path=None, overrides=None) -> "ExperimentConfig":
        """Merge defaults < config file < explicit overrides, then validate."""
        data = {}
        if path is not None:
            with open(path, "r", encoding="utf8") as fh:
                try:
                    data = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(data, dict):
                raise ConfigurationError(f"{path}: config must be a JSON object")
        if data.get("kind", kind) != kind:
            raise ConfigurationError(
                f"config file is for kind {data['kind']!r}, not {kind!r}"
            )
        data["kind"] = kind
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        return cls.from_mapping(data)

    def solver_config(self, seed=None) -> SolverConfig:
        return SolverConfig(
            rank=self.rank,
            mu=self.mu,
            rho=self.rho,
            max_iters=self.max_iters,
            tol_primal=self.tol,
            tol_dual=self.tol,
            seed=self.seed if seed is None else seed,
            init=self.init,
        )


# ------------------------------------------------------------ dataset access


class _Dataset:
    """Uniform view over a synth instance or loaded files."""

    def __init__(self, tensor, graphs, clean, labels):
        self.tensor = tensor
        self.graphs = graphs
        self.clean = clean  # Tensor3 ground truth, or None
        self.labels = labels  # per-mode planted labels, or Nones


def _load_dataset(cfg: ExperimentConfig) -> _Dataset:
    if cfg.synth is not None:
        ds = make_dataset(cfg.synth)
        return _Dataset(ds.tensor, ds.graphs, ds.clean, ds.labels)
    tensor = load_tensor(cfg.tensor)
    graphs = [None, None, None]
    for m, path in enumerate(cfg.graphs or [None, None, None]):
        if path is not None:
            graphs[m] = load_graph(path, tensor.dims[m])
    clean = None
    if cfg.truth_tensor is not None:
        truth = load_tensor(cfg.truth_tensor)
        if not truth.mask.flags.all():
            raise ConfigurationError("truth tensor file must be fully observed")
        clean = truth.data
    return _Dataset(tensor, graphs, clean, [None, None, None])


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_fit_report(out: Path, report) -> None:
    rows = []
    for i in range(report.iterations):
        rows.append(
            (
                i + 1,
                report.objective_history[i + 1],
                report.primal_gap_bar[i].max(),
                report.primal_gap_tilde[i].max(),
                report.primal_gap_d[i].max(),
                report.dual_step_bar[i].max(),
                report.dual_step_tilde[i].max(),
                report.dual_step_d[i].max(),
            )
        )
    write_csv(
        out / "fit_report.csv",
        [
            "iteration",
            "objective",
            "gap_factor_copy",
            "gap_nonneg_copy",
            "gap_weight_copy",
            "step_factor_dual",
            "step_nonneg_dual",
            "step_weight_dual",
        ],
        rows,
    )


def _completed_tensor(res) -> ObservedTensor:
    # exports are clamped: the model is nonnegative, so negative values in
    # the completion are noise or pre-convergence artifacts, and the tensor
    # file format (deliberately) refuses negative data
    return ObservedTensor.create(np.maximum(res.completed.values, 0.0))


def _completed_graph(res, m: int) -> ObservedGraph:
    return ObservedGraph.create(np.maximum(res.graphs[m], 0.0))


# ------------------------------------------------------------------ drivers


def run_impute(cfg: ExperimentConfig) -> int:
    """Fit, write the completed tensor/graphs, report, metrics, and figure."""
    out = _outdir(cfg)
    data = _load_dataset(cfg)
    res = fit(data.tensor, data.graphs, cfg.solver_config())

    save_tensor(out / "completed_tensor.txt", _completed_tensor(res))
    for m in range(3):
        if res.graphs[m] is not None:
            save_graph(
                out / f"completed_graph_mode{m + 1}.txt", _completed_graph(res, m)
            )
    _write_fit_report(out, res.report)

    metrics = [
        ("converged", int(res.report.converged)),
        ("iterations", res.report.iterations),
        ("objective_init", res.report.objective_history[0]),
        ("objective_final", res.report.objective),
        ("kkt_residual", res.report.kkt_residual),
    ]
    if data.clean is not None:
        held = ~data.tensor.mask.flags
        metrics.append(("nmse_missing", nmse(res.completed, data.clean, held)))
        metrics.append(
            ("nmse_observed", nmse(res.completed, data.clean, ~held))
        )
    write_csv(out / "metrics.csv", ["metric", "value"], metrics)
    convergence_figure(res.report, out / "convergence.png")
    return 0 if res.report.converged else 2


def run_snr_sweep(cfg: ExperimentConfig) -> int:
    """Imputation error against noise level, coupled fit vs tensor-only
    baseline (mu = 0, no graphs, random init), averaged over repetitions."""
    out = _outdir(cfg)
    rows = []
    for snr in cfg.snr_grid:
        nmse_coupled, nmse_baseline = [], []
        for rep in range(cfg.sweep_seeds):
            dseed = int(
                substream(cfg.seed, f"sweep-snr{snr}-rep{rep}").integers(2**31)
            )
            ds = make_dataset(replace(cfg.synth, snr_db=float(snr), seed=dseed))
            held = ~ds.tensor.mask.flags
            res_c = fit(ds.tensor, ds.graphs, cfg.solver_config(seed=dseed))
            base_cfg = replace(
                cfg.solver_config(seed=dseed), mu=0.0, init="random"
            )
            res_b = fit(ds.tensor, None, base_cfg)
            nmse_coupled.append(nmse(res_c.completed, ds.clean, held))
            nmse_baseline.append(nmse(res_b.completed, ds.clean, held))
        rows.append(
            (
                float(snr),
                float(np.mean(nmse_coupled)),
                float(np.mean(nmse_baseline)),
            )
        )
    write_csv(
        out / "snr_sweep.csv",
        ["snr_db", "nmse_cgtf", "nmse_parafac_baseline"],
        rows,
    )
    nmse_vs_snr_figure(rows, out / "nmse_vs_snr.png")
    return 0


def run_communities(cfg: ExperimentConfig) -> int:
    """Fit, assign communities per mode, and score them when truth exists."""
    out = _outdir(cfg)
    data = _load_dataset(cfg)
    res = fit(data.tensor, data.graphs, cfg.solver_config())

    known = cfg.known_communities or [None, None, None]
    summary = []
    curves = {}
    for m in range(3):
        part = detect(res.model, m + 1, known[m], seed=cfg.seed)
        truth = data.labels[m]
        header = ["node", "label"] + (["truth_label"] if truth is not None else [])
        rows = [
            (i, part.labels[i]) + ((truth[i],) if truth is not None else ())
            for i in range(part.size)
        ]
        write_csv(out / f"labels_mode{m + 1}.csv", header, rows)
        if truth is not None:
            truth_part = Partition(truth, int(truth.max()))
            summary.append((f"nmi_mode{m + 1}", nmi(truth_part, part)))
        if res.graphs[m] is not None:
            pts = coverage_curve(_completed_graph(res, m).values, part)
            write_csv(
                out / f"coverage_mode{m + 1}.csv",
                ["alpha", "coverage"],
                [(p.alpha, p.coverage) for p in pts],
            )
            curves[f"mode {m + 1}"] = pts
    summary.append(("converged", int(res.report.converged)))
    summary.append(("iterations", res.report.iterations))
    write_csv(out / "metrics.csv", ["metric", "value"], summary)
    if curves:
        coverage_figure(curves, out / "coverage.png")
    return 0 if res.report.converged else 2


def run_roc(cfg: ExperimentConfig) -> int:
    """Detection sweep on held-out entries: completed values as scores,
    thresholded ground truth as the binary labels."""
    out = _outdir(cfg)
    ds = make_dataset(cfg.synth)
    res = fit(ds.tensor, ds.graphs, cfg.solver_config())

    def binarize(truth_values):
        thr = np.quantile(truth_values, cfg.roc_threshold_quantile)
        return truth_values >= thr

    curves = {}
    held = ~ds.tensor.mask.flags
    if held.any():
        scores = res.completed.values[held]
        truth = binarize(ds.clean.values[held])
        pts = roc_sweep(scores, truth, cfg.num_thresholds)
        write_csv(
            out / "roc_tensor.csv",
            ["threshold", "tpr", "fpr"],
            [tuple(p) for p in pts],
        )
        curves["tensor"] = pts

    full_graphs = gen_graphs(ds.truth.factors, ds.truth.weights)
    for m in range(3):
        gmask = ds.graphs[m].mask
        held_pairs = np.triu(~gmask)  # one orientation per unordered pair
        if not held_pairs.any():
            continue
        completed = res.graphs[m]
        scores = completed[held_pairs]
        truth = binarize(full_graphs[m][held_pairs])
        pts = roc_sweep(scores, truth, cfg.num_thresholds)
        write_csv(
            out / f"roc_graph_mode{m + 1}.csv",
            ["threshold", "tpr", "fpr"],
            [tuple(p) for p in pts],
        )
        curves[f"graph mode {m + 1}"] = pts

    if not curves:
        raise ConfigurationError(
            "roc needs held-out tensor entries or graph pairs (nothing is missing)"
        )
    roc_figure(curves, out / "roc.png")
    return 0 if res.report.converged else 2


def run_synth(cfg: ExperimentConfig) -> int:
    """Generate a dataset and write it in the loadable file formats."""
    out = _outdir(cfg)
    ds = make_dataset(cfg.synth)

    # the file format refuses negative values, so the noisy tensor is
    # clamped at zero on export; heavy noise is therefore censored in the
    # saved copy (the in-memory pipeline keeps raw values)
    clamped = np.maximum(ds.tensor.data.values, 0.0)
    save_tensor(
        out / "tensor.txt",
        ObservedTensor.create(clamped, ds.tensor.mask.flags),
    )
    save_tensor(out / "clean_tensor.txt", ObservedTensor.create(ds.clean.values))
    for m in range(3):
        save_graph(out / f"graph_mode{m + 1}.txt", ds.graphs[m])
        if ds.labels[m] is not None:
            write_csv(
                out / f"truth_labels_mode{m + 1}.csv",
                ["node", "label"],
                list(enumerate(ds.labels[m])),
            )
    return 0
