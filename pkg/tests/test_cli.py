"""End-to-end command-line tests on small synthetic instances."""

import json

import numpy as np
import pytest

from cgtf.cli import main
from cgtf.dataio import load_graph, load_tensor
from cgtf.errors import ConfigurationError
from cgtf.experiments import ExperimentConfig
from cgtf.synthgen import SynthSpec

SMALL_SYNTH = {
    "dims": [10, 8, 6],
    "rank": 2,
    "community_counts": [2, None, None],
    "snr_db": 25.0,
    "tensor_missing": 0.3,
    "graph_missing": [0.5, 0.0, 0.0],
}


def config_file(tmp_path, name="cfg.json", **data):
    p = tmp_path / name
    p.write_text(json.dumps(data), encoding="utf8")
    return p


# ----------------------------------------------------------- config parsing


def test_config_unknown_top_level_key_rejected():
    with pytest.raises(ConfigurationError) as exc:
        ExperimentConfig.from_mapping(
            {"kind": "impute", "synth": SMALL_SYNTH, "rnak": 3}
        )
    assert "rnak" in str(exc.value)


def test_config_unknown_synth_key_rejected():
    bad = dict(SMALL_SYNTH, noise_kind="laplace")
    with pytest.raises(ConfigurationError) as exc:
        ExperimentConfig.from_mapping({"kind": "impute", "synth": bad})
    assert "noise_kind" in str(exc.value)


def test_config_kind_specific_key_rejected_elsewhere():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping(
            {"kind": "impute", "synth": SMALL_SYNTH, "snr_grid": [5]}
        )


def test_config_requires_data_source():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping({"kind": "impute", "rank": 2})


def test_config_rank_defaults_to_synth_rank():
    cfg = ExperimentConfig.from_mapping({"kind": "impute", "synth": SMALL_SYNTH})
    assert cfg.rank == 2


def test_config_flag_overrides_file(tmp_path):
    path = config_file(tmp_path, kind="impute", synth=SMALL_SYNTH, seed=3, mu=2.0)
    cfg = ExperimentConfig.load("impute", path, {"seed": 9, "mu": None})
    assert cfg.seed == 9  # flag wins
    assert cfg.mu == 2.0  # None override ignored
    # an unpinned synth seed follows the effective run seed
    assert cfg.synth.seed == 9


def test_config_kind_mismatch_rejected(tmp_path):
    path = config_file(tmp_path, kind="roc", synth=SMALL_SYNTH)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load("impute", path, {})


def test_config_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf8")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load("impute", p, {})


# -------------------------------------------------------------- subcommands


def run_cli(*argv):
    return main(list(argv))


def test_impute_end_to_end(tmp_path):
    cfg = config_file(
        tmp_path, kind="impute", synth=SMALL_SYNTH, max_iters=2500, seed=1
    )
    out = tmp_path / "results"
    code = run_cli("impute", "--config", str(cfg), "--out", str(out))
    assert code == 0
    completed = load_tensor(out / "completed_tensor.txt")
    assert completed.dims == (10, 8, 6)
    assert completed.mask.flags.all()
    for m in (1, 2, 3):
        g = load_graph(out / f"completed_graph_mode{m}.txt", [10, 8, 6][m - 1])
        assert g.mask.all()
    report = (out / "fit_report.csv").read_text().splitlines()
    assert report[0].startswith("iteration,objective")
    assert len(report) >= 2
    metrics = dict(
        line.split(",") for line in (out / "metrics.csv").read_text().splitlines()[1:]
    )
    assert metrics["converged"] == "1"
    assert float(metrics["nmse_missing"]) < 1.0
    assert (out / "convergence.png").stat().st_size > 0


def test_impute_exit_code_two_at_iteration_cap(tmp_path):
    cfg = config_file(tmp_path, kind="impute", synth=SMALL_SYNTH, max_iters=3)
    out = tmp_path / "capped"
    code = run_cli("impute", "--config", str(cfg), "--out", str(out))
    assert code == 2
    assert (out / "completed_tensor.txt").exists()  # outputs still written


def test_impute_from_files(tmp_path):
    synth_out = tmp_path / "data"
    cfg = config_file(tmp_path, kind="synth", synth=SMALL_SYNTH)
    assert run_cli("synth", "--config", str(cfg), "--out", str(synth_out)) == 0
    run_cfg = config_file(
        tmp_path,
        "run.json",
        kind="impute",
        tensor=str(synth_out / "tensor.txt"),
        graphs=[str(synth_out / "graph_mode1.txt"), None, None],
        truth_tensor=str(synth_out / "clean_tensor.txt"),
        rank=2,
        max_iters=400,
    )
    out = tmp_path / "fromfiles"
    code = run_cli("impute", "--config", str(run_cfg), "--out", str(out))
    assert code in (0, 2)
    metrics = dict(
        line.split(",") for line in (out / "metrics.csv").read_text().splitlines()[1:]
    )
    assert "nmse_missing" in metrics


def test_cli_error_exit_code_one(tmp_path, capsys):
    assert run_cli("impute", "--config", str(tmp_path / "missing.json")) == 1
    assert "error:" in capsys.readouterr().err


def test_snr_sweep_csv_and_figure(tmp_path):
    cfg = config_file(
        tmp_path,
        kind="snr-sweep",
        synth=SMALL_SYNTH,
        snr_grid=[5, 25],
        sweep_seeds=1,
        max_iters=60,
    )
    out = tmp_path / "sweep"
    assert run_cli("snr-sweep", "--config", str(cfg), "--out", str(out)) == 0
    lines = (out / "snr_sweep.csv").read_text().splitlines()
    assert lines[0] == "snr_db,nmse_cgtf,nmse_parafac_baseline"
    assert len(lines) == 3
    assert (out / "nmse_vs_snr.png").stat().st_size > 0


def test_snr_sweep_byte_identical_reruns(tmp_path):
    cfg = config_file(
        tmp_path,
        kind="snr-sweep",
        synth=SMALL_SYNTH,
        snr_grid=[15],
        sweep_seeds=2,
        max_iters=40,
        seed=5,
    )
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli("snr-sweep", "--config", str(cfg), "--out", str(out1)) == 0
    assert run_cli("snr-sweep", "--config", str(cfg), "--out", str(out2)) == 0
    assert (out1 / "snr_sweep.csv").read_bytes() == (out2 / "snr_sweep.csv").read_bytes()


def test_communities_outputs(tmp_path):
    cfg = config_file(
        tmp_path, kind="communities", synth=SMALL_SYNTH, max_iters=400, seed=2
    )
    out = tmp_path / "comm"
    code = run_cli("communities", "--config", str(cfg), "--out", str(out))
    assert code in (0, 2)
    labels = (out / "labels_mode1.csv").read_text().splitlines()
    assert labels[0] == "node,label,truth_label"
    assert len(labels) == 11
    # modes without planted structure have no truth column
    assert (out / "labels_mode2.csv").read_text().splitlines()[0] == "node,label"
    metrics = dict(
        line.split(",") for line in (out / "metrics.csv").read_text().splitlines()[1:]
    )
    assert "nmi_mode1" in metrics
    assert 0.0 <= float(metrics["nmi_mode1"]) <= 1.0
    cov = (out / "coverage_mode1.csv").read_text().splitlines()
    assert cov[0] == "alpha,coverage"
    assert len(cov) == 12
    assert (out / "coverage.png").stat().st_size > 0


def test_roc_outputs(tmp_path):
    cfg = config_file(
        tmp_path, kind="roc", synth=SMALL_SYNTH, max_iters=300, seed=4
    )
    out = tmp_path / "roc"
    code = run_cli("roc", "--config", str(cfg), "--out", str(out))
    assert code in (0, 2)
    for name in ("roc_tensor.csv", "roc_graph_mode1.csv"):
        lines = (out / name).read_text().splitlines()
        assert lines[0] == "threshold,tpr,fpr"
        last = lines[-1].split(",")
        assert float(last[1]) == 0.0 and float(last[2]) == 0.0
    # modes 2 and 3 are fully observed: no held-out pairs, no files
    assert not (out / "roc_graph_mode2.csv").exists()
    assert (out / "roc.png").stat().st_size > 0


def test_synth_round_trip(tmp_path):
    out = tmp_path / "ds"
    cfg = config_file(tmp_path, kind="synth", synth=dict(SMALL_SYNTH, seed=6))
    assert run_cli("synth", "--config", str(cfg), "--out", str(out)) == 0
    t = load_tensor(out / "tensor.txt")
    assert t.dims == (10, 8, 6)
    g = load_graph(out / "graph_mode1.txt", 10)
    spec = SynthSpec(seed=6, **{
        k: tuple(v) if isinstance(v, list) else v for k, v in SMALL_SYNTH.items()
    })
    from cgtf.synthgen import make_dataset

    ds = make_dataset(spec)
    np.testing.assert_array_equal(g.mask, ds.graphs[0].mask)
    np.testing.assert_array_equal(g.values, ds.graphs[0].values)
    # noisy tensor is clamped at zero on export
    np.testing.assert_array_equal(
        t.data.values, np.maximum(ds.tensor.data.values, 0.0)
    )
    labels = (out / "truth_labels_mode1.csv").read_text().splitlines()
    assert labels[0] == "node,label"
    assert len(labels) == 11


def test_thread_cap_env_validation(monkeypatch, tmp_path):
    monkeypatch.setenv("CGTF_THREADS", "zero")
    assert run_cli("synth", "--config", "nope.json") == 1
    monkeypatch.setenv("CGTF_THREADS", "2")
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    cfg = config_file(tmp_path, kind="synth", synth=SMALL_SYNTH)
    out = tmp_path / "threads"
    assert run_cli("synth", "--config", str(cfg), "--out", str(out)) == 0
    import os

    assert os.environ["OMP_NUM_THREADS"] == "2"
