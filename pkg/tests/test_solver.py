"""Solver contract tests: initialization, block updates, diagnostics, fit."""

import copy

import numpy as np
import pytest

from cgtf.errors import ConfigurationError, DivergenceError
from cgtf.multilinear import ObservedTensor, cp_reconstruct, mask_project
from cgtf.solver import (
    AdmmState,
    FactorModel,
    ObservedGraph,
    SolverConfig,
    Workspace,
    augmented_lagrangian,
    fit,
    impute_graph,
    impute_tensor,
    kkt_residual,
    objective,
    project_nonneg,
    snmf_init,
    update_duals,
    update_factor,
    update_factor_bar,
    update_weights,
)

from fdcheck import fd_gradient, random_instance


def exact_instance(seed=0, dims=(8, 7, 6), rank=2, missing=0.0):
    """Noiseless rank-R tensor with exact fully observed graphs, and a
    state sitting exactly at the generative solution with zero duals."""
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(0.1, 1.0, (n, rank)) for n in dims]
    weights = [rng.uniform(0.5, 1.5, rank) for _ in range(3)]
    x = cp_reconstruct(*factors)
    flags = rng.random(dims) >= missing
    tensor = ObservedTensor.create(x, flags)
    graphs = [
        ObservedGraph.create((f * w) @ f.T) for f, w in zip(factors, weights)
    ]
    model = FactorModel([f.copy() for f in factors], [w.copy() for w in weights])
    state = AdmmState.initial(model, rho=100.0, mu=1.0)
    ws = Workspace.initial(tensor, graphs)
    ws.x = x.copy()  # completed with the exact reconstruction
    return state, ws, x


# ------------------------------------------------------------- snmf_init


def test_snmf_identity_graph():
    n = 12
    g = ObservedGraph.create(np.eye(n))
    a = snmf_init(g, n, seed=3)
    assert np.all(a >= 0)
    assert np.linalg.norm(np.eye(n) - a @ a.T) <= 0.1 * np.linalg.norm(np.eye(n))


def test_snmf_two_cliques():
    block = np.ones((3, 3)) - np.eye(3)
    g = np.zeros((6, 6))
    g[:3, :3] = block
    g[3:, 3:] = block
    a = snmf_init(ObservedGraph.create(g), 2, seed=0)
    labels = a.argmax(axis=1)
    assert len(set(labels[:3])) == 1
    assert len(set(labels[3:])) == 1
    assert labels[0] != labels[3]


def test_snmf_zero_graph_small_positive():
    a = snmf_init(ObservedGraph.create(np.zeros((5, 5))), 2, seed=1)
    assert a.shape == (5, 2)
    assert np.all(a >= 0)
    assert np.abs(a).max() < 0.1  # small, not a crash


def test_snmf_rank_too_large():
    with pytest.raises(ConfigurationError):
        snmf_init(ObservedGraph.create(np.eye(3)), 4)


def test_snmf_deterministic():
    g = ObservedGraph.create(np.eye(6))
    np.testing.assert_array_equal(snmf_init(g, 3, seed=9), snmf_init(g, 3, seed=9))


def test_snmf_absent_graph_rejected():
    with pytest.raises(ConfigurationError):
        snmf_init(ObservedGraph.absent(4), 2)


# ------------------------------------------------------------ ObservedGraph


def test_observed_graph_asymmetric_rejected():
    v = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ConfigurationError):
        ObservedGraph.create(v)


def test_observed_graph_negative_rejected():
    with pytest.raises(ConfigurationError):
        ObservedGraph.create(-np.eye(2))


def test_observed_graph_zeroes_hidden():
    v = np.ones((3, 3))
    m = np.zeros((3, 3), dtype=bool)
    g = ObservedGraph.create(v, m)
    assert not g.values.any()


# ------------------------------------------------------------ update_factor


def test_update_factor_proximal_limit():
    state, ws = random_instance(5)
    big = 1e12
    state.rho_bar = big
    state.rho_tilde = big
    for m in range(3):
        state.aux_tilde[m] = state.aux_bar[m].copy()
        state.dual_bar[m][:] = 0.0
        state.dual_tilde[m][:] = 0.0
    a = update_factor(state, ws, 1)
    target = state.aux_bar[0]
    assert np.linalg.norm(a - target) <= 1e-6 * np.linalg.norm(target)


def test_update_factor_noiseless_fixed_point():
    state, ws, _ = exact_instance()
    for mode in (1, 2, 3):
        a_old = state.model.factors[mode - 1]
        a_new = update_factor(state, ws, mode)
        assert np.linalg.norm(a_new - a_old) <= 1e-10 * (
            1 + np.linalg.norm(a_old)
        )
        state.model.factors[mode - 1] = a_new


@pytest.mark.parametrize("present", [(True, True, True), (True, False, True)])
def test_update_factor_fd_stationarity(present):
    state, ws = random_instance(11, present=present)
    for mode in (1, 2, 3):
        ref = np.abs(fd_gradient(state, ws, mode, "factor")).max()
        work = copy.deepcopy(state)
        work.model.factors[mode - 1] = update_factor(work, ws, mode)
        grad = fd_gradient(work, ws, mode, "factor")
        assert np.abs(grad).max() < 1e-5 * (1.0 + ref)


# ----------------------------------------------------------- update_weights


def test_update_weights_mu_zero_returns_copy_target():
    state, ws = random_instance(2)
    state.mu = 0.0
    for m in range(3):
        state.dual_d[m][:] = 0.0
    d = update_weights(state, ws, 1)
    np.testing.assert_allclose(d, state.d_tilde[0], rtol=0, atol=1e-12)


def test_update_weights_recovers_exact_scaling():
    # G built from known weights; with mu >> rho the solve lands on them
    rng = np.random.default_rng(4)
    n, r = 10, 3
    a = rng.uniform(0.1, 1.0, (n, r))
    d_true = rng.uniform(0.5, 2.0, r)
    g = ObservedGraph.create((a * d_true) @ a.T)
    tensor = ObservedTensor.create(rng.uniform(0, 1, (n, 4, 3)))
    state, _ = random_instance(4, dims=(n, 4, 3), rank=r)
    state.model.factors[0] = a
    state.aux_bar[0] = a.copy()
    state.dual_d[0][:] = 0.0
    state.mu = 1e8
    ws = Workspace.initial(tensor, (g, ObservedGraph.absent(4), ObservedGraph.absent(3)))
    d = update_weights(state, ws, 1)
    assert np.linalg.norm(d - d_true) <= 1e-6 * np.linalg.norm(d_true)


def test_update_weights_fd_stationarity():
    state, ws = random_instance(13)
    for mode in (1, 2, 3):
        ref = np.abs(fd_gradient(state, ws, mode, "weights")).max()
        work = copy.deepcopy(state)
        work.model.weights[mode - 1] = update_weights(work, ws, mode)
        grad = fd_gradient(work, ws, mode, "weights")
        assert np.abs(grad).max() < 1e-5 * (1.0 + ref)


def test_update_weights_graph_free_mode_rejected():
    state, ws = random_instance(3, present=(True, False, True))
    with pytest.raises(ConfigurationError):
        update_weights(state, ws, 2)


# -------------------------------------------------------- update_factor_bar


def test_update_factor_bar_mu_zero_zero_dual():
    state, ws = random_instance(6)
    state.mu = 0.0
    state.dual_bar[0][:] = 0.0
    ab = update_factor_bar(state, ws, 1)
    np.testing.assert_allclose(ab, state.model.factors[0], rtol=0, atol=1e-12)


def test_update_factor_bar_noiseless_fixed_point():
    state, ws, _ = exact_instance()
    for mode in (1, 2, 3):
        ab = update_factor_bar(state, ws, mode)
        target = state.aux_bar[mode - 1]
        assert np.linalg.norm(ab - target) <= 1e-10 * (
            1 + np.linalg.norm(target)
        )


def test_update_factor_bar_fd_stationarity():
    state, ws = random_instance(17)
    for mode in (1, 2, 3):
        ref = np.abs(fd_gradient(state, ws, mode, "factor_bar")).max()
        work = copy.deepcopy(state)
        work.aux_bar[mode - 1] = update_factor_bar(work, ws, mode)
        grad = fd_gradient(work, ws, mode, "factor_bar")
        assert np.abs(grad).max() < 1e-5 * (1.0 + ref)


def test_update_factor_bar_graph_free_copies_factor():
    state, ws = random_instance(8, present=(True, False, True))
    ab = update_factor_bar(state, ws, 2)
    np.testing.assert_array_equal(ab, state.model.factors[1])


# ------------------------------------------------------------ project_nonneg


def test_project_nonneg_nonnegative_identity():
    state, ws = random_instance(1)
    state.model.factors[0] = np.abs(state.model.factors[0])
    state.dual_tilde[0][:] = 0.0
    state.dual_d[0][:] = 0.0
    at, dt = project_nonneg(state, 1)
    np.testing.assert_array_equal(at, state.model.factors[0])
    np.testing.assert_array_equal(dt, np.maximum(state.model.weights[0], 0.0))


def test_project_nonneg_all_negative():
    state, _ = random_instance(1)
    state.model.factors[0] = -np.ones_like(state.model.factors[0])
    state.dual_tilde[0][:] = 0.0
    at, _ = project_nonneg(state, 1)
    assert not at.any()


def test_project_nonneg_elementwise_oracle():
    state, _ = random_instance(9)
    at, dt = project_nonneg(state, 2)
    want_a = np.maximum(
        state.model.factors[1] + state.dual_tilde[1] / state.rho_tilde, 0.0
    )
    want_d = np.maximum(
        state.model.weights[1] + state.dual_d[1] / state.rho_d, 0.0
    )
    np.testing.assert_array_equal(at, want_a)
    np.testing.assert_array_equal(dt, want_d)
    assert np.all(at >= 0) and np.all(dt >= 0)


# ------------------------------------------------------------- imputations


def test_impute_tensor_fully_observed():
    state, ws = random_instance(3)
    ws.tensor = ObservedTensor.create(ws.tensor.data.values)
    assert not impute_tensor(state, ws).any()


def test_impute_tensor_fully_missing():
    state, ws = random_instance(3)
    dims = ws.tensor.dims
    ws.tensor = ObservedTensor.create(
        np.zeros(dims), np.zeros(dims, dtype=bool)
    )
    fill = impute_tensor(state, ws)
    np.testing.assert_allclose(
        fill, cp_reconstruct(*state.model.factors), atol=1e-14
    )


def test_impute_tensor_complementary_split():
    state, ws = random_instance(21)
    fill = impute_tensor(state, ws)
    recon = cp_reconstruct(*state.model.factors)
    flags = ws.tensor.mask.flags
    np.testing.assert_allclose(
        fill + mask_project(recon, flags, "observed"), recon, atol=1e-14
    )


def test_impute_graph_split_and_symmetrize():
    state, ws = random_instance(23)
    a, d = state.model.factors[0], state.model.weights[0]
    s = (a * d) @ state.aux_bar[0].T
    raw = impute_graph(state, ws, 1, symmetrize=False)
    sym = impute_graph(state, ws, 1, symmetrize=True)
    gmask = ws.graphs[0].mask
    np.testing.assert_allclose(raw, np.where(gmask, 0.0, s), atol=1e-14)
    np.testing.assert_allclose(
        sym, np.where(gmask, 0.0, 0.5 * (s + s.T)), atol=1e-14
    )
    assert not raw[gmask].any()


def test_impute_graph_absent_mode_rejected():
    state, ws = random_instance(3, present=(True, False, True))
    with pytest.raises(ConfigurationError):
        impute_graph(state, ws, 2)


# ------------------------------------------------------------- update_duals


def test_update_duals_no_gap_unchanged():
    state, _ = random_instance(2)
    for m in range(3):
        state.aux_bar[m] = state.model.factors[m].copy()
        state.aux_tilde[m] = state.model.factors[m].copy()
        state.d_tilde[m] = state.model.weights[m].copy()
    nb, nt, nd = update_duals(state)
    for m in range(3):
        np.testing.assert_array_equal(nb[m], state.dual_bar[m])
        np.testing.assert_array_equal(nt[m], state.dual_tilde[m])
        np.testing.assert_array_equal(nd[m], state.dual_d[m])


def test_update_duals_unit_gap():
    state, _ = random_instance(2)
    state.rho_bar = state.rho_tilde = state.rho_d = 100.0
    for m in range(3):
        state.aux_bar[m] = state.model.factors[m] - 1.0
        state.aux_tilde[m] = state.model.factors[m] - 1.0
        state.d_tilde[m] = state.model.weights[m] - 1.0
        state.dual_bar[m][:] = 0.0
        state.dual_tilde[m][:] = 0.0
        state.dual_d[m][:] = 0.0
    nb, nt, nd = update_duals(state)
    for m in range(3):
        np.testing.assert_allclose(nb[m], 100.0)
        np.testing.assert_allclose(nt[m], 100.0)
        np.testing.assert_allclose(nd[m], 100.0)


def test_update_duals_formula_oracle():
    state, _ = random_instance(14)
    nb, nt, nd = update_duals(state)
    for m in range(3):
        np.testing.assert_allclose(
            nb[m],
            state.dual_bar[m]
            + state.rho_bar * (state.model.factors[m] - state.aux_bar[m]),
            atol=1e-12,
        )
        np.testing.assert_allclose(
            nd[m],
            state.dual_d[m]
            + state.rho_d * (state.model.weights[m] - state.d_tilde[m]),
            atol=1e-12,
        )
        np.testing.assert_allclose(
            nt[m],
            state.dual_tilde[m]
            + state.rho_tilde * (state.model.factors[m] - state.aux_tilde[m]),
            atol=1e-12,
        )


# ---------------------------------------------------------------- objective


def test_objective_zero_at_exact():
    state, ws, _ = exact_instance()
    assert objective(state.model, ws, mu=1.0) <= 1e-18


def test_objective_formula_oracle():
    state, ws = random_instance(31)
    mu = 1.7
    recon = cp_reconstruct(*state.model.factors)
    want = np.linalg.norm(ws.x - recon) ** 2
    for m in range(3):
        if ws.graphs[m].present:
            a, d = state.model.factors[m], state.model.weights[m]
            want += mu * np.linalg.norm(ws.g[m] - (a * d) @ a.T) ** 2
    got = objective(state.model, ws, mu)
    assert abs(got - want) <= 1e-9 * (1 + want)


def test_objective_mu_zero_tensor_only():
    state, ws = random_instance(31)
    recon = cp_reconstruct(*state.model.factors)
    want = np.linalg.norm(ws.x - recon) ** 2
    assert abs(objective(state.model, ws, 0.0) - want) <= 1e-9 * (1 + want)


# ------------------------------------------------------------- kkt_residual


def test_kkt_zero_at_exact_solution():
    state, ws, _ = exact_instance()
    assert kkt_residual(state, ws) < 1e-8


def test_kkt_positive_at_random_point():
    state, ws = random_instance(41)
    assert kkt_residual(state, ws) > 1e-3


def test_kkt_small_after_tight_fit():
    state, ws, x = exact_instance(seed=2, dims=(6, 5, 4), rank=2, missing=0.3)
    tensor = ws.tensor
    res = fit(tensor, ws.graphs, SolverConfig(rank=2, max_iters=4000, seed=0))
    assert res.report.converged
    assert res.report.kkt_residual <= 1e-3


# ----------------------------------------------------------------------- fit


def test_fit_deterministic():
    state, ws, _ = exact_instance(seed=5, dims=(6, 5, 4), rank=2, missing=0.2)
    cfg = SolverConfig(rank=2, max_iters=50, seed=7)
    r1 = fit(ws.tensor, ws.graphs, cfg)
    r2 = fit(ws.tensor, ws.graphs, cfg)
    assert r1.report.iterations == r2.report.iterations
    for m in range(3):
        np.testing.assert_array_equal(r1.model.factors[m], r2.model.factors[m])
        np.testing.assert_array_equal(r1.model.weights[m], r2.model.weights[m])
    np.testing.assert_array_equal(
        r1.report.objective_history, r2.report.objective_history
    )


def test_fit_histories_match_iterations():
    state, ws, _ = exact_instance(seed=5, dims=(6, 5, 4), rank=2, missing=0.2)
    cfg = SolverConfig(rank=2, max_iters=17, tol_primal=1e-14, tol_dual=1e-14, seed=1)
    res = fit(ws.tensor, ws.graphs, cfg)
    assert not res.report.converged
    assert res.report.iterations == 17
    for h in (
        res.report.primal_gap_bar,
        res.report.primal_gap_tilde,
        res.report.primal_gap_d,
        res.report.dual_step_bar,
        res.report.dual_step_tilde,
        res.report.dual_step_d,
    ):
        assert h.shape == (17, 3)
    # objective history carries the initialization value up front
    assert res.report.objective_history.shape == (18,)


def test_fit_mu_zero_objective_decreases():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (6, 5, 4))
    tensor = ObservedTensor.create(x)
    cfg = SolverConfig(rank=2, mu=0.0, max_iters=60, seed=2, init="random")
    res = fit(tensor, None, cfg)
    hist = res.report.objective_history
    assert hist[-1] < hist[0]


def test_fit_graphs_absent_matches_mu_zero_path():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (6, 5, 4))
    flags = rng.random((6, 5, 4)) < 0.7
    tensor = ObservedTensor.create(x, flags)
    res_a = fit(tensor, None, SolverConfig(rank=2, mu=7.5, max_iters=40, seed=2))
    res_b = fit(tensor, None, SolverConfig(rank=2, mu=0.0, max_iters=40, seed=2))
    np.testing.assert_array_equal(
        res_a.report.objective_history, res_b.report.objective_history
    )


def test_fit_exported_model_nonnegative():
    state, ws, _ = exact_instance(seed=5, dims=(6, 5, 4), rank=2, missing=0.2)
    res = fit(ws.tensor, ws.graphs, SolverConfig(rank=2, max_iters=30, seed=3))
    for m in range(3):
        assert np.all(res.model.factors[m] >= 0)
        assert np.all(res.model.weights[m] >= 0)


def test_fit_copies_nonnegative_every_iteration():
    # run the op sequence by hand and check the projected copies stay >= 0
    state, ws = random_instance(19)
    graphs = ws.graphs
    tensor = ws.tensor
    for _ in range(10):
        for mode in (1, 2, 3):
            state.model.factors[mode - 1] = update_factor(state, ws, mode)
        for mode in (1, 2, 3):
            if graphs[mode - 1].present:
                state.model.weights[mode - 1] = update_weights(state, ws, mode)
        for mode in (1, 2, 3):
            state.aux_bar[mode - 1] = update_factor_bar(state, ws, mode)
        for mode in (1, 2, 3):
            at, dt = project_nonneg(state, mode)
            state.aux_tilde[mode - 1] = at
            state.d_tilde[mode - 1] = dt
            assert np.all(at >= 0)
            assert np.all(dt >= 0)
        ws.x = tensor.data.values + impute_tensor(state, ws)
        for mode in (1, 2, 3):
            if graphs[mode - 1].present:
                ws.g[mode - 1] = graphs[mode - 1].values + impute_graph(
                    state, ws, mode
                )
        state.dual_bar, state.dual_tilde, state.dual_d = update_duals(state)


def test_fit_divergence_error_on_nonfinite_input():
    x = np.full((3, 3, 3), np.nan)
    tensor = ObservedTensor.create(x)
    with pytest.raises(DivergenceError) as exc:
        fit(tensor, None, SolverConfig(rank=1, max_iters=5, seed=0))
    assert exc.value.iteration == 1


def test_fit_dim_mismatch_rejected():
    tensor = ObservedTensor.create(np.zeros((3, 4, 2)))
    bad = ObservedGraph.create(np.eye(5))
    with pytest.raises(ConfigurationError):
        fit(tensor, [bad, None, None], SolverConfig(rank=1))


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(rank=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(rank=1, rho=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(rank=1, mu=-1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(rank=1, init="spectral")
