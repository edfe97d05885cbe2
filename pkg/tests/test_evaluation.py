import csv

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from locsls.column import synthesize_all
from locsls.errors import InfeasibleError
from locsls.evaluation import (
    StaticFeedback,
    SweepConfig,
    benchmark_sweep,
    fir_cost,
    fir_synthesize,
    h2_cost_lyapunov,
    h2_cost_truncated,
    impulse,
    localization_leak,
    monte_carlo_cost,
    simulate_closed_loop,
    write_sweep_csv,
)
from locsls.netmodel import CostWeights, Pattern, Plant, SubsystemPartition, chain_benchmark, chain_patterns
from locsls.realization import DistributedController


def scalar_plant(a, b=1.0):
    return Plant(np.array([[a]]), np.array([[b]]), SubsystemPartition.scalar(1))


def dense(n, role):
    return Pattern(np.ones((n, n), dtype=int), role)


def test_scalar_cost_is_riccati_trace():
    plant = scalar_plant(0.5)
    w = CostWeights.identity(plant)
    clm = synthesize_all(plant, dense(1, "localization"), dense(1, "communication"), w)
    X = (0.25 + np.sqrt(4.0625)) / 2
    assert h2_cost_lyapunov(clm, w).total == pytest.approx(X, rel=1e-12)


def test_zero_weights_zero_cost(chain20):
    plant, _, clm = chain20
    zero = CostWeights(np.zeros((20, 20)), np.zeros((20, 20)))
    assert h2_cost_lyapunov(clm, zero).total == 0
    assert h2_cost_truncated(clm, zero, 5).total == 0


def test_lyapunov_equals_truncated():
    plant, weights = chain_benchmark(5)
    loc, comm, ext = chain_patterns(plant, 1)
    clm = synthesize_all(plant, loc, comm, weights, ext=ext)
    exact = h2_cost_lyapunov(clm, weights)
    trunc = h2_cost_truncated(clm, weights, 500)
    assert trunc.total == pytest.approx(exact.total, rel=1e-6)
    assert exact.total == pytest.approx(sum(exact.per_column), rel=1e-12)
    assert all(c >= 0 for c in exact.per_column)
    assert exact.method == "lyapunov" and trunc.method == "truncated"


def test_truncated_first_term_and_monotone(chain20):
    plant, weights, clm = chain20
    Px, Pu = clm.spectral_elements(1)
    first = np.trace(weights.Q) + np.trace(Pu[0].T @ weights.R @ Pu[0])
    assert h2_cost_truncated(clm, weights, 1).total == pytest.approx(first, rel=1e-12)
    vals = [h2_cost_truncated(clm, weights, K).total for K in (1, 2, 5, 20, 100)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(h2_cost_lyapunov(clm, weights).total, rel=1e-6)


def test_zero_disturbance_zero_trajectory(chain20):
    plant, _, clm = chain20
    traj = simulate_closed_loop(plant, DistributedController.from_clm(clm), np.zeros((30, 20)))
    assert not traj.x.any() and not traj.u.any()


def test_impulse_reproduces_column(chain20):
    plant, _, clm = chain20
    Px, Pu = clm.spectral_elements(50)
    traj = simulate_closed_loop(plant, DistributedController.from_clm(clm), impulse(plant, 6, 50))
    np.testing.assert_allclose(traj.x, Px[:, :, 6], atol=1e-12)
    np.testing.assert_allclose(traj.u, Pu[:, :, 6], atol=1e-12)


def test_monte_carlo_close_to_h2(chain20):
    plant, weights, clm = chain20
    h2 = h2_cost_lyapunov(clm, weights).total
    mean, se = monte_carlo_cost(plant, DistributedController.from_clm(clm), weights, T=2000, seed=0)
    assert abs(mean - h2) <= 0.05 * h2
    assert abs(mean - h2) <= 3 * se


def test_leak_zero_for_localized_controller():
    plant, weights = chain_benchmark(5)
    loc, comm, ext = chain_patterns(plant, 1)
    clm = synthesize_all(plant, loc, comm, weights, ext=ext)
    dc = DistributedController.from_clm(clm)
    for j in range(5):
        x = simulate_closed_loop(plant, dc, impulse(plant, j, 200)).x
        assert localization_leak(x, loc, plant.partition, j) <= 1e-9
    # disturbance at node 0 stays on nodes 0 and 1
    x = simulate_closed_loop(plant, dc, impulse(plant, 0, 50)).x
    assert np.abs(x[:, 2:]).max() <= 1e-12


def test_leak_of_global_lqr_is_large(chain20):
    plant, weights, clm = chain20
    loc, _, _ = chain_patterns(plant, 1)
    X = scipy.linalg.solve_discrete_are(plant.A, plant.B, weights.Q, weights.R)
    K = -np.linalg.solve(weights.R + plant.B.T @ X @ plant.B, plant.B.T @ X @ plant.A)
    x = simulate_closed_loop(plant, StaticFeedback(K), impulse(plant, 0, 200)).x
    assert localization_leak(x, loc, plant.partition, 0) > 1e-3
    assert localization_leak(x, clm.loc, plant.partition, 0) > 1e-5


def test_leak_dense_pattern_is_zero():
    plant, _ = chain_benchmark(4)
    x = np.ones((5, 4))
    assert localization_leak(x, dense(4, "localization"), plant.partition, 2) == 0.0


def test_fir_deadbeat_scalar():
    plant = scalar_plant(0.0)
    w = CostWeights(np.array([[3.0]]), np.array([[1.0]]))
    fir = fir_synthesize(plant, dense(1, "localization"), dense(1, "communication"), w, 1)
    assert fir.feasible
    assert fir_cost(fir, w) == pytest.approx(3.0, abs=1e-12)
    np.testing.assert_allclose(fir.Phi_u, 0, atol=1e-12)


def test_fir_structure(chain20):
    plant, weights, clm = chain20
    fir = fir_synthesize(plant, clm.loc, clm.comm, weights, 8)
    A, B = plant.A, plant.B
    np.testing.assert_allclose(fir.Phi_x[0], np.eye(20), atol=1e-12)
    for k in range(8):
        np.testing.assert_allclose(fir.Phi_x[k + 1], A @ fir.Phi_x[k] + B @ fir.Phi_u[k], atol=1e-9)
    np.testing.assert_allclose(A @ fir.Phi_x[8] + B @ fir.Phi_u[8], 0, atol=1e-8)
    outside = ~clm.loc.mask
    assert not fir.Phi_x[:, outside].any()


def test_fir_infeasible_regime(chain20_half):
    plant, weights, clm = chain20_half
    with pytest.raises(InfeasibleError):
        fir_synthesize(plant, clm.loc, clm.comm, weights, 3)
    fir = fir_synthesize(plant, clm.loc, clm.comm, weights, 3, raise_on_infeasible=False)
    assert not fir.feasible and fir.infeasible_columns
    with pytest.raises(InfeasibleError):
        fir_cost(fir, weights)


@settings(max_examples=8, deadline=None)
@given(st.integers(6, 12), st.floats(0.2, 0.45), st.floats(0.8, 1.4), st.integers(1, 3))
def test_fir_monotone_and_above_infinite(N, alpha, rho, d):
    plant, weights = chain_benchmark(N, alpha, rho)
    loc, comm, ext = chain_patterns(plant, d)
    inf = h2_cost_lyapunov(synthesize_all(plant, loc, comm, weights, ext=ext), weights).total
    costs = [fir_cost(fir_synthesize(plant, loc, comm, weights, T), weights) for T in range(1, 9)]
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))
    assert min(costs) >= inf - 1e-9


def test_empty_sweep():
    assert benchmark_sweep(SweepConfig(values=[])) == []


def test_sweep_csv(tmp_path):
    rows = benchmark_sweep(SweepConfig(kind="horizon", values=[3, 12, 13], repeats=1))
    path = tmp_path / "s.csv"
    write_sweep_csv(rows, path)
    with open(path) as fh:
        recs = list(csv.DictReader(fh))
    assert [r["fir_feasible"] for r in recs] == ["0", "1", "1"]
    assert recs[0]["fir_cost"] == "" and recs[0]["annotation"] == "fir:infeasible"
    assert float(recs[2]["fir_cost"]) <= float(recs[1]["fir_cost"])
    assert recs[1]["inf_cost"] == format(rows[1]["inf_cost"], ".17g")
    write_sweep_csv(rows, tmp_path / "t.csv", timing=True)
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert "inf_col_time_median" in header


def test_trajectory_csv(tmp_path, chain20):
    plant, _, clm = chain20
    traj = simulate_closed_loop(plant, DistributedController.from_clm(clm), impulse(plant, 0, 3))
    traj.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["t", "x_1"] and header[-1] == "what_20"
    assert len(header) == 1 + 20 + 20 + 20
    assert len(lines) == 4
