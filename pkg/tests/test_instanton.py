import json

import numpy as np
import pytest

from fwlearn.dynamics import Path, gradient_flow
from fwlearn.instanton import (
    MIN_DAMPING,
    InstantonConfig,
    backward_sweep,
    forward_sweep,
    free_path,
    solve_instanton,
    verify_control,
)
from fwlearn.largedev import RareEvent, action
from fwlearn.problem import QuadraticObjective

from oracles import quadratic_fixed_point

QUAD = QuadraticObjective([0.0, 0.0])
B = np.array([1.0, 0.0])
EVENT = RareEvent(QuadraticObjective(B))


def oracle_cfg(n=10_000, **kw):
    kw = {"T": 5.0, "n_steps": n, "theta0": [0.0, 0.0], "lambda_term": 4.0, "relaxation": "aitken", **kw}
    return InstantonConfig(**kw)


@pytest.fixture(scope="module")
def oracle_run():
    return solve_instanton(QUAD, EVENT, oracle_cfg())


def test_backward_sweep_examples():
    phi = Path(5.0, np.random.default_rng(0).normal(size=(101, 2)))
    assert np.all(backward_sweep(QUAD, phi, 0.0, EVENT).values == 0.0)
    at_min = Path(5.0, np.vstack([np.zeros((100, 2)), B]))
    assert np.all(backward_sweep(QUAD, at_min, 3.0, EVENT).values == 0.0)
    phi = Path(5.0, np.tile([0.25, -0.5], (10_001, 1)))
    psi = backward_sweep(QUAD, phi, 2.0, EVENT)
    psi_T = -2.0 * (phi.terminal - B)
    exact = psi_T * np.exp(psi.times - 5.0)[:, None]
    assert np.max(np.abs(psi.values - exact)) <= 1e-6


def test_forward_sweep_examples():
    zero = Path(3.0, np.zeros((3001, 2)))
    flow, _ = gradient_flow(QUAD, [1.0, -1.0], 3.0, 3000)
    assert np.max(np.abs(forward_sweep(QUAD, zero, [1.0, -1.0]).values - flow.values)) <= flow.h
    phi_fn, psi_fn, _ = quadratic_fixed_point(B, [0.3, 0.1], 5.0, 4.0)
    t = np.linspace(0, 5.0, 10_001)
    phi = forward_sweep(QUAD, Path(5.0, psi_fn(t)), [0.3, 0.1])
    assert np.max(np.abs(phi.values - phi_fn(t))) <= 1e-6
    const = Path(10.0, np.tile([0.7, -0.2], (1001, 1)))
    assert np.allclose(forward_sweep(QUAD, const, [0.0, 0.0]).terminal, [0.7, -0.2], atol=1e-4)


def test_zero_weight_converges_immediately():
    res = solve_instanton(QUAD, EVENT, oracle_cfg(n=1000, theta0=[1.0, 1.0], lambda_term=0.0))
    assert res.converged and res.iterations == 1
    assert res.action <= 1e-6
    rep = verify_control(QUAD, res)
    assert rep.control_cost == 0.0
    assert rep.action == res.action


def test_quadratic_oracle(oracle_run):
    phi_fn, psi_fn, S = quadratic_fixed_point(B, [0.0, 0.0], 5.0, 4.0)
    t = oracle_run.phi.times
    assert oracle_run.converged
    assert oracle_run.sup_changes[-1] <= 1e-10
    assert np.max(np.abs(oracle_run.phi.values - phi_fn(t))) <= 1e-5
    assert np.max(np.abs(oracle_run.psi.values - psi_fn(t))) <= 1e-5
    assert abs(oracle_run.action - S) <= 1e-6
    assert oracle_run.action == action(QUAD, oracle_run.phi).action


def test_fixed_and_aitken_share_fixed_point(oracle_run):
    fixed = solve_instanton(QUAD, EVENT, oracle_cfg(relaxation="fixed"))
    assert fixed.converged
    assert np.max(np.abs(fixed.phi.values - oracle_run.phi.values)) <= 1e-9


def test_control_verification():
    res = solve_instanton(QUAD, EVENT, oracle_cfg(n=20_000))
    rep = verify_control(QUAD, res)
    assert rep.stationarity_residual == 0.0
    assert rep.cost_action_gap <= 1e-8


def test_damping_halves_on_oscillation():
    res = solve_instanton(QUAD, EVENT, oracle_cfg(n=500, lambda_term=10.0, relaxation="fixed"))
    assert res.converged
    assert res.damping < 1.0
    _, _, S = quadratic_fixed_point(B, [0.0, 0.0], 5.0, 10.0)
    assert res.action == pytest.approx(S, rel=1e-3)


def test_diverged_status_when_damping_exhausted():
    res = solve_instanton(QUAD, EVENT, oracle_cfg(n=500, lambda_term=100.0, relaxation="fixed"))
    assert not res.converged
    assert res.status == "diverged"
    assert res.damping < 2 * MIN_DAMPING


def test_zero_budget_reports_start():
    res = solve_instanton(QUAD, EVENT, oracle_cfg(n=200, max_iter=0))
    assert not res.converged and res.status == "max_iter" and res.iterations == 0
    np.testing.assert_array_equal(res.phi.values, free_path(QUAD, [0.0, 0.0], 5.0, 200).values)


def test_terminal_gap_monotone_in_weight():
    gaps = []
    for lam in (0.5, 1.0, 2.0, 4.0, 8.0):
        res = solve_instanton(QUAD, EVENT, oracle_cfg(n=1000, lambda_term=lam))
        gaps.append(res.terminal_phi)
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))


def test_schedule_stops_at_event():
    event = RareEvent(QuadraticObjective(B), 0.01)
    res = solve_instanton(QUAD, event, oracle_cfg(n=1000, schedule=[1, 2, 4, 8, 16, 32, 64]))
    assert res.converged and res.terminal_phi <= 0.01
    # Phi(phi(T)) = 0.5 / (1 + lam / 2)^2 first drops below 0.01 at lam = 16
    assert [leg["lambda_term"] for leg in res.legs] == [1, 2, 4, 8, 16]
    refined = solve_instanton(QUAD, event, oracle_cfg(n=1000, schedule=[1, 2, 4, 8, 16, 32], refine=10))
    assert refined.terminal_phi <= 0.01
    assert refined.terminal_phi == pytest.approx(0.01, rel=1e-2)
    assert refined.action < res.action


def test_grid_refinement():
    acts = [solve_instanton(QUAD, EVENT, oracle_cfg(n=n)).action for n in (500, 1000, 2000)]
    d1, d2 = abs(acts[1] - acts[0]), abs(acts[2] - acts[1])
    assert d2 <= 0.6 * d1
    assert d1 <= 5.0 / 500


def test_result_files(tmp_path, oracle_run):
    oracle_run.write(tmp_path / "r.json", tmp_path / "r.csv")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["converged"] and d["action"] == oracle_run.action
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "t,phi_0,phi_1,psi_0,psi_1"


@pytest.mark.parametrize("kw", [
    {"T": 0.0}, {"n_steps": 0}, {"tol": 0.0}, {"damping": 0.0}, {"damping": 1.5},
    {"relaxation": "sor"}, {"schedule": [2.0, 1.0]}, {"lambda_term": -1.0}, {"refine": -1},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        oracle_cfg(n=kw.pop("n_steps", 100), **kw)
