import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covact import (DeltaSchedule, ScenarioConfig, SolverConfig, SolverState, Termination,
                    active_set_cd, generate, random_cd)
from covact import _backend
from covact.solvers import delta_schedule, select_active_set


def state_for(cfg):
    scn, truth, obs = generate(cfg)
    return SolverState.from_scenario(scn, obs), truth


# ---------------------------------------------------------------- delta schedule

def test_delta_first_iteration_example():
    a = np.zeros(700)
    grad = np.full(700, 3.0)
    grad[17] = -50.0
    delta = delta_schedule(0, a, grad, 1e-3, 7, 100)
    assert np.allclose(delta, 0.5)


def test_delta_interior_floor():
    a = np.full(700, 0.5)
    delta = delta_schedule(20, a, np.zeros(700), 1e-3, 7, 100)
    assert delta[0] == pytest.approx(1e-3 / math.sqrt(0.3 * 700), rel=1e-12)
    assert delta[0] == pytest.approx(6.901e-5, rel=1e-4)
    assert delta_schedule(1, a, np.zeros(700), 1e-3, 7, 100)[0] == 0.2


def test_delta_partition_classes():
    a = np.array([0.0, 0.0, 1.0, 1.0, 0.3])
    grad = np.array([2.0, -4.0, 1.0, -8.0, 0.1])
    d = delta_schedule(1, a, grad, 1e-3, 1, 5)
    assert d.tolist() == pytest.approx([4e-3, 4e-3, 8e-3, 8e-3, 0.2])
    # no interior, no ones: only the zero class is used
    d = delta_schedule(0, np.zeros(3), np.array([1.0, -2.0, 0.5]), 1e-3, 1, 3)
    assert d.tolist() == pytest.approx([0.02] * 3)


def test_delta_zero_schedule():
    d = delta_schedule(0, np.zeros(4), np.ones(4), 1e-3, 1, 4, DeltaSchedule("zero"))
    assert not d.any()


def test_bad_schedule_kind():
    with pytest.raises(ValueError):
        DeltaSchedule("geometric")


# ---------------------------------------------------------------- selection

def literal_selection(a, grad, delta):
    out = set()
    for i, (x, g, t) in enumerate(zip(a, grad, delta)):
        if x == 0 and g < -t:
            out.add(i)
        if x == 1 and g > t:
            out.add(i)
        if 0 < x < 1 and abs(g) > t:
            out.add(i)
    return out


def test_selection_examples():
    assert select_active_set(np.zeros(3), np.zeros(3), np.zeros(3)).size == 0
    assert select_active_set(np.zeros(1), np.array([-0.5]), np.array([0.5])).size == 0
    assert select_active_set(np.zeros(1), np.array([-0.5000001]), np.array([0.5])).tolist() == [0]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_selection_matches_literal_sets(seed):
    r = np.random.default_rng(seed)
    n = 30
    a = r.choice([0.0, 1.0, 0.25, 0.9], size=n)
    grad = r.normal(size=n)
    delta = np.abs(r.normal(size=n)) * 0.5
    # force a few exact boundary ties
    grad[:3] = np.array([-1, 1, -1]) * delta[:3]
    assert set(select_active_set(a, grad, delta).tolist()) == literal_selection(a, grad, delta)


# ---------------------------------------------------------------- drivers

TRIVIAL = ScenarioConfig(B=7, N=10, K=0, L=6, ideal=True, seed=1)


def test_trivial_instance_random_cd():
    state, _ = state_for(TRIVIAL)
    a, rep = random_cd(state, SolverConfig(seed=1))
    assert not a.any()
    assert rep.successful_updates == 0 and rep.unnecessary_checks == 70
    assert rep.terminated_by is Termination.RESIDUAL and rep.iterations == 1


def test_trivial_instance_active_set():
    state, _ = state_for(TRIVIAL)
    a, rep = active_set_cd(state, SolverConfig(seed=1))
    assert not a.any()
    assert rep.active_set_sizes[0] == 0
    assert rep.unnecessary_checks == 0 and rep.successful_updates == 0
    assert rep.terminated_by is Termination.RESIDUAL


@pytest.mark.parametrize("normalize", [False, True])
def test_small_single_cell_recovers_truth(normalize):
    cfg = ScenarioConfig(B=1, N=8, K=2, L=8, ideal=True, seed=4, normalize=normalize)
    for solver in (random_cd, active_set_cd):
        state, truth = state_for(cfg)
        a, rep = solver(state, SolverConfig(seed=3, epsilon=1e-6))
        assert rep.terminated_by is Termination.RESIDUAL
        assert np.max(np.abs(a - truth.active)) < 1e-3


def test_determinism():
    cfg = ScenarioConfig(N=30, K=3, L=10, M=32, seed=5)
    for solver in (random_cd, active_set_cd):
        runs = []
        for _ in range(2):
            state, _ = state_for(cfg)
            a, rep = solver(state, SolverConfig(seed=9))
            runs.append((a.copy(), rep.objective_trace, rep.successful_updates, rep.unnecessary_checks))
        assert np.array_equal(runs[0][0], runs[1][0])
        assert runs[0][1:] == runs[1][1:]


@pytest.mark.parametrize("solver", [random_cd, active_set_cd])
def test_report_invariants(solver):
    state, _ = state_for(ScenarioConfig(N=40, K=4, L=12, M=64, seed=8))
    a, rep = solver(state, SolverConfig(seed=2))
    assert rep.terminated_by is Termination.RESIDUAL
    assert rep.final_residual < 1e-3
    assert np.all((a >= 0) & (a <= 1))
    assert rep.subproblems_solved == rep.successful_updates + rep.unnecessary_checks
    f = rep.objective_trace
    assert all(f[k + 1] <= f[k] + 1e-9 for k in range(len(f) - 1))
    # tracked objective follows the from-scratch value
    tr = rep.tracked_objective_trace
    assert abs(tr[-1] - f[-1]) <= 1e-6 * abs(f[-1])
    assert state.consistency_error() < 1e-6
    assert set(rep.wall_time_breakdown) == {"stats", "rootfind", "rank_one", "gradient"}
    d = rep.trace_dict()
    assert d["terminated_by"] == "Residual" and len(d["residual"]) == len(d["objective"])


def test_iteration_cap_is_reported():
    state, _ = state_for(ScenarioConfig(N=30, K=3, L=10, M=32, seed=5))
    a, rep = random_cd(state, SolverConfig(max_outer_iters=1, epsilon=1e-12))
    assert rep.terminated_by is Termination.ITER_CAP and rep.iterations == 1


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0)
    with pytest.raises(ValueError):
        SolverConfig(max_outer_iters=0)


def test_active_set_records_thresholds():
    state, _ = state_for(ScenarioConfig(N=40, K=4, L=12, M=64, seed=3))
    _, rep = active_set_cd(state, SolverConfig(seed=1))
    assert len(rep.delta_norms) == len(rep.active_set_sizes) == len(rep.residual_trace)
    assert rep.delta_limit < 1e-3


def test_active_set_fewer_checks_than_random_cd():
    cfg = ScenarioConfig(N=50, K=5, L=12, M=64, seed=12)
    s1, _ = state_for(cfg)
    s2, _ = state_for(cfg)
    a1, r1 = random_cd(s1, SolverConfig(seed=0))
    a2, r2 = active_set_cd(s2, SolverConfig(seed=0))
    assert r2.unnecessary_checks < r1.unnecessary_checks
    assert np.array_equal(a1 > 0.5, a2 > 0.5)


@pytest.mark.skipif(len(_backend.available()) < 2, reason="compiled kernel not built")
def test_backends_agree():
    cfg = ScenarioConfig(N=20, K=2, L=8, M=32, seed=6)
    out = {}
    for name in ("python", "cython"):
        state, _ = state_for(cfg)
        a, rep = active_set_cd(state, SolverConfig(seed=4, backend=name))
        out[name] = (a.copy(), rep)
    assert np.max(np.abs(out["python"][0] - out["cython"][0])) < 1e-6
    assert out["python"][1].backend == "python" and out["cython"][1].backend == "cython"


def test_backend_selection(monkeypatch):
    assert _backend.get("python").BACKEND == "python"
    monkeypatch.setenv("COVACT_BACKEND", "python")
    assert _backend.get().BACKEND == "python"
    with pytest.raises(ValueError):
        _backend.get("fortran")
