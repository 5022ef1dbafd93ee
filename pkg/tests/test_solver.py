import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import feasible_theta, physical_problem, synthetic_problem

from cellfree_ee import (
    FeasibleSetSpec,
    SolverConfig,
    SolverError,
    apg_inner,
    backtrack_step,
    bb_initial_step,
    eval_g,
    eval_objective,
    momentum_update,
    problem_from_arrays,
    se_per_user_theta,
    solve,
    uniform_full_power,
)
from cellfree_ee.oracles import grid_maximize, grid_maximize_fn


def test_momentum_first_iteration_reduces_to_z():
    coef_z, coef_prev, t_next = momentum_update(1.0, 1.0)
    assert coef_z == 1.0 and coef_prev == 0.0
    assert t_next == pytest.approx((math.sqrt(5) + 1) / 2)


def test_momentum_t_growth():
    t_prev, t = 1.0, 1.0
    for _ in range(100):
        _, _, t_next = momentum_update(t_prev, t)
        t_prev, t = t, t_next
    assert 50 < t < 52


def test_momentum_t_strictly_increasing():
    t = 1.0
    for _ in range(50):
        _, _, t_next = momentum_update(t, t)
        assert t_next > t
        t = t_next


def test_bb_step_values_and_fallbacks():
    assert bb_initial_step(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == 0.5
    # nonpositive curvature: grows the previously accepted step
    out = bb_initial_step(np.array([1.0, 0.0]), np.array([-1.0, 0.0]),
                          prev_alpha=0.2, grow=2.0)
    assert out == pytest.approx(0.4)
    # zero displacement: degenerate, same fallback chain
    assert bb_initial_step(np.zeros(2), np.zeros(2), prev_alpha=0.3, grow=1.0) == 0.3
    assert bb_initial_step(np.zeros(2), np.zeros(2), inv_lipschitz=1e-3) == 1e-3
    # clipping
    assert bb_initial_step(np.array([1e9]), np.array([1e-9])) == 1e6
    assert bb_initial_step(np.array([1e-9]), np.array([1e9]), lo=1e-12) == 1e-12


def _quad_value_fn(center):
    def fn(theta):
        return SimpleNamespace(f_xi=-float(((theta - center) ** 2).sum()))
    return fn


def test_backtrack_stationary_point():
    spec = FeasibleSetSpec(1, 1, 1)
    cfg = SolverConfig()
    base = np.array([0.3])
    fn = _quad_value_fn(np.array([0.3]))
    point, ev, alpha, n_bt, degraded = backtrack_step(
        base, fn(base).f_xi, np.zeros(1), 1.0, fn, spec, cfg
    )
    assert np.array_equal(point, base)
    assert n_bt == 0 and not degraded


def test_backtrack_quadratic_toy_increases():
    # maximize -(x - 0.3)^2 over [0, 1] from x=0.9 with a huge initial step
    spec = FeasibleSetSpec(1, 1, 1)
    cfg = SolverConfig()
    center = np.array([0.3])
    fn = _quad_value_fn(center)
    base = np.array([0.9])
    grad = -2.0 * (base - center)  # ascent direction
    point, ev, alpha, n_bt, degraded = backtrack_step(
        base, fn(base).f_xi, grad, 1e6, fn, spec, cfg
    )
    assert not degraded
    assert ev.f_xi > fn(base).f_xi
    # L-smooth with L = 2: termination within ceil(log_nu(alpha_min/alpha_init))
    assert n_bt <= math.ceil(math.log(1.0 / (2.0 + 2 * cfg.delta) / 1e6, cfg.nu)) + 1


def test_backtrack_degraded_keeps_base_when_allowed():
    spec = FeasibleSetSpec(1, 1, 1)
    cfg = SolverConfig(max_backtracks=3)
    # reference value unattainable: force degradation
    fn = _quad_value_fn(np.array([0.3]))
    base = np.array([0.3])
    point, ev, alpha, n_bt, degraded = backtrack_step(
        base, 1e9, np.array([1.0]), 1.0, fn, spec, cfg, include_base=True
    )
    assert degraded
    assert ev.f_xi >= fn(base).f_xi - 1e-15


def test_backtrack_raises_on_nonfinite():
    spec = FeasibleSetSpec(1, 1, 1)
    cfg = SolverConfig()

    def bad(theta):
        return SimpleNamespace(f_xi=float("nan"))

    with pytest.raises(SolverError):
        backtrack_step(np.array([0.1]), 0.0, np.array([1.0]), 1.0, bad, spec, cfg)


def test_apg_inner_matches_grid_on_single_link():
    rng = np.random.default_rng(0)
    pd = synthetic_problem(rng, M=1, K=1, pilot_of=[0], se_target=0.05)
    spec = FeasibleSetSpec(1, 1, 1)
    trace = []
    theta, ev, _, converged, _, _ = apg_inner(
        uniform_full_power(pd), 0.0, pd, SolverConfig(), spec,
        lipschitz=1e6, outer_idx=1, trace=trace,
    )
    fn = lambda pts: [eval_objective(p, pd, 0.0).f_xi for p in pts]
    _, best = grid_maximize_fn(lambda pts: np.array(fn(pts)), 1, 1, 1, 1e-4)
    assert ev.f_xi == pytest.approx(best, rel=1e-3)


def test_apg_inner_monotone_trace():
    rng = np.random.default_rng(1)
    pd = synthetic_problem(rng, M=6, K=3, pilot_of=[0, 0, 1], se_target=0.4)
    spec = FeasibleSetSpec(6, 3, 1)
    trace = []
    apg_inner(feasible_theta(rng, pd), 5.0, pd, SolverConfig(max_inner=200),
              spec, lipschitz=1e8, outer_idx=1, trace=trace)
    values = [r.f_xi for r in trace]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_apg_inner_penalty_pressure():
    rng = np.random.default_rng(2)
    pd = synthetic_problem(rng, M=8, K=4, N=1, pilot_of=[0, 0, 1, 1], se_target=0.8)
    spec = FeasibleSetSpec(8, 4, 1)
    theta0 = feasible_theta(rng, pd, scale=0.2)
    entry = eval_objective(theta0, pd, 0.0).violation
    assert entry > 0
    trace = []
    theta, ev, *_ = apg_inner(theta0, 1e4, pd, SolverConfig(max_inner=300),
                              spec, lipschitz=1e8, outer_idx=1, trace=trace)
    assert ev.violation < entry


def test_solve_single_round_when_start_feasible():
    # plenty of APs per user: neither the start nor the optimum binds QoS
    pd = physical_problem(M=20, K=4, N=2, tau_p=4, seed=2, se_target=1.0)
    assert eval_objective(uniform_full_power(pd), pd, 0.0).violation == 0.0
    res = solve(pd)
    assert res.feasible and res.converged
    assert res.outer_iters == 1
    assert res.se_per_user.min() > 1.0


def test_solve_end_to_end_feasibility():
    rng = np.random.default_rng(4)
    pd = synthetic_problem(rng, M=8, K=4, N=1, pilot_of=[0, 1, 2, 3], se_target=0.5)
    res = solve(pd)
    assert res.feasible
    assert res.violation_final <= 1e-6
    norms = (res.theta_opt.reshape(8, 4) ** 2).sum(axis=1)
    assert np.all(norms <= 1.0 + 1e-12)
    se = se_per_user_theta(res.theta_opt, pd)
    assert np.all(se >= pd.se_targets - 1e-3)
    assert np.allclose(res.eta_opt, res.theta_opt.reshape(8, 4) ** 2 / pd.gamma)


def test_solve_matches_grid_on_two_ap_instance():
    rng = np.random.default_rng(5)
    pd = synthetic_problem(rng, M=2, K=1, pilot_of=[0], se_target=0.05)
    _, ee_grid = grid_maximize(pd, 1e-3)
    res = solve(pd)
    assert res.feasible
    assert abs(res.ee - ee_grid) / ee_grid <= 1e-3


def test_solve_deterministic():
    rng = np.random.default_rng(6)
    pd = synthetic_problem(rng, M=6, K=3, pilot_of=[0, 0, 1], se_target=0.5)
    r1 = solve(pd)
    r2 = solve(pd)
    assert np.array_equal(r1.theta_opt, r2.theta_opt)
    assert [t.f_xi for t in r1.trace] == [t.f_xi for t in r2.trace]
    assert r1.ee == r2.ee


def test_solve_warm_start_bookkeeping():
    rng = np.random.default_rng(7)
    pd = synthetic_problem(rng, M=4, K=3, N=1, pilot_of=[0, 0, 0], se_target=1.1)
    snaps = []
    res = solve(pd, SolverConfig(max_inner=60), callback=lambda rec, th: snaps.append((rec, th.copy())))
    # first objective value of each round dominates the warm start under its xi
    rounds = sorted({rec.outer for rec, _ in snaps})
    for a, b in zip(rounds, rounds[1:]):
        last_theta = [th for rec, th in snaps if rec.outer == a][-1]
        xi_next = [rec.xi for rec, _ in snaps if rec.outer == b][0]
        warm = eval_objective(last_theta, pd, xi_next).f_xi
        first = [rec.f_xi for rec, _ in snaps if rec.outer == b][0]
        assert first >= warm - 1e-12 * max(abs(warm), 1.0)


def test_solve_monotone_within_rounds_fixed_step():
    rng = np.random.default_rng(8)
    pd = synthetic_problem(rng, M=5, K=3, pilot_of=[0, 1, 2], se_target=0.3)
    res = solve(pd, SolverConfig(alpha_mode="fixed", max_inner=50, max_outer=3))
    by_round = {}
    for rec in res.trace:
        by_round.setdefault(rec.outer, []).append(rec.f_xi)
    for values in by_round.values():
        assert all(b >= a for a, b in zip(values, values[1:]))


def test_solve_flags_suspected_infeasibility():
    # one single-antenna AP cannot serve two pilot-sharing users at this target
    pd = problem_from_arrays(
        beta=np.array([[1.0, 1.0]]), gamma=np.array([[0.4, 0.4]]),
        pilot_of=[0, 0], N=1, tau_c=200, tau_p=20, bandwidth_hz=1.0,
        rho_d=1.0, noise_w=1.0, se_targets=2.0,
    )
    res = solve(pd, SolverConfig(max_outer=4, max_inner=150))
    assert not res.feasible
    assert not res.converged
    assert "infeasible" in res.message


def test_solve_rejects_bad_config():
    rng = np.random.default_rng(9)
    pd = synthetic_problem(rng, M=2, K=2, pilot_of=[0, 1])
    with pytest.raises(ValueError):
        solve(pd, SolverConfig(nu=1.5))
    with pytest.raises(ValueError):
        solve(pd, SolverConfig(rho_growth=0.5))


def test_solver_error_on_nan_problem():
    pd = problem_from_arrays(
        beta=np.array([[float("nan")]]), gamma=np.array([[0.5]]), pilot_of=[0],
        N=1, tau_c=200, tau_p=20, bandwidth_hz=1.0, rho_d=1.0, noise_w=1.0,
    )
    with pytest.raises(SolverError):
        solve(pd)


def test_user_supplied_start_is_projected():
    rng = np.random.default_rng(10)
    pd = synthetic_problem(rng, M=3, K=2, pilot_of=[0, 1], se_target=0.1)
    res = solve(pd, SolverConfig(theta0=np.full(6, 5.0)))
    assert res.feasible
