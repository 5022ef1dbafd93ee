"""Penalty loop wrapped around an accelerated projected gradient method.

Outer loop: maximize the penalized objective for a fixed penalty weight,
then grow the weight geometrically until the QoS residuals vanish, warm
starting each round at the previous solution.

Inner loop: momentum extrapolation, a projected ascent step from the
extrapolated point, and a monitor step from the current iterate whose
comparison guarantees the objective never decreases.  Step sizes come from
a spectral (Barzilai-Borwein style) estimate refined by a backtracking
line search; a fixed-step mode driven by the conservative Lipschitz bound
is available for certification runs.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .objective import (
    conservative_lipschitz_bound,
    eval_objective,
    eval_objective_and_grad,
)
from .problem import ProblemData, theta_to_eta, uniform_full_power
from .projection import FeasibleSetSpec, project


class SolverError(RuntimeError):
    """Raised when an evaluation turns non-finite mid-run."""


@dataclass
class SolverConfig:
    alpha_mode: str = "bb"        # "bb" (line search) or "fixed" (0.99/L)
    nu: float = 0.5               # backtracking shrink factor
    delta: float = 1e-6           # sufficient-increase margin
    varsigma: float = 1e-3        # relative-progress tolerance
    inner_window: int = 10        # iterations between progress comparisons
    xi0: float | None = None      # initial penalty; None picks it adaptively
    rho_growth: float = 10.0      # penalty growth per outer round
    eps_feas: float = 1e-6        # tolerance on max_k max(0, g_k)
    qos_slack: float = 1e-3       # tolerated per-user SE shortfall, bit/s/Hz
    max_inner: int = 2000
    max_outer: int = 30
    max_backtracks: int = 60
    alpha_min: float = 1e-12
    alpha_max: float = 1e6
    theta0: np.ndarray | None = None  # defaults to uniform full power

    def validate(self):
        if not (0.0 < self.nu < 1.0):
            raise ValueError("nu must lie in (0, 1)")
        if self.delta <= 0 or self.varsigma <= 0:
            raise ValueError("delta and varsigma must be positive")
        if self.rho_growth <= 1.0:
            raise ValueError("penalty growth must exceed 1")
        if self.alpha_mode not in ("bb", "fixed"):
            raise ValueError("alpha_mode must be 'bb' or 'fixed'")


@dataclass
class IterationRecord:
    outer: int
    inner: int
    xi: float
    f_xi: float
    ee_term: float
    penalty_sum: float
    violation: float
    alpha_y: float
    alpha_theta: float
    branch: str          # 'z', 'v', or 'hold'
    backtracks: int


@dataclass
class SolverResult:
    theta_opt: np.ndarray
    eta_opt: np.ndarray
    ee: float
    se_per_user: np.ndarray
    violation_final: float
    power_report: dict
    outer_iters: int
    inner_iters_total: int
    backtracks_total: int
    wall_time_s: float
    trace: list = field(repr=False)
    converged: bool = True
    feasible: bool = True
    xi_final: float = 0.0
    message: str = ""


def momentum_update(t_prev, t):
    """Extrapolation coefficients for the momentum point and the next t.

    Returns (coef toward the last ascent point z, coef along the last
    displacement, t_next).  At t_prev = t = 1 the momentum point is z.
    """
    coef_z = t_prev / t
    coef_prev = (t_prev - 1.0) / t
    t_next = (math.sqrt(4.0 * t * t + 1.0) + 1.0) / 2.0
    return coef_z, coef_prev, t_next


def bb_initial_step(s, r, prev_alpha=None, inv_lipschitz=None,
                    lo=1e-12, hi=1e6, grow=2.0):
    """Spectral step estimate s.s / s.r from a displacement/curvature pair.

    The caller orients r as a difference of descent gradients, so concave
    ascent curvature gives s.r > 0.  Degenerate pairs (s.r <= 0, zero
    displacement, non-finite) fall back to the previously accepted step
    scaled up by `grow`, then to the inverse Lipschitz bound.  Growing on
    fallback lets the step recover along convex-ascent stretches where the
    spectral estimate never fires; the line search caps any overshoot.
    Output is clipped to [lo, hi].
    """
    ss = float(np.dot(s, s))
    sr = float(np.dot(s, r))
    if math.isfinite(sr) and sr > 0.0 and ss > 0.0:
        alpha = ss / sr
    elif prev_alpha is not None:
        alpha = prev_alpha * grow
    elif inv_lipschitz is not None:
        alpha = inv_lipschitz
    else:
        alpha = 1.0
    if not math.isfinite(alpha):
        alpha = inv_lipschitz if inv_lipschitz is not None else 1.0
    return min(max(alpha, lo), hi)


def backtrack_step(base_point, base_value, grad, alpha_init, value_fn,
                   spec: FeasibleSetSpec, cfg: SolverConfig,
                   include_base=False):
    """Projected ascent step with sufficient-increase backtracking.

    Shrinks alpha by nu until f(candidate) >= base_value + delta *
    ||candidate - base||^2.  If the cap is hit, returns the best candidate
    seen (the base point itself qualifies when include_base is set) with a
    degraded flag.

    Returns (point, eval, alpha, n_backtracks, degraded).
    """
    alpha = alpha_init
    best_point = np.array(base_point) if include_base else None
    best_eval = value_fn(base_point) if include_base else None
    best_value = best_eval.f_xi if include_base else -math.inf
    for i in range(cfg.max_backtracks + 1):
        candidate = project(base_point + alpha * grad, spec)
        ev = value_fn(candidate)
        if not math.isfinite(ev.f_xi):
            raise SolverError(
                f"non-finite objective {ev.f_xi} during line search at alpha={alpha}"
            )
        if ev.f_xi >= base_value + cfg.delta * float(
            np.dot(candidate - base_point, candidate - base_point)
        ):
            return candidate, ev, alpha, i, False
        if ev.f_xi > best_value:
            best_point, best_eval, best_value = candidate, ev, ev.f_xi
        alpha *= cfg.nu
    return best_point, best_eval, alpha, cfg.max_backtracks, True


def apg_inner(theta_start, xi, pd: ProblemData, cfg: SolverConfig,
              spec: FeasibleSetSpec, lipschitz, outer_idx, trace,
              callback=None):
    """One inner round at fixed penalty weight.

    Returns (theta, eval at theta, grad at theta, converged, iterations,
    backtracks).  The objective values threaded through the trace are the
    exact doubles used in the monitor comparisons, so the recorded
    sequence is nondecreasing by construction.
    """
    fixed = cfg.alpha_mode == "fixed"

    def evaluate(th):
        return eval_objective(th, pd, xi)

    def evaluate_grad(th):
        return eval_objective_and_grad(th, pd, xi)

    theta = np.array(theta_start, dtype=float)
    theta_prev = theta.copy()
    z = theta.copy()
    ev_theta, grad_theta = evaluate_grad(theta)
    if not math.isfinite(ev_theta.f_xi):
        raise SolverError("non-finite objective at inner-loop start")
    grad_theta_prev = grad_theta
    grad_z = grad_theta
    v = None
    grad_v = None
    y_prev = None
    grad_y_prev = None
    t_prev, t = 1.0, 1.0

    if lipschitz > 0 and math.isfinite(lipschitz):
        inv_lip = 1.0 / lipschitz
    else:
        inv_lip = cfg.alpha_min
    inv_lip = min(max(inv_lip, cfg.alpha_min), cfg.alpha_max)
    alpha_fixed = 0.99 * inv_lip
    if fixed:
        alpha_y = alpha_theta = alpha_fixed
    else:
        # start large (one ball radius along the gradient); backtracking shrinks
        grad_scale = float(np.linalg.norm(grad_theta))
        alpha_y = spec.radius / grad_scale if grad_scale > 0 else 1.0
        alpha_y = min(max(alpha_y, cfg.alpha_min), cfg.alpha_max)
        alpha_theta = alpha_y

    history = deque([ev_theta.f_xi], maxlen=cfg.inner_window + 1)
    backtracks = 0
    converged = False
    iterations = 0

    for n in range(1, cfg.max_inner + 1):
        iterations = n
        coef_z, coef_prev, t_next = momentum_update(t_prev, t)
        y = theta + coef_z * (z - theta) + coef_prev * (theta - theta_prev)
        ev_y, grad_y = evaluate_grad(y)

        if fixed:
            z_new = project(y + alpha_fixed * grad_y, spec)
            ev_z = evaluate(z_new)
            v_new = project(theta + alpha_fixed * grad_theta, spec)
            ev_v = evaluate(v_new)
            alpha_y = alpha_theta = alpha_fixed
            bt = 0
        else:
            if y_prev is not None:
                # curvature pairs oriented for descent of -f
                alpha_y = bb_initial_step(
                    z - y_prev, grad_y_prev - grad_z,
                    prev_alpha=alpha_y, inv_lipschitz=inv_lip,
                    lo=cfg.alpha_min, hi=cfg.alpha_max, grow=1.0 / cfg.nu,
                )
                alpha_theta = bb_initial_step(
                    v - theta_prev, grad_theta_prev - grad_v,
                    prev_alpha=alpha_theta, inv_lipschitz=inv_lip,
                    lo=cfg.alpha_min, hi=cfg.alpha_max, grow=1.0 / cfg.nu,
                )
            z_new, ev_z, alpha_y, bt_z, _ = backtrack_step(
                y, ev_y.f_xi, grad_y, alpha_y, evaluate, spec, cfg,
                include_base=False,
            )
            v_new, ev_v, alpha_theta, bt_v, _ = backtrack_step(
                theta, ev_theta.f_xi, grad_theta, alpha_theta, evaluate,
                spec, cfg, include_base=True,
            )
            bt = bt_z + bt_v
        backtracks += bt

        # monitor comparison; never accept a decrease
        if ev_z.f_xi >= ev_v.f_xi:
            chosen, ev_chosen, branch = z_new, ev_z, "z"
        else:
            chosen, ev_chosen, branch = v_new, ev_v, "v"
        if ev_chosen.f_xi < ev_theta.f_xi:
            chosen, ev_chosen, branch = theta.copy(), ev_theta, "hold"

        if fixed:
            if branch == "hold":
                grad_chosen = grad_theta
            else:
                _, grad_chosen = evaluate_grad(chosen)
            grad_z_new = grad_v_new = None
        else:
            _, grad_z_new = evaluate_grad(z_new)
            _, grad_v_new = evaluate_grad(v_new)
            if branch == "z":
                grad_chosen = grad_z_new
            elif branch == "v":
                grad_chosen = grad_v_new
            else:
                grad_chosen = grad_theta

        theta_prev, grad_theta_prev = theta, grad_theta
        theta, ev_theta, grad_theta = chosen, ev_chosen, grad_chosen
        y_prev, grad_y_prev = y, grad_y
        z, grad_z = z_new, grad_z_new
        v, grad_v = v_new, grad_v_new
        t_prev, t = t, t_next

        record = IterationRecord(
            outer=outer_idx, inner=n, xi=xi,
            f_xi=ev_theta.f_xi, ee_term=ev_theta.ee_term,
            penalty_sum=ev_theta.penalty_sum, violation=ev_theta.violation,
            alpha_y=alpha_y, alpha_theta=alpha_theta,
            branch=branch, backtracks=bt,
        )
        trace.append(record)
        if callback is not None:
            callback(record, theta)

        history.append(ev_theta.f_xi)
        if len(history) == cfg.inner_window + 1:
            denom = max(abs(ev_theta.f_xi), 1e-30)
            if abs(ev_theta.f_xi - history[0]) / denom <= cfg.varsigma:
                converged = True
                break

    return theta, ev_theta, grad_theta, converged, iterations, backtracks


def solve(pd: ProblemData, cfg: SolverConfig | None = None, callback=None) -> SolverResult:
    """Run the full penalty + accelerated projected gradient method.

    Terminates once the QoS residuals are inside eps_feas, the per-user SE
    shortfall is inside qos_slack, and the last inner round converged (or
    the energy efficiency has stalled across rounds).  Hitting the outer
    cap while still infeasible returns the best iterate with the feasible
    flag cleared (the instance is then suspected infeasible).
    """
    cfg = cfg if cfg is not None else SolverConfig()
    cfg.validate()
    spec = FeasibleSetSpec(pd.M, pd.K, pd.N)
    t_start = time.perf_counter()

    if cfg.theta0 is not None:
        theta = project(np.asarray(cfg.theta0, dtype=float).ravel(), spec)
    else:
        theta = uniform_full_power(pd)

    if cfg.xi0 is not None:
        xi = float(cfg.xi0)
    else:
        ev0 = eval_objective(theta, pd, 0.0)
        xi = max(1.0, abs(ev0.ee_term) / max(ev0.penalty_sum, 1.0))

    trace: list[IterationRecord] = []
    inner_total = 0
    backtracks_total = 0
    outer_used = 0
    feasible = False
    converged = False
    prev_ee = None
    ev = None
    message = ""

    for m in range(1, cfg.max_outer + 1):
        outer_used = m
        lip = conservative_lipschitz_bound(pd, xi)
        theta, ev, _, inner_conv, iters, n_bt = _run_round(
            theta, xi, pd, cfg, spec, lip, m, trace, callback
        )
        inner_total += iters
        backtracks_total += n_bt

        qos_short = float(np.maximum(pd.se_targets - ev.se, 0.0).max(initial=0.0))
        feasible = ev.violation <= cfg.eps_feas and qos_short <= cfg.qos_slack
        stalled = prev_ee is not None and abs(ev.ee_term - prev_ee) <= (
            cfg.varsigma * max(abs(ev.ee_term), 1e-30)
        )
        if feasible and (inner_conv or stalled):
            converged = True
            break
        prev_ee = ev.ee_term
        xi *= cfg.rho_growth
    if not converged:
        message = (
            "outer cap reached while infeasible; instance suspected infeasible"
            if not feasible
            else "outer cap reached before inner convergence"
        )

    wall = time.perf_counter() - t_start
    p_transmit = ev.v - pd.p_fix_w
    p_traffic = pd.bandwidth_hz * float(ev.se.sum()) * float(pd.p_bt_w_per_bps.sum())
    return SolverResult(
        theta_opt=theta,
        eta_opt=theta_to_eta(theta, pd.gamma),
        ee=ev.ee_term,
        se_per_user=ev.se,
        violation_final=ev.violation,
        power_report={
            "p_fixed_w": pd.p_fix_w,
            "p_transmit_w": p_transmit,
            "p_total_w": ev.v,
            "p_total_with_traffic_w": ev.v + p_traffic,
        },
        outer_iters=outer_used,
        inner_iters_total=inner_total,
        backtracks_total=backtracks_total,
        wall_time_s=wall,
        trace=trace,
        converged=converged,
        feasible=feasible,
        xi_final=xi,
        message=message,
    )


def _run_round(theta, xi, pd, cfg, spec, lip, outer_idx, trace, callback):
    theta, ev, grad, conv, iters, n_bt = apg_inner(
        theta, xi, pd, cfg, spec, lip, outer_idx, trace, callback
    )
    return theta, ev, grad, conv, iters, n_bt
