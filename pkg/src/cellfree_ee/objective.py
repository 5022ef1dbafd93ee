"""Penalized objective, closed-form gradient, and a Lipschitz certificate.

The solver maximizes

    f_xi(theta) = B * u(theta) / v(theta) - xi * sum_k max(0, g_k(theta))^2

over the per-AP power ball intersected with the nonnegative orthant, where
u is the sum spectral efficiency, v the consumed power, and g_k <= 0 is
equivalent to user k meeting its SE target.  Objective and gradient share
one pass over the coupling scalars; every matrix product is realized as a
scatter of those scalars, never as an (MK x MK) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import CouplingStats, ProblemData

LN2 = math.log(2.0)


@dataclass
class ObjectiveEval:
    f_xi: float          # penalized objective
    ee_term: float       # B * u / v, bit/Joule
    penalty_sum: float   # sum_k max(0, g_k)^2
    g_values: np.ndarray  # (K,) QoS residuals, <= 0 means satisfied
    violation: float     # max_k max(0, g_k)
    se: np.ndarray       # (K,) bit/s/Hz
    v: float             # consumed power, W


def eval_g(theta, pd: ProblemData):
    """QoS residuals g_k = a_k * sqrt(denominator_k) - coherent_gain_k."""
    stats = CouplingStats(theta, pd)
    return _g_from_stats(stats, pd)


def _g_from_stats(stats: CouplingStats, pd: ProblemData):
    return pd.a * np.sqrt(stats.denom) - stats.c_diag


def _eval_from_stats(stats: CouplingStats, pd: ProblemData, xi: float) -> ObjectiveEval:
    g = _g_from_stats(stats, pd)
    gplus = np.maximum(0.0, g)
    penalty_sum = float((gplus**2).sum())
    ee = pd.bandwidth_hz * float(stats.se.sum()) / stats.v
    return ObjectiveEval(
        f_xi=ee - xi * penalty_sum,
        ee_term=ee,
        penalty_sum=penalty_sum,
        g_values=g,
        violation=float(gplus.max(initial=0.0)),
        se=stats.se,
        v=stats.v,
    )


def eval_objective(theta, pd: ProblemData, xi: float) -> ObjectiveEval:
    """Evaluate the penalized objective and its diagnostic fields."""
    return _eval_from_stats(CouplingStats(theta, pd), pd, xi)


def _grad_from_stats(stats: CouplingStats, pd: ProblemData, xi: float,
                     ev: ObjectiveEval):
    rho, N, K = pd.rho_d, pd.N, pd.K
    th = stats.theta_mat
    n, d = stats.numer, stats.denom
    u = float(stats.se.sum())
    v = stats.v
    B = pd.bandwidth_hz

    inv_total = 1.0 / (n + d)            # 1/(n_k + d_k)
    ratio = n * inv_total / d            # n_k / (d_k (n_k + d_k))
    cu = B / v
    log_scale = cu * pd.prefactor / LN2
    pen = 2.0 * xi * np.maximum(0.0, ev.g_values)
    # combined weight on the denominator gradient, from the SE term and
    # from the active penalties
    wk = log_scale * ratio + pen * pd.a / (2.0 * np.sqrt(d))

    grad = np.empty((pd.M, K))
    # coherent (own-pilot) direction: raises both the SINR numerator and -g_k
    diag_coef = log_scale * 2.0 * rho * N**2 * inv_total * stats.c_diag + pen
    np.multiply(pd.sqrt_gamma, diag_coef[None, :], out=grad)

    # leakage direction: every user's power leaks into every denominator
    beta_w = pd.beta @ wk                # (M,)
    grad -= 2.0 * rho * N * th * beta_w[:, None]

    # consumed-power direction
    cv = B * u / v**2
    grad -= cv * (2.0 * rho * pd.noise_w * N / pd.alpha_amp)[:, None] * th

    # pilot-contamination direction: scatter the cross gains group by group
    for users, cross in stats.group_cross:
        scaled = cross * wk[users][None, :]   # column j weighted by target U[j]
        np.fill_diagonal(scaled, 0.0)
        grad[:, users] -= (
            2.0 * rho * N**2 * pd.g_over_b[:, users] * (pd.beta[:, users] @ scaled.T)
        )
    return grad.ravel()


def grad_objective(theta, pd: ProblemData, xi: float):
    """Closed-form gradient of f_xi, flat length-M*K."""
    stats = CouplingStats(theta, pd)
    ev = _eval_from_stats(stats, pd, xi)
    return _grad_from_stats(stats, pd, xi, ev)


def eval_objective_and_grad(theta, pd: ProblemData, xi: float):
    """One shared pass producing both the ObjectiveEval and the gradient."""
    stats = CouplingStats(theta, pd)
    ev = _eval_from_stats(stats, pd, xi)
    return ev, _grad_from_stats(stats, pd, xi, ev)


def conservative_lipschitz_bound(pd: ProblemData, xi: float) -> float:
    """Upper bound on the gradient's Lipschitz constant over the feasible set.

    Built from per-user smoothness constants combined by the sum, product,
    quotient, and composition rules for Lipschitz functions, with every
    supremum instantiated from the power constraint (||theta||^2 <= M/N,
    per-block norms <= 1/sqrt(N)).  Deliberately loose but certified: no
    sampled gradient-difference ratio on the feasible set can exceed it.
    """
    rho, N, M, K = pd.rho_d, pd.N, pd.M, pd.K
    B = pd.bandwidth_hz
    radius_sq = M / N
    radius = math.sqrt(radius_sq)

    own_gain_sq = pd.gamma.sum(axis=0)                   # ||pair_gain(k,k)||^2
    # cross-pair gain norms, nonzero only inside pilot groups
    max_cross_sq = np.zeros(K)
    sum_cross_sq = np.zeros(K)
    for users in pd.shared_groups:
        pair_sq = (pd.g_over_b[:, users] ** 2).T @ (pd.beta[:, users] ** 2)
        np.fill_diagonal(pair_sq, 0.0)
        max_cross_sq[users] = pair_sq.max(axis=0)
        sum_cross_sq[users] = pair_sq.sum(axis=0)

    beta_sum = pd.beta.sum(axis=0)
    beta_max = pd.beta.max(axis=0)
    beta_norm = np.sqrt((pd.beta**2).sum(axis=0))

    # scalar numerator/denominator of the per-user SINR
    n_max = rho * N**2 * own_gain_sq * radius_sq
    d_max = rho * N**2 * max_cross_sq * radius_sq + rho * beta_sum + 1.0
    lip_n = 2.0 * rho * N**2 * own_gain_sq * radius
    lip_d = 2.0 * rho * N**2 * radius * sum_cross_sq + 2.0 * rho * math.sqrt(N) * beta_norm
    lip_nd = lip_n + lip_d

    # linear-map pieces of the gradients: largest block eigenvalue is the
    # rank-one norm plus the diagonal maximum
    lam_n = 2.0 * rho * N**2 * own_gain_sq
    sup_grad_n = lam_n * radius
    lam_d = 2.0 * rho * N**2 * max_cross_sq + 2.0 * rho * N * beta_max
    sup_grad_d = lam_d * radius

    # gradient of the SE log term, split as grad n / (ln2 (n+d)) minus
    # n grad d / (ln2 (n+d) d); both denominators stay >= ln2 since d >= 1
    lip_t1 = (lam_n + sup_grad_n * lip_nd) / LN2
    lip_num2 = n_max * lam_d + sup_grad_d * lip_n        # product rule
    sup_num2 = n_max * sup_grad_d
    lip_den2 = (n_max + d_max) * lip_d + d_max * lip_nd  # product rule
    lip_t2 = (lip_num2 + sup_num2 * lip_den2) / LN2
    lip_grad_u = pd.prefactor * (lip_t1 + lip_t2)
    sup_grad_u = pd.prefactor * (sup_grad_n + n_max * sup_grad_d) / LN2
    sup_u = pd.prefactor * np.log2(1.0 + n_max)
    lip_u = pd.prefactor * math.log2(math.e) * (lip_n + n_max * lip_d)

    # consumed power v and its gradient
    p_fix = pd.p_fix_w
    sup_v = p_fix + rho * pd.noise_w * float((1.0 / pd.alpha_amp).sum())
    lip_v = 2.0 * rho * pd.noise_w * math.sqrt(N) * math.sqrt(
        float((1.0 / pd.alpha_amp**2).sum())
    )
    lam_v = 2.0 * rho * pd.noise_w * N / float(pd.alpha_amp.min())
    lip_grad_v = lam_v
    sup_grad_v = lam_v * radius

    # QoS residuals: g = a sqrt(d) - coherent gain, with sqrt(d) >= 1
    own_gain = np.sqrt(own_gain_sq)
    sup_g = pd.a * np.sqrt(d_max)
    lip_g = pd.a * lip_d / 2.0 + own_gain
    sup_grad_g = pd.a * sup_grad_d / 2.0 + own_gain
    lip_grad_g = pd.a * (lam_d / 2.0 + sup_grad_d * lip_d / 4.0)

    # quotient rule on (v grad u - u grad v) / v^2 with v^2 >= p_fix^2
    lip_p = (
        sup_v * float(lip_grad_u.sum())
        + float(sup_grad_u.sum()) * lip_v
        + float(sup_u.sum()) * lip_grad_v
        + sup_grad_v * float(lip_u.sum())
    )
    sup_p = sup_v * float(sup_grad_u.sum()) + float(sup_u.sum()) * sup_grad_v
    l1 = B * lip_p / p_fix**2
    l2 = 2.0 * B * sup_p * sup_v * lip_v / p_fix**4
    l3 = 2.0 * xi * float((sup_g * lip_grad_g + sup_grad_g * lip_g).sum())
    return l1 + l2 + l3
