"""Problem data and objective building blocks in theta coordinates.

The decision variable is theta with theta_mk = sqrt(eta_mk * gamma_mk),
stored as a flat length-M*K vector stacked per AP: index(m, k) = m*K + k.
Reshaping to (M, K) gives one row per AP, so the per-AP power constraint
and the projection act on contiguous rows.

Coupling between users enters only through two families of scalars:

  coherent gains   c[kp, k] = sum_m pair_gain(kp, k)[m] * theta[m, kp]
  leakage powers   w[kp, k] = sum_m beta[m, k] * theta[m, kp]^2

where pair_gain(kp, k)[m] = sqrt(gamma_m,kp) * beta_mk / beta_m,kp and is
nonzero only when kp and k share a pilot.  Nothing of size (M*K)^2 is ever
materialized; per-pilot-group matrix products realize all products in
O(M * K * max group size) per evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


@dataclass(frozen=True)
class PowerModel:
    """Per-AP power consumption constants (scalars broadcast over APs)."""

    amplifier_efficiency: float = 0.4         # dimensionless, in (0, 1]
    circuit_per_antenna_w: float = 0.2        # W per antenna
    backhaul_fixed_w: float = 0.825           # W per backhaul link
    backhaul_traffic_w_per_gbps: float = 0.25  # W per Gbit/s, report-only


@dataclass
class ProblemData:
    """Immutable precomputed tensors defining one power-allocation instance.

    Shareable across concurrent solver runs; nothing here is mutated after
    precompute().
    """

    M: int
    K: int
    N: int
    tau_c: int
    tau_p: int
    bandwidth_hz: float
    rho_d: float
    noise_w: float
    beta: np.ndarray          # (M, K)
    gamma: np.ndarray         # (M, K)
    sqrt_gamma: np.ndarray    # (M, K), pair_gain(k, k)
    g_over_b: np.ndarray      # (M, K), sqrt(gamma)/beta, source-user factor
    pilot_of: np.ndarray      # (K,)
    groups: list              # list of user index arrays, one per used pilot
    shared_groups: list       # groups with >= 2 users only
    a: np.ndarray             # (K,) QoS thresholds in coherent-gain units
    se_targets: np.ndarray    # (K,) bit/s/Hz
    alpha_amp: np.ndarray     # (M,)
    p_tc_w: np.ndarray        # (M,)
    p0_w: np.ndarray          # (M,)
    p_bt_w_per_bps: np.ndarray  # (M,)
    p_fix_w: float
    prefactor: float          # (tau_c - tau_p) / tau_c

    def theta_mat(self, theta):
        """View the flat theta vector as (M, K), one AP per row."""
        return np.asarray(theta).reshape(self.M, self.K)

    def index(self, m, k):
        return m * self.K + k

    def pair_gain(self, kp, k):
        """The M-vector coupling source user kp into user k's statistics.

        Zero unless kp and k share a pilot; equals sqrt(gamma[:, k]) on the
        diagonal kp == k.
        """
        if self.pilot_of[kp] != self.pilot_of[k]:
            return np.zeros(self.M)
        return self.g_over_b[:, kp] * self.beta[:, k]


def precompute(scenario: Scenario, power_model: PowerModel | None = None,
               se_targets=1.0) -> ProblemData:
    """Build the solver-facing instance from a realized scenario."""
    cfg = scenario.config
    n0 = cfg.p_down_w / scenario.rho_d
    return problem_from_arrays(
        beta=scenario.beta,
        gamma=scenario.gamma,
        pilot_of=scenario.pilot_of,
        N=cfg.N,
        tau_c=cfg.tau_c,
        tau_p=cfg.tau_p,
        bandwidth_hz=cfg.bandwidth_hz,
        rho_d=scenario.rho_d,
        noise_w=n0,
        power_model=power_model,
        se_targets=se_targets,
    )


def problem_from_arrays(beta, gamma, pilot_of, N, tau_c, tau_p, bandwidth_hz,
                        rho_d, noise_w, power_model: PowerModel | None = None,
                        se_targets=1.0) -> ProblemData:
    """Assemble ProblemData from raw large-scale statistics.

    Used by precompute() and directly by tests that need instances at
    synthetic scales.
    """
    if tau_p >= tau_c:
        raise ValueError("tau_p must be smaller than tau_c")
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    M, K = beta.shape
    pilot_of = np.asarray(pilot_of, dtype=int)
    pm = power_model if power_model is not None else PowerModel()

    se_targets = np.broadcast_to(np.asarray(se_targets, dtype=float), (K,)).copy()
    if np.any(se_targets <= 0):
        raise ValueError("SE targets must be positive")

    prefactor = (tau_c - tau_p) / tau_c
    # threshold on the coherent gain implied by SE >= target
    sinr_target = 2.0 ** (se_targets / prefactor) - 1.0
    a = np.sqrt(sinr_target / (rho_d * N**2))

    groups = [np.flatnonzero(pilot_of == p) for p in np.unique(pilot_of)]
    shared = [g for g in groups if len(g) >= 2]

    alpha_amp = np.broadcast_to(np.asarray(pm.amplifier_efficiency, dtype=float), (M,)).copy()
    p_tc = np.broadcast_to(np.asarray(pm.circuit_per_antenna_w, dtype=float), (M,)).copy()
    p0 = np.broadcast_to(np.asarray(pm.backhaul_fixed_w, dtype=float), (M,)).copy()
    p_bt = np.broadcast_to(
        np.asarray(pm.backhaul_traffic_w_per_gbps, dtype=float) * 1e-9, (M,)
    ).copy()
    p_fix = float((N * p_tc + p0).sum())

    return ProblemData(
        M=M, K=K, N=N, tau_c=tau_c, tau_p=tau_p,
        bandwidth_hz=float(bandwidth_hz), rho_d=float(rho_d), noise_w=float(noise_w),
        beta=beta, gamma=gamma,
        sqrt_gamma=np.sqrt(gamma),
        g_over_b=np.sqrt(gamma) / beta,
        pilot_of=pilot_of,
        groups=groups,
        shared_groups=shared,
        a=a,
        se_targets=se_targets,
        alpha_amp=alpha_amp,
        p_tc_w=p_tc,
        p0_w=p0,
        p_bt_w_per_bps=p_bt,
        p_fix_w=p_fix,
        prefactor=prefactor,
    )


def eta_to_theta(eta, gamma):
    """Map power coefficients eta >= 0 to theta = sqrt(eta * gamma), flattened."""
    eta = np.asarray(eta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(eta < 0):
        raise ValueError("eta must be nonnegative")
    return np.sqrt(eta * gamma).ravel()


def theta_to_eta(theta, gamma):
    """Inverse map: eta = theta^2 / gamma, shaped (M, K)."""
    gamma = np.asarray(gamma, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(gamma.shape)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    return theta**2 / gamma


def uniform_full_power(pd: ProblemData):
    """Default start: equal theta with every AP exactly at its power budget."""
    return np.full(pd.M * pd.K, math.sqrt(1.0 / (pd.N * pd.K)))


class CouplingStats:
    """Per-point scalars shared by SE, objective, and gradient evaluation."""

    __slots__ = ("theta_mat", "c_diag", "interference", "leakage_sum",
                 "group_cross", "row_power", "numer", "denom", "se", "v")

    def __init__(self, theta, pd: ProblemData):
        th = pd.theta_mat(np.asarray(theta, dtype=float))
        rho, N = pd.rho_d, pd.N
        c_diag = np.einsum("mk,mk->k", pd.sqrt_gamma, th)
        interference = np.zeros(pd.K)
        group_cross = []
        for users in pd.shared_groups:
            src = pd.g_over_b[:, users] * th[:, users]      # (M, |U|)
            cross = src.T @ pd.beta[:, users]               # cross[i, j] = c[U[i], U[j]]
            interference[users] = (cross**2).sum(axis=0) - np.diagonal(cross) ** 2
            group_cross.append((users, cross))
        row_power = (th**2).sum(axis=1)                     # ||theta_m||^2
        leakage_sum = pd.beta.T @ row_power                 # sum over sources per target
        denom = rho * N**2 * interference + rho * N * leakage_sum + 1.0
        numer = rho * N**2 * c_diag**2
        self.theta_mat = th
        self.c_diag = c_diag
        self.interference = interference
        self.leakage_sum = leakage_sum
        self.group_cross = group_cross
        self.row_power = row_power
        self.numer = numer
        self.denom = denom
        self.se = pd.prefactor * np.log2(1.0 + numer / denom)
        self.v = pd.p_fix_w + rho * pd.noise_w * N * float(
            (row_power / pd.alpha_amp).sum()
        )


def se_per_user_theta(theta, pd: ProblemData):
    """Spectral efficiency of every user, bit/s/Hz, evaluated in theta."""
    return CouplingStats(theta, pd).se


def se_per_user_eta(eta, scenario: Scenario):
    """Spectral efficiency evaluated directly in eta coordinates.

    Deliberately a separate transcription (explicit loops over user pairs)
    from the theta path; serves as its consistency oracle.
    """
    cfg = scenario.config
    beta, gamma = scenario.beta, scenario.gamma
    rho, N = scenario.rho_d, cfg.N
    eta = np.asarray(eta, dtype=float)
    M, K = beta.shape
    eta_bar = np.sqrt(eta)
    se = np.zeros(K)
    pref = (cfg.tau_c - cfg.tau_p) / cfg.tau_c
    for k in range(K):
        signal = 0.0
        cross = 0.0
        leak = 0.0
        for kp in range(K):
            if scenario.pilot_of[kp] == scenario.pilot_of[k]:
                gain = 0.0
                for m in range(M):
                    gain += gamma[m, kp] * beta[m, k] / beta[m, kp] * eta_bar[m, kp]
                if kp == k:
                    signal = gain**2
                else:
                    cross += gain**2
            leak += float((gamma[:, kp] * beta[:, k] * eta[:, kp]).sum())
        sinr = rho * N**2 * signal / (rho * N**2 * cross + rho * N * leak + 1.0)
        se[k] = pref * np.log2(1.0 + sinr)
    return se


def total_power_w(theta, pd: ProblemData, include_traffic=False):
    """Consumed power in watts: fixed + amplifier terms, optionally traffic.

    Without the traffic flag this is exactly the denominator the optimizer
    sees.  The traffic term (backhaul load times per-bit power) is added for
    reporting only.
    """
    stats = CouplingStats(theta, pd)
    p = stats.v
    if include_traffic:
        p += pd.bandwidth_hz * float(stats.se.sum()) * float(pd.p_bt_w_per_bps.sum())
    return p


def energy_efficiency(theta, pd: ProblemData):
    """Total energy efficiency in bit/Joule: B * (sum of SE) / consumed power."""
    stats = CouplingStats(theta, pd)
    return pd.bandwidth_hz * float(stats.se.sum()) / stats.v
