"""Network realizations: AP/user geometry, large-scale fading, pilots.

A Scenario bundles everything the optimizer consumes: the large-scale
coefficients beta (channel gain) and gamma (estimation quality), the
pilot assignment, and the normalized transmit SNRs rho_d, rho_p.  All
randomness flows through a single seeded generator so a realization is
fully reproducible from its config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

import numpy as np

BOLTZMANN_J_PER_K = 1.380649e-23
NOISE_TEMPERATURE_K = 290.0


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 100                 # access points
    K: int = 40                  # users
    N: int = 1                   # antennas per AP
    area_side_km: float = 1.0    # square side D
    d0_km: float = 0.01          # near breakpoint (10 m)
    d1_km: float = 0.05          # far breakpoint (50 m)
    L_db: float = 140.7          # path-loss constant, km-calibrated
    sigma_sh_db: float = 8.0     # shadowing std dev
    tau_c: int = 200             # coherence interval (symbols)
    tau_p: int = 40              # pilot length (symbols)
    bandwidth_hz: float = 20e6
    p_down_w: float = 1.0        # downlink transmit power per AP
    p_pilot_w: float = 0.2       # pilot power
    noise_figure_db: float = 9.0
    seed: int = 0

    def validate(self):
        if self.M < 1 or self.K < 1 or self.N < 1:
            raise ValueError("M, K, N must all be >= 1")
        if not (1 <= self.tau_p < self.tau_c):
            raise ValueError("need 1 <= tau_p < tau_c")
        if not (0.0 < self.d0_km < self.d1_km < self.area_side_km):
            raise ValueError("need 0 < d0 < d1 < area side")
        if min(self.bandwidth_hz, self.p_down_w, self.p_pilot_w) <= 0.0:
            raise ValueError("powers and bandwidth must be positive")


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    ap_xy: np.ndarray      # (M, 2) km
    user_xy: np.ndarray    # (K, 2) km
    beta: np.ndarray       # (M, K) linear channel gain
    gamma: np.ndarray      # (M, K) linear estimate quality, gamma < beta
    pilot_of: np.ndarray   # (K,) pilot index per user
    rho_d: float           # downlink SNR, transmit power / noise power
    rho_p: float           # pilot SNR

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(
                {
                    "config": asdict(self.config),
                    "ap_xy": self.ap_xy.tolist(),
                    "user_xy": self.user_xy.tolist(),
                    "beta": self.beta.tolist(),
                    "gamma": self.gamma.tolist(),
                    "pilot_of": self.pilot_of.tolist(),
                    "rho_d": self.rho_d,
                    "rho_p": self.rho_p,
                },
                fh,
            )

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            raw = json.load(fh)
        return Scenario(
            config=ScenarioConfig(**raw["config"]),
            ap_xy=np.asarray(raw["ap_xy"], dtype=float),
            user_xy=np.asarray(raw["user_xy"], dtype=float),
            beta=np.asarray(raw["beta"], dtype=float),
            gamma=np.asarray(raw["gamma"], dtype=float),
            pilot_of=np.asarray(raw["pilot_of"], dtype=int),
            rho_d=float(raw["rho_d"]),
            rho_p=float(raw["rho_p"]),
        )


def noise_power_w(bandwidth_hz, noise_figure_db):
    """Thermal noise power k_B * 290 K * B, raised by the receiver noise figure."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return (
        BOLTZMANN_J_PER_K
        * NOISE_TEMPERATURE_K
        * bandwidth_hz
        * 10.0 ** (noise_figure_db / 10.0)
    )


def place_nodes(config: ScenarioConfig, rng):
    """Drop M APs and K users i.i.d. uniformly on the [0, D]^2 square."""
    d = config.area_side_km
    ap_xy = rng.uniform(0.0, d, size=(config.M, 2))
    user_xy = rng.uniform(0.0, d, size=(config.K, 2))
    return ap_xy, user_xy


def wrapped_distance(a, b, side_km):
    """Torus distance between points (or arrays of points) on the wrapped square.

    Per axis the separation is min(|da|, D - |da|), so the result never
    exceeds D/sqrt(2).
    """
    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    delta = np.minimum(delta, side_km - delta)
    return np.sqrt((delta**2).sum(axis=-1))


def path_loss_db(d_km, config: ScenarioConfig):
    """Three-slope path loss in dB; distances in km.

    Slope 35 beyond d1, slope 20 between d0 and d1, flat below d0.  The
    branches agree at d1 because 15 + 20 = 35.
    """
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    far = -config.L_db - 35.0 * np.log10(d)
    mid = -config.L_db - 15.0 * np.log10(config.d1_km) - 20.0 * np.log10(d)
    near = -config.L_db - 15.0 * np.log10(config.d1_km) - 20.0 * np.log10(config.d0_km)
    out = np.where(d > config.d1_km, far, np.where(d > config.d0_km, mid, near))
    return out if out.shape else float(out)


def compute_beta(config: ScenarioConfig, distances, rng):
    """Large-scale gain: path loss plus log-normal shadowing on the far branch.

    Shadowing is only applied where d > d1; the near branches are treated
    as LOS-dominated.
    """
    pl_db = path_loss_db(distances, config)
    z = rng.standard_normal(np.shape(distances))
    shadow_db = np.where(np.asarray(distances) > config.d1_km, config.sigma_sh_db * z, 0.0)
    return 10.0 ** ((pl_db + shadow_db) / 10.0)


def assign_pilots(K, tau_p, rng):
    """Assign pilot indices: all distinct when tau_p >= K, else balanced reuse.

    With reuse, users are visited in random order and pilots handed out
    round-robin, so group sizes differ by at most one.  Pilot correlation
    is binary: 1 within a group, 0 across groups.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if tau_p >= K:
        return rng.permutation(tau_p)[:K].astype(int)
    order = rng.permutation(K)
    pilot_of = np.empty(K, dtype=int)
    pilot_of[order] = np.arange(K) % tau_p
    return pilot_of


def compute_gamma(config: ScenarioConfig, beta, pilot_of, rho_p):
    """Channel-estimate quality per AP/user under binary pilot correlation.

    gamma_mk = t p b^2 / (t p * sum of beta over the pilot group + 1),
    with t = tau_p and p = rho_p; always strictly below beta when rho_p > 0.
    """
    beta = np.asarray(beta, dtype=float)
    K = beta.shape[1]
    group_sum = np.zeros_like(beta)
    pilot_of = np.asarray(pilot_of)
    for p in np.unique(pilot_of):
        members = np.flatnonzero(pilot_of == p)
        group_sum[:, members] = beta[:, members].sum(axis=1, keepdims=True)
    tp = config.tau_p * rho_p
    return tp * beta**2 / (tp * group_sum + 1.0)


def generate(config: ScenarioConfig) -> Scenario:
    """Realize a full scenario from the config's seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    ap_xy, user_xy = place_nodes(config, rng)
    dist = wrapped_distance(ap_xy[:, None, :], user_xy[None, :, :], config.area_side_km)
    beta = compute_beta(config, dist, rng)
    pilot_of = assign_pilots(config.K, config.tau_p, rng)
    n0 = noise_power_w(config.bandwidth_hz, config.noise_figure_db)
    rho_d = config.p_down_w / n0
    rho_p = config.p_pilot_w / n0
    gamma = compute_gamma(config, beta, pilot_of, rho_p)
    return Scenario(
        config=config,
        ap_xy=ap_xy,
        user_xy=user_xy,
        beta=beta,
        gamma=gamma,
        pilot_of=pilot_of,
        rho_d=rho_d,
        rho_p=rho_p,
    )


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(config, seed=int(seed))
