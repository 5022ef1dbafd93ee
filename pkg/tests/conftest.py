"""Shared instance builders for the test suite."""

import numpy as np

from cellfree_ee import (
    FeasibleSetSpec,
    PowerModel,
    ScenarioConfig,
    generate,
    precompute,
    problem_from_arrays,
    project,
)


def synthetic_problem(rng, M=8, K=4, N=1, pilot_of=None, se_target=0.5,
                      tau_c=200, tau_p=20):
    """Instance with O(1) magnitudes so finite differences are clean."""
    beta = rng.uniform(0.5, 2.0, size=(M, K))
    gamma = beta * rng.uniform(0.2, 0.8, size=(M, K))
    if pilot_of is None:
        pilot_of = rng.integers(0, max(K // 2, 1), size=K)
    return problem_from_arrays(
        beta, gamma, pilot_of=pilot_of, N=N, tau_c=tau_c, tau_p=tau_p,
        bandwidth_hz=1.0, rho_d=1.0, noise_w=1.0,
        power_model=PowerModel(0.5, 0.1, 0.2, 0.0), se_targets=se_target,
    )


def physical_problem(M=8, K=4, N=1, tau_p=None, seed=0, se_target=1.0):
    """Instance generated through the full scenario pipeline."""
    cfg = ScenarioConfig(M=M, K=K, N=N, tau_p=tau_p if tau_p else K, seed=seed)
    return precompute(generate(cfg), se_targets=se_target)


def interior_theta(rng, pd, lo=0.02, hi=0.5):
    """Random strictly positive feasible point (safe for central differences)."""
    spec = FeasibleSetSpec(pd.M, pd.K, pd.N)
    theta = project(rng.uniform(lo, hi, size=pd.M * pd.K), spec)
    return np.maximum(theta, lo / 2)


def feasible_theta(rng, pd, scale=1.0):
    spec = FeasibleSetSpec(pd.M, pd.K, pd.N)
    return project(rng.uniform(0.0, scale / np.sqrt(pd.N), size=pd.M * pd.K), spec)
