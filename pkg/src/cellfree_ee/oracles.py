"""Independent reference implementations backing the property tests.

Everything here is deliberately dumb: central finite differences, dense
grids, and a from-scratch transcription of the rate and power formulas in
the original power-coefficient coordinates.  None of it shares code with
the fast paths it certifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ProblemData

_GRID_CACHE: dict = {}


@dataclass
class OracleReport:
    name: str
    reference: float
    candidate: float
    abs_err: float
    rel_err: float
    tol: float
    passed: bool

    def __str__(self):
        tag = "ok " if self.passed else "FAIL"
        return (
            f"[{tag}] {self.name}: ref={self.reference:.9g} got={self.candidate:.9g} "
            f"abs={self.abs_err:.3g} rel={self.rel_err:.3g} tol={self.tol:.3g}"
        )


def compare(name, reference, candidate, tol, mode="rel") -> OracleReport:
    abs_err = abs(float(candidate) - float(reference))
    rel_err = abs_err / max(abs(float(reference)), 1e-300)
    err = rel_err if mode == "rel" else abs_err
    return OracleReport(
        name=name, reference=float(reference), candidate=float(candidate),
        abs_err=abs_err, rel_err=rel_err, tol=tol, passed=bool(err <= tol),
    )


def fd_gradient(fun, x, h=None, clamp_nonneg=False):
    """Central-difference gradient of a scalar function.

    Per-coordinate step 1e-6 * (1 + |x_i|) unless h is given.  With
    clamp_nonneg the step shrinks so x - h stays nonnegative, which
    requires x_i > 0 on every coordinate.
    """
    x = np.asarray(x, dtype=float).ravel()
    grad = np.zeros(x.size)
    for i in range(x.size):
        hi = h if h is not None else 1e-6 * (1.0 + abs(x[i]))
        if clamp_nonneg and x[i] - hi < 0.0:
            hi = x[i]
        if hi <= 0.0:
            raise ValueError(f"degenerate step at coordinate {i}")
        e = np.zeros(x.size)
        e[i] = hi
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * hi)
    return grad


def fd_grad_objective(theta, pd: ProblemData, xi, h=None):
    """Finite-difference gradient of the penalized objective."""
    from .objective import eval_objective

    return fd_gradient(
        lambda th: eval_objective(th, pd, xi).f_xi, theta, h=h, clamp_nonneg=True
    )


def feasible_block_grid(dim, radius, resolution):
    """All grid points of one AP block: the ball of given radius meets the
    nonnegative orthant, sampled on a uniform lattice."""
    if dim > 3:
        raise ValueError("grid oracle supports block dimension <= 3")
    key = (dim, float(radius), float(resolution))
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    axis = np.arange(0.0, radius + resolution / 2.0, resolution)
    if dim == 1:
        pts = axis[:, None]
    else:
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts = pts[(pts**2).sum(axis=1) <= radius**2 + 1e-12]
    _GRID_CACHE[key] = pts
    return pts


def grid_project(u, radius, resolution):
    """Nearest feasible grid point to u; brute force over the lattice."""
    u = np.asarray(u, dtype=float).ravel()
    pts = feasible_block_grid(u.size, radius, resolution)
    d2 = ((pts - u[None, :]) ** 2).sum(axis=1)
    return pts[int(np.argmin(d2))]


def reference_se(theta_batch, pd: ProblemData):
    """Per-user SE for a batch of theta points, shape (P, M, K) -> (P, K).

    Transcribed from the rate expression in the original power-coefficient
    coordinates (eta = theta^2 / gamma), independent of the fast path.
    """
    theta_batch = np.asarray(theta_batch, dtype=float)
    gamma, beta = pd.gamma, pd.beta
    eta = theta_batch**2 / gamma[None, :, :]
    eta_bar = np.sqrt(eta)
    rho, N = pd.rho_d, pd.N
    batch = theta_batch.shape[0]
    pref = (pd.tau_c - pd.tau_p) / pd.tau_c
    se = np.zeros((batch, pd.K))
    for k in range(pd.K):
        signal = np.zeros(batch)
        cross = np.zeros(batch)
        leak = np.zeros(batch)
        for kp in range(pd.K):
            if pd.pilot_of[kp] == pd.pilot_of[k]:
                coef = gamma[:, kp] * beta[:, k] / beta[:, kp]
                gain = (coef[None, :] * eta_bar[:, :, kp]).sum(axis=1)
                if kp == k:
                    signal = gain**2
                else:
                    cross += gain**2
            leak += ((gamma[:, kp] * beta[:, k])[None, :] * eta[:, :, kp]).sum(axis=1)
        sinr = rho * N**2 * signal / (rho * N**2 * cross + rho * N * leak + 1.0)
        se[:, k] = pref * np.log2(1.0 + sinr)
    return se


def reference_power(theta_batch, pd: ProblemData):
    """Consumed power for a batch of theta points, (P, M, K) -> (P,)."""
    theta_batch = np.asarray(theta_batch, dtype=float)
    row_power = (theta_batch**2).sum(axis=2)
    return pd.p_fix_w + pd.rho_d * pd.noise_w * pd.N * (
        row_power / pd.alpha_amp[None, :]
    ).sum(axis=1)


def full_grid(M, K, N, resolution, limit=50_000_000):
    """Lattice over the whole feasible set, shape (P, M*K).  Tiny instances only."""
    radius = np.sqrt(1.0 / N)
    block = feasible_block_grid(K, radius, resolution)
    n_block = block.shape[0]
    total = n_block**M
    if total > limit:
        raise ValueError(f"grid of {total} points exceeds the oracle budget")
    if M == 1:
        return block
    mesh = np.meshgrid(*([np.arange(n_block)] * M), indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1)
    return block[idx].reshape(total, M * K)


def grid_maximize(pd: ProblemData, resolution, enforce_qos=True, chunk=200_000):
    """Exhaustive grid search of the energy efficiency over the feasible set.

    Requires M*K <= 3.  With enforce_qos, grid points whose independent SE
    falls below the targets are discarded.  Ties keep the lowest index.
    """
    if pd.M * pd.K > 3:
        raise ValueError("grid maximization supports M*K <= 3 only")
    pts = full_grid(pd.M, pd.K, pd.N, resolution)
    best_val = -np.inf
    best_theta = None
    for start in range(0, pts.shape[0], chunk):
        batch = pts[start:start + chunk].reshape(-1, pd.M, pd.K)
        se = reference_se(batch, pd)
        ee = pd.bandwidth_hz * se.sum(axis=1) / reference_power(batch, pd)
        if enforce_qos:
            ok = (se >= pd.se_targets[None, :]).all(axis=1)
            ee = np.where(ok, ee, -np.inf)
        i = int(np.argmax(ee))
        if ee[i] > best_val:
            best_val = float(ee[i])
            best_theta = pts[start + i].copy()
    if best_theta is None or not np.isfinite(best_val):
        raise ValueError("no grid point satisfies the QoS targets")
    return best_theta, best_val


def grid_maximize_fn(fun, M, K, N, resolution, chunk=200_000):
    """Exhaustive maximization of an arbitrary batch function over the
    feasible lattice; fun maps (P, M*K) -> (P,)."""
    pts = full_grid(M, K, N, resolution)
    best_val = -np.inf
    best_theta = None
    for start in range(0, pts.shape[0], chunk):
        vals = np.asarray(fun(pts[start:start + chunk]), dtype=float)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_theta = pts[start + i].copy()
    return best_theta, best_val
