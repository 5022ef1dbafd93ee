"""Closed-form Euclidean projection onto the feasible set.

The feasible set is, per AP, the intersection of the ball of radius
sqrt(1/N) with the nonnegative orthant.  Projection clamps negatives to
zero, then rescales the block onto the ball only if the clamped norm
exceeds the radius.  Blocks are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeasibleSetSpec:
    M: int
    K: int
    N: int

    @property
    def radius(self) -> float:
        return math.sqrt(1.0 / self.N)


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    worst_block: int        # AP with the largest norm excess
    worst_excess: float     # ||theta_m||^2 - 1/N at that AP
    min_entry: float

    def __bool__(self):
        return self.ok


def project(u, spec: FeasibleSetSpec):
    """Project any real vector onto the feasible set, flat length-M*K.

    Exact ties (block norm == radius) stay unscaled.  Rescaled blocks are
    re-checked under the same norm computation until they pass, so the
    output re-projects to itself bit for bit.
    """
    r = spec.radius
    blocks = np.maximum(np.asarray(u, dtype=float).reshape(spec.M, spec.K), 0.0)
    target = r
    for _ in range(10):
        norms = np.sqrt((blocks**2).sum(axis=1))
        over = norms > r
        if not over.any():
            break
        scale = np.ones_like(norms)
        np.divide(target, norms, out=scale, where=over)
        blocks = blocks * scale[:, None]
        # rounding can leave a norm one ulp high; shave the target and retry
        target = np.nextafter(target, 0.0)
    return blocks.ravel()


def is_feasible(theta, spec: FeasibleSetSpec, tol: float = 1e-12) -> FeasibilityReport:
    """Check membership up to tol; reports the worst AP block."""
    blocks = np.asarray(theta, dtype=float).reshape(spec.M, spec.K)
    norms_sq = (blocks**2).sum(axis=1)
    excess = norms_sq - 1.0 / spec.N
    worst = int(np.argmax(excess))
    min_entry = float(blocks.min())
    ok = bool(excess[worst] <= tol and min_entry >= -tol)
    return FeasibilityReport(
        ok=ok, worst_block=worst, worst_excess=float(excess[worst]), min_entry=min_entry
    )
