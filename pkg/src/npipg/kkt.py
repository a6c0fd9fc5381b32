"""A-posteriori optimality measurement through normal-cone distances."""

from __future__ import annotations

import dataclasses

import numpy as np

from .model import (AffineSubspace, Ball, Box, FullSpace, Halfspace, Point, QpProblem,
                    SecondOrderCone, apply_h, apply_h_transpose)
from .projections import project, project_cone_polar

BOUNDARY_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class KktDistances:
    primal: float
    dual: float
    z_feasible: bool
    w_feasible: bool


def _ray_dist(v, u):
    """Distance from ``v`` to ``{t u : t >= 0}`` for a unit ``u``."""
    t = max(float(v @ u), 0.0)
    return float(np.linalg.norm(v - t * u))


def _tol(scale):
    return BOUNDARY_TOL * np.maximum(1.0, scale)


def normal_cone_distance(s, z, v) -> float:
    """Distance from ``v`` to the normal cone of ``s`` at ``z`` (``z`` in ``s``)."""
    if isinstance(s, FullSpace):
        return float(np.linalg.norm(v))
    if isinstance(s, Point):
        return 0.0
    if isinstance(s, Box):
        at_lo = z <= s.lo + _tol(np.nan_to_num(np.abs(s.lo), posinf=0.0))
        at_hi = z >= s.hi - _tol(np.nan_to_num(np.abs(s.hi), posinf=0.0))
        d = np.abs(v)
        d = np.where(at_lo & ~at_hi, np.maximum(v, 0.0), d)
        d = np.where(at_hi & ~at_lo, np.maximum(-v, 0.0), d)
        d = np.where(at_lo & at_hi, 0.0, d)
        return float(np.linalg.norm(d))
    if isinstance(s, Ball):
        dz = z - s.center
        nrm = np.linalg.norm(dz)
        if nrm < s.radius - _tol(s.radius):
            return float(np.linalg.norm(v))
        return _ray_dist(v, dz / nrm)
    if isinstance(s, SecondOrderCone):
        x, t = z[:-1], z[-1]
        nx = np.linalg.norm(x)
        scale = max(nx, abs(t))
        if nx < t - _tol(scale):
            return float(np.linalg.norm(v))
        if scale <= BOUNDARY_TOL:
            # normal cone at the apex is the polar cone -K; distance is |proj_K(v)|
            return float(np.linalg.norm(project(s, v)))
        u = np.append(x / nx, -1.0) / np.sqrt(2.0)
        return _ray_dist(v, u)
    if isinstance(s, Halfspace):
        if s.a @ z < s.b - _tol(abs(s.b)):
            return float(np.linalg.norm(v))
        return _ray_dist(v, s.a / np.linalg.norm(s.a))
    if isinstance(s, AffineSubspace):
        return float(np.linalg.norm(s.projector @ v))
    raise TypeError(f"no normal cone for {type(s).__name__}")


def kkt_distances(problem: QpProblem, z, w) -> KktDistances:
    """Distances of the stationarity and complementarity residuals to their normal cones.

    ``z`` and ``w`` are first projected onto ``D`` and ``K°``; the flags
    report whether that changed them.
    """
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    zp = np.empty_like(z)
    for start, s in problem.sets:
        zp[start:start + s.dim] = project(s, z[start:start + s.dim])
    wp = project_cone_polar(problem.cone, w)
    z_ok = bool(np.array_equal(zp, z))
    w_ok = bool(np.array_equal(wp, w))

    v = -(problem.p_diag * zp + problem.q + apply_h_transpose(problem.H, wp))
    dp = 0.0
    for start, s in problem.sets:
        sl = slice(start, start + s.dim)
        dp += normal_cone_distance(s, zp[sl], v[sl]) ** 2

    r = apply_h(problem.H, zp) - problem.g
    eq = problem.cone.eq_mask
    at_zero = wp >= -BOUNDARY_TOL
    dd = np.where(eq, r, np.where(at_zero, np.maximum(-r, 0.0), r))
    return KktDistances(float(np.sqrt(dp)), float(np.linalg.norm(dd)), z_ok, w_ok)
