"""Projections onto the set families and onto the polar cone, with Jacobians.

Jacobians are returned in structured form (:class:`ProjectionJacobian`) so
that the Newton solver can form ``(I - L + a L P)^{-1}`` blockwise without a
generic eigensolver. At points where the projection is not differentiable
the value :data:`NOT_DIFFERENTIABLE` is returned instead.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EigFailure
from .model import (AffineSubspace, Ball, Box, ConeSpec, FullSpace, Halfspace, Point,
                    SecondOrderCone, SetConstraint)


class _NotDifferentiable:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "NOT_DIFFERENTIABLE"


NOT_DIFFERENTIABLE = _NotDifferentiable()

IDENTITY, ZERO, MASK, DEFLATION, DENSE, PROJECTOR = (
    "identity", "zero", "mask", "deflation", "dense", "projector")


@dataclasses.dataclass(frozen=True, eq=False)
class ProjectionJacobian:
    """Symmetric Jacobian of a projection in one of six structural forms.

    ``mask``: diagonal 0/1 entries. ``deflation``: ``scale * (I - u u')``.
    ``dense`` and ``projector`` carry an explicit symmetric matrix.
    """

    form: str
    dim: int
    mask: np.ndarray | None = None
    scale: float = 0.0
    direction: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def to_dense(self) -> np.ndarray:
        n = self.dim
        if self.form == IDENTITY:
            return np.eye(n)
        if self.form == ZERO:
            return np.zeros((n, n))
        if self.form == MASK:
            return np.diag(self.mask.astype(np.float64))
        if self.form == DEFLATION:
            u = self.direction
            return self.scale * (np.eye(n) - np.outer(u, u))
        return np.array(self.matrix)

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.form == IDENTITY:
            return v.copy()
        if self.form == ZERO:
            return np.zeros_like(v)
        if self.form == MASK:
            return np.where(self.mask, v, 0.0)
        if self.form == DEFLATION:
            u = self.direction
            return self.scale * (v - u * (u @ v))
        return self.matrix @ v

    def signature(self) -> tuple:
        """Hashable description of the active piece (not the values)."""
        if self.form == MASK:
            return (MASK, self.mask.tobytes())
        return (self.form,)


@dataclasses.dataclass(frozen=True, eq=False)
class BlockEig:
    Q: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.lam) @ self.Q.T


def _check(s: SetConstraint, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (s.dim,):
        raise DimensionMismatch(f"expected a vector of length {s.dim}, got shape {y.shape}")
    return y


# ---------------------------------------------------------------- projections

@functools.singledispatch
def project(s: SetConstraint, y) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``s``."""
    raise TypeError(f"no projection for {type(s).__name__}")


@project.register
def _(s: FullSpace, y):
    return _check(s, y).copy()


@project.register
def _(s: Point, y):
    _check(s, y)
    return np.array(s.c)


@project.register
def _(s: Box, y):
    return np.clip(_check(s, y), s.lo, s.hi)


@project.register
def _(s: Ball, y):
    d = _check(s, y) - s.center
    nrm = np.linalg.norm(d)
    if nrm <= s.radius:
        return y.copy()
    return s.center + (s.radius / nrm) * d


@project.register
def _(s: SecondOrderCone, y):
    y = _check(s, y)
    x, t = y[:-1], y[-1]
    nx = np.linalg.norm(x)
    if nx <= t:
        return y.copy()
    if nx <= -t:
        return np.zeros_like(y)
    a = 0.5 * (t + nx)
    return np.append(a * x / nx, a)


@project.register
def _(s: Halfspace, y):
    y = _check(s, y)
    ay = s.a @ y
    if ay <= s.b:
        return y.copy()
    return y - ((ay - s.b) / (s.a @ s.a)) * s.a


@project.register
def _(s: AffineSubspace, y):
    y = _check(s, y)
    return s.anchor + s.projector @ (y - s.anchor)


# ---------------------------------------------------------------- Jacobians

@functools.singledispatch
def jacobian(s: SetConstraint, y):
    """Jacobian of ``project(s, .)`` at ``y``, or :data:`NOT_DIFFERENTIABLE`.

    Breakpoints are detected by exact comparison.
    """
    raise TypeError(f"no Jacobian for {type(s).__name__}")


@jacobian.register
def _(s: FullSpace, y):
    _check(s, y)
    return ProjectionJacobian(IDENTITY, s.dim)


@jacobian.register
def _(s: Point, y):
    _check(s, y)
    return ProjectionJacobian(ZERO, s.dim)


@jacobian.register
def _(s: Box, y):
    y = _check(s, y)
    if np.any(y == s.lo) or np.any(y == s.hi):
        return NOT_DIFFERENTIABLE
    mask = (y > s.lo) & (y < s.hi)
    if mask.all():
        return ProjectionJacobian(IDENTITY, s.dim)
    return ProjectionJacobian(MASK, s.dim, mask=mask)


@jacobian.register
def _(s: Ball, y):
    d = _check(s, y) - s.center
    nrm = np.linalg.norm(d)
    if nrm < s.radius:
        return ProjectionJacobian(IDENTITY, s.dim)
    if nrm == s.radius:
        return NOT_DIFFERENTIABLE
    return ProjectionJacobian(DEFLATION, s.dim, scale=s.radius / nrm, direction=d / nrm)


@jacobian.register
def _(s: SecondOrderCone, y):
    y = _check(s, y)
    x, t = y[:-1], y[-1]
    nx = np.linalg.norm(x)
    if nx < t:
        return ProjectionJacobian(IDENTITY, s.dim)
    if nx < -t:
        return ProjectionJacobian(ZERO, s.dim)
    if nx <= abs(t):
        return NOT_DIFFERENTIABLE
    u = x / nx
    r = t / nx
    n = s.dim
    j = np.empty((n, n))
    j[:-1, :-1] = 0.5 * ((1.0 + r) * np.eye(n - 1) - r * np.outer(u, u))
    j[:-1, -1] = 0.5 * u
    j[-1, :-1] = 0.5 * u
    j[-1, -1] = 0.5
    return ProjectionJacobian(DENSE, n, matrix=j)


@jacobian.register
def _(s: Halfspace, y):
    y = _check(s, y)
    ay = s.a @ y
    if ay < s.b:
        return ProjectionJacobian(IDENTITY, s.dim)
    if ay == s.b:
        return NOT_DIFFERENTIABLE
    return ProjectionJacobian(DEFLATION, s.dim, scale=1.0, direction=s.a / np.linalg.norm(s.a))


@jacobian.register
def _(s: AffineSubspace, y):
    _check(s, y)
    return ProjectionJacobian(PROJECTOR, s.dim, matrix=s.projector)


# ---------------------------------------------------------------- polar cone

def project_cone_polar(cone: ConeSpec, w) -> np.ndarray:
    """Projection onto ``K° = prod(R^eq x R_-^ineq)``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cone.dim,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({cone.dim},)")
    return np.where(cone.eq_mask, w, np.minimum(w, 0.0))


def jacobian_cone_polar(cone: ConeSpec, w):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cone.dim,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({cone.dim},)")
    eq = cone.eq_mask
    if np.any(~eq & (w == 0.0)):
        return NOT_DIFFERENTIABLE
    mask = eq | (w < 0.0)
    if mask.all():
        return ProjectionJacobian(IDENTITY, cone.dim)
    return ProjectionJacobian(MASK, cone.dim, mask=mask)


# ---------------------------------------------------------------- eigen

def jacobi_eigh(a, tol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver for a small symmetric matrix.

    Returns ``(lam, Q)`` with ``a = Q diag(lam) Q'``.
    """
    a = np.array(a, dtype=np.float64)
    q = np.eye(a.shape[0])
    if kernels.jacobi_rotate(a, q, tol, max_sweeps):
        return np.diag(a).copy(), q
    raise EigFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def _householder_basis(u: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first column is +-u."""
    n = u.size
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = e1 - u if u[0] <= 0.0 else e1 + u
    vv = v @ v
    if vv == 0.0:
        return np.eye(n)
    return np.eye(n) - (2.0 / vv) * np.outer(v, v)


def _clamp(lam: np.ndarray) -> np.ndarray:
    lam = lam.copy()
    lam[(lam < 0.0) & (lam >= -1e-12)] = 0.0
    lam[(lam > 1.0) & (lam <= 1.0 + 1e-12)] = 1.0
    return lam


def eig(jac: ProjectionJacobian) -> BlockEig:
    """Eigendecomposition ``J = Q diag(lam) Q'`` of a projection Jacobian."""
    n = jac.dim
    if jac.form == IDENTITY:
        return BlockEig(np.eye(n), np.ones(n))
    if jac.form == ZERO:
        return BlockEig(np.eye(n), np.zeros(n))
    if jac.form == MASK:
        return BlockEig(np.eye(n), jac.mask.astype(np.float64))
    if jac.form == DEFLATION:
        lam = np.full(n, float(jac.scale))
        lam[0] = 0.0
        return BlockEig(_householder_basis(jac.direction), _clamp(lam))
    lam, q = jacobi_eigh(jac.matrix)
    if jac.form == PROJECTOR:
        lam = np.where(lam > 0.5, 1.0, 0.0)
    return BlockEig(q, _clamp(lam))
