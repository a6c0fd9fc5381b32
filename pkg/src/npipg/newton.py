"""Newton steps for the PIPG fixed-point equation.

The linear system ``(I - J_T) p = R`` is reduced to a symmetric
block-tridiagonal system in the dual variable, factorized by a block
Cholesky sweep over time stages, and the primal part is recovered
blockwise.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .errors import NotPositiveDefinite, Singular, SingularMiddleFactor
from .model import QpProblem
from .pipg import StepSizes
from .projections import (DEFLATION, DENSE, IDENTITY, MASK, NOT_DIFFERENTIABLE, PROJECTOR, ZERO,
                          BlockEig, ProjectionJacobian, eig, jacobian, jacobian_cone_polar)


@dataclasses.dataclass(frozen=True, eq=False)
class DBlock:
    start: int
    rho: float
    jac: ProjectionJacobian
    eig: BlockEig | None


@dataclasses.dataclass(frozen=True, eq=False)
class JacobianSnapshot:
    d_blocks: tuple
    k_mask: np.ndarray | None
    differentiable: bool


def snapshot_at(problem: QpProblem, yz, yw) -> JacobianSnapshot:
    """Jacobians at given pre-projection points."""
    blocks = []
    for start, s in problem.sets:
        jac = jacobian(s, yz[start:start + s.dim])
        if jac is NOT_DIFFERENTIABLE:
            return JacobianSnapshot((), None, False)
        e = eig(jac) if jac.form in (DEFLATION, DENSE, PROJECTOR) else None
        blocks.append(DBlock(start, s.rho, jac, e))
    kj = jacobian_cone_polar(problem.cone, yw)
    if kj is NOT_DIFFERENTIABLE:
        return JacobianSnapshot(tuple(blocks), None, False)
    mask = np.ones(problem.n_w, bool) if kj.form == IDENTITY else kj.mask.copy()
    return JacobianSnapshot(tuple(blocks), mask, True)


def snapshot_jacobians(problem: QpProblem, steps: StepSizes, z, w) -> JacobianSnapshot:
    _, _, yz, yw = kernels.pipg_step(problem.packed, steps.alpha, steps.beta, z, w)
    return snapshot_at(problem, yz, yw)


# ---------------------------------------------------------------- V_D and U_D

class BlockDiagOperator:
    """Block-diagonal symmetric operator; each block is a vector (diagonal) or a matrix."""

    def __init__(self, n: int, blocks):
        self.n = n
        self.blocks = blocks  # list of (start, diag-vector or matrix)

    def apply(self, v):
        out = np.empty(self.n)
        for start, m in self.blocks:
            d = m.shape[0]
            seg = v[start:start + d]
            out[start:start + d] = m * seg if m.ndim == 1 else m @ seg
        return out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for start, m in self.blocks:
            d = m.shape[0]
            out[start:start + d, start:start + d] = np.diag(m) if m.ndim == 1 else m
        return out

    def dense_range(self, lo: int, hi: int) -> np.ndarray:
        """Dense diagonal block covering ``[lo, hi)``; blocks never straddle the bounds."""
        out = np.zeros((hi - lo, hi - lo))
        for start, m in self.blocks:
            if start < lo or start >= hi:
                continue
            d = m.shape[0]
            s = start - lo
            if m.ndim == 1:
                out[np.arange(s, s + d), np.arange(s, s + d)] = m
            else:
                out[s:s + d, s:s + d] = m
        return out


def _middle(lam, a_rho):
    den = 1.0 - lam + a_rho * lam
    if np.any(den <= 1e-14):
        raise SingularMiddleFactor("1 - lam + alpha*lam*rho vanished")
    return 1.0 / den


def _vu_block(b: DBlock, alpha: float):
    """``(V, U)`` pieces for one set block, as diagonals or small matrices."""
    a_rho = alpha * b.rho
    n = b.jac.dim
    form = b.jac.form
    if form == IDENTITY:
        v = np.full(n, 1.0 / a_rho)
        return v, v
    if form == ZERO:
        return np.ones(n), np.zeros(n)
    if form == MASK:
        lam = b.jac.mask.astype(np.float64)
        mid = _middle(lam, a_rho)
        return mid, lam * mid
    q, lam = b.eig.Q, b.eig.lam
    mid = _middle(lam, a_rho)
    return (q * mid) @ q.T, (q * (lam * mid)) @ q.T


def build_vu(snapshot: JacobianSnapshot, problem: QpProblem, steps: StepSizes):
    vb, ub = [], []
    for b in snapshot.d_blocks:
        v, u = _vu_block(b, steps.alpha)
        vb.append((b.start, v))
        ub.append((b.start, u))
    return BlockDiagOperator(problem.n_z, vb), BlockDiagOperator(problem.n_z, ub)


def build_vd_apply(snapshot: JacobianSnapshot, problem: QpProblem, steps: StepSizes):
    """``V_D = Q (I - L + a L P)^{-1} Q'`` as a block-diagonal operator."""
    if not snapshot.differentiable:
        raise ValueError("snapshot is not differentiable")
    return build_vu(snapshot, problem, steps)[0]


# ---------------------------------------------------------------- W tilde

@dataclasses.dataclass(frozen=True, eq=False)
class BlockTridiagonal:
    """Symmetric block-tridiagonal matrix: ``diag[i]`` and ``off[i] = M_{i,i+1}``."""

    diag: tuple
    off: tuple

    @property
    def sizes(self):
        return [d.shape[0] for d in self.diag]

    def to_dense(self) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.sizes)])
        out = np.zeros((off[-1], off[-1]))
        for i, d in enumerate(self.diag):
            out[off[i]:off[i + 1], off[i]:off[i + 1]] = d
        for i, o in enumerate(self.off):
            out[off[i]:off[i + 1], off[i + 1]:off[i + 2]] = o
            out[off[i + 1]:off[i + 2], off[i]:off[i + 1]] = o.T
        return out


def _stage_u(problem: QpProblem, u_op: BlockDiagOperator):
    co = np.concatenate([[0], np.cumsum(problem.H.column_dims)])
    return [u_op.dense_range(co[i], co[i + 1]) for i in range(co.size - 1)]


def build_w_tilde(snapshot: JacobianSnapshot, problem: QpProblem, steps: StepSizes,
                  delta: float = 0.0, u_op: BlockDiagOperator | None = None) -> BlockTridiagonal:
    """Masked ``a b J_K H U H' J_K + I - J_K + delta I`` in block form."""
    if not snapshot.differentiable:
        raise ValueError("snapshot is not differentiable")
    if u_op is None:
        u_op = build_vu(snapshot, problem, steps)[1]
    us = _stage_u(problem, u_op)
    ab = steps.alpha * steps.beta
    ro = np.concatenate([[0], np.cumsum(problem.H.row_dims)])
    blocks = problem.H.blocks
    masks = [snapshot.k_mask[ro[i]:ro[i + 1]].astype(np.float64) for i in range(len(blocks))]
    diag, off = [], []
    for i, (a, b) in enumerate(blocks):
        bu = b @ us[i + 1]
        w_ii = a @ us[i] @ a.T + bu @ b.T
        k = masks[i]
        wt = ab * (k[:, None] * w_ii * k[None, :])
        wt[np.diag_indices_from(wt)] += (1.0 - k) + delta
        diag.append(wt)
        if i + 1 < len(blocks):
            w_off = bu @ blocks[i + 1][0].T
            off.append(ab * (k[:, None] * w_off * masks[i + 1][None, :]))
    return BlockTridiagonal(tuple(diag), tuple(off))


# ---------------------------------------------------------------- block Cholesky

@dataclasses.dataclass(frozen=True, eq=False)
class NewtonFactorization:
    diag_blocks: tuple
    sub_blocks: tuple  # sub_blocks[i] = L_{i+1,i}
    regularization: float = 0.0
    u_blocks: tuple = ()

    def to_dense_l(self) -> np.ndarray:
        sizes = [d.shape[0] for d in self.diag_blocks]
        off = np.concatenate([[0], np.cumsum(sizes)])
        out = np.zeros((off[-1], off[-1]))
        for i, d in enumerate(self.diag_blocks):
            out[off[i]:off[i + 1], off[i]:off[i + 1]] = d
        for i, s in enumerate(self.sub_blocks):
            out[off[i + 1]:off[i + 2], off[i]:off[i + 1]] = s
        return out

    def solve(self, rhs) -> np.ndarray:
        """Solve ``L L' x = rhs`` by blocked forward and backward substitution."""
        sizes = [d.shape[0] for d in self.diag_blocks]
        off = np.concatenate([[0], np.cumsum(sizes)])
        nb = len(sizes)
        y = [None] * nb
        for i in range(nb):
            bi = np.array(rhs[off[i]:off[i + 1]], dtype=np.float64)
            if i > 0:
                bi -= self.sub_blocks[i - 1] @ y[i - 1]
            y[i] = _tri(self.diag_blocks[i], bi, lower=True)
        x = [None] * nb
        for i in range(nb - 1, -1, -1):
            yi = y[i]
            if i + 1 < nb:
                yi = yi - self.sub_blocks[i].T @ x[i + 1]
            x[i] = _tri(self.diag_blocks[i], yi, lower=True, trans=True)
        return np.concatenate(x) if x else np.zeros(0)


def _tri(l, b, lower, trans=False):
    if l.shape[0] == 0:
        return np.zeros_like(b)
    return solve_triangular(l, b, lower=lower, trans=1 if trans else 0, check_finite=False)


def _chol(m, stage):
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        l = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(stage) from None
    d = np.diag(l)
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise NotPositiveDefinite(stage)
    return l


def block_cholesky(w_tilde: BlockTridiagonal, regularization: float = 0.0) -> NewtonFactorization:
    diag, sub = [], []
    l_prev = None
    for i, wd in enumerate(w_tilde.diag):
        m = wd
        if i > 0:
            x = _tri(l_prev, w_tilde.off[i - 1], lower=True)
            lsub = x.T
            sub.append(lsub)
            m = wd - lsub @ lsub.T
        l_prev = _chol(m, i)
        diag.append(l_prev)
    return NewtonFactorization(tuple(diag), tuple(sub), regularization)


# ---------------------------------------------------------------- Newton direction

def _reduced_solve(problem, steps, snapshot, v_op, u_op, r_z, r_w, delta):
    pp = problem.packed
    a, b = steps.alpha, steps.beta
    k = snapshot.k_mask
    # row transform with [[I, 0], [-2 J_K b H, I]]
    rt_w = r_w - 2.0 * b * np.where(k, kernels.h_matvec(pp, r_z), 0.0)
    vr = v_op.apply(r_z)
    rbar = rt_w + b * np.where(k, kernels.h_matvec(pp, vr), 0.0)
    t = np.where(k, 0.0, rbar)
    t = kernels.h_matvec(pp, u_op.apply(kernels.ht_matvec(pp, t)))
    rhs = rbar - a * b * np.where(k, t, 0.0)
    wt = build_w_tilde(snapshot, problem, steps, delta, u_op=u_op)
    fac = block_cholesky(wt, delta)
    dw = fac.solve(rhs)
    dz = vr - a * u_op.apply(kernels.ht_matvec(pp, dw))
    return dz, dw


def newton_direction(problem: QpProblem, steps: StepSizes, snapshot: JacobianSnapshot,
                     residual, delta: float = 0.0, max_retries: int = 8):
    """Solve ``(I - J_T) p = R`` for ``p = (dz, dw)``.

    ``residual`` is ``T(z, w) - (z, w)`` stacked. When the reduced matrix is
    not positive definite ``delta`` is doubled (or seeded) and the solve is
    retried; :class:`Singular` is raised once the retry budget is spent.
    """
    if not snapshot.differentiable:
        raise ValueError("snapshot is not differentiable")
    r = np.asarray(residual, dtype=np.float64)
    r_z, r_w = r[:problem.n_z], r[problem.n_z:]
    v_op, u_op = build_vu(snapshot, problem, steps)
    d = float(delta)
    for _ in range(max_retries + 1):
        try:
            return _reduced_solve(problem, steps, snapshot, v_op, u_op, r_z, r_w, d)
        except NotPositiveDefinite:
            d = 2.0 * d if d > 0.0 else 1e-10 * max(1.0, float(np.linalg.norm(r)))
    raise Singular(f"reduced Newton matrix not positive definite after {max_retries} retries")
