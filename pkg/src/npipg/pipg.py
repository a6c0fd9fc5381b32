"""The PIPG operator, its residual, the M-norm and step-size selection."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import kernels
from .errors import DegenerateProblem, DimensionMismatch
from .model import QpProblem, operator_norm_h

STEP_MARGIN = 0.99


@dataclasses.dataclass(frozen=True)
class StepSizes:
    alpha: float
    beta: float
    p_norm: float = 0.0
    h_norm: float = 0.0

    @property
    def gamma_p(self) -> float:
        return gamma_p(self.alpha, self.p_norm, self.h_norm)

    @property
    def gamma_d(self) -> float:
        return gamma_d(self.beta, self.h_norm)


def gamma_p(alpha: float, p_norm: float, h_norm: float) -> float:
    return 1.0 / alpha + p_norm + h_norm


def gamma_d(beta: float, h_norm: float) -> float:
    return 1.0 / beta + h_norm


def step_sizes_from_norms(p_norm: float, h_norm: float, omega: float = 1.0) -> StepSizes:
    """Solve ``a*p_norm + omega*a^2*h_norm^2 = 0.99`` for ``a > 0``; ``beta = omega*a``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    if p_norm <= 0.0 and h_norm <= 0.0:
        raise DegenerateProblem("both ||P|| and ||H|| vanish")
    qa = omega * h_norm * h_norm
    if qa == 0.0:
        alpha = STEP_MARGIN / p_norm
    else:
        # numerically stable form of (-p + sqrt(p^2 + 4 qa m)) / (2 qa)
        alpha = 2.0 * STEP_MARGIN / (p_norm + math.sqrt(p_norm * p_norm + 4.0 * qa * STEP_MARGIN))
    return StepSizes(alpha, omega * alpha, float(p_norm), float(h_norm))


def choose_step_sizes(problem: QpProblem, omega: float = 1.0, h_norm: float | None = None) -> StepSizes:
    if h_norm is None:
        h_norm = operator_norm_h(problem.H)
    return step_sizes_from_norms(problem.p_norm, h_norm, omega)


def _vecs(problem, z, w):
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if z.shape != (problem.n_z,):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({problem.n_z},)")
    if w.shape != (problem.n_w,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({problem.n_w},)")
    return z, w


def apply_t(problem: QpProblem, steps: StepSizes, z, w):
    """One PIPG update ``(z+, w+) = T(z, w)``."""
    z, w = _vecs(problem, z, w)
    z1, w1, _, _ = kernels.pipg_step(problem.packed, steps.alpha, steps.beta, z, w)
    return z1, w1


def residual(problem: QpProblem, steps: StepSizes, z, w):
    """``R = T(z, w) - (z, w)`` stacked, and its Euclidean norm."""
    z1, w1 = apply_t(problem, steps, z, w)
    r = np.concatenate([z1 - z, w1 - w])
    return r, float(np.linalg.norm(r))


def m_norm_sq(problem: QpProblem, steps: StepSizes, v_z, v_w) -> float:
    v_z, v_w = _vecs(problem, v_z, v_w)
    pp = problem.packed
    hv = kernels.h_matvec(pp, v_z)
    return float(v_z @ v_z / steps.alpha - v_z @ (pp.p_diag * v_z) + v_w @ v_w / steps.beta
                 - 2.0 * v_w @ hv)


def m_norm(problem, steps, v_z, v_w) -> float:
    return math.sqrt(max(m_norm_sq(problem, steps, v_z, v_w), 0.0))


@dataclasses.dataclass
class PipgState:
    """Iterate ``(z, w)`` with a lazily computed ``T(z, w)``."""

    z: np.ndarray
    w: np.ndarray
    cached_tz: np.ndarray | None = None
    cached_residual_norm: float | None = None
    # pre-projection points of the cached step, reused by Jacobian snapshots
    pre_z: np.ndarray | None = None
    pre_w: np.ndarray | None = None

    def evaluate(self, problem: QpProblem, steps: StepSizes):
        if self.cached_tz is None:
            z1, w1, yz, yw = kernels.pipg_step(problem.packed, steps.alpha, steps.beta, self.z, self.w)
            self.cached_tz = np.concatenate([z1, w1])
            self.pre_z, self.pre_w = yz, yw
            self.cached_residual_norm = float(math.hypot(np.linalg.norm(z1 - self.z),
                                                         np.linalg.norm(w1 - self.w)))
        return self.cached_tz

    def next_pair(self, problem, steps):
        t = self.evaluate(problem, steps)
        return t[:problem.n_z], t[problem.n_z:]

    def residual(self, problem, steps) -> np.ndarray:
        t = self.evaluate(problem, steps)
        return t - np.concatenate([self.z, self.w])


def check_termination(problem: QpProblem, steps: StepSizes, prev, nxt, eps_abs: float,
                      eps_rel: float = 0.0) -> bool:
    """Stopping test on consecutive iterates ``nxt = T(prev)``."""
    z, w = prev
    z1, w1 = nxt
    pp = problem.packed
    tol_p = tol_d = eps_abs
    if eps_rel > 0.0:
        tol_p += eps_rel * np.linalg.norm(pp.p_diag * z1 + pp.q + kernels.ht_matvec(pp, w1))
        tol_d += eps_rel * np.linalg.norm(kernels.h_matvec(pp, z1) - pp.g)
    return bool(np.linalg.norm(np.asarray(z1) - z) <= tol_p / steps.gamma_p
                and np.linalg.norm(np.asarray(w1) - w) <= tol_d / steps.gamma_d)


def rescale_rows(problem: QpProblem):
    """Scale every row of ``(H, g)`` to unit norm.

    Returns ``(scaled_problem, s)``; a dual ``w'`` of the scaled problem maps
    back to ``w = s * w'``.
    """
    Hd_rows = []
    for a, b in problem.H.blocks:
        Hd_rows.append(np.sqrt(np.sum(a * a, axis=1) + np.sum(b * b, axis=1)))
    norms = np.concatenate(Hd_rows) if Hd_rows else np.zeros(0)
    s = 1.0 / np.maximum(norms, 1e-12)
    scaled = problem.with_data(H=problem.H.scale_rows(s), g=problem.g * s)
    return scaled, s
