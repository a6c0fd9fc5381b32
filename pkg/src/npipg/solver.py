"""Globalized Newton-PIPG loop.

Each iteration either applies the PIPG operator or, once the active pattern
of the projections has been stable for a while, tries a Newton step on the
fixed-point residual. A Newton candidate is kept only if it contracts the
residual in the M-norm; otherwise the plain PIPG update is taken.
"""

from __future__ import annotations

import collections
import dataclasses
import math
import time
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import Singular
from .model import QpProblem
from .newton import newton_direction, snapshot_at
from .pipg import StepSizes, choose_step_sizes, m_norm, rescale_rows
from .projections import project

CONVERGED = "converged"
MAX_ITERS = "max_iters"

PIPG = "pipg"
NEWTON_ACCEPTED = "newton-accepted"
NEWTON_REJECTED = "newton-rejected"

THETAS = (1.0, 0.5, 0.25, 0.125)


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    c: float = 0.99
    sigma: float = 1e6
    wait_period: int = 5
    line_search_count: int = 4
    kappa: float = 1e-2
    eps_abs: float = 1e-8
    eps_rel: float = 0.0
    max_iters: int = 1_000_000
    omega: float = 1.0
    pure_pipg: bool = False
    rescale: bool = True
    trace: bool = True

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise ValueError("c must lie in [0, 1)")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.wait_period < 1:
            raise ValueError("wait_period must be at least 1")
        if not 1 <= self.line_search_count <= len(THETAS):
            raise ValueError(f"line_search_count must be in 1..{len(THETAS)}")
        if self.eps_abs < 0.0 or self.eps_rel < 0.0 or self.eps_abs + self.eps_rel <= 0.0:
            raise ValueError("tolerances must be nonnegative and not both zero")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


class TraceRow(NamedTuple):
    iter: int
    step: str
    residual: float
    elapsed_ms: float


@dataclasses.dataclass
class SolveReport:
    status: str
    z: np.ndarray
    w: np.ndarray
    iterations: int
    pipg_count: int
    newton_accept_count: int
    newton_reject_count: int
    newton_singular_count: int
    residual: float
    eps_achieved: float
    solve_ms: float
    trace: list
    steps: StepSizes
    # the problem actually iterated on (row-scaled if enabled) and its iterate
    solved_problem: QpProblem
    z_solved: np.ndarray
    w_solved: np.ndarray
    row_scale: np.ndarray | None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def newton_trigger(history, wait_period: int, since_last_attempt: int | None = None) -> bool:
    """True once the last ``wait_period + 1`` patterns agree and no attempt is too recent."""
    if len(history) < wait_period + 1:
        return False
    recent = list(history)[-(wait_period + 1):]
    if any(p != recent[0] for p in recent[1:]):
        return False
    return since_last_attempt is None or since_last_attempt >= wait_period


def _termination_tols(pp, z1, w1, cfg):
    tol_p = tol_d = cfg.eps_abs
    if cfg.eps_rel > 0.0:
        tol_p += cfg.eps_rel * np.linalg.norm(pp.p_diag * z1 + pp.q + kernels.ht_matvec(pp, w1))
        tol_d += cfg.eps_rel * np.linalg.norm(kernels.h_matvec(pp, z1) - pp.g)
    return tol_p, tol_d


def _dist(a, b) -> float:
    d = a - b
    return math.sqrt(float(d @ d))


def projected_origin(problem: QpProblem) -> np.ndarray:
    z = np.zeros(problem.n_z)
    for start, s in problem.sets:
        z[start:start + s.dim] = project(s, np.zeros(s.dim))
    return z


def solve(problem: QpProblem, config: SolverConfig | None = None, warm_start=None,
          h_norm: float | None = None, callback=None) -> SolveReport:
    """Run Newton-PIPG (or plain PIPG) from ``warm_start`` or the projected origin.

    ``callback(k, step, z, w)``, if given, sees every iterate of the problem
    actually iterated on (row-scaled when rescaling is enabled).
    """
    cfg = config or SolverConfig()
    if cfg.rescale:
        prob, scale = rescale_rows(problem)
    else:
        prob, scale = problem, None
    steps = choose_step_sizes(prob, cfg.omega, h_norm)
    pp = prob.packed
    if warm_start is None:
        z, w = projected_origin(prob), np.zeros(prob.n_w)
    else:
        z = np.array(warm_start[0], dtype=np.float64)
        w = np.array(warm_start[1], dtype=np.float64)
        if scale is not None:
            w = w / scale
    if cfg.pure_pipg and not cfg.trace and callback is None:
        out = _run_fast(prob, steps, z, w, cfg)
    else:
        out = _run_loop(prob, steps, z, w, cfg, callback)
    status, z1, w1, eps, counts, trace, ms, res = out
    w_out = w1 * scale if scale is not None else w1.copy()
    return SolveReport(
        status=status, z=z1.copy(), w=w_out, iterations=sum(counts), pipg_count=counts[0],
        newton_accept_count=counts[1], newton_reject_count=counts[2],
        newton_singular_count=counts[3] if len(counts) > 3 else 0, residual=res,
        eps_achieved=eps, solve_ms=ms, trace=trace, steps=steps, solved_problem=prob,
        z_solved=z1, w_solved=w1, row_scale=scale)


def _run_fast(prob, steps, z, w, cfg):
    t0 = time.perf_counter()
    zf, wf, zp, wp, it, conv, _ = kernels.pipg_run(
        prob.packed, steps.alpha, steps.beta, z, w, cfg.max_iters, cfg.eps_abs, cfg.eps_rel,
        steps.gamma_p, steps.gamma_d)
    ms = 1e3 * (time.perf_counter() - t0)
    eps = max(float(np.linalg.norm(zf - zp)), float(np.linalg.norm(wf - wp)))
    res = float(math.hypot(np.linalg.norm(zf - zp), np.linalg.norm(wf - wp)))
    return (CONVERGED if conv else MAX_ITERS), zf, wf, eps, (it, 0, 0), [], ms, res


def _run_loop(prob, steps, z, w, cfg, callback=None):
    pp = prob.packed
    a, b = steps.alpha, steps.beta
    nz = prob.n_z
    t0 = time.perf_counter()
    trace = []
    n_pipg = n_acc = n_rej = n_sing = 0
    history = collections.deque(maxlen=cfg.wait_period + 1)
    last_attempt = None
    blocked = None
    status = MAX_ITERS
    z1, w1, yz, yw = kernels.pipg_step(pp, a, b, z, w)
    it = 0
    kind = PIPG
    while True:
        dz = _dist(z1, z)
        dw = _dist(w1, w)
        if cfg.trace and it > 0:
            trace.append(TraceRow(it, kind, math.hypot(dz, dw), 1e3 * (time.perf_counter() - t0)))
        tol_p, tol_d = _termination_tols(pp, z1, w1, cfg)
        if dz <= tol_p / steps.gamma_p and dw <= tol_d / steps.gamma_d:
            status = CONVERGED
            break
        if it >= cfg.max_iters:
            break
        kind = PIPG
        accepted = None
        if not cfg.pure_pipg:
            pat = kernels.pattern_codes(pp, yz, yw).tobytes()
            history.append(pat)
            if blocked is not None and pat != blocked:
                blocked = None
            since = None if last_attempt is None else it - last_attempt
            if blocked is None and newton_trigger(history, cfg.wait_period, since):
                last_attempt = it
                snap = snapshot_at(prob, yz, yw)
                if snap.differentiable:
                    accepted, singular = _try_newton(prob, steps, snap, z, w, z1, w1, cfg)
                    n_sing += singular
                    kind = NEWTON_ACCEPTED if accepted is not None else NEWTON_REJECTED
                    if accepted is None:
                        blocked = pat
        if accepted is not None:
            z, w, z1, w1, yz, yw = accepted
            n_acc += 1
        else:
            z, w = z1, w1
            z1, w1, yz, yw = kernels.pipg_step(pp, a, b, z, w)
            if kind == NEWTON_REJECTED:
                n_rej += 1
            else:
                n_pipg += 1
        it += 1
        if callback is not None:
            callback(it, kind, z, w)
    eps = max(dz, dw)
    res = math.hypot(dz, dw)
    # the returned point is T(x) of the last iterate, counted as one more PIPG step
    if status == CONVERGED:
        n_pipg += 1
        if cfg.trace:
            z2, w2, _, _ = kernels.pipg_step(pp, a, b, z1, w1)
            r = math.hypot(_dist(z2, z1), _dist(w2, w1))
            trace.append(TraceRow(it + 1, PIPG, r, 1e3 * (time.perf_counter() - t0)))
        zf, wf = z1, w1
    else:
        zf, wf = z, w
    ms = 1e3 * (time.perf_counter() - t0)
    return status, zf, wf, eps, (n_pipg, n_acc, n_rej, n_sing), trace, ms, res


def _try_newton(prob, steps, snap, z, w, z1, w1, cfg):
    """Returns ``((z, w, Tz, Tw, yz, yw) or None, singular_flag)``."""
    pp = prob.packed
    nz = prob.n_z
    r = np.concatenate([z1 - z, w1 - w])
    r_norm = float(np.linalg.norm(r))
    r_m = m_norm(prob, steps, z1 - z, w1 - w)
    try:
        dz, dw = newton_direction(prob, steps, snap, r, delta=cfg.kappa * r_norm)
    except Singular:
        return None, 1
    if not (np.all(np.isfinite(dz)) and np.all(np.isfinite(dw))):
        return None, 0
    p_m = m_norm(prob, steps, dz, dw)
    for theta in THETAS[:cfg.line_search_count]:
        if theta * p_m >= cfg.sigma * r_m:
            continue
        zc = z + theta * dz
        wc = w + theta * dw
        zc1, wc1, yzc, ywc = kernels.pipg_step(pp, steps.alpha, steps.beta, zc, wc)
        if m_norm(prob, steps, zc1 - zc, wc1 - wc) <= cfg.c * r_m:
            return (zc, wc, zc1, wc1, yzc, ywc), 0
    return None, 0
