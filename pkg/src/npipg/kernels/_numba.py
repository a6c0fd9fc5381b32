"""Numba-compiled kernels.

Each public function takes a :class:`~npipg._packed.PackedProblem` and
unpacks it into plain arrays for the jitted inner routine.
"""

import numpy as np
from numba import njit

from ..model import AFFINE, BALL, BOX, FULL, HALFSPACE, POINT, SOC

_opts = dict(cache=True, nogil=True)
# reassociation lets the block dot products vectorize
_fast = dict(cache=True, nogil=True, fastmath=True)


@njit(**_fast)
def _h(row_off, col_off, a_off, b_off, hdata, z, out):
    nb = row_off.size - 1
    for i in range(nb):
        r0, r1 = row_off[i], row_off[i + 1]
        c0, c1, c2 = col_off[i], col_off[i + 1], col_off[i + 2]
        na, nbc = c1 - c0, c2 - c1
        pa, pb = a_off[i], b_off[i]
        za = z[c0:c1]
        zb = z[c1:c2]
        for r in range(r1 - r0):
            acc = 0.0
            # contiguous row slices let the inner loops vectorize
            row = hdata[pa + r * na:pa + (r + 1) * na]
            for c in range(na):
                acc += row[c] * za[c]
            row = hdata[pb + r * nbc:pb + (r + 1) * nbc]
            for c in range(nbc):
                acc += row[c] * zb[c]
            out[r0 + r] = acc


@njit(**_fast)
def _ht(row_off, col_off, a_off, b_off, hdata, w, out):
    out[:] = 0.0
    nb = row_off.size - 1
    for i in range(nb):
        r0, r1 = row_off[i], row_off[i + 1]
        c0, c1, c2 = col_off[i], col_off[i + 1], col_off[i + 2]
        na, nbc = c1 - c0, c2 - c1
        pa, pb = a_off[i], b_off[i]
        oa = out[c0:c1]
        ob = out[c1:c2]
        for r in range(r1 - r0):
            wr = w[r0 + r]
            if wr == 0.0:
                continue
            row = hdata[pa + r * na:pa + (r + 1) * na]
            for c in range(na):
                oa[c] += row[c] * wr
            row = hdata[pb + r * nbc:pb + (r + 1) * nbc]
            for c in range(nbc):
                ob[c] += row[c] * wr


@njit(**_opts)
def _project(kind, start, dim, poff, params, y, out):
    for k in range(kind.size):
        s, d, p = start[k], dim[k], poff[k]
        kd = kind[k]
        if kd == FULL:
            for j in range(d):
                out[s + j] = y[s + j]
        elif kd == POINT:
            for j in range(d):
                out[s + j] = params[p + j]
        elif kd == BOX:
            for j in range(d):
                v = y[s + j]
                lo = params[p + j]
                hi = params[p + d + j]
                if v < lo:
                    v = lo
                elif v > hi:
                    v = hi
                out[s + j] = v
        elif kd == BALL:
            r = params[p + d]
            nrm = 0.0
            for j in range(d):
                t = y[s + j] - params[p + j]
                nrm += t * t
            nrm = np.sqrt(nrm)
            if nrm <= r:
                for j in range(d):
                    out[s + j] = y[s + j]
            else:
                sc = r / nrm
                for j in range(d):
                    c = params[p + j]
                    out[s + j] = c + sc * (y[s + j] - c)
        elif kd == SOC:
            t = y[s + d - 1]
            nx = 0.0
            for j in range(d - 1):
                nx += y[s + j] * y[s + j]
            nx = np.sqrt(nx)
            if nx <= t:
                for j in range(d):
                    out[s + j] = y[s + j]
            elif nx <= -t:
                for j in range(d):
                    out[s + j] = 0.0
            else:
                a = 0.5 * (t + nx)
                for j in range(d - 1):
                    out[s + j] = a * y[s + j] / nx
                out[s + d - 1] = a
        elif kd == HALFSPACE:
            b = params[p + d]
            aa = params[p + d + 1]
            ay = 0.0
            for j in range(d):
                ay += params[p + j] * y[s + j]
            if ay <= b:
                for j in range(d):
                    out[s + j] = y[s + j]
            else:
                sc = (ay - b) / aa
                for j in range(d):
                    out[s + j] = y[s + j] - sc * params[p + j]
        elif kd == AFFINE:
            c0 = p + d * d
            for r in range(d):
                acc = params[c0 + r]
                for j in range(d):
                    acc += params[p + r * d + j] * (y[s + j] - params[c0 + j])
                out[s + r] = acc


@njit(**_opts)
def _polar(eq_mask, w, out):
    for i in range(w.size):
        v = w[i]
        if not eq_mask[i] and v > 0.0:
            v = 0.0
        out[i] = v


@njit(**_opts)
def _step(row_off, col_off, a_off, b_off, hdata, kind, start, dim, poff, params,
          p_diag, q, g, eq_mask, alpha, beta, z, w, z1, w1, yz, yw, tmp_z, tmp_w):
    _ht(row_off, col_off, a_off, b_off, hdata, w, tmp_z)
    for i in range(z.size):
        yz[i] = z[i] - alpha * (p_diag[i] * z[i] + q[i] + tmp_z[i])
    _project(kind, start, dim, poff, params, yz, z1)
    for i in range(z.size):
        tmp_z[i] = 2.0 * z1[i] - z[i]
    _h(row_off, col_off, a_off, b_off, hdata, tmp_z, tmp_w)
    for i in range(w.size):
        yw[i] = w[i] + beta * (tmp_w[i] - g[i])
    _polar(eq_mask, yw, w1)


@njit(**_opts)
def _pattern(kind, start, dim, poff, params, eq_mask, yz, yw, out):
    nz = yz.size
    for k in range(kind.size):
        s, d, p = start[k], dim[k], poff[k]
        kd = kind[k]
        code = 0
        if kd == BOX:
            for j in range(d):
                v = yz[s + j]
                lo = params[p + j]
                hi = params[p + d + j]
                if v < lo:
                    out[s + j] = -1
                elif v > hi:
                    out[s + j] = 1
                elif v == lo or v == hi:
                    out[s + j] = 2
                else:
                    out[s + j] = 0
            continue
        if kd == BALL:
            nrm = 0.0
            for j in range(d):
                t = yz[s + j] - params[p + j]
                nrm += t * t
            nrm = np.sqrt(nrm)
            r = params[p + d]
            code = 0 if nrm < r else (1 if nrm > r else 2)
        elif kd == SOC:
            t = yz[s + d - 1]
            nx = 0.0
            for j in range(d - 1):
                nx += yz[s + j] * yz[s + j]
            nx = np.sqrt(nx)
            if nx < t:
                code = 0
            elif nx < -t:
                code = 1
            elif nx > abs(t):
                code = 2
            else:
                code = 3
        elif kd == HALFSPACE:
            ay = 0.0
            for j in range(d):
                ay += params[p + j] * yz[s + j]
            b = params[p + d]
            code = 0 if ay < b else (1 if ay > b else 2)
        for j in range(d):
            out[s + j] = code
    for i in range(yw.size):
        if eq_mask[i]:
            out[nz + i] = 0
        elif yw[i] < 0.0:
            out[nz + i] = 1
        elif yw[i] > 0.0:
            out[nz + i] = 0
        else:
            out[nz + i] = 2


@njit(**_opts)
def _norm(x):
    acc = 0.0
    for i in range(x.size):
        acc += x[i] * x[i]
    return np.sqrt(acc)


@njit(**_opts)
def _diffnorm(x, y):
    acc = 0.0
    for i in range(x.size):
        t = x[i] - y[i]
        acc += t * t
    return np.sqrt(acc)


@njit(**_opts)
def _run(row_off, col_off, a_off, b_off, hdata, kind, start, dim, poff, params,
         p_diag, q, g, eq_mask, alpha, beta, z, w, max_iters, eps_abs, eps_rel,
         gamma_p, gamma_d, hist):
    nz, nw = z.size, w.size
    z0 = z.copy()
    w0 = w.copy()
    z1 = np.empty(nz)
    w1 = np.empty(nw)
    yz = np.empty(nz)
    yw = np.empty(nw)
    tz = np.empty(nz)
    tw = np.empty(nw)
    record = hist.size > 0
    it = 0
    converged = False
    while it < max_iters:
        _step(row_off, col_off, a_off, b_off, hdata, kind, start, dim, poff, params,
              p_diag, q, g, eq_mask, alpha, beta, z0, w0, z1, w1, yz, yw, tz, tw)
        dz = _diffnorm(z1, z0)
        dw = _diffnorm(w1, w0)
        if record:
            hist[it] = np.sqrt(dz * dz + dw * dw)
        it += 1
        tol_p = eps_abs
        tol_d = eps_abs
        if eps_rel > 0.0:
            _ht(row_off, col_off, a_off, b_off, hdata, w1, tz)
            for i in range(nz):
                tz[i] += p_diag[i] * z1[i] + q[i]
            _h(row_off, col_off, a_off, b_off, hdata, z1, tw)
            for i in range(nw):
                tw[i] -= g[i]
            tol_p += eps_rel * _norm(tz)
            tol_d += eps_rel * _norm(tw)
        done = dz <= tol_p / gamma_p and dw <= tol_d / gamma_d
        # z0 <- previous iterate, z1 <- T(previous)
        for i in range(nz):
            tz[i] = z0[i]
            z0[i] = z1[i]
            z1[i] = tz[i]
        for i in range(nw):
            tw[i] = w0[i]
            w0[i] = w1[i]
            w1[i] = tw[i]
        if done:
            converged = True
            break
    # z0/w0 hold the final iterate, z1/w1 the one before
    return z0, w0, z1, w1, it, converged


def _h_args(pp):
    return pp.row_off, pp.col_off, pp.a_off, pp.b_off, pp.hdata


def _set_args(pp):
    return pp.set_kind, pp.set_start, pp.set_dim, pp.set_poff, pp.params


def h_matvec(pp, z):
    out = np.empty(pp.n_w)
    _h(*_h_args(pp), np.ascontiguousarray(z, dtype=np.float64), out)
    return out


def ht_matvec(pp, w):
    out = np.empty(pp.n_z)
    _ht(*_h_args(pp), np.ascontiguousarray(w, dtype=np.float64), out)
    return out


def project_sets(pp, y):
    out = np.empty(pp.n_z)
    _project(*_set_args(pp), np.ascontiguousarray(y, dtype=np.float64), out)
    return out


def project_polar(pp, w):
    out = np.empty(pp.n_w)
    _polar(pp.eq_mask, np.ascontiguousarray(w, dtype=np.float64), out)
    return out


def pipg_step(pp, alpha, beta, z, w):
    """One PIPG update. Returns ``(z1, w1, yz, yw)`` with the pre-projection points."""
    z1, yz, tz = np.empty(pp.n_z), np.empty(pp.n_z), np.empty(pp.n_z)
    w1, yw, tw = np.empty(pp.n_w), np.empty(pp.n_w), np.empty(pp.n_w)
    _step(*_h_args(pp), *_set_args(pp), pp.p_diag, pp.q, pp.g, pp.eq_mask,
          float(alpha), float(beta), np.ascontiguousarray(z, dtype=np.float64),
          np.ascontiguousarray(w, dtype=np.float64), z1, w1, yz, yw, tz, tw)
    return z1, w1, yz, yw


def pattern_codes(pp, yz, yw):
    out = np.empty(pp.n_z + pp.n_w, dtype=np.int8)
    _pattern(*_set_args(pp), pp.eq_mask, np.ascontiguousarray(yz, dtype=np.float64),
             np.ascontiguousarray(yw, dtype=np.float64), out)
    return out


def pipg_run(pp, alpha, beta, z, w, max_iters, eps_abs, eps_rel, gamma_p, gamma_d, record=False):
    hist = np.empty(int(max_iters) if record else 0)
    zf, wf, zp, wp, it, conv = _run(
        *_h_args(pp), *_set_args(pp), pp.p_diag, pp.q, pp.g, pp.eq_mask,
        float(alpha), float(beta), np.array(z, dtype=np.float64), np.array(w, dtype=np.float64),
        int(max_iters), float(eps_abs), float(eps_rel), float(gamma_p), float(gamma_d), hist)
    return zf, wf, zp, wp, it, bool(conv), hist[:it]


@njit(**_opts)
def _jacobi(a, q, tol, max_sweeps):
    n = a.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = max(1.0, np.sqrt(scale))
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i):
                off += a[i, j] * a[i, j]
        if np.sqrt(off) < tol * scale:
            return True
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akr = a[k, p], a[k, r]
                    a[k, p] = c * akp - s * akr
                    a[k, r] = s * akp + c * akr
                for k in range(n):
                    apk, ark = a[p, k], a[r, k]
                    a[p, k] = c * apk - s * ark
                    a[r, k] = s * apk + c * ark
                for k in range(n):
                    qkp, qkr = q[k, p], q[k, r]
                    q[k, p] = c * qkp - s * qkr
                    q[k, r] = s * qkp + c * qkr
    return False


def jacobi_rotate(a, q, tol, max_sweeps):
    """In-place cyclic Jacobi sweeps on ``a`` accumulating rotations in ``q``."""
    return bool(_jacobi(a, q, float(tol), int(max_sweeps)))
