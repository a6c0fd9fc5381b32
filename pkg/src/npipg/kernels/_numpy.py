"""Pure-numpy kernels, vectorized where the set layout allows."""

import numpy as np

from ..model import AFFINE, BALL, FULL, HALFSPACE, POINT, SOC


def h_matvec(pp, z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty(pp.n_w)
    ro, co = pp.row_off, pp.col_off
    for i in range(ro.size - 1):
        nr = ro[i + 1] - ro[i]
        if nr == 0:
            continue
        na, nb = co[i + 1] - co[i], co[i + 2] - co[i + 1]
        a = pp.hdata[pp.a_off[i]:pp.a_off[i] + nr * na].reshape(nr, na)
        b = pp.hdata[pp.b_off[i]:pp.b_off[i] + nr * nb].reshape(nr, nb)
        out[ro[i]:ro[i + 1]] = a @ z[co[i]:co[i + 1]] + b @ z[co[i + 1]:co[i + 2]]
    return out


def ht_matvec(pp, w):
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros(pp.n_z)
    ro, co = pp.row_off, pp.col_off
    for i in range(ro.size - 1):
        nr = ro[i + 1] - ro[i]
        if nr == 0:
            continue
        na, nb = co[i + 1] - co[i], co[i + 2] - co[i + 1]
        a = pp.hdata[pp.a_off[i]:pp.a_off[i] + nr * na].reshape(nr, na)
        b = pp.hdata[pp.b_off[i]:pp.b_off[i] + nr * nb].reshape(nr, nb)
        wi = w[ro[i]:ro[i + 1]]
        out[co[i]:co[i + 1]] += wi @ a
        out[co[i + 1]:co[i + 2]] += wi @ b
    return out


def _project_one(kind, s, d, p, params, y, out):
    seg = y[s:s + d]
    if kind == FULL:
        out[s:s + d] = seg
    elif kind == POINT:
        out[s:s + d] = params[p:p + d]
    elif kind == BALL:
        c = params[p:p + d]
        r = params[p + d]
        nrm = np.linalg.norm(seg - c)
        out[s:s + d] = seg if nrm <= r else c + (r / nrm) * (seg - c)
    elif kind == SOC:
        x, t = seg[:-1], seg[-1]
        nx = np.linalg.norm(x)
        if nx <= t:
            out[s:s + d] = seg
        elif nx <= -t:
            out[s:s + d] = 0.0
        else:
            a = 0.5 * (t + nx)
            out[s:s + d - 1] = a * x / nx
            out[s + d - 1] = a
    elif kind == HALFSPACE:
        a = params[p:p + d]
        b, aa = params[p + d], params[p + d + 1]
        ay = a @ seg
        out[s:s + d] = seg if ay <= b else seg - ((ay - b) / aa) * a
    elif kind == AFFINE:
        pi = params[p:p + d * d].reshape(d, d)
        c = params[p + d * d:p + d * d + d]
        out[s:s + d] = c + pi @ (seg - c)


def project_sets(pp, y):
    y = np.asarray(y, dtype=np.float64)
    out = np.empty(pp.n_z)
    if pp.box_idx.size:
        out[pp.box_idx] = np.clip(y[pp.box_idx], pp.box_lo, pp.box_hi)
    for kind, s, d, p in pp.other_sets:
        _project_one(kind, s, d, p, pp.params, y, out)
    return out


def project_polar(pp, w):
    w = np.asarray(w, dtype=np.float64)
    return np.where(pp.eq_mask, w, np.minimum(w, 0.0))


def pipg_step(pp, alpha, beta, z, w):
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    yz = z - alpha * (pp.p_diag * z + pp.q + ht_matvec(pp, w))
    z1 = project_sets(pp, yz)
    yw = w + beta * (h_matvec(pp, 2.0 * z1 - z) - pp.g)
    w1 = project_polar(pp, yw)
    return z1, w1, yz, yw


def pattern_codes(pp, yz, yw):
    yz = np.asarray(yz, dtype=np.float64)
    yw = np.asarray(yw, dtype=np.float64)
    out = np.zeros(pp.n_z + pp.n_w, dtype=np.int8)
    if pp.box_idx.size:
        v = yz[pp.box_idx]
        c = np.zeros(v.size, dtype=np.int8)
        c[v < pp.box_lo] = -1
        c[v > pp.box_hi] = 1
        c[(v == pp.box_lo) | (v == pp.box_hi)] = 2
        out[pp.box_idx] = c
    for kind, s, d, p in pp.other_sets:
        seg = yz[s:s + d]
        code = 0
        if kind == BALL:
            nrm = np.linalg.norm(seg - pp.params[p:p + d])
            r = pp.params[p + d]
            code = 0 if nrm < r else (1 if nrm > r else 2)
        elif kind == SOC:
            nx, t = np.linalg.norm(seg[:-1]), seg[-1]
            if nx < t:
                code = 0
            elif nx < -t:
                code = 1
            elif nx > abs(t):
                code = 2
            else:
                code = 3
        elif kind == HALFSPACE:
            ay, b = pp.params[p:p + d] @ seg, pp.params[p + d]
            code = 0 if ay < b else (1 if ay > b else 2)
        out[s:s + d] = code
    ineq = ~pp.eq_mask
    cw = np.zeros(pp.n_w, dtype=np.int8)
    cw[ineq & (yw < 0)] = 1
    cw[ineq & (yw == 0)] = 2
    out[pp.n_z:] = cw
    return out


def pipg_run(pp, alpha, beta, z, w, max_iters, eps_abs, eps_rel, gamma_p, gamma_d, record=False):
    z = np.array(z, dtype=np.float64)
    w = np.array(w, dtype=np.float64)
    zp, wp = z, w
    hist = []
    it = 0
    converged = False
    while it < max_iters:
        z1, w1, _, _ = pipg_step(pp, alpha, beta, z, w)
        dz = np.linalg.norm(z1 - z)
        dw = np.linalg.norm(w1 - w)
        if record:
            hist.append(np.hypot(dz, dw))
        it += 1
        tol_p = tol_d = eps_abs
        if eps_rel > 0:
            tol_p += eps_rel * np.linalg.norm(pp.p_diag * z1 + pp.q + ht_matvec(pp, w1))
            tol_d += eps_rel * np.linalg.norm(h_matvec(pp, z1) - pp.g)
        zp, wp, z, w = z, w, z1, w1
        if dz <= tol_p / gamma_p and dw <= tol_d / gamma_d:
            converged = True
            break
    return z, w, zp, wp, it, converged, np.array(hist)


def jacobi_rotate(a, q, tol, max_sweeps):
    n = a.shape[0]
    scale = max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        if np.sqrt(np.sum(np.tril(a, -1) ** 2)) < tol * scale:
            return True
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, ar = a[:, p].copy(), a[:, r].copy()
                a[:, p] = c * ap - s * ar
                a[:, r] = s * ap + c * ar
                ap, ar = a[p, :].copy(), a[r, :].copy()
                a[p, :] = c * ap - s * ar
                a[r, :] = s * ap + c * ar
                qp, qr = q[:, p].copy(), q[:, r].copy()
                q[:, p] = c * qp - s * qr
                q[:, r] = s * qp + c * qr
    return False
