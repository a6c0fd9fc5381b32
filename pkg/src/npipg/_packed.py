"""Flat-array view of a QpProblem for the compiled kernels."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .model import BOX


class PackedProblem(NamedTuple):
    n_z: int
    n_w: int
    # H: block row i occupies rows row_off[i]:row_off[i+1] and starts at column col_off[i]
    row_off: np.ndarray
    col_off: np.ndarray
    a_off: np.ndarray
    b_off: np.ndarray
    hdata: np.ndarray
    # sets
    set_kind: np.ndarray
    set_start: np.ndarray
    set_dim: np.ndarray
    set_poff: np.ndarray
    params: np.ndarray
    p_diag: np.ndarray
    q: np.ndarray
    g: np.ndarray
    eq_mask: np.ndarray
    # grouped views for the vectorized numpy backend
    box_idx: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    other_sets: tuple


def pack(problem) -> PackedProblem:
    H = problem.H
    rows, cols = H.row_dims, H.column_dims
    row_off = np.concatenate([[0], np.cumsum(rows)]).astype(np.int64)
    col_off = np.concatenate([[0], np.cumsum(cols)]).astype(np.int64)
    chunks, a_off, b_off, off = [], [], [], 0
    for a, b in H.blocks:
        a_off.append(off)
        chunks.append(a.reshape(-1))
        off += a.size
        b_off.append(off)
        chunks.append(b.reshape(-1))
        off += b.size
    hdata = np.concatenate(chunks) if chunks else np.zeros(0)

    kinds, starts, dims, poffs, pchunks = [], [], [], [], []
    poff = 0
    box_idx, box_lo, box_hi, other = [], [], [], []
    for start, s in problem.sets:
        p = s.params()
        kinds.append(s.kind)
        starts.append(start)
        dims.append(s.dim)
        poffs.append(poff)
        pchunks.append(p)
        if s.kind == BOX:
            box_idx.append(np.arange(start, start + s.dim))
            box_lo.append(s.lo)
            box_hi.append(s.hi)
        else:
            other.append((s.kind, start, s.dim, poff))
        poff += p.size
    params = np.concatenate(pchunks) if pchunks else np.zeros(0)

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

    return PackedProblem(
        n_z=problem.n_z,
        n_w=problem.n_w,
        row_off=row_off,
        col_off=col_off,
        a_off=np.array(a_off, np.int64),
        b_off=np.array(b_off, np.int64),
        hdata=np.ascontiguousarray(hdata, dtype=np.float64),
        set_kind=np.array(kinds, np.int64),
        set_start=np.array(starts, np.int64),
        set_dim=np.array(dims, np.int64),
        set_poff=np.array(poffs, np.int64),
        params=np.ascontiguousarray(params, dtype=np.float64),
        p_diag=np.array(problem.p_diag, dtype=np.float64),
        q=np.array(problem.q, dtype=np.float64),
        g=np.array(problem.g, dtype=np.float64),
        eq_mask=np.array(problem.cone.eq_mask, dtype=np.bool_),
        box_idx=cat(box_idx, np.int64),
        box_lo=cat(box_lo, np.float64),
        box_hi=cat(box_hi, np.float64),
        other_sets=tuple(other),
    )
