"""Problem data for strongly convex QPs with optimal-control block structure.

The QP is

    minimize    1/2 z' P z + q' z
    subject to  H z - g in K,   z in D

where ``z = (z_0, ..., z_{N+1})`` is split into time stages, ``H`` is block
bidiagonal (block row ``i`` touches stages ``i`` and ``i + 1``), ``K`` is a
product of zero cones and nonnegative orthants and ``D`` is a product of
simple convex sets. ``P`` is never stored: each set carries its own scalar
weight ``rho`` and ``P`` is diagonal with that weight repeated over the set.
"""

from __future__ import annotations

import dataclasses
import functools
import json
from typing import ClassVar, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import DimensionMismatch, MalformedSet, NonPositiveWeight

# integer tags shared with the compiled kernels
FULL, POINT, BOX, BALL, SOC, HALFSPACE, AFFINE = range(7)


def _vec(x) -> np.ndarray:
    a = np.array(x, dtype=np.float64).reshape(-1)
    a.setflags(write=False)
    return a


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not np.isfinite(rho) or rho <= 0.0:
        raise NonPositiveWeight(f"quadratic weight must be positive, got {rho}")
    return rho


@dataclasses.dataclass(frozen=True, eq=False)
class SetConstraint:
    """One component ``D_ij`` of the set product, with its weight ``rho``."""

    kind: ClassVar[int]
    name: ClassVar[str]

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def params(self) -> np.ndarray:
        """Flat parameter block consumed by the kernels."""
        return np.zeros(0)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclasses.dataclass(frozen=True, eq=False)
class FullSpace(SetConstraint):
    n: int
    rho: float = 1.0
    kind: ClassVar[int] = FULL
    name: ClassVar[str] = "full"

    def __post_init__(self):
        if int(self.n) < 1:
            raise MalformedSet("full space needs dim >= 1")
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return int(self.n)

    def to_json(self):
        return {"kind": self.name, "dim": self.dim, "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class Point(SetConstraint):
    c: np.ndarray
    rho: float = 1.0
    kind: ClassVar[int] = POINT
    name: ClassVar[str] = "point"

    def __post_init__(self):
        object.__setattr__(self, "c", _vec(self.c))
        if self.c.size < 1 or not np.all(np.isfinite(self.c)):
            raise MalformedSet("point must be a finite nonempty vector")
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return self.c.size

    def params(self):
        return np.asarray(self.c)

    def to_json(self):
        return {"kind": self.name, "c": self.c.tolist(), "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class Box(SetConstraint):
    lo: np.ndarray
    hi: np.ndarray
    rho: float = 1.0
    kind: ClassVar[int] = BOX
    name: ClassVar[str] = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.size != hi.size or lo.size < 1:
            raise MalformedSet(f"box bounds have sizes {lo.size} and {hi.size}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise MalformedSet("box needs lo <= hi elementwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return self.lo.size

    def params(self):
        return np.concatenate([self.lo, self.hi])

    def to_json(self):
        def enc(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {"kind": self.name, "lo": enc(self.lo), "hi": enc(self.hi), "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class Ball(SetConstraint):
    center: np.ndarray
    radius: float
    rho: float = 1.0
    kind: ClassVar[int] = BALL
    name: ClassVar[str] = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if self.center.size < 1:
            raise MalformedSet("ball center must be nonempty")
        r = float(self.radius)
        if not np.isfinite(r) or r <= 0.0:
            raise MalformedSet(f"ball radius must be positive, got {r}")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return self.center.size

    def params(self):
        return np.concatenate([self.center, [self.radius]])

    def to_json(self):
        return {"kind": self.name, "center": self.center.tolist(), "radius": self.radius,
                "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class SecondOrderCone(SetConstraint):
    """Lorentz cone ``{(x, t) : ||x|| <= t}``; the last coordinate is ``t``."""

    n: int
    rho: float = 1.0
    kind: ClassVar[int] = SOC
    name: ClassVar[str] = "soc"

    def __post_init__(self):
        if int(self.n) < 2:
            raise MalformedSet("second-order cone needs dim >= 2")
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return int(self.n)

    def to_json(self):
        return {"kind": self.name, "dim": self.dim, "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class Halfspace(SetConstraint):
    """``{x : a'x <= b}``."""

    a: np.ndarray
    b: float
    rho: float = 1.0
    kind: ClassVar[int] = HALFSPACE
    name: ClassVar[str] = "halfspace"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        if self.a.size < 1 or not np.any(self.a != 0.0):
            raise MalformedSet("halfspace normal must be nonzero")
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def dim(self):
        return self.a.size

    def params(self):
        return np.concatenate([self.a, [self.b, float(self.a @ self.a)]])

    def to_json(self):
        return {"kind": self.name, "a": self.a.tolist(), "b": self.b, "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class AffineSubspace(SetConstraint):
    """``{anchor + projector @ v}`` for a symmetric idempotent ``projector``."""

    projector: np.ndarray
    anchor: np.ndarray
    rho: float = 1.0
    kind: ClassVar[int] = AFFINE
    name: ClassVar[str] = "affine"

    def __post_init__(self):
        pi = np.array(self.projector, dtype=np.float64)
        c = _vec(self.anchor)
        if pi.ndim != 2 or pi.shape != (c.size, c.size) or c.size < 1:
            raise MalformedSet(f"projector shape {pi.shape} does not match anchor size {c.size}")
        if np.max(np.abs(pi - pi.T)) > 1e-12:
            raise MalformedSet("projector is not symmetric")
        if np.max(np.abs(pi @ pi - pi)) > 1e-10:
            raise MalformedSet("projector is not idempotent")
        pi.setflags(write=False)
        object.__setattr__(self, "projector", pi)
        object.__setattr__(self, "anchor", c)
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @classmethod
    def from_equations(cls, a, b, rho=1.0) -> "AffineSubspace":
        """Build ``{x : a x = b}``; ``a`` may be rank deficient if consistent."""
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        pinv = np.linalg.pinv(a)
        pi = np.eye(a.shape[1]) - pinv @ a
        pi = 0.5 * (pi + pi.T)
        return cls(pi, pinv @ np.asarray(b, dtype=np.float64), rho)

    @property
    def dim(self):
        return self.anchor.size

    def params(self):
        return np.concatenate([self.projector.reshape(-1), self.anchor])

    def to_json(self):
        return {"kind": self.name, "projector": self.projector.tolist(),
                "anchor": self.anchor.tolist(), "rho": self.rho}


@dataclasses.dataclass(frozen=True, eq=False)
class BlockBidiagonalMatrix:
    """Constraint matrix with block rows ``[.. A_i B_i ..]``.

    ``blocks[i] = (A_i, B_i)`` for ``i = 0..N``; ``A_i`` multiplies stage ``i``
    and ``B_i`` multiplies stage ``i + 1``.
    """

    blocks: tuple

    def __post_init__(self):
        blocks = []
        for i, (a, b) in enumerate(self.blocks):
            a = np.array(a, dtype=np.float64, ndmin=2)
            b = np.array(b, dtype=np.float64, ndmin=2)
            if a.ndim != 2 or b.ndim != 2:
                raise DimensionMismatch(f"block row {i}: blocks must be matrices")
            if a.shape[0] != b.shape[0]:
                raise DimensionMismatch(
                    f"block row {i}: A has {a.shape[0]} rows but B has {b.shape[0]}")
            a.setflags(write=False)
            b.setflags(write=False)
            blocks.append((a, b))
        if not blocks:
            raise DimensionMismatch("H needs at least one block row")
        for i in range(len(blocks) - 1):
            if blocks[i][1].shape[1] != blocks[i + 1][0].shape[1]:
                raise DimensionMismatch(
                    f"block row {i}: B has {blocks[i][1].shape[1]} columns but "
                    f"A_{i + 1} has {blocks[i + 1][0].shape[1]}")
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def row_dims(self) -> list[int]:
        return [a.shape[0] for a, _ in self.blocks]

    @property
    def column_dims(self) -> list[int]:
        return [a.shape[1] for a, _ in self.blocks] + [self.blocks[-1][1].shape[1]]

    @property
    def shape(self) -> tuple[int, int]:
        return sum(self.row_dims), sum(self.column_dims)

    def to_dense(self) -> np.ndarray:
        rows, cols = self.row_dims, self.column_dims
        ro = np.concatenate([[0], np.cumsum(rows)])
        co = np.concatenate([[0], np.cumsum(cols)])
        out = np.zeros(self.shape)
        for i, (a, b) in enumerate(self.blocks):
            out[ro[i]:ro[i + 1], co[i]:co[i + 1]] = a
            out[ro[i]:ro[i + 1], co[i + 1]:co[i + 2]] = b
        return out

    def scale_rows(self, s: np.ndarray) -> "BlockBidiagonalMatrix":
        ro = np.concatenate([[0], np.cumsum(self.row_dims)])
        return BlockBidiagonalMatrix(tuple(
            (s[ro[i]:ro[i + 1], None] * a, s[ro[i]:ro[i + 1], None] * b)
            for i, (a, b) in enumerate(self.blocks)))


@dataclasses.dataclass(frozen=True, eq=False)
class ConeSpec:
    """Per block row: ``eq[i]`` zero-cone rows followed by ``ineq[i]`` orthant rows."""

    eq: tuple
    ineq: tuple

    def __post_init__(self):
        eq = tuple(int(e) for e in self.eq)
        ineq = tuple(int(e) for e in self.ineq)
        if len(eq) != len(ineq):
            raise DimensionMismatch("cone eq/ineq lists differ in length")
        if any(e < 0 for e in eq + ineq):
            raise DimensionMismatch("cone counts must be nonnegative")
        object.__setattr__(self, "eq", eq)
        object.__setattr__(self, "ineq", ineq)

    @property
    def row_dims(self) -> list[int]:
        return [e + i for e, i in zip(self.eq, self.ineq)]

    @property
    def dim(self) -> int:
        return sum(self.row_dims)

    @functools.cached_property
    def eq_mask(self) -> np.ndarray:
        """True on equality rows."""
        parts = [np.r_[np.ones(e, bool), np.zeros(i, bool)] for e, i in zip(self.eq, self.ineq)]
        out = np.concatenate(parts) if parts else np.zeros(0, bool)
        out.setflags(write=False)
        return out


@dataclasses.dataclass(frozen=True, eq=False)
class QpProblem:
    stages: tuple
    q: np.ndarray
    H: BlockBidiagonalMatrix
    g: np.ndarray
    cone: ConeSpec

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(s) for s in self.stages))
        object.__setattr__(self, "q", _vec(self.q))
        object.__setattr__(self, "g", _vec(self.g))
        validate(self)

    @property
    def n_z(self) -> int:
        return self.q.size

    @property
    def n_w(self) -> int:
        return self.g.size

    @property
    def stage_dims(self) -> list[int]:
        return [sum(s.dim for s in stage) for stage in self.stages]

    @functools.cached_property
    def sets(self) -> list[tuple[int, SetConstraint]]:
        """Flat list of ``(offset into z, set)``; the sets partition ``z``."""
        out, off = [], 0
        for stage in self.stages:
            for s in stage:
                out.append((off, s))
                off += s.dim
        return out

    @functools.cached_property
    def p_diag(self) -> np.ndarray:
        d = np.concatenate([np.full(s.dim, s.rho) for _, s in self.sets]) if self.sets else np.zeros(0)
        d.setflags(write=False)
        return d

    @property
    def p_norm(self) -> float:
        return float(self.p_diag.max()) if self.n_z else 0.0

    @functools.cached_property
    def packed(self):
        from ._packed import pack

        return pack(self)

    def objective(self, z) -> float:
        z = np.asarray(z)
        return float(0.5 * z @ (self.p_diag * z) + self.q @ z)

    def split_stages(self, z) -> list[np.ndarray]:
        cuts = np.cumsum(self.stage_dims)[:-1]
        return np.split(np.asarray(z), cuts)

    def with_data(self, *, q=None, g=None, H=None) -> "QpProblem":
        return QpProblem(self.stages, self.q if q is None else q, self.H if H is None else H,
                         self.g if g is None else g, self.cone)


def validate(problem: QpProblem) -> None:
    """Raise a :class:`ProblemError` subclass unless ``problem`` is consistent."""
    H, cone = problem.H, problem.cone
    stage_dims = [sum(s.dim for s in stage) for stage in problem.stages]
    for i, stage in enumerate(problem.stages):
        for j, s in enumerate(stage):
            if not isinstance(s, SetConstraint):
                raise MalformedSet(f"stage {i} component {j} is not a set constraint")
            _check_rho(s.rho)
    if len(stage_dims) != H.n_blocks + 1:
        raise DimensionMismatch(
            f"{len(stage_dims)} stages but H has {H.n_blocks} block rows (need stages = rows + 1)")
    for i, (cd, sd) in enumerate(zip(H.column_dims, stage_dims)):
        if cd != sd:
            which = f"A_{i}" if i < H.n_blocks else f"B_{i - 1}"
            raise DimensionMismatch(f"block {i}: {which} has {cd} columns against stage dim {sd}")
    if len(cone.eq) != H.n_blocks:
        raise DimensionMismatch(f"cone has {len(cone.eq)} block rows but H has {H.n_blocks}")
    for i, (rd, cd) in enumerate(zip(H.row_dims, cone.row_dims)):
        if rd != cd:
            raise DimensionMismatch(f"block {i}: H has {rd} rows but cone declares {cd}")
    if problem.q.size != sum(stage_dims):
        raise DimensionMismatch(f"q has length {problem.q.size}, expected {sum(stage_dims)}")
    if problem.g.size != cone.dim:
        raise DimensionMismatch(f"g has length {problem.g.size}, expected {cone.dim}")
    if not (np.all(np.isfinite(problem.q)) and np.all(np.isfinite(problem.g))):
        raise MalformedSet("q and g must be finite")


def apply_h(H: BlockBidiagonalMatrix, z) -> np.ndarray:
    """``H z`` computed block row by block row."""
    z = np.asarray(z, dtype=np.float64)
    n_w, n_z = H.shape
    if z.shape != (n_z,):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({n_z},)")
    out = np.empty(n_w)
    r = c = 0
    for a, b in H.blocks:
        nr, nc = a.shape
        out[r:r + nr] = a @ z[c:c + nc] + b @ z[c + nc:c + nc + b.shape[1]]
        r += nr
        c += nc
    return out


def apply_h_transpose(H: BlockBidiagonalMatrix, w) -> np.ndarray:
    """``H' w``; column block ``i`` collects ``A_i' w_i + B_{i-1}' w_{i-1}``."""
    w = np.asarray(w, dtype=np.float64)
    n_w, n_z = H.shape
    if w.shape != (n_w,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({n_w},)")
    out = np.zeros(n_z)
    r = c = 0
    for a, b in H.blocks:
        nr, nc = a.shape
        wi = w[r:r + nr]
        out[c:c + nc] += a.T @ wi
        out[c + nc:c + nc + b.shape[1]] += b.T @ wi
        r += nr
        c += nc
    return out


def operator_norm_h(H: BlockBidiagonalMatrix, tol: float = 1e-8, max_iter: int = 200,
                    inflate: float = 1.01) -> float:
    """Upper estimate of the spectral norm of ``H``.

    Lanczos iteration on ``H'H`` (power iteration with Ritz extraction over
    all iterates, fully reorthogonalized) until the top Ritz value changes by
    less than ``tol`` relative. The result is inflated by ``inflate`` so that
    step sizes derived from it stay admissible. Returns 0 for a zero matrix.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n_w, n_z = H.shape
    if n_w == 0 or n_z == 0:
        return 0.0
    # deterministic start with no special alignment to coordinate axes
    v = np.cos(np.arange(1, n_z + 1) * 0.7548776662466927) + 1.5
    v /= np.linalg.norm(v)
    kmax = min(max_iter, n_z)
    basis = np.empty((kmax, n_z))
    basis[0] = v
    alphas, betas = [], []
    lam = 0.0
    for k in range(kmax):
        u = apply_h_transpose(H, apply_h(H, basis[k]))
        alphas.append(float(basis[k] @ u))
        q = basis[:k + 1]
        u -= q.T @ (q @ u)
        u -= q.T @ (q @ u)
        beta = float(np.linalg.norm(u))
        lam_new = float(eigvalsh_tridiagonal(np.array(alphas), np.array(betas),
                                             select="i", select_range=(k, k))[0])
        converged = lam_new > 0 and abs(lam_new - lam) <= tol * lam_new
        lam = lam_new
        if converged or beta <= 1e-14 * max(lam, 1e-300) or k + 1 == kmax:
            break
        betas.append(beta)
        basis[k + 1] = u / beta
    return inflate * float(np.sqrt(max(lam, 0.0)))


# ---------------------------------------------------------------- JSON I/O

def _inf_vec(x, fill):
    return np.array([fill if v is None else v for v in x], dtype=np.float64)


def set_from_json(d: dict) -> SetConstraint:
    kind = d.get("kind")
    rho = d.get("rho", 1.0)
    try:
        if kind == "full":
            return FullSpace(int(d["dim"]), rho)
        if kind == "point":
            return Point(d["c"], rho)
        if kind == "box":
            return Box(_inf_vec(d["lo"], -np.inf), _inf_vec(d["hi"], np.inf), rho)
        if kind == "ball":
            return Ball(d["center"], d["radius"], rho)
        if kind == "soc":
            return SecondOrderCone(int(d["dim"]), rho)
        if kind == "halfspace":
            return Halfspace(d["a"], d["b"], rho)
        if kind == "affine":
            if "projector" in d:
                return AffineSubspace(d["projector"], d["anchor"], rho)
            return AffineSubspace.from_equations(d["A"], d["b"], rho)
    except KeyError as exc:
        raise MalformedSet(f"set of kind {kind!r} is missing field {exc}") from None
    raise MalformedSet(f"unknown set kind {kind!r}")


def problem_from_dict(d: dict) -> QpProblem:
    for key in ("stages", "q", "g", "blocks", "cone"):
        if key not in d:
            raise MalformedSet(f"missing top-level key {key!r}")
    stages = []
    for i, stage in enumerate(d["stages"]):
        comps = []
        for j, s in enumerate(stage):
            try:
                comps.append(set_from_json(s))
            except (MalformedSet, NonPositiveWeight) as exc:
                raise type(exc)(f"stages[{i}][{j}]: {exc}") from None
        stages.append(comps)
    col_dims = [sum(s.dim for s in st) for st in stages]
    row_dims = [int(c["eq"]) + int(c["ineq"]) for c in d["cone"]]
    blocks = []
    for i, blk in enumerate(d["blocks"]):
        nr = row_dims[i] if i < len(row_dims) else 0
        a = np.array(blk["A"], dtype=np.float64)
        b = np.array(blk["B"], dtype=np.float64)
        # empty JSON arrays lose their shape
        if a.size == 0 and i < len(col_dims):
            a = np.zeros((nr, col_dims[i]))
        if b.size == 0 and i + 1 < len(col_dims):
            b = np.zeros((nr, col_dims[i + 1]))
        blocks.append((a, b))
    H = BlockBidiagonalMatrix(tuple(blocks))
    cone = ConeSpec(tuple(c["eq"] for c in d["cone"]), tuple(c["ineq"] for c in d["cone"]))
    return QpProblem(stages, d["q"], H, d["g"], cone)


def problem_to_dict(problem: QpProblem) -> dict:
    return {
        "stages": [[s.to_json() for s in stage] for stage in problem.stages],
        "q": problem.q.tolist(),
        "g": problem.g.tolist(),
        "blocks": [{"A": a.tolist(), "B": b.tolist()} for a, b in problem.H.blocks],
        "cone": [{"eq": e, "ineq": i} for e, i in zip(problem.cone.eq, problem.cone.ineq)],
    }


def load_problem(path) -> QpProblem:
    with open(path, encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))


def save_problem(problem: QpProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh)


def make_problem(stages: Sequence[Sequence[SetConstraint]], q, blocks, g, eq, ineq) -> QpProblem:
    """Convenience constructor from raw block lists."""
    return QpProblem(stages, q, BlockBidiagonalMatrix(tuple(blocks)), g, ConeSpec(tuple(eq), tuple(ineq)))
