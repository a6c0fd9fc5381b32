"""Deterministic benchmark generators: oscillating masses and a powered-descent QP."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.linalg import expm

from .model import Ball, Box, QpProblem, SecondOrderCone, make_problem

# ---------------------------------------------------------------- oscillating masses


@dataclasses.dataclass(frozen=True)
class OscMassConfig:
    n_masses: int = 8
    horizon: int = 20
    u_bound: float = 1.0
    x_bound: float = 1.0
    seed: int = 0
    init_std: float = 0.3

    def __post_init__(self):
        if self.n_masses < 2:
            raise ValueError("n_masses must be at least 2")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.u_bound <= 0 or self.x_bound <= 0 or self.init_std < 0:
            raise ValueError("bounds must be positive and init_std nonnegative")

    @property
    def dt(self) -> float:
        return 3.0 / self.horizon


def spring_laplacian(m: int) -> np.ndarray:
    return 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)


def zoh_discretize(a_c: np.ndarray, b_c: np.ndarray, dt: float):
    """Exact zero-order-hold discretization via one augmented exponential."""
    n, m = b_c.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a_c
    aug[:n, n:] = b_c
    e = expm(dt * aug)
    return e[:n, :n], e[:n, n:]


def mass_spring_dynamics(m: int, dt: float):
    lap = spring_laplacian(m)
    a_c = np.block([[np.zeros((m, m)), np.eye(m)], [-lap, np.zeros((m, m))]])
    b_c = np.vstack([np.zeros((m, m)), np.eye(m)])
    return zoh_discretize(a_c, b_c, dt)


def initial_state(config: OscMassConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    x0 = rng.normal(0.0, config.init_std, 2 * config.n_masses)
    return np.clip(x0, -config.x_bound, config.x_bound)


def gen_oscillating_masses(config: OscMassConfig, x0: np.ndarray | None = None) -> QpProblem:
    """Chain of masses and springs steered to rest under state and input boxes.

    Stages ``0..N`` hold ``(x_i, u_i)``, stage ``N+1`` holds ``x_{N+1}``; all
    constraint rows are equalities (initial condition and dynamics).
    """
    m, n = config.n_masses, config.horizon
    nx, nu = 2 * m, m
    a, b = mass_spring_dynamics(m, config.dt)
    if x0 is None:
        x0 = initial_state(config)
    xb, ub = config.x_bound, config.u_bound

    def xbox():
        return Box(np.full(nx, -xb), np.full(nx, xb), 1.0)

    def ubox():
        return Box(np.full(nu, -ub), np.full(nu, ub), 1.0)

    stages = [[xbox(), ubox()] for _ in range(n + 1)] + [[xbox()]]
    dyn = np.hstack([-a, -b])
    nxt = np.hstack([np.eye(nx), np.zeros((nx, nu))])
    blocks, g, eq = [], [], []
    for i in range(n + 1):
        b_i = nxt if i < n else np.eye(nx)
        if i == 0:
            a_0 = np.vstack([np.hstack([np.eye(nx), np.zeros((nx, nu))]), dyn])
            blocks.append((a_0, np.vstack([np.zeros((nx, b_i.shape[1])), b_i])))
            g.append(np.concatenate([x0, np.zeros(nx)]))
            eq.append(2 * nx)
        else:
            blocks.append((dyn, b_i))
            g.append(np.zeros(nx))
            eq.append(nx)
    q = np.zeros(sum(s.dim for st in stages for s in st))
    return make_problem(stages, q, blocks, np.concatenate(g), eq, [0] * len(eq))


# ---------------------------------------------------------------- powered descent


@dataclasses.dataclass(frozen=True)
class PdgConfig:
    """Powered-descent landing QP; physical inputs in SI units.

    Positions are nondimensionalized by ``length_unit``, time by
    ``sqrt(length_unit / gravity)`` and accelerations by ``gravity``. The
    third axis points up.
    """

    horizon: int = 30
    r_init: tuple = (0.0, 1000.0, 2000.0)
    v_init: tuple = (0.0, 0.0, -20.0)
    t_final: float = 53.0
    gravity: float = 3.7114
    m_wet: float = 1905.0
    m_dry: float = 1505.0
    isp: float = 225.0
    thrust_min: float = 4972.0
    thrust_max: float = 13258.0
    pointing_deg: float = 60.0
    glideslope_deg: float = 30.0
    v_max: float = 120.0
    length_unit: float = 1000.0
    rho_position: float = 1.0
    rho_velocity: float = 1.0
    rho_mass: float = 1.0
    rho_thrust: float = 1.0
    fuel_weight: float = 1.0

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        for name in ("t_final", "m_wet", "m_dry", "isp", "thrust_max", "v_max", "length_unit",
                     "rho_position", "rho_velocity", "rho_mass", "rho_thrust"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gravity < 0 or self.thrust_min < 0 or self.fuel_weight < 0:
            raise ValueError("gravity, thrust_min and fuel_weight must be nonnegative")
        if self.m_dry > self.m_wet or self.thrust_min > self.thrust_max:
            raise ValueError("need m_dry <= m_wet and thrust_min <= thrust_max")
        for name in ("pointing_deg", "glideslope_deg"):
            if not 0.0 < getattr(self, name) < 90.0:
                raise ValueError(f"{name} must lie in (0, 90)")
        if len(self.r_init) != 3 or len(self.v_init) != 3:
            raise ValueError("r_init and v_init must be 3-vectors")


STATE_DIM, CONTROL_DIM = 7, 4


@dataclasses.dataclass(frozen=True)
class PdgScaling:
    length: float
    time: float
    accel: float
    glide: float  # third position coordinate is stored as r3 * glide

    @property
    def velocity(self) -> float:
        return self.length / self.time


def pdg_scaling(config: PdgConfig) -> PdgScaling:
    g = config.gravity if config.gravity > 0 else 1.0
    tu = math.sqrt(config.length_unit / g)
    return PdgScaling(config.length_unit, tu, g, 1.0 / math.tan(math.radians(config.glideslope_deg)))


def gen_pdg(config: PdgConfig) -> QpProblem:
    """Fixed-final-time landing QP with lossless-convexified thrust bounds.

    Per-stage state ``(p, v, zlog)`` with ``p = (r1, r2, r3 / tan(glideslope))``
    and ``zlog = ln(m / m_wet)``; control ``(u, sigma)`` with ``u`` the thrust
    acceleration. Sets: glideslope cone on ``p``, speed ball on ``v``, mass box
    on ``zlog``, ``||u|| <= sigma`` cone on the control.
    """
    sc = pdg_scaling(config)
    n_pts = config.horizon
    n = n_pts - 2
    dt = config.t_final / sc.time / (n_pts - 1)
    g_nd = config.gravity / sc.accel
    k = sc.glide
    dmat = np.diag([1.0, 1.0, k])
    g_e = 9.80665
    alpha_m = 1.0 / (config.isp * g_e)
    c_m = alpha_m * sc.accel * sc.time

    a_d = np.eye(STATE_DIM)
    a_d[0:3, 3:6] = dt * dmat
    b_d = np.zeros((STATE_DIM, CONTROL_DIM))
    b_d[0:3, 0:3] = 0.5 * dt * dt * dmat
    b_d[3:6, 0:3] = dt * np.eye(3)
    b_d[6, 3] = -c_m * dt
    grav = np.array([0.0, 0.0, -g_nd])
    c_d = np.concatenate([0.5 * dt * dt * dmat @ grav, dt * grav, [0.0]])

    r0 = np.asarray(config.r_init, float) / sc.length
    v0 = np.asarray(config.v_init, float) / sc.velocity
    p0 = dmat @ r0
    zmin = math.log(config.m_dry / config.m_wet)
    vmax = config.v_max / sc.velocity
    t_max = config.thrust_max / (sc.accel * config.m_wet)
    t_min = config.thrust_min / (sc.accel * config.m_wet)
    cos_pt = math.cos(math.radians(config.pointing_deg))

    def state_sets():
        return [SecondOrderCone(3, config.rho_position), Ball(np.zeros(3), vmax, config.rho_velocity),
                Box([zmin], [0.0], config.rho_mass)]

    stages = [state_sets() + [SecondOrderCone(4, config.rho_thrust)] for _ in range(n + 1)]
    stages.append(state_sets())
    nzs = STATE_DIM + CONTROL_DIM

    # reference log-mass profile for linearizing the thrust bounds
    t_phys = np.arange(n + 1) * config.t_final / (n_pts - 1)
    z_ref = np.log(np.maximum(1.0 - alpha_m * config.thrust_max * t_phys / config.m_wet,
                              config.m_dry / config.m_wet))

    dyn = np.hstack([-a_d, -b_d])
    nxt = np.hstack([np.eye(STATE_DIM), np.zeros((STATE_DIM, CONTROL_DIM))])
    blocks, g, eq, ineq = [], [], [], []
    for i in range(n + 1):
        a_rows, b_rows, g_rows = [], [], []
        last = i == n
        b_cols = STATE_DIM if last else nzs
        b_next = np.eye(STATE_DIM) if last else nxt
        if i == 0:
            init = np.zeros((STATE_DIM, nzs))
            init[:, :STATE_DIM] = np.eye(STATE_DIM)
            a_rows.append(init)
            b_rows.append(np.zeros((STATE_DIM, b_cols)))
            g_rows.append(np.concatenate([p0, v0, [0.0]]))
        a_rows.append(dyn)
        b_rows.append(b_next)
        g_rows.append(c_d)
        if last:
            term = np.zeros((6, b_cols))
            term[:, :6] = np.eye(6)
            a_rows.append(np.zeros((6, nzs)))
            b_rows.append(term)
            g_rows.append(np.zeros(6))
        n_eq = sum(r.shape[0] for r in a_rows)
        # inequality rows (H z - g >= 0) on the stage-i control
        e = math.exp(-z_ref[i])
        a2, a1 = t_max * e, t_min * e
        ir = np.zeros((3, nzs))
        ig = np.zeros(3)
        # sigma <= a2 (1 - (zlog - z_ref))
        ir[0, 6], ir[0, 10] = -a2, -1.0
        ig[0] = -a2 * (1.0 + z_ref[i])
        # sigma >= a1 (1 - (zlog - z_ref))
        ir[1, 6], ir[1, 10] = a1, 1.0
        ig[1] = a1 * (1.0 + z_ref[i])
        # thrust pointing: u3 >= cos(theta) sigma
        ir[2, 9], ir[2, 10] = 1.0, -cos_pt
        a_rows.append(ir)
        b_rows.append(np.zeros((3, b_cols)))
        g_rows.append(ig)
        blocks.append((np.vstack(a_rows), np.vstack(b_rows)))
        g.append(np.concatenate(g_rows))
        eq.append(n_eq)
        ineq.append(3)

    n_z = (n + 1) * nzs + STATE_DIM
    q = np.zeros(n_z)
    for i in range(n + 1):
        q[i * nzs + 10] = config.fuel_weight * dt
    return make_problem(stages, q, blocks, np.concatenate(g), eq, ineq)


def pdg_unpack(config: PdgConfig, z: np.ndarray):
    """Split a solution into physical positions, velocities, masses and thrust accelerations."""
    sc = pdg_scaling(config)
    n_pts = config.horizon
    nzs = STATE_DIM + CONTROL_DIM
    xs = np.array([z[i * nzs:i * nzs + STATE_DIM] for i in range(n_pts)])
    us = np.array([z[i * nzs + STATE_DIM:(i + 1) * nzs] for i in range(n_pts - 1)])
    r = xs[:, 0:3] * sc.length
    r[:, 2] /= sc.glide
    v = xs[:, 3:6] * sc.velocity
    mass = config.m_wet * np.exp(xs[:, 6])
    return r, v, mass, us[:, 0:3] * sc.accel
