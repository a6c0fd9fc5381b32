"""Acceptance criteria 1-10, each reported as one PASS/FAIL line."""

import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from npipg import (Box, OscMassConfig, PdgConfig, SolverConfig, choose_step_sizes,
                   gen_oscillating_masses, gen_pdg, kkt_distances, residual, solve)
from npipg import kernels
from npipg.newton import block_cholesky, build_w_tilde, newton_direction, snapshot_at
from npipg.pipg import m_norm
from npipg.projections import NOT_DIFFERENTIABLE, eig, jacobian, project
from npipg.solver import CONVERGED, NEWTON_ACCEPTED, projected_origin
from oracle import (KINDS, breakpoint_gap, dense_newton_matrix, dense_newton_solve,
                    dense_w_tilde, fd_jacobian, random_problem, random_set)
from npipg.newton import snapshot_jacobians

OSC_CAP = 500_000
PDG_CAP = 500_000


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    solve(gen_oscillating_masses(OscMassConfig(n_masses=2, horizon=2)),
          SolverConfig(max_iters=50, trace=False))


def lp_feasible(problem):
    """Independent feasibility certificate for box-only instances."""
    lo = np.full(problem.n_z, -np.inf)
    hi = np.full(problem.n_z, np.inf)
    for start, s in problem.sets:
        assert isinstance(s, Box)
        lo[start:start + s.dim] = s.lo
        hi[start:start + s.dim] = s.hi
    eq = problem.cone.eq_mask
    h = problem.H.to_dense()
    res = linprog(np.zeros(problem.n_z), A_eq=h[eq], b_eq=problem.g[eq],
                  A_ub=h[~eq] if (~eq).any() else None,
                  b_ub=problem.g[~eq] if (~eq).any() else None,
                  bounds=list(zip(lo, hi)), method="highs")
    assert res.status in (0, 2)
    return res.status == 0


def feasible_seeds(count, **cfg):
    out, seed = [], 0
    while len(out) < count:
        if lp_feasible(gen_oscillating_masses(OscMassConfig(seed=seed, **cfg))):
            out.append(seed)
        seed += 1
    return out


# ---------------------------------------------------------------- 1


def test_criterion_1_newton_equivalence(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    errs, families = [], set()
    for _ in range(10):
        p = random_problem(rng)
        families |= {type(s).__name__ for _, s in p.sets}
        s = choose_step_sizes(p)
        got = 0
        while got < 10:
            z, w = rng.normal(scale=0.7, size=p.n_z), rng.normal(size=p.n_w)
            snap = snapshot_jacobians(p, s, z, w)
            if not snap.differentiable:
                continue
            if np.linalg.cond(dense_newton_matrix(p, s.alpha, s.beta, snap)) > 1e8:
                continue
            r, _ = residual(p, s, z, w)
            dz, dw = newton_direction(p, s, snap, r, 0.0, max_retries=0)
            ez, ew = dense_newton_solve(p, s.alpha, s.beta, snap, z, w)
            ref = np.concatenate([ez, ew])
            errs.append(np.linalg.norm(np.concatenate([dz, dw]) - ref) / np.linalg.norm(ref))
            got += 1
    dt = time.perf_counter() - t0
    ok = len(errs) == 100 and max(errs) <= 1e-8 and len(families) >= 6 and dt < 30
    assert acceptance(1, ok, f"max rel err {max(errs):.2e} over {len(errs)} iterates, "
                             f"{len(families)} set families, {dt:.1f} s")


# ---------------------------------------------------------------- 2


def osc_snapshot(n, iters=300):
    p = gen_oscillating_masses(OscMassConfig(horizon=n))
    s = choose_step_sizes(p)
    z, w = projected_origin(p), np.zeros(p.n_w)
    for _ in range(iters):
        z, w, _, _ = kernels.pipg_step(p.packed, s.alpha, s.beta, z, w)
    z1, w1, yz, yw = kernels.pipg_step(p.packed, s.alpha, s.beta, z, w)
    snap = snapshot_at(p, yz, yw)
    assert snap.differentiable
    r = np.linalg.norm(np.concatenate([z1 - z, w1 - w]))
    return p, s, snap, 1e-2 * r


def test_criterion_2_block_cholesky(acceptance):
    t0 = time.perf_counter()
    errs = []
    for n in (5, 20):
        p, s, snap, delta = osc_snapshot(n)
        for d in (0.0, delta):
            fac = block_cholesky(build_w_tilde(snap, p, s, d), d)
            l = fac.to_dense_l()
            ref = dense_w_tilde(p, s.alpha, s.beta, snap, d)
            errs.append(np.linalg.norm(l @ l.T - ref) / np.linalg.norm(ref))
    mats, nblocks = {}, {}
    for n in (10, 80):
        p, s, snap, delta = osc_snapshot(n, iters=50)
        mats[n] = (build_w_tilde(snap, p, s, delta), delta)
        nblocks[n] = len(mats[n][0].diag)
    # interleaved, batched to similar durations, min over samples
    batch = {10: 8, 80: 1}
    times = {10: np.inf, 80: np.inf}
    for _ in range(40):
        for n in (10, 80):
            wt, delta = mats[n]
            t = time.perf_counter()
            for _ in range(batch[n]):
                block_cholesky(wt, delta)
            times[n] = min(times[n], (time.perf_counter() - t) / batch[n])
    factor = (times[80] / times[10]) / (nblocks[80] / nblocks[10])
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-10 and factor < 1.3 and dt < 10
    assert acceptance(2, ok, f"max rel err {max(errs):.2e}, superlinearity {factor:.3f}, "
                             f"{dt:.1f} s")


# ---------------------------------------------------------------- 3


def test_criterion_3_projection_suite(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {"idem": 0.0, "nonexp": 0.0, "fd": 0.0, "sym": 0.0, "eig_lo": 0.0, "eig_hi": 0.0}
    counts = {}
    for kind in KINDS:
        n_ok = 0
        while n_ok < 1000:
            st = random_set(rng, kind)
            for _ in range(50):
                y = rng.normal(scale=2.0, size=st.dim)
                y2 = rng.normal(scale=2.0, size=st.dim)
                py = project(st, y)
                worst["idem"] = max(worst["idem"], np.max(np.abs(project(st, py) - py))
                                    / max(1.0, np.linalg.norm(py)))
                gap = np.linalg.norm(project(st, y2) - py) - np.linalg.norm(y2 - y)
                worst["nonexp"] = max(worst["nonexp"], gap / max(1e-300, np.linalg.norm(y2 - y)))
                if breakpoint_gap(st, y) < 1e-4:
                    continue
                jac = jacobian(st, y)
                assert jac is not NOT_DIFFERENTIABLE
                j = jac.to_dense()
                fd = fd_jacobian(lambda v: project(st, v), y)
                worst["fd"] = max(worst["fd"], np.max(np.abs(j - fd)))
                worst["sym"] = max(worst["sym"], np.max(np.abs(j - j.T)))
                lam = np.concatenate([eig(jac).lam, np.linalg.eigvalsh(j)])
                worst["eig_lo"] = min(worst["eig_lo"], lam.min())
                worst["eig_hi"] = max(worst["eig_hi"], lam.max() - 1.0)
                n_ok += 1
                if n_ok == 1000:
                    break
        counts[kind] = n_ok
    dt = time.perf_counter() - t0
    ok = (worst["idem"] <= 1e-12 and worst["nonexp"] <= 1e-12 and worst["fd"] <= 1e-5
          and worst["sym"] <= 1e-12 and worst["eig_lo"] >= -1e-12 and worst["eig_hi"] <= 1e-12
          and all(c == 1000 for c in counts.values()) and dt < 20)
    assert acceptance(3, ok, f"{len(counts)} families x 1000 points; idem {worst['idem']:.1e}, "
                             f"nonexp {worst['nonexp']:.1e}, fd {worst['fd']:.1e}, "
                             f"sym {worst['sym']:.1e}, eig range "
                             f"[{worst['eig_lo']:.1e}, 1+{worst['eig_hi']:.1e}], {dt:.1f} s")


# ---------------------------------------------------------------- 4 and 5

_PURE_RUNS = {}


def pure_runs():
    if not _PURE_RUNS:
        t0 = time.perf_counter()
        seeds = feasible_seeds(10, n_masses=8, horizon=20, u_bound=1.0)
        for seed in seeds:
            p = gen_oscillating_masses(OscMassConfig(n_masses=8, horizon=20, u_bound=1.0, seed=seed))
            xs = []
            rep = solve(p, SolverConfig(pure_pipg=True, trace=False, max_iters=OSC_CAP),
                        callback=lambda k, kind, z, w: xs.append((z.copy(), w.copy())))
            sp, st = rep.solved_problem, rep.steps
            prev = (projected_origin(sp), np.zeros(sp.n_w))
            norms = []
            for x in xs:
                norms.append(m_norm(sp, st, x[0] - prev[0], x[1] - prev[1]))
                prev = x
            _PURE_RUNS[seed] = (rep, np.array(norms))
        _PURE_RUNS["time"] = time.perf_counter() - t0
    return _PURE_RUNS


def test_criterion_4_pipg_monotone_convergence(acceptance):
    runs = pure_runs()
    seeds = [k for k in runs if k != "time"]
    worst_inc, converged, max_it = 0.0, 0, 0
    for seed in seeds:
        rep, norms = runs[seed]
        worst_inc = max(worst_inc, float(np.max(np.diff(norms))))
        converged += rep.status == CONVERGED and rep.iterations <= OSC_CAP
        max_it = max(max_it, rep.iterations)
    dt = runs["time"]
    ok = len(seeds) == 10 and worst_inc <= 1e-12 and converged == 10 and dt < 60
    assert acceptance(4, ok, f"seeds {seeds}: {converged}/10 converged, max iterations {max_it}, "
                             f"largest M-norm increase {worst_inc:.1e}, {dt:.1f} s")


def test_criterion_5_termination_soundness(acceptance):
    runs = pure_runs()
    worst = 0.0
    checked = 0
    for seed, val in runs.items():
        if seed == "time" or val[0].status != CONVERGED:
            continue
        rep = val[0]
        d = kkt_distances(rep.solved_problem, rep.z_solved, rep.w_solved)
        eps = rep.eps_achieved
        worst = max(worst, d.primal / (rep.steps.gamma_p * eps), d.dual / (rep.steps.gamma_d * eps))
        checked += 1
    ok = checked == 10 and worst <= 1.0
    assert acceptance(5, ok, f"{checked} runs, max d/(gamma*eps) {worst:.3f}")


# ---------------------------------------------------------------- 6


def test_criterion_6_hybrid_agreement_and_savings(acceptance):
    t0 = time.perf_counter()
    trials, fewer, worst, skipped = 0, 0, 0.0, []
    for umax in (1.0, 0.4):
        for seed in range(20):
            p = gen_oscillating_masses(OscMassConfig(horizon=20, u_bound=umax, seed=seed))
            if not lp_feasible(p):
                skipped.append((umax, seed))
                continue
            ref = solve(p, SolverConfig(pure_pipg=True, trace=False, max_iters=OSC_CAP))
            hyb = solve(p, SolverConfig(trace=False, max_iters=OSC_CAP))
            assert ref.converged and hyb.converged
            trials += 1
            worst = max(worst, float(np.linalg.norm(hyb.z - ref.z)))
            fewer += hyb.iterations < ref.iterations
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and fewer >= 0.9 * trials and dt < 120
    assert acceptance(6, ok, f"{trials} feasible trials (infeasible skipped: {skipped}), "
                             f"max |z_N - z_P| {worst:.1e}, fewer iterations on {fewer}/{trials}, "
                             f"{dt:.1f} s")


# ---------------------------------------------------------------- 7


def tracked_run(problem, cfg):
    """Solve and return (report, [(kind, residual before, residual after)])."""
    xs = []
    rep = solve(problem, cfg, callback=lambda k, kind, z, w: xs.append((kind, z.copy(), w.copy())))
    sp, st = rep.solved_problem, rep.steps
    prev = residual(sp, st, projected_origin(sp), np.zeros(sp.n_w))[1]
    events = []
    for kind, z, w in xs:
        cur = residual(sp, st, z, w)[1]
        events.append((kind, prev, cur))
        prev = cur
    return rep, events


def test_criterion_7_one_step_identification(acceptance):
    t0 = time.perf_counter()
    seeds = feasible_seeds(10, horizon=20, u_bound=0.4)
    n_events, worst = 0, 0.0
    per_seed = []
    for seed in seeds:
        p = gen_oscillating_masses(OscMassConfig(horizon=20, u_bound=0.4, seed=seed))
        rep, events = tracked_run(p, SolverConfig(eps_abs=1e-12, max_iters=OSC_CAP))
        hits = [after for kind, before, after in events if kind == NEWTON_ACCEPTED and before < 1e-6]
        per_seed.append(len(hits))
        n_events += len(hits)
        if hits:
            worst = max(worst, max(hits))
    dt = time.perf_counter() - t0
    ok = all(c > 0 for c in per_seed) and worst <= 1e-10 and dt < 30
    assert acceptance(7, ok, f"seeds {seeds}: {n_events} accepted Newton steps below 1e-6, "
                             f"worst post-step residual {worst:.1e}, {dt:.1f} s")


# ---------------------------------------------------------------- 8


def test_criterion_8_quadratic_tail(acceptance):
    t0 = time.perf_counter()
    rep, events = tracked_run(gen_pdg(PdgConfig()), SolverConfig(trace=False))
    newton = [(before, after) for kind, before, after in events if kind == NEWTON_ACCEPTED]
    tail = [after for _, after in newton if after < 1e-3]
    ratios = [b / a ** 2 for a, b in zip(tail, tail[1:])]
    c_fit = max(ratios) if ratios else np.inf
    last_red = newton[-1][0] / max(newton[-1][1], 1e-300) if newton else 0.0
    dt = time.perf_counter() - t0
    ok = rep.converged and len(tail) >= 2 and c_fit <= 1e6 and last_red >= 1e4 and dt < 60
    assert acceptance(8, ok, f"tail {['%.1e' % r for r in tail]}, fitted C {c_fit:.2e}, "
                             f"last Newton reduction {last_red:.1e}, {dt:.1f} s")


# ---------------------------------------------------------------- 9


def test_criterion_9_near_infeasibility_trend(acceptance):
    t0 = time.perf_counter()
    base = PdgConfig()
    points, capped_at = [], None
    for y in np.arange(2400.0, 2901.0, 50.0):
        cfg = PdgConfig(r_init=(base.r_init[0], float(y), base.r_init[2]))
        rep = solve(gen_pdg(cfg), SolverConfig(trace=False, max_iters=PDG_CAP))
        if not rep.converged:
            capped_at = float(y)
            break
        points.append((float(y), rep.iterations))
    last = [it for _, it in points[-5:]]
    dt = time.perf_counter() - t0
    ok = (capped_at is not None and len(points) >= 5
          and all(b >= a for a, b in zip(last, last[1:])) and dt < 120)
    assert acceptance(9, ok, f"iterations {points}, presumed infeasible from y={capped_at}, "
                             f"{dt:.1f} s")


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        subprocess.run([sys.executable, "-m", "npipg.cli", "bench", "oscmass", "--n", "20",
                        "--umax", "1", "--trials", "5", "--seed", "42", "--out", str(path)],
                       check=True)
        outs.append(path.read_bytes())
    dt = time.perf_counter() - t0
    ok = outs[0] == outs[1] and len(outs[0]) > 0 and dt < 30
    assert acceptance(10, ok, f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}, {dt:.1f} s")
