"""Command-line entry point: ``npipg solve``, ``npipg bench`` and ``npipg gen``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from .errors import ProblemError
from .kkt import kkt_distances
from .model import load_problem, problem_to_dict
from .problems import OscMassConfig, PdgConfig, gen_oscillating_masses, gen_pdg
from .solver import CONVERGED, SolverConfig, solve

EXIT_OK, EXIT_INPUT, EXIT_NOCONV = 0, 2, 3
TRACE_HEADER = ["iter", "step", "residual", "elapsed_ms"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRACE_HEADER)
        for row in trace:
            wr.writerow([row.iter, row.step, _fmt(row.residual), f"{row.elapsed_ms:.3f}"])


def _solver_config(args, **over) -> SolverConfig:
    kw = dict(eps_abs=args.eps_abs, eps_rel=args.eps_rel, max_iters=args.max_iters)
    kw.update(over)
    return SolverConfig(**kw)


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    try:
        problem = load_problem(args.file)
    except json.JSONDecodeError as exc:
        print(f"error: {args.file}: line {exc.lineno} column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_INPUT
    except (ProblemError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = _solver_config(args, pure_pipg=args.pure_pipg, trace=bool(args.trace))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep = solve(problem, cfg)
    print(f"status: {rep.status}")
    print(f"iterations: {rep.iterations} (pipg {rep.pipg_count}, newton accepted "
          f"{rep.newton_accept_count}, rejected {rep.newton_reject_count})")
    print(f"residual: {rep.residual:.3e}")
    print(f"objective: {problem.objective(rep.z):.12g}")
    if args.trace:
        write_trace(args.trace, rep.trace)
    if args.solution:
        k = kkt_distances(problem, rep.z, rep.w)
        with open(args.solution, "w", encoding="utf-8") as fh:
            json.dump({"z": rep.z.tolist(), "w": rep.w.tolist(),
                       "kkt": {"primal": k.primal, "dual": k.dual}}, fh)
    return EXIT_OK if rep.status == CONVERGED else EXIT_NOCONV


# ---------------------------------------------------------------- bench

OSC_COLUMNS = ["trial", "seed", "status", "pipg_iters", "newton_iters", "newton_pipg_steps",
               "newton_accepted", "newton_rejected", "agreement"]


def _emit(rows, header, out):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_oscmass_trial(n, umax, seed, eps_abs, max_iters, m=8):
    """Pure PIPG reference then Newton-PIPG on one generated instance."""
    prob = gen_oscillating_masses(OscMassConfig(n_masses=m, horizon=n, u_bound=umax, seed=seed))
    ref = solve(prob, SolverConfig(eps_abs=eps_abs, max_iters=max_iters, pure_pipg=True, trace=False))
    if ref.status != CONVERGED:
        return {"status": "presumed-infeasible", "ref": ref, "hyb": None}
    t0 = time.perf_counter()
    hyb = solve(prob, SolverConfig(eps_abs=eps_abs, max_iters=max_iters, trace=False))
    ms = 1e3 * (time.perf_counter() - t0)
    return {"status": hyb.status, "ref": ref, "hyb": hyb, "ms": ms,
            "agreement": float(np.linalg.norm(hyb.z - ref.z))}


def cmd_bench_oscmass(args) -> int:
    rows, failed = [], False
    good = []
    for k in range(args.trials):
        seed = args.seed + k
        res = run_oscmass_trial(args.n, args.umax, seed, args.eps_abs, args.max_iters, args.masses)
        ref, hyb = res["ref"], res["hyb"]
        if hyb is None:
            row = [k, seed, res["status"], ref.iterations, "", "", "", "", ""]
        else:
            failed |= hyb.status != CONVERGED
            row = [k, seed, hyb.status, ref.iterations, hyb.iterations, hyb.pipg_count,
                   hyb.newton_accept_count, hyb.newton_reject_count, f"{res['agreement']:.3e}"]
            if hyb.status == CONVERGED:
                good.append((ref, hyb, res))
        if args.timing:
            row.append(f"{ref.solve_ms:.3f}")
            row.append("" if hyb is None else f"{hyb.solve_ms:.3f}")
        rows.append(row)
    header = list(OSC_COLUMNS) + (["pipg_ms", "newton_ms"] if args.timing else [])
    n_inf = sum(r[2] == "presumed-infeasible" for r in rows)
    if good:
        pi = np.array([g[0].iterations for g in good], float)
        ni = np.array([g[1].iterations for g in good], float)
        ns = np.array([g[1].newton_accept_count for g in good], float)
        ag = max(g[2]["agreement"] for g in good)
        agg = [["mean", "", f"n={len(good)}", f"{pi.mean():.1f}", f"{ni.mean():.1f}", "",
                f"{ns.mean():.2f}", "", f"{ag:.3e}"],
               ["median", "", f"infeasible={n_inf}", f"{np.median(pi):.1f}", f"{np.median(ni):.1f}",
                "", f"{np.median(ns):.1f}", "", ""]]
        if args.timing:
            pm = np.array([g[0].solve_ms for g in good])
            nm = np.array([g[1].solve_ms for g in good])
            agg[0] += [f"{pm.mean():.3f}", f"{nm.mean():.3f}"]
            agg[1] += [f"{np.median(pm):.3f}", f"{np.median(nm):.3f}"]
        rows += agg
    _emit(rows, header, args.out)
    return EXIT_NOCONV if failed else EXIT_OK


def _parse_vec(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected X,Y,Z")
    return tuple(vals)


def _parse_sweep(text):
    parts = [float(v) for v in text.split(":")]
    if len(parts) != 3 or parts[1] <= 0 or parts[2] < parts[0]:
        raise argparse.ArgumentTypeError("expected A:STEP:B with STEP > 0 and B >= A")
    a, step, b = parts
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(n)]


PDG_COLUMNS = ["r_x", "r_y", "r_z", "status", "iterations", "pipg_steps", "newton_accepted",
               "newton_rejected", "residual"]


def cmd_bench_pdg(args) -> int:
    base = PdgConfig()
    r0 = args.rinit if args.rinit else base.r_init
    points = [r0] if not args.rinit_y_sweep else [(r0[0], y, r0[2]) for y in args.rinit_y_sweep]
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
    rows, failed = [], False
    for r in points:
        cfg = PdgConfig(horizon=args.horizon, r_init=tuple(r))
        rep = solve(gen_pdg(cfg), SolverConfig(eps_abs=args.eps_abs, max_iters=args.max_iters,
                                               trace=bool(args.trace_dir)))
        status = rep.status if rep.status == CONVERGED else "presumed-infeasible"
        failed |= rep.status != CONVERGED
        row = [_fmt(r[0]), _fmt(r[1]), _fmt(r[2]), status, rep.iterations, rep.pipg_count,
               rep.newton_accept_count, rep.newton_reject_count, f"{rep.residual:.3e}"]
        if args.timing:
            row.append(f"{rep.solve_ms:.3f}")
        rows.append(row)
        if args.trace_dir:
            write_trace(os.path.join(args.trace_dir, f"trace_y{r[1]:g}.csv"), rep.trace)
    _emit(rows, PDG_COLUMNS + (["wall_ms"] if args.timing else []), args.out)
    # sweeps are expected to cross into the infeasible region
    return EXIT_NOCONV if failed and not args.rinit_y_sweep else EXIT_OK


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    if args.family == "oscmass":
        prob = gen_oscillating_masses(OscMassConfig(n_masses=args.masses, horizon=args.n,
                                                    u_bound=args.umax, seed=args.seed))
    else:
        r0 = args.rinit if args.rinit else PdgConfig().r_init
        prob = gen_pdg(PdgConfig(horizon=args.horizon, r_init=r0))
    text = json.dumps(problem_to_dict(prob))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="npipg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def tol_args(p, eps_abs=1e-8, max_iters=1_000_000):
        p.add_argument("--eps-abs", type=float, default=eps_abs)
        p.add_argument("--eps-rel", type=float, default=0.0)
        p.add_argument("--max-iters", type=int, default=max_iters)

    ps = sub.add_parser("solve", help="solve a problem stored as JSON")
    ps.add_argument("file")
    tol_args(ps)
    ps.add_argument("--pure-pipg", action="store_true", help="disable Newton steps")
    ps.add_argument("--trace", metavar="PATH", help="write per-iteration CSV trace")
    ps.add_argument("--solution", metavar="PATH", help="write z, w and KKT distances as JSON")
    ps.add_argument("--seedless", action="store_true",
                    help="accepted for compatibility; solves are always deterministic")
    ps.set_defaults(func=cmd_solve)

    pb = sub.add_parser("bench", help="run a benchmark family")
    bsub = pb.add_subparsers(dest="family", required=True)
    po = bsub.add_parser("oscmass", help="oscillating masses, pure PIPG vs Newton-PIPG")
    po.add_argument("--n", type=int, default=20, help="horizon N")
    po.add_argument("--umax", type=float, default=1.0)
    po.add_argument("--trials", type=int, default=10)
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--masses", type=int, default=8)
    po.add_argument("--out")
    po.add_argument("--timing", action="store_true", help="add wall-clock columns")
    tol_args(po, max_iters=500_000)
    po.set_defaults(func=cmd_bench_oscmass)

    pg = bsub.add_parser("pdg", help="powered-descent instance or initial-position sweep")
    pg.add_argument("--horizon", type=int, default=30)
    grp = pg.add_mutually_exclusive_group()
    grp.add_argument("--rinit", type=_parse_vec)
    grp.add_argument("--rinit-y-sweep", type=_parse_sweep)
    pg.add_argument("--out")
    pg.add_argument("--trace-dir", help="write one trace CSV per sweep point")
    pg.add_argument("--timing", action="store_true", help="add a wall-clock column")
    tol_args(pg, max_iters=200_000)
    pg.set_defaults(func=cmd_bench_pdg)

    pn = sub.add_parser("gen", help="write a generated problem as JSON")
    nsub = pn.add_subparsers(dest="family", required=True)
    go = nsub.add_parser("oscmass")
    go.add_argument("--n", type=int, default=20)
    go.add_argument("--umax", type=float, default=1.0)
    go.add_argument("--seed", type=int, default=0)
    go.add_argument("--masses", type=int, default=8)
    go.add_argument("--out")
    gp = nsub.add_parser("pdg")
    gp.add_argument("--horizon", type=int, default=30)
    gp.add_argument("--rinit", type=_parse_vec)
    gp.add_argument("--out")
    for p in (go, gp):
        p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "bench" and args.family == "oscmass":
        if args.trials < 1 or args.n < 1 or args.umax <= 0:
            print("error: --trials and --n must be positive and --umax > 0", file=sys.stderr)
            return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
