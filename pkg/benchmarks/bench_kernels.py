"""Compare the numba and numpy kernel backends on the benchmark families.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5] [--iters 2000]

Prints one CSV row per (instance, kernel, backend) with the best time per
call in microseconds and the largest deviation from the numpy result.
"""

import argparse
import csv
import sys
import time

import numpy as np

from npipg import OscMassConfig, PdgConfig, choose_step_sizes, gen_oscillating_masses, gen_pdg
from npipg.kernels import _numpy

try:
    from npipg.kernels import _numba
except ImportError:  # pragma: no cover
    _numba = None


def instances():
    yield "oscmass-N20", gen_oscillating_masses(OscMassConfig(horizon=20))
    yield "oscmass-N100", gen_oscillating_masses(OscMassConfig(horizon=100))
    yield "pdg-N30", gen_pdg(PdgConfig())


def best_of(fn, repeats, calls):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        for _ in range(calls):
            out = fn()
        best = min(best, (time.perf_counter() - t) / calls)
    return best * 1e6, out


def kernels(be, pp, s, z, w, iters):
    return {
        "h_matvec": lambda: be.h_matvec(pp, z),
        "ht_matvec": lambda: be.ht_matvec(pp, w),
        "project_sets": lambda: be.project_sets(pp, z),
        "pipg_step": lambda: be.pipg_step(pp, s.alpha, s.beta, z, w)[:2],
        f"pipg_run[{iters}]": lambda: be.pipg_run(pp, s.alpha, s.beta, z, w, iters, 0.0, 0.0,
                                                 s.gamma_p, s.gamma_d, False)[:2],
    }


def flat(x):
    return np.concatenate([np.ravel(v) for v in x]) if isinstance(x, tuple) else np.ravel(x)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--iters", type=int, default=2000, help="iterations inside pipg_run")
    args = ap.parse_args(argv)
    backends = [("numpy", _numpy)] + ([("numba", _numba)] if _numba else [])
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["instance", "kernel", "backend", "us_per_call", "speedup", "max_abs_diff"])
    rng = np.random.default_rng(0)
    for name, prob in instances():
        s = choose_step_sizes(prob)
        pp = prob.packed
        z, w = rng.normal(size=prob.n_z), rng.normal(size=prob.n_w)
        ref = {}
        for bname, be in backends:
            for kname, fn in kernels(be, pp, s, z, w, args.iters).items():
                fn()  # compile / warm up
                calls = 1 if kname.startswith("pipg_run") else 200
                us, res = best_of(fn, args.repeats, calls)
                res = flat(res)
                if bname == "numpy":
                    ref[kname] = (us, res)
                base_us, base = ref[kname]
                out.writerow([name, kname, bname, f"{us:.2f}", f"{base_us / us:.1f}",
                              f"{np.max(np.abs(res - base)):.1e}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
