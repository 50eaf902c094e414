"""Throughput of the trajectory kernels: numba vs pure numpy.

    python benchmarks/bench_kernels.py [--n-traj N] [--t-max T] [--repeat R]

Reports trajectory-steps per second for each backend (numba timings exclude
the first, compiling call) and the largest difference in the ensemble mean.
"""
import argparse
import time
import warnings

import numpy as np

from qzeno import REFERENCE_NOISE, ModelParams, _accel
from qzeno.trajectory import TrajectoryConfig, run_ensemble

# numba falls back from an old system TBB to its own thread pool
warnings.filterwarnings("ignore", message="The TBB threading layer")


def timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=1000)
    ap.add_argument("--t-max", type=float, default=5.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    p = ModelParams(1.0, 8.5, REFERENCE_NOISE)
    cfg = TrajectoryConfig(dt=args.dt, t_max=args.t_max, n_traj=args.n_traj)
    work = cfg.n_traj * cfg.n_steps
    results = {}
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    for name in backends:
        if name == "numba":
            t0 = time.perf_counter()
            run_ensemble(p, TrajectoryConfig(dt=args.dt, t_max=10 * args.dt, n_traj=2), backend="numba")
            print(f"numba first call (compile or cache load): {time.perf_counter() - t0:.2f} s")
        secs, res = timed(lambda name=name: run_ensemble(p, cfg, backend=name), args.repeat)
        results[name] = res
        print(f"{name:6s} {secs:8.3f} s  {work / secs / 1e6:8.2f} M traj-steps/s  threads={_accel.get_threads()}")
    if len(results) == 2:
        diff = np.abs(results["numba"].p_mean - results["numpy"].p_mean).max()
        print(f"max |mean(numba) - mean(numpy)| = {diff:.2e}")


if __name__ == "__main__":
    main()
