"""Compare the compiled and pure-Python dispatch kernels.

Run: ``python benchmarks/bench_kernel.py [--runs N]``. Both kernels get the
same random batch; results must agree and the timing ratio is reported.
"""
import argparse
import time

import numpy as np

from droopsat import _pykernel
from droopsat.dispatch import FEAS_TOL, rho_bounds
from droopsat.model import table1_params

try:
    from droopsat import _ckernel
except ImportError:
    _ckernel = None


def batch(rng, params, runs, horizon):
    U = rng.uniform(params.u_min, params.u_max, (runs, horizon, params.n_units))
    D = rng.integers(0, 2, (runs, horizon, params.n_conv)).astype(float)
    W = np.concatenate([rng.uniform(0, 1, (runs, horizon, params.n_renewable)),
                        -rng.uniform(0, 2, (runs, horizon, params.n_load))], axis=2)
    X0 = rng.uniform(params.x_min, params.x_max, (runs, params.n_storage))
    return U, D, W, X0


def timed(kernel, args, params, bounds, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = kernel.simulate_batch(*args, params.n_conv, params.n_storage, params.n_renewable,
                                    params.p_min, params.p_max, params.x_min, params.x_max,
                                    params.chi, params.ts, bounds.rho_min, bounds.rho_max,
                                    FEAS_TOL)
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--horizon", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    params = table1_params()
    bounds = rho_bounds(params)
    data = batch(np.random.default_rng(0), params, args.runs, args.horizon)
    steps = args.runs * args.horizon
    t_py, out_py = timed(_pykernel, data, params, bounds, args.repeat)
    print(f"python : {t_py:.4f} s  ({steps / t_py:,.0f} steps/s)")
    if _ckernel is None:
        print("cython : extension not built")
        return
    t_c, out_c = timed(_ckernel, data, params, bounds, args.repeat)
    print(f"cython : {t_c:.4f} s  ({steps / t_c:,.0f} steps/s)")
    diff = max(float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))
               for a, b in zip(out_py, out_c))
    print(f"speed-up {t_py / t_c:.1f}x, max abs difference {diff:.2e}")


if __name__ == "__main__":
    main()
