"""Wall-clock comparison of the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once to trigger compilation, then timed. A final
subprocess with MRL_DISABLE_NUMBA=1 times a full lift pipeline batch so the
end-to-end effect of the flag is visible too.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mrl.kernels import KERNELS


def inputs(rng):
    M = np.eye(2) + 0.01 * rng.standard_normal((64, 2048, 2, 2))
    J0 = np.broadcast_to(np.eye(2), (64, 2, 2)).copy()
    Z = np.cumsum(rng.standard_normal((64, 2**12 + 1, 2)), axis=1) / 64
    Y = np.cumsum(rng.standard_normal((32, 2**12 + 1, 64)), axis=1) / 64
    X = np.cumsum(rng.standard_normal((1025, 2)), axis=0) / 32
    XX0 = np.einsum("ta,tb->tab", X, X)
    times = np.linspace(0, 1, 1025)
    return {
        "matrix_recursion": (M, J0),
        "restart_products": (M[0, :256],),
        "coarse_areas": (Z, 16),
        "dyadic_level_minima": (Y, 8),
        "pairwise_holder": (X, times, 0.4),
        "pairwise_holder2": (X, XX0, times, 0.4),
    }


def best_time(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


LIFT_SNIPPET = """
import time
from mrl._accel import backend
from mrl.mc_harness import ExperimentPlan, run_plan
cfg = {"version": 1, "pipeline": "lift", "n_paths": 8, "N": 4096, "N_coarse": 1024, "batch_size": 8,
       "diffusion": {"catalog_id": "trig_perturbed", "d": 2}}
run_plan(ExperimentPlan(cfg), workers=1)
t0 = time.perf_counter()
run_plan(ExperimentPlan(cfg), workers=1)
print(backend(), time.perf_counter() - t0)
"""


def pipeline_time(disable):
    env = dict(os.environ, MRL_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", LIFT_SNIPPET], env=env, capture_output=True, text=True, check=True)
    name, secs = out.stdout.split()
    return name, float(secs)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    data = inputs(np.random.default_rng(0))
    print(f"{'kernel':22s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, (nb, npy) in KERNELS.items():
        t_nb = best_time(nb, data[name], args.repeat)
        t_np = best_time(npy, data[name], args.repeat)
        print(f"{name:22s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}")
    for disable in (False, True):
        name, secs = pipeline_time(disable)
        print(f"lift pipeline, 8 paths, backend={name}: {secs:.3f} s")


if __name__ == "__main__":
    main()
