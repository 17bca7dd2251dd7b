"""Time the compiled loop kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--size 513] [--classes 21] [--repeat 5]

Also times a full ``cslsel select`` run as a fresh process with numba enabled
and with ``CSL_DISABLE_NUMBA=1``.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from cslsel import kernels
from cslsel.arraystore import write_array
from cslsel.synthgen import SynthConfig, generate


def best_of(f, repeat):
    f()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        times.append(time.perf_counter() - t)
    return min(times)


def cli_time(path, disable, repeat):
    env = dict(os.environ, OMP_NUM_THREADS="1", OPENBLAS_NUM_THREADS="1", CSL_DISABLE_NUMBA="1" if disable else "0")
    d = os.path.dirname(path)
    argv = [sys.executable, "-m", "cslsel", "select", "--probs", path,
            "--out-weights", os.path.join(d, "w.npy"), "--out-labels", os.path.join(d, "l.npy")]
    return best_of(lambda: subprocess.run(argv, env=env, check=True), repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=513)
    ap.add_argument("--classes", type=int, default=21)
    ap.add_argument("--brute-n", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is not active (installed? CSL_DISABLE_NUMBA set?)")

    probs, _, _ = generate(SynthConfig(height=args.size, width=args.size, classes=args.classes, seed=0))
    p2 = np.ascontiguousarray(probs.reshape(args.classes, -1))
    pmax, _, disp = kernels.pixel_stats(p2)
    phi = np.ascontiguousarray(np.stack([pmax, disp]))
    X = np.random.default_rng(0).normal(size=(args.brute_n, 2))

    cases = {
        "pixel_stats": (p2,),
        "gram2": (phi,),
        "spectral_assign": (phi, 0.6, 0.8, 2.0, -0.8, 0.6, 0.5),
        "gaussian_weights": (phi, 0.9, -1e-4, 1e-3, 1e-8, 8.0, True),
        "brute_force": (X,),
    }
    print(f"{'kernel':18s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, a in cases.items():
        tj = best_of(lambda: kernels.JIT[name](*a), args.repeat)
        tn = best_of(lambda: kernels.NUMPY[name](*a), args.repeat)
        print(f"{name:18s} {tj:10.4f} {tn:10.4f} {tn / tj:8.2f}")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "probs.npy")
        write_array(probs.astype(np.float32), path)
        on = cli_time(path, False, 3)
        off = cli_time(path, True, 3)
    print(f"\ncslsel select, fresh process: {on:.3f} s (numba allowed), {off:.3f} s (CSL_DISABLE_NUMBA=1)")


if __name__ == "__main__":
    main()
