"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call of each kernel is a warm-up (JIT compile) and is not timed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from spo_lab import kernels
from spo_lab._jit import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    T, N = 256, 8
    rew, val = rng.standard_normal((T, N)), rng.standard_normal((T, N))
    done = (rng.random((T, N)) < 0.02).astype(float)
    boot = rng.standard_normal(N)
    adv = rng.standard_normal(1024)
    ones = np.ones(1024)
    yield "gae 256x8", lambda nb: kernels.gae_advantages(rew, val, done, boot, 0.99, 0.95, use_numba=nb)
    for name, code in (("spo", kernels.SPO), ("ppo_clip", kernels.PPO_CLIP), ("simple", kernels.SIMPLE)):
        yield (f"ratio_ascent {name} 1024x10k",
               lambda nb, code=code: kernels.ratio_ascent(adv, ones, 0.2, 1e-3, 10_000, code, use_numba=nb))
    yield "grid_span spo 300k", lambda nb: kernels.grid_maximizer_span(kernels.SPO, 0.7, 0.2, use_numba=nb)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
    print(f"{'kernel':<30} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for name, fn in cases():
        t_np = best_of(lambda: fn(False), args.repeat)
        if HAVE_NUMBA:
            fn(True)
            t_nb = best_of(lambda: fn(True), args.repeat)
            print(f"{name:<30} {t_np * 1e3:>11.3f} {t_nb * 1e3:>11.3f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<30} {t_np * 1e3:>11.3f} {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()
