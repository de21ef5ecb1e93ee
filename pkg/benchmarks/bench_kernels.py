"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 100,1000,10000]

Times each hot kernel at several sizes, then a continuous-monitor replay
(one full realignment per pose) under each backend.
"""

import argparse
import contextlib
import timeit

import numpy as np

from slameval import _kernels_py, kernels
from slameval.geometry import Trajectory
from slameval.metrics import continuous_monitor

NAMES = ("cross_covariance", "residual_norms", "relative_errors")


@contextlib.contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def rotations(rng, n):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1)[:, None]
    x, y, z, w = q.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], 1)


def best(fn, repeat):
    t = timeit.Timer(fn)
    loops, _ = t.autorange()
    return min(t.repeat(repeat, loops)) / loops


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="100,1000,10000")
    ap.add_argument("--monitor-poses", type=int, default=400)
    args = ap.parse_args()
    if "compiled" not in kernels.BACKENDS:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    mods = {"python": _kernels_py, "compiled": kernels.BACKENDS["compiled"]}
    rng = np.random.default_rng(0)

    print(f"{'kernel':18s} {'n':>7s} {'python':>11s} {'compiled':>11s} {'speedup':>8s}")
    for n in (int(s) for s in args.sizes.split(",")):
        a, b = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        R1, R2 = rotations(rng, n), rotations(rng, n)
        i = np.arange(n - 1)
        calls = {
            "cross_covariance": lambda m: m.cross_covariance(a, b),
            "residual_norms": lambda m: m.residual_norms(a, b, R1[0], a[0], 1.5),
            "relative_errors": lambda m: m.relative_errors(R1, a, R2, b, i, i + 1),
        }
        for name, call in calls.items():
            t = {k: best(lambda m=m: call(m), args.repeat) for k, m in mods.items()}
            print(f"{name:18s} {n:7d} {t['python'] * 1e6:9.1f}us {t['compiled'] * 1e6:9.1f}us "
                  f"{t['python'] / t['compiled']:7.2f}x")

    n = args.monitor_poses
    ts = np.arange(n) * 0.05
    pos = np.c_[np.cos(ts), np.sin(2 * ts), 0.1 * ts]
    gt = Trajectory(ts, pos)
    est = Trajectory(ts, pos + rng.normal(size=pos.shape) * 0.02)
    events = list(est)
    t = {}
    for k, m in mods.items():
        with backend(m):
            t[k] = best(lambda: continuous_monitor(gt, events), 1)
    print(f"\nmonitor replay, {n} poses: python {t['python'] * 1e3:.1f} ms, "
          f"compiled {t['compiled'] * 1e3:.1f} ms ({t['python'] / t['compiled']:.2f}x)")


if __name__ == "__main__":
    main()
