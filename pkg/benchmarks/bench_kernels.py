"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--episode]

``--episode`` also times a short exploration episode end to end under each
backend (each in a fresh interpreter, since the flag is read at import).
"""

import argparse
import math
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from occmap import kernels_nb, kernels_np
from occmap.grid import FREE
from occmap.world import FloorplanParams, generate_floorplan, ray_angles


def cases():
    rng = np.random.default_rng(0)
    lay = generate_floorplan(FloorplanParams(seed=1))
    spec = lay.spec
    free = np.argwhere(lay.cells == FREE)
    ix, iy = free[len(free) // 2]
    x, y = spec.cell_center(ix, iy)
    ang = 0.3 + ray_angles(math.radians(90), 128)
    dx, dy = np.cos(ang), np.sin(ang)
    ranges = rng.uniform(0.2, 4.0, 128)
    passable = lay.cells == FREE
    gx, gy = free[-1]
    planes = rng.random((3, 101, 101))
    w = rng.normal(size=(2, 3, 9, 9))
    b = rng.normal(size=2)
    valid = rng.random((101, 101)) < 0.6
    occ, exp = rng.random((101, 101)), rng.random((101, 101))
    side = spec.side
    return {
        "raycast (128 rays)": lambda k: k.raycast(lay.blocked, 0.0, 0.0, spec.cell_size, x, y,
                                                  dx, dy, 3.0),
        "traverse_local (128 rays)": lambda k: k.traverse_local(101, 0.05, dx, dy, ranges, 3.0),
        "astar (full layout)": lambda k: k.astar(passable, ix, iy, gx, gy, 1.0),
        "dijkstra (full layout)": lambda k: k.dijkstra(passable, ix, iy),
        "patch_logits (k=9, 101x101)": lambda k: k.patch_logits(planes, w, b),
        "scatter_local (101x101, sub 2)": lambda k: k.scatter_local(valid, occ, exp, 0.05, 2, x, y,
                                                                    0.3, side, 0.0, 0.0),
    }


def bench(repeat):
    rows = []
    for name, fn in cases().items():
        fn(kernels_nb)  # compile outside the timing
        t = {}
        for label, mod in (("numba", kernels_nb), ("numpy", kernels_np)):
            n = max(1, repeat)
            t[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=n))
        rows.append((name, t["numba"], t["numpy"]))
    return rows


def episode_time(flag, steps):
    code = ("import time; from occmap.explore import EpisodeConfig, run_exploration; "
            "from occmap.world import FloorplanParams, generate_floorplan; "
            "lay = generate_floorplan(FloorplanParams(seed=1)); "
            f"run_exploration(lay, EpisodeConfig(T=5, seed=1)); t = time.perf_counter(); "
            f"run_exploration(lay, EpisodeConfig(T={steps}, seed=1)); "
            "print(time.perf_counter() - t)")
    env = dict(os.environ, OCCMAP_NO_JIT=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episode", action="store_true")
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args()
    print(f"{'kernel':<32} {'numba (ms)':>11} {'numpy (ms)':>11} {'speedup':>8}")
    for name, a, b in bench(args.repeat):
        print(f"{name:<32} {1e3 * a:11.3f} {1e3 * b:11.3f} {b / a:8.1f}")
    if args.episode:
        t0 = time.perf_counter()
        a, b = episode_time("0", args.steps), episode_time("1", args.steps)
        print(f"\nexploration, {args.steps} steps: numba {a:.2f} s, numpy {b:.2f} s "
              f"({b / a:.1f}x); wall {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
