"""The compiled and pure-numpy kernels must agree."""

import math

import numpy as np
import pytest

from occmap import kernels_np

nb = pytest.importorskip("occmap.kernels_nb")


def test_raycast_equal(rng):
    blocked = rng.random((60, 60)) < 0.1
    blocked[0] = blocked[-1] = blocked[:, 0] = blocked[:, -1] = True
    for _ in range(10):
        x, y = rng.uniform(0.2, 2.8, size=2)
        angles = rng.uniform(-math.pi, math.pi, 64)
        d = (np.cos(angles), np.sin(angles))
        a = kernels_np.raycast(blocked, 0.0, 0.0, 0.05, x, y, *d, 2.0)
        b = nb.raycast(blocked, 0.0, 0.0, 0.05, x, y, *d, 2.0)
        assert np.array_equal(a, b)


def test_traverse_equal(rng):
    angles = np.linspace(-0.8, 0.8, 90)
    ranges = rng.uniform(0.1, 4.0, 90)
    ranges[::7] = np.inf
    d = (np.cos(angles), np.sin(angles))
    a = kernels_np.traverse_local(101, 0.05, *d, ranges, 3.0)
    b = nb.traverse_local(101, 0.05, *d, ranges, 3.0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_search_equal(rng):
    for _ in range(20):
        p = rng.random((25, 25)) > 0.3
        p[0, 0] = p[24, 24] = True
        pa, ca = kernels_np.astar(p, 0, 0, 24, 24, 1.5)
        pb, cb = nb.astar(p, 0, 0, 24, 24, 1.5)
        assert math.isclose(ca, cb, abs_tol=1e-9)
        da, db = kernels_np.dijkstra(p, 0, 0), nb.dijkstra(p, 0, 0)
        assert np.allclose(da, db, equal_nan=False)


def test_patch_and_scatter_equal(rng):
    planes = rng.random((3, 31, 31))
    w = rng.normal(size=(2, 3, 5, 5))
    bias = rng.normal(size=2)
    assert np.allclose(kernels_np.patch_logits(planes, w, bias), nb.patch_logits(planes, w, bias))
    valid = rng.random((21, 21)) < 0.7
    occ, exp = rng.random((21, 21)), rng.random((21, 21))
    args = (valid, occ, exp, 0.05, 2, 1.3, 1.1, 0.7, 60, 0.0, 0.0)
    ia, oa, ea = kernels_np.scatter_local(*args)
    ib, ob, eb = nb.scatter_local(*args)
    assert np.array_equal(ia, ib) and np.allclose(oa, ob) and np.allclose(ea, eb)


def test_episode_identical_across_backends(tmp_path):
    import os
    import subprocess
    import sys

    outs = []
    for flag in ("0", "1"):
        out = tmp_path / flag
        env = dict(os.environ, OCCMAP_NO_JIT=flag)
        cmd = [sys.executable, "-m", "occmap.cli", "explore", "--seed", "3", "--steps", "40",
               "--noise", "on", "--anticipator", "heuristic", "--out", str(out)]
        subprocess.run(cmd, env=env, check=True, capture_output=True)
        outs.append((out / "explore.jsonl").read_bytes())
    assert outs[0] == outs[1]
