import math

import numpy as np
import pytest

from occmap.errors import SpecMismatch
from occmap.grid import LocalOccupancy, MapSpec, Pose, map_accuracy
from occmap.mapper import (MapperState, anticipation_reward, area_seen, mark_collision, register,
                           update_area_seen)
from occmap.world import simulate_depth_scan

from conftest import box_layout, random_layout


def _single(value, exp=1.0, side=1):
    probs = np.zeros((2, side, side))
    probs[0] = value
    probs[1] = exp
    return LocalOccupancy(probs, np.ones((side, side), bool))


def test_register_moving_average():
    spec = MapSpec(0.05, 11)
    st = MapperState.start(spec, Pose(0.275, 0.275, 0.0))
    register(st, _single(1.0), st.pose_est)
    assert math.isclose(st.global_map.probs[0, 5, 5], 0.55)
    assert math.isclose(st.global_map.probs[1, 5, 5], 0.55)
    assert st.global_map.touched.sum() == 1


def test_register_skips_masked():
    spec = MapSpec(0.05, 11)
    st = MapperState.start(spec, Pose(0.275, 0.275, 0.0))
    local = _single(1.0)
    local.valid_mask[:] = False
    register(st, local, st.pose_est)
    assert not st.global_map.touched.any() and np.all(st.global_map.probs == 0.5)


def test_register_geometric_series():
    spec = MapSpec(0.05, 11)
    st = MapperState.start(spec, Pose(0.275, 0.275, 0.0))
    v, p = 0.8, 0.5
    for _ in range(20):
        register(st, _single(v), st.pose_est)
        p = 0.9 * p + 0.1 * v
    assert math.isclose(st.global_map.probs[0, 5, 5], 0.5 * 0.9 ** 20 + v * (1 - 0.9 ** 20))
    assert math.isclose(st.global_map.probs[0, 5, 5], p)


def test_incremental_accuracy_matches_full(rng):
    lay = random_layout(rng, n=40)
    st = MapperState.start(lay.spec, Pose(1.0, 1.0, 0.0), gt=lay)
    before = st.copy()
    total = 0
    for _ in range(30):
        local = LocalOccupancy(rng.random((2, 15, 15)), rng.random((15, 15)) < 0.7)
        pose = Pose(rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7), rng.uniform(-3, 3))
        prev = st.copy()
        register(st, local, pose)
        assert st.last_accuracy == map_accuracy(st.global_map, lay)
        total += anticipation_reward(prev, st, lay).raw
        assert np.all((st.global_map.probs >= 0) & (st.global_map.probs <= 1))
    # telescoping
    assert total == st.full_accuracy() - before.full_accuracy()


def test_reward_values_and_spec_check(rng):
    lay = box_layout(n=20)
    st = MapperState.start(lay.spec, Pose(0.5, 0.5, 0.0), gt=lay)
    r = anticipation_reward(st, st.copy(), lay)
    assert r.raw == 0 and r.scaled == 0.0
    other = box_layout(n=21)
    with pytest.raises(SpecMismatch):
        anticipation_reward(st, st, other)


def test_area_seen_full_turn():
    lay = box_layout(n=240)
    st = MapperState.start(lay.spec, Pose(6.0, 6.0, 0.0))
    assert area_seen(st) == 0.0
    pose = Pose(6.0, 6.0, 0.0)
    history = []
    for i in range(36):
        scan = simulate_depth_scan(lay, pose, n_rays=128)
        _, a = update_area_seen(st, scan, pose)
        history.append(a)
        pose = Pose(pose.x, pose.y, pose.theta + math.radians(10))
    assert all(a <= b for a, b in zip(history, history[1:]))
    assert abs(history[-1] - math.pi * 9) / (math.pi * 9) <= 0.10
    # identical scan again: no change
    _, again = update_area_seen(st, simulate_depth_scan(lay, pose, n_rays=128), pose)
    assert again == history[-1]


def test_mark_collision():
    spec = MapSpec(0.05, 21)
    st = MapperState.start(spec, Pose(0.525, 0.525, 0.0))
    mark_collision(st, st.pose_est)
    assert st.global_map.probs[0, 11, 10] >= 0.95 and st.global_map.probs[1, 11, 10] == 1.0
    st.global_map.probs[0, 11, 10] = 1.0
    mark_collision(st, st.pose_est)
    assert st.global_map.probs[0, 11, 10] == 1.0
    # the estimate decides the cell, not any true pose
    est = Pose(0.525, 0.525, math.pi / 2)
    mark_collision(st, est)
    assert st.global_map.probs[0, 10, 11] >= 0.95
