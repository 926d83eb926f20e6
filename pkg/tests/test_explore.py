import math
from collections import deque

import numpy as np
import pytest

from occmap.anticipate import GroundTruthAnticipator, VisibleOnly
from occmap.errors import InvalidStart, NonpositiveShortest
from occmap.explore import (EpisodeConfig, frontier_goals, run_exploration, run_pointnav,
                            score_goal_anticipation, spl, uncertainty_mass)
from occmap.grid import FREE, GlobalOccupancy, MapSpec, Pose
from occmap.sensor import NoiseConfig, TruncGaussParams
from occmap.world import FloorplanParams, generate_floorplan

from conftest import box_layout


def test_spl():
    assert spl(True, 3.0, 3.0) == 1.0
    assert spl(False, 3.0, 3.0) == 0.0
    assert spl(True, 3.0, 6.0) == 0.5
    with pytest.raises(NonpositiveShortest):
        spl(True, 0.0, 1.0)


def _gmap(cats):
    """Global map from a grid using -1 for unexplored."""
    cats = np.asarray(cats)
    g = GlobalOccupancy.blank(MapSpec(0.05, cats.shape[0]))
    known = cats >= 0
    g.probs[0] = np.where(cats == 1, 1.0, 0.0)
    g.probs[1] = known.astype(float)
    g.touched[:] = known
    return g


def test_frontiers_trivial():
    assert frontier_goals(_gmap(np.zeros((6, 6), int))) == []
    cats = -np.ones((6, 6), int)
    cats[2, 2] = 0
    assert frontier_goals(_gmap(cats)) == [(2, 2)]


def _components(mask):
    seen = np.zeros_like(mask)
    n = 0
    for start in map(tuple, np.argwhere(mask)):
        if seen[start]:
            continue
        n += 1
        q = deque([start])
        seen[start] = True
        while q:
            x, y = q.popleft()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    a, b = x + dx, y + dy
                    if 0 <= a < mask.shape[0] and 0 <= b < mask.shape[1] and mask[a, b] \
                            and not seen[a, b]:
                        seen[a, b] = True
                        q.append((a, b))
    return n


def test_frontiers_two_arcs():
    cats = np.full((15, 15), 1, int)
    cats[1:14, 1:14] = 0
    cats[0, 3:6] = -1
    cats[14, 8:12] = -1
    g = _gmap(cats)
    reps = frontier_goals(g)
    c = np.where(cats == -1, -1, cats)
    unknown = np.pad(c == -1, 1)
    near = unknown[:-2, 1:-1] | unknown[2:, 1:-1] | unknown[1:-1, :-2] | unknown[1:-1, 2:]
    assert len(reps) == _components((c == 0) & near) == 2
    assert all(cats[r] == 0 for r in reps)


def test_score_confident_map_is_zero():
    g = _gmap(np.zeros((15, 15), int))
    g.probs[0] = np.where(np.arange(15)[:, None] % 2 == 0, 0.01, 0.99)
    unknown = _gmap(-np.ones((15, 15), int))
    conf = score_goal_anticipation(g, (7, 7), 1.0)
    assert conf < 0.1 * score_goal_anticipation(unknown, (7, 7), 1.0)
    assert math.isclose(uncertainty_mass(g, (7, 7), 0.05), 5 * 0.0560, rel_tol=1e-2)
    binary = _gmap(np.zeros((15, 15), int))
    assert score_goal_anticipation(binary, (7, 7), 1.0) == 0.0


def test_score_prefers_pocket():
    cats = np.zeros((15, 15), int)
    cats[1:4, 1:4] = -1  # unknown pocket
    g = _gmap(cats)
    a, b = (4, 4), (10, 10)
    r = 0.25
    sa, sb = (score_goal_anticipation(g, c, 1.0, r) for c in (a, b))
    # exhaustive oracle: entropy of unknown cells (0.5 -> ln 2) within r of each goal
    rc = r / 0.05

    def mass(goal):
        return sum(math.log(2) for x, y in np.argwhere(cats == -1)
                   if (x - goal[0]) ** 2 + (y - goal[1]) ** 2 <= rc * rc)
    assert math.isclose(sa, mass(a) / 2.0, rel_tol=1e-9)
    assert math.isclose(sb, mass(b) / 2.0, rel_tol=1e-9)
    assert sa > sb


def test_score_distance_discount():
    cats = -np.ones((15, 15), int)
    g = _gmap(cats)
    s2 = score_goal_anticipation(g, (7, 7), 2.0)
    s4 = score_goal_anticipation(g, (7, 7), 4.0)
    assert math.isclose(s2 / s4, 5 / 3)
    assert score_goal_anticipation(g, (7, 7), math.inf) == -math.inf


@pytest.fixture(scope="module")
def small_plan():
    return generate_floorplan(FloorplanParams(extent=8.0, seed=2))


def test_one_step_episode(small_plan):
    res = run_exploration(small_plan, EpisodeConfig(T=1, seed=1))
    assert len(res.steps) == 1
    assert res.reward_sum == res.final_accuracy - res.initial_accuracy


def test_episode_invariants_and_determinism(small_plan):
    cfg = EpisodeConfig(T=120, seed=4)
    a = run_exploration(small_plan, cfg)
    b = run_exploration(small_plan, cfg)
    assert a.steps == b.steps and a.metrics == b.metrics
    assert a.reward_sum == a.final_accuracy - a.initial_accuracy
    for s in a.steps:
        assert np.allclose(s["true"], s["est"], atol=1e-9)
    seen = [m["area_seen"] for m in a.metrics]
    assert all(x <= y for x, y in zip(seen, seen[1:]))
    assert len(a.steps) <= 120


def test_noisy_episode_telescopes(small_plan):
    cfg = EpisodeConfig(T=80, seed=5, noise=NoiseConfig())
    res = run_exploration(small_plan, cfg)
    assert res.reward_sum == res.final_accuracy - res.initial_accuracy


def test_gt_anticipator_at_least_visible(small_plan):
    vis = run_exploration(small_plan, EpisodeConfig(T=200, seed=3, anticipator=VisibleOnly()))
    gt = run_exploration(small_plan, EpisodeConfig(T=200, seed=3, anticipator=GroundTruthAnticipator()))
    assert gt.final_iou >= vis.final_iou


def test_exploration_exhausts_frontiers():
    lay = generate_floorplan(FloorplanParams(extent=6.0, room_count=(1, 1), obstacle_density=0.0,
                                             seed=0))
    res = run_exploration(lay, EpisodeConfig(T=1000, seed=0))
    assert len(res.steps) < 1000  # stopped because no frontier remained
    seen = [m["area_seen"] for m in res.metrics]
    assert all(x <= y for x, y in zip(seen, seen[1:]))
    free = np.argwhere(lay.cells == FREE)
    assert seen[-1] >= 0.9 * len(free) * 0.05 ** 2


def test_invalid_start():
    lay = box_layout(n=40)
    with pytest.raises(InvalidStart):
        run_exploration(lay, EpisodeConfig(T=5, start=Pose(0.01, 0.01, 0.0)))


def test_pointnav_straight_ahead():
    lay = box_layout(n=120)
    start = Pose(2.0, 3.0, 0.0)
    res = run_pointnav(lay, (3.0, 3.0), EpisodeConfig(T=50, start=start))
    assert res.success and res.steps <= 6 and res.spl >= 0.8
    assert res.final_distance <= 0.2


def test_pointnav_success_uses_true_pose():
    lay = box_layout(n=120)
    start = Pose(1.0, 3.0, 0.0)
    # odometry reports 0.35 m per 0.25 m step: the estimate arrives early
    noise = NoiseConfig(odom_translation=TruncGaussParams(0.1, 0.0), actuation=False,
                        odom_rotation=TruncGaussParams(0.0, 0.0), bias_sign=1)
    res = run_pointnav(lay, (3.0, 3.0), EpisodeConfig(T=50, start=start, noise=noise))
    assert res.steps < 50
    assert res.final_distance > 0.2 and not res.success and res.spl == 0.0


def test_pointnav_budget():
    lay = box_layout(n=120)
    res = run_pointnav(lay, (5.0, 5.0), EpisodeConfig(T=5, start=Pose(1.0, 1.0, 0.0)))
    assert not res.success and res.steps == 5
