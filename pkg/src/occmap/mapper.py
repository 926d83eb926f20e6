"""Global map maintenance, anticipation reward and area-seen accounting."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import SpecMismatch
from .grid import (DEFAULT_THRESHOLD, GlobalOccupancy, GroundTruthLayout, LocalOccupancy, Pose,
                   binarize, cell_scores, map_accuracy, transform_local_to_global)
from .sensor import project_scan
from .world import SENSE_RANGE

ALPHA = 0.9
REWARD_SCALE = 1e-4
COLLISION_OCC = 0.95


@dataclass
class MapperState:
    global_map: GlobalOccupancy
    pose_est: Pose
    alpha: float = ALPHA
    gt: Optional[GroundTruthLayout] = None
    threshold: float = DEFAULT_THRESHOLD
    subsample: int = 2
    step: int = 0
    last_accuracy: int = 0
    seen_mask: np.ndarray = field(default=None)
    scores: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        g = self.global_map.spec.side
        if self.seen_mask is None:
            self.seen_mask = np.zeros((g, g), bool)
        if self.gt is not None:
            if self.gt.spec != self.global_map.spec:
                raise SpecMismatch("layout and global map use different specs")
            self.scores = cell_scores(binarize(self.global_map, self.threshold), self.gt.cells)
            self.last_accuracy = int(self.scores.sum())

    @classmethod
    def start(cls, spec, pose_est, gt=None, **kw):
        return cls(GlobalOccupancy.blank(spec), pose_est, gt=gt, **kw)

    @property
    def spec(self):
        return self.global_map.spec

    def copy(self):
        return MapperState(self.global_map.copy(), self.pose_est, self.alpha, self.gt,
                           self.threshold, self.subsample, self.step, self.last_accuracy,
                           self.seen_mask.copy(),
                           None if self.scores is None else self.scores.copy())

    def full_accuracy(self):
        return map_accuracy(self.global_map, self.gt, self.threshold)

    def _rescore(self, ix, iy):
        if self.gt is None or len(ix) == 0:
            return
        gm = self.global_map
        t = self.threshold
        exp = gm.touched[ix, iy] & (gm.probs[1, ix, iy] >= t)
        occ = exp & (gm.probs[0, ix, iy] >= t)
        gt = self.gt.cells[ix, iy]
        gt_occ = gt == 1
        gt_known = gt <= 1
        new = np.where(gt_known, (occ == gt_occ).astype(np.int64) + (exp == gt_known), 0)
        self.last_accuracy += int(new.sum() - self.scores[ix, iy].sum())
        self.scores[ix, iy] = new


def register(state, local, pose_est):
    """Moving-average the claimed, unfiltered cells of ``local`` into the global map.

    Cells whose explored probability is below the binarisation threshold make
    no claim and are skipped, as are invalid and off-grid cells.
    """
    claimed = local.valid_mask & (local.probs[1] >= state.threshold)
    reg = transform_local_to_global(LocalOccupancy(local.probs, claimed), pose_est, state.spec,
                                    subsample=state.subsample)
    gm = state.global_map
    a = state.alpha
    if len(reg):
        gm.probs[0, reg.ix, reg.iy] = a * gm.probs[0, reg.ix, reg.iy] + (1 - a) * reg.occupied
        gm.probs[1, reg.ix, reg.iy] = a * gm.probs[1, reg.ix, reg.iy] + (1 - a) * reg.explored
        gm.touched[reg.ix, reg.iy] = True
        state._rescore(reg.ix, reg.iy)
    state.pose_est = pose_est
    state.step += 1
    return state


class Reward(NamedTuple):
    raw: int
    scaled: float


def anticipation_reward(state_before, state_after, gt):
    """Gain in map accuracy between two snapshots (raw cell-channel count and policy scale)."""
    if state_before.spec != gt.spec or state_after.spec != gt.spec:
        raise SpecMismatch("states and layout use different specs")
    t = state_after.threshold
    raw = map_accuracy(state_after.global_map, gt, t) - map_accuracy(state_before.global_map, gt, t)
    return Reward(raw, raw * REWARD_SCALE)


def area_window(cell_size, sense_range=SENSE_RANGE):
    return 2 * int(math.ceil(sense_range / cell_size)) + 3


def update_area_seen(state, scan, true_pose):
    """OR the directly visible cells (true pose, no anticipation) into ``seen_mask``."""
    cs = state.spec.cell_size
    visible = project_scan(scan, area_window(cs), cs)
    reg = transform_local_to_global(visible, true_pose, state.spec, subsample=state.subsample)
    state.seen_mask[reg.ix, reg.iy] = True
    return state, area_seen(state)


def area_seen(state):
    return float(np.count_nonzero(state.seen_mask)) * state.spec.cell_size ** 2


def collision_cell(state, pose_est):
    cs = state.spec.cell_size
    x = pose_est.x + cs * math.cos(pose_est.theta)
    y = pose_est.y + cs * math.sin(pose_est.theta)
    ix = math.floor((x - state.spec.origin[0]) / cs)
    iy = math.floor((y - state.spec.origin[1]) / cs)
    return ix, iy


def mark_collision(state, pose_est):
    """Mark the cell one body radius ahead of the estimate as occupied."""
    ix, iy = collision_cell(state, pose_est)
    if not state.spec.contains(ix, iy):
        return state
    gm = state.global_map
    gm.probs[0, ix, iy] = max(gm.probs[0, ix, iy], COLLISION_OCC)
    gm.probs[1, ix, iy] = 1.0
    gm.touched[ix, iy] = True
    state._rescore(np.array([ix]), np.array([iy]))
    return state
