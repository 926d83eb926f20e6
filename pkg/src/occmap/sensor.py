"""Depth projection, actuation and odometry noise, dead reckoning."""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import FREE, LocalOccupancy, Pose
from .world import SENSE_RANGE

FORWARD_STEP = 0.25
TURN_ANGLE = math.radians(10.0)


class Action(enum.IntEnum):
    STOP = 0
    MOVE_FORWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


@dataclass(frozen=True)
class TruncGaussParams:
    mean: float = 0.0
    std: float = 0.0
    truncation: float = 2.0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be non-negative")
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")


def _deg(mean, std):
    return TruncGaussParams(math.radians(mean), math.radians(std))


@dataclass(frozen=True)
class NoiseConfig:
    odom_translation: TruncGaussParams = TruncGaussParams(0.025, 0.001)
    odom_rotation: TruncGaussParams = field(default_factory=lambda: _deg(0.9, 0.057))
    act_translation: TruncGaussParams = TruncGaussParams(0.0, 0.01)
    act_rotation: TruncGaussParams = field(default_factory=lambda: _deg(0.0, 1.0))
    enabled: bool = True
    actuation: bool = True
    odometry: bool = True
    # +1 / -1 pins the odometry bias direction; 0 draws it once per episode
    bias_sign: int = 0

    @property
    def actuation_on(self):
        return self.enabled and self.actuation

    @property
    def odometry_on(self):
        return self.enabled and self.odometry


NOISE_OFF = NoiseConfig(enabled=False)


def sample_trunc_gauss(params, rng):
    """One draw from N(mean, std^2) restricted to mean +/- truncation*std, by rejection."""
    if params.std == 0:
        return float(params.mean)
    bound = params.truncation * params.std
    while True:
        z = rng.normal(0.0, params.std)
        if abs(z) <= bound:
            return float(params.mean + z)


def sample_trunc_gauss_n(params, rng, n):
    """Vectorised rejection sampler; same distribution as :func:`sample_trunc_gauss`."""
    if params.std == 0:
        return np.full(n, float(params.mean))
    bound = params.truncation * params.std
    out = np.empty(n)
    filled = 0
    while filled < n:
        z = rng.normal(0.0, params.std, size=max(16, int(1.1 * (n - filled))))
        z = z[np.abs(z) <= bound][: n - filled]
        out[filled:filled + z.size] = z
        filled += z.size
    return params.mean + out


def episode_signs(noise, rng):
    """Odometry bias directions for one episode (translation, rotation)."""
    if noise.bias_sign:
        s = 1.0 if noise.bias_sign > 0 else -1.0
        return (s, s)
    draws = rng.integers(0, 2, size=2)
    return (1.0 if draws[0] else -1.0, 1.0 if draws[1] else -1.0)


def body_clear(layout, x, y):
    """Point robot with one cell of clearance: every cell centre within a cell size is free."""
    spec = layout.spec
    cs = spec.cell_size
    gx = (x - spec.origin[0]) / cs
    gy = (y - spec.origin[1]) / cs
    ix, iy = math.floor(gx), math.floor(gy)
    for ax in (ix - 1, ix, ix + 1):
        for ay in (iy - 1, iy, iy + 1):
            near = math.hypot(ax + 0.5 - gx, ay + 0.5 - gy) <= 1.0
            if (ax, ay) != (ix, iy) and not near:
                continue
            if not spec.contains(ax, ay) or layout.cells[ax, ay] != FREE:
                return False
    return True


def apply_actuation(layout, true_pose, action, noise, rng):
    """Execute ``action``; forward motion stops short at the first blocked position.

    Returns ``(new_pose, collided)``.
    """
    action = Action(action)
    if action == Action.STOP:
        return true_pose, False
    noisy = noise.actuation_on
    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        dtheta = TURN_ANGLE if action == Action.TURN_LEFT else -TURN_ANGLE
        if noisy:
            dtheta += sample_trunc_gauss(noise.act_rotation, rng)
        return Pose(true_pose.x, true_pose.y, true_pose.theta + dtheta), False

    dist = FORWARD_STEP
    dtheta = 0.0
    if noisy:
        dist += sample_trunc_gauss(noise.act_translation, rng)
        dtheta = sample_trunc_gauss(noise.act_rotation, rng)
    c, s = math.cos(true_pose.theta), math.sin(true_pose.theta)
    step = layout.spec.cell_size / 5.0
    n = max(1, int(math.ceil(abs(dist) / step)))
    reached = 0.0
    collided = False
    for i in range(1, n + 1):
        d = dist * i / n
        if not body_clear(layout, true_pose.x + c * d, true_pose.y + s * d):
            collided = True
            break
        reached = d
    pose = Pose(true_pose.x + c * reached, true_pose.y + s * reached, true_pose.theta + dtheta)
    return pose, collided


@dataclass(frozen=True)
class OdometryReading:
    dx: float
    dy: float
    dtheta: float


def read_odometry(prev_true, cur_true, noise, rng, signs=(1.0, 1.0)):
    """True motion in ``prev_true``'s frame, plus biased measurement error when enabled.

    Translation error is added to the motion's length, rotation error to its
    heading change; a component that did not move gets no error.
    """
    dx, dy, dth = cur_true.relative_to(prev_true)
    if not noise.odometry_on:
        return OdometryReading(dx, dy, dth)
    dist = math.hypot(dx, dy)
    if dist > 1e-9:
        err = signs[0] * sample_trunc_gauss(noise.odom_translation, rng)
        scale = (dist + err) / dist
        dx, dy = dx * scale, dy * scale
    if abs(dth) > 1e-9:
        dth += signs[1] * sample_trunc_gauss(noise.odom_rotation, rng)
    return OdometryReading(dx, dy, dth)


def integrate_odometry(pose_est, reading):
    return pose_est.compose(reading.dx, reading.dy, reading.dtheta)


def project_scan(scan, side=101, cell_size=0.05, sense_range=SENSE_RANGE):
    """Egocentric visible occupancy: traversed cells free, the hit cell occupied.

    Nothing past ``sense_range`` is marked.
    """
    angles = np.ascontiguousarray(scan.angles, dtype=np.float64)
    ranges = np.ascontiguousarray(scan.ranges, dtype=np.float64)
    free, occ = kernels.traverse_local(side, cell_size, np.cos(angles), np.sin(angles), ranges,
                                       sense_range)
    probs = np.zeros((2, side, side))
    seen = free | occ
    probs[0][occ] = 1.0
    probs[1][seen] = 1.0
    return LocalOccupancy(probs, seen)
