"""Obstacle inflation, weighted A*, waypoint selection and the local controller."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import NoPath, StartBlocked
from .grid import OCCUPIED, UNKNOWN, VOID, wrap_angle
from .sensor import Action

SQRT2 = math.sqrt(2.0)
LOOKAHEAD = 1.25
TURN_THRESHOLD = math.radians(5.0)


@dataclass(frozen=True)
class Traversability:
    passable: np.ndarray  # (G, G) bool
    radius: float = 0.0

    @property
    def blocked(self):
        return ~self.passable


@dataclass(frozen=True)
class Path:
    cells: list
    cost: float

    def __len__(self):
        return len(self.cells)


def inflate(categories, radius_m, cell_size, unknown_blocked=False):
    """Block every cell within ``radius_m`` of an occupied (or void / unknown) cell."""
    if radius_m < 0:
        raise ValueError("radius must be non-negative")
    cats = np.asarray(categories)
    seeds = (cats == OCCUPIED) | (cats == VOID)
    if unknown_blocked:
        seeds |= cats == UNKNOWN
    if radius_m == 0 or not seeds.any():
        return Traversability(~seeds, radius_m)
    return Traversability(~ndimage.binary_dilation(seeds, structure=disc(radius_m / cell_size)),
                          radius_m)


def disc(radius_cells):
    """Footprint of cell offsets whose centres lie within ``radius_cells``."""
    r = int(math.floor(radius_cells + 1e-9))
    d = np.arange(-r, r + 1)
    return d[:, None] ** 2 + d[None, :] ** 2 <= radius_cells ** 2 + 1e-9


def _unwind(parent, goal, ny):
    cells = []
    cur = goal
    while cur != -1:
        cells.append((int(cur // ny), int(cur % ny)))
        cur = parent[cur]
    return cells[::-1]


def astar(trav, start, goal, weight=1.0):
    """Shortest 8-connected path (octile costs, no corner cutting); f = g + weight * h."""
    if weight < 1:
        raise ValueError("weight must be >= 1")
    p = trav.passable
    nx, ny = p.shape
    sx, sy = map(int, start)
    gx, gy = map(int, goal)
    if not (0 <= sx < nx and 0 <= sy < ny) or not p[sx, sy]:
        raise StartBlocked(f"start {start} is not passable")
    if not (0 <= gx < nx and 0 <= gy < ny) or not p[gx, gy]:
        raise NoPath(f"goal {goal} is not passable")
    parent, cost = kernels.astar(np.ascontiguousarray(p), sx, sy, gx, gy, float(weight))
    if cost < 0:
        raise NoPath(f"no path from {start} to {goal}")
    return Path(_unwind(parent, gx * ny + gy, ny), float(cost))


def geodesic_distances(trav, start):
    """Path cost (in cells) from ``start`` to every cell; inf where unreachable."""
    p = np.ascontiguousarray(trav.passable)
    sx, sy = map(int, start)
    if not p[sx, sy]:
        raise StartBlocked(f"start {start} is not passable")
    return kernels.dijkstra(p, sx, sy)


def path_lengths(cells):
    """Cumulative step cost along a cell path."""
    c = np.asarray(cells, dtype=np.int64)
    if len(c) < 2:
        return np.zeros(len(c))
    steps = np.where(np.abs(np.diff(c, axis=0)).sum(axis=1) == 2, SQRT2, 1.0)
    return np.concatenate([[0.0], np.cumsum(steps)])


def next_waypoint(path, pose_est, spec, lookahead=LOOKAHEAD):
    """World point of the farthest path cell within ``lookahead`` metres along the path."""
    if not path.cells:
        raise ValueError("empty path")
    cells = np.asarray(path.cells, dtype=np.float64)
    cs = spec.cell_size
    cx = spec.origin[0] + (cells[:, 0] + 0.5) * cs
    cy = spec.origin[1] + (cells[:, 1] + 0.5) * cs
    near = int(np.argmin((cx - pose_est.x) ** 2 + (cy - pose_est.y) ** 2))
    cum = path_lengths(path.cells) * cs
    ahead = np.flatnonzero(cum - cum[near] <= lookahead + 1e-9)
    j = int(ahead[-1])
    return (float(cx[j]), float(cy[j]))


def line_of_sight(trav, spec, a, b):
    """True when every cell sampled along the segment a->b (half-cell steps) is passable."""
    p = trav.passable
    cs = spec.cell_size
    n = max(1, int(math.ceil(math.hypot(b[0] - a[0], b[1] - a[1]) / (0.5 * cs))))
    s = np.linspace(0.0, 1.0, n + 1)
    ix = np.floor((a[0] + s * (b[0] - a[0]) - spec.origin[0]) / cs).astype(np.int64)
    iy = np.floor((a[1] + s * (b[1] - a[1]) - spec.origin[1]) / cs).astype(np.int64)
    inside = (ix >= 0) & (iy >= 0) & (ix < p.shape[0]) & (iy < p.shape[1])
    return bool(inside.all() and p[ix, iy].all())


def visible_waypoint(path, pose_est, spec, trav, lookahead=LOOKAHEAD):
    """Like :func:`next_waypoint`, restricted to path cells in straight-line view of the agent.

    Falls back to the path cell after the nearest one.
    """
    cells = np.asarray(path.cells, dtype=np.float64)
    cs = spec.cell_size
    cx = spec.origin[0] + (cells[:, 0] + 0.5) * cs
    cy = spec.origin[1] + (cells[:, 1] + 0.5) * cs
    near = int(np.argmin((cx - pose_est.x) ** 2 + (cy - pose_est.y) ** 2))
    cum = path_lengths(path.cells) * cs
    ahead = np.flatnonzero(cum - cum[near] <= lookahead + 1e-9)
    me = (pose_est.x, pose_est.y)
    for j in ahead[::-1]:
        if j <= near:
            break
        if line_of_sight(trav, spec, me, (cx[j], cy[j])):
            return (float(cx[j]), float(cy[j]))
    j = min(near + 1, len(cells) - 1)
    return (float(cx[j]), float(cy[j]))


def heading_error(pose_est, point):
    bearing = math.atan2(point[1] - pose_est.y, point[0] - pose_est.x)
    return wrap_angle(bearing - pose_est.theta)


def local_controller(pose_est, waypoint, threshold=TURN_THRESHOLD):
    e = heading_error(pose_est, waypoint)
    if abs(e) > threshold:
        return Action.TURN_LEFT if e > 0 else Action.TURN_RIGHT
    return Action.MOVE_FORWARD
