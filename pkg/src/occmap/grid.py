"""Grid and coordinate types, binarization, and map-comparison metrics.

Global arrays are indexed ``[ix, iy]`` (x index first).  Local egocentric
arrays are indexed ``[r, c]`` with the agent at the centre cell ``(h, h)``,
forward along decreasing ``r`` and left along decreasing ``c``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBounds, ShapeMismatch, SpecMismatch

# categorical codes shared by layouts and binarized maps
FREE = 0
OCCUPIED = 1
UNKNOWN = 2
VOID = 3

DEFAULT_CELL_SIZE = 0.05
DEFAULT_THRESHOLD = 0.5


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def compose(self, dx, dy, dtheta):
        """Apply a motion ``(dx, dy, dtheta)`` expressed in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose(self.x + c * dx - s * dy, self.y + s * dx + c * dy, self.theta + dtheta)

    def relative_to(self, other):
        """Motion taking ``other`` to ``self``, in ``other``'s frame."""
        c, s = math.cos(other.theta), math.sin(other.theta)
        ddx, ddy = self.x - other.x, self.y - other.y
        return (c * ddx + s * ddy, -s * ddx + c * ddy, wrap_angle(self.theta - other.theta))

    def distance(self, other):
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self):
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class MapSpec:
    cell_size: float = DEFAULT_CELL_SIZE
    side: int = 101
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.side < 3:
            raise ValueError("side must be >= 3")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def extent(self):
        return self.side * self.cell_size

    def contains(self, ix, iy):
        return 0 <= ix < self.side and 0 <= iy < self.side

    def cell_center(self, ix, iy):
        return (self.origin[0] + (ix + 0.5) * self.cell_size,
                self.origin[1] + (iy + 0.5) * self.cell_size)


def local_spec(side, cell_size=DEFAULT_CELL_SIZE):
    if side % 2 != 1:
        raise ValueError("local maps must have an odd side")
    return MapSpec(cell_size=cell_size, side=side)


def world_to_cell(point, spec):
    ix = math.floor((point[0] - spec.origin[0]) / spec.cell_size)
    iy = math.floor((point[1] - spec.origin[1]) / spec.cell_size)
    if not spec.contains(ix, iy):
        raise OutOfBounds(f"point {tuple(point)} outside grid of side {spec.side}")
    return (ix, iy)


def world_to_cell_array(xs, ys, spec):
    """Vectorised :func:`world_to_cell`; returns ``(ix, iy, inside)`` without raising."""
    ix = np.floor((np.asarray(xs) - spec.origin[0]) / spec.cell_size).astype(np.int64)
    iy = np.floor((np.asarray(ys) - spec.origin[1]) / spec.cell_size).astype(np.int64)
    inside = (ix >= 0) & (ix < spec.side) & (iy >= 0) & (iy < spec.side)
    return ix, iy, inside


@dataclass
class LocalOccupancy:
    probs: np.ndarray  # (2, V, V): occupied, explored
    valid_mask: np.ndarray  # (V, V) bool

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.probs.ndim != 3 or self.probs.shape[0] != 2:
            raise ShapeMismatch(f"probs must be (2, V, V), got {self.probs.shape}")
        if self.valid_mask.shape != self.probs.shape[1:]:
            raise ShapeMismatch("valid_mask shape does not match probs")

    @property
    def side(self):
        return self.probs.shape[1]

    @classmethod
    def unknown(cls, side):
        return cls(np.zeros((2, side, side)), np.zeros((side, side), bool))

    def copy(self):
        return LocalOccupancy(self.probs.copy(), self.valid_mask.copy())


@dataclass
class GlobalOccupancy:
    probs: np.ndarray  # (2, G, G)
    spec: MapSpec
    touched: np.ndarray = field(default=None)

    @classmethod
    def blank(cls, spec, prior=0.5):
        g = spec.side
        return cls(np.full((2, g, g), prior), spec, np.zeros((g, g), bool))

    def __post_init__(self):
        g = self.spec.side
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (2, g, g):
            raise ShapeMismatch(f"expected probs of shape (2, {g}, {g}), got {self.probs.shape}")
        if self.touched is None:
            self.touched = np.zeros((g, g), bool)

    def copy(self):
        return GlobalOccupancy(self.probs.copy(), self.spec, self.touched.copy())


@dataclass
class GroundTruthLayout:
    cells: np.ndarray  # (G, G) uint8 of FREE / OCCUPIED / VOID
    spec: MapSpec

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.shape != (self.spec.side, self.spec.side):
            raise ShapeMismatch("layout cells do not match spec side")

    @property
    def blocked(self):
        return self.cells != FREE

    def cell_at(self, x, y):
        ix, iy, inside = world_to_cell_array(x, y, self.spec)
        if not inside:
            return VOID
        return int(self.cells[ix, iy])


def binarize(occ, threshold=DEFAULT_THRESHOLD):
    """Collapse a two-channel map to FREE / OCCUPIED / UNKNOWN.

    Cells a consumer must ignore (untouched global cells, invalid local cells)
    come out UNKNOWN.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p_occ, p_exp = occ.probs[0], occ.probs[1]
    out = np.full(p_occ.shape, UNKNOWN, np.uint8)
    explored = p_exp >= threshold
    if isinstance(occ, GlobalOccupancy):
        explored &= occ.touched
    else:
        explored &= occ.valid_mask
    out[explored & (p_occ >= threshold)] = OCCUPIED
    out[explored & (p_occ < threshold)] = FREE
    return out


def channel_bits(categories):
    """Re-embed categories as the (occupied, explored) indicator pair."""
    cats = np.asarray(categories)
    occ = (cats == OCCUPIED).astype(np.uint8)
    exp = ((cats == OCCUPIED) | (cats == FREE)).astype(np.uint8)
    return occ, exp


def cell_scores(pred_categories, gt_cells):
    """Per-cell count (0, 1 or 2) of channels matching the layout; 0 on void."""
    p_occ, p_exp = channel_bits(pred_categories)
    g_occ, g_exp = channel_bits(gt_cells)
    score = (p_occ == g_occ).astype(np.int64) + (p_exp == g_exp)
    score[np.asarray(gt_cells) == VOID] = 0
    return score


def map_accuracy(pred, gt, threshold=DEFAULT_THRESHOLD):
    """Number of non-void (cell, channel) pairs whose binarized state matches ``gt``.

    Multiply by ``cell_size ** 2`` for square metres.
    """
    if pred.spec != gt.spec:
        raise SpecMismatch("prediction and layout use different map specs")
    return int(cell_scores(binarize(pred, threshold), gt.cells).sum())


def class_scores(pred, gt, cls):
    """IoU and F1 of one class; ``gt`` cells marked VOID are excluded."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} != {gt.shape}")
    keep = gt != VOID
    p = (pred == cls) & keep
    g = (gt == cls) & keep
    inter = int(np.count_nonzero(p & g))
    union = int(np.count_nonzero(p | g))
    npred, ngt = int(np.count_nonzero(p)), int(np.count_nonzero(g))
    iou = inter / union if union else 0.0
    precision = inter / npred if npred else 0.0
    recall = inter / ngt if ngt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"iou": iou, "f1": f1}


def mean_iou(pred, gt):
    return 0.5 * (class_scores(pred, gt, FREE)["iou"] + class_scores(pred, gt, OCCUPIED)["iou"])


def local_offsets(side, cell_size, subsample=1):
    """Egocentric (forward, left) metres of every local (sub)cell centre.

    Returns arrays of shape ``(side, side, subsample**2)``.
    """
    h = side // 2
    r = np.arange(side)
    fwd = (h - r)[:, None].astype(np.float64) * cell_size
    left = (h - r)[None, :].astype(np.float64) * cell_size
    sub = ((np.arange(subsample) + 0.5) / subsample - 0.5) * cell_size
    # forward decreases with r, left decreases with c
    sf = -sub[:, None].repeat(subsample, 1).ravel()
    sl = -sub[None, :].repeat(subsample, 0).ravel()
    f = np.broadcast_to(fwd[:, :, None] + sf, (side, side, subsample * subsample))
    l = np.broadcast_to(left[:, :, None] + sl, (side, side, subsample * subsample))
    return f, l


def local_to_world(pose, fwd, left):
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return pose.x + c * fwd - s * left, pose.y + s * fwd + c * left


@dataclass
class Registration:
    """Global cells receiving a local map, with the averaged channel values."""

    ix: np.ndarray
    iy: np.ndarray
    occupied: np.ndarray
    explored: np.ndarray

    def __len__(self):
        return len(self.ix)

    def as_list(self):
        return [((int(a), int(b)), float(o), float(e))
                for a, b, o, e in zip(self.ix, self.iy, self.occupied, self.explored)]


def transform_local_to_global(local, pose_estimate, spec, subsample=1, local_cell_size=None):
    """Register the valid cells of ``local`` into ``spec``'s grid.

    Each valid local cell (or each of its ``subsample**2`` sub-points) is
    rotated by the pose heading and translated to the pose position; points
    leaving the grid are dropped, and values landing on one global cell are
    averaged.
    """
    if local_cell_size is not None and not math.isclose(local_cell_size, spec.cell_size):
        raise SpecMismatch("local and global cell sizes differ")
    from . import kernels

    flat, occ, exp = kernels.scatter_local(
        np.ascontiguousarray(local.valid_mask), np.ascontiguousarray(local.probs[0]),
        np.ascontiguousarray(local.probs[1]), float(spec.cell_size), int(subsample),
        float(pose_estimate.x), float(pose_estimate.y), float(pose_estimate.theta),
        int(spec.side), float(spec.origin[0]), float(spec.origin[1]))
    return Registration(flat // spec.side, flat % spec.side, occ, exp)
