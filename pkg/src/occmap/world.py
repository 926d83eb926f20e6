"""Procedural environments, depth simulation and anticipation targets."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import GenerationFailed, PoseInObstacle
from .grid import (FREE, OCCUPIED, VOID, GroundTruthLayout, LocalOccupancy, MapSpec, Pose,
                   local_offsets, local_to_world, world_to_cell_array)

DEFAULT_FOV = math.pi / 2
DEFAULT_RAYS = 128
DEFAULT_MAX_RANGE = 10.0
SENSE_RANGE = 3.0

FOUR_CONN = ndimage.generate_binary_structure(2, 1)
EIGHT_CONN = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class FloorplanParams:
    extent: float = 12.0
    room_count: tuple = (3, 6)
    corridor_width: float = 1.0
    obstacle_density: float = 0.08
    seed: int = 0
    cell_size: float = 0.05
    wall_thickness: float = 0.15
    margin: float = 0.5
    min_room: float = 2.0
    obstacle_gap: float = 0.45

    def __post_init__(self):
        if self.extent < 4.0:
            raise ValueError("extent must be at least 4 m")
        if self.corridor_width < 3 * self.cell_size:
            raise ValueError("corridor_width must be at least three cells")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ValueError("obstacle_density must lie in [0, 1)")
        lo, hi = self.rooms
        if lo < 1 or hi < lo:
            raise ValueError("room_count range is invalid")

    @property
    def rooms(self):
        rc = self.room_count
        if isinstance(rc, int):
            return rc, rc
        return int(rc[0]), int(rc[1])


def free_components(cells):
    labels, n = ndimage.label(cells == FREE, structure=FOUR_CONN)
    return labels, n


def is_connected(cells):
    return free_components(cells)[1] == 1


def _split_bsp(rect, n_rooms, rng, min_cells, wall, corridor):
    """Partition ``rect`` = (x0, x1, y0, y1) into leaf rectangles separated by walls."""
    leaves = [(rect, False)]
    while sum(1 for _, corr in leaves if not corr) < n_rooms:
        candidates = [i for i, (r, corr) in enumerate(leaves)
                      if not corr and max(r[1] - r[0], r[3] - r[2]) >= 2 * min_cells + wall]
        if not candidates:
            break
        i = max(candidates, key=lambda j: (leaves[j][0][1] - leaves[j][0][0])
                * (leaves[j][0][3] - leaves[j][0][2]))
        (x0, x1, y0, y1), _ = leaves.pop(i)
        along_x = (x1 - x0) >= (y1 - y0)
        lo, hi = (x0, x1) if along_x else (y0, y1)
        with_corr = (hi - lo) >= 2 * min_cells + 2 * wall + corridor and rng.random() < 0.4
        need = 2 * wall + corridor if with_corr else wall
        p = int(rng.integers(lo + min_cells, hi - min_cells - need + 1))
        parts = [((lo, p), False)]
        if with_corr:
            parts.append(((p + wall, p + wall + corridor), True))
            parts.append(((p + 2 * wall + corridor, hi), False))
        else:
            parts.append(((p + wall, hi), False))
        for (a, b), corr in parts:
            leaves.append(((a, b, y0, y1) if along_x else (x0, x1, a, b), corr))
    return leaves


def _adjacent(ra, rb, wall, door):
    """Door site between two leaves separated by exactly one wall, or None."""
    for first, second, vertical in ((ra, rb, True), (rb, ra, True), (ra, rb, False), (rb, ra, False)):
        f0, f1, g0, g1 = first
        s0, s1, t0, t1 = second
        if vertical and s0 == f1 + wall:
            lo, hi = max(g0, t0), min(g1, t1)
            if hi - lo >= door + 2:
                return ("x", f1, lo, hi)
        if not vertical and t0 == g1 + wall:
            lo, hi = max(f0, s0), min(f1, s1)
            if hi - lo >= door + 2:
                return ("y", g1, lo, hi)
    return None


def generate_floorplan(params, max_retries=20):
    """Rooms and corridors inside a square building; outside is void."""
    cs = params.cell_size
    ext = int(round(params.extent / cs))
    margin = int(round(params.margin / cs))
    wall = max(1, int(round(params.wall_thickness / cs)))
    door = max(3, int(round(params.corridor_width / cs)))
    min_cells = int(round(params.min_room / cs))
    gap = int(round(params.obstacle_gap / cs))
    side = ext + 2 * margin
    spec = MapSpec(cell_size=cs, side=side, origin=(0.0, 0.0))
    rng = np.random.default_rng(params.seed)
    lo, hi = params.rooms
    for _ in range(max_retries):
        n_rooms = int(rng.integers(lo, hi + 1))
        cells = np.full((side, side), VOID, np.uint8)
        b0, b1 = margin, margin + ext
        cells[b0:b1, b0:b1] = OCCUPIED
        inner = (b0 + wall, b1 - wall, b0 + wall, b1 - wall)
        leaves = _split_bsp(inner, n_rooms, rng, min_cells, wall, door)
        for (x0, x1, y0, y1), _ in leaves:
            cells[x0:x1, y0:y1] = FREE
        edges = []
        for i in range(len(leaves)):
            for j in range(i + 1, len(leaves)):
                site = _adjacent(leaves[i][0], leaves[j][0], wall, door)
                if site is not None:
                    edges.append((i, j, site))
        order = rng.permutation(len(edges))
        parent = list(range(len(leaves)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in order:
            i, j, (axis, at, slo, shi) = edges[e]
            ri, rj = find(i), find(j)
            if ri == rj and rng.random() > 0.25:
                continue
            parent[ri] = rj
            start = int(rng.integers(slo + 1, shi - door))
            if axis == "x":
                cells[at:at + wall, start:start + door] = FREE
            else:
                cells[start:start + door, at:at + wall] = FREE
        if len({find(i) for i in range(len(leaves))}) != 1:
            continue
        _place_obstacles(cells, leaves, params.obstacle_density, gap, rng, cs)
        if is_connected(cells):
            return GroundTruthLayout(cells, spec)
    raise GenerationFailed(f"no connected layout after {max_retries} attempts (seed {params.seed})")


def _place_obstacles(cells, leaves, density, gap, rng, cs):
    if density <= 0:
        return
    lo_size, hi_size = int(round(0.3 / cs)), int(round(1.0 / cs))
    for (x0, x1, y0, y1), corr in leaves:
        if corr:
            continue
        target = density * (x1 - x0) * (y1 - y0)
        placed = 0
        for _ in range(60):
            if placed >= target:
                break
            w = int(rng.integers(lo_size, hi_size + 1))
            h = int(rng.integers(lo_size, hi_size + 1))
            if x1 - x0 < w + 2 * gap + 2 or y1 - y0 < h + 2 * gap + 2:
                continue
            px = int(rng.integers(x0 + gap, x1 - gap - w + 1))
            py = int(rng.integers(y0 + gap, y1 - gap - h + 1))
            zone = cells[px - gap:px + w + gap, py - gap:py + h + gap]
            if np.any(zone != FREE):
                continue
            trial = cells.copy()
            trial[px:px + w, py:py + h] = OCCUPIED
            if not is_connected(trial):
                continue
            cells[px:px + w, py:py + h] = OCCUPIED
            placed += w * h


@dataclass(frozen=True)
class DepthScan:
    ranges: np.ndarray
    fov: float
    pose_at_capture: Pose
    max_range: float = DEFAULT_MAX_RANGE

    @property
    def n_rays(self):
        return len(self.ranges)

    @property
    def angles(self):
        """Ray bearings relative to the heading."""
        return ray_angles(self.fov, self.n_rays)


def ray_angles(fov, n_rays):
    if n_rays == 1:
        return np.zeros(1)
    return fov * (np.arange(n_rays) / (n_rays - 1) - 0.5)


def check_free(layout, pose):
    if layout.cell_at(pose.x, pose.y) != FREE:
        raise PoseInObstacle(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in free space")


def simulate_depth_scan(layout, true_pose, fov=DEFAULT_FOV, n_rays=DEFAULT_RAYS,
                        max_range=DEFAULT_MAX_RANGE):
    """Range to the first occupied or void cell along each ray; +inf past ``max_range``."""
    check_free(layout, true_pose)
    angles = true_pose.theta + ray_angles(fov, n_rays)
    spec = layout.spec
    ranges = kernels.raycast(layout.blocked, spec.origin[0], spec.origin[1], spec.cell_size,
                             true_pose.x, true_pose.y, np.cos(angles), np.sin(angles), max_range)
    return DepthScan(ranges, fov, true_pose, max_range)


def crop_egocentric(layout, pose, side):
    """Layout category under every egocentric cell centre; off-grid reads as void."""
    fwd, left = local_offsets(side, layout.spec.cell_size)
    wx, wy = local_to_world(pose, fwd[:, :, 0], left[:, :, 0])
    ix, iy, inside = world_to_cell_array(wx, wy, layout.spec)
    out = np.full((side, side), VOID, np.uint8)
    out[inside] = layout.cells[ix[inside], iy[inside]]
    return out


def grow_mask(seed, void, iterations=2):
    """Hole-fill then 3x3 dilation, repeated; void never enters the result."""
    mask = seed & ~void
    for _ in range(iterations):
        mask = ndimage.binary_fill_holes(mask | void, structure=FOUR_CONN) & ~void
        mask = ndimage.binary_dilation(mask, structure=EIGHT_CONN) & ~void
    return mask


def target_from_crop(crop, mask):
    probs = np.zeros((2,) + crop.shape)
    probs[0][mask & (crop == OCCUPIED)] = 1.0
    probs[1][mask] = 1.0
    return LocalOccupancy(probs, mask)


def gt_anticipation_target(layout, true_pose, side, fov=DEFAULT_FOV, n_rays=DEFAULT_RAYS,
                           sense_range=SENSE_RANGE, scan=None):
    """Layout values around what is visible from ``true_pose``.

    Returns ``(target, visible)``; ``target.valid_mask`` is the grown mask.
    """
    from .sensor import project_scan

    if scan is None:
        scan = simulate_depth_scan(layout, true_pose, fov, n_rays)
    else:
        check_free(layout, true_pose)
    visible = project_scan(scan, side, layout.spec.cell_size, sense_range)
    crop = crop_egocentric(layout, true_pose, side)
    mask = grow_mask(visible.valid_mask, crop == VOID)
    return target_from_crop(crop, mask), visible


def sample_free_pose(layout, rng, clearance=0.5):
    """Uniform free cell at least ``clearance`` metres from any blocked cell."""
    candidates = clearance_cells(layout, clearance)
    if len(candidates) == 0:
        return None
    ix, iy = candidates[int(rng.integers(len(candidates)))]
    x, y = layout.spec.cell_center(ix, iy)
    theta = float(rng.uniform(-math.pi, math.pi))
    return Pose(x, y, theta)


def clearance_cells(layout, clearance):
    dist = ndimage.distance_transform_edt(layout.cells == FREE) * layout.spec.cell_size
    return np.argwhere(dist >= clearance + 0.5 * layout.spec.cell_size)
