"""Episode orchestration: exploration and PointNav loops, goal selection, SPL."""

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import ndimage

from .anticipate import DEFAULT_TAU, VisibleOnly, binary_entropy, entropy_filter
from .errors import InvalidStart, NonpositiveShortest, NoPath, StartBlocked
from .grid import (DEFAULT_THRESHOLD, FREE, OCCUPIED, UNKNOWN, LocalOccupancy, Pose, binarize,
                   class_scores, transform_local_to_global, world_to_cell_array)
from .mapper import (MapperState, area_seen, collision_cell, mark_collision, register,
                     update_area_seen)
from .plan import (LOOKAHEAD, Traversability, astar, heading_error, geodesic_distances, inflate, local_controller,
                   visible_waypoint)
from .sensor import (FORWARD_STEP, NOISE_OFF, TURN_ANGLE, Action, NoiseConfig, apply_actuation, episode_signs,
                     integrate_odometry, project_scan, read_odometry)
from .world import (DEFAULT_FOV, DEFAULT_RAYS, SENSE_RANGE, sample_free_pose,
                    simulate_depth_scan)

POLICIES = ("frontier", "anticipation", "random")
SUCCESS_RADIUS = 0.2
GOAL_REACHED = 0.25
BLACKLIST_RADIUS = 6  # cells, Manhattan
BLACKLIST_TTL = 150  # steps
STALL_TURNS = 36  # a full turn in place without moving
STALL_BUMPS = 10
HYST = math.pi / 2  # rear sector where a turn in progress is kept
FOOTPRINT = ndimage.generate_binary_structure(2, 1)


@dataclass
class EpisodeConfig:
    T: int = 1000
    delta: int = 25
    anticipator: Any = field(default_factory=VisibleOnly)
    noise: NoiseConfig = NOISE_OFF
    policy: str = "frontier"
    seed: int = 0
    tau: Optional[float] = DEFAULT_TAU
    local_side: int = 101
    fov: float = DEFAULT_FOV
    n_rays: int = DEFAULT_RAYS
    sense_range: float = SENSE_RANGE
    alpha: float = 0.9
    threshold: float = DEFAULT_THRESHOLD
    inflation: float = 0.1
    astar_weight: float = 1.0
    metrics_every: int = 25
    frontier_min_size: int = 4
    start_clearance: float = 0.5
    start: Optional[Pose] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")


@dataclass
class Observation:
    """What an anticipator may look at.  Only the GT fixture reads ``layout``/``true_pose``."""

    scan: Any
    true_pose: Pose
    layout: Any


@dataclass
class EpisodeResult:
    seed: int
    steps: list
    metrics: list
    initial_accuracy: int
    final_accuracy: int
    final_map: Any = field(repr=False, default=None)
    start: Optional[Pose] = None

    @property
    def reward_sum(self):
        return sum(s["reward"] for s in self.steps)

    @property
    def final_iou(self):
        return self.metrics[-1]["iou"] if self.metrics else 0.0


@dataclass
class NavResult:
    success: bool
    spl: float
    steps: int
    final_distance: float
    shortest: float = 0.0
    path_length: float = 0.0
    reachable: bool = True


def spl(success, shortest, actual):
    if not shortest > 0:
        raise NonpositiveShortest("shortest path length must be positive")
    if actual < 0:
        raise ValueError("actual path length must be non-negative")
    if not success:
        return 0.0
    return shortest / max(actual, shortest)


def frontier_goals(global_map, threshold=DEFAULT_THRESHOLD, min_size=1):
    """One representative per 8-connected cluster of free cells bordering unexplored space."""
    cats = binarize(global_map, threshold)
    return _frontiers(cats, min_size)


def _frontiers(cats, min_size=1):
    unknown = cats == UNKNOWN
    near_unknown = ndimage.binary_dilation(unknown, structure=ndimage.generate_binary_structure(2, 1))
    frontier = (cats == FREE) & near_unknown
    labels, n = ndimage.label(frontier, structure=np.ones((3, 3), bool))
    reps = []
    for lab in range(1, n + 1):
        members = np.argwhere(labels == lab)
        if len(members) < min_size:
            continue
        centroid = members.mean(axis=0)
        d = ((members - centroid) ** 2).sum(axis=1)
        best = members[int(np.argmin(d))]
        reps.append((int(best[0]), int(best[1])))
    return reps


def travel_steps(pose, point, geodesic_m):
    """Actions needed to face ``point`` and then cover ``geodesic_m``."""
    turn = abs(heading_error(pose, point)) if geodesic_m > 0 else 0.0
    return geodesic_m / FORWARD_STEP + turn / TURN_ANGLE


def mapped_area(cats, gt_cells, cell_size):
    """Square metres of explored map (free or occupied) agreeing with the layout."""
    known = (cats == FREE) | (cats == OCCUPIED)
    return float(np.count_nonzero(known & (cats == gt_cells))) * cell_size ** 2


def uncertainty_mass(global_map, goal, sensing_range=SENSE_RANGE):
    """Sum of occupied-channel binary entropy over cells within ``sensing_range`` of ``goal``."""
    spec = global_map.spec
    r = int(math.ceil(sensing_range / spec.cell_size))
    gx, gy = goal
    x0, x1 = max(0, gx - r), min(spec.side, gx + r + 1)
    y0, y1 = max(0, gy - r), min(spec.side, gy + r + 1)
    xx, yy = np.mgrid[x0:x1, y0:y1]
    disc = (xx - gx) ** 2 + (yy - gy) ** 2 <= (sensing_range / spec.cell_size) ** 2
    p = np.where(global_map.touched[x0:x1, y0:y1], global_map.probs[0, x0:x1, y0:y1], 0.5)
    return float(binary_entropy(p)[disc].sum())


def score_goal_anticipation(global_map, goal, geodesic_m, sensing_range=SENSE_RANGE):
    """Uncertainty within sensor reach of ``goal``, discounted by 1 + travel distance (m)."""
    if not math.isfinite(geodesic_m):
        return -math.inf
    return uncertainty_mass(global_map, goal, sensing_range) / (1.0 + geodesic_m)


def _cell_of(spec, x, y):
    ix, iy, inside = world_to_cell_array(x, y, spec)
    if not inside:
        return None
    return int(ix), int(iy)


def _nearest_passable(trav, cell):
    p = trav.passable
    if cell is not None and p[cell]:
        return cell
    if not p.any():
        return None
    _, idx = ndimage.distance_transform_edt(~p, return_indices=True)
    if cell is None:
        return None
    return int(idx[0][cell]), int(idx[1][cell])


def _cell_center(spec, cell):
    return spec.cell_center(*cell)


class _Agent:
    """Mutable state of one episode: poses, map, rng, bookkeeping."""

    def __init__(self, layout, config, start):
        self.layout = layout
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.signs = episode_signs(config.noise, self.rng)
        self.true = start
        self.est = start
        self.state = MapperState.start(layout.spec, start, gt=layout, alpha=config.alpha,
                                       threshold=config.threshold)
        self.initial_accuracy = self.state.last_accuracy
        self.steps = []
        self.metrics = []
        self.path_length = 0.0
        g = layout.spec.side
        self.visited = np.zeros((g, g), bool)
        self.observed_occ = np.zeros((g, g), bool)
        self.turns = 0
        self.bumps = 0
        self._visit()

    def _visit(self):
        cell = _cell_of(self.spec, self.est.x, self.est.y)
        if cell is not None:
            self.visited[cell] = True

    @property
    def spec(self):
        return self.layout.spec

    def sense(self):
        c = self.config
        scan = simulate_depth_scan(self.layout, self.true, c.fov, c.n_rays)
        visible = project_scan(scan, c.local_side, self.spec.cell_size, c.sense_range)
        pred = c.anticipator(visible, Observation(scan, self.true, self.layout))
        if c.tau is not None:
            pred = entropy_filter(pred, c.tau)
        register(self.state, pred, self.est)
        hits = LocalOccupancy(visible.probs, visible.valid_mask & (visible.probs[0] >= 0.5))
        reg = transform_local_to_global(hits, self.est, self.spec, self.state.subsample)
        self.observed_occ[reg.ix, reg.iy] = True
        update_area_seen(self.state, scan, self.true)
        return scan

    def traversability(self, relaxed=False):
        """Inflated planning map.

        ``relaxed`` keeps only obstacles seen directly and inflates by a single cell: the
        fallback when predicted walls, or walls thickened by registration, leave
        no frontier reachable.
        """
        cats = binarize(self.state.global_map, self.config.threshold)
        plan = cats
        if relaxed:
            plan = cats.copy()
            plan[(cats == OCCUPIED) & ~self.observed_occ] = FREE
        radius = self.spec.cell_size if relaxed else self.config.inflation
        trav = inflate(plan, radius, self.spec.cell_size)
        # the agent has stood on these cells, whatever the anticipator now says
        foot = ndimage.binary_dilation(self.visited, structure=FOOTPRINT)
        return cats, Traversability(trav.passable | foot, trav.radius)

    def plan_start(self, trav):
        return _nearest_passable(trav, _cell_of(self.spec, self.est.x, self.est.y))

    def waypoint(self, path, trav, pstart):
        here = _cell_of(self.spec, self.est.x, self.est.y)
        if here is None or not trav.passable[here]:
            # inside the inflated band: step back out first
            return _cell_center(self.spec, pstart)
        return visible_waypoint(path, self.est, self.spec, trav, LOOKAHEAD)

    def steer(self, wp):
        """Local controller with hysteresis against turning back and forth.

        A reversal of the previous turn becomes a forward step when the error is
        under one turn increment, and is refused while the waypoint is behind.

        Turning reshapes the anticipated map around the agent, which can swing
        a rear waypoint from side to side; committing to one direction ends the
        dithering.
        """
        action = local_controller(self.est, wp)
        last = self.steps[-1]["action"] if self.steps else None
        turning = (Action.TURN_LEFT, Action.TURN_RIGHT)
        if action in turning and last in turning and action != last:
            e = abs(heading_error(self.est, wp))
            if e < TURN_ANGLE:
                # reversing would only overshoot the other way
                return Action.MOVE_FORWARD
            if e >= HYST:
                return Action(last)
        return action

    def act(self, action):
        c = self.config
        prev = self.true
        self.true, collided = apply_actuation(self.layout, self.true, action, c.noise, self.rng)
        reading = read_odometry(prev, self.true, c.noise, self.rng, self.signs)
        self.est = integrate_odometry(self.est, reading)
        self.path_length += self.true.distance(prev)
        self._visit()
        self.turns = self.turns + 1 if action in (Action.TURN_LEFT, Action.TURN_RIGHT) else 0
        if collided:
            mark_collision(self.state, self.est)
            cell = collision_cell(self.state, self.est)
            if self.spec.contains(*cell):
                self.observed_occ[cell] = True
        self.bumps = self.bumps + 1 if collided else 0
        return collided

    def log_step(self, t, action, reward, collided, local_reward):
        self.steps.append({
            "t": t,
            "action": int(action),
            "true": [self.true.x, self.true.y, self.true.theta],
            "est": [self.est.x, self.est.y, self.est.theta],
            "reward": int(reward),
            "local_reward": float(local_reward),
            "collided": bool(collided),
        })

    def sample_metrics(self, t):
        s = self.state
        cats = binarize(s.global_map, s.threshold)
        free = class_scores(cats, self.layout.cells, FREE)
        occ = class_scores(cats, self.layout.cells, OCCUPIED)
        cs2 = self.spec.cell_size ** 2
        self.metrics.append({
            "t": t,
            "accuracy": int(s.last_accuracy),
            "accuracy_m2": s.last_accuracy * cs2,
            "mapped_m2": mapped_area(cats, self.layout.cells, self.spec.cell_size),
            "iou": 0.5 * (free["iou"] + occ["iou"]),
            "iou_free": free["iou"],
            "iou_occ": occ["iou"],
            "f1_free": free["f1"],
            "f1_occ": occ["f1"],
            "area_seen": area_seen(s),
        })


def _start_pose(layout, config, rng):
    if config.start is not None:
        if layout.cell_at(config.start.x, config.start.y) != FREE:
            raise InvalidStart("configured start is not in free space")
        return config.start
    pose = sample_free_pose(layout, rng, config.start_clearance)
    if pose is None:
        raise InvalidStart("no free cell with the required clearance")
    return pose


def _select_goal(agent, trav, start, blacklist):
    c = agent.config
    spec = agent.spec
    dist = geodesic_distances(trav, start)
    if c.policy == "random":
        cand = np.argwhere(np.isfinite(dist) & (dist * spec.cell_size > 1.0))
        if len(cand) == 0:
            return None
        g = cand[int(agent.rng.integers(len(cand)))]
        return (int(g[0]), int(g[1]))
    reps = _frontiers(binarize(agent.state.global_map, c.threshold), c.frontier_min_size)
    t = len(agent.steps)
    fresh, stale = [], []
    for r in reps:
        cell = _nearest_passable(trav, r)
        if cell is None or not math.isfinite(dist[cell]):
            continue
        banned = [tb for b, tb in blacklist
                  if abs(cell[0] - b[0]) + abs(cell[1] - b[1]) <= BLACKLIST_RADIUS]
        if not banned:
            fresh.append(cell)
        elif t - max(banned) >= BLACKLIST_TTL and dist[cell] > BLACKLIST_RADIUS:
            stale.append(cell)
    # frontiers that survived an earlier visit get another chance once their ban expires
    cands = fresh or stale
    if not cands:
        return None
    geo = [float(dist[cell]) * spec.cell_size for cell in cands]
    cost = [travel_steps(agent.est, _cell_center(spec, cell), g) for cell, g in zip(cands, geo)]
    nearest = cands[int(np.argmin(cost))]
    if c.policy == "frontier":
        return nearest
    scores = [score_goal_anticipation(agent.state.global_map, cell, g, c.sense_range)
              for cell, g in zip(cands, geo)]
    best = int(np.argmax(scores))
    if scores[best] <= 1e-6:
        return nearest
    return cands[best]


def run_exploration(layout, config):
    """Sense, anticipate, filter, register, plan and act for up to ``config.T`` steps.

    Ends early once no reachable frontier remains.
    """
    rng0 = np.random.default_rng(config.seed)
    start = _start_pose(layout, config, rng0)
    agent = _Agent(layout, config, start)
    spec = layout.spec
    goal = None
    goal_age = 0
    relaxed = False
    blacklist = []
    for t in range(1, config.T + 1):
        acc0 = agent.state.last_accuracy
        agent.sense()
        trav = None
        action = Action.STOP
        path = None
        if goal is not None and (agent.turns >= STALL_TURNS or agent.bumps >= STALL_BUMPS):
            blacklist.append((goal, len(agent.steps)))
            goal = None
            agent.turns = agent.bumps = 0
        for _ in range(4):
            if goal is None or goal_age >= config.delta:
                goal = None
                goal_age = 0
                # predicted walls may seal the agent in; fall back to observed obstacles
                for mode in (False, True):
                    _, trav = agent.traversability(mode)
                    pstart = agent.plan_start(trav)
                    goal = _select_goal(agent, trav, pstart, blacklist) if pstart else None
                    if goal is not None:
                        relaxed = mode
                        break
            if goal is None:
                break
            if trav is None:
                _, trav = agent.traversability(relaxed)
                pstart = agent.plan_start(trav)
            gx, gy = _cell_center(spec, goal)
            if math.hypot(gx - agent.est.x, gy - agent.est.y) <= GOAL_REACHED:
                blacklist.append((goal, len(agent.steps)))
                goal = None
                continue
            try:
                if pstart is None:
                    raise StartBlocked("no passable cell")
                path = astar(trav, pstart, goal, config.astar_weight)
                break
            except (NoPath, StartBlocked):
                blacklist.append((goal, len(agent.steps)))
                goal = None
        if goal is None and path is None:
            agent.log_step(t, Action.STOP, agent.state.last_accuracy - acc0, False, 0.0)
            agent.sample_metrics(t)
            break
        wp = agent.waypoint(path, trav, pstart)
        d_before = math.hypot(wp[0] - agent.est.x, wp[1] - agent.est.y)
        action = agent.steer(wp)
        collided = agent.act(action)
        d_after = math.hypot(wp[0] - agent.est.x, wp[1] - agent.est.y)
        goal_age += 1
        agent.log_step(t, action, agent.state.last_accuracy - acc0, collided, d_before - d_after)
        if t % config.metrics_every == 0 or t == config.T:
            agent.sample_metrics(t)
    if not agent.metrics or agent.metrics[-1]["t"] != agent.steps[-1]["t"]:
        agent.sample_metrics(agent.steps[-1]["t"])
    return EpisodeResult(config.seed, agent.steps, agent.metrics, agent.initial_accuracy,
                         agent.state.last_accuracy, agent.state.global_map, start)


def shortest_path_length(layout, start, goal_xy, clearance=None):
    """Geodesic metres between two points on the ground-truth layout (one-cell body clearance)."""
    spec = layout.spec
    clearance = spec.cell_size if clearance is None else clearance
    trav = inflate(layout.cells, clearance, spec.cell_size)
    s = _nearest_passable(trav, _cell_of(spec, start.x, start.y))
    g = _nearest_passable(trav, _cell_of(spec, *goal_xy))
    if s is None or g is None:
        return math.inf
    try:
        return astar(trav, s, g, 1.0).cost * spec.cell_size
    except NoPath:
        return math.inf


def run_pointnav(layout, goal, config):
    """Navigate to a fixed world point; Stop when the estimate is within the success radius."""
    rng0 = np.random.default_rng(config.seed)
    start = _start_pose(layout, config, rng0)
    agent = _Agent(layout, config, start)
    spec = layout.spec
    goal = (float(goal[0]), float(goal[1]))
    shortest = shortest_path_length(layout, start, goal)
    reachable = math.isfinite(shortest)
    goal_cell = _cell_of(spec, *goal)
    stopped = False
    steps = 0
    for t in range(1, config.T + 1):
        acc0 = agent.state.last_accuracy
        agent.sense()
        steps = t
        if math.hypot(goal[0] - agent.est.x, goal[1] - agent.est.y) <= SUCCESS_RADIUS:
            agent.log_step(t, Action.STOP, agent.state.last_accuracy - acc0, False, 0.0)
            stopped = True
            break
        _, trav = agent.traversability()
        pstart = agent.plan_start(trav)
        target = _nearest_passable(trav, goal_cell) if goal_cell else None
        wp = goal
        if pstart is not None and target is not None:
            try:
                path = astar(trav, pstart, target, config.astar_weight)
                if path.cost * spec.cell_size > LOOKAHEAD:
                    wp = agent.waypoint(path, trav, pstart)
            except (NoPath, StartBlocked):
                pass
        d_before = math.hypot(goal[0] - agent.est.x, goal[1] - agent.est.y)
        action = agent.steer(wp)
        collided = agent.act(action)
        d_after = math.hypot(goal[0] - agent.est.x, goal[1] - agent.est.y)
        agent.log_step(t, action, agent.state.last_accuracy - acc0, collided, d_before - d_after)
    final = math.hypot(goal[0] - agent.true.x, goal[1] - agent.true.y)
    success = stopped and final <= SUCCESS_RADIUS
    score = spl(success, shortest, agent.path_length) if reachable and shortest > 0 else 0.0
    return NavResult(success, score, steps, final, shortest, agent.path_length, reachable)
