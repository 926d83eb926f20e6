"""Command-line entry points, experiment configs, suites and reports.

File formats live in :mod:`occmap.io`; this module wires them to the library.
"""

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import io as oio
from .anticipate import (GroundTruthAnticipator, Heuristic, PatchAnticipator, TrainConfig,
                         VisibleOnly, train_patch)
from .errors import EmptyDataset, NoFreePoses, OccMapError, ParseError
from .explore import (EpisodeConfig, _start_pose, run_exploration, run_pointnav,
                      shortest_path_length)
from .grid import (FREE, OCCUPIED, VOID, GroundTruthLayout, LocalOccupancy, MapSpec, Pose,
                   binarize, class_scores)
from .sensor import NOISE_OFF, NoiseConfig, TruncGaussParams
from .world import (FloorplanParams, clearance_cells, generate_floorplan,
                    gt_anticipation_target)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
REPORT_T = (250, 500, 1000)


class UsageError(OccMapError):
    pass


# -- layouts and datasets -----------------------------------------------------

def empty_room(size, cell_size=0.05, wall=0.1):
    """Axis-aligned room with ``size`` metres of free interior, walls around it.

    The interior's lower corner sits at world ``(0, 0)``.
    """
    inner = int(round(size / cell_size))
    w = max(1, int(round(wall / cell_size)))
    side = inner + 2 * w
    cells = np.full((side, side), OCCUPIED, np.uint8)
    cells[w:w + inner, w:w + inner] = FREE
    return GroundTruthLayout(cells, MapSpec(cell_size, side, (-w * cell_size, -w * cell_size)))


def dataset_poses(layout, spacing=1.0, clearance=0.5):
    """Points of a ``spacing`` grid anchored at the free region's lower corner.

    Only points at least ``clearance`` metres from any blocked cell survive.
    """
    spec = layout.spec
    free = np.argwhere(layout.cells == FREE)
    if len(free) == 0:
        raise NoFreePoses("layout has no free cells")
    x0 = spec.origin[0] + free[:, 0].min() * spec.cell_size
    y0 = spec.origin[1] + free[:, 1].min() * spec.cell_size
    x1 = spec.origin[0] + (free[:, 0].max() + 1) * spec.cell_size
    y1 = spec.origin[1] + (free[:, 1].max() + 1) * spec.cell_size
    ok = np.zeros(layout.cells.shape, bool)
    cc = clearance_cells(layout, clearance)
    ok[cc[:, 0], cc[:, 1]] = True
    eps = 1e-9
    pts = []
    for i in range(int(math.floor((x1 - x0) / spacing + eps)) + 1):
        for j in range(int(math.floor((y1 - y0) / spacing + eps)) + 1):
            x, y = x0 + i * spacing, y0 + j * spacing
            ix = math.floor((x - spec.origin[0]) / spec.cell_size + eps)
            iy = math.floor((y - spec.origin[1]) / spec.cell_size + eps)
            # a grid point on a cell corner needs clearance from all four neighbours
            cells = [(ix - a, iy - b) for a in (0, 1) for b in (0, 1)]
            if all(spec.contains(*c) and ok[c] for c in cells):
                pts.append((x, y))
    if not pts:
        raise NoFreePoses("no grid point has the required clearance")
    return pts


def make_pairs(layout, samples, rng, side=101, clearance=0.5):
    pts = dataset_poses(layout, clearance=clearance)
    if samples and samples < len(pts):
        keep = np.sort(rng.choice(len(pts), size=samples, replace=False))
        pts = [pts[i] for i in keep]
    pairs = []
    for x, y in pts:
        pose = Pose(x, y, float(rng.uniform(-math.pi, math.pi)))
        target, visible = gt_anticipation_target(layout, pose, side)
        pairs.append((visible, target))
    return pairs


def layout_for(params, seed):
    return generate_floorplan(replace(params, seed=seed))


def build_dataset(params, n_layouts, samples, seed, side=101):
    pairs = []
    for i in range(n_layouts):
        layout = layout_for(params, seed + i)
        rng = np.random.default_rng(seed + i)
        pairs += make_pairs(layout, samples, rng, side)
    return pairs


# -- anticipator evaluation -----------------------------------------------------

class AllFree:
    name = "all-free"

    def __call__(self, visible, obs=None):
        probs = np.zeros((2,) + visible.valid_mask.shape)
        probs[1] = 1.0
        return LocalOccupancy(probs, np.ones(visible.valid_mask.shape, bool))


def eval_anticipator(anticipator, pairs):
    """Free / occupied / mean IoU and F1 (percent) over the targets' defined cells."""
    if not pairs:
        raise EmptyDataset("evaluation set is empty")
    preds, gts = [], []
    for visible, target in pairs:
        pred = binarize(anticipator(visible, None))
        gt = np.where(target.valid_mask, np.where(target.probs[0] >= 0.5, OCCUPIED, FREE), VOID)
        preds.append(pred)
        gts.append(gt.astype(np.uint8))
    pred = np.concatenate(preds)
    gt = np.concatenate(gts)
    free = class_scores(pred, gt, FREE)
    occ = class_scores(pred, gt, OCCUPIED)
    row = {}
    for metric in ("iou", "f1"):
        row[f"{metric}_free"] = 100 * free[metric]
        row[f"{metric}_occ"] = 100 * occ[metric]
        row[f"{metric}_mean"] = 50 * (free[metric] + occ[metric])
    return row


def format_eval_table(rows):
    head = f"{'method':<12} {'IoU free':>9} {'IoU occ':>8} {'IoU mean':>9} " \
           f"{'F1 free':>8} {'F1 occ':>7} {'F1 mean':>8}"
    lines = [head]
    for name, r in rows:
        lines.append(f"{name:<12} {r['iou_free']:9.2f} {r['iou_occ']:8.2f} {r['iou_mean']:9.2f} "
                     f"{r['f1_free']:8.2f} {r['f1_occ']:7.2f} {r['f1_mean']:8.2f}")
    return "\n".join(lines) + "\n"


# -- experiment configs ---------------------------------------------------------

def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class ExperimentConfig:
    layout_file: str = None
    floorplan: FloorplanParams = field(default_factory=FloorplanParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    anticipator: str = "visible"
    out: str = "results"
    episodes: int = 1
    seed: int = 0
    goal_min: float = 2.0

    def make_anticipator(self):
        return parse_anticipator(self.anticipator)


def parse_anticipator(spec):
    if spec == "visible":
        return VisibleOnly()
    if spec == "heuristic":
        return Heuristic()
    if spec == "gt":
        return GroundTruthAnticipator()
    if spec.startswith("patch:"):
        return PatchAnticipator(oio.load_model(spec[len("patch:"):]))
    raise UsageError(f"unknown anticipator {spec!r}")


def _noise_from(kv):
    if not _bool(kv.get("noise.enabled", "off")):
        return NOISE_OFF
    base = NoiseConfig()

    def tg(name, dflt, deg):
        mean = kv.get(f"noise.{name}.mean")
        std = kv.get(f"noise.{name}.std")
        if mean is None and std is None:
            return dflt
        m = float(mean) if mean is not None else (math.degrees(dflt.mean) if deg else dflt.mean)
        s = float(std) if std is not None else (math.degrees(dflt.std) if deg else dflt.std)
        if deg:
            m, s = math.radians(m), math.radians(s)
        return TruncGaussParams(m, s)

    return NoiseConfig(
        odom_translation=tg("odom_translation", base.odom_translation, False),
        odom_rotation=tg("odom_rotation", base.odom_rotation, True),
        act_translation=tg("act_translation", base.act_translation, False),
        act_rotation=tg("act_rotation", base.act_rotation, True),
        enabled=True,
        actuation=_bool(kv.get("noise.actuation", "on")),
        odometry=_bool(kv.get("noise.odometry", "on")),
        bias_sign=int(kv.get("noise.bias_sign", 0)))


_EPISODE_KEYS = {"T": int, "delta": int, "policy": str, "inflation": float, "alpha": float,
                 "astar_weight": float, "metrics_every": int, "threshold": float,
                 "local_side": int, "n_rays": int, "sense_range": float,
                 "frontier_min_size": int, "start_clearance": float}
_FLOORPLAN_KEYS = {"extent": float, "corridor_width": float, "obstacle_density": float,
                   "cell_size": float, "wall_thickness": float, "margin": float,
                   "min_room": float}


def config_from_mapping(kv, base_dir="."):
    kv = dict(kv)
    known = {"layout.file", "layout.rooms_min", "layout.rooms_max", "anticipator", "out",
             "episodes", "seed", "episode.tau", "episode.fov", "pointnav.goal_min"}
    known |= {f"episode.{k}" for k in _EPISODE_KEYS} | {f"layout.{k}" for k in _FLOORPLAN_KEYS}
    for key in kv:
        if key not in known and not key.startswith("noise."):
            raise ParseError(f"unknown config key {key!r}", 0)
    ep = {}
    for k, typ in _EPISODE_KEYS.items():
        if f"episode.{k}" in kv:
            ep[k] = typ(kv[f"episode.{k}"])
    if "episode.tau" in kv:
        ep["tau"] = None if kv["episode.tau"].lower() == "none" else float(kv["episode.tau"])
    if "episode.fov" in kv:
        ep["fov"] = math.radians(float(kv["episode.fov"]))
    ep["noise"] = _noise_from(kv)
    fp = {k: typ(kv[f"layout.{k}"]) for k, typ in _FLOORPLAN_KEYS.items() if f"layout.{k}" in kv}
    if "layout.rooms_min" in kv or "layout.rooms_max" in kv:
        lo = int(kv.get("layout.rooms_min", kv.get("layout.rooms_max")))
        hi = int(kv.get("layout.rooms_max", lo))
        fp["room_count"] = (lo, hi)
    layout_file = kv.get("layout.file")
    if layout_file is not None:
        layout_file = os.path.join(base_dir, layout_file)
        if not os.path.exists(layout_file):
            raise FileNotFoundError(layout_file)
    anticipator = kv.get("anticipator", "visible")
    if anticipator.startswith("patch:"):
        path = os.path.join(base_dir, anticipator[len("patch:"):])
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        anticipator = "patch:" + path
    return ExperimentConfig(layout_file=layout_file, floorplan=FloorplanParams(**fp),
                            episode=EpisodeConfig(**ep), anticipator=anticipator,
                            out=kv.get("out", "results"), episodes=int(kv.get("episodes", 1)),
                            seed=int(kv.get("seed", 0)),
                            goal_min=float(kv.get("pointnav.goal_min", 2.0)))


# -- suites ---------------------------------------------------------------------

def _episode_layout(cfg, seed):
    if cfg.layout_file:
        return oio.load_layout(cfg.layout_file)
    return layout_for(cfg.floorplan, seed)


def _noise_tag(noise):
    return "on" if noise.enabled else "off"


def explore_record(cfg, seed):
    rec = {"kind": "explore", "seed": seed, "anticipator": cfg.anticipator.split("/")[-1],
           "policy": cfg.episode.policy, "noise": _noise_tag(cfg.episode.noise)}
    try:
        layout = _episode_layout(cfg, seed)
        ep = replace(cfg.episode, seed=seed, anticipator=cfg.make_anticipator())
        res = run_exploration(layout, ep)
    except Exception as exc:  # one bad episode must not sink the suite
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    rec.update({
        "steps": len(res.steps),
        "cell_size": layout.spec.cell_size,
        "initial_accuracy": res.initial_accuracy,
        "final_accuracy": res.final_accuracy,
        "reward_sum": res.reward_sum,
        "collisions": sum(1 for s in res.steps if s["collided"]),
        "actions": "".join(str(int(s["action"])) for s in res.steps),
        "trajectory": [[round(v, 6) for v in s["true"][:2]] for s in res.steps],
        "metrics": res.metrics,
    })
    return rec


def _pointnav_goal(layout, start, rng, goal_min):
    cand = clearance_cells(layout, 0.3)
    order = rng.permutation(len(cand))
    for i in order[:200]:
        gx, gy = layout.spec.cell_center(*cand[i])
        d = shortest_path_length(layout, start, (gx, gy))
        if goal_min <= d < math.inf:
            return (gx, gy)
    return None


def pointnav_record(cfg, seed):
    rec = {"kind": "pointnav", "seed": seed, "anticipator": cfg.anticipator.split("/")[-1],
           "noise": _noise_tag(cfg.episode.noise)}
    try:
        layout = _episode_layout(cfg, seed)
        ep = replace(cfg.episode, seed=seed, anticipator=cfg.make_anticipator())
        start = _start_pose(layout, ep, np.random.default_rng(seed))
        goal = _pointnav_goal(layout, start, np.random.default_rng(seed + 1_000_003), cfg.goal_min)
        if goal is None:
            raise NoFreePoses("no reachable goal at the required distance")
        res = run_pointnav(layout, goal, replace(ep, start=start))
    except Exception as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    rec.update({"goal": list(goal), "success": res.success, "spl": res.spl,
                "steps": res.steps, "final_distance": res.final_distance,
                "shortest": res.shortest, "path_length": res.path_length})
    return rec


def _run_one(args):
    kind, cfg, seed = args
    return (explore_record if kind == "explore" else pointnav_record)(cfg, seed)


def run_suite(kind, cfg, jobs=1):
    """Seeds ``cfg.seed + i``; records come back ordered by seed whatever ``jobs`` is."""
    work = [(kind, cfg, cfg.seed + i) for i in range(cfg.episodes)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            recs = list(pool.map(_run_one, work))
    else:
        recs = [_run_one(w) for w in work]
    return sorted(recs, key=lambda r: r["seed"])


# -- reports --------------------------------------------------------------------

def _metric_at(metrics, t, key):
    """Value at step ``t``; an episode that ended earlier keeps its last map."""
    best = None
    for m in metrics:
        if m["t"] <= t:
            best = m[key]
    return best


def _mean(xs):
    return sum(xs) / len(xs) if xs else float("nan")


def _mean_at(records, t, key):
    vals = [_metric_at(r["metrics"], t, key) for r in records]
    return _mean([v for v in vals if v is not None])


def summarize(records):
    recs = sorted((r for r in records if "error" not in r), key=lambda r: (r["kind"], r["seed"]))
    failed = sorted(r["seed"] for r in records if "error" in r)
    out = {"episodes": len(recs), "failed": failed}
    ex = [r for r in recs if r["kind"] == "explore"]
    if ex:
        at = {}
        for T in REPORT_T:
            at[str(T)] = {k: _mean_at(ex, T, k) for k in ("mapped_m2", "accuracy_m2", "iou")}
        steps = sorted({m["t"] for r in ex for m in r["metrics"]})
        series = [[t, _mean_at(ex, t, "mapped_m2"), _mean_at(ex, t, "area_seen")]
                  for t in steps]
        out["explore"] = {"at": at, "series": series,
                          "reward_sum": _mean([r["reward_sum"] for r in ex])}
    pn = [r for r in recs if r["kind"] == "pointnav"]
    if pn:
        out["pointnav"] = {"success": _mean([float(r["success"]) for r in pn]),
                           "spl": _mean([r["spl"] for r in pn]),
                           "steps": _mean([r["steps"] for r in pn])}
    return out


def format_report(summary):
    lines = [f"episodes: {summary['episodes']}  failed: {len(summary['failed'])}"]
    ex = summary.get("explore")
    if ex:
        lines.append("")
        lines.append(f"{'T':>6} {'accuracy (m2)':>14} {'IoU':>8} {'cell-channel (m2)':>18}")
        for T, row in ex["at"].items():
            lines.append(f"{T:>6} {row['mapped_m2']:14.3f} {row['iou']:8.4f} "
                         f"{row['accuracy_m2']:18.3f}")
        lines.append("")
        lines.append(f"{'step':>6} {'accuracy (m2)':>14} {'area seen (m2)':>15}")
        for t, acc, area in ex["series"]:
            lines.append(f"{t:>6} {acc:14.3f} {area:15.3f}")
    pn = summary.get("pointnav")
    if pn:
        lines.append("")
        lines.append(f"success {pn['success']:.3f}  SPL {pn['spl']:.3f}  steps {pn['steps']:.1f}")
    return "\n".join(lines) + "\n"


def paired_table(records_a, records_b, key="final_accuracy"):
    """Per-seed comparison of two suites run on the same seeds."""
    a = {r["seed"]: r for r in records_a if "error" not in r}
    b = {r["seed"]: r for r in records_b if "error" not in r}
    rows = [(s, a[s][key], b[s][key]) for s in sorted(set(a) & set(b))]
    lines = [f"{'seed':>6} {'A':>12} {'B':>12} {'B - A':>12}"]
    for s, va, vb in rows:
        lines.append(f"{s:>6} {va:12.3f} {vb:12.3f} {vb - va:12.3f}")
    wins = sum(1 for _, va, vb in rows if vb > va)
    lines.append(f"B ahead on {wins} of {len(rows)} seeds")
    return "\n".join(lines) + "\n"


# -- command line ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="occmap", description="Occupancy anticipation simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        return sp

    g = common(sub.add_parser("gen-env", help="generate a floorplan layout file"))
    g.add_argument("--extent", type=float, default=12.0)
    g.add_argument("--rooms", type=int, nargs=2, default=None)

    d = common(sub.add_parser("make-dataset", help="sample (visible, target) pairs"))
    d.add_argument("--layouts", nargs="*", default=None, help="layout files; generated if omitted")
    d.add_argument("--n-layouts", type=int, default=10)
    d.add_argument("--samples", type=int, default=20)

    t = common(sub.add_parser("train", help="fit a patch model"))
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--k", type=int, default=9)

    e = common(sub.add_parser("eval-anticipator", help="IoU / F1 table on a dataset"))
    e.add_argument("--dataset", required=True)
    e.add_argument("--anticipator", action="append", default=None)

    for name in ("explore", "pointnav"):
        s = common(sub.add_parser(name, help=f"run a {name} suite"))
        s.add_argument("--episodes", type=int)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--noise", choices=("on", "off"))
        s.add_argument("--anticipator")
        s.add_argument("--steps", type=int)

    r = common(sub.add_parser("render", help="write a layout or final map as a PGM/PPM"))
    r.add_argument("--layout", required=True)
    r.add_argument("--records", help="overlay the trajectory of the first record")

    rp = common(sub.add_parser("report", help="aggregate result records"))
    rp.add_argument("records")
    return p


def _experiment(args):
    kv = {}
    base = "."
    if args.config:
        kv = oio.load_config(args.config)
        base = os.path.dirname(os.path.abspath(args.config))
    if getattr(args, "noise", None):
        kv["noise.enabled"] = args.noise
    if getattr(args, "anticipator", None):
        kv["anticipator"] = args.anticipator
    if getattr(args, "episodes", None):
        kv["episodes"] = str(args.episodes)
    if getattr(args, "steps", None):
        kv["episode.T"] = str(args.steps)
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    if args.out:
        kv["out"] = args.out
    return config_from_mapping(kv, base)


def _out_path(args, default):
    out = args.out or default
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return out


def cmd_gen_env(args):
    rooms = tuple(args.rooms) if args.rooms else (3, 6)
    params = FloorplanParams(extent=args.extent, room_count=rooms, seed=args.seed or 0)
    layout = generate_floorplan(params)
    oio.save_layout(layout, _out_path(args, "layout.txt"))


def cmd_make_dataset(args):
    seed = args.seed or 0
    if args.layouts:
        pairs = []
        for i, path in enumerate(args.layouts):
            layout = oio.load_layout(path)
            pairs += make_pairs(layout, args.samples, np.random.default_rng(seed + i))
        cs = oio.load_layout(args.layouts[0]).spec.cell_size
    else:
        pairs = build_dataset(FloorplanParams(), args.n_layouts, args.samples, seed)
        cs = FloorplanParams().cell_size
    oio.save_dataset(pairs, _out_path(args, "dataset.bin"), cs)
    print(f"{len(pairs)} pairs")


def cmd_train(args):
    pairs, _ = oio.load_dataset(args.dataset)
    res = train_patch(pairs, TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                                         seed=args.seed or 0, k=args.k))
    oio.save_model(res.model, _out_path(args, "model.bin"))
    print(f"final loss {res.losses[-1]:.6f}")


def cmd_eval(args):
    pairs, _ = oio.load_dataset(args.dataset)
    specs = args.anticipator or ["visible", "heuristic"]
    rows = [("all-free", eval_anticipator(AllFree(), pairs))]
    for s in specs:
        rows.append((s.split("/")[-1], eval_anticipator(parse_anticipator(s), pairs)))
    text = format_eval_table(rows)
    sys.stdout.write(text)
    if args.out:
        with open(_out_path(args, args.out), "w") as fh:
            fh.write(text)


def cmd_suite(args):
    cfg = _experiment(args)
    recs = run_suite(args.command, cfg, args.jobs)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{args.command}.jsonl")
    oio.write_records(recs, path)
    report = format_report(summarize(recs))
    with open(os.path.join(cfg.out, f"{args.command}_report.txt"), "w") as fh:
        fh.write(report)
    sys.stdout.write(report)
    return EXIT_RUNTIME if recs and all("error" in r for r in recs) else EXIT_OK


def cmd_render(args):
    layout = oio.load_layout(args.layout)
    traj = None
    if args.records:
        rec = oio.read_records(args.records)[0]
        spec = layout.spec
        traj = [(math.floor((x - spec.origin[0]) / spec.cell_size),
                 math.floor((y - spec.origin[1]) / spec.cell_size))
                for x, y in rec.get("trajectory", [])]
    text, _ = oio.render_categories(layout.cells, traj)
    oio.write_image(text, _out_path(args, "map.pgm" if traj is None else "map.ppm"))


def cmd_report(args):
    text = format_report(summarize(oio.read_records(args.records)))
    sys.stdout.write(text)
    if args.out:
        with open(_out_path(args, args.out), "w") as fh:
            fh.write(text)


COMMANDS = {"gen-env": cmd_gen_env, "make-dataset": cmd_make_dataset, "train": cmd_train,
            "eval-anticipator": cmd_eval, "explore": cmd_suite, "pointnav": cmd_suite,
            "render": cmd_render, "report": cmd_report}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, EmptyDataset, NoFreePoses, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OccMapError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
