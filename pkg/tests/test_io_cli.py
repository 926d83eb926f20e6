import math

import numpy as np
import pytest

from occmap import io as oio
from occmap.anticipate import PatchModel, VisibleOnly
from occmap.cli import (AllFree, config_from_mapping, dataset_poses, empty_room,
                        eval_anticipator, format_report, main, make_pairs, run_suite, summarize)
from occmap.errors import NoFreePoses, ParseError
from occmap.grid import FREE, OCCUPIED, UNKNOWN, VOID
from occmap.world import FloorplanParams, generate_floorplan


def test_layout_round_trip(tmp_path):
    lay = generate_floorplan(FloorplanParams(extent=8.0, room_count=(1, 1), seed=3))
    text = oio.dumps_layout(lay)
    back = oio.loads_layout(text)
    assert np.array_equal(back.cells, lay.cells) and back.spec == lay.spec
    assert oio.dumps_layout(back) == text
    head = text.split("\n", 1)[0].split()
    rows = text.rstrip("\n").split("\n")[1:]
    assert int(head[2]) == len(rows) and all(len(r) == int(head[3]) for r in rows)
    p = tmp_path / "l.txt"
    oio.save_layout(lay, p)
    assert np.array_equal(oio.load_layout(p).cells, lay.cells)


def test_layout_parse_errors():
    with pytest.raises(ParseError) as e:
        oio.loads_layout("occmap v2 3 3 0.05\n...\n...\n...\n")
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        oio.loads_layout("occmap v1 3 3 0.05\n...\n.x.\n...\n")
    assert e.value.line == 3


def test_model_dataset_config_records(tmp_path, rng):
    m = PatchModel(rng.normal(size=(2, 3, 5, 5)), rng.normal(size=2))
    blob = oio.dumps_model(m)
    assert blob.startswith(b"patchmodel v1 5\n")
    assert oio.dumps_model(oio.loads_model(blob)) == blob

    lay = empty_room(3.0)
    pairs = make_pairs(lay, 0, np.random.default_rng(0), side=41)
    p = tmp_path / "d.bin"
    oio.save_dataset(pairs, p, 0.05)
    back, cs = oio.load_dataset(p)
    assert cs == 0.05 and len(back) == len(pairs)
    for (v, t), (v2, t2) in zip(pairs, back):
        assert np.array_equal(v.valid_mask, v2.valid_mask) and np.array_equal(t.probs, t2.probs)

    text = "# experiment\nepisode.T = 40\nnoise.enabled = on  # trailing\n"
    kv = oio.parse_config(text)
    assert kv == {"episode.T": "40", "noise.enabled": "on"}
    assert oio.parse_config(oio.dumps_config(kv)) == kv
    with pytest.raises(ParseError) as e:
        oio.parse_config("a = 1\nbroken line\n")
    assert e.value.line == 2

    recs = [{"seed": 1, "x": [1.5, math.inf]}, {"seed": 2, "y": np.int64(3)}]
    rp = tmp_path / "r.jsonl"
    oio.write_records(recs, rp)
    again = tmp_path / "r2.jsonl"
    oio.write_records(oio.read_records(rp), again)
    assert rp.read_bytes() == again.read_bytes()


def test_config_mapping():
    cfg = config_from_mapping({"episode.T": "50", "episode.fov": "90", "noise.enabled": "on",
                               "noise.odom_rotation.mean": "1.8", "seed": "7"})
    assert cfg.episode.T == 50 and math.isclose(cfg.episode.fov, math.pi / 2)
    assert math.isclose(cfg.episode.noise.odom_rotation.mean, math.radians(1.8))
    assert cfg.seed == 7
    with pytest.raises(ParseError):
        config_from_mapping({"episode.bogus": "1"})


def test_empty_room_poses():
    pts = dataset_poses(empty_room(4.0))
    # oracle: integer points of [0, 4]^2 at least 0.5 m from every wall
    want = [(x, y) for x in range(5) for y in range(5) if min(x, y, 4 - x, 4 - y) >= 0.5]
    assert len(pts) == len(want) == 9
    assert sorted((round(x, 9), round(y, 9)) for x, y in pts) == sorted(map(lambda p: (float(p[0]), float(p[1])), want))
    with pytest.raises(NoFreePoses):
        dataset_poses(empty_room(0.8))


def test_dataset_bytes_deterministic(tmp_path):
    lay = generate_floorplan(FloorplanParams(extent=8.0, seed=5))
    for name in ("a", "b"):
        oio.save_dataset(make_pairs(lay, 4, np.random.default_rng(9), side=41),
                         tmp_path / name, 0.05)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


class _Lookup:
    def __init__(self, pairs):
        self.table = {id(v): t for v, t in pairs}

    def __call__(self, visible, obs=None):
        return self.table[id(visible)]


def test_eval_rows():
    lay = generate_floorplan(FloorplanParams(extent=8.0, seed=6))
    pairs = make_pairs(lay, 6, np.random.default_rng(0), side=61)
    free = eval_anticipator(AllFree(), pairs)
    assert free["iou_occ"] == 0.0 and free["f1_occ"] == 0.0
    self_eval = eval_anticipator(_Lookup(pairs), pairs)
    assert self_eval["iou_mean"] == 100.0 and self_eval["f1_mean"] == 100.0
    vis = eval_anticipator(VisibleOnly(), pairs)
    assert 0.0 <= vis["iou_mean"] <= 100.0


def test_render():
    cats = np.array([[FREE, OCCUPIED], [UNKNOWN, VOID]], np.uint8)
    text, drawn = oio.render_categories(cats)
    img = oio.read_pnm(text, is_text=True)
    assert img.tolist() == [[255, 0], [128, 192]] and drawn == 0
    assert oio.render_categories(cats)[0] == text
    traj = [(0, 0), (1, 1), (0, 1)]
    text, drawn = oio.render_categories(cats, traj)
    rgb = oio.read_pnm(text, is_text=True)
    assert drawn == len(traj) and rgb[1, 1].tolist() == list(oio.TRAJECTORY_RGB)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["no-such-command"]) == 1
    assert main(["train", "--dataset", str(tmp_path / "missing.bin")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("occmap v1 3 3 0.05\n...\n")
    assert main(["render", "--layout", str(bad), "--out", str(tmp_path / "x.pgm")]) == 2
    out = tmp_path / "env" / "l.txt"
    assert main(["gen-env", "--seed", "3", "--extent", "8", "--out", str(out)]) == 0
    lay = oio.load_layout(out)
    assert main(["render", "--layout", str(out), "--out", str(tmp_path / "m.pgm")]) == 0
    img = oio.read_pnm(str(tmp_path / "m.pgm"))
    assert img.shape == lay.cells.shape


def test_suite_rerun_identical(tmp_path):
    args = ["explore", "--seed", "2", "--episodes", "2", "--steps", "30"]
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("layout.extent = 8\n")
    assert main(args + ["--config", str(cfg), "--out", str(a)]) == 0
    assert main(args + ["--config", str(cfg), "--out", str(b), "--jobs", "2"]) == 0
    ra, rb = (a / "explore.jsonl").read_bytes(), (b / "explore.jsonl").read_bytes()
    assert ra == rb
    # the report is a pure function of the records
    recs = oio.read_records(a / "explore.jsonl")
    assert format_report(summarize(recs)) == (a / "explore_report.txt").read_text()
    rep = summarize(recs)
    assert rep["episodes"] == 2 and rep["explore"]["series"]
    for r in recs:
        assert r["reward_sum"] == r["final_accuracy"] - r["initial_accuracy"]


def test_pointnav_suite(tmp_path):
    cfg = config_from_mapping({"layout.extent": "8", "episode.T": "200", "episodes": "2",
                               "seed": "4"})
    recs = run_suite("pointnav", cfg)
    assert [r["seed"] for r in recs] == [4, 5]
    for r in recs:
        assert "error" in r or (0.0 <= r["spl"] <= 1.0 and (not r["success"] or r["final_distance"] <= 0.2))
