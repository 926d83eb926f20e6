"""File formats: layouts, patch models, datasets, configs, result records, images."""

import json
import math

import numpy as np

from .anticipate import PatchModel
from .errors import ParseError
from .grid import FREE, OCCUPIED, UNKNOWN, VOID, GroundTruthLayout, LocalOccupancy, MapSpec

LAYOUT_CHARS = {FREE: ".", OCCUPIED: "#", VOID: " "}
CHAR_CELLS = {v: k for k, v in LAYOUT_CHARS.items()}


# -- layouts ----------------------------------------------------------------

def dumps_layout(layout):
    rows, cols = layout.cells.shape
    lut = np.array([LAYOUT_CHARS[FREE], LAYOUT_CHARS[OCCUPIED], "?", LAYOUT_CHARS[VOID]])
    lines = [f"occmap v1 {rows} {cols} {layout.spec.cell_size!r}"]
    lines += ["".join(lut[row]) for row in layout.cells]
    return "\n".join(lines) + "\n"


def loads_layout(text):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty layout file", 1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "occmap" or head[1] != "v1":
        raise ParseError(f"bad header {lines[0]!r}", 1)
    try:
        rows, cols, cell = int(head[2]), int(head[3]), float(head[4])
    except ValueError:
        raise ParseError(f"bad header {lines[0]!r}", 1) from None
    if rows != cols or rows < 3 or not cell > 0:
        raise ParseError("layouts must be square with at least 3 cells per side", 1)
    body = lines[1:]
    if len(body) != rows:
        raise ParseError(f"expected {rows} rows, found {len(body)}", len(lines) + 1)
    cells = np.empty((rows, cols), np.uint8)
    for i, line in enumerate(body):
        if len(line) != cols:
            raise ParseError(f"expected {cols} columns, found {len(line)}", i + 2)
        try:
            cells[i] = [CHAR_CELLS[ch] for ch in line]
        except KeyError as exc:
            raise ParseError(f"unknown cell character {exc.args[0]!r}", i + 2) from None
    return GroundTruthLayout(cells, MapSpec(cell_size=cell, side=rows))


def save_layout(layout, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_layout(layout))


def load_layout(path):
    with open(path, newline="\n") as fh:
        return loads_layout(fh.read())


# -- patch models -------------------------------------------------------------

def dumps_model(model):
    head = f"patchmodel v1 {model.k}\n".encode("ascii")
    return head + model.flat().astype("<f8").tobytes()


def loads_model(data):
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing model header", 1)
    head = data[:nl].decode("ascii", "replace").split()
    if len(head) != 3 or head[:2] != ["patchmodel", "v1"]:
        raise ParseError(f"bad model header {data[:nl]!r}", 1)
    k = int(head[2])
    flat = np.frombuffer(data[nl + 1:], dtype="<f8")
    if flat.size != 2 * (3 * k * k + 1):
        raise ParseError(f"expected {2 * (3 * k * k + 1)} parameters, found {flat.size}", 2)
    return PatchModel.from_flat(k, flat.astype(np.float64))


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())


# -- datasets -----------------------------------------------------------------

def encode_local(local):
    """FREE / OCCUPIED / UNKNOWN codes; only exact 0/1 maps survive the round trip."""
    codes = np.full(local.valid_mask.shape, UNKNOWN, np.uint8)
    known = local.valid_mask & (local.probs[1] >= 0.5)
    codes[known & (local.probs[0] >= 0.5)] = OCCUPIED
    codes[known & (local.probs[0] < 0.5)] = FREE
    return codes


def decode_local(codes):
    probs = np.zeros((2,) + codes.shape)
    probs[0][codes == OCCUPIED] = 1.0
    probs[1][codes != UNKNOWN] = 1.0
    return LocalOccupancy(probs, codes != UNKNOWN)


def save_dataset(pairs, path, cell_size):
    side = pairs[0][0].side if pairs else 0
    with open(path, "wb") as fh:
        fh.write(f"occdataset v1 {len(pairs)} {side} {cell_size!r}\n".encode("ascii"))
        for visible, target in pairs:
            fh.write(encode_local(visible).tobytes())
            fh.write(encode_local(target).tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    head = data[:nl].decode("ascii", "replace").split() if nl >= 0 else []
    if len(head) != 5 or head[:2] != ["occdataset", "v1"]:
        raise ParseError("bad dataset header", 1)
    n, side = int(head[2]), int(head[3])
    raw = np.frombuffer(data[nl + 1:], dtype=np.uint8)
    if raw.size != n * 2 * side * side:
        raise ParseError("dataset payload has the wrong size", 2)
    raw = raw.reshape(n, 2, side, side)
    return [(decode_local(r[0]), decode_local(r[1])) for r in raw], float(head[4])


# -- configs ------------------------------------------------------------------

def parse_config(text):
    """Flat ``key = value`` lines; ``#`` starts a comment.  Keys may be dotted."""
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", i)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", i)
        out[key] = value
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def dumps_config(mapping):
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


# -- result records -----------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps_record(record):
    return json.dumps(_clean(record), sort_keys=True, separators=(",", ":"))


def write_records(records, path):
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def read_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- images -------------------------------------------------------------------

PALETTE = {FREE: 255, OCCUPIED: 0, UNKNOWN: 128, VOID: 192}
TRAJECTORY_RGB = (255, 0, 0)


def render_categories(cats, trajectory=None):
    """Plain PGM (P2), or plain PPM (P3) when a trajectory of cell indices is overlaid.

    Returns ``(text, drawn)`` where ``drawn`` counts overlay points.
    """
    cats = np.asarray(cats)
    rows, cols = cats.shape
    lut = np.zeros(256, np.int64)
    for k, v in PALETTE.items():
        lut[k] = v
    gray = lut[cats]
    if trajectory is None:
        body = "\n".join(" ".join(str(v) for v in row) for row in gray)
        return f"P2\n{cols} {rows}\n255\n{body}\n", 0
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    drawn = 0
    for ix, iy in trajectory:
        if 0 <= ix < rows and 0 <= iy < cols:
            rgb[ix, iy] = TRAJECTORY_RGB
        drawn += 1
    body = "\n".join(" ".join(f"{p[0]} {p[1]} {p[2]}" for p in row) for row in rgb)
    return f"P3\n{cols} {rows}\n255\n{body}\n", drawn


def write_image(text, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def read_pnm(path_or_text, is_text=False):
    text = path_or_text if is_text else open(path_or_text).read()
    tokens = text.split()
    magic = tokens[0]
    cols, rows = int(tokens[1]), int(tokens[2])
    vals = np.array([int(t) for t in tokens[4:]])
    if magic == "P2":
        return vals.reshape(rows, cols)
    if magic == "P3":
        return vals.reshape(rows, cols, 3)
    raise ParseError(f"unsupported image type {magic}", 1)

