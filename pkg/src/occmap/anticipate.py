"""Anticipators, the per-cell BCE objective, the trainable patch model and entropy filtering."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from . import kernels
from .errors import EmptyDataset, NoValidCells, ShapeMismatch
from .grid import LocalOccupancy

log = logging.getLogger(__name__)

EPS = 1e-7
DEFAULT_TAU = 0.5623  # binary entropy at confidence 0.75, in nats
N_FEATURES = 3


def binary_entropy(p):
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log(p) + (1 - p) * np.log(1 - p))
    return np.nan_to_num(h, nan=0.0)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _override(out, visible):
    ev = visible.valid_mask & (visible.probs[1] > 0)
    out[:, ev] = visible.probs[:, ev]
    return out


def anticipate_visible_only(visible):
    probs = np.where(visible.valid_mask, visible.probs, 0.0)
    return LocalOccupancy(probs, np.ones_like(visible.valid_mask))


def anticipate_heuristic(visible):
    """Hole-fill free space and extend straight wall runs, both at confidence 0.75."""
    seen = visible.valid_mask & (visible.probs[1] > 0)
    occ = seen & (visible.probs[0] >= 0.5)
    free = seen & ~occ
    unknown = ~seen
    out = np.zeros_like(visible.probs)
    out[0][unknown] = 0.5
    enclosed = ndimage.binary_fill_holes(free) & unknown
    out[0][enclosed] = 0.25
    out[1][enclosed] = 0.75
    v = occ.shape[0]
    pad = np.pad(occ, 2)
    wall = np.zeros_like(occ)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            one = pad[2 + dr:2 + dr + v, 2 + dc:2 + dc + v]
            two = pad[2 + 2 * dr:2 + 2 * dr + v, 2 + 2 * dc:2 + 2 * dc + v]
            wall |= one & two
    wall &= unknown
    out[0][wall] = 0.75
    out[1][wall] = 0.75
    return LocalOccupancy(_override(out, visible), np.ones_like(seen))


def feature_planes(visible):
    """(occupied, explored, unknown) indicator planes of a visible map."""
    valid = visible.valid_mask
    planes = np.empty((N_FEATURES,) + valid.shape)
    planes[0] = np.where(valid, visible.probs[0], 0.0)
    planes[1] = np.where(valid, visible.probs[1], 0.0)
    planes[2] = (~valid).astype(np.float64)
    return planes


@dataclass
class PatchModel:
    """Per-cell logistic model over a k x k neighbourhood of feature planes.

    ``weights`` has shape (2, 3, k, k); ``bias`` has shape (2,).
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[:2] != (2, N_FEATURES):
            raise ShapeMismatch(f"weights must be (2, 3, k, k), got {self.weights.shape}")
        k = self.weights.shape[2]
        if k % 2 != 1 or self.weights.shape[3] != k:
            raise ShapeMismatch("patch side must be odd and square")
        if self.bias.shape != (2,):
            raise ShapeMismatch("bias must have two entries")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("model parameters must be finite")

    @classmethod
    def zeros(cls, k=9):
        return cls(np.zeros((2, N_FEATURES, k, k)), np.zeros(2))

    @property
    def k(self):
        return self.weights.shape[2]

    def flat(self):
        """Row per output channel: k*k weights for each feature plane, then the bias."""
        return np.concatenate([self.weights.reshape(2, -1), self.bias[:, None]], axis=1)

    @classmethod
    def from_flat(cls, k, flat):
        flat = np.asarray(flat, dtype=np.float64).reshape(2, N_FEATURES * k * k + 1)
        return cls(flat[:, :-1].reshape(2, N_FEATURES, k, k), flat[:, -1].copy())

    def logits(self, visible):
        planes = np.ascontiguousarray(feature_planes(visible))
        return kernels.patch_logits(planes, np.ascontiguousarray(self.weights), self.bias)


def anticipate_patch(model, visible, override=True):
    probs = sigmoid(model.logits(visible))
    if override:
        probs = _override(probs, visible)
    return LocalOccupancy(probs, np.ones_like(visible.valid_mask))


def bce_loss(pred, target):
    """Mean per-cell, per-channel binary cross entropy over ``target.valid_mask``."""
    if pred.probs.shape != target.probs.shape:
        raise ShapeMismatch(f"{pred.probs.shape} != {target.probs.shape}")
    m = target.valid_mask
    if not m.any():
        raise NoValidCells("target has no valid cells")
    p = np.clip(pred.probs[:, m], EPS, 1 - EPS)
    t = target.probs[:, m]
    return float(np.mean(-(t * np.log(p) + (1 - t) * np.log(1 - p))))


def bce_grad_probs(pred, target):
    """d bce_loss / d pred.probs (zero where the clamp is active or the mask is off)."""
    m = target.valid_mask
    n = 2 * int(m.sum())
    if n == 0:
        raise NoValidCells("target has no valid cells")
    p = pred.probs
    pc = np.clip(p, EPS, 1 - EPS)
    t = target.probs
    g = -(t / pc - (1 - t) / (1 - pc)) / n
    g[:, ~m] = 0.0
    g[(p < EPS) | (p > 1 - EPS)] = 0.0
    return g


def patch_loss_and_grad(model, visible, target, override=True):
    """bce_loss of :func:`anticipate_patch` and its gradient w.r.t. the model parameters."""
    z = model.logits(visible)
    p = sigmoid(z)
    pred_probs = _override(p.copy(), visible) if override else p
    pred = LocalOccupancy(pred_probs, np.ones_like(visible.valid_mask))
    loss = bce_loss(pred, target)
    dz = bce_grad_probs(pred, target) * p * (1 - p)
    if override:
        ev = visible.valid_mask & (visible.probs[1] > 0)
        dz[:, ev] = 0.0
    k = model.k
    half = k // 2
    planes = np.pad(feature_planes(visible), ((0, 0), (half, half), (half, half)))
    win = sliding_window_view(planes, (k, k), axis=(1, 2))
    gw = np.einsum("cvu,fvuab->cfab", dz, win)
    gb = dz.sum(axis=(1, 2))
    return loss, gw, gb


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 30
    batch_size: int = 256
    l2: float = 1e-4
    seed: int = 0
    k: int = 9
    cells_per_sample: int = 400
    momentum: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainResult:
    model: PatchModel
    losses: list = field(default_factory=list)
    warning: bool = False


def training_labels(target):
    """Explored labels on every window cell (0 outside the target mask); occupied labels inside it."""
    m = target.valid_mask
    occ = np.where(m, target.probs[0], 0.0)
    exp = np.where(m, target.probs[1], 0.0)
    return occ, exp, m


def _sample_rows(visible, target, k, n_cells, rng):
    """Features, labels and importance weights for a subset of non-evidence cells."""
    half = k // 2
    planes = np.pad(feature_planes(visible), ((0, 0), (half, half), (half, half)))
    win = sliding_window_view(planes, (k, k), axis=(1, 2))
    ev = visible.valid_mask & (visible.probs[1] > 0)
    occ_lab, exp_lab, m = training_labels(target)
    free_cells = ~ev
    strata = [np.argwhere(free_cells & m), np.argwhere(free_cells & ~m)]
    rows, weights = [], []
    per = max(1, n_cells // 2)
    for cells in strata:
        if len(cells) == 0:
            continue
        take = min(per, len(cells))
        pick = cells[np.sort(rng.choice(len(cells), size=take, replace=False))]
        rows.append(pick)
        weights.append(np.full(take, len(cells) / take))
    if not rows:
        return None
    cells = np.concatenate(rows)
    w = np.concatenate(weights)
    r, c = cells[:, 0], cells[:, 1]
    x = win[:, r, c].transpose(1, 0, 2, 3).reshape(len(cells), -1)
    y = np.stack([occ_lab[r, c], exp_lab[r, c]], axis=1)
    ymask = np.stack([m[r, c], np.ones(len(cells), bool)], axis=1)
    return x.astype(np.float32), y, ymask, w


def train_patch(dataset, config=None):
    """Mini-batch gradient descent on the masked per-cell BCE plus an L2 penalty.

    Cells holding direct evidence are skipped: the override makes their loss
    constant in the parameters.
    """
    config = config or TrainConfig()
    if not dataset:
        raise EmptyDataset("training set is empty")
    rng = np.random.default_rng(config.seed)
    k = config.k
    xs, ys, ms, ws = [], [], [], []
    for visible, target in dataset:
        rows = _sample_rows(visible, target, k, config.cells_per_sample, rng)
        if rows is None:
            continue
        x, y, m, w = rows
        xs.append(x)
        ys.append(y)
        ms.append(m)
        ws.append(w)
    if not xs:
        raise EmptyDataset("no trainable cells in the dataset")
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    M = np.concatenate(ms).astype(np.float64)
    W = np.concatenate(ws)
    W = W / W.mean()
    n, d = X.shape
    theta = np.zeros((2, d + 1))
    velocity = np.zeros_like(theta)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            xb = X[idx].astype(np.float64)
            z = xb @ theta[:, :-1].T + theta[:, -1]
            p = np.clip(sigmoid(z), EPS, 1 - EPS)
            wm = M[idx] * W[idx, None]
            denom = max(wm.sum(), 1e-12)
            yb = Y[idx]
            total += float(np.sum(wm * -(yb * np.log(p) + (1 - yb) * np.log(1 - p))))
            dz = wm * (p - yb) / denom
            grad = np.empty_like(theta)
            grad[:, :-1] = dz.T @ xb + config.l2 * theta[:, :-1]
            grad[:, -1] = dz.sum(axis=0)
            velocity = config.momentum * velocity - config.learning_rate * grad
            theta += velocity
        losses.append(total / max((M * W[:, None]).sum(), 1e-12))
    warning = any(losses[e] > losses[e - 5] for e in range(5, len(losses)))
    if warning:
        log.warning("training loss rose over a five-epoch window")
    return TrainResult(PatchModel.from_flat(k, theta), losses, warning)


def entropy_filter(local, tau=DEFAULT_TAU):
    """Invalidate cells where either channel's binary entropy exceeds ``tau`` nats."""
    if not 0.0 < tau <= math.log(2) + 1e-12:
        raise ValueError("tau must lie in (0, ln 2]")
    h = binary_entropy(local.probs)
    keep = local.valid_mask & (h[0] <= tau) & (h[1] <= tau)
    return LocalOccupancy(local.probs, keep)


class VisibleOnly:
    name = "visible"

    def __call__(self, visible, obs=None):
        return anticipate_visible_only(visible)


class Heuristic:
    name = "heuristic"

    def __call__(self, visible, obs=None):
        return anticipate_heuristic(visible)


class PatchAnticipator:
    name = "patch"

    def __init__(self, model):
        self.model = model

    def __call__(self, visible, obs=None):
        return anticipate_patch(self.model, visible)


class GroundTruthAnticipator:
    """Test fixture: returns the layout inside the grown visibility mask."""

    name = "gt"

    def __call__(self, visible, obs):
        from .world import crop_egocentric, grow_mask, target_from_crop
        from .grid import VOID

        crop = crop_egocentric(obs.layout, obs.true_pose, visible.side)
        mask = grow_mask(visible.valid_mask, crop == VOID)
        target = target_from_crop(crop, mask)
        return LocalOccupancy(_override(target.probs, visible), mask)
