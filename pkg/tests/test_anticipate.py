import math

import numpy as np
import pytest

from occmap.anticipate import (DEFAULT_TAU, PatchModel, TrainConfig, anticipate_heuristic,
                               anticipate_patch, anticipate_visible_only, bce_loss,
                               binary_entropy, entropy_filter, patch_loss_and_grad, train_patch)
from occmap.errors import EmptyDataset, NoValidCells
from occmap.grid import FREE, OCCUPIED, LocalOccupancy, binarize, class_scores


def _vis(cats):
    """Visible map from a category array using -1 for unknown."""
    cats = np.asarray(cats)
    seen = cats >= 0
    probs = np.zeros((2,) + cats.shape)
    probs[0][cats == 1] = 1.0
    probs[1][seen] = 1.0
    return LocalOccupancy(probs, seen)


def _random_vis(rng, side=11):
    cats = rng.choice([-1, 0, 1], size=(side, side), p=[0.5, 0.35, 0.15])
    return _vis(cats)


def test_visible_only(rng):
    v = _random_vis(rng)
    a = anticipate_visible_only(v)
    assert np.array_equal(a.probs, v.probs)
    assert np.array_equal(anticipate_visible_only(a).probs, a.probs)
    empty = anticipate_visible_only(LocalOccupancy.unknown(7))
    assert (binarize(empty) == 2).all()


def test_heuristic_fills_enclosed_free():
    cats = -np.ones((7, 7), int)
    cats[1:6, 1:6] = 0
    cats[2:5, 2:5] = -1
    out = anticipate_heuristic(_vis(cats))
    assert np.allclose(out.probs[1][2:5, 2:5], 0.75)
    assert np.allclose(out.probs[0][2:5, 2:5], 0.25)


def test_heuristic_extends_wall():
    cats = -np.ones((7, 7), int)
    cats[3, 1:4] = 1
    out = anticipate_heuristic(_vis(cats))
    assert out.probs[0][3, 4] == 0.75 and out.probs[1][3, 4] == 0.75
    # far from evidence nothing changes
    assert out.probs[0][0, 6] == 0.5 and out.probs[1][0, 6] == 0.0


def test_patch_zero_and_bias_only(rng):
    v = _random_vis(rng)
    out = anticipate_patch(PatchModel.zeros(3), v, override=False)
    assert np.allclose(out.probs, 0.5)
    m = PatchModel(np.zeros((2, 3, 3, 3)), np.array([-4.6, 4.6]))
    out = anticipate_patch(m, v, override=False)
    assert np.allclose(out.probs[0], 0.01, atol=1e-3) and np.allclose(out.probs[1], 0.99, atol=1e-3)


def test_patch_translation_equivariance(rng):
    model = PatchModel(rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2))
    cats = -np.ones((21, 21), int)
    cats[5:9, 5:9] = rng.choice([0, 1], size=(4, 4))
    shifted = np.roll(np.roll(cats, 3, axis=0), 2, axis=1)
    a = anticipate_patch(model, _vis(cats)).probs
    b = anticipate_patch(model, _vis(shifted)).probs
    assert np.allclose(b[:, 6:16, 5:15], a[:, 3:13, 3:13])


def test_anticipators_keep_evidence(rng):
    model = PatchModel(rng.normal(size=(2, 3, 5, 5)), rng.normal(size=2))
    for _ in range(10):
        v = _random_vis(rng, 15)
        occ = v.valid_mask & (v.probs[0] == 1)
        for out in (anticipate_heuristic(v), anticipate_patch(model, v), anticipate_visible_only(v)):
            assert np.all((out.probs >= 0) & (out.probs <= 1))
            assert np.all(out.probs[0][occ] == 1.0)


def test_bce_values(rng):
    t = _random_vis(rng)
    assert bce_loss(t, t) <= 1e-6
    half = LocalOccupancy(np.full_like(t.probs, 0.5), t.valid_mask)
    assert math.isclose(bce_loss(half, t), math.log(2), rel_tol=1e-12)
    with pytest.raises(NoValidCells):
        bce_loss(half, LocalOccupancy.unknown(11))


def test_gradient_check(rng):
    k = 3
    model = PatchModel(rng.normal(0, 0.3, size=(2, 3, k, k)), rng.normal(size=2))
    vis = _random_vis(rng, 5)
    target = LocalOccupancy((rng.random((2, 5, 5)) < 0.5).astype(float), rng.random((5, 5)) < 0.8)
    target.valid_mask[0, 0] = True
    for override in (False, True):
        _, gw, gb = patch_loss_and_grad(model, vis, target, override)
        flat = model.flat()
        analytic = np.concatenate([gw.reshape(2, -1), gb[:, None]], axis=1)
        h = 1e-5
        numeric = np.zeros_like(flat)
        for idx in np.ndindex(flat.shape):
            hi, lo = flat.copy(), flat.copy()
            hi[idx] += h
            lo[idx] -= h
            fp = bce_loss(anticipate_patch(PatchModel.from_flat(k, hi), vis, override), target)
            fm = bce_loss(anticipate_patch(PatchModel.from_flat(k, lo), vis, override), target)
            numeric[idx] = (fp - fm) / (2 * h)
        scale = np.maximum(np.abs(numeric), 1e-3)
        assert np.max(np.abs(analytic - numeric) / scale) <= 1e-4


def _pairs(rng, n=6, side=15):
    out = []
    for _ in range(n):
        v = _random_vis(rng, side)
        t = LocalOccupancy((rng.random((2, side, side)) < 0.3).astype(float),
                           rng.random((side, side)) < 0.9)
        t.probs[1][t.valid_mask] = 1.0
        out.append((v, t))
    return out


def test_training_deterministic(rng):
    data = _pairs(rng)
    cfg = TrainConfig(epochs=3, k=3, seed=5)
    a, b = train_patch(data, cfg), train_patch(data, cfg)
    assert a.model.flat().tobytes() == b.model.flat().tobytes()
    assert a.losses == b.losses
    with pytest.raises(EmptyDataset):
        train_patch([], cfg)


def test_training_identity_task(rng):
    data = [(v, v) for v in (_random_vis(rng, 15) for _ in range(12))]
    res = train_patch(data[:8], TrainConfig(epochs=50, k=3, seed=0))
    pred, gt = [], []
    for v, t in data[8:]:
        p = binarize(anticipate_patch(res.model, v))
        m = t.valid_mask
        pred.append(p[m])
        gt.append(binarize(t)[m])
    pred, gt = np.concatenate(pred), np.concatenate(gt)
    iou = np.mean([class_scores(pred, gt, c)["iou"] for c in (FREE, OCCUPIED)])
    assert iou >= 0.95


@pytest.mark.parametrize("t", [0.2, 0.7])
def test_training_constant_target(t):
    side = 9
    vis = LocalOccupancy.unknown(side)
    target = LocalOccupancy(np.full((2, side, side), t), np.ones((side, side), bool))
    res = train_patch([(vis, target)], TrainConfig(learning_rate=0.5, epochs=400, k=1, l2=0.0,
                                                   batch_size=81, cells_per_sample=81))
    # with k = 1 the only live inputs are the bias and the unknown-indicator weight
    z = res.model.logits(vis)
    assert np.allclose(z, math.log(t / (1 - t)), atol=0.05)


def test_entropy_filter_examples():
    assert math.isclose(float(binary_entropy(0.99)), 0.0560, abs_tol=1e-4)
    probs = np.array([[[0.5, 0.99, 1.0, 0.0]], [[0.99, 0.99, 1.0, 1.0]]])
    out = entropy_filter(LocalOccupancy(probs, np.ones((1, 4), bool)), DEFAULT_TAU)
    assert out.valid_mask.tolist() == [[False, True, True, True]]
    with pytest.raises(ValueError):
        entropy_filter(LocalOccupancy(probs, np.ones((1, 4), bool)), 0.0)


def test_entropy_filter_monotone(rng):
    local = LocalOccupancy(rng.random((2, 10, 10)), np.ones((10, 10), bool))
    taus = np.linspace(0.01, math.log(2), 12)
    kept = [entropy_filter(local, t).valid_mask.sum() for t in taus]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
