import numpy as np
import pytest

from oreal.core import UNLABELED, PartialLabelMap, validate_probability_map
from oreal.model import (
    NUM_FEATURES,
    ClassifierWeights,
    NoLabels,
    TrainConfig,
    TrainHistory,
    cross_entropy,
    extract_features,
    load_weights,
    predict_proba,
    save_weights,
    train,
)


def numeric_grad(w, X, y, h=1e-5):
    g = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        e = np.zeros_like(w)
        e[idx] = h
        g[idx] = (cross_entropy(w + e, X, y)[0] - cross_entropy(w - e, X, y)[0]) / (2 * h)
    return g


def gradient_rel_error(seed):
    rng = np.random.default_rng(seed)
    C = int(rng.integers(2, 6))
    n = int(rng.integers(5, 40))
    X = np.concatenate([rng.normal(size=(n, NUM_FEATURES)), np.ones((n, 1))], axis=1)
    y = rng.integers(0, C, size=n)
    w = rng.normal(scale=0.5, size=(C, NUM_FEATURES + 1))
    _, g = cross_entropy(w, X, y)
    num = numeric_grad(w, X, y)
    return np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    assert gradient_rel_error(seed) < 1e-4


def toy(seed=0, h=6, w=6):
    rng = np.random.default_rng(seed)
    img = np.zeros((h, w, 3))
    img[:, : w // 2] = 0.1
    img[:, w // 2 :] = 0.9
    img += rng.normal(scale=0.02, size=img.shape)
    labels = (np.arange(w)[None, :] >= w // 2).repeat(h, axis=0).astype(int)
    return extract_features(img), labels


def test_separable_toy_reaches_full_accuracy():
    f, labels = toy()
    weights = train([f], [PartialLabelMap(labels, 2)], 2, config=TrainConfig(max_epochs=500))
    pred = np.argmax(predict_proba(weights, f).probs, axis=2)
    assert np.mean(pred == labels) == 1.0


def test_loss_never_increases():
    f, _ = toy(1)
    # random labels: no separating direction, so an oversized step overshoots
    labels = np.random.default_rng(1).integers(0, 3, size=(6, 6))
    hist = TrainHistory()
    cfg = TrainConfig(lr=50.0, max_epochs=60, precondition=False)
    train([f], [PartialLabelMap(labels, 3)], 3, config=cfg, history=hist)
    assert np.all(np.diff(hist.loss) <= 1e-9)
    assert min(hist.lr) < 50.0


def test_no_labels():
    f, _ = toy()
    with pytest.raises(NoLabels):
        train([f], [PartialLabelMap(np.full((6, 6), UNLABELED), 2)], 2)


def test_early_stopping_returns_best_average():
    f, labels = toy(2)
    hist = TrainHistory()
    cfg = TrainConfig(lr=1.0, max_epochs=200, patience=3)
    w = train([f], [PartialLabelMap(labels, 2)], 2, val=([f], [labels]), config=cfg, history=hist)
    assert len(hist.val_miou) <= hist.best_epoch + 1 + cfg.patience
    assert hist.val_miou[hist.best_epoch] == max(hist.val_miou)
    # the warm-start state continues past the snapshot used for prediction
    assert w.raw.shape == w.w.shape


def test_warm_start_resumes_optimiser_state():
    f, labels = toy(3)
    lab = [PartialLabelMap(labels, 2)]
    cfg = TrainConfig(lr=0.5, max_epochs=5)
    once = train([f], lab, 2, config=TrainConfig(lr=0.5, max_epochs=10))
    twice = train([f], lab, 2, init=train([f], lab, 2, config=cfg), config=cfg)
    np.testing.assert_allclose(twice.raw, once.raw, rtol=1e-9, atol=1e-12)


def test_zero_weights_give_uniform():
    f, _ = toy()
    pm = predict_proba(ClassifierWeights.zeros(4), f)
    np.testing.assert_allclose(pm.probs, 0.25, atol=1e-7)


def test_logit_shift_invariance():
    f, _ = toy()
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, NUM_FEATURES + 1))
    shifted = w.copy()
    shifted[:, -1] += 7.5  # same constant added to every class logit
    np.testing.assert_allclose(predict_proba(w, f).probs, predict_proba(shifted, f).probs, atol=1e-6)


def test_predictions_validate():
    f, _ = toy()
    w = np.random.default_rng(1).normal(scale=20, size=(5, NUM_FEATURES + 1))
    pm = predict_proba(w, f)
    validate_probability_map(pm)
    np.testing.assert_allclose(pm.probs.sum(axis=2), 1.0, atol=1e-6)


def test_constant_image_features():
    f = extract_features(np.full((4, 5, 3), 0.3))
    assert f.shape == (4, 5, 11)
    np.testing.assert_allclose(f[..., 5:8], 0.3)
    np.testing.assert_allclose(f[..., 8:11], 0.0, atol=1e-7)
    assert f[..., 3].min() == 0.0 and f[..., 3].max() == 1.0


def test_single_pixel_coordinates():
    f = extract_features(np.full((1, 1, 3), 0.5))
    assert tuple(f[0, 0, 3:5]) == (0.0, 0.0)


def test_training_is_deterministic():
    f, labels = toy(4)
    lab = [PartialLabelMap(labels, 2)]
    a = train([f], lab, 2, config=TrainConfig(max_epochs=30))
    b = train([f], lab, 2, config=TrainConfig(max_epochs=30))
    assert a.w.tobytes() == b.w.tobytes()


def test_weights_round_trip(tmp_path):
    w = ClassifierWeights(np.random.default_rng(5).normal(size=(3, 12)))
    save_weights(tmp_path / "w.orwt", w)
    back = load_weights(tmp_path / "w.orwt")
    assert back.w.tobytes() == w.w.tobytes()


def test_non_finite_weights_rejected():
    with pytest.raises(ValueError):
        ClassifierWeights(np.full((2, 12), np.nan))
