import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oreal import io
from oreal.core import (
    UNLABELED,
    GroundTruthMask,
    NegativeEntry,
    NotNormalized,
    PartialLabelMap,
    ProbabilityMap,
    predicted_label_map,
    validate_probability_map,
)


def pm1(*p):
    return ProbabilityMap(np.array(p, dtype=np.float64).reshape(1, 1, -1))


def test_uniform_is_valid():
    validate_probability_map(pm1(0.5, 0.5))


def test_not_normalized():
    with pytest.raises(NotNormalized) as err:
        validate_probability_map(pm1(0.7, 0.4))
    assert err.value.pixel == 0
    assert err.value.total == pytest.approx(1.1, abs=1e-6)


def test_negative_entry():
    with pytest.raises(NegativeEntry) as err:
        validate_probability_map(pm1(1.2, -0.2))
    assert (err.value.pixel, err.value.cls) == (0, 1)


@pytest.mark.parametrize(
    "probs, expected",
    [((0.1, 0.9), 1), ((0.5, 0.5), 0), ((0.2, 0.3, 0.5), 2)],
)
def test_predicted_label(probs, expected):
    assert predicted_label_map(pm1(*probs))[0, 0] == expected


def test_containers_are_immutable():
    pm = pm1(0.5, 0.5)
    with pytest.raises(ValueError):
        pm.probs[0, 0, 0] = 1.0


def test_partial_map_rejects_out_of_range():
    with pytest.raises(ValueError):
        PartialLabelMap(np.array([[3]]), 3)
    with pytest.raises(ValueError):
        GroundTruthMask(np.array([[-1]]), 3)
    assert PartialLabelMap.empty(2, 3, 4).labeled_mask.sum() == 0


@settings(deadline=None, max_examples=50)
@given(
    logits=arrays(np.float64, (3, 4, 5), elements=st.floats(-5, 5)),
    scale=st.floats(0.1, 10),
    shift=st.floats(-3, 3),
)
def test_argmax_invariant_under_monotone_transform(logits, scale, shift):
    p = np.exp(logits)
    p /= p.sum(axis=2, keepdims=True)
    q = np.exp(scale * np.log(p) + shift)
    q /= q.sum(axis=2, keepdims=True)
    a = predicted_label_map(ProbabilityMap(p))
    b = predicted_label_map(ProbabilityMap(q))
    # float32 storage can merge near-ties; only compare where the top-2 gap is visible
    top2 = np.sort(p, axis=2)[..., -2:]
    clear = (top2[..., 1] - top2[..., 0]) > 1e-5
    assert np.array_equal(a[clear], b[clear])


def test_probability_map_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    p = rng.random((3, 5, 4))
    p /= p.sum(axis=2, keepdims=True)
    pm = ProbabilityMap(p)
    io.save_probability_map(tmp_path / "p.orpm", pm)
    raw = (tmp_path / "p.orpm").read_bytes()
    assert raw[:4] == b"ORPM"
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [3, 5, 4]
    back = io.load_probability_map(tmp_path / "p.orpm")
    assert np.array_equal(back.probs, pm.probs)


def test_label_map_round_trip_keeps_unlabeled(tmp_path):
    lab = np.array([[UNLABELED, 0], [2, UNLABELED]])
    io.save_label_map(tmp_path / "l.orlb", lab, 3)
    back, C = io.load_label_map(tmp_path / "l.orlb")
    assert C == 3
    assert back.tolist() == [[-1, 0], [2, -1]]
    assert np.frombuffer((tmp_path / "l.orlb").read_bytes()[16:], "<i4")[0] == -1


def test_bad_magic():
    blob = io.pack(b"ORLB", np.zeros((2, 2)), 3)
    with pytest.raises(io.ContainerError):
        io.unpack(blob, b"ORPM")
    with pytest.raises(io.ContainerError):
        io.unpack(blob[:-4], b"ORLB")
