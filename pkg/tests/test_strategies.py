import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oreal.balancing import items_per_class
from oreal.core import ProbabilityMap
from oreal.scoring import superpixel_scores
from oreal.strategies import (
    ALState,
    BudgetExceedsPool,
    StrategyKind,
    allocate_by_class,
    cbal_score,
    query,
    score_superpixels,
    select_random,
    select_top_k,
)
from oreal.superpixel import SuperpixelPartition, SuperpixelRef, grid_partition

A, B, C_ = SuperpixelRef(0, 0), SuperpixelRef(0, 1), SuperpixelRef(0, 2)


def random_world(seed, n_images=3, C=3, size=8, K=4):
    rng = np.random.default_rng(seed)
    parts = [grid_partition(size, size, K) for _ in range(n_images)]
    pms = [ProbabilityMap(rng.dirichlet(np.ones(C) * 0.5, size=(size, size))) for _ in range(n_images)]
    return parts, pms


def test_hand_trace():
    H = np.array([[0.2, 0.9], [0.6, 0.5], [0.7, 0.1]])
    assert tuple(items_per_class((0, 2), 2)) == (2, 0)
    assert allocate_by_class([A, B, C_], H, (0, 2), 2) == [C_, B]


def test_neediest_class_goes_first_on_collision():
    # both classes rank a first; class 1 has fewer labels so it gets a
    H = np.array([[0.9, 0.9], [0.5, 0.1], [0.1, 0.5]])
    got = allocate_by_class([A, B, C_], H, (3, 1), 2)
    assert got[0] == A and len(set(got)) == 2


def test_single_class_reduces_to_top_k():
    rng = np.random.default_rng(1)
    refs = [SuperpixelRef(i // 4, i % 4) for i in range(12)]
    h = rng.random(12)
    got = allocate_by_class(refs, h[:, None], (5,), 5)
    assert got == select_top_k(dict(zip(refs, h)), 5)


def test_whole_pool():
    H = np.random.default_rng(2).random((3, 2))
    assert set(allocate_by_class([A, B, C_], H, (1, 0), 3)) == {A, B, C_}


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_quotas_without_collisions(seed):
    rng = np.random.default_rng(seed)
    C = int(rng.integers(1, 5))
    per = int(rng.integers(1, 5))
    refs = [SuperpixelRef(i, 0) for i in range(C * per)]
    home = np.repeat(np.arange(C), per)
    # a superpixel is uncertain only for its home class, so class rankings never collide
    H = rng.random((len(refs), C)) * 0.1
    H[np.arange(len(refs)), home] += 1.0
    counts = rng.integers(0, 6, size=C)
    Q = int(rng.integers(0, per + 1))
    delta = items_per_class(counts, Q)
    if np.any(delta > per):
        return
    got = allocate_by_class(refs, H, counts, Q)
    assert len(got) == Q
    for c in range(C):
        mine = [r for r in got if home[r.image] == c]
        idx = np.flatnonzero(home == c)
        best = [refs[i] for i in idx[np.argsort(-H[idx, c], kind="stable")][: delta[c]]]
        assert sorted(mine) == sorted(best)


def test_top_k_examples():
    scores = {A: 0.9, B: 0.5, C_: 0.1}
    assert select_top_k(scores, 2) == [A, B]
    assert select_top_k(scores, 0) == []
    ties = {SuperpixelRef(1, 0): 0.3, SuperpixelRef(0, 5): 0.3, SuperpixelRef(0, 2): 0.3}
    assert select_top_k(ties, 2) == [SuperpixelRef(0, 2), SuperpixelRef(0, 5)]
    with pytest.raises(BudgetExceedsPool):
        select_top_k(scores, 4)


def test_random_selection():
    state = ALState({}, tuple(SuperpixelRef(0, k) for k in range(5)))
    assert sorted(select_random(state, 5, 0)) == list(state.unlabeled)
    assert select_random(state, 0, 0) == []
    assert select_random(state, 3, 7) == select_random(state, 3, 7)
    with pytest.raises(BudgetExceedsPool):
        select_random(state, 6, 0)


def test_entropy_kind_is_composition():
    pm = ProbabilityMap(np.array([[[0.5, 0.5], [1.0, 0.0]]]))
    part = SuperpixelPartition(np.array([[0, 1]]))
    state = ALState.initial([part])
    got = score_superpixels(state, [pm], [part], "entropy", "max")
    expected = superpixel_scores(pm, part, "entropy", "max")
    assert got == {A: expected[0], B: expected[1]}


def test_revisiting_sp_uniform_frequencies_match_entropy():
    # four 1x2 superpixels, predicted classes 0, 1, 0, 1
    p = np.array([[[0.6, 0.4], [0.9, 0.1], [0.3, 0.7], [0.45, 0.55]],
                  [[0.55, 0.45], [0.8, 0.2], [0.1, 0.9], [0.35, 0.65]]])
    pm = ProbabilityMap(p)
    part = SuperpixelPartition(np.array([[0, 0, 1, 1], [2, 2, 3, 3]]))
    state = ALState.initial([part])
    rev = score_superpixels(state, [pm], [part], "revisiting_sp", "mean")
    ent = score_superpixels(state, [pm], [part], "entropy", "mean")
    for r in ent:
        assert rev[r] == pytest.approx(ent[r], rel=1e-12)
    assert select_top_k(rev, 2) == select_top_k(ent, 2)


def test_cbal_hand_example():
    s = cbal_score([0.6, 0.6], [[0.9, 0.1], [0.5, 0.5]], [1, 0])
    np.testing.assert_allclose(s, [0.6 - np.sqrt(0.02), 0.6 - np.sqrt(0.5)])
    assert s[0] == pytest.approx(0.4586, abs=1e-4) and s[1] == pytest.approx(-0.1071, abs=1e-4)


def test_cbal_needs_budget():
    parts, pms = random_world(0)
    with pytest.raises(ValueError):
        score_superpixels(ALState.initial(parts), pms, parts, "cbal", "max")


def test_fold_guards():
    state = ALState.initial([grid_partition(2, 2, 4)])
    nxt = state.fold([(A, 1)])
    assert nxt.step == 1 and A not in nxt.unlabeled and nxt.labeled[A] == 1
    with pytest.raises(ValueError):
        nxt.fold([(A, 0)])
    with pytest.raises(ValueError):
        state.fold([(SuperpixelRef(3, 0), 0)])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(StrategyKind)), st.sampled_from(["max", "mean"]))
def test_query_contract(seed, kind, mode):
    parts, pms = random_world(seed)
    state = ALState.initial(parts)
    rng = np.random.default_rng(seed)
    first = select_random(state, 4, seed)
    state = state.fold([(r, int(rng.integers(3))) for r in first])
    Q = int(rng.integers(0, len(state.unlabeled) + 1))
    got = query(kind, state, pms, parts, Q, mode, seed=seed)
    assert len(got) == Q
    assert len(set(got)) == Q
    assert set(got) <= set(state.unlabeled)
    with pytest.raises(BudgetExceedsPool):
        query(kind, state, pms, parts, len(state.unlabeled) + 1, mode, seed=seed)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_selection_invariant_to_positive_rescaling(seed, k):
    parts, pms = random_world(seed)
    state = ALState.initial(parts)
    for kind in ("entropy", "bvsb", "revisiting_sp", "pixelbal"):
        s = score_superpixels(state, pms, parts, kind, "max")
        assert select_top_k(s, 5) == select_top_k({r: v * k for r, v in s.items()}, 5)
    rng = np.random.default_rng(seed)
    refs = list(state.unlabeled)
    H = rng.random((len(refs), 3))
    counts = rng.integers(0, 4, size=3)
    assert allocate_by_class(refs, H, counts, 5) == allocate_by_class(refs, H * k, counts, 5)
