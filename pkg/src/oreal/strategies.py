"""Query strategies: map the unlabelled pool and current model outputs to a query set.

Every strategy returns exactly ``Q`` distinct unlabelled superpixels. Score
ties are broken by ``(image, sp)`` ascending.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from oreal.balancing import class_counts, items_per_class
from oreal.core import ProbabilityMap
from oreal.scoring import AggregationMode, aggregate_superpixels, binary_entropy, superpixel_scores
from oreal.superpixel import SuperpixelPartition, SuperpixelRef


class BudgetExceedsPool(ValueError):
    pass


class StrategyKind(str, enum.Enum):
    RANDOM = "random"
    ENTROPY = "entropy"
    BVSB = "bvsb"
    REVISITING_SP = "revisiting_sp"
    PIXEL_BAL = "pixelbal"
    CBAL = "cbal"
    OREAL = "oreal"


@dataclass(frozen=True)
class ALState:
    """Labelled pairs ``A_t`` and the unlabelled pool ``U_t`` (kept sorted)."""

    labeled: Mapping[SuperpixelRef, int] = field(default_factory=dict)
    unlabeled: tuple[SuperpixelRef, ...] = ()
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "unlabeled", tuple(sorted(SuperpixelRef(*r) for r in self.unlabeled)))
        overlap = set(self.labeled).intersection(self.unlabeled)
        if overlap:
            raise ValueError(f"{len(overlap)} superpixels are both labelled and unlabelled")

    @classmethod
    def initial(cls, partitions: Sequence[SuperpixelPartition]) -> "ALState":
        pool = [SuperpixelRef(i, k) for i, p in enumerate(partitions) for k in range(p.K)]
        return cls({}, tuple(pool), 0)

    def fold(self, answers: Sequence[tuple[SuperpixelRef, int]]) -> "ALState":
        """Move annotated superpixels from ``U`` to ``A`` and advance the step."""
        labeled = dict(self.labeled)
        for ref, y in answers:
            ref = SuperpixelRef(*ref)
            if ref in labeled:
                raise ValueError(f"{ref} annotated twice")
            labeled[ref] = int(y)
        taken = {SuperpixelRef(*r) for r, _ in answers}
        missing = taken.difference(self.unlabeled)
        if missing:
            raise ValueError(f"{len(missing)} answered superpixels were not in the pool")
        pool = tuple(r for r in self.unlabeled if r not in taken)
        return ALState(labeled, pool, self.step + 1)


def _check_budget(Q: int, pool: int) -> None:
    if Q < 0 or Q > pool:
        raise BudgetExceedsPool(f"budget {Q} does not fit a pool of {pool}")


def select_random(state: ALState, Q: int, seed) -> list[SuperpixelRef]:
    _check_budget(Q, len(state.unlabeled))
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(state.unlabeled), size=Q, replace=False)
    return [state.unlabeled[i] for i in idx]


def select_top_k(scores: Mapping[SuperpixelRef, float], Q: int) -> list[SuperpixelRef]:
    _check_budget(Q, len(scores))
    refs = sorted(scores)
    s = np.array([scores[r] for r in refs], dtype=np.float64)
    order = np.argsort(-s, kind="stable")[:Q]
    return [refs[i] for i in order]


def _pool_by_image(state: ALState) -> dict[int, np.ndarray]:
    by_image: dict[int, list[int]] = {}
    for img, sp in state.unlabeled:
        by_image.setdefault(img, []).append(sp)
    return {img: np.asarray(sps) for img, sps in by_image.items()}


def _per_superpixel(state, prob_maps, partitions, fn) -> tuple[list[SuperpixelRef], np.ndarray]:
    """Evaluate ``fn(pm, part) -> (K, ...)`` per image and gather rows of the unlabelled pool."""
    refs, rows = [], []
    for img, sps in sorted(_pool_by_image(state).items()):
        values = fn(prob_maps[img], partitions[img])
        rows.append(values[sps])
        refs.extend(SuperpixelRef(img, int(k)) for k in sps)
    if not rows:
        return [], np.zeros((0,))
    return refs, np.concatenate(rows)


def _predicted_dominant(pm: ProbabilityMap, part: SuperpixelPartition) -> np.ndarray:
    C = pm.num_classes
    pred = np.argmax(pm.probs, axis=2).ravel()
    hist = np.bincount(part.assignment.ravel().astype(np.int64) * C + pred, minlength=part.K * C)
    return np.argmax(hist.reshape(part.K, C), axis=1)


def _inverse_frequency_weights(freq: np.ndarray, pool_size: int) -> np.ndarray:
    w = 1.0 / (freq + 1.0 / pool_size)
    return w / w.mean()


def cbal_score(entropy, mean_prob, debt) -> np.ndarray:
    """Entropy minus the distance of each mean probability vector to ``debt / |debt|_1``."""
    debt = np.asarray(debt, dtype=np.float64)
    mean_prob = np.atleast_2d(np.asarray(mean_prob, dtype=np.float64))
    # a zero debt (Q = 0) carries no preference, so compare against uniform
    target = debt / debt.sum() if debt.sum() > 0 else np.full(debt.size, 1.0 / debt.size)
    return np.asarray(entropy, dtype=np.float64) - np.linalg.norm(mean_prob - target, axis=1)


def score_superpixels(
    state: ALState,
    prob_maps: Sequence[ProbabilityMap],
    partitions: Sequence[SuperpixelPartition],
    kind: StrategyKind | str,
    mode: AggregationMode | str = AggregationMode.MAX,
    budget: int | None = None,
) -> dict[SuperpixelRef, float]:
    """Uncertainty score of every unlabelled superpixel for the score-and-rank strategies.

    ``revisiting_sp`` scales entropy by an inverse-frequency weight of the
    superpixel's predicted class, frequencies counted over predicted
    superpixel labels of the pool. ``pixelbal`` does the same with frequencies
    from summed pixel probabilities. ``cbal`` subtracts the Euclidean distance
    between the superpixel's mean probability vector and the normalised class
    debt for ``budget`` from its entropy.
    """
    kind = StrategyKind(kind)
    if kind in (StrategyKind.ENTROPY, StrategyKind.BVSB):
        pixel = "entropy" if kind is StrategyKind.ENTROPY else "bvsb"
        refs, s = _per_superpixel(
            state, prob_maps, partitions, lambda pm, part: superpixel_scores(pm, part, pixel, mode)
        )
        return dict(zip(refs, s.tolist()))

    if kind not in (StrategyKind.REVISITING_SP, StrategyKind.PIXEL_BAL, StrategyKind.CBAL):
        raise ValueError(f"{kind.value} is not a score-and-rank strategy")
    C = prob_maps[0].num_classes
    # columns: entropy score, predicted class, pixel count, then C summed probabilities
    def stats(pm, part):
        ent = superpixel_scores(pm, part, "entropy", mode)
        dom = _predicted_dominant(pm, part)
        psum = part.reduce(pm.probs.astype(np.float64), np.add)
        return np.column_stack([ent, dom, part.sizes, psum])

    refs, table = _per_superpixel(state, prob_maps, partitions, stats)
    if not refs:
        return {}
    ent, dom, size, psum = table[:, 0], table[:, 1].astype(int), table[:, 2], table[:, 3:]

    if kind is StrategyKind.CBAL:
        if budget is None:
            raise ValueError("cbal needs the query budget to compute the class debt")
        debt = items_per_class(class_counts(state.labeled.items(), C), budget)
        score = cbal_score(ent, psum / size[:, None], debt)
        return dict(zip(refs, score.tolist()))

    if kind is StrategyKind.REVISITING_SP:
        freq = np.bincount(dom, minlength=C) / len(refs)
    else:
        freq = psum.sum(axis=0) / size.sum()
    w = _inverse_frequency_weights(freq, len(refs))
    return dict(zip(refs, (ent * w[dom]).tolist()))


def ovr_entropy_table(
    state: ALState,
    prob_maps: Sequence[ProbabilityMap],
    partitions: Sequence[SuperpixelPartition],
    mode: AggregationMode | str = AggregationMode.MAX,
) -> tuple[list[SuperpixelRef], np.ndarray]:
    """``(refs, H)`` with ``H[i, c]`` the aggregated OVR entropy of ``refs[i]`` for class ``c``."""
    return _per_superpixel(
        state,
        prob_maps,
        partitions,
        lambda pm, part: aggregate_superpixels(binary_entropy(pm.probs), part, mode),
    )


def allocate_by_class(
    refs: Sequence[SuperpixelRef], H: np.ndarray, counts, Q: int
) -> list[SuperpixelRef]:
    """Class-debt selection over a precomputed OVR entropy table.

    Classes are served neediest first (smallest current count, then lowest
    index); each takes its ``delta_c`` highest-``H_c`` superpixels from what
    is still in the pool, so the result always has ``Q`` distinct entries.
    """
    _check_budget(Q, len(refs))
    order = sorted(range(len(refs)), key=lambda i: tuple(refs[i]))
    refs = [SuperpixelRef(*refs[i]) for i in order]
    H = np.asarray(H, dtype=np.float64).reshape(len(order), -1)[order]
    n = np.asarray(counts, dtype=np.int64)
    delta = items_per_class(n, Q)
    taken = np.zeros(len(refs), dtype=bool)
    chosen: list[int] = []
    for c in sorted(range(len(n)), key=lambda c: (n[c], c)):
        if delta[c] == 0:
            continue
        ranked = np.argsort(-H[:, c], kind="stable")
        picks = ranked[~taken[ranked]][: delta[c]]
        taken[picks] = True
        chosen.extend(picks.tolist())
    return [refs[i] for i in chosen]


def select_oreal(
    state: ALState,
    prob_maps: Sequence[ProbabilityMap],
    partitions: Sequence[SuperpixelPartition],
    Q: int,
    mode: AggregationMode | str = AggregationMode.MAX,
) -> list[SuperpixelRef]:
    _check_budget(Q, len(state.unlabeled))
    C = prob_maps[0].num_classes
    refs, H = ovr_entropy_table(state, prob_maps, partitions, mode)
    return allocate_by_class(refs, H, class_counts(state.labeled.items(), C), Q)


def query(
    kind: StrategyKind | str,
    state: ALState,
    prob_maps: Sequence[ProbabilityMap] | None,
    partitions: Sequence[SuperpixelPartition],
    Q: int,
    mode: AggregationMode | str = AggregationMode.MAX,
    seed=None,
) -> list[SuperpixelRef]:
    """Dispatch to the strategy named by ``kind``."""
    kind = StrategyKind(kind)
    if kind is StrategyKind.RANDOM:
        return select_random(state, Q, seed)
    if kind is StrategyKind.OREAL:
        return select_oreal(state, prob_maps, partitions, Q, mode)
    _check_budget(Q, len(state.unlabeled))
    return select_top_k(score_superpixels(state, prob_maps, partitions, kind, mode, budget=Q), Q)
