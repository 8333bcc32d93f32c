"""Class debt: how many of the next ``Q`` annotations each class should receive.

The debt vector maximises the smallest class count after annotation,

    max_delta  min_c (n_c + delta_c)   s.t.  sum_c delta_c = Q,  delta_c >= 0,

which water-filling solves exactly: raise the lowest classes to a common
level, then hand the remainder out one unit per class in ascending index.
"""

from __future__ import annotations

import functools
import itertools
from typing import Iterable

import numpy as np


def class_counts(labeled: Iterable[tuple[object, int]], num_classes: int) -> np.ndarray:
    """Histogram of labels over ``(ref, class)`` pairs."""
    labels = np.fromiter((int(y) for _, y in labeled), dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    return np.bincount(labels, minlength=num_classes)


def items_per_class(counts, budget: int) -> np.ndarray:
    """Water-filling solution of the max-min allocation.

    Identical to granting one unit at a time to the class with the lowest
    ``n_c + delta_c`` (lowest index on ties), but O(C log C).
    """
    n = np.asarray(counts, dtype=np.int64)
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if n.ndim != 1 or n.size == 0:
        raise ValueError("counts must be a non-empty vector")
    if np.any(n < 0):
        raise ValueError("counts must be non-negative")
    C = n.size
    s = np.sort(n)
    prefix = np.concatenate([[0], np.cumsum(s)])
    # raising the k lowest classes to s[k-1] costs k * s[k-1] - prefix[k]
    level = int(s[0])
    for j in range(1, C + 1):
        top = budget + prefix[j]
        cand = top // j
        if j < C:
            cand = min(cand, int(s[j]))
        if cand >= s[j - 1]:
            level = int(cand)
    delta = np.maximum(level - n, 0)
    rest = budget - int(delta.sum())
    # leftover units go to the classes sitting on the water line, ascending index
    on_line = np.flatnonzero(n + delta == level)
    delta[on_line[:rest]] += 1
    assert delta.sum() == budget
    return delta


def items_per_class_greedy(counts, budget: int) -> np.ndarray:
    """Unit-by-unit water-filling; reference for :func:`items_per_class`."""
    n = np.asarray(counts, dtype=np.int64)
    delta = np.zeros_like(n)
    for _ in range(budget):
        delta[int(np.argmin(n + delta))] += 1
    return delta


@functools.lru_cache(maxsize=64)
def feasible_deltas(num_classes: int, budget: int) -> np.ndarray:
    """Every non-negative integer vector of length ``num_classes`` summing to ``budget``."""
    rows = list(itertools.product(range(budget + 1), repeat=num_classes - 1))
    heads = np.array(rows, dtype=np.int64).reshape(len(rows), num_classes - 1)
    last = budget - heads.sum(axis=1)
    ok = last >= 0
    out = np.column_stack([heads[ok], last[ok]])
    out.setflags(write=False)
    return out


def brute_force_optimum(counts, budget: int) -> tuple[int, list[tuple[int, ...]]]:
    """Enumerate every feasible ``delta``; return the optimal min count and all maximisers."""
    n = np.asarray(counts, dtype=np.int64)
    deltas = feasible_deltas(n.size, budget)
    values = (n + deltas).min(axis=1)
    best = int(values.max())
    return best, [tuple(int(x) for x in d) for d in deltas[values == best]]
