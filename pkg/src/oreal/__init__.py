"""Patch-based active learning for semantic segmentation.

One-vs-rest entropy with max aggregation and class-debt balancing (OREAL),
the usual uncertainty baselines, and a small closed-loop simulation harness
running on synthetic scenes.
"""

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

__version__ = "0.1.0"

__all__ = [
    "UNLABELED",
    "GroundTruthMask",
    "NegativeEntry",
    "NotNormalized",
    "PartialLabelMap",
    "ProbabilityMap",
    "predicted_label_map",
    "validate_probability_map",
]
