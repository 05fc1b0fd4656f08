"""Segment importance scoring and ordering.

A segment's importance is the mean absolute saliency over its pixels.
Segments are ranked descending; equal importances break ties by ascending
label so the order is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .segmentation import SegmentMap
from .tensor import SaliencyMap


@dataclass(frozen=True)
class SegmentRanking:
    ordered_labels: tuple[int, ...]
    importances: tuple[float, ...]  # aligned with ordered_labels

    def top(self, k: int) -> tuple[int, ...]:
        if not 1 <= k <= len(self.ordered_labels):
            raise ParameterError(
                f"k must lie in [1, {len(self.ordered_labels)}], got {k}"
            )
        return self.ordered_labels[:k]


def _check_dims(sal: SaliencyMap, seg: SegmentMap) -> None:
    if (sal.height, sal.width) != (seg.height, seg.width):
        raise ParameterError(
            f"saliency is {sal.height}x{sal.width} but segmentation is "
            f"{seg.height}x{seg.width}"
        )


def _all_importances(sal: SaliencyMap, seg: SegmentMap) -> np.ndarray:
    absolute = np.abs(sal.data.astype(np.float64))
    sums = np.bincount(seg.labels, weights=absolute, minlength=seg.segment_count)
    counts = np.bincount(seg.labels, minlength=seg.segment_count)
    return sums / counts


def segment_importance(sal: SaliencyMap, seg: SegmentMap, label: int) -> float:
    """Mean of |saliency| over the segment's pixels."""
    _check_dims(sal, seg)
    if not 0 <= label < seg.segment_count:
        raise ParameterError(f"label {label} out of range [0, {seg.segment_count})")
    # same accumulation path as rank_segments so the two agree bitwise
    return float(_all_importances(sal, seg)[label])


def rank_segments(sal: SaliencyMap, seg: SegmentMap) -> SegmentRanking:
    """All labels ordered by importance descending, ties by ascending label."""
    _check_dims(sal, seg)
    importances = _all_importances(sal, seg)
    # lexsort: last key is primary, so sort by -importance then label
    labels = np.arange(seg.segment_count)
    order = np.lexsort((labels, -importances))
    return SegmentRanking(
        ordered_labels=tuple(int(l) for l in order),
        importances=tuple(float(importances[l]) for l in order),
    )
