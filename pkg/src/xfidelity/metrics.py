"""Removal/insertion faithfulness baselines: Deletion, IAUC, IROF.

All three replace or restore pixels chosen by a saliency map and measure
how often the predictor still assigns the expected label.  They share one
replacement abstraction; the top-k selection breaks saliency ties by
ascending pixel index so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .predictor import Label, Predictor, Verdict
from .ranking import rank_segments
from .rng import RngStream
from .segmentation import SegmentMap, segment_indices
from .tensor import ImageTensor, SaliencyMap, gaussian_blur, per_channel_mean

_KIND_ALIASES = {
    "zero": "zero",
    "mean": "per-channel-mean",
    "per-channel-mean": "per-channel-mean",
    "random": "uniform-random",
    "uniform-random": "uniform-random",
    "blur": "blur",
}


@dataclass(frozen=True)
class ReplacementStrategy:
    """How removed pixels get filled: zero, per-channel-mean, uniform-random
    (seeded) or blur (values from a Gaussian-blurred copy)."""

    kind: str = "zero"
    blur_sigma: float = 5.0
    seed: int = 0

    def __post_init__(self):
        canonical = _KIND_ALIASES.get(self.kind)
        if canonical is None:
            raise ParameterError(
                f"kind must be one of {sorted(set(_KIND_ALIASES.values()))}, "
                f"got {self.kind!r}"
            )
        object.__setattr__(self, "kind", canonical)
        if not self.blur_sigma > 0:
            raise ParameterError("blur_sigma must be positive")


@dataclass(frozen=True)
class MetricPoint:
    """One operating point of a metric: accuracy over a set at a fixed k."""

    metric: str
    k: float
    accuracy: float
    verdicts: tuple[Label, ...]
    baseline_accuracy: float | None = None


@dataclass(frozen=True)
class MetricCurve:
    fractions: tuple[float, ...]
    accuracy_at_k: tuple[float, ...]
    verdicts: tuple[tuple[Label, ...], ...]

    def __post_init__(self):
        if not (len(self.fractions) == len(self.accuracy_at_k) == len(self.verdicts)):
            raise ParameterError("curve fields must have equal length")
        for f in self.fractions:
            if not 0.0 <= f <= 1.0:
                raise ParameterError("fractions must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ParameterError("fractions must be strictly increasing")

    @classmethod
    def from_points(cls, points: Sequence[MetricPoint]) -> "MetricCurve":
        return cls(
            fractions=tuple(p.k for p in points),
            accuracy_at_k=tuple(p.accuracy for p in points),
            verdicts=tuple(p.verdicts for p in points),
        )


def replace_pixels(
    img: ImageTensor, indices: np.ndarray, strategy: ReplacementStrategy
) -> ImageTensor:
    """Fill the listed pixels per the strategy; all others stay bitwise
    unchanged.  Random fills are drawn in ascending pixel order, three
    channel values per pixel."""
    indices = np.asarray(indices)
    if indices.size == 0:
        return img
    if indices.ndim != 1 or not np.issubdtype(indices.dtype, np.integer):
        raise ParameterError("indices must be a 1-D integer array")
    pixel_count = img.height * img.width
    if indices.min() < 0 or indices.max() >= pixel_count:
        raise ParameterError(f"indices must lie in [0, {pixel_count})")
    unique = np.unique(indices.astype(np.int64))
    slots = (unique[:, None] * 3 + np.arange(3)[None, :]).reshape(-1)
    data = img.data.copy()
    if strategy.kind == "zero":
        data[slots] = 0.0
    elif strategy.kind == "per-channel-mean":
        data[slots] = np.tile(per_channel_mean(img), unique.size)
    elif strategy.kind == "uniform-random":
        data[slots] = RngStream(strategy.seed).uniform(slots.size)
    else:
        data[slots] = gaussian_blur(img, strategy.blur_sigma).data[slots]
    return ImageTensor(img.height, img.width, data)


def top_k_pixel_indices(sal: SaliencyMap, k_fraction: float) -> np.ndarray:
    """Indices of the floor(k*H*W) highest-saliency pixels; ties broken by
    ascending pixel index."""
    if not 0.0 <= k_fraction <= 1.0:
        raise ParameterError("k_fraction must lie in [0, 1]")
    count = math.floor(k_fraction * sal.height * sal.width)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    values = sal.data.astype(np.float64)
    order = np.lexsort((np.arange(values.size), -values))
    return order[:count]


def _check_pair_dims(img: ImageTensor, sal: SaliencyMap) -> None:
    if (img.height, img.width) != (sal.height, sal.width):
        raise ParameterError(
            f"saliency {sal.height}x{sal.width} does not match image "
            f"{img.height}x{img.width}"
        )


def _accuracy(
    predictor: Predictor, images: list[ImageTensor], expected: Label
) -> tuple[float, tuple[Label, ...]]:
    probs = predictor.predict_probs(images)
    labels = tuple(Verdict.from_prob(p).label for p in probs)
    hits = sum(1 for lb in labels if lb is expected)
    return hits / len(labels), labels


def deletion_eval(
    predictor: Predictor,
    items: Sequence[tuple[ImageTensor, SaliencyMap]],
    k_fraction: float,
    strategy: ReplacementStrategy,
    expected_label: Label = Label.FAKE,
) -> MetricPoint:
    """Remove each image's top-k salient pixels and measure how often the
    expected label survives."""
    if not items:
        raise ParameterError("deletion_eval needs at least one item")
    removed = []
    for img, sal in items:
        _check_pair_dims(img, sal)
        removed.append(replace_pixels(img, top_k_pixel_indices(sal, k_fraction), strategy))
    accuracy, labels = _accuracy(predictor, removed, expected_label)
    return MetricPoint("deletion", k_fraction, accuracy, labels)


def insertion_eval(
    predictor: Predictor,
    items: Sequence[tuple[ImageTensor, SaliencyMap]],
    k_fraction: float,
    blur_sigma: float = 5.0,
    expected_label: Label = Label.FAKE,
) -> MetricPoint:
    """Restore each image's top-k salient pixels onto its blurred copy;
    reports both the restored accuracy and the blurred-baseline accuracy."""
    if not items:
        raise ParameterError("insertion_eval needs at least one item")
    baselines = []
    restored = []
    for img, sal in items:
        _check_pair_dims(img, sal)
        base = gaussian_blur(img, blur_sigma)
        indices = top_k_pixel_indices(sal, k_fraction)
        data = base.data.copy()
        if indices.size:
            slots = (indices[:, None] * 3 + np.arange(3)[None, :]).reshape(-1)
            data[slots] = img.data[slots]
        baselines.append(base)
        restored.append(ImageTensor(img.height, img.width, data))
    baseline_accuracy, _ = _accuracy(predictor, baselines, expected_label)
    accuracy, labels = _accuracy(predictor, restored, expected_label)
    return MetricPoint("iauc", k_fraction, accuracy, labels, baseline_accuracy)


def irof_eval(
    predictor: Predictor,
    items: Sequence[tuple[ImageTensor, SaliencyMap, SegmentMap]],
    k_segments: int,
    strategy: ReplacementStrategy,
    expected_label: Label = Label.FAKE,
) -> MetricPoint:
    """Remove each image's k most important segments (mean-|saliency|
    ranking) and measure surviving accuracy."""
    if not items:
        raise ParameterError("irof_eval needs at least one item")
    if k_segments < 0:
        raise ParameterError("k_segments must be non-negative")
    removed = []
    for img, sal, seg in items:
        _check_pair_dims(img, sal)
        if k_segments > seg.segment_count:
            raise ParameterError(
                f"k_segments {k_segments} exceeds segment count {seg.segment_count}"
            )
        if k_segments == 0:
            removed.append(img)
            continue
        ranking = rank_segments(sal, seg)
        indices = np.concatenate(
            [segment_indices(seg, lb) for lb in ranking.top(k_segments)]
        )
        removed.append(replace_pixels(img, indices, strategy))
    accuracy, labels = _accuracy(predictor, removed, expected_label)
    return MetricPoint("irof", float(k_segments), accuracy, labels)
