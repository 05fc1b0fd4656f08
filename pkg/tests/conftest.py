"""Shared helpers: deterministic image builders and probe predictors."""

from __future__ import annotations

import numpy as np
import pytest

from xfidelity import ImageTensor, Predictor
from xfidelity.rng import RngStream
from xfidelity.segmentation import SegmentMap
from xfidelity.tensor import SaliencyMap


def image_from_stream(height: int, width: int, seed: int) -> ImageTensor:
    """Random image on the k/255 grid so PNG round-trips are exact."""
    rng = RngStream(seed)
    levels = rng.integers(0, 256, height * width * 3).astype(np.float64)
    return ImageTensor(height, width, levels / 255.0)


def smooth_image(height: int, width: int, seed: int) -> ImageTensor:
    """Low-frequency random image; has real color structure for SLIC."""
    rng = RngStream(seed)
    coarse = rng.uniform(4 * 4 * 3).reshape(4, 4, 3)
    ys = np.linspace(0, 3, height)
    xs = np.linspace(0, 3, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, 3)
    x1 = np.minimum(x0 + 1, 3)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    px = (
        coarse[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + coarse[np.ix_(y0, x1)] * (1 - wy) * wx
        + coarse[np.ix_(y1, x0)] * wy * (1 - wx)
        + coarse[np.ix_(y1, x1)] * wy * wx
    )
    return ImageTensor.from_pixels(px)


class RecordingPredictor(Predictor):
    """Wraps another predictor and keeps every probe batch for inspection."""

    def __init__(self, inner: Predictor):
        self.inner = inner
        self.batch_limit = inner.batch_limit
        self.batches: list[list[ImageTensor]] = []

    def _predict(self, images):
        self.batches.append(list(images))
        return self.inner.predict_probs(images)


class FailAfterPredictor(Predictor):
    """Delegates until a query budget is exhausted, then raises."""

    def __init__(self, inner: Predictor, allowed: int):
        self.inner = inner
        self.batch_limit = inner.batch_limit
        self.allowed = allowed
        self.seen = 0

    def _predict(self, images):
        if self.seen + len(images) > self.allowed:
            raise RuntimeError("predictor budget exhausted")
        self.seen += len(images)
        return self.inner.predict_probs(images)


def ranking_oracle(sal: SaliencyMap, seg: SegmentMap):
    """Raster-order accumulation with plain floats; mirrors the contract, not
    the implementation."""
    totals = [0.0] * seg.segment_count
    counts = [0] * seg.segment_count
    for value, label in zip(sal.data.tolist(), seg.labels.tolist()):
        totals[label] += abs(float(value))
        counts[label] += 1
    imps = [t / c for t, c in zip(totals, counts)]
    order = sorted(range(seg.segment_count), key=lambda lb: (-imps[lb], lb))
    return order, [imps[lb] for lb in order]


def random_rect_segments(h: int, w: int, k: int, seed: int) -> SegmentMap:
    """Random connected partition built from recursive rectangle splits."""
    rng = RngStream(seed)
    rects = [(0, 0, h, w)]  # (top, left, height, width)
    while len(rects) < k:
        splittable = [i for i, r in enumerate(rects) if r[2] > 1 or r[3] > 1]
        if not splittable:
            break
        pick = splittable[int(rng.integers(0, len(splittable), 1)[0])]
        top, left, rh, rw = rects.pop(pick)
        if rh > 1 and (rw == 1 or rng.bernoulli(0.5, 1)[0]):
            cut = 1 + int(rng.integers(0, rh - 1, 1)[0])
            rects += [(top, left, cut, rw), (top + cut, left, rh - cut, rw)]
        else:
            cut = 1 + int(rng.integers(0, rw - 1, 1)[0])
            rects += [(top, left, rh, cut), (top, left + cut, rh, rw - cut)]
    raw = np.zeros((h, w), dtype=np.int64)
    for i, (top, left, rh, rw) in enumerate(rects):
        raw[top:top + rh, left:left + rw] = i
    # renumber densely by first appearance
    remap: dict[int, int] = {}
    flat = raw.reshape(-1)
    for v in flat.tolist():
        if v not in remap:
            remap[v] = len(remap)
    labels = np.array([remap[v] for v in flat.tolist()], dtype=np.int32)
    return SegmentMap(h, w, labels, len(remap))


@pytest.fixture
def tiny_image() -> ImageTensor:
    return image_from_stream(4, 4, seed=11)
