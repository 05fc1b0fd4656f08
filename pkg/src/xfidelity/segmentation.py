"""SLIC superpixel segmentation and the segment-map container.

The segmentation is fully deterministic: centers start on a regular grid
with spacing S = sqrt(H*W/K), move to the lowest-gradient pixel of their
3x3 neighborhood, then local k-means runs in 2Sx2S windows under the
distance D = sqrt(d_lab^2 + (d_xy/S)^2 * m^2).  A connectivity pass merges
any component smaller than floor(S^2/4) into its largest 4-adjacent
neighbor and relabels densely in row-major first-appearance order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ValidationError
from .tensor import (
    SALM_VERSION_SEGMENTS,
    ImageTensor,
    _salm_pack,
    _salm_unpack,
)

# sRGB (D65) linear-light to XYZ
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_D65 = np.array([0.95047, 1.0, 1.08883])
_LAB_DELTA = 6.0 / 29.0


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert sRGB values in [0, 1] (..., 3) to CIELAB under D65."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ParameterError("rgb_to_lab expects a trailing axis of size 3")
    linear = np.where(
        rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4
    )
    xyz = linear @ _RGB_TO_XYZ.T
    t = xyz / _D65
    f = np.where(
        t > _LAB_DELTA**3, np.cbrt(t), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0
    )
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_lab; output clipped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    if lab.shape[-1] != 3:
        raise ParameterError("lab_to_rgb expects a trailing axis of size 3")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > _LAB_DELTA, f**3, 3.0 * _LAB_DELTA**2 * (f - 4.0 / 29.0))
    linear = (t * _D65) @ _XYZ_TO_RGB.T
    srgb = np.where(
        linear <= 0.0031308,
        linear * 12.92,
        1.055 * np.maximum(linear, 0.0) ** (1.0 / 2.4) - 0.055,
    )
    return np.clip(srgb, 0.0, 1.0)


@dataclass(frozen=True)
class SlicParams:
    """Superpixel parameters; seed is carried for config provenance only
    (the algorithm itself draws no random numbers)."""

    requested_segments: int = 100
    compactness: float = 10.0
    iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.requested_segments < 2:
            raise ParameterError("requested_segments must be at least 2")
        if not self.compactness > 0:
            raise ParameterError("compactness must be positive")
        if self.iterations < 1:
            raise ParameterError("iterations must be at least 1")


@dataclass(frozen=True)
class SegmentMap:
    """Dense label raster: values in [0, segment_count), each label present
    and 4-connected."""

    height: int
    width: int
    labels: np.ndarray
    segment_count: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("segment map dimensions must be positive")
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if labels.ndim != 1 or labels.size != self.height * self.width:
            raise ValidationError(
                f"label buffer must hold {self.height * self.width} values"
            )
        if self.segment_count < 1:
            raise ValidationError("segment_count must be positive")
        if labels.min() < 0 or labels.max() >= self.segment_count:
            raise ValidationError("labels must lie in [0, segment_count)")
        present = np.bincount(labels, minlength=self.segment_count)
        if np.any(present == 0):
            missing = int(np.flatnonzero(present == 0)[0])
            raise ValidationError(f"label {missing} has no pixels")
        # one connected component per label <=> total components == label count
        _, component_count = connected_components(
            labels.reshape(self.height, self.width)
        )
        if component_count != self.segment_count:
            raise ValidationError(
                f"labels split into {component_count} connected components "
                f"but segment_count is {self.segment_count}"
            )
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def grid(self) -> np.ndarray:
        return self.labels.reshape(self.height, self.width)


def connected_components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of a 2-D label raster.

    Returns (component raster, component count); components are numbered
    densely in row-major first-appearance order.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ParameterError("connected_components expects a 2-D raster")
    h, w = labels.shape
    n = h * w
    index = np.arange(n).reshape(h, w)

    joins_a: list[np.ndarray] = []
    joins_b: list[np.ndarray] = []
    if w > 1:
        same = labels[:, :-1] == labels[:, 1:]
        joins_a.append(index[:, :-1][same])
        joins_b.append(index[:, 1:][same])
    if h > 1:
        same = labels[:-1, :] == labels[1:, :]
        joins_a.append(index[:-1, :][same])
        joins_b.append(index[1:, :][same])

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if joins_a:
        for a, b in zip(
            np.concatenate(joins_a).tolist(), np.concatenate(joins_b).tolist()
        ):
            ra, rb = find(a), find(b)
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    uniq, first = np.unique(roots, return_index=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(uniq.size, dtype=np.int32)
    rank[order] = np.arange(uniq.size, dtype=np.int32)
    comp = rank[np.searchsorted(uniq, roots)]
    return comp.reshape(h, w), int(uniq.size)


def _gradient_map(lab: np.ndarray) -> np.ndarray:
    """Squared CIELAB gradient magnitude with clamped borders."""
    h, w, _ = lab.shape
    xs = np.arange(w)
    ys = np.arange(h)
    dx = lab[:, np.clip(xs + 1, 0, w - 1), :] - lab[:, np.clip(xs - 1, 0, w - 1), :]
    dy = lab[np.clip(ys + 1, 0, h - 1), :, :] - lab[np.clip(ys - 1, 0, h - 1), :, :]
    return (dx * dx).sum(axis=2) + (dy * dy).sum(axis=2)


def _grid_coords(extent: int, spacing: float) -> list[int]:
    coords: list[int] = []
    pos = spacing / 2.0
    while pos < extent:
        coords.append(min(int(math.floor(pos)), extent - 1))
        pos += spacing
    if not coords:
        coords.append((extent - 1) // 2)
    return coords


def _merge_small_components(
    comp: np.ndarray, count: int, min_size: int
) -> np.ndarray:
    """Merge components below min_size into their largest 4-adjacent
    neighbor (ties: lowest component id); returns final dense labels."""
    h, w = comp.shape
    sizes = np.bincount(comp.reshape(-1), minlength=count).astype(np.int64)

    adjacency: list[set[int]] = [set() for _ in range(count)]
    if w > 1:
        diff = comp[:, :-1] != comp[:, 1:]
        for a, b in zip(comp[:, :-1][diff].tolist(), comp[:, 1:][diff].tolist()):
            adjacency[a].add(b)
            adjacency[b].add(a)
    if h > 1:
        diff = comp[:-1, :] != comp[1:, :]
        for a, b in zip(comp[:-1, :][diff].tolist(), comp[1:, :][diff].tolist()):
            adjacency[a].add(b)
            adjacency[b].add(a)

    target = list(range(count))

    def resolve(i: int) -> int:
        while target[i] != i:
            target[i] = target[target[i]]
            i = target[i]
        return i

    while True:
        small = [
            (sizes[i], i)
            for i in range(count)
            if target[i] == i and sizes[i] < min_size and adjacency[i]
        ]
        if not small:
            break
        _, victim = min(small)
        # largest live neighbor wins the pixels; lowest id breaks ties
        winner = min(
            (resolve(nb) for nb in adjacency[victim]),
            key=lambda r: (-sizes[r], r),
        )
        if winner == victim:
            break
        target[victim] = winner
        sizes[winner] += sizes[victim]
        sizes[victim] = 0
        merged = (adjacency[winner] | {resolve(nb) for nb in adjacency[victim]})
        merged.discard(winner)
        merged.discard(victim)
        adjacency[winner] = merged
        adjacency[victim] = set()
        for other in merged:
            adjacency[other].discard(victim)
            adjacency[other].add(winner)

    final_root = np.fromiter(
        (resolve(i) for i in range(count)), dtype=np.int64, count=count
    )
    flat = final_root[comp.reshape(-1)]
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(uniq.size, dtype=np.int32)
    rank[order] = np.arange(uniq.size, dtype=np.int32)
    return rank[np.searchsorted(uniq, flat)]


def slic_segment(img: ImageTensor, params: SlicParams) -> SegmentMap:
    """Segment an image into superpixels; the realized count may differ
    from params.requested_segments."""
    h, w = img.height, img.width
    if h < 2 or w < 2:
        raise ParameterError("slic_segment needs an image of at least 2x2")
    k = params.requested_segments
    if k > h * w:
        raise ParameterError("requested_segments cannot exceed the pixel count")

    lab = rgb_to_lab(img.pixels)
    spacing = math.sqrt(h * w / k)
    gradient = _gradient_map(lab)

    ys = _grid_coords(h, spacing)
    xs = _grid_coords(w, spacing)
    centers_yx = []
    for cy in ys:
        for cx in xs:
            y0, y1 = max(0, cy - 1), min(h, cy + 2)
            x0, x1 = max(0, cx - 1), min(w, cx + 2)
            window = gradient[y0:y1, x0:x1]
            flat = int(np.argmin(window))  # first minimum in row-major order
            centers_yx.append((y0 + flat // (x1 - x0), x0 + flat % (x1 - x0)))
    n_centers = len(centers_yx)

    pos = np.array(centers_yx, dtype=np.float64)
    color = lab[pos[:, 0].astype(int), pos[:, 1].astype(int)].copy()

    # fallback assignment: nearest grid cell, used only if a pixel is never
    # inside any search window
    gy = np.clip(
        np.rint((np.arange(h) - spacing / 2.0) / spacing).astype(int), 0, len(ys) - 1
    )
    gx = np.clip(
        np.rint((np.arange(w) - spacing / 2.0) / spacing).astype(int), 0, len(xs) - 1
    )
    assign = (gy[:, None] * len(xs) + gx[None, :]).astype(np.int64)

    yy = np.arange(h, dtype=np.float64)[:, None]
    xx = np.arange(w, dtype=np.float64)[None, :]
    ratio = (params.compactness / spacing) ** 2

    for _ in range(params.iterations):
        best = np.full((h, w), np.inf)
        for ci in range(n_centers):
            cy, cx = pos[ci]
            y0, y1 = max(0, int(math.floor(cy - spacing))), min(
                h, int(math.ceil(cy + spacing)) + 1
            )
            x0, x1 = max(0, int(math.floor(cx - spacing))), min(
                w, int(math.ceil(cx + spacing)) + 1
            )
            if y0 >= y1 or x0 >= x1:
                continue
            d_lab = ((lab[y0:y1, x0:x1] - color[ci]) ** 2).sum(axis=2)
            d_xy = (yy[y0:y1] - cy) ** 2 + (xx[:, x0:x1] - cx) ** 2
            dist = d_lab + d_xy * ratio
            better = dist < best[y0:y1, x0:x1]  # ties keep the earlier center
            best[y0:y1, x0:x1][better] = dist[better]
            assign[y0:y1, x0:x1][better] = ci

        flat = assign.reshape(-1)
        counts = np.bincount(flat, minlength=n_centers).astype(np.float64)
        live = counts > 0
        sum_y = np.bincount(flat, weights=np.broadcast_to(yy, (h, w)).reshape(-1), minlength=n_centers)
        sum_x = np.bincount(flat, weights=np.broadcast_to(xx, (h, w)).reshape(-1), minlength=n_centers)
        pos[live, 0] = sum_y[live] / counts[live]
        pos[live, 1] = sum_x[live] / counts[live]
        for ch in range(3):
            s = np.bincount(flat, weights=lab[..., ch].reshape(-1), minlength=n_centers)
            color[live, ch] = s[live] / counts[live]

    comp, comp_count = connected_components(assign)
    min_size = int(spacing * spacing / 4.0)
    final = _merge_small_components(comp, comp_count, min_size)
    segment_count = int(final.max()) + 1
    return SegmentMap(h, w, final.astype(np.int32), segment_count)


def segment_indices(seg: SegmentMap, label: int) -> np.ndarray:
    """Ascending row-major pixel indices carrying the given label."""
    if not 0 <= label < seg.segment_count:
        raise ParameterError(
            f"label {label} out of range [0, {seg.segment_count})"
        )
    return np.flatnonzero(seg.labels == label)


def encode_segments(seg: SegmentMap) -> bytes:
    """Segment maps reuse the saliency container with version 0x02 and an
    unsigned 32-bit payload."""
    payload = seg.labels.astype("<u4").tobytes()
    return _salm_pack(SALM_VERSION_SEGMENTS, seg.height, seg.width, payload)


def decode_segments(payload: bytes) -> SegmentMap:
    height, width, body = _salm_unpack(payload, SALM_VERSION_SEGMENTS, 4)
    values = np.frombuffer(body, dtype="<u4")
    if values.size and values.max() >= 2**31:
        raise ValidationError("segment labels exceed the supported range")
    labels = values.astype(np.int32)
    count = int(labels.max()) + 1 if labels.size else 0
    return SegmentMap(height, width, labels, count)
