"""Native black-box saliency tools: RISE, Sobol total-order, LIME surrogate.

Each tool queries the predictor through prob_fake only and returns a
SaliencyMap.  Query budgets are exact: RISE issues mask_count queries,
Sobol design_size*(grid^2+2), LIME perturbation_count.  White-box maps
(Grad-CAM, XRAI) enter the pipeline as SALM files instead and never pass
through this module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ParameterError, SurrogateFitError
from .predictor import Label, Predictor
from .rng import RngStream
from .segmentation import SegmentMap
from .tensor import ImageTensor, SaliencyMap, bilinear_resize, gaussian_blur

# masks are generated per mask with a fixed draw count, so this batch size
# only bounds memory and cannot change any result
_PROBE_BATCH = 64


@dataclass(frozen=True)
class RiseParams:
    mask_count: int = 2000
    grid: int = 7
    keep_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mask_count < 1:
            raise ParameterError("mask_count must be at least 1")
        if self.grid < 1:
            raise ParameterError("grid must be at least 1")
        if not 0.0 < self.keep_prob < 1.0:
            raise ParameterError("keep_prob must lie strictly between 0 and 1")


@dataclass(frozen=True)
class SobolParams:
    grid: int = 8
    design_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.grid < 1:
            raise ParameterError("grid must be at least 1")
        if self.design_size < 2 or self.design_size & (self.design_size - 1):
            raise ParameterError("design_size must be a power of two, at least 2")


@dataclass(frozen=True)
class LimeParams:
    perturbation_count: int = 1000
    kernel_width: float = 0.25
    ridge_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.perturbation_count < 1:
            raise ParameterError("perturbation_count must be at least 1")
        if not self.kernel_width > 0:
            raise ParameterError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ParameterError("ridge_lambda must be non-negative")


def _class_scores(probs_fake: np.ndarray, explain_class: Label) -> np.ndarray:
    return probs_fake if explain_class is Label.FAKE else 1.0 - probs_fake


def _rise_mask(params: RiseParams, height: int, width: int, rng: RngStream) -> np.ndarray:
    """One mask: grid^2 Bernoulli cells, bilinear upsample to one cell beyond
    the target size, random sub-cell crop.  Consumes grid^2 + 2 draws."""
    s = params.grid
    cells = rng.bernoulli(params.keep_prob, s * s).astype(np.float64).reshape(s, s)
    cell_h = -(-height // s)
    cell_w = -(-width // s)
    up = bilinear_resize(cells, (s + 1) * cell_h, (s + 1) * cell_w)
    dy = int(rng.integers(0, cell_h, 1)[0])
    dx = int(rng.integers(0, cell_w, 1)[0])
    return up[dy:dy + height, dx:dx + width]


def rise_explain(
    predictor: Predictor,
    img: ImageTensor,
    params: RiseParams,
    explain_class: Label = Label.FAKE,
) -> SaliencyMap:
    """saliency = sum over masks of score * mask / (mask_count * keep_prob)."""
    rng = RngStream(params.seed)
    h, w = img.height, img.width
    px = img.pixels
    acc = np.zeros((h, w), dtype=np.float64)
    for start in range(0, params.mask_count, _PROBE_BATCH):
        count = min(_PROBE_BATCH, params.mask_count - start)
        masks = [_rise_mask(params, h, w, rng) for _ in range(count)]
        probes = [
            ImageTensor._unchecked(h, w, (px * m[:, :, None]).reshape(-1))
            for m in masks
        ]
        scores = _class_scores(predictor.predict_probs(probes), explain_class)
        for m, score in zip(masks, scores):
            acc += score * m
    acc /= params.mask_count * params.keep_prob
    return SaliencyMap.from_grid(acc)


def sobol_total_order(fn, dims: int, design_size: int, seed: int):
    """Jansen total-order Sobol indices of fn over [0,1]^dims.

    fn maps an (n, dims) array to n values.  Returns (indices, variance);
    a zero-variance fn yields all-zero indices.  Evaluation order is the
    Saltelli design: A block, B block, then AB_i per dimension.
    """
    if dims < 1:
        raise ParameterError("dims must be at least 1")
    if design_size < 2 or design_size & (design_size - 1):
        raise ParameterError("design_size must be a power of two, at least 2")
    sampler = qmc.Sobol(d=2 * dims, scramble=True, seed=seed)
    points = sampler.random_base2(int(np.log2(design_size)))
    a = points[:, :dims]
    b = points[:, dims:]
    f_a = np.asarray(fn(a), dtype=np.float64)
    f_b = np.asarray(fn(b), dtype=np.float64)
    variance = float(np.var(np.concatenate([f_a, f_b])))
    total = np.zeros(dims, dtype=np.float64)
    if variance <= 0.0:
        # still issue the AB_i evaluations so the query budget is exact
        for i in range(dims):
            ab = a.copy()
            ab[:, i] = b[:, i]
            fn(ab)
        return total, variance
    for i in range(dims):
        ab = a.copy()
        ab[:, i] = b[:, i]
        f_ab = np.asarray(fn(ab), dtype=np.float64)
        total[i] = float(np.mean((f_a - f_ab) ** 2) / (2.0 * variance))
    return total, variance


def sobol_explain(
    predictor: Predictor,
    img: ImageTensor,
    params: SobolParams,
    explain_class: Label = Label.FAKE,
) -> SaliencyMap:
    """Total-order sensitivity of the class score to grid cells, where a
    cell value interpolates between the image and its sigma=5 blur."""
    h, w = img.height, img.width
    px = img.pixels
    base = gaussian_blur(img, 5.0).pixels
    dims = params.grid * params.grid

    def fn(rows: np.ndarray) -> np.ndarray:
        probes = []
        for row in rows:
            mask = bilinear_resize(row.reshape(params.grid, params.grid), h, w)
            mixed = px * mask[:, :, None] + base * (1.0 - mask[:, :, None])
            probes.append(ImageTensor._unchecked(h, w, mixed.reshape(-1)))
        return _class_scores(predictor.predict_probs(probes), explain_class)

    total, variance = sobol_total_order(fn, dims, params.design_size, params.seed)
    if variance <= 0.0:
        warnings.warn(
            "predictor score has zero variance across the Sobol design; "
            "saliency is all zeros",
            RuntimeWarning,
            stacklevel=2,
        )
    grid = total.reshape(params.grid, params.grid)
    return SaliencyMap.from_grid(bilinear_resize(grid, h, w))


def lime_kernel(z: np.ndarray, kernel_width: float) -> np.ndarray:
    """Locality weight per sample row: exp(-(1 - |z|_0/L)^2 / width^2)."""
    z = np.asarray(z, dtype=np.float64)
    frac_on = z.mean(axis=1)
    return np.exp(-((1.0 - frac_on) ** 2) / kernel_width**2)


def fit_lime_surrogate(
    z: np.ndarray,
    scores: np.ndarray,
    kernel_width: float,
    ridge_lambda: float,
) -> np.ndarray:
    """Weighted ridge regression of scores on binary segment indicators.

    The intercept is unpenalized (handled by weighted centering).  If the
    normal equations are singular, the regularizer is raised tenfold up to
    three times before giving up.
    """
    z = np.asarray(z, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if z.ndim != 2 or scores.shape != (z.shape[0],):
        raise ParameterError("need z of shape (n, L) and scores of shape (n,)")
    if z.shape[0] < 1:
        raise ParameterError("need at least one sample")
    weights = lime_kernel(z, kernel_width)
    total = weights.sum()
    if total <= 0:
        raise SurrogateFitError("all sample weights underflowed to zero")
    z_mean = weights @ z / total
    y_mean = weights @ scores / total
    zc = z - z_mean
    yc = scores - y_mean
    gram = zc.T @ (weights[:, None] * zc)
    rhs = zc.T @ (weights * yc)
    lam = ridge_lambda
    for attempt in range(4):
        try:
            coefs = np.linalg.solve(gram + lam * np.eye(z.shape[1]), rhs)
        except np.linalg.LinAlgError:
            coefs = None
        if coefs is not None and np.all(np.isfinite(coefs)):
            return coefs
        lam = (lam if lam > 0 else 1e-6) * 10.0
    raise SurrogateFitError(
        f"normal equations stayed singular up to ridge_lambda={lam}"
    )


def lime_explain(
    predictor: Predictor,
    img: ImageTensor,
    seg: SegmentMap,
    params: LimeParams,
    explain_class: Label = Label.FAKE,
) -> SaliencyMap:
    """Surrogate coefficients per segment, broadcast to the segment's pixels.

    Samples keep/drop vectors uniformly; dropped segments are filled with
    their own mean color.
    """
    if (img.height, img.width) != (seg.height, seg.width):
        raise ParameterError("segmentation dimensions do not match the image")
    count = seg.segment_count
    if params.perturbation_count < count:
        raise ParameterError(
            f"perturbation_count {params.perturbation_count} is below the "
            f"segment count {count}"
        )
    rng = RngStream(params.seed)
    n = params.perturbation_count
    z = rng.bernoulli(0.5, n * count).reshape(n, count)

    flat_px = img.data.reshape(-1, 3)
    sums = np.stack(
        [np.bincount(seg.labels, weights=flat_px[:, c], minlength=count) for c in range(3)],
        axis=1,
    )
    pixel_counts = np.bincount(seg.labels, minlength=count).astype(np.float64)
    mean_colors = sums / pixel_counts[:, None]
    mean_px = mean_colors[seg.labels]

    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, _PROBE_BATCH):
        stop = min(start + _PROBE_BATCH, n)
        probes = []
        for row in z[start:stop]:
            keep = row[seg.labels][:, None]
            data = np.where(keep, flat_px, mean_px)
            probes.append(ImageTensor._unchecked(img.height, img.width, data.reshape(-1)))
        scores[start:stop] = _class_scores(
            predictor.predict_probs(probes), explain_class
        )

    coefs = fit_lime_surrogate(
        z.astype(np.float64), scores, params.kernel_width, params.ridge_lambda
    )
    return SaliencyMap(seg.height, seg.width, coefs[seg.labels].astype(np.float32))
