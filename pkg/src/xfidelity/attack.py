"""Segment-restricted NES adversarial attack under an L-infinity budget.

The attack perturbs only the pixel indices it is given (each pixel expands
to its three channel slots).  Every iteration checks the current verdict
with one dedicated query, then spends 2n queries on an antithetic gradient
estimate of prob_real, takes a sign step of size alpha on the attacked
slots, and projects back into the epsilon box around the original image
intersected with [0, 1].  Gradient probes are sent to the predictor
unclipped; only the running iterate is kept inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .predictor import Predictor
from .rng import RngStream
from .tensor import ImageTensor


@dataclass(frozen=True)
class AttackBudget:
    sigma: float = 0.001
    samples: int = 20
    max_iters: int = 50
    epsilon: float = 16.0 / 255.0
    alpha: float = 1.0 / 255.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.samples < 2 or self.samples % 2 != 0:
            raise ParameterError("samples must be even and at least 2")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if not 0 < self.alpha <= self.epsilon:
            raise ParameterError("alpha must satisfy 0 < alpha <= epsilon")


@dataclass(frozen=True)
class AttackResult:
    adversarial_image: ImageTensor
    success: bool
    iterations_used: int
    final_prob_fake: float
    queries_issued: int
    linf_distortion: float


def _slots_for(indices: np.ndarray, pixel_count: int) -> np.ndarray:
    """Expand unique pixel indices to interleaved RGB slot indices."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ParameterError("the attacked index set must be non-empty")
    if indices.ndim != 1 or not np.issubdtype(indices.dtype, np.integer):
        raise ParameterError("indices must be a 1-D integer array")
    if indices.min() < 0 or indices.max() >= pixel_count:
        raise ParameterError(
            f"indices must lie in [0, {pixel_count}), got range "
            f"[{indices.min()}, {indices.max()}]"
        )
    unique = np.unique(indices.astype(np.int64))
    if unique.size != indices.size:
        raise ParameterError("indices must not repeat")
    return (unique[:, None] * 3 + np.arange(3)[None, :]).reshape(-1)


def nes_gradient_estimate(
    predictor: Predictor,
    x: ImageTensor,
    indices: np.ndarray,
    sigma: float,
    samples: int,
    rng: RngStream,
) -> np.ndarray:
    """Antithetic NES estimate of d prob_real / dx over the attacked slots.

    Returns one value per slot (3 per pixel, RGB interleaved, pixels
    ascending); slots outside the index set are never represented.  Issues
    exactly 2*samples queries.  If the predictor fails mid-way the raised
    error carries the number of queries already issued in a
    ``partial_queries`` attribute.
    """
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    if samples < 2 or samples % 2 != 0:
        raise ParameterError("samples must be even and at least 2")
    slots = _slots_for(indices, x.height * x.width)
    noise = rng.normal(samples * slots.size).reshape(samples, slots.size)

    base = np.asarray(x.data, dtype=np.float64)
    pair_budget = max(1, predictor.batch_limit // 2)
    f_plus = np.empty(samples)
    f_minus = np.empty(samples)
    issued = 0
    for start in range(0, samples, pair_budget):
        stop = min(start + pair_budget, samples)
        probes = []
        for j in range(start, stop):
            for sign in (1.0, -1.0):
                probe = base.copy()
                probe[slots] += sign * sigma * noise[j]
                probes.append(ImageTensor._unchecked(x.height, x.width, probe))
        try:
            probs_fake = predictor.predict_probs(probes)
        except Exception as exc:
            exc.partial_queries = issued
            raise
        issued += len(probes)
        prob_real = 1.0 - probs_fake
        f_plus[start:stop] = prob_real[0::2]
        f_minus[start:stop] = prob_real[1::2]

    g = (f_plus - f_minus) @ noise
    return g / (2.0 * samples * sigma)


def nes_attack(
    predictor: Predictor,
    fake: ImageTensor,
    indices: np.ndarray,
    budget: AttackBudget,
) -> AttackResult:
    """Drive the fake image toward a Real verdict, touching only `indices`.

    Each iteration costs 2*samples + 1 queries (gradient probes plus one
    dedicated verdict check); one final verdict query closes the run, so a
    run of k full iterations issues k*(2*samples + 1) + 1 queries.
    """
    slots = _slots_for(indices, fake.height * fake.width)
    rng = RngStream(budget.seed)
    original = np.asarray(fake.data, dtype=np.float64)
    lower = np.maximum(original[slots] - budget.epsilon, 0.0)
    upper = np.minimum(original[slots] + budget.epsilon, 1.0)

    x = original.copy()
    queries = 0

    def current() -> ImageTensor:
        return ImageTensor._unchecked(fake.height, fake.width, x.copy())

    def finish(success: bool, iterations: int, prob: float) -> AttackResult:
        delta = x[slots] - original[slots]
        linf = float(np.abs(delta).max()) if delta.size else 0.0
        return AttackResult(
            adversarial_image=ImageTensor(fake.height, fake.width, x.copy()),
            success=success,
            iterations_used=iterations,
            final_prob_fake=prob,
            queries_issued=queries,
            linf_distortion=linf,
        )

    for iteration in range(budget.max_iters):
        try:
            prob = float(predictor.predict_probs([current()])[0])
        except Exception as exc:
            exc.partial_queries = queries + getattr(exc, "partial_queries", 0)
            raise
        queries += 1
        if prob < 0.5:
            return finish(True, iteration, prob)
        try:
            gradient = nes_gradient_estimate(
                predictor, current(), indices, budget.sigma, budget.samples, rng
            )
        except Exception as exc:
            exc.partial_queries = queries + getattr(exc, "partial_queries", 0)
            raise
        queries += 2 * budget.samples
        x[slots] = np.clip(
            x[slots] + budget.alpha * np.sign(gradient), lower, upper
        )

    try:
        prob = float(predictor.predict_probs([current()])[0])
    except Exception as exc:
        exc.partial_queries = queries + getattr(exc, "partial_queries", 0)
        raise
    queries += 1
    return finish(prob < 0.5, budget.max_iters, prob)
