"""HTTP and TCP services exposing a predictor and the core pipeline.

POST /predict speaks the raw wire protocol (byte-identical bodies to the
TCP transport; errors come back as {"id", "error"} with HTTP 200 so both
transports behave the same).  The /v1/* endpoints wrap segmentation,
ranking, explanation and the attack behind JSON request/response models
for callers that do not want to shuttle SALM/PNG files around by hand.
"""

from __future__ import annotations

import base64
import binascii
import socketserver
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from . import __version__
from .attack import AttackBudget, nes_attack
from .errors import XFidelityError
from .explainers import (
    LimeParams,
    RiseParams,
    SobolParams,
    lime_explain,
    rise_explain,
    sobol_explain,
)
from .predictor import Label, Predictor
from .ranking import rank_segments
from .segmentation import (
    SegmentMap,
    SlicParams,
    decode_segments,
    encode_segments,
    segment_indices,
    slic_segment,
)
from .tensor import decode_image, decode_saliency, encode_image, encode_saliency
from .wire import (
    best_effort_id,
    decode_predict_request,
    encode_error_response,
    encode_predict_response,
)


def _b64_bytes(value: str, what: str) -> bytes:
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(422, f"{what} is not valid base64") from exc


def _fail(exc: XFidelityError) -> HTTPException:
    return HTTPException(422, str(exc))


class SegmentRequest(BaseModel):
    image_b64: str = Field(description="PNG bytes, base64")
    segments: int = 100
    compactness: float = 10.0
    iterations: int = 10


class SegmentResponse(BaseModel):
    height: int
    width: int
    segment_count: int
    segments_b64: str = Field(description="SALM v2 bytes, base64")


class RankRequest(BaseModel):
    saliency_b64: str = Field(description="SALM v1 bytes, base64")
    segments_b64: str = Field(description="SALM v2 bytes, base64")
    top: int | None = None


class RankResponse(BaseModel):
    labels: list[int]
    importances: list[float]


class ExplainRequest(BaseModel):
    image_b64: str = Field(description="PNG bytes, base64")
    tool: str = Field(description="rise, sobol or lime")
    seed: int = 0
    explain_class: str = "Fake"
    mask_count: int | None = None
    grid: int | None = None
    keep_prob: float | None = None
    design_size: int | None = None
    perturbation_count: int | None = None
    kernel_width: float | None = None
    ridge_lambda: float | None = None
    slic_segments: int = 100


class ExplainResponse(BaseModel):
    saliency_b64: str = Field(description="SALM v1 bytes, base64")


class BudgetModel(BaseModel):
    sigma: float = 0.001
    samples: int = 20
    max_iters: int = 50
    epsilon: float = 16.0 / 255.0
    alpha: float = 1.0 / 255.0
    seed: int = 0


class AttackRequest(BaseModel):
    fake_b64: str = Field(description="PNG bytes, base64")
    indices: list[int] | None = Field(
        default=None, description="explicit pixel indices"
    )
    segments_b64: str | None = None
    segment_label: int | None = None
    saliency_b64: str | None = Field(
        default=None, description="with segments_b64: attack the top-ranked segment"
    )
    budget: BudgetModel = BudgetModel()


class AttackResponse(BaseModel):
    adversarial_b64: str = Field(description="PNG bytes, base64")
    success: bool
    iterations_used: int
    queries_issued: int
    final_prob_fake: float
    linf_distortion: float


def create_app(predictor: Predictor) -> FastAPI:
    app = FastAPI(title="xfidelity", version=__version__)

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "predictor": predictor.describe()}

    @app.post("/predict")
    async def predict(request: Request) -> Response:
        body = await request.body()
        try:
            req_id, images = decode_predict_request(body)
            probs = predictor.predict_probs(images)
            payload = encode_predict_response(req_id, probs)
        except Exception as exc:
            payload = encode_error_response(best_effort_id(body), str(exc))
        return Response(content=payload, media_type="application/json")

    @app.post("/v1/segment", response_model=SegmentResponse)
    def segment(req: SegmentRequest) -> SegmentResponse:
        try:
            img = decode_image(_b64_bytes(req.image_b64, "image_b64"))
            params = SlicParams(
                requested_segments=req.segments,
                compactness=req.compactness,
                iterations=req.iterations,
            )
            seg = slic_segment(img, params)
        except XFidelityError as exc:
            raise _fail(exc) from exc
        return SegmentResponse(
            height=seg.height,
            width=seg.width,
            segment_count=seg.segment_count,
            segments_b64=base64.b64encode(encode_segments(seg)).decode("ascii"),
        )

    @app.post("/v1/rank", response_model=RankResponse)
    def rank(req: RankRequest) -> RankResponse:
        try:
            sal = decode_saliency(_b64_bytes(req.saliency_b64, "saliency_b64"))
            seg = decode_segments(_b64_bytes(req.segments_b64, "segments_b64"))
            ranking = rank_segments(sal, seg)
        except XFidelityError as exc:
            raise _fail(exc) from exc
        top = req.top if req.top is not None else len(ranking.ordered_labels)
        if not 0 < top <= len(ranking.ordered_labels):
            raise HTTPException(
                422, f"top must lie in [1, {len(ranking.ordered_labels)}]"
            )
        return RankResponse(
            labels=list(ranking.ordered_labels[:top]),
            importances=list(ranking.importances[:top]),
        )

    @app.post("/v1/explain", response_model=ExplainResponse)
    def explain(req: ExplainRequest) -> ExplainResponse:
        if req.explain_class not in ("Real", "Fake"):
            raise HTTPException(422, "explain_class must be 'Real' or 'Fake'")
        explain_class = Label(req.explain_class)
        try:
            img = decode_image(_b64_bytes(req.image_b64, "image_b64"))
            if req.tool == "rise":
                params = RiseParams(seed=req.seed)
                if req.mask_count is not None:
                    params = replace(params, mask_count=req.mask_count)
                if req.grid is not None:
                    params = replace(params, grid=req.grid)
                if req.keep_prob is not None:
                    params = replace(params, keep_prob=req.keep_prob)
                sal = rise_explain(predictor, img, params, explain_class)
            elif req.tool == "sobol":
                params = SobolParams(seed=req.seed)
                if req.grid is not None:
                    params = replace(params, grid=req.grid)
                if req.design_size is not None:
                    params = replace(params, design_size=req.design_size)
                sal = sobol_explain(predictor, img, params, explain_class)
            elif req.tool == "lime":
                params = LimeParams(seed=req.seed)
                if req.perturbation_count is not None:
                    params = replace(params, perturbation_count=req.perturbation_count)
                if req.kernel_width is not None:
                    params = replace(params, kernel_width=req.kernel_width)
                if req.ridge_lambda is not None:
                    params = replace(params, ridge_lambda=req.ridge_lambda)
                seg = slic_segment(img, SlicParams(requested_segments=req.slic_segments))
                sal = lime_explain(predictor, img, seg, params, explain_class)
            else:
                raise HTTPException(422, f"unknown tool {req.tool!r}")
        except XFidelityError as exc:
            raise _fail(exc) from exc
        return ExplainResponse(
            saliency_b64=base64.b64encode(encode_saliency(sal)).decode("ascii")
        )

    @app.post("/v1/attack", response_model=AttackResponse)
    def attack(req: AttackRequest) -> AttackResponse:
        try:
            fake = decode_image(_b64_bytes(req.fake_b64, "fake_b64"))
            seg: SegmentMap | None = None
            if req.segments_b64 is not None:
                seg = decode_segments(_b64_bytes(req.segments_b64, "segments_b64"))
            if req.indices is not None:
                indices = np.asarray(req.indices, dtype=np.int64)
            elif seg is not None and req.saliency_b64 is not None:
                sal = decode_saliency(_b64_bytes(req.saliency_b64, "saliency_b64"))
                top = rank_segments(sal, seg).ordered_labels[0]
                indices = segment_indices(seg, top)
            elif seg is not None and req.segment_label is not None:
                indices = segment_indices(seg, req.segment_label)
            else:
                raise HTTPException(
                    422,
                    "provide indices, or segments_b64 with segment_label, "
                    "or segments_b64 with saliency_b64",
                )
            budget = AttackBudget(
                sigma=req.budget.sigma,
                samples=req.budget.samples,
                max_iters=req.budget.max_iters,
                epsilon=req.budget.epsilon,
                alpha=req.budget.alpha,
                seed=req.budget.seed,
            )
            result = nes_attack(predictor, fake, indices, budget)
        except XFidelityError as exc:
            raise _fail(exc) from exc
        return AttackResponse(
            adversarial_b64=base64.b64encode(
                encode_image(result.adversarial_image)
            ).decode("ascii"),
            success=result.success,
            iterations_used=result.iterations_used,
            queries_issued=result.queries_issued,
            final_prob_fake=result.final_prob_fake,
            linf_distortion=result.linf_distortion,
        )

    return app


class _WireHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                req_id, images = decode_predict_request(line)
                probs = self.server.predictor.predict_probs(images)
                payload = encode_predict_response(req_id, probs)
            except Exception as exc:
                payload = encode_error_response(best_effort_id(line), str(exc))
            self.wfile.write(payload + b"\n")
            self.wfile.flush()


class WireTCPServer(socketserver.ThreadingTCPServer):
    """Newline-delimited JSON predictor service; one request per line."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], predictor: Predictor):
        super().__init__(address, _WireHandler)
        self.predictor = predictor


def serve_tcp(predictor: Predictor, host: str = "127.0.0.1", port: int = 9090) -> None:
    with WireTCPServer((host, port), predictor) as server:
        server.serve_forever()
