"""The black-box classifier abstraction and its concrete detectors.

Everything downstream sees a predictor only through prob_fake queries.
The synthetic detectors (planted-region, linear, echo, constant) exist so
that attack and metric behavior can be checked against closed forms; real
models sit behind the wire protocol via RemotePredictor.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import httpx
import numpy as np
from scipy.special import expit

from .errors import ParameterError, RemoteProtocolError, RemoteTransportError
from .tensor import ImageTensor
from .wire import (
    decode_predict_response,
    encode_predict_request,
)

DEFAULT_BATCH_LIMIT = 32


class Label(str, Enum):
    REAL = "Real"
    FAKE = "Fake"


@dataclass(frozen=True)
class Verdict:
    """Classification outcome; label is Fake exactly when prob_fake >= 0.5."""

    prob_fake: float
    label: Label

    @classmethod
    def from_prob(cls, prob_fake: float) -> "Verdict":
        prob_fake = float(prob_fake)
        if not 0.0 <= prob_fake <= 1.0:
            raise ParameterError(f"prob_fake {prob_fake} outside [0, 1]")
        label = Label.FAKE if prob_fake >= 0.5 else Label.REAL
        return cls(prob_fake, label)


class Predictor:
    """Base class: subclasses implement _predict on chunks of bounded size."""

    batch_limit: int = DEFAULT_BATCH_LIMIT

    def predict_probs(self, images: Sequence[ImageTensor]) -> np.ndarray:
        """prob_fake per image, order preserved; requests are split so no
        underlying call sees more than batch_limit images."""
        out = np.empty(len(images), dtype=np.float64)
        for start in range(0, len(images), self.batch_limit):
            chunk = list(images[start:start + self.batch_limit])
            probs = np.asarray(self._predict(chunk), dtype=np.float64)
            if probs.shape != (len(chunk),):
                raise RemoteProtocolError(
                    f"predictor returned {probs.shape} probabilities "
                    f"for {len(chunk)} images"
                )
            out[start:start + len(chunk)] = probs
        return out

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__

    def close(self) -> None:
        pass


def predict_batch(predictor: Predictor, images: Sequence[ImageTensor]) -> list[Verdict]:
    return [Verdict.from_prob(p) for p in predictor.predict_probs(images)]


_CHANNELS = {"R": 0, "G": 1, "B": 2}


class PlantedRegionDetector(Predictor):
    """prob_fake = sigmoid(gain * (mean of one channel over a fixed
    rectangle - threshold)); depends on no pixel outside the rectangle."""

    def __init__(
        self,
        region: tuple[int, int, int, int],
        channel: str | int,
        threshold: float,
        gain: float,
    ):
        top, left, height, width = (int(v) for v in region)
        if height < 1 or width < 1:
            raise ParameterError("planted region must be non-empty")
        if top < 0 or left < 0:
            raise ParameterError("planted region origin must be non-negative")
        if isinstance(channel, str):
            if channel not in _CHANNELS:
                raise ParameterError(f"channel must be one of R, G, B, got {channel!r}")
            channel = _CHANNELS[channel]
        if channel not in (0, 1, 2):
            raise ParameterError("channel index must be 0, 1 or 2")
        if not 0.0 <= threshold <= 1.0:
            raise ParameterError("threshold must lie in [0, 1]")
        if gain == 0:
            raise ParameterError("gain must be non-zero")
        self.region = (top, left, height, width)
        self.channel = int(channel)
        self.threshold = float(threshold)
        self.gain = float(gain)

    def region_pixel_indices(self, height: int, width: int) -> np.ndarray:
        """Row-major pixel indices of the region within an HxW raster."""
        top, left, rh, rw = self.region
        if top + rh > height or left + rw > width:
            raise ParameterError(
                f"planted region {self.region} exceeds image {height}x{width}"
            )
        rows = np.arange(top, top + rh)[:, None] * width
        cols = np.arange(left, left + rw)[None, :]
        return (rows + cols).reshape(-1)

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        probs = np.empty(len(images))
        top, left, rh, rw = self.region
        for i, img in enumerate(images):
            if top + rh > img.height or left + rw > img.width:
                raise ParameterError(
                    f"planted region {self.region} exceeds image "
                    f"{img.height}x{img.width}"
                )
            patch = img.pixels[top:top + rh, left:left + rw, self.channel]
            probs[i] = expit(self.gain * (patch.mean() - self.threshold))
        return probs

    def describe(self) -> str:
        return (
            f"planted(region={self.region}, channel={self.channel}, "
            f"threshold={self.threshold}, gain={self.gain})"
        )


def make_planted_detector(
    region: tuple[int, int, int, int],
    channel: str | int,
    threshold: float,
    gain: float,
) -> PlantedRegionDetector:
    return PlantedRegionDetector(region, channel, threshold, gain)


class LinearDetector(Predictor):
    """prob_fake = sigmoid(w . x + b); its analytic gradient makes this the
    oracle for gradient-estimator checks."""

    def __init__(self, weights: np.ndarray, bias: float):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ParameterError("weights must be a non-empty 1-D array")
        self.weights = weights
        self.bias = float(bias)

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        probs = np.empty(len(images))
        for i, img in enumerate(images):
            if img.data.size != self.weights.size:
                raise ParameterError(
                    f"weights cover {self.weights.size} values but image "
                    f"holds {img.data.size}"
                )
            probs[i] = expit(self.weights @ img.data + self.bias)
        return probs

    def prob_fake_gradient(self, image: ImageTensor) -> np.ndarray:
        """d prob_fake / d x, length H*W*3."""
        p = float(self.predict_probs([image])[0])
        return p * (1.0 - p) * self.weights

    def describe(self) -> str:
        return f"linear(dim={self.weights.size}, bias={self.bias})"


def make_linear_detector(weights: np.ndarray, bias: float) -> LinearDetector:
    return LinearDetector(weights, bias)


class EchoDetector(Predictor):
    """prob_fake = mean of one channel; the standard protocol test model."""

    def __init__(self, channel: int = 0):
        if channel not in (0, 1, 2):
            raise ParameterError("channel index must be 0, 1 or 2")
        self.channel = channel

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        return np.array(
            [float(np.clip(img.pixels[..., self.channel].mean(), 0.0, 1.0)) for img in images]
        )

    def describe(self) -> str:
        return f"echo(channel={self.channel})"


class ConstantDetector(Predictor):
    def __init__(self, prob_fake: float):
        if not 0.0 <= prob_fake <= 1.0:
            raise ParameterError("constant prob_fake must lie in [0, 1]")
        self.prob_fake = float(prob_fake)

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        return np.full(len(images), self.prob_fake)

    def describe(self) -> str:
        return f"constant({self.prob_fake})"


class CountingPredictor(Predictor):
    """Delegating wrapper that counts per-image queries."""

    def __init__(self, inner: Predictor):
        self.inner = inner
        self.batch_limit = inner.batch_limit
        self.queries = 0

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        self.queries += len(images)
        return self.inner.predict_probs(images)

    def describe(self) -> str:
        return self.inner.describe()


class RemotePredictor(Predictor):
    """Wire-protocol client; speaks newline-delimited JSON over TCP or the
    same body over HTTP POST /predict."""

    def __init__(self, address: str, timeout: float = 30.0):
        self.address = address
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 1
        self._sock_file = None
        self._http: httpx.Client | None = None
        if address.startswith(("http://", "https://")):
            self._mode = "http"
            base = address.rstrip("/")
            self._url = base if base.endswith("/predict") else base + "/predict"
        elif address.startswith("tcp://"):
            self._mode = "tcp"
            rest = address[len("tcp://"):]
            host, sep, port = rest.rpartition(":")
            if not sep or not port.isdigit():
                raise ParameterError(f"tcp address must be tcp://host:port, got {address!r}")
            self._host, self._port = host, int(port)
        else:
            raise ParameterError(
                f"remote address must start with http://, https:// or tcp://, got {address!r}"
            )

    def _http_roundtrip(self, payload: bytes) -> bytes:
        if self._http is None:
            self._http = httpx.Client(timeout=self.timeout)
        try:
            reply = self._http.post(
                self._url, content=payload, headers={"content-type": "application/json"}
            )
        except httpx.HTTPError as exc:
            raise RemoteTransportError(f"predictor request failed: {exc}") from exc
        if reply.status_code != 200:
            raise RemoteProtocolError(
                f"predictor answered HTTP {reply.status_code}: {reply.text[:200]}"
            )
        return reply.content

    def _tcp_roundtrip(self, payload: bytes) -> bytes:
        try:
            if self._sock_file is None:
                sock = socket.create_connection(
                    (self._host, self._port), timeout=self.timeout
                )
                self._sock_file = sock.makefile("rwb")
                self._sock = sock
            self._sock_file.write(payload + b"\n")
            self._sock_file.flush()
            line = self._sock_file.readline()
        except OSError as exc:
            self._drop_connection()
            raise RemoteTransportError(f"predictor connection failed: {exc}") from exc
        if not line:
            self._drop_connection()
            raise RemoteTransportError("predictor closed the connection")
        return line

    def _drop_connection(self) -> None:
        if self._sock_file is not None:
            try:
                self._sock_file.close()
                self._sock.close()
            except OSError:
                pass
            self._sock_file = None

    def _predict(self, images: list[ImageTensor]) -> np.ndarray:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            payload = encode_predict_request(req_id, images)
            if self._mode == "http":
                raw = self._http_roundtrip(payload)
            else:
                raw = self._tcp_roundtrip(payload)
        try:
            reply_id, probs, error = decode_predict_response(raw)
        except Exception as exc:
            raise RemoteProtocolError(f"malformed predictor reply: {exc}") from exc
        if reply_id != req_id:
            raise RemoteProtocolError(
                f"reply id {reply_id} does not match request id {req_id}"
            )
        if error is not None:
            raise RemoteProtocolError(f"predictor reported an error: {error}")
        if len(probs) != len(images):
            raise RemoteProtocolError(
                f"predictor returned {len(probs)} probabilities for {len(images)} images"
            )
        return np.asarray(probs, dtype=np.float64)

    def describe(self) -> str:
        return f"remote({self.address})"

    def close(self) -> None:
        with self._lock:
            self._drop_connection()
            if self._http is not None:
                self._http.close()
                self._http = None

    def __enter__(self) -> "RemotePredictor":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def parse_predictor_spec(spec: str, timeout: float = 30.0) -> Predictor:
    """Build a predictor from a CLI-style spec string.

    Builtins: 'builtin:echo[:channel]', 'builtin:constant:<p>',
    'builtin:planted:<top>,<left>,<height>,<width>,<channel>,<tau>,<gain>'.
    Anything starting with http://, https:// or tcp:// is remote.
    """
    if spec.startswith("builtin:"):
        body = spec[len("builtin:"):]
        kind, _, args = body.partition(":")
        if kind == "echo":
            return EchoDetector(int(args) if args else 0)
        if kind == "constant":
            if not args:
                raise ParameterError("builtin:constant needs a probability")
            return ConstantDetector(float(args))
        if kind == "planted":
            parts = args.split(",")
            if len(parts) != 7:
                raise ParameterError(
                    "builtin:planted needs top,left,height,width,channel,tau,gain"
                )
            top, left, height, width = (int(v) for v in parts[:4])
            channel = parts[4] if parts[4] in _CHANNELS else int(parts[4])
            return PlantedRegionDetector(
                (top, left, height, width), channel, float(parts[5]), float(parts[6])
            )
        raise ParameterError(f"unknown builtin predictor {kind!r}")
    return RemotePredictor(spec, timeout=timeout)
