"""Byte-level codec for the predictor wire protocol.

One request or response is a single JSON object; over TCP each object is
followed by one newline, over HTTP the object is the POST body.

    request:  {"id": u64, "images": [{"h": H, "w": W, "c": 3,
               "b64": base64 of H*W*3 binary32 little-endian row-major RGB}]}
    response: {"id": u64, "probs_fake": [f64, ...]}
    error:    {"id": u64, "error": "message"}

Unknown fields are ignored on both sides.  Pixel payloads are not
range-checked beyond finiteness: gradient probes may sit slightly outside
[0, 1] and the protocol carries them verbatim.
"""

from __future__ import annotations

import base64
import binascii
import json
import math

import numpy as np

from .errors import DecodeError, ParameterError
from .tensor import ImageTensor

_MAX_U64 = 2**64 - 1


def _check_outgoing_id(req_id: object) -> int:
    if isinstance(req_id, bool) or not isinstance(req_id, int):
        raise ParameterError("request id must be an integer")
    if not 0 <= req_id <= _MAX_U64:
        raise ParameterError("request id out of unsigned 64-bit range")
    return req_id


def _check_id(value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DecodeError("'id' must be an unsigned integer")
    if not 0 <= value <= _MAX_U64:
        raise DecodeError("'id' out of unsigned 64-bit range")
    return value


def _parse(data: bytes | str) -> dict:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"payload is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("payload must be a JSON object")
    return obj


def encode_predict_request(req_id: int, images: list[ImageTensor]) -> bytes:
    _check_outgoing_id(req_id)
    entries = []
    for img in images:
        payload = np.asarray(img.data, dtype="<f4").tobytes()
        entries.append(
            {
                "h": img.height,
                "w": img.width,
                "c": 3,
                "b64": base64.b64encode(payload).decode("ascii"),
            }
        )
    return json.dumps(
        {"id": req_id, "images": entries}, separators=(",", ":")
    ).encode("utf-8")


def decode_predict_request(data: bytes | str) -> tuple[int, list[ImageTensor]]:
    obj = _parse(data)
    if "id" not in obj or "images" not in obj:
        raise DecodeError("request must carry 'id' and 'images'")
    req_id = _check_id(obj["id"])
    raw_images = obj["images"]
    if not isinstance(raw_images, list):
        raise DecodeError("'images' must be an array")
    images = []
    for pos, entry in enumerate(raw_images):
        if not isinstance(entry, dict):
            raise DecodeError(f"images[{pos}] must be an object")
        try:
            h, w, c, b64 = entry["h"], entry["w"], entry["c"], entry["b64"]
        except KeyError as exc:
            raise DecodeError(f"images[{pos}] missing field {exc}") from exc
        for name, v in (("h", h), ("w", w), ("c", c)):
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise DecodeError(f"images[{pos}].{name} must be a positive integer")
        if c != 3:
            raise DecodeError(f"images[{pos}].c must be 3, got {c}")
        if not isinstance(b64, str):
            raise DecodeError(f"images[{pos}].b64 must be a string")
        try:
            payload = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise DecodeError(f"images[{pos}].b64 is not valid base64") from exc
        expected = h * w * 3 * 4
        if len(payload) != expected:
            raise DecodeError(
                f"images[{pos}] payload holds {len(payload)} bytes, "
                f"expected {expected}"
            )
        values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise DecodeError(f"images[{pos}] carries non-finite values")
        images.append(ImageTensor._unchecked(h, w, values))
    return req_id, images


def encode_predict_response(req_id: int, probs_fake) -> bytes:
    _check_outgoing_id(req_id)
    probs = [float(p) for p in probs_fake]
    return json.dumps(
        {"id": req_id, "probs_fake": probs}, separators=(",", ":")
    ).encode("utf-8")


def encode_error_response(req_id: int, message: str) -> bytes:
    _check_outgoing_id(req_id)
    return json.dumps(
        {"id": req_id, "error": str(message)}, separators=(",", ":")
    ).encode("utf-8")


def best_effort_id(data: bytes | str) -> int:
    """Pull the request id out of a possibly-malformed payload; 0 if the
    payload does not even parse that far.  Lets error replies echo the id."""
    try:
        obj = _parse(data)
        return _check_id(obj["id"])
    except (DecodeError, KeyError):
        return 0


def decode_predict_response(
    data: bytes | str,
) -> tuple[int, list[float] | None, str | None]:
    """Returns (id, probs_fake, error); exactly one of the last two is set."""
    obj = _parse(data)
    if "id" not in obj:
        raise DecodeError("response must carry 'id'")
    req_id = _check_id(obj["id"])
    if "error" in obj:
        err = obj["error"]
        if not isinstance(err, str):
            raise DecodeError("'error' must be a string")
        return req_id, None, err
    if "probs_fake" not in obj:
        raise DecodeError("response must carry 'probs_fake' or 'error'")
    raw = obj["probs_fake"]
    if not isinstance(raw, list):
        raise DecodeError("'probs_fake' must be an array")
    probs = []
    for pos, p in enumerate(raw):
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise DecodeError(f"probs_fake[{pos}] must be a number")
        p = float(p)
        if math.isnan(p) or not 0.0 <= p <= 1.0:
            raise DecodeError(f"probs_fake[{pos}]={p} outside [0, 1]")
        probs.append(p)
    return req_id, probs, None
