"""Self-describing, byte-deterministic checkpoint container.

Layout: magic line, 8-byte big-endian header length, JSON header with sorted
keys, then the raw little-endian float64 parameter bytes in header order.
No timestamps anywhere, so identical models serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"ADVDIRE-CKPT-v1\n"
FORMAT_VERSION = 1

KIND_DETECTOR = "detector"
KIND_NOISE_PREDICTOR = "noise-predictor"


def _header_for(kind: str, meta: dict, params: dict) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "params": [{"name": k, "shape": list(params[k].shape)} for k in sorted(params)],
    }


def save_checkpoint(path, kind: str, meta: dict, params: dict) -> None:
    header = _header_for(kind, meta, params)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">Q", len(blob)))
        fh.write(blob)
        for entry in header["params"]:
            arr = np.ascontiguousarray(params[entry["name"]], dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[str, dict, dict]:
    """Returns (kind, meta, params). Raises CheckpointError on any defect."""
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint path does not exist: {p}")
    raw = p.read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"not a checkpoint file: {p}")
    off = len(MAGIC)
    (hlen,) = struct.unpack(">Q", raw[off : off + 8])
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {p}: {exc}") from exc
    off += hlen
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r} in {p}")
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(raw):
            raise CheckpointError(f"truncated checkpoint payload in {p}")
        params[entry["name"]] = np.frombuffer(raw[off : off + nbytes], dtype="<f8").reshape(shape).copy()
        off += nbytes
    return header["kind"], header["meta"], params


def save_detector(path, model, extra_meta: dict | None = None) -> None:
    meta = {
        "architecture": model.architecture,
        "input_space": model.input_space,
        "channels": model.channels,
        "image_size": model.image_size,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, KIND_DETECTOR, meta, model.params)


def load_detector(path):
    from .models import DetectorModel

    kind, meta, params = load_checkpoint(path)
    if kind != KIND_DETECTOR:
        raise CheckpointError(f"expected a detector checkpoint, found kind {kind!r} in {path}")
    model = DetectorModel(
        meta["architecture"], meta["input_space"], meta["channels"], meta["image_size"], params=params
    )
    model.meta = meta
    return model


def save_noise_predictor(path, predictor, extra_meta: dict | None = None) -> None:
    meta = {
        "channels": predictor.channels,
        "image_size": predictor.image_size,
        "num_steps": predictor.num_steps,
        "width": predictor.width,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, KIND_NOISE_PREDICTOR, meta, predictor.params)


def load_noise_predictor(path):
    from .diffusion import NoisePredictor

    kind, meta, params = load_checkpoint(path)
    if kind != KIND_NOISE_PREDICTOR:
        raise CheckpointError(f"expected a noise-predictor checkpoint, found kind {kind!r} in {path}")
    predictor = NoisePredictor(
        meta["channels"], meta["image_size"], meta["num_steps"], width=meta["width"], params=params
    )
    predictor.meta = meta
    return predictor
