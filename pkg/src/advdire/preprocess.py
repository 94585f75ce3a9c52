"""Deterministic image ingestion: JPEG recompression, center crop, scaling.

Every source image is re-encoded as JPEG at a fixed quality so that format
differences between datasets cannot leak into the detector, then
center-cropped and scaled to [0, 1].
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ContractError, IngestionError


@dataclass(frozen=True)
class PreprocessConfig:
    jpeg_quality: int = 95
    crop_size: int = 224

    def __post_init__(self):
        if not 1 <= self.jpeg_quality <= 100:
            raise ContractError(f"jpeg_quality must be in 1..100, got {self.jpeg_quality}")
        if self.crop_size < 8:
            raise ContractError(f"crop_size must be >= 8, got {self.crop_size}")


def _decode(raw: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise IngestionError(f"could not decode image bytes: {exc}") from exc
    if img.mode not in ("L", "RGB"):
        img = img.convert("L" if img.mode in ("1", "I", "I;16", "F") else "RGB")
    return img


def preprocess(raw: bytes, cfg: PreprocessConfig) -> np.ndarray:
    """Recompress, center-crop, and scale one encoded image to a (1,C,H,W) batch."""
    img = _decode(raw)
    if img.width < cfg.crop_size or img.height < cfg.crop_size:
        raise ContractError(
            f"image {img.width}x{img.height} is smaller than crop size {cfg.crop_size}"
        )
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=cfg.jpeg_quality)
    buf.seek(0)
    img = Image.open(buf)
    img.load()
    left = (img.width - cfg.crop_size) // 2
    top = (img.height - cfg.crop_size) // 2
    img = img.crop((left, top, left + cfg.crop_size, top + cfg.crop_size))
    arr = np.asarray(img, dtype=np.float64) / 255.0
    arr = arr[None, :, :] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return arr[None]


def encode_image(image: np.ndarray, fmt: str = "PNG", quality: int = 95) -> bytes:
    """Encode a (C,H,W) array in [0,1] as PNG or JPEG bytes."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ContractError(f"expected a (C,H,W) image, got shape {arr.shape}")
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    pil = Image.fromarray(quantized[0], mode="L") if arr.shape[0] == 1 else Image.fromarray(
        quantized.transpose(1, 2, 0), mode="RGB"
    )
    buf = io.BytesIO()
    if fmt.upper() == "JPEG":
        pil.save(buf, format="JPEG", quality=quality)
    else:
        pil.save(buf, format="PNG")
    return buf.getvalue()
