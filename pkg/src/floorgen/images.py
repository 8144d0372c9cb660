"""Pixel-space helpers: storage/model range conversion, PNG I/O, silhouettes.

Conventions used throughout the package:
  storage space: uint8 in [0, 255], HWC (or HW for masks)
  model space:   float32 in [-1, 1], HWC; torch models use BCHW
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import ValidationError

# Rec. 601 luma coefficients; silhouettes are "ink" pixels darker than this.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SILHOUETTE_THRESHOLD = 0.9


def to_model(img: np.ndarray) -> np.ndarray:
    """uint8 storage [0,255] -> float32 model space [-1,1]."""
    return (img.astype(np.float32) / 127.5) - 1.0


def to_storage(img: np.ndarray) -> np.ndarray:
    """float model space [-1,1] -> uint8 storage [0,255], rounded and clipped."""
    arr = np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)
    return np.round(arr).astype(np.uint8)


def luminance(img: np.ndarray) -> np.ndarray:
    """Per-pixel luminance in [0,1] from a storage or model-space image."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr @ LUMA_WEIGHTS
    if arr.max() > 1.5:  # storage space
        arr = arr / 255.0
    elif arr.min() < -0.001:  # model space
        arr = (arr + 1.0) / 2.0
    return arr


def silhouette(img: np.ndarray, threshold: float = SILHOUETTE_THRESHOLD) -> np.ndarray:
    """Boolean mask of pixels darker than the luminance threshold."""
    return luminance(img) < threshold


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two boolean masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def save_png(path, img: np.ndarray) -> None:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ValidationError(f"save_png expects uint8 storage space, got {arr.dtype}")
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return np.asarray(im)


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    arr = np.asarray(img)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L") if im.mode not in ("L", "RGB") else im)


def hwc_to_chw(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[None]
    return np.transpose(img, (2, 0, 1))


def chw_to_hwc(img: np.ndarray) -> np.ndarray:
    if img.shape[0] == 1:
        return img[0]
    return np.transpose(img, (1, 2, 0))
