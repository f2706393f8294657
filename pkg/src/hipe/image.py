"""Raster images, forward-difference gradients, and file I/O.

An image is a float64 array of shape (H, W, C) with C in {1, 3} and
intensities in [0, 1]. All computation stays in normalized floats;
quantization happens only when reading or writing files.

Gradients are forward differences with replicate boundary, so the last
column of dx and the last row of dy are exactly zero. This convention makes
the discrete divergence used by the peeler the exact negative adjoint of
the difference operator, which is what keeps the normal equations
symmetric positive definite.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import FormatError, InvalidParameter, IoError, ShapeMismatch

READ_SUFFIXES = {".png", ".ppm", ".pgm"}
WRITE_SUFFIXES = {".png", ".ppm", ".pgm"}


def as_image(arr: np.ndarray) -> np.ndarray:
    """Canonicalize to a float64 (H, W, C) array with C in {1, 3}.

    2-D input becomes single-channel. Values are required to be finite but
    are not range-checked here; [0, 1] is only guaranteed after I/O or an
    explicit clamp.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ShapeMismatch(f"expected (H, W) or (H, W, 1|3) array, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeMismatch(f"empty image of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter("image contains non-finite samples")
    return a


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class GradientField:
    """Signed per-channel forward differences and the per-pixel magnitude.

    dx, dy have the image's (H, W, C) shape; magnitude is (H, W), reduced
    across channels by maximum so that an edge present in any channel
    registers.
    """

    dx: np.ndarray
    dy: np.ndarray
    magnitude: np.ndarray


def gradient(img: np.ndarray) -> GradientField:
    """Forward-difference gradient of an image.

    dx[i, j] = img[i, j+1] - img[i, j] (zero on the last column) and
    dy[i, j] = img[i+1, j] - img[i, j] (zero on the last row), per channel.
    """
    img = as_image(img)
    dx = np.zeros_like(img)
    dy = np.zeros_like(img)
    dx[:, :-1, :] = img[:, 1:, :] - img[:, :-1, :]
    dy[:-1, :, :] = img[1:, :, :] - img[:-1, :, :]
    magnitude = np.sqrt(dx * dx + dy * dy).max(axis=2)
    return GradientField(dx=dx, dy=dy, magnitude=magnitude)


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG or binary PPM/PGM file into a normalized image.

    8-bit samples map to [0, 1] by division by 255, 16-bit by 65535.
    Raises IoError for missing/unreadable files, FormatError for
    unsupported encodings (alpha channels are rejected, not dropped).
    """
    path = Path(path)
    if path.suffix.lower() not in READ_SUFFIXES:
        raise FormatError(f"unsupported file type '{path.suffix}' (expected PNG/PPM/PGM)")
    if not path.is_file():
        raise IoError(f"no such file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IoError(f"unreadable image file: {path}")
    if raw.ndim == 3 and raw.shape[2] == 4:
        raise FormatError(f"{path}: alpha channels are not supported")
    if raw.ndim == 3 and raw.shape[2] == 3:
        raw = raw[:, :, ::-1]  # OpenCV decodes BGR
    elif raw.ndim != 2:
        raise FormatError(f"{path}: unsupported channel layout {raw.shape}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported sample type {raw.dtype}")
    return as_image(raw.astype(np.float64) / scale)


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write an image as 8-bit PNG/PPM/PGM with round-half-up quantization.

    The write is atomic: bytes are encoded in memory, written to a
    temporary file in the same directory, then renamed over the target.
    """
    img = as_image(img)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in WRITE_SUFFIXES:
        raise FormatError(f"unsupported output type '{path.suffix}' (expected PNG/PPM/PGM)")
    if np.min(img) < 0.0 or np.max(img) > 1.0:
        raise InvalidParameter("image samples must be in [0, 1] before saving")
    quantized = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    if quantized.shape[2] == 3:
        if suffix == ".pgm":
            raise FormatError("PGM holds a single channel; use PPM or PNG for color")
        encoded = quantized[:, :, ::-1]  # back to BGR for OpenCV
    else:
        encoded = quantized[:, :, 0]
    ok, buf = cv2.imencode(suffix, encoded)
    if not ok:
        raise IoError(f"could not encode image for {path}")
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_bytes(buf.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IoError(f"could not write {path}: {exc}") from exc
