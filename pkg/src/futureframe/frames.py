"""Frame representation, validation helpers, and grayscale PNG I/O.

A frame is a plain 2-D numpy array of float32 intensities in [0, 1].
The helpers here play the role sklearn's ``check_array`` plays for tabular
estimators: every public entry point funnels its image inputs through
``check_frame`` before touching the network.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import ConfigurationError


def check_frame(frame, resolution=None, name="frame") -> np.ndarray:
    """Validate and normalize a single grayscale frame.

    Accepts a 2-D array-like of floats in [0, 1] or of uint8 (rescaled by
    1/255). Returns a C-contiguous float32 array.

    Args:
        frame: 2-D array-like of pixel intensities.
        resolution: optional (height, width) the frame must match.
        name: label used in error messages.

    Raises:
        ConfigurationError: wrong dimensionality, wrong resolution, or pixel
            values outside [0, 1].
    """
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise ConfigurationError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ConfigurationError(
            f"{name} intensities must lie in [0, 1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]"
        )
    if resolution is not None and tuple(arr.shape) != tuple(resolution):
        raise ConfigurationError(
            f"{name} has resolution {arr.shape}, expected {tuple(resolution)}"
        )
    return np.ascontiguousarray(arr, dtype=np.float32)


def check_displacement(dt_millis, name="dt") -> float:
    """Validate a temporal displacement in milliseconds (must be > 0)."""
    dt = float(dt_millis)
    if not np.isfinite(dt) or dt <= 0.0:
        raise ConfigurationError(f"{name} must be a positive number of ms, got {dt_millis!r}")
    return dt


def frame_to_uint8(frame: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] frame to 8-bit via round(255 * x)."""
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def save_frame_png(frame: np.ndarray, path) -> None:
    """Write a [0, 1] frame as an 8-bit grayscale PNG."""
    Image.fromarray(frame_to_uint8(frame), mode="L").save(Path(path))


def load_frame_png(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG as a [0, 1] float32 frame."""
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def intensity_centroid(frame: np.ndarray) -> tuple[float, float]:
    """Raw intensity-weighted centroid in continuous (x, y) pixel coordinates.

    Pixel (row r, col c) covers the unit square [c, c+1) x [r, r+1), so its
    mass sits at (c + 0.5, r + 0.5).
    """
    arr = np.asarray(frame, dtype=np.float64)
    total = arr.sum()
    if total <= 0.0:
        raise ValueError("cannot take the centroid of an all-zero frame")
    rows = np.arange(arr.shape[0], dtype=np.float64) + 0.5
    cols = np.arange(arr.shape[1], dtype=np.float64) + 0.5
    cy = float((arr.sum(axis=1) * rows).sum() / total)
    cx = float((arr.sum(axis=0) * cols).sum() / total)
    return cx, cy


def blob_centroid(frame: np.ndarray) -> tuple[float, float]:
    """Intensity-weighted centroid of the bright blob in a frame.

    Intensities below half of the peak are floored to zero before weighting,
    which separates the figure from residual background haze (a saturating
    output layer never emits exact zeros). Returns (x, y) in continuous pixel
    coordinates.
    """
    arr = np.asarray(frame, dtype=np.float64)
    floor = 0.5 * arr.max()
    return intensity_centroid(np.maximum(arr - floor, 0.0))
