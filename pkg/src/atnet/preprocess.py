"""Frame normalization, apex-centered window selection, and augmentation.

Geometry conventions: bilinear sampling maps output pixel centers with
``src = (dst + 0.5) * scale - 0.5`` and clamps samples to the frame, so
out-of-frame reads replicate the edge. Grayscale conversion uses the
Rec.601 luma weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Clip

__all__ = [
    "AugmentParams",
    "FrameWindow",
    "augment",
    "bilinear_resize",
    "normalize_frame",
    "select_window",
]

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class AugmentParams:
    """Rotation/shift augmentation bounds. ``max_shift_px`` defaults to 10
    at the 224-px scale; :meth:`scaled_for` shrinks it proportionally for
    smaller frames."""

    max_rotation_deg: float = 5.0
    max_shift_px: int = 10
    apply_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.apply_probability <= 1.0:
            raise ValueError(f"apply_probability must be in [0, 1], got {self.apply_probability}")
        if self.max_rotation_deg < 0 or self.max_shift_px < 0:
            raise ValueError("augmentation bounds must be non-negative")

    def scaled_for(self, size: int) -> "AugmentParams":
        shift = max(1, round(self.max_shift_px * size / 224))
        return AugmentParams(self.max_rotation_deg, shift, self.apply_probability)


@dataclass(frozen=True)
class FrameWindow:
    """Exactly 2*half_width+1 same-size frames with the apex at the center."""

    frames: np.ndarray  # (W, S, S) float64
    apex_position: int

    def __post_init__(self):
        if self.frames.ndim != 3:
            raise ValueError(f"window frames must be (W, H, W), got shape {self.frames.shape}")
        if self.apex_position != (self.frames.shape[0] - 1) // 2:
            raise ValueError(f"apex {self.apex_position} is not the window center")


def _to_grayscale(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[2] == 3:
        return frame @ np.asarray(LUMA)
    raise ValueError(f"frame must be (H, W) or (H, W, 3), got shape {frame.shape}")


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center alignment and edge clamping."""
    h, w = img.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = (1 - fx) * img[np.ix_(y0, x0)] + fx * img[np.ix_(y0, x1)]
    bot = (1 - fx) * img[np.ix_(y1, x0)] + fx * img[np.ix_(y1, x1)]
    return (1 - fy) * top + fy * bot


def normalize_frame(frame: np.ndarray, bbox: tuple | None = None, size: int = 32) -> np.ndarray:
    """Crop to the face box (whole frame if absent), convert to grayscale,
    resize to size x size, and scale 8-bit intensities to [0, 1]."""
    frame = np.asarray(frame)
    if bbox is not None:
        x, y, w, h = bbox
        fh, fw = frame.shape[:2]
        if w <= 0 or h <= 0:
            raise ValueError(f"bbox {bbox} has zero area")
        if x < 0 or y < 0 or x + w > fw or y + h > fh:
            raise ValueError(f"bbox {bbox} outside frame bounds {(fw, fh)}")
        frame = frame[y : y + h, x : x + w]
    gray = _to_grayscale(frame).astype(np.float64)
    if np.issubdtype(np.asarray(frame).dtype, np.integer):
        gray = gray / 255.0
    return bilinear_resize(gray, size, size)


def select_window(clip: Clip, half_width: int = 32) -> FrameWindow:
    """Pick 2*half_width+1 frames centered on the apex.

    When the apex-centered range fits inside the clip, frames are copied
    verbatim. Otherwise each side is independently resampled by linear
    interpolation in time: window positions -half_width..0 map linearly
    onto clip times [0, apex], positions 0..half_width onto
    [apex, T-1], keeping the apex exactly at the center.
    """
    frames = np.asarray(clip.frames, dtype=np.float64)
    t_count = frames.shape[0]
    if t_count < 2:
        raise ValueError(f"clip {clip.key}: need at least 2 frames to window")
    apex = clip.resolved_apex
    w = 2 * half_width + 1

    lo, hi = apex - half_width, apex + half_width
    if lo >= 0 and hi < t_count:
        return FrameWindow(frames=frames[lo : hi + 1].copy(), apex_position=half_width)

    left_times = np.linspace(0.0, float(apex), half_width + 1)
    right_times = np.linspace(float(apex), float(t_count - 1), half_width + 1)
    times = np.concatenate([left_times, right_times[1:]])
    i0 = np.clip(np.floor(times).astype(int), 0, t_count - 2)
    frac = (times - i0)[:, None, None]
    out = (1.0 - frac) * frames[i0] + frac * frames[i0 + 1]
    assert out.shape[0] == w
    return FrameWindow(frames=out, apex_position=half_width)


def _rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear sampling, edge replication."""
    if degrees == 0.0:
        return img.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yr, xr = yy - cy, xx - cx
    # inverse map: sample the source at the un-rotated position
    sy = cy + (sin_t * xr + cos_t * yr)
    sx = cx + (cos_t * xr - sin_t * yr)
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy, fx = sy - y0, sx - x0
    top = (1 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1 - fy) * top + fy * bot


def _shift(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer translation with edge replication: the impulse at (r, c)
    lands at (r+dy, c+dx)."""
    h, w = img.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def augment(frame: np.ndarray, params: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    """With probability ``apply_probability``: rotate by a uniform angle in
    +-max_rotation_deg and shift by uniform integer offsets in
    +-max_shift_px per axis. Otherwise the identity. Shape-preserving and
    range-preserving for inputs in [0, 1]."""
    if rng.random() >= params.apply_probability:
        return frame.copy()
    angle = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg)
    dx = int(rng.integers(-params.max_shift_px, params.max_shift_px + 1))
    dy = int(rng.integers(-params.max_shift_px, params.max_shift_px + 1))
    return _shift(_rotate(frame, angle), dx, dy)
