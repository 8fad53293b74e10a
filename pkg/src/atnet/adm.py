"""Block-averaged direction/magnitude features from a window of flow fields.

Each frame pair's flow is converted to per-pixel polar form, the field is
partitioned into a grid x grid array of equal square blocks, and each
block contributes its mean magnitude and mean direction. A 65-frame
window at the default 8x8 grid yields the 64x128 feature matrix the
temporal stream consumes: row t holds the interleaved
(rho_1, theta_1, ..., rho_64, theta_64) of flow step t.

Direction averages are plain arithmetic means of atan2 angles; they are
discontinuous across the +-pi wrap. A circular mean (angle of the summed
unit vectors) is available behind ``circular_mean=True`` for
experimentation but is off by default.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .binio import Reader, atomic_write
from .flow import FlowField, FlowParams, estimate_flow_sequence

__all__ = [
    "PolarField",
    "to_polar",
    "block_average",
    "extract_adm",
    "encode_feature",
    "decode_feature",
    "save_feature",
    "load_feature",
]

ZERO_MAGNITUDE = 1e-12
MAGIC = b"ADMF"
VERSION = 1


@dataclass(frozen=True)
class PolarField:
    """Per-pixel magnitude (>= 0) and direction in (-pi, pi]; pixels with
    magnitude below 1e-12 carry direction 0 by convention."""

    rho: np.ndarray
    theta: np.ndarray


def to_polar(flow: FlowField) -> PolarField:
    rho = np.hypot(flow.u, flow.v)
    theta = np.arctan2(flow.v, flow.u)
    theta = np.where(theta == -np.pi, np.pi, theta)  # range (-pi, pi]
    theta = np.where(rho < ZERO_MAGNITUDE, 0.0, theta)
    return PolarField(rho=rho, theta=theta)


def block_average(polar: PolarField, grid: int = 8, circular_mean: bool = False) -> np.ndarray:
    """Mean magnitude and direction per block, interleaved in row-major
    block order: (rho_1, theta_1, ..., rho_{grid^2}, theta_{grid^2})."""
    s = polar.rho.shape[0]
    if polar.rho.shape != (s, s) or s % grid != 0:
        raise ValueError(f"field shape {polar.rho.shape} is not square-divisible by grid {grid}")
    block = s // grid
    rho_blocks = polar.rho.reshape(grid, block, grid, block).mean(axis=(1, 3))
    if circular_mean:
        sin_b = np.sin(polar.theta).reshape(grid, block, grid, block).mean(axis=(1, 3))
        cos_b = np.cos(polar.theta).reshape(grid, block, grid, block).mean(axis=(1, 3))
        theta_blocks = np.arctan2(sin_b, cos_b)
    else:
        theta_blocks = polar.theta.reshape(grid, block, grid, block).mean(axis=(1, 3))
    out = np.empty(2 * grid * grid)
    out[0::2] = rho_blocks.reshape(-1)
    out[1::2] = theta_blocks.reshape(-1)
    return out


def extract_adm(frames: np.ndarray, flow_params: FlowParams | None = None, grid: int = 8,
                circular_mean: bool = False) -> np.ndarray:
    """Feature matrix for a (W, S, S) frame stack: one row per consecutive
    frame pair, so a 65-frame window gives shape (64, 128) at grid 8."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError(f"need a (W>=2, S, S) frame stack, got shape {frames.shape}")
    flows = estimate_flow_sequence(frames, flow_params)
    return np.stack([block_average(to_polar(flow), grid=grid, circular_mean=circular_mean)
                     for flow in flows])


# -- on-disk cache ---------------------------------------------------------
#
# magic "ADMF", version u16, rows u32, cols u32, then rows*cols float32
# row-major values, all little-endian. Features are computed in float64
# and narrowed to float32 for storage.


def encode_feature(feature: np.ndarray) -> bytes:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 2:
        raise ValueError(f"feature must be 2-d, got shape {feature.shape}")
    rows, cols = feature.shape
    header = MAGIC + struct.pack("<HII", VERSION, rows, cols)
    return header + feature.astype("<f4").tobytes()


def decode_feature(payload: bytes) -> np.ndarray:
    r = Reader(payload, "feature cache")
    r.expect_magic(MAGIC)
    r.expect_version(VERSION)
    rows, cols = r.u32(), r.u32()
    data = r.take(rows * cols * 4)
    r.done()
    return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(rows, cols)


def save_feature(path, feature: np.ndarray) -> None:
    atomic_write(path, encode_feature(feature))


def load_feature(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_feature(fh.read())
