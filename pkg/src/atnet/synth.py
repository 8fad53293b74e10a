"""Synthetic micro-expression clips for desk-scale training and testing.

Each clip is a smooth per-subject background texture with one localized
foreground pattern whose motion and intensity ramp peak at the apex
frame. The 3-class label is encoded in the pattern's motion direction
and appearance, in flow/array coordinates where +v points toward
increasing row index:

* positive: bright blob drifting along +v (dominant flow angle +pi/2),
* negative: dark blob drifting along -v (dominant flow angle -pi/2),
* surprise: bright ring expanding radially from its center.

Per-subject jitter (texture, brightness, pattern anchor) simulates
identity variation; per-frame displacement stays sub-pixel so the
single-scale flow solver tracks it. Everything is deterministic given
the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CLASS_ORDER, Class3, Clip, ClipSet

__all__ = ["SynthConfig", "synth_generate"]


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 5
    clips_per_subject: int = 9
    frame_size: int = 32
    frames_per_clip: int = 65
    pseudo_datasets: int = 1  # 3 gives the holdout-database protocol its groups
    pattern_amplitude: float = 0.5
    drift_px: float = 5.5  # total foreground displacement over the clip
    noise: float = 0.004

    def __post_init__(self):
        if self.subjects < 3:
            raise ValueError(f"need at least 3 subjects, got {self.subjects}")
        if self.clips_per_subject < 3 or self.clips_per_subject % 3:
            raise ValueError(
                f"clips_per_subject must be a positive multiple of 3 for exact class balance, "
                f"got {self.clips_per_subject}")
        if self.frames_per_clip < 65:
            raise ValueError(
                f"frames_per_clip must be >= 65 (apex-centered window requirement), "
                f"got {self.frames_per_clip}")
        if self.frame_size < 16:
            raise ValueError(f"frame_size must be >= 16, got {self.frame_size}")
        if self.pseudo_datasets < 1 or self.pseudo_datasets > self.subjects:
            raise ValueError("pseudo_datasets must be in [1, subjects]")


def _smooth_noise(rng: np.random.Generator, size: int, cells: int, amplitude: float) -> np.ndarray:
    """Low-frequency texture: a coarse normal grid bilinearly upsampled."""
    coarse = rng.standard_normal((cells + 1, cells + 1))
    xs = np.linspace(0, cells, size)
    i0 = np.clip(xs.astype(int), 0, cells - 1)
    f = xs - i0
    rows = (1 - f)[:, None] * coarse[i0] + f[:, None] * coarse[i0 + 1]
    out = (1 - f)[None, :] * rows[:, i0] + f[None, :] * rows[:, i0 + 1]
    return amplitude * out


def _motion_profile(frames: int, apex: int) -> np.ndarray:
    """Per-step motion rate, normalized to sum to 1, peaking at the apex."""
    t = np.arange(frames - 1) + 0.5  # rate of step t applies between frames t and t+1
    tau = max(frames / 8.0, 4.0)
    rate = np.exp(-0.5 * ((t - apex) / tau) ** 2)
    return rate / rate.sum()


def _render_clip(rng, config: SynthConfig, label: Class3, subject_style: dict) -> np.ndarray:
    s = config.frame_size
    n = config.frames_per_clip
    apex = n // 2
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)

    rate = _motion_profile(n, apex)
    progress = np.concatenate([[0.0], np.cumsum(rate)])  # cumulative displacement fraction
    # intensity ramp: pattern fades in toward the apex and out again
    t = np.arange(n)
    ramp = 0.35 + 0.65 * np.exp(-0.5 * ((t - apex) / (n / 6.0)) ** 2)

    cy = subject_style["cy"] + rng.uniform(-1.5, 1.5)
    cx = subject_style["cx"] + rng.uniform(-1.5, 1.5)
    sigma = s / 7.0
    amp = config.pattern_amplitude * subject_style["contrast"]

    background = subject_style["texture"] + rng.uniform(-0.02, 0.02)

    frames = np.empty((n, s, s), dtype=np.uint8)
    for k in range(n):
        d = config.drift_px * progress[k]
        if label is Class3.POSITIVE:
            pattern = amp * ramp[k] * np.exp(-0.5 * (((yy - cy - d) ** 2 + (xx - cx) ** 2) / sigma ** 2))
        elif label is Class3.NEGATIVE:
            pattern = -amp * ramp[k] * np.exp(-0.5 * (((yy - cy + d) ** 2 + (xx - cx) ** 2) / sigma ** 2))
        else:  # surprise: expanding ring
            radius = s / 10.0 + d
            r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            pattern = amp * ramp[k] * np.exp(-0.5 * ((r - radius) / (sigma / 2.0)) ** 2)
        img = background + pattern + config.noise * rng.standard_normal((s, s))
        frames[k] = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return frames


def synth_generate(config: SynthConfig, seed: int) -> ClipSet:
    """Generate a balanced labeled ClipSet; byte-identical for equal seeds.

    Classes rotate within each subject so every subject contributes
    clips_per_subject/3 clips per class. With ``pseudo_datasets`` > 1,
    subjects are dealt round-robin into datasets "synth0", "synth1", ...
    """
    clips = []
    for s_idx in range(config.subjects):
        style_rng = np.random.default_rng([seed, 1000 + s_idx])
        size = config.frame_size
        subject_style = {
            "texture": 0.5 + style_rng.uniform(-0.04, 0.04)
                       + _smooth_noise(style_rng, size, cells=4, amplitude=0.07),
            "cy": size / 2.0 + style_rng.uniform(-size / 8.0, size / 8.0),
            "cx": size / 2.0 + style_rng.uniform(-size / 8.0, size / 8.0),
            "contrast": style_rng.uniform(0.9, 1.1),
        }
        dataset_id = "synth" if config.pseudo_datasets == 1 else f"synth{s_idx % config.pseudo_datasets}"
        for c_idx in range(config.clips_per_subject):
            label = CLASS_ORDER[c_idx % 3]
            clip_rng = np.random.default_rng([seed, s_idx, c_idx])
            frames = _render_clip(clip_rng, config, label, subject_style)
            clips.append(Clip(
                dataset_id=dataset_id,
                subject_id=f"subj{s_idx:02d}",
                clip_id=f"s{s_idx:02d}c{c_idx:02d}",
                frames=frames,
                apex_index=config.frames_per_clip // 2,
                raw_label=label.value,
                label=label,
            ))
    return ClipSet(clips=clips, provenance=f"synth(seed={seed})")
