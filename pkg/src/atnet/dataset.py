"""Clip data model, manifest ingestion, and 3-class label merging.

A manifest is a UTF-8 CSV with header ``dataset,subject,clip,frames_dir,apex,label``
(optionally a trailing ``bbox`` column as ``x,y,w,h``). ``frames_dir`` holds
zero-padded, lexicographically ordered 8-bit grayscale PNG frames; an
empty ``apex`` falls back to the middle frame. Clips whose raw label maps
to none of the three classes are excluded and listed in a sibling
``<manifest>.load_report.txt``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "Class3",
    "CLASS_ORDER",
    "Clip",
    "ClipSet",
    "ManifestError",
    "merge_labels",
    "load_manifest",
    "write_manifest",
]


class Class3(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    SURPRISE = "surprise"


CLASS_ORDER = (Class3.POSITIVE, Class3.NEGATIVE, Class3.SURPRISE)

MANIFEST_COLUMNS = ("dataset", "subject", "clip", "frames_dir", "apex", "label")

_NEGATIVE_RAW = frozenset({"anger", "disgust", "sadness", "fear", "negative"})


class ManifestError(ValueError):
    """Malformed manifest: the message lists every offending row/file."""


def merge_labels(raw_label: str, dataset_id: str = "") -> Class3 | None:
    """Map a dataset's raw emotion label onto the 3-class scheme.

    Happiness folds into positive; anger, disgust, sadness and fear fold
    into negative; surprise stays surprise; labels already in the 3-class
    scheme map to themselves. Returns None for anything else ("others",
    "repression", ...), meaning the clip is excluded. Total and
    case-insensitive; ``dataset_id`` is accepted for context but the
    mapping is label-driven.
    """
    key = raw_label.strip().lower()
    if key in ("happiness", "positive"):
        return Class3.POSITIVE
    if key in _NEGATIVE_RAW:
        return Class3.NEGATIVE
    if key == "surprise":
        return Class3.SURPRISE
    return None


@dataclass
class Clip:
    """One micro-expression sample: ordered grayscale frames plus metadata.

    ``frames`` is a (T, H, W) uint8 array; ``label`` is the resolved
    3-class label (None until merged); ``bbox`` is an optional
    (x, y, w, h) face box in frame coordinates.
    """

    dataset_id: str
    subject_id: str
    clip_id: str
    frames: np.ndarray
    apex_index: int | None
    raw_label: str
    label: Class3 | None = None
    bbox: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3 or self.frames.shape[0] == 0:
            raise ValueError(f"clip {self.key}: frames must be a non-empty (T, H, W) stack")
        if self.apex_index is not None and not 0 <= self.apex_index < self.frames.shape[0]:
            raise ValueError(
                f"clip {self.key}: apex {self.apex_index} outside [0, {self.frames.shape[0]})")

    @property
    def key(self) -> tuple[str, str]:
        return (self.dataset_id, self.clip_id)

    @property
    def subject_key(self) -> tuple[str, str]:
        """Subject id namespaced by dataset, so subject "1" of two datasets
        never collapses into one LOSO fold."""
        return (self.dataset_id, self.subject_id)

    @property
    def resolved_apex(self) -> int:
        return self.apex_index if self.apex_index is not None else self.frames.shape[0] // 2


@dataclass
class ClipSet:
    """Immutable-by-convention collection of labeled clips."""

    clips: list[Clip]
    provenance: str = ""
    excluded: list[tuple[str, str, str]] = field(default_factory=list)  # (dataset, clip, raw_label)

    def __post_init__(self):
        seen = set()
        for clip in self.clips:
            if clip.key in seen:
                raise ValueError(f"duplicate clip id {clip.key}")
            seen.add(clip.key)
            if clip.label is None:
                raise ValueError(f"clip {clip.key} has no resolved 3-class label")

    def __len__(self):
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    def subjects(self) -> list[tuple[str, str]]:
        return sorted({c.subject_key for c in self.clips})

    def datasets(self) -> list[str]:
        return sorted({c.dataset_id for c in self.clips})

    def by_key(self) -> dict[tuple[str, str], Clip]:
        return {c.key: c for c in self.clips}


def _read_frames(frames_dir: Path, errors: list[str], row_name: str) -> np.ndarray | None:
    if not frames_dir.is_dir():
        errors.append(f"{row_name}: frames_dir {frames_dir} does not exist")
        return None
    paths = sorted(frames_dir.glob("*.png"))
    if not paths:
        errors.append(f"{row_name}: no PNG frames in {frames_dir}")
        return None
    frames = []
    shape = None
    for p in paths:
        try:
            img = np.asarray(Image.open(p).convert("L"), dtype=np.uint8)
        except OSError as exc:
            errors.append(f"{row_name}: unreadable frame {p}: {exc}")
            return None
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            errors.append(f"{row_name}: frame {p.name} is {img.shape}, expected {shape}")
            return None
        frames.append(img)
    return np.stack(frames)


def load_manifest(path, report_path=None) -> ClipSet:
    """Read a manifest CSV into a ClipSet with resolved 3-class labels.

    Clips with unmappable labels are dropped and recorded both in the
    returned set's ``excluded`` list and in the sibling load-report file.
    Structural problems (missing frames, malformed rows, duplicates) are
    collected and raised together as ManifestError.
    """
    path = Path(path)
    if report_path is None:
        report_path = path.with_suffix(path.suffix + ".load_report.txt")
    base = path.parent

    errors: list[str] = []
    clips: list[Clip] = []
    excluded: list[tuple[str, str, str]] = []
    seen: set[tuple[str, str]] = set()

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        header = [h.strip() for h in header]
        if tuple(header[:6]) != MANIFEST_COLUMNS or len(header) > 7 or (
                len(header) == 7 and header[6] != "bbox"):
            raise ManifestError(
                f"{path}: header must be {','.join(MANIFEST_COLUMNS)}[,bbox], got {','.join(header)}")
        has_bbox = len(header) == 7

        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            row_name = f"{path.name}:{lineno}"
            if len(row) != len(header):
                errors.append(f"{row_name}: expected {len(header)} fields, got {len(row)}")
                continue
            dataset_id = row[0].strip().lower()
            subject_id, clip_id = row[1].strip(), row[2].strip()
            if (dataset_id, clip_id) in seen:
                errors.append(f"{row_name}: duplicate clip id ({dataset_id}, {clip_id})")
                continue
            seen.add((dataset_id, clip_id))

            frames = _read_frames(base / row[3].strip(), errors, row_name)
            if frames is None:
                continue

            apex_text = row[4].strip()
            if apex_text:
                try:
                    apex = int(apex_text)
                except ValueError:
                    errors.append(f"{row_name}: apex {apex_text!r} is not an integer")
                    continue
                if not 0 <= apex < frames.shape[0]:
                    errors.append(f"{row_name}: apex {apex} outside [0, {frames.shape[0]})")
                    continue
            else:
                apex = frames.shape[0] // 2  # middle-frame rule for unmarked clips

            bbox = None
            if has_bbox and row[6].strip():
                parts = row[6].strip().split(",")
                if len(parts) != 4 or not all(p.strip().lstrip("-").isdigit() for p in parts):
                    errors.append(f"{row_name}: bbox {row[6]!r} is not x,y,w,h")
                    continue
                bbox = tuple(int(p) for p in parts)

            raw_label = row[5].strip()
            label = merge_labels(raw_label, dataset_id)
            if label is None:
                excluded.append((dataset_id, clip_id, raw_label))
                continue
            clips.append(Clip(dataset_id=dataset_id, subject_id=subject_id, clip_id=clip_id,
                              frames=frames, apex_index=apex, raw_label=raw_label,
                              label=label, bbox=bbox))

    if errors:
        raise ManifestError(f"{path}: {len(errors)} bad rows:\n  " + "\n  ".join(errors))

    lines = [f"manifest: {path}", f"loaded: {len(clips)}", f"excluded: {len(excluded)}"]
    lines += [f"  {d}/{c}: label {l!r} maps to no class" for d, c, l in excluded]
    Path(report_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    return ClipSet(clips=clips, provenance=str(path), excluded=excluded)


def write_manifest(clip_set: ClipSet, out_dir, force: bool = False) -> Path:
    """Write frames as zero-padded grayscale PNGs plus the manifest CSV.

    Layout: ``out_dir/manifest.csv`` and one ``frames/<dataset>_<subject>_<clip>/``
    directory per clip. Refuses to overwrite an existing manifest unless
    ``force`` is set. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    manifest = out_dir / "manifest.csv"
    if manifest.exists() and not force:
        raise FileExistsError(f"{manifest} exists; pass force=True to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    any_bbox = any(c.bbox is not None for c in clip_set.clips)
    for clip in clip_set.clips:
        rel = Path("frames") / f"{clip.dataset_id}_{clip.subject_id}_{clip.clip_id}"
        frame_dir = out_dir / rel
        frame_dir.mkdir(parents=True, exist_ok=True)
        for t in range(clip.frames.shape[0]):
            Image.fromarray(clip.frames[t].astype(np.uint8), mode="L").save(frame_dir / f"{t:06d}.png")
        apex = "" if clip.apex_index is None else str(clip.apex_index)
        row = [clip.dataset_id, clip.subject_id, clip.clip_id, rel.as_posix(), apex, clip.raw_label]
        if any_bbox:
            row.append("" if clip.bbox is None else ",".join(str(x) for x in clip.bbox))
        rows.append(row)

    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(MANIFEST_COLUMNS) + (["bbox"] if any_bbox else []))
        writer.writerows(rows)
    return manifest
