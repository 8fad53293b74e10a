"""Generate a small synthetic clip set and poke at its structure.

The generator is the stand-in for the licensed micro-expression
benchmarks: each clip hides a moving pattern whose motion direction and
appearance encode one of the three classes, peaking at the apex frame.
"""

import numpy as np

from atnet.dataset import load_manifest, write_manifest
from atnet.synth import SynthConfig, synth_generate


def main():
    config = SynthConfig(subjects=3, clips_per_subject=3, frame_size=32, frames_per_clip=65)
    clips = synth_generate(config, seed=42)
    print(f"generated {len(clips)} clips from {len(clips.subjects())} subjects")

    for clip in clips.clips[:3]:
        frames = clip.frames
        apex = frames[clip.apex_index].astype(float)
        rest = frames[0].astype(float)
        print(f"  {clip.clip_id}: label={clip.label.value:8s} frames={frames.shape} "
              f"apex@{clip.apex_index} |apex-onset| mean={np.abs(apex - rest).mean():.1f}")

    # round-trip through the on-disk manifest format
    out = "runs/demo_clips"
    manifest = write_manifest(clips, out, force=True)
    loaded = load_manifest(manifest)
    identical = all(np.array_equal(a.frames, b.frames)
                    for a, b in zip(clips, loaded.by_key().values()))
    print(f"manifest: {manifest}")
    print(f"reload matches generation byte for byte: {identical}")
    print(f"load report: {manifest}.load_report.txt")


if __name__ == "__main__":
    main()
