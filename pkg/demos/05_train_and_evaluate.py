"""End to end at toy scale: generate, extract features, run the
leave-one-subject-out protocol, print the report table.

This uses a reduced epoch count to finish in under a minute; the
acceptance suite (tests/test_acceptance.py) runs the full 50-epoch
recipe on 5 subjects x 9 clips and reaches pooled UF1/UAR of 1.0.
"""

from dataclasses import replace

from atnet.evaluation import evaluate, make_splits
from atnet.model import ModelConfig
from atnet.pipeline import DESK_FLOW_PARAMS, extract_examples
from atnet.synth import SynthConfig, synth_generate
from atnet.training import TrainConfig, train


def main():
    clips = synth_generate(SynthConfig(subjects=3, clips_per_subject=6), seed=3)
    print(f"{len(clips)} clips / {len(clips.subjects())} subjects")
    examples = extract_examples(clips, flow_params=DESK_FLOW_PARAMS)

    train_config = TrainConfig(epochs=15, seed=0)
    model, history = train(examples, train_config, ModelConfig())
    first, last = history.epochs[0], history.epochs[-1]
    print(f"training loss {first['loss']:.3f} -> {last['loss']:.3f} over {len(history.epochs)} epochs")

    plan = make_splits(clips, "cde")
    print(f"\nleave-one-subject-out, {len(plan.folds)} folds:")
    report = evaluate(clips, plan, ModelConfig(), train_config, examples=examples)
    print(report.render_table())

    print("per-stream ablation (same folds):")
    for stream in ("spatial", "temporal"):
        ablated = evaluate(clips, plan, ModelConfig(stream=stream), train_config,
                           examples=examples)
        m = ablated.metrics["full"]
        print(f"  {stream:9s}: acc {m['acc']:.3f}  uf1 {m['uf1']:.3f}  uar {m['uar']:.3f}")


if __name__ == "__main__":
    main()
