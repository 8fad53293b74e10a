"""Command-line pipeline: synthesize clips, extract flow features, train,
evaluate, and render reports.

All randomness flows from ``--seed``; identical invocations produce
byte-identical artifacts. Outputs are never overwritten unless
``--force`` is given. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .adm import load_feature, save_feature
from .binio import BinaryFormatError
from .dataset import ManifestError, load_manifest, write_manifest
from .evaluation import EvalReport, evaluate, make_splits, score_checkpoint
from .flow import FlowParams
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .pipeline import DESK_FLOW_PARAMS, extract_examples
from .preprocess import AugmentParams
from .synth import SynthConfig, synth_generate
from .training import NumericalError, TrainConfig, train

__all__ = ["main"]

USAGE_ERROR, DATA_ERROR, NUMERICAL_ERROR = 1, 2, 3


class _CliDataError(ValueError):
    pass


def _build_config(cls, *sections: dict):
    merged: dict = {}
    for section in sections:
        merged.update({k: v for k, v in section.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as exc:
        raise _CliDataError(f"bad {cls.__name__} options: {exc}") from None


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _CliDataError(f"config {path} is not valid JSON: {exc}") from None
    known = {"model", "train", "flow", "synth", "augment"}
    unknown = set(doc) - known
    if unknown:
        raise _CliDataError(f"config {path}: unknown sections {sorted(unknown)}; expected {sorted(known)}")
    for key in ("stage_widths", "blocks_per_stage"):
        if key in doc.get("model", {}):
            doc["model"][key] = tuple(doc["model"][key])
    return doc


def _resolve_configs(args) -> tuple[ModelConfig, TrainConfig, FlowParams]:
    doc = _load_config_file(args.config)
    model_section = dict(doc.get("model", {}))
    if getattr(args, "paper_scale", False):
        base = ModelConfig.paper_scale(stream=getattr(args, "stream", "fusion"))
        model = replace(base, **model_section) if model_section else base
    else:
        if getattr(args, "stream", None):
            model_section["stream"] = args.stream
        model = _build_config(ModelConfig, model_section)
    augment = _build_config(AugmentParams, doc.get("augment", {}))
    train_cfg = _build_config(TrainConfig, doc.get("train", {}),
                              {"seed": args.seed, "augment": augment})
    flow_section = doc.get("flow", {})
    flow = _build_config(FlowParams, {"alpha": DESK_FLOW_PARAMS.alpha,
                                      "iterations": DESK_FLOW_PARAMS.iterations}, flow_section)
    return model, train_cfg, flow


def _feature_filename(dataset_id: str, clip_id: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "-" for ch in f"{dataset_id}__{clip_id}")
    return safe + ".admf"


def _load_cached_features(features_dir: Path, clips) -> dict:
    cache = {}
    for clip in clips:
        path = features_dir / _feature_filename(clip.dataset_id, clip.clip_id)
        if not path.exists():
            raise _CliDataError(f"missing feature cache {path}; run `extract` first")
        cache[clip.key] = load_feature(path)
    return cache


def _require_absent(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise _CliDataError(f"{path} exists; pass --force to overwrite")


# -- subcommands ------------------------------------------------------------


def _cmd_synth(args) -> int:
    doc = _load_config_file(args.config)
    synth_cfg = _build_config(SynthConfig, doc.get("synth", {}),
                              {"subjects": args.subjects, "clips_per_subject": args.clips_per_subject,
                               "pseudo_datasets": args.pseudo_datasets})
    out = Path(args.out)
    _require_absent(out / "manifest.csv", args.force)
    clip_set = synth_generate(synth_cfg, seed=args.seed)
    manifest = write_manifest(clip_set, out, force=args.force)
    print(f"wrote {len(clip_set)} clips to {manifest}")
    return 0


def _cmd_extract(args) -> int:
    model, _, flow = _resolve_configs(args)
    clip_set = load_manifest(args.manifest)
    features_dir = Path(args.out) / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    targets = {clip.key: features_dir / _feature_filename(clip.dataset_id, clip.clip_id)
               for clip in clip_set}
    for path in targets.values():
        _require_absent(path, args.force)
    examples = extract_examples(clip_set, size=model.image_size,
                                half_width=model.time_steps // 2,
                                flow_params=flow, jobs=args.jobs)
    for example in examples:
        save_feature(targets[(example.dataset_id, example.clip_id)], example.feature)
    print(f"wrote {len(examples)} feature files to {features_dir}")
    return 0


def _cmd_train(args) -> int:
    model_cfg, train_cfg, flow = _resolve_configs(args)
    out = Path(args.out)
    checkpoint_path = out / "checkpoint.atnw"
    history_path = out / "history.csv"
    _require_absent(checkpoint_path, args.force)
    _require_absent(history_path, args.force)
    clip_set = load_manifest(args.manifest)
    features = _load_cached_features(Path(args.features) / "features", clip_set) \
        if args.features else None
    examples = extract_examples(clip_set, size=model_cfg.image_size,
                                half_width=model_cfg.time_steps // 2,
                                flow_params=flow, features=features, jobs=args.jobs)
    model, history = train(examples, train_cfg, model_cfg, flow)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint_path, model)
    history_path.write_text(history.to_csv(), encoding="utf-8")
    final = history.epochs[-1]
    print(f"trained {train_cfg.epochs} epochs: loss {final['loss']:.4f} acc {final['acc']:.3f}")
    print(f"checkpoint: {checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    model_cfg, train_cfg, flow = _resolve_configs(args)
    out = Path(args.out)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if model is not None:
        report_path = out / f"report_checkpoint_{model.config.stream}.json"
    else:
        report_path = out / f"report_{args.protocol}_{model_cfg.stream}.json"
    _require_absent(report_path, args.force)

    clip_set = load_manifest(args.manifest)
    features = _load_cached_features(Path(args.features) / "features", clip_set) \
        if args.features else None
    examples = extract_examples(clip_set, size=model_cfg.image_size,
                                half_width=model_cfg.time_steps // 2,
                                flow_params=flow, features=features, jobs=args.jobs)

    if model is not None:
        report = score_checkpoint(model, examples)
    else:
        plan = make_splits(clip_set, args.protocol)
        report = evaluate(clip_set, plan, model_cfg, train_cfg, flow,
                          examples=examples, jobs=args.jobs)

    out.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json(), encoding="utf-8")
    print(report.render_table())
    print(f"report: {report_path}")
    return 0


def _cmd_report(args) -> int:
    try:
        report = EvalReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError) as exc:
        raise _CliDataError(f"{args.report} is not a stored report: {exc}") from None
    print(report.render_table())
    return 0


# -- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_common(parser: _Parser) -> None:
    parser.add_argument("--config", help="JSON config file (sections: model, train, flow, synth, augment)")
    parser.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for extraction/folds")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument("--paper-scale", action="store_true",
                        help="full-size topology (224 px, 512-d); shape verification only")
    parser.add_argument("--out", default="runs", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="atnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic clip set + manifest")
    _add_common(p)
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--clips-per-subject", type=int, default=None)
    p.add_argument("--pseudo-datasets", type=int, default=None,
                   help="3 enables the holdout-database protocol on synthetic data")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="manifest -> flow-feature cache files")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train a model, write checkpoint + history CSV")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="directory holding a previous `extract` output")
    p.add_argument("--stream", choices=("fusion", "spatial", "temporal"), default="fusion")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run a protocol (or score a checkpoint), write a report")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", choices=("cde", "hde"), default="cde")
    p.add_argument("--features", help="directory holding a previous `extract` output")
    p.add_argument("--stream", choices=("fusion", "spatial", "temporal"), default="fusion")
    p.add_argument("--checkpoint", help="score this checkpoint on the whole manifest instead of training")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="render a stored report as a table")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"atnet: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        print("atnet: a subcommand is required", file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except (ManifestError, BinaryFormatError, _CliDataError, FileNotFoundError,
            FileExistsError, ValueError) as exc:
        print(f"atnet: {exc}", file=sys.stderr)
        return DATA_ERROR
    except NumericalError as exc:
        print(f"atnet: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
