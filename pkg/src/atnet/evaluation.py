"""Confusion accounting, UF1/UAR/accuracy, leave-one-subject-out and
holdout-database split plans, and the per-fold evaluation harness.

Metrics pool confusion counts across folds first and then take the
unweighted class mean, so the reported UF1/UAR describe all predictions
of the protocol rather than an average of per-fold scores. A class with
no true and no predicted samples contributes F1 = 0 to UF1 and is
dropped from the UAR mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .dataset import CLASS_ORDER, Class3, ClipSet
from .flow import FlowParams
from .model import ATNet, ModelConfig
from .pipeline import TrainingExample, extract_examples
from .training import CLASS_INDEX, TrainConfig, train

__all__ = [
    "ConfusionMatrix",
    "SplitPlan",
    "Fold",
    "EvalReport",
    "confusion",
    "uf1",
    "uar",
    "accuracy",
    "make_splits",
    "evaluate",
    "score_checkpoint",
]

ConfusionMatrix = np.ndarray  # (3, 3) int64; rows true class, columns predicted


def confusion(predictions: list[Class3], labels: list[Class3]) -> ConfusionMatrix:
    """Tally counts[true][pred] over aligned prediction/label lists."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise ValueError("confusion needs at least one sample")
    counts = np.zeros((3, 3), dtype=np.int64)
    for pred, true in zip(predictions, labels):
        counts[CLASS_INDEX[true], CLASS_INDEX[pred]] += 1
    return counts


def _per_class(cm: ConfusionMatrix):
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    n = cm.sum(axis=1).astype(np.float64)
    return tp, fp, fn, n


def uf1(cm: ConfusionMatrix) -> float:
    """Unweighted F1: mean over classes of 2TP/(2TP+FP+FN); a class with
    no counts at all contributes 0."""
    tp, fp, fn, _ = _per_class(cm)
    denom = 2 * tp + fp + fn
    scores = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return float(scores.mean())


def uar(cm: ConfusionMatrix) -> float:
    """Unweighted average recall: mean of TP_c/N_c over classes that have
    true samples."""
    tp, _, _, n = _per_class(cm)
    present = n > 0
    if not present.any():
        raise ValueError("confusion matrix has no samples")
    return float((tp[present] / n[present]).mean())


def accuracy(cm: ConfusionMatrix) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("confusion matrix has no samples")
    return float(np.trace(cm) / total)


# -- split protocols -----------------------------------------------------------


@dataclass(frozen=True)
class Fold:
    key: str
    train_ids: tuple[tuple[str, str], ...]
    test_ids: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class SplitPlan:
    protocol: str  # "cde" | "hde"
    folds: tuple[Fold, ...]


def make_splits(clips: ClipSet, protocol: str) -> SplitPlan:
    """CDE: one fold per dataset-namespaced subject (leave-one-subject-out
    over the union). HDE: three folds, each holding out one whole dataset.
    """
    protocol = protocol.lower()
    if protocol == "cde":
        subjects = clips.subjects()
        if len(subjects) < 2:
            raise ValueError(f"cde needs >= 2 distinct subjects, got {len(subjects)}")
        folds = []
        for dataset_id, subject_id in subjects:
            test = tuple(c.key for c in clips if c.subject_key == (dataset_id, subject_id))
            rest = tuple(c.key for c in clips if c.subject_key != (dataset_id, subject_id))
            folds.append(Fold(key=f"{dataset_id}/{subject_id}", train_ids=rest, test_ids=test))
        return SplitPlan(protocol="cde", folds=tuple(folds))
    if protocol == "hde":
        datasets = clips.datasets()
        if len(datasets) != 3:
            raise ValueError(f"hde needs exactly 3 datasets, got {datasets}")
        folds = []
        for dataset_id in datasets:
            test = tuple(c.key for c in clips if c.dataset_id == dataset_id)
            rest = tuple(c.key for c in clips if c.dataset_id != dataset_id)
            folds.append(Fold(key=dataset_id, train_ids=rest, test_ids=test))
        return SplitPlan(protocol="hde", folds=tuple(folds))
    raise ValueError(f"unknown protocol {protocol!r}, expected cde or hde")


# -- evaluation harness -----------------------------------------------------------


@dataclass
class EvalReport:
    protocol: str
    stream: str
    fold_results: list[dict] = field(default_factory=list)  # key, confusion, test_ids
    metrics: dict = field(default_factory=dict)  # column -> {acc, uf1, uar, n}

    @property
    def pooled_confusion(self) -> ConfusionMatrix:
        total = np.zeros((3, 3), dtype=np.int64)
        for fold in self.fold_results:
            total += np.asarray(fold["confusion"], dtype=np.int64)
        return total

    def to_json(self) -> str:
        doc = {
            "protocol": self.protocol,
            "stream": self.stream,
            "class_order": [c.value for c in CLASS_ORDER],
            "folds": [{"key": f["key"],
                       "confusion": np.asarray(f["confusion"]).tolist(),
                       "test_ids": [list(t) for t in f["test_ids"]]}
                      for f in self.fold_results],
            "metrics": self.metrics,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        report = cls(protocol=doc["protocol"], stream=doc["stream"])
        report.fold_results = [
            {"key": f["key"], "confusion": np.asarray(f["confusion"], dtype=np.int64),
             "test_ids": [tuple(t) for t in f["test_ids"]]}
            for f in doc["folds"]]
        report.metrics = doc["metrics"]
        return report

    def render_table(self) -> str:
        """Aligned metrics table: one column block per data source."""
        columns = list(self.metrics.keys())
        width = max(len(c) for c in columns) + 2
        header = f"{'':12s}" + "".join(f"{c:>{width}s}" for c in columns)
        lines = [f"protocol: {self.protocol}   stream: {self.stream}", header]
        for metric in ("acc", "uf1", "uar"):
            row = f"{metric.upper():12s}"
            row += "".join(f"{self.metrics[c][metric]:>{width}.3f}" for c in columns)
            lines.append(row)
        row = f"{'n':12s}" + "".join(f"{self.metrics[c]['n']:>{width}d}" for c in columns)
        lines.append(row)
        return "\n".join(lines) + "\n"


def _metrics_block(cm: ConfusionMatrix, n: int) -> dict:
    return {"acc": accuracy(cm), "uf1": uf1(cm), "uar": uar(cm), "n": int(n)}


def _predict_batch(model: ATNet, examples: list[TrainingExample]) -> list[Class3]:
    stream = model.config.stream
    apex = feat = None
    if stream in ("fusion", "spatial"):
        apex = Tensor(np.stack([e.apex for e in examples]))
    if stream in ("fusion", "temporal"):
        feat = Tensor(np.stack([e.feature for e in examples]))
    logits = model.forward(apex, feat, training=False)
    return [CLASS_ORDER[i] for i in logits.data.argmax(axis=1)]


def evaluate(clips: ClipSet, plan: SplitPlan, model_config: ModelConfig,
             train_config: TrainConfig, flow_params: FlowParams | None = None,
             examples: list[TrainingExample] | None = None, jobs: int = 1) -> EvalReport:
    """Run the protocol: train a fresh model per fold (fold seed = base
    seed + fold index), predict its test clips, pool confusion counts, and
    compute overall plus per-source-dataset metrics from the pooled counts.

    Pre-extracted ``examples`` skip the flow computation; ``jobs`` spreads
    fold training across processes.
    """
    if examples is None:
        examples = extract_examples(clips, size=model_config.image_size,
                                    half_width=model_config.time_steps // 2,
                                    flow_params=flow_params, jobs=jobs)
    by_key = {(e.dataset_id, e.clip_id): e for e in examples}
    missing = [key for fold in plan.folds for key in fold.train_ids + fold.test_ids
               if key not in by_key]
    if missing:
        raise ValueError(f"plan references unknown clips: {missing[:5]}")

    args = [(fold, by_key, model_config, train_config, flow_params, index)
            for index, fold in enumerate(plan.folds)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_outputs = list(pool.map(_run_fold, args))
    else:
        fold_outputs = [_run_fold(a) for a in args]

    report = EvalReport(protocol=plan.protocol, stream=model_config.stream)
    per_dataset: dict[str, np.ndarray] = {}
    for fold, (cm, dataset_cms) in zip(plan.folds, fold_outputs):
        report.fold_results.append({"key": fold.key, "confusion": cm, "test_ids": list(fold.test_ids)})
        for ds, d_cm in dataset_cms.items():
            per_dataset[ds] = per_dataset.get(ds, np.zeros((3, 3), dtype=np.int64)) + d_cm

    pooled = report.pooled_confusion
    report.metrics["full"] = _metrics_block(pooled, pooled.sum())
    for ds in sorted(per_dataset):
        report.metrics[ds] = _metrics_block(per_dataset[ds], per_dataset[ds].sum())
    return report


def score_checkpoint(model: ATNet, examples: list[TrainingExample]) -> EvalReport:
    """Score a fixed model on a set of examples as one pseudo-fold."""
    predictions = _predict_batch(model, examples)
    labels = [e.label for e in examples]
    report = EvalReport(protocol="checkpoint", stream=model.config.stream)
    report.fold_results.append({
        "key": "all",
        "confusion": confusion(predictions, labels),
        "test_ids": [(e.dataset_id, e.clip_id) for e in examples],
    })
    pooled = report.pooled_confusion
    report.metrics["full"] = _metrics_block(pooled, pooled.sum())
    return report


def _run_fold(packed):
    fold, by_key, model_config, train_config, flow_params, index = packed
    from dataclasses import replace

    fold_config = replace(train_config, seed=train_config.seed + index)
    train_examples = [by_key[k] for k in fold.train_ids]
    test_examples = [by_key[k] for k in fold.test_ids]
    model, _ = train(train_examples, fold_config, model_config, flow_params)
    predictions = _predict_batch(model, test_examples)
    labels = [e.label for e in test_examples]
    cm = confusion(predictions, labels)
    dataset_cms: dict[str, np.ndarray] = {}
    for pred, ex in zip(predictions, test_examples):
        d_cm = dataset_cms.setdefault(ex.dataset_id, np.zeros((3, 3), dtype=np.int64))
        d_cm[CLASS_INDEX[ex.label], CLASS_INDEX[pred]] += 1
    return cm, dataset_cms
