"""Label-noise degradation experiments.

Injects controlled corruption into the classifier's training split and
retrains per (kind, rate, seed):

* ``fp_nearest``  — wrong-but-plausible labels: a sampled record's label is
  replaced by the class the clean baseline confuses it with most;
* ``fn_delete``   — missing labels: sampled records are removed outright;
* ``fn_to_unk``   — missing labels kept as refusals: sampled records are
  relabeled to the reserved unk class.

Corruption never touches the test split; every trained model is evaluated
on the same uncorrupted test records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .catalog import UNK_ID, Dataset, LabeledExample
from .classifier import (
    ClassifierModel,
    TrainConfig,
    Vocabulary,
    featurize,
    predict_labels,
    train,
)
from .errors import EmptyDataset, RateOutOfRange, SingleClassDataset

KINDS = ("fp_nearest", "fn_delete", "fn_to_unk")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise RateOutOfRange(f"rate {self.rate} outside [0, 1]")


@dataclass(frozen=True)
class RunResult:
    kind: str
    rate: float
    seed: int
    accuracy: float
    unk_fraction: float
    train_size: int

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "rate": self.rate,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "unk_fraction": self.unk_fraction,
            "train_size": self.train_size,
        }


@dataclass(frozen=True)
class DegradationCurve:
    kind: str
    rates: tuple[float, ...]
    mean_accuracy: tuple[float, ...]
    std_accuracy: tuple[float, ...]
    runs: tuple[RunResult, ...]

    def per_seed(self, rate: float) -> list[float]:
        return [r.accuracy for r in self.runs if r.rate == rate]


def _examples(dataset: Dataset) -> list[LabeledExample]:
    if dataset.kind != "classification":
        raise ValueError("noise experiments run on classification datasets")
    return list(dataset.records)


def split_dataset(
    dataset: Dataset, test_fraction: float = 0.25, seed: int = 1234
) -> tuple[Dataset, Dataset]:
    """Deterministic stratified train/test split, stable under record order."""
    examples = sorted(_examples(dataset), key=lambda r: r.utterance.id)
    by_label: dict[str, list[LabeledExample]] = {}
    for record in examples:
        by_label.setdefault(record.label, []).append(record)
    rng = np.random.default_rng(seed)
    train_records: list[LabeledExample] = []
    test_records: list[LabeledExample] = []
    for label in sorted(by_label):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_test = int(len(group) * test_fraction)
        chosen = set(order[:n_test].tolist())
        for i, record in enumerate(group):
            (test_records if i in chosen else train_records).append(record)
    train_records.sort(key=lambda r: r.utterance.id)
    test_records.sort(key=lambda r: r.utterance.id)
    return (
        Dataset(kind="classification", records=tuple(train_records),
                provenance=f"{dataset.provenance}|train"),
        Dataset(kind="classification", records=tuple(test_records),
                provenance=f"{dataset.provenance}|test"),
    )


def nearest_class_map(
    model: ClassifierModel,
    holdout: Sequence[LabeledExample],
    centroid_source: Optional[Sequence[LabeledExample]] = None,
) -> tuple[dict[str, str], dict[str, str]]:
    """Most-confused other class per class, from the baseline's errors.

    Classes the baseline never confuses with anything fall back to the class
    with the nearest mean-feature centroid by cosine. Returns the mapping and
    a per-class record of which method produced it.
    """
    classes = [c for c in model.classes]
    if len(classes) < 2:
        raise SingleClassDataset("nearest-class mapping needs at least 2 classes")
    predictions = predict_labels(model, [r.utterance.text for r in holdout])
    confusion: dict[str, dict[str, int]] = {c: {} for c in classes}
    for record, predicted in zip(holdout, predictions):
        if predicted != record.label:
            row = confusion.setdefault(record.label, {})
            row[predicted] = row.get(predicted, 0) + 1

    centroids = _class_centroids(model.vocabulary, centroid_source or holdout)
    mapping: dict[str, str] = {}
    methods: dict[str, str] = {}
    for cls in classes:
        row = {k: v for k, v in confusion.get(cls, {}).items() if k != cls}
        if row:
            best = max(sorted(row), key=lambda k: row[k])
            mapping[cls] = best
            methods[cls] = "confusion"
            continue
        nearest = _nearest_centroid(cls, classes, centroids)
        if nearest is not None:
            mapping[cls] = nearest
            methods[cls] = "centroid_fallback"
        else:
            mapping[cls] = min(c for c in classes if c != cls)
            methods[cls] = "no_data_fallback"
    return mapping, methods


def _class_centroids(
    vocabulary: Vocabulary, examples: Sequence[LabeledExample]
) -> dict[str, np.ndarray]:
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for record in examples:
        indices, values = featurize(record.utterance.text, vocabulary)
        vec = np.zeros(vocabulary.size)
        vec[indices] = values
        if record.label not in sums:
            sums[record.label] = vec
            counts[record.label] = 1
        else:
            sums[record.label] += vec
            counts[record.label] += 1
    return {label: sums[label] / counts[label] for label in sums}


def _nearest_centroid(
    cls: str, classes: Sequence[str], centroids: dict[str, np.ndarray]
) -> Optional[str]:
    own = centroids.get(cls)
    if own is None:
        return None
    own_norm = np.linalg.norm(own)
    if own_norm == 0.0:
        return None
    best, best_cos = None, -np.inf
    for other in sorted(classes):
        if other == cls or other not in centroids:
            continue
        vec = centroids[other]
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            continue
        cos = float(own @ vec / (own_norm * norm))
        if cos > best_cos:
            best, best_cos = other, cos
    return best


def corrupt(
    dataset: Dataset,
    spec: CorruptionSpec,
    nearest_map: Optional[dict[str, str]] = None,
) -> Dataset:
    """Apply one corruption to a training split, deterministically per seed."""
    records = _examples(dataset)
    n_corrupt = int(np.floor(spec.rate * len(records)))
    rng = np.random.default_rng(spec.seed)
    selected = set(
        rng.choice(len(records), size=n_corrupt, replace=False).tolist()
    )
    out: list[LabeledExample] = []
    for i, record in enumerate(records):
        if i not in selected:
            out.append(record)
            continue
        if spec.kind == "fn_delete":
            continue
        if spec.kind == "fn_to_unk":
            out.append(replace(record, label=UNK_ID))
            continue
        if nearest_map is None:
            raise ValueError("fp_nearest requires a nearest-class map")
        new_label = nearest_map[record.label]
        if new_label == record.label:
            raise ValueError(f"nearest map sends {record.label!r} to itself")
        out.append(replace(record, label=new_label))
    return Dataset(
        kind="classification",
        records=tuple(out),
        provenance=f"{dataset.provenance}|{spec.kind}@{spec.rate}/seed{spec.seed}",
    )


def evaluate(model: ClassifierModel, examples: Sequence[LabeledExample]) -> tuple[float, float]:
    """(accuracy, fraction of unk predictions) on labeled examples."""
    predictions = predict_labels(model, [r.utterance.text for r in examples])
    correct = sum(1 for p, r in zip(predictions, examples) if p == r.label)
    unk = sum(1 for p in predictions if p == UNK_ID)
    return correct / len(examples), unk / len(examples)


def run_experiment(
    dataset: Dataset,
    rates: Sequence[float],
    kinds: Sequence[str],
    seeds: Sequence[int],
    train_config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    test_fraction: float = 0.25,
    split_seed: int = 1234,
) -> dict[str, DegradationCurve]:
    """Corrupt, retrain, and evaluate over the full (kind, rate, seed) grid."""
    rates = sorted(rates)
    train_split, test_split = split_dataset(
        dataset, test_fraction=test_fraction, seed=split_seed
    )
    if not train_split.records:
        raise EmptyDataset("empty training split")
    test_digest = test_split.digest

    nearest: Optional[dict[str, str]] = None
    methods: dict[str, str] = {}
    if "fp_nearest" in kinds:
        baseline = train(train_split, train_config)
        nearest, methods = nearest_class_map(
            baseline, list(test_split.records), list(train_split.records)
        )

    out_path = Path(out_dir) if out_dir is not None else None
    runs_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        runs_fh = open(out_path / "runs.jsonl", "w", encoding="utf-8")

    curves: dict[str, DegradationCurve] = {}
    try:
        for kind in kinds:
            runs: list[RunResult] = []
            for rate in rates:
                for seed in seeds:
                    spec = CorruptionSpec(kind=kind, rate=rate, seed=seed)
                    corrupted = corrupt(train_split, spec, nearest_map=nearest)
                    model = train(corrupted, replace(train_config, seed=seed))
                    acc, unk_fraction = evaluate(model, list(test_split.records))
                    result = RunResult(
                        kind=kind,
                        rate=rate,
                        seed=seed,
                        accuracy=acc,
                        unk_fraction=unk_fraction,
                        train_size=len(corrupted),
                    )
                    runs.append(result)
                    if runs_fh is not None:
                        runs_fh.write(json.dumps(result.to_record()) + "\n")
                        runs_fh.flush()
            means, stds = [], []
            for rate in rates:
                values = [r.accuracy for r in runs if r.rate == rate]
                means.append(float(np.mean(values)))
                stds.append(float(np.std(values)))
            curves[kind] = DegradationCurve(
                kind=kind,
                rates=tuple(rates),
                mean_accuracy=tuple(means),
                std_accuracy=tuple(stds),
                runs=tuple(runs),
            )
    finally:
        if runs_fh is not None:
            runs_fh.close()

    assert test_split.digest == test_digest, "test split mutated during experiment"

    if out_path is not None:
        _write_summary(out_path, curves, methods)
        for kind, curve in curves.items():
            _plot_curve(out_path / f"{kind}.png", curve)
    return curves


def _write_summary(
    out_path: Path, curves: dict[str, DegradationCurve], methods: dict[str, str]
) -> None:
    with open(out_path / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("kind,rate,mean_accuracy,std_accuracy,n_seeds\n")
        for kind, curve in curves.items():
            for rate, mean, std in zip(
                curve.rates, curve.mean_accuracy, curve.std_accuracy
            ):
                n = len(curve.per_seed(rate))
                fh.write(f"{kind},{rate},{mean:.6f},{std:.6f},{n}\n")
    if methods:
        (out_path / "nearest_map_methods.json").write_text(
            json.dumps(methods, indent=2), encoding="utf-8"
        )


def _plot_curve(path: Path, curve: DegradationCurve) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    means = np.array(curve.mean_accuracy)
    stds = np.array(curve.std_accuracy)
    ax.plot(curve.rates, means, marker="o", linewidth=1.2, label="mean accuracy")
    ax.fill_between(curve.rates, means - stds, means + stds, alpha=0.2)
    ax.set_xlabel("corruption rate")
    ax.set_ylabel("test accuracy")
    ax.set_title(f"Classifier degradation under {curve.kind}")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
