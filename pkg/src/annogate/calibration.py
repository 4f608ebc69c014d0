"""Threshold sweeps and abstention-threshold selection.

A sweep re-decides stored outcomes at each grid threshold (no re-querying)
and measures coverage/accuracy against held-out references. Selection picks
the highest-coverage operating point whose metrics clear every named
baseline floor; raising the threshold trades coverage for accuracy, so the
floor-constrained maximum is the useful point, not the maximum accuracy.

Calibration must run on a calibration split, never the benchmark; the
callers enforce the dataset role.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .catalog import BinaryTask, Dataset
from .engines import AnnotationOutcome, Task, decide_from_answer_probs
from .errors import EmptyAfterFilter, MissingProbs, NoFeasibleThreshold
from .metrics import (
    BinaryReport,
    LabeledPair,
    accuracy,
    accuracy_total,
    binary_report,
    coverage,
)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    coverage: float
    accuracy: Optional[float]
    accuracy_total: float
    binary: Optional[BinaryReport] = None

    def metric(self, name: str) -> Optional[float]:
        if name in ("coverage", "accuracy", "accuracy_total"):
            return getattr(self, name)
        if self.binary is not None:
            return getattr(self.binary, name, None)
        return None


@dataclass(frozen=True)
class Baseline:
    """Named metric floors, e.g. the human annotators' accuracy and macro F1."""

    floors: dict[str, float]

    def __post_init__(self) -> None:
        for name, value in self.floors.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"floor {name!r}={value} outside [0, 1]")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Baseline":
        return cls(floors=json.loads(Path(path).read_text(encoding="utf-8")))


def _tasks_by_id(dataset: Dataset) -> dict[str, Task]:
    return {record.utterance.id: record for record in dataset.records}


def sweep(
    outcomes: Sequence[AnnotationOutcome],
    dataset: Dataset,
    thresholds: Sequence[float],
) -> list[OperatingPoint]:
    """One operating point per threshold, re-deciding each outcome."""
    tasks = _tasks_by_id(dataset)
    joined = []
    for outcome in outcomes:
        if outcome.answer_probs is None or outcome.max_prob is None:
            raise MissingProbs(f"outcome {outcome.task_id} has no max_prob")
        task = tasks.get(outcome.task_id)
        if task is None or task.reference_label is None:
            raise ValueError(
                f"no reference label for outcome {outcome.task_id!r}"
            )
        joined.append((outcome, task))
    binary = all(isinstance(task, BinaryTask) for _, task in joined)

    points = []
    for threshold in thresholds:
        pairs = []
        for outcome, task in joined:
            decision, _ = decide_from_answer_probs(
                outcome.answer_probs, task, threshold
            )
            pairs.append(
                LabeledPair(
                    task_id=outcome.task_id,
                    hypothesis=decision,
                    reference=task.reference_label,
                )
            )
        cov = coverage([p.hypothesis for p in pairs])
        try:
            acc: Optional[float] = accuracy(pairs)
        except EmptyAfterFilter:
            acc = None
        total = accuracy_total(acc, cov) if acc is not None else 0.0
        report = binary_report(pairs) if binary else None
        points.append(
            OperatingPoint(
                threshold=float(threshold),
                coverage=cov,
                accuracy=acc,
                accuracy_total=total,
                binary=report,
            )
        )
    return points


def default_grid(step: float = 0.01) -> list[float]:
    """Thresholds 0.00 .. 1.00 inclusive at the given step."""
    n = round(1.0 / step)
    return [round(i * step, 10) for i in range(n + 1)]


def select_threshold(
    points: Sequence[OperatingPoint],
    baseline: Baseline,
    objective: str = "max_coverage",
) -> OperatingPoint:
    """Highest-coverage point clearing every baseline floor."""
    if not points:
        raise ValueError("no operating points to select from")
    if objective != "max_coverage":
        raise ValueError(f"unknown objective {objective!r}")
    feasible = [
        point
        for point in points
        if all(
            point.metric(name) is not None and point.metric(name) >= floor
            for name, floor in baseline.floors.items()
        )
    ]
    if not feasible:
        raise NoFeasibleThreshold(
            f"no operating point satisfies floors {baseline.floors}"
        )
    return max(feasible, key=lambda p: (p.coverage, -p.threshold))


def export_curve(
    points: Sequence[OperatingPoint],
    csv_path: Union[str, Path],
    plot_path: Optional[Union[str, Path]] = None,
) -> None:
    """Write the coverage/accuracy curve as CSV and, optionally, a plot."""
    if len(points) < 2:
        raise ValueError("a curve needs at least two operating points")
    seen: set[float] = set()
    unique = []
    for point in points:
        if point.threshold not in seen:
            seen.add(point.threshold)
            unique.append(point)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "coverage", "accuracy", "accuracy_total"])
        for point in unique:
            writer.writerow(
                [
                    f"{point.threshold:.6g}",
                    f"{point.coverage:.6f}",
                    "" if point.accuracy is None else f"{point.accuracy:.6f}",
                    f"{point.accuracy_total:.6f}",
                ]
            )
    if plot_path is not None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        drawn = [(p.coverage, p.accuracy) for p in unique if p.accuracy is not None]
        xs = [c for c, _ in drawn]
        ys = [a for _, a in drawn]
        ax.plot(xs, ys, marker="o", linewidth=1)
        ax.set_xlabel("coverage")
        ax.set_ylabel("accuracy")
        ax.set_title("Accuracy vs coverage across abstention thresholds")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(plot_path, dpi=120)
        plt.close(fig)
