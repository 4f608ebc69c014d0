import csv

import pytest

from annogate.calibration import (
    Baseline,
    OperatingPoint,
    default_grid,
    export_curve,
    select_threshold,
    sweep,
)
from annogate.catalog import BinaryTask, Dataset, Utterance
from annogate.engines import PROB, AnnotationOutcome, EngineConfig, prob_annotate
from annogate.errors import MissingProbs, NoFeasibleThreshold
from annogate.gateway import TokenDistribution


def planted_batch(n=40, boundary=0.75):
    """Confidence correlates with correctness: high-prob items are right."""
    tasks, outcomes = [], []
    config = EngineConfig(approach=PROB, threshold=0.0)
    for i in range(n):
        confidence = 0.52 + 0.46 * i / (n - 1)  # 0.52 .. 0.98
        predicted = i % 2  # alternate which class the model favors
        reference = predicted if confidence >= boundary else 1 - predicted
        task = BinaryTask(
            utterance=Utterance(id=f"t{i:03d}", text=f"item {i}"),
            candidate="pricing",
            reference_label=reference,
        )
        dist = TokenDistribution(
            entries=((str(predicted), confidence), (str(1 - predicted), 1.0 - confidence))
        )
        outcomes.append(prob_annotate(task, dist, config, model="m"))
        tasks.append(task)
    dataset = Dataset(kind="binary", records=tuple(tasks), provenance="calibration")
    return dataset, outcomes


def test_sweep_grid_zero_gives_full_coverage():
    dataset, outcomes = planted_batch()
    (point,) = sweep(outcomes, dataset, [0.0])
    assert point.coverage == 1.0


def test_sweep_grid_above_one_gives_zero_coverage():
    dataset, outcomes = planted_batch()
    (point,) = sweep(outcomes, dataset, [1.01])
    assert point.coverage == 0.0
    assert point.accuracy is None
    assert point.accuracy_total == 0.0


def test_sweep_planted_correlation_improves_accuracy():
    dataset, outcomes = planted_batch()
    full, half = sweep(outcomes, dataset, [0.0, 0.75])
    assert half.coverage < full.coverage
    assert half.accuracy >= full.accuracy
    assert half.accuracy == 1.0  # everything above the boundary is correct


def test_sweep_requires_probs():
    dataset, outcomes = planted_batch(n=3)
    text_outcome = AnnotationOutcome(
        task_id="t000", kind="binary", decision=1, engine="text", model="m"
    )
    with pytest.raises(MissingProbs):
        sweep([text_outcome], dataset, [0.0])


def test_sweep_coverage_monotone_on_grid():
    dataset, outcomes = planted_batch()
    points = sweep(outcomes, dataset, default_grid(0.01))
    coverages = [p.coverage for p in points]
    assert all(a >= b for a, b in zip(coverages, coverages[1:]))


def test_redecision_at_original_threshold_reproduces_decisions():
    dataset, outcomes = planted_batch()
    config = EngineConfig(approach=PROB, threshold=0.8)
    rethresholded = [
        prob_annotate(
            task,
            TokenDistribution(entries=tuple(o.raw_token_probs.items())),
            config,
            model="m",
        )
        for task, o in zip(dataset.records, outcomes)
    ]
    (point,) = sweep(outcomes, dataset, [0.8])
    decided = sum(1 for o in rethresholded if not o.abstained)
    assert point.coverage == pytest.approx(decided / len(outcomes))


def test_select_threshold_low_baseline_picks_full_coverage():
    dataset, outcomes = planted_batch()
    points = sweep(outcomes, dataset, default_grid(0.05))
    chosen = select_threshold(points, Baseline(floors={"accuracy": 0.0}))
    assert chosen.coverage == 1.0


def test_select_threshold_unattainable_baseline():
    dataset, outcomes = planted_batch()
    points = sweep(outcomes, dataset, [0.0, 0.5])
    with pytest.raises(NoFeasibleThreshold):
        select_threshold(points, Baseline(floors={"accuracy": 1.0, "coverage": 1.0}))


def test_select_threshold_max_coverage_among_feasible():
    dataset, outcomes = planted_batch()
    grid = default_grid(0.01)
    points = sweep(outcomes, dataset, grid)
    baseline = Baseline(floors={"accuracy": 0.95})
    chosen = select_threshold(points, baseline)
    # Exhaustive check over the grid.
    feasible = [p for p in points if p.accuracy is not None and p.accuracy >= 0.95]
    assert feasible
    assert chosen.coverage == max(p.coverage for p in feasible)
    assert chosen.accuracy >= 0.95


def test_select_threshold_never_violates_floors():
    dataset, outcomes = planted_batch()
    points = sweep(outcomes, dataset, default_grid(0.02))
    baseline = Baseline(floors={"accuracy": 0.8, "macro_f1": 0.5})
    chosen = select_threshold(points, baseline)
    assert chosen.accuracy >= 0.8
    assert chosen.binary.macro_f1 >= 0.5


def test_baseline_floor_validation():
    with pytest.raises(ValueError):
        Baseline(floors={"accuracy": 1.5})


def test_export_curve_csv_rows(tmp_path):
    points = [
        OperatingPoint(threshold=0.0, coverage=1.0, accuracy=0.7, accuracy_total=0.7),
        OperatingPoint(threshold=0.5, coverage=0.8, accuracy=0.8, accuracy_total=0.64),
        OperatingPoint(threshold=0.9, coverage=0.2, accuracy=0.95, accuracy_total=0.19),
    ]
    path = tmp_path / "curve.csv"
    export_curve(points, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["threshold", "coverage", "accuracy", "accuracy_total"]
    assert len(rows) == 4


def test_export_curve_deduplicates_thresholds(tmp_path):
    point = OperatingPoint(
        threshold=0.5, coverage=0.8, accuracy=0.8, accuracy_total=0.64
    )
    other = OperatingPoint(
        threshold=0.6, coverage=0.7, accuracy=0.85, accuracy_total=0.595
    )
    path = tmp_path / "curve.csv"
    export_curve([point, point, other], path)
    rows = list(csv.reader(path.open()))
    assert len(rows) == 3


def test_export_curve_writes_plot(tmp_path):
    dataset, outcomes = planted_batch()
    points = sweep(outcomes, dataset, default_grid(0.1))
    csv_path = tmp_path / "curve.csv"
    plot_path = tmp_path / "curve.png"
    export_curve(points, csv_path, plot_path=plot_path)
    assert plot_path.stat().st_size > 0
