"""Job report bundle: metric tables, counts, and latency accounting."""

from __future__ import annotations

import json
import statistics
from pathlib import Path
from typing import Optional, Union

from ..catalog import Dataset, load_catalog, load_dataset
from ..errors import EmptyInput
from ..metrics import (
    LabeledPair,
    binary_report,
    format_binary_table,
    format_multiclass_table,
    multiclass_report,
)
from .job import (
    LABELS_FILE,
    OUTCOMES_FILE,
    STATUS_ABSTAINED,
    STATUS_DECIDED,
    load_job_state,
)
from .journal import read_records


def _references(dataset: Dataset) -> dict[str, object]:
    refs = {}
    for record in dataset.records:
        label = getattr(record, "reference_label", None)
        if label is not None:
            refs[record.utterance.id] = label
    return refs


def _latency_summary(outcomes: list[dict], labels: list[dict]) -> dict:
    llm = [
        r["latency_seconds"]
        for r in outcomes
        if r.get("latency_seconds") is not None
    ]
    outcome_ts = {r.get("task_id"): r.get("ts") for r in outcomes}
    human = [
        record["ts"] - outcome_ts[record["item_id"]]
        for record in labels
        if record.get("ts") is not None
        and outcome_ts.get(record.get("item_id")) is not None
    ]
    return {
        "llm_mean_seconds": statistics.fmean(llm) if llm else None,
        "llm_items": len(llm),
        "human_mean_seconds": statistics.fmean(human) if human else None,
        "human_items": len(human),
    }


def export_report(
    job_dir: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    catalog_path: Optional[Union[str, Path]] = None,
    dataset_path: Optional[Union[str, Path]] = None,
) -> dict:
    """Write report.json (+ metric table text files) for a job directory."""
    job_dir = Path(job_dir)
    meta = json.loads((job_dir / "job.json").read_text(encoding="utf-8"))
    catalog = load_catalog(catalog_path or meta["catalog"])
    dataset = load_dataset(dataset_path or meta["dataset"], catalog)
    outcomes = list(read_records(job_dir / OUTCOMES_FILE))
    labels = list(read_records(job_dir / LABELS_FILE))
    state = load_job_state(job_dir, dataset)

    references = _references(dataset)
    engine_pairs = [
        LabeledPair(
            task_id=r["task_id"],
            hypothesis=r["decision"],
            reference=references[r["task_id"]],
        )
        for r in outcomes
        if r.get("status") in (STATUS_DECIDED, STATUS_ABSTAINED)
        and r["task_id"] in references
    ]

    report: dict = {
        "job_id": meta.get("job_id", job_dir.name),
        "kind": meta.get("kind", dataset.kind),
        "counters": state.counters,
        "latency": _latency_summary(outcomes, labels),
        "human_labels": len(labels),
    }

    tables: dict[str, str] = {}
    if engine_pairs:
        if dataset.kind == "binary":
            engine_metrics = binary_report(engine_pairs)
            report["metrics"] = engine_metrics.to_dict()
            tables["metrics.txt"] = format_binary_table(
                [("engine", engine_metrics)]
            )
        else:
            try:
                engine_metrics = multiclass_report(engine_pairs)
                report["metrics"] = engine_metrics.to_dict()
                tables["metrics.txt"] = format_multiclass_table(
                    [("engine", engine_metrics)]
                )
            except EmptyInput:
                pass
    else:
        report["metrics"] = None

    out_path = Path(out_dir) if out_dir is not None else job_dir / "report"
    out_path.mkdir(parents=True, exist_ok=True)
    (out_path / "report.json").write_text(
        json.dumps(report, indent=2), encoding="utf-8"
    )
    for name, text in tables.items():
        (out_path / name).write_text(text + "\n", encoding="utf-8")
    return report
