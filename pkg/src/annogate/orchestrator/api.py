"""Review API over a job directory, versioned under /api/v1.

Endpoints:

* ``GET  /api/v1/queue``  — paged abstained items with text, options,
  descriptions, retrieved chunks, and the engine's probabilities;
* ``POST /api/v1/labels`` — submit one human label; first write wins;
* ``GET  /api/v1/stats``  — counters, coverage so far, human-vs-LLM split.

Human labels never overwrite engine outcomes; they land in their own journal
and the two are reported side by side. The ``conf`` label is accepted here
and only here: it is a human-only label.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from ..catalog import CONF_ID, UNK_ID, Dataset, load_catalog, load_dataset
from ..metrics import coverage
from .job import (
    LABELS_FILE,
    OUTCOMES_FILE,
    STATUS_ABSTAINED,
    STATUS_DECIDED,
    STATUS_FAILED,
    STATUS_HUMAN_LABELED,
    build_review_item,
    load_job_state,
)
from .journal import append_record, read_records


class JobStore:
    """Serialized access to one job directory's journals."""

    def __init__(self, job_dir: Union[str, Path], catalog_path=None, dataset_path=None):
        self.job_dir = Path(job_dir)
        self._lock = threading.Lock()
        meta = self._job_meta()
        self.catalog = load_catalog(catalog_path or meta["catalog"])
        self.dataset: Dataset = load_dataset(
            dataset_path or meta["dataset"], self.catalog
        )
        self.tasks = {r.utterance.id: r for r in self.dataset.records}

    def _job_meta(self) -> dict:
        meta_path = self.job_dir / "job.json"
        if meta_path.exists():
            return json.loads(meta_path.read_text(encoding="utf-8"))
        raise FileNotFoundError(
            f"{meta_path} not found; pass catalog/dataset paths explicitly"
        )

    # -- views ------------------------------------------------------------

    def outcome_records(self) -> dict[str, dict]:
        records = {}
        for record in read_records(self.job_dir / OUTCOMES_FILE):
            records[record.get("task_id")] = record
        return records

    def label_records(self) -> dict[str, dict]:
        labels = {}
        for record in read_records(self.job_dir / LABELS_FILE):
            labels.setdefault(record.get("item_id"), record)
        return labels

    def queue(self, page: int, page_size: int) -> dict:
        outcomes = self.outcome_records()
        labels = self.label_records()
        items = []
        for record in self.dataset.records:
            task_id = record.utterance.id
            outcome = outcomes.get(task_id)
            if outcome is None or outcome.get("status") != STATUS_ABSTAINED:
                continue
            if task_id in labels:
                continue
            items.append(build_review_item(record, self.catalog, outcome))
        start = (page - 1) * page_size
        return {
            "items": [item.to_payload() for item in items[start : start + page_size]],
            "total": len(items),
            "page": page,
            "page_size": page_size,
        }

    def option_space(self, task_id: str) -> set:
        item = build_review_item(
            self.tasks[task_id], self.catalog, self.outcome_records().get(task_id, {})
        )
        return {option["value"] for option in item.options} | {UNK_ID, CONF_ID}

    def post_label(self, item_id: str, label, reviewer: str) -> dict:
        with self._lock:
            if item_id not in self.tasks:
                raise HTTPException(status_code=404, detail="unknown item")
            outcomes = self.outcome_records()
            outcome = outcomes.get(item_id)
            if outcome is None or outcome.get("status") != STATUS_ABSTAINED:
                raise HTTPException(
                    status_code=400, detail="item is not in the review queue"
                )
            if item_id in self.label_records():
                raise HTTPException(status_code=409, detail="already labeled")
            if label not in self.option_space(item_id):
                raise HTTPException(
                    status_code=400, detail=f"label {label!r} outside the option space"
                )
            record = {
                "item_id": item_id,
                "label": label,
                "reviewer": reviewer,
                "ts": time.time(),
            }
            append_record(self.job_dir / LABELS_FILE, record)
            return record

    def stats(self) -> dict:
        state = load_job_state(self.job_dir, self.dataset)
        counts = state.counters
        decided = counts[STATUS_DECIDED]
        # Engine coverage so far: decided vs abstained (incl. human-resolved).
        engine_labels = [
            0 if status == STATUS_DECIDED else UNK_ID
            for status in state.statuses.values()
            if status in (STATUS_DECIDED, STATUS_ABSTAINED, STATUS_HUMAN_LABELED)
        ]
        return {
            "total": counts["total"],
            "pending": counts["pending"],
            "decided": decided,
            "abstained": counts[STATUS_ABSTAINED],
            "failed": counts[STATUS_FAILED],
            "human_labeled": counts[STATUS_HUMAN_LABELED],
            "coverage": coverage(engine_labels) if engine_labels else 0.0,
            "llm_share": decided / counts["total"] if counts["total"] else 0.0,
            "human_share": (
                counts[STATUS_HUMAN_LABELED] / counts["total"]
                if counts["total"]
                else 0.0
            ),
        }


class LabelSubmission(BaseModel):
    item_id: str
    label: Union[int, str]
    reviewer: str = "anonymous"


def make_app(
    job_dir: Union[str, Path],
    catalog_path: Optional[Union[str, Path]] = None,
    dataset_path: Optional[Union[str, Path]] = None,
) -> FastAPI:
    store = JobStore(job_dir, catalog_path=catalog_path, dataset_path=dataset_path)
    app = FastAPI(title="annogate review API", version="v1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    @app.get("/api/v1/queue")
    def get_queue(
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=20, ge=1, le=200),
        job: Optional[str] = None,
    ) -> dict:
        if job is not None and job != store.job_dir.name:
            raise HTTPException(status_code=404, detail=f"unknown job {job!r}")
        return store.queue(page=page, page_size=page_size)

    @app.post("/api/v1/labels")
    def post_label(submission: LabelSubmission) -> dict:
        record = store.post_label(
            submission.item_id, submission.label, submission.reviewer
        )
        return {"status": "ok", "label": record}

    @app.get("/api/v1/stats")
    def get_stats() -> dict:
        return store.stats()

    return app
