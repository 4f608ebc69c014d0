"""End-to-end annotation jobs.

Per item: the classifier (when configured) proposes the candidate tuple, the
intent dictionary supplies descriptions and examples, retrieval supplies
supporting chunks for the client text, the prompt is rendered, and the
engine (or ensemble) decides. Confident decisions are persisted as decided;
abstentions go to the review queue for a human label.

Jobs are resumable: outcomes land in an append-only journal keyed by task id,
and a rerun skips every task already journaled, so completed jobs are
idempotent and an interrupted run continues where it stopped.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from ..catalog import (
    CONF_ID,
    UNK_ID,
    BinaryTask,
    Dataset,
    IntentCatalog,
    MultiClassTask,
    load_catalog,
    load_dataset,
)
from ..classifier import ClassifierModel, predict_topk
from ..engines import (
    PROB,
    PROB_AFTER_REASONING,
    TEXT,
    AnnotationOutcome,
    Task,
    ensemble_annotate,
    run_prob_annotation,
    run_prob_after_reasoning,
    run_text_annotation,
)
from ..errors import AnnogateError, ConfigError
from ..gateway import GatewayClient
from ..prompting import (
    BINARY_PROB,
    BINARY_TEXT,
    MULTICLASS_PROB,
    MULTICLASS_TEXT,
    RenderedPrompt,
    render_binary,
    render_multiclass,
)
from ..rag import CorpusIndexes, DocumentChunk, build_indexes, load_corpus, retrieve_for_prompt
from .config import EngineSpec, JobConfig
from .journal import append_record, read_records

OUTCOMES_FILE = "outcomes.jsonl"
LABELS_FILE = "labels.jsonl"

STATUS_PENDING = "pending"
STATUS_DECIDED = "decided"
STATUS_ABSTAINED = "abstained"
STATUS_FAILED = "failed"
STATUS_HUMAN_LABELED = "human_labeled"


@dataclass
class JobState:
    job_id: str
    statuses: dict[str, str]
    started_at: float
    finished_at: Optional[float] = None

    @property
    def counters(self) -> dict[str, int]:
        counts = {
            STATUS_PENDING: 0,
            STATUS_DECIDED: 0,
            STATUS_ABSTAINED: 0,
            STATUS_FAILED: 0,
            STATUS_HUMAN_LABELED: 0,
        }
        for status in self.statuses.values():
            counts[status] += 1
        counts["total"] = len(self.statuses)
        return counts


def _outcome_status(record: dict) -> str:
    if record.get("status") == STATUS_FAILED:
        return STATUS_FAILED
    return (
        STATUS_ABSTAINED if record.get("decision") == UNK_ID else STATUS_DECIDED
    )


def load_job_state(job_dir: Union[str, Path], dataset: Dataset) -> JobState:
    """Derive per-item statuses by replaying the journals."""
    job_dir = Path(job_dir)
    statuses = {r.utterance.id: STATUS_PENDING for r in dataset.records}
    for record in read_records(job_dir / OUTCOMES_FILE):
        task_id = record.get("task_id")
        if task_id in statuses:
            statuses[task_id] = _outcome_status(record)
    for record in read_records(job_dir / LABELS_FILE):
        item_id = record.get("item_id")
        if statuses.get(item_id) == STATUS_ABSTAINED:
            statuses[item_id] = STATUS_HUMAN_LABELED
    return JobState(job_id=job_dir.name, statuses=statuses, started_at=0.0)


class JobRunner:
    """Loads the fixtures a job needs and owns its per-item pipeline."""

    def __init__(self, config: JobConfig, client: Optional[GatewayClient] = None):
        self.config = config
        self.client = client or GatewayClient()
        self.catalog: IntentCatalog = load_catalog(config.catalog)
        self.dataset: Dataset = load_dataset(config.dataset, self.catalog)
        if self.dataset.kind != config.kind:
            raise ConfigError(
                f"dataset kind {self.dataset.kind!r} does not match "
                f"configured kind {config.kind!r}"
            )
        self.indexes: Optional[CorpusIndexes] = None
        if config.rag is not None:
            self.indexes = build_indexes(
                load_corpus(config.rag.corpus),
                max_chunk_length=config.rag.max_chunk_length,
                client=self.client,
                embed_endpoint=config.rag.embed_endpoint,
                rerank_endpoint=config.rag.rerank_endpoint,
            )
        self.reranker_model: Optional[ClassifierModel] = None
        if config.classifier_checkpoint is not None:
            self.reranker_model = ClassifierModel.load(config.classifier_checkpoint)

    # -- pipeline pieces -----------------------------------------------------

    def _candidates(self, task: Task) -> Task:
        """Multiclass candidate tuples come from the classifier's top 5."""
        if self.reranker_model is None or not isinstance(task, MultiClassTask):
            return task
        top5 = predict_topk(self.reranker_model, task.utterance.text, 5)
        return replace(task, candidates=top5.ids)

    def _retrieve(self, task: Task) -> list[DocumentChunk]:
        if self.indexes is None:
            return []
        intent_texts = None
        if self.config.rag.config.query_mode == "per_intent":
            ids = (
                [task.candidate]
                if isinstance(task, BinaryTask)
                else [c for c in task.candidates if c != UNK_ID]
            )
            intent_texts = [
                self.catalog.resolve(intent_id).description for intent_id in ids
            ]
        return retrieve_for_prompt(
            self.indexes,
            task.utterance.text,
            self.config.rag.config,
            intent_texts=intent_texts,
        )

    def _render(self, task: Task, approach: str, docs) -> RenderedPrompt:
        if isinstance(task, BinaryTask):
            template = BINARY_PROB if approach == PROB else BINARY_TEXT
            return render_binary(
                template, task, self.catalog.resolve(task.candidate), docs
            )
        template = MULTICLASS_PROB if approach == PROB else MULTICLASS_TEXT
        resolved = [self.catalog.resolve(c) for c in task.candidates]
        return render_multiclass(template, task, resolved, docs)

    def _run_engine(
        self, spec: EngineSpec, task: Task, docs
    ) -> AnnotationOutcome:
        approach = spec.config.approach
        prompt = self._render(task, approach, docs)
        if approach == TEXT:
            return run_text_annotation(
                self.client, spec.endpoint, task, prompt, spec.config
            )
        if approach == PROB_AFTER_REASONING:
            return run_prob_after_reasoning(
                self.client, spec.endpoint, task, prompt, spec.config
            )
        return run_prob_annotation(
            self.client, spec.endpoint, task, prompt, spec.config
        )

    def annotate_item(self, task: Task) -> tuple[AnnotationOutcome, list[DocumentChunk]]:
        task = self._candidates(task)
        docs = self._retrieve(task)
        if self.config.ensemble:
            members = [
                self._run_engine(spec, task, docs) for spec in self.config.engines
            ]
            outcome = ensemble_annotate(
                task, members, self.config.ensemble_threshold
            )
        else:
            outcome = self._run_engine(self.config.engines[0], task, docs)
        return outcome, docs


def _write_job_meta(job_dir: Path, config: JobConfig) -> None:
    meta = {
        "job_id": config.job_id,
        "kind": config.kind,
        "catalog": str(config.catalog),
        "dataset": str(config.dataset),
        "ensemble": config.ensemble,
        "engines": [
            {"approach": spec.config.approach, "model": spec.endpoint.model}
            for spec in config.engines
        ],
    }
    (job_dir / "job.json").write_text(
        json.dumps(meta, indent=2), encoding="utf-8"
    )


def run_job(
    config: JobConfig,
    client: Optional[GatewayClient] = None,
    after_item: Optional[Callable[[int, str], None]] = None,
) -> JobState:
    """Run (or resume) a job; every item ends in exactly one terminal status.

    ``after_item`` is called after each item is persisted; tests use it to
    inject interruptions.
    """
    runner = JobRunner(config, client=client)
    job_dir = Path(config.output_dir)
    job_dir.mkdir(parents=True, exist_ok=True)
    _write_job_meta(job_dir, config)
    outcomes_path = job_dir / OUTCOMES_FILE

    done = {record.get("task_id") for record in read_records(outcomes_path)}
    pending = [
        record
        for record in runner.dataset.records
        if record.utterance.id not in done
    ]
    started = time.time()

    def process(task: Task) -> dict:
        t0 = time.perf_counter()
        try:
            outcome, docs = runner.annotate_item(task)
            outcome = replace(
                outcome, latency_seconds=time.perf_counter() - t0
            )
            record = outcome.to_record()
            record["status"] = (
                STATUS_ABSTAINED if outcome.abstained else STATUS_DECIDED
            )
            record["retrieved"] = [
                {"chunk_id": d.id, "text": d.text} for d in docs
            ]
        except AnnogateError as exc:
            record = {
                "task_id": task.utterance.id,
                "status": STATUS_FAILED,
                "error": f"{type(exc).__name__}: {exc}",
                "latency_seconds": time.perf_counter() - t0,
            }
        record["ts"] = time.time()
        return record

    position = 0
    workers = max(1, config.parallelism)
    while position < len(pending):
        chunk = pending[position : position + workers]
        if workers == 1:
            results = [process(task) for task in chunk]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(process, chunk))
        for offset, record in enumerate(results):
            append_record(outcomes_path, record)
            if after_item is not None:
                after_item(position + offset, record["task_id"])
        position += len(chunk)

    state = load_job_state(job_dir, runner.dataset)
    state.started_at = started
    state.finished_at = time.time()
    return state


# --- review queue --------------------------------------------------------------


@dataclass
class ReviewItem:
    item_id: str
    kind: str
    text: str
    options: list[dict]
    engine: dict
    retrieved: list[dict]

    def to_payload(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind,
            "text": self.text,
            "options": self.options,
            "engine": self.engine,
            "retrieved": self.retrieved,
        }


def _binary_options() -> list[dict]:
    return [
        {"key": "1", "value": 1, "name": "yes", "description": "the class fits the text"},
        {"key": "0", "value": 0, "name": "no", "description": "the class does not fit"},
    ]


def _special_options() -> list[dict]:
    return [
        {
            "key": "u",
            "value": UNK_ID,
            "name": "unk",
            "description": "refuse to classify",
        },
        {
            "key": "c",
            "value": CONF_ID,
            "name": "conf",
            "description": "several intents fit (human-only label)",
        },
    ]


def build_review_item(
    task: Task, catalog: IntentCatalog, outcome_record: dict
) -> ReviewItem:
    if isinstance(task, BinaryTask):
        intent = catalog.resolve(task.candidate)
        options = _binary_options()
        for option in options:
            option["intent_id"] = task.candidate
            option["intent_name"] = getattr(intent, "name", task.candidate)
            option["intent_description"] = getattr(intent, "description", "")
        kind = "binary"
    else:
        options = []
        for number, candidate in enumerate(task.candidates, start=1):
            resolved = catalog.resolve(candidate)
            options.append(
                {
                    "key": str(number),
                    "value": candidate,
                    "name": getattr(resolved, "name", "unk"),
                    "description": getattr(
                        resolved, "description", "refuse to classify"
                    ),
                }
            )
        kind = "multiclass"
    present = {option["value"] for option in options}
    options.extend(o for o in _special_options() if o["value"] not in present)
    engine_view = {
        key: outcome_record.get(key)
        for key in ("engine", "model", "decision", "max_prob", "answer_probs", "threshold")
    }
    return ReviewItem(
        item_id=task.utterance.id,
        kind=kind,
        text=task.utterance.text,
        options=options,
        engine=engine_view,
        retrieved=outcome_record.get("retrieved", []),
    )
