"""Job configuration: a TOML file describing one annotation job."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..engines import PROB, PROB_AFTER_REASONING, TEXT, EngineConfig
from ..errors import ConfigError
from ..gateway import ModelEndpoint
from ..rag import RagConfig


@dataclass
class EngineSpec:
    endpoint: ModelEndpoint
    config: EngineConfig


@dataclass
class RagSpec:
    corpus: Path
    config: RagConfig
    max_chunk_length: int = 500
    embed_endpoint: Optional[ModelEndpoint] = None
    rerank_endpoint: Optional[ModelEndpoint] = None


@dataclass
class JobConfig:
    job_id: str
    kind: str  # "binary" | "multiclass"
    dataset: Path
    catalog: Path
    output_dir: Path
    engines: list[EngineSpec] = field(default_factory=list)
    ensemble: bool = False
    ensemble_threshold: Optional[float] = None
    rag: Optional[RagSpec] = None
    classifier_checkpoint: Optional[Path] = None
    parallelism: int = 8
    dataset_role: str = "annotation"

    def __post_init__(self) -> None:
        if self.kind not in ("binary", "multiclass"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if not self.engines:
            raise ConfigError("at least one engine is required")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.ensemble:
            prob_engines = [
                e for e in self.engines if e.config.approach != TEXT
            ]
            if len(prob_engines) < 2 or len(prob_engines) != len(self.engines):
                raise ConfigError(
                    "an ensemble requires at least two prob-mode engines"
                )
            if self.ensemble_threshold is None:
                raise ConfigError("an ensemble requires ensemble_threshold")
        elif len(self.engines) != 1:
            raise ConfigError("multiple engines require ensemble = true")


def _endpoint_from(table: dict, context: str) -> ModelEndpoint:
    try:
        return ModelEndpoint(
            base_url=table["base_url"],
            model=table["model"],
            timeout=float(table.get("timeout", 30.0)),
            max_retries=int(table.get("max_retries", 2)),
            auth_token=table.get("auth_token"),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def load_job_config(path: Union[str, Path]) -> JobConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    job = raw.get("job")
    if not isinstance(job, dict):
        raise ConfigError(f"{path}: missing [job] table")
    base = path.parent

    def _resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    engines = []
    for i, table in enumerate(raw.get("engines", ())):
        approach = table.get("approach", PROB)
        try:
            config = EngineConfig(
                approach=approach,
                threshold=(
                    float(table["threshold"])
                    if approach in (PROB, PROB_AFTER_REASONING)
                    else None
                ),
                malformed_policy=table.get("malformed_policy", "unk"),
                top_alternatives=int(table.get("top_alternatives", 20)),
                max_new_tokens=int(table.get("max_new_tokens", 512)),
                temperature=float(table.get("temperature", 0.0)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[[engines]] #{i}: {exc}") from exc
        engines.append(
            EngineSpec(
                endpoint=_endpoint_from(table, f"[[engines]] #{i}"),
                config=config,
            )
        )

    rag_spec = None
    rag_table = raw.get("rag")
    if rag_table:
        try:
            rag_config = RagConfig(
                retriever=rag_table.get("retriever", "bm25"),
                n_retrieve=int(rag_table.get("n_retrieve", 25)),
                n_final=int(rag_table.get("n_final", 5)),
                use_reranker=bool(rag_table.get("use_reranker", False)),
                min_score=rag_table.get("min_score"),
                query_mode=rag_table.get("query_mode", "client_text"),
            )
            rag_spec = RagSpec(
                corpus=_resolve(rag_table["corpus"]),
                config=rag_config,
                max_chunk_length=int(rag_table.get("max_chunk_length", 500)),
                embed_endpoint=(
                    _endpoint_from(rag_table["embedding"], "[rag.embedding]")
                    if "embedding" in rag_table
                    else None
                ),
                rerank_endpoint=(
                    _endpoint_from(rag_table["reranker"], "[rag.reranker]")
                    if "reranker" in rag_table
                    else None
                ),
            )
        except KeyError as exc:
            raise ConfigError(f"[rag]: missing {exc}") from exc

    try:
        return JobConfig(
            job_id=job.get("id", path.stem),
            kind=job["kind"],
            dataset=_resolve(job["dataset"]),
            catalog=_resolve(job["catalog"]),
            output_dir=_resolve(job["output_dir"]),
            engines=engines,
            ensemble=bool(job.get("ensemble", False)),
            ensemble_threshold=job.get("ensemble_threshold"),
            rag=rag_spec,
            classifier_checkpoint=(
                _resolve(job["classifier_checkpoint"])
                if job.get("classifier_checkpoint")
                else None
            ),
            parallelism=int(job.get("parallelism", 8)),
            dataset_role=job.get("dataset_role", "annotation"),
        )
    except KeyError as exc:
        raise ConfigError(f"[job]: missing {exc}") from exc
