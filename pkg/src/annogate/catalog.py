"""Intent taxonomy, annotation tasks, and dataset loading.

Catalogs and datasets are immutable after load and safe to share across
threads. Dataset digests are computed over a canonical serialization
(sorted keys, ``\\n`` line endings, UTF-8) so byte-identical content always
hashes identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import (
    DuplicateIntentId,
    MissingDescription,
    ParseError,
    SchemaError,
    TupleArityError,
    UnknownIntentId,
)

#: Reserved label ids, excluded from the ordinary intent namespace so a real
#: intent named "unknown" can never collide with the refusal label.
UNK_ID = "__unk__"
CONF_ID = "__conf__"
SPECIAL_IDS = (UNK_ID, CONF_ID)


@dataclass(frozen=True)
class Intent:
    """One class of the taxonomy with its description and example banks."""

    id: str
    name: str
    description: str
    positive_examples: tuple[str, ...] = ()
    negative_examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpecialLabel:
    """One of the two reserved labels: refusal (unk) or multi-intent (conf)."""

    kind: str  # "unk" | "conf"

    @property
    def id(self) -> str:
        return UNK_ID if self.kind == "unk" else CONF_ID


UNK = SpecialLabel("unk")
CONF = SpecialLabel("conf")


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    language: str = "und"

    def __post_init__(self) -> None:
        if not self.text:
            raise SchemaError(f"utterance {self.id!r} has empty text")


@dataclass(frozen=True)
class BinaryTask:
    """Validate one candidate intent against a text: label 1 fits, 0 does not."""

    utterance: Utterance
    candidate: str
    reference_label: Optional[int] = None

    def __post_init__(self) -> None:
        if self.reference_label not in (None, 0, 1):
            raise SchemaError(
                f"binary label must be 0 or 1, got {self.reference_label!r}"
            )


@dataclass(frozen=True)
class MultiClassTask:
    """Choose one of five candidate intents (candidates may include unk)."""

    utterance: Utterance
    candidates: tuple[str, ...]
    reference_label: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.candidates) != 5:
            raise TupleArityError(
                f"record {self.utterance.id!r}: expected 5 candidates, "
                f"got {len(self.candidates)}"
            )
        if len(set(self.candidates)) != 5:
            raise SchemaError(
                f"record {self.utterance.id!r}: candidates must be distinct"
            )


@dataclass(frozen=True)
class LabeledExample:
    """A plain (text, intent) pair; the classifier's training record."""

    utterance: Utterance
    label: str


Record = Union[BinaryTask, MultiClassTask, LabeledExample]

_KIND_NAMES = {"binary", "multiclass", "classification"}


class IntentCatalog:
    """Validated intent taxonomy plus the two special labels."""

    def __init__(self, intents: Iterable[Intent]):
        self._intents: dict[str, Intent] = {}
        for intent in intents:
            if intent.id in SPECIAL_IDS:
                raise DuplicateIntentId(f"{intent.id!r} is a reserved label id")
            if intent.id in self._intents:
                raise DuplicateIntentId(intent.id)
            if not intent.description.strip():
                raise MissingDescription(intent.id)
            self._intents[intent.id] = intent

    def __len__(self) -> int:
        # Includes the two special labels.
        return len(self._intents) + 2

    def __contains__(self, intent_id: str) -> bool:
        return intent_id in SPECIAL_IDS or intent_id in self._intents

    @property
    def intents(self) -> tuple[Intent, ...]:
        return tuple(self._intents.values())

    def ids(self) -> tuple[str, ...]:
        return tuple(self._intents) + SPECIAL_IDS

    def resolve(self, intent_id: str) -> Union[Intent, SpecialLabel]:
        if intent_id == UNK_ID:
            return UNK
        if intent_id == CONF_ID:
            return CONF
        try:
            return self._intents[intent_id]
        except KeyError:
            raise UnknownIntentId(intent_id) from None


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace variance, UTF-8 text."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _record_payload(record: Record) -> dict:
    if isinstance(record, BinaryTask):
        payload = {
            "id": record.utterance.id,
            "text": record.utterance.text,
            "candidate": record.candidate,
        }
        if record.reference_label is not None:
            payload["label"] = record.reference_label
        return payload
    if isinstance(record, MultiClassTask):
        payload = {
            "id": record.utterance.id,
            "text": record.utterance.text,
            "candidates": list(record.candidates),
        }
        if record.reference_label is not None:
            payload["label"] = record.reference_label
        return payload
    return {
        "id": record.utterance.id,
        "text": record.utterance.text,
        "label": record.label,
    }


@dataclass(frozen=True)
class Dataset:
    """Homogeneous list of records with a content digest."""

    kind: str
    records: tuple[Record, ...]
    provenance: str = ""
    digest: str = field(init=False, default="")

    def __post_init__(self) -> None:
        if self.kind not in _KIND_NAMES:
            raise SchemaError(f"unknown dataset kind {self.kind!r}")
        lines = "\n".join(canonical_json(_record_payload(r)) for r in self.records)
        object.__setattr__(
            self, "digest", hashlib.sha256(lines.encode("utf-8")).hexdigest()
        )

    def __len__(self) -> int:
        return len(self.records)

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for record in self.records:
                fh.write(canonical_json(_record_payload(record)) + "\n")


def load_catalog(path: Union[str, Path]) -> IntentCatalog:
    """Load and validate a catalog file: one JSON document {"intents": [...]}."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(payload, dict) or "intents" not in payload:
        raise ParseError(f"{path}: expected a top-level 'intents' list")
    intents = []
    for entry in payload["intents"]:
        try:
            intents.append(
                Intent(
                    id=entry["id"],
                    name=entry.get("name", entry["id"]),
                    description=entry.get("description", ""),
                    positive_examples=tuple(entry.get("positive_examples", ())),
                    negative_examples=tuple(entry.get("negative_examples", ())),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: malformed intent entry: {entry!r}") from exc
    return IntentCatalog(intents)


def _classify_line(entry: dict) -> str:
    if "candidates" in entry:
        return "multiclass"
    if "candidate" in entry:
        return "binary"
    if "label" in entry:
        return "classification"
    raise SchemaError(f"record {entry.get('id')!r}: cannot infer record kind")


def _check_intent_ref(catalog: IntentCatalog, intent_id: str) -> str:
    if not isinstance(intent_id, str):
        raise SchemaError(f"intent id must be a string, got {intent_id!r}")
    if intent_id not in catalog:
        raise UnknownIntentId(intent_id)
    return intent_id


def load_dataset(
    path: Union[str, Path], catalog: IntentCatalog, provenance: str = ""
) -> Dataset:
    """Load a JSON Lines dataset, resolving every intent reference."""
    records: list[Record] = []
    kind: Optional[str] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            line_kind = _classify_line(entry)
            if kind is None:
                kind = line_kind
            elif line_kind != kind:
                raise SchemaError(
                    f"{path}:{lineno}: mixed record kinds ({kind} vs {line_kind})"
                )
            try:
                utterance = Utterance(id=str(entry["id"]), text=entry["text"])
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
            if line_kind == "binary":
                records.append(
                    BinaryTask(
                        utterance=utterance,
                        candidate=_check_intent_ref(catalog, entry["candidate"]),
                        reference_label=entry.get("label"),
                    )
                )
            elif line_kind == "multiclass":
                candidates = entry["candidates"]
                if not isinstance(candidates, list) or len(candidates) != 5:
                    raise TupleArityError(
                        f"{path}:{lineno}: expected 5 candidates, "
                        f"got {len(candidates) if isinstance(candidates, list) else candidates!r}"
                    )
                label = entry.get("label")
                if label is not None:
                    _check_intent_ref(catalog, label)
                records.append(
                    MultiClassTask(
                        utterance=utterance,
                        candidates=tuple(
                            _check_intent_ref(catalog, c) for c in candidates
                        ),
                        reference_label=label,
                    )
                )
            else:
                records.append(
                    LabeledExample(
                        utterance=utterance,
                        label=_check_intent_ref(catalog, entry["label"]),
                    )
                )
    if kind is None:
        raise SchemaError(f"{path}: dataset has no records")
    return Dataset(kind=kind, records=tuple(records), provenance=provenance)


def resolve_intent(
    catalog: IntentCatalog, intent_id: str
) -> Union[Intent, SpecialLabel]:
    """Look up an intent or special label by id."""
    return catalog.resolve(intent_id)
