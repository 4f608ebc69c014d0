"""Annotation decision procedures.

Three single-model approaches plus an ensemble:

* text approach: generate freely, parse the final ``[ANSWER]`` block;
* prob approach: force the answer prefix, read the first-token distribution,
  renormalize over the legal option tokens, abstain below the threshold;
* prob after reasoning: generate reasoning with the text prompt, strip the
  final answer, re-ask with a forced answer prefix;
* ensemble: per-option arithmetic mean of members' renormalized
  probabilities, thresholded once.

Abstention is always the reserved ``unk`` label. Engines never produce the
``conf`` label; it belongs to human annotators only.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .catalog import CONF_ID, UNK_ID, BinaryTask, MultiClassTask
from .errors import (
    MalformedAnswer,
    MissingProbs,
    NoLegalToken,
    OptionSetMismatch,
    OutOfRangeOption,
)
from .gateway import (
    GENERATE_TEXT,
    NEXT_TOKEN_DISTRIBUTION,
    CompletionRequest,
    GatewayClient,
    ModelEndpoint,
    TokenDistribution,
)
from .prompting import ANSWER_MARKER, REASONING_MARKER, RenderedPrompt, strip_answer

TEXT = "text"
PROB = "prob"
PROB_AFTER_REASONING = "prob_after_reasoning"
ENSEMBLE = "ensemble"

BINARY_OPTIONS = ("0", "1")
MULTICLASS_OPTIONS = ("1", "2", "3", "4", "5")

Task = Union[BinaryTask, MultiClassTask]
Decision = Union[int, str]

_DIGITS_RE = re.compile(r"^\d+$")


@dataclass
class EngineConfig:
    approach: str = PROB
    threshold: Optional[float] = None
    malformed_policy: str = "error"  # "error" | "unk"
    top_alternatives: int = 20
    max_new_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.approach not in (TEXT, PROB, PROB_AFTER_REASONING):
            raise ValueError(f"unknown approach {self.approach!r}")
        if self.malformed_policy not in ("error", "unk"):
            raise ValueError(f"unknown malformed policy {self.malformed_policy!r}")
        if self.approach == TEXT:
            if self.threshold is not None:
                raise ValueError("text approach takes no threshold")
        else:
            if self.threshold is None or not 0.0 <= self.threshold <= 1.0:
                raise ValueError("prob approaches require a threshold in [0, 1]")


@dataclass(frozen=True)
class AnnotationOutcome:
    task_id: str
    kind: str  # "binary" | "multiclass"
    decision: Decision
    engine: str
    model: str
    raw_token_probs: Optional[dict[str, float]] = None
    answer_probs: Optional[dict[str, float]] = None
    max_prob: Optional[float] = None
    threshold: Optional[float] = None
    transcript: Optional[str] = None
    stage_transcripts: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    latency_seconds: Optional[float] = None
    members: tuple["AnnotationOutcome", ...] = ()

    def __post_init__(self) -> None:
        if self.decision == CONF_ID:
            raise ValueError("engines never emit the conf label")
        if self.answer_probs is not None:
            total = math.fsum(self.answer_probs.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"answer_probs sum to {total}, expected 1")

    @property
    def abstained(self) -> bool:
        return self.decision == UNK_ID

    def to_record(self) -> dict:
        record = {
            "task_id": self.task_id,
            "kind": self.kind,
            "engine": self.engine,
            "model": self.model,
            "decision": self.decision,
        }
        for key in ("max_prob", "threshold", "latency_seconds"):
            value = getattr(self, key)
            if value is not None:
                record[key] = value
        if self.answer_probs is not None:
            record["answer_probs"] = self.answer_probs
        if self.raw_token_probs is not None:
            record["raw_token_probs"] = self.raw_token_probs
        if self.transcript is not None:
            record["transcript"] = self.transcript
        if self.stage_transcripts:
            record["stage_transcripts"] = list(self.stage_transcripts)
        if self.flags:
            record["flags"] = list(self.flags)
        if self.members:
            record["members"] = [m.to_record() for m in self.members]
        return record

    @classmethod
    def from_record(cls, record: dict) -> "AnnotationOutcome":
        return cls(
            task_id=record["task_id"],
            kind=record["kind"],
            decision=record["decision"],
            engine=record["engine"],
            model=record["model"],
            raw_token_probs=record.get("raw_token_probs"),
            answer_probs=record.get("answer_probs"),
            max_prob=record.get("max_prob"),
            threshold=record.get("threshold"),
            transcript=record.get("transcript"),
            stage_transcripts=tuple(record.get("stage_transcripts", ())),
            flags=tuple(record.get("flags", ())),
            latency_seconds=record.get("latency_seconds"),
            members=tuple(
                cls.from_record(m) for m in record.get("members", ())
            ),
        )


def task_kind(task: Task) -> str:
    return "binary" if isinstance(task, BinaryTask) else "multiclass"


def legal_options(kind: str) -> tuple[str, ...]:
    return BINARY_OPTIONS if kind == "binary" else MULTICLASS_OPTIONS


def map_option(option: str, task: Task) -> Decision:
    """Option token to decision label; the unk candidate maps to unk."""
    if isinstance(task, BinaryTask):
        return int(option)
    candidate = task.candidates[int(option) - 1]
    return UNK_ID if candidate == UNK_ID else candidate


# --- text approach -----------------------------------------------------------


def _answer_content(generated: str) -> str:
    position = generated.rfind(ANSWER_MARKER)
    if position < 0:
        raise MalformedAnswer("generated text has no [ANSWER] block")
    remainder = generated[position + len(ANSWER_MARKER) :]
    for line in remainder.splitlines():
        if line.strip():
            return line.strip()
    raise MalformedAnswer("[ANSWER] block is empty")


def parse_answer_binary(generated: str) -> int:
    """Map the final answer block to 1 (yes) or 0 (no)."""
    content = _answer_content(generated).lower()
    if content == "yes":
        return 1
    if content == "no":
        return 0
    raise MalformedAnswer(f"expected yes/no, got {content!r}")


def parse_answer_multiclass(generated: str, task: MultiClassTask) -> str:
    """Map the final answer block's option number to the candidate label."""
    content = _answer_content(generated)
    if not _DIGITS_RE.match(content):
        raise MalformedAnswer(f"expected an option number, got {content!r}")
    number = int(content)
    if not 1 <= number <= 5:
        raise OutOfRangeOption(f"option {number} outside 1..5")
    return map_option(content, task)


def run_text_annotation(
    client: GatewayClient,
    endpoint: ModelEndpoint,
    task: Task,
    prompt: RenderedPrompt,
    config: EngineConfig,
) -> AnnotationOutcome:
    generated = client.complete_text(
        endpoint,
        CompletionRequest(
            prompt=prompt.text,
            mode=GENERATE_TEXT,
            max_new_tokens=config.max_new_tokens,
            temperature=config.temperature,
        ),
    )
    flags: tuple[str, ...] = ()
    try:
        if isinstance(task, BinaryTask):
            decision: Decision = parse_answer_binary(generated)
        else:
            decision = parse_answer_multiclass(generated, task)
    except MalformedAnswer:
        if config.malformed_policy != "unk":
            raise
        decision = UNK_ID
        flags = ("malformed_answer",)
    return AnnotationOutcome(
        task_id=task.utterance.id,
        kind=task_kind(task),
        decision=decision,
        engine=TEXT,
        model=endpoint.model,
        transcript=generated,
        flags=flags,
    )


# --- prob approach -----------------------------------------------------------


def collect_answer_probs(
    distribution: TokenDistribution, kind: str
) -> dict[str, float]:
    """Renormalized probabilities over the legal option tokens.

    Legal tokens are the exact option strings plus single-leading-space
    variants; anything else in the top list is ignored.
    """
    raw = distribution.as_dict()
    mass = {
        option: raw.get(option, 0.0) + raw.get(" " + option, 0.0)
        for option in legal_options(kind)
    }
    total = math.fsum(mass.values())
    if total <= 0.0:
        raise NoLegalToken(
            f"no legal option token among {sorted(raw)[:10]!r}"
        )
    return {option: value / total for option, value in mass.items()}


def decide_from_answer_probs(
    answer_probs: dict[str, float], task: Task, threshold: float
) -> tuple[Decision, float]:
    """Argmax with abstention below threshold; ties go to the lowest option."""
    best_option = None
    best_prob = -1.0
    for option in legal_options(task_kind(task)):
        prob = answer_probs.get(option, 0.0)
        if prob > best_prob:
            best_option = option
            best_prob = prob
    if best_prob < threshold:
        return UNK_ID, best_prob
    return map_option(best_option, task), best_prob


def prob_annotate(
    task: Task,
    distribution: TokenDistribution,
    config: EngineConfig,
    model: str = "",
    engine: str = PROB,
    transcript: Optional[str] = None,
    stage_transcripts: tuple[str, ...] = (),
    flags: tuple[str, ...] = (),
) -> AnnotationOutcome:
    """Threshold rule: take the maximum renormalized option probability;
    below the threshold the classification is rejected (decision unk)."""
    answer_probs = collect_answer_probs(distribution, task_kind(task))
    decision, max_prob = decide_from_answer_probs(
        answer_probs, task, config.threshold
    )
    return AnnotationOutcome(
        task_id=task.utterance.id,
        kind=task_kind(task),
        decision=decision,
        engine=engine,
        model=model,
        raw_token_probs=distribution.as_dict(),
        answer_probs=answer_probs,
        max_prob=max_prob,
        threshold=config.threshold,
        transcript=transcript,
        stage_transcripts=stage_transcripts,
        flags=flags,
    )


def run_prob_annotation(
    client: GatewayClient,
    endpoint: ModelEndpoint,
    task: Task,
    prompt: RenderedPrompt,
    config: EngineConfig,
) -> AnnotationOutcome:
    distribution = client.next_token_distribution(
        endpoint,
        CompletionRequest(
            prompt=prompt.text,
            mode=NEXT_TOKEN_DISTRIBUTION,
            top_alternatives=config.top_alternatives,
            temperature=config.temperature,
        ),
    )
    return prob_annotate(task, distribution, config, model=endpoint.model)


def run_prob_after_reasoning(
    client: GatewayClient,
    endpoint: ModelEndpoint,
    task: Task,
    text_prompt: RenderedPrompt,
    config: EngineConfig,
) -> AnnotationOutcome:
    """Two-stage mode: generate reasoning, strip the answer, force the prefix.

    Stage one runs the text-variant prompt. The final answer is stripped from
    the generation, the answer marker is appended, and stage two reads the
    first-token distribution of the combined context.
    """
    generated = client.complete_text(
        endpoint,
        CompletionRequest(
            prompt=text_prompt.text,
            mode=GENERATE_TEXT,
            max_new_tokens=config.max_new_tokens,
            temperature=config.temperature,
        ),
    )
    stripped, had_answer = strip_answer(generated)
    flags = []
    if not had_answer:
        flags.append("no_answer_marker")
    if REASONING_MARKER not in generated:
        flags.append("no_reasoning_marker")
    stage2_prompt = text_prompt.text + stripped + ANSWER_MARKER
    distribution = client.next_token_distribution(
        endpoint,
        CompletionRequest(
            prompt=stage2_prompt,
            mode=NEXT_TOKEN_DISTRIBUTION,
            top_alternatives=config.top_alternatives,
            temperature=config.temperature,
        ),
    )
    return prob_annotate(
        task,
        distribution,
        config,
        model=endpoint.model,
        engine=PROB_AFTER_REASONING,
        transcript=generated,
        stage_transcripts=(generated, stage2_prompt),
        flags=tuple(flags),
    )


# --- ensembles -----------------------------------------------------------------


def ensemble_annotate(
    task: Task,
    outcomes: Sequence[AnnotationOutcome],
    threshold: float,
) -> AnnotationOutcome:
    """Average members' renormalized probabilities and threshold once.

    Members must share the option set and carry answer probabilities
    (text-approach outcomes are not ensemblable). Averaging k identical
    distributions reproduces the member distribution exactly.
    """
    if len(outcomes) < 2:
        raise ValueError("an ensemble needs at least two members")
    for outcome in outcomes:
        if outcome.answer_probs is None:
            raise MissingProbs(
                f"member {outcome.engine}/{outcome.model} has no answer_probs"
            )
    option_sets = {frozenset(o.answer_probs) for o in outcomes}
    if len(option_sets) != 1:
        raise OptionSetMismatch(
            f"members disagree on options: {sorted(map(sorted, option_sets))}"
        )
    averaged = {}
    for option in sorted(next(iter(option_sets))):
        values = [o.answer_probs[option] for o in outcomes]
        if all(v == values[0] for v in values):
            averaged[option] = values[0]
        else:
            averaged[option] = math.fsum(values) / len(values)
    decision, max_prob = decide_from_answer_probs(averaged, task, threshold)
    return AnnotationOutcome(
        task_id=task.utterance.id,
        kind=task_kind(task),
        decision=decision,
        engine=ENSEMBLE,
        model="+".join(o.model for o in outcomes),
        answer_probs=averaged,
        max_prob=max_prob,
        threshold=threshold,
        members=tuple(outcomes),
    )


def redecide(
    outcome: AnnotationOutcome, task: Task, threshold: float
) -> AnnotationOutcome:
    """Re-apply the threshold rule to a stored outcome without re-querying."""
    if outcome.answer_probs is None or outcome.max_prob is None:
        raise MissingProbs(f"outcome {outcome.task_id} has no probabilities")
    decision, max_prob = decide_from_answer_probs(
        outcome.answer_probs, task, threshold
    )
    return replace(
        outcome, decision=decision, max_prob=max_prob, threshold=threshold
    )
