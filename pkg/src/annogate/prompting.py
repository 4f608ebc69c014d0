"""Prompt templates for the four annotation modes.

Two task kinds (binary validation, five-way choice) times two answer modes
(free reasoning parsed from text, forced single-token answer). All four share
the block markers ``[USER]``, ``[REASONING]``, ``[ANSWER]`` and
``[RETRIEVED]``. The single-token variants end with the ``[ANSWER]`` marker
so that generation starts directly at the answer token.

Rendering is deterministic; golden snapshot files pin the exact wording.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Union

from .catalog import BinaryTask, Intent, MultiClassTask, SpecialLabel
from .errors import ArityError, TemplateMismatch
from .rag import DocumentChunk

BINARY_TEXT = "binary_text"
BINARY_PROB = "binary_prob"
MULTICLASS_TEXT = "multiclass_text"
MULTICLASS_PROB = "multiclass_prob"

ANSWER_MARKER = "[ANSWER]"
REASONING_MARKER = "[REASONING]"
USER_MARKER = "[USER]"
RETRIEVED_MARKER = "[RETRIEVED]"

#: Few-shot budget per intent, truncation by list order.
MAX_EXAMPLES = 3

_BINARY_TEXT_INSTRUCTIONS = """\
You are a careful data-annotation assistant for a customer-support chat.
You receive a message a client wrote to support, together with one candidate
class, the class description written by a specialist, and curated example
texts. Decide whether the message belongs to the candidate class.

Follow these rules:
1. Compare the message against the class description and the examples. The
   examples include texts that fit the class and texts that deliberately do
   not; check both sides before deciding.
2. If the class is about one product or situation and the message is about a
   different one, the message does not belong to the class.
3. Judge only from what the client actually wrote. Do not guess hidden
   intentions and do not invent context that is not in the message.
4. A [RETRIEVED] section, when present, contains reference material from the
   internal knowledge base that may clarify terminology or procedures.
5. The client message is given in the [USER] section.
6. Think step by step inside a [REASONING] section: resolve ambiguous words,
   weigh the suitable and unsuitable examples, and state what the client asks
   for.
7. End with an [ANSWER] section containing a single line: "yes" if the
   message belongs to the class, "no" if it does not.
"""

_BINARY_PROB_INSTRUCTIONS = """\
You are a careful data-annotation assistant for a customer-support chat.
You receive a message a client wrote to support, together with one candidate
class, the class description written by a specialist, and curated example
texts. Decide whether the message belongs to the candidate class.

Follow these rules:
1. Compare the message against the class description and the examples. The
   examples include texts that fit the class and texts that deliberately do
   not; check both sides before deciding.
2. If the class is about one product or situation and the message is about a
   different one, the message does not belong to the class.
3. Judge only from what the client actually wrote.
4. A [RETRIEVED] section, when present, contains reference material from the
   internal knowledge base.
5. The client message is given in the [USER] section.
6. Do not explain your decision. After the [ANSWER] marker write exactly one
   character: "1" if the message belongs to the class, "0" if it does not.
"""

_MULTICLASS_TEXT_INSTRUCTIONS = """\
You are a careful data-annotation assistant for a customer-support chat.
You receive a message a client wrote to support and a numbered list of five
candidate classes, each with a description written by a specialist and
curated example texts. Select the single class the message belongs to.

Follow these rules:
1. Read every option before deciding; compare the message against each
   description and its examples.
2. Judge only from what the client actually wrote. Do not guess hidden
   intentions and do not invent context that is not in the message.
3. One option may be the refusal label "unk". Choose it, by its list number,
   only when no listed class fits the message or the message contains no
   classifiable request. This should be rare; prefer a concrete class when
   one matches.
4. A [RETRIEVED] section, when present, contains reference material from the
   internal knowledge base that may clarify terminology or procedures.
5. The client message is given in the [USER] section.
6. Think step by step inside a [REASONING] section: consider all five
   options and say why the rejected ones do not fit.
7. End with an [ANSWER] section containing ONLY the number of the selected
   option (a single digit from 1 to 5).
"""

_MULTICLASS_PROB_INSTRUCTIONS = """\
You are a careful data-annotation assistant for a customer-support chat.
You receive a message a client wrote to support and a numbered list of five
candidate classes, each with a description written by a specialist and
curated example texts. Select the single class the message belongs to.

Follow these rules:
1. Read every option before deciding; compare the message against each
   description and its examples.
2. Judge only from what the client actually wrote.
3. One option may be the refusal label "unk". Choose it, by its list number,
   only when no listed class fits the message or the message contains no
   classifiable request.
4. A [RETRIEVED] section, when present, contains reference material from the
   internal knowledge base.
5. The client message is given in the [USER] section.
6. Do not explain your decision. After the [ANSWER] marker write exactly one
   digit from 1 to 5: the number of the selected option.
"""

_INSTRUCTIONS = {
    BINARY_TEXT: _BINARY_TEXT_INSTRUCTIONS,
    BINARY_PROB: _BINARY_PROB_INSTRUCTIONS,
    MULTICLASS_TEXT: _MULTICLASS_TEXT_INSTRUCTIONS,
    MULTICLASS_PROB: _MULTICLASS_PROB_INSTRUCTIONS,
}

BINARY_TEMPLATES = (BINARY_TEXT, BINARY_PROB)
MULTICLASS_TEMPLATES = (MULTICLASS_TEXT, MULTICLASS_PROB)
PROB_TEMPLATES = (BINARY_PROB, MULTICLASS_PROB)


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    task_id: str
    template_id: str
    doc_ids: tuple[str, ...] = ()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _example_lines(label: str, examples: Sequence[str]) -> list[str]:
    if not examples:
        return []
    lines = [f"{label}:"]
    lines.extend(f"- {example}" for example in examples[:MAX_EXAMPLES])
    return lines


def _retrieved_lines(docs: Sequence[DocumentChunk]) -> list[str]:
    if not docs:
        return []
    lines = ["", RETRIEVED_MARKER]
    lines.extend(f"({doc.id}) {doc.text.strip()}" for doc in docs)
    return lines


def render_binary(
    template_id: str,
    task: BinaryTask,
    intent: Intent,
    docs: Sequence[DocumentChunk] = (),
) -> RenderedPrompt:
    """Render a candidate-validation prompt for one task."""
    if template_id not in BINARY_TEMPLATES:
        raise TemplateMismatch(f"{template_id!r} is not a binary template")
    if intent.id != task.candidate:
        raise TemplateMismatch(
            f"intent {intent.id!r} does not match task candidate {task.candidate!r}"
        )
    lines = [_INSTRUCTIONS[template_id]]
    lines.append(USER_MARKER)
    lines.append(task.utterance.text)
    lines.append("")
    lines.append(f"Candidate class: {intent.name} (id: {intent.id})")
    lines.append(f"Description: {intent.description}")
    lines.extend(_example_lines("Examples that fit the class", intent.positive_examples))
    lines.extend(
        _example_lines("Examples that do not fit the class", intent.negative_examples)
    )
    lines.extend(_retrieved_lines(docs))
    if template_id in PROB_TEMPLATES:
        lines.append("")
        lines.append(ANSWER_MARKER)
    return RenderedPrompt(
        text="\n".join(lines),
        task_id=task.utterance.id,
        template_id=template_id,
        doc_ids=tuple(doc.id for doc in docs),
    )


def _option_lines(
    number: int, resolved: Union[Intent, SpecialLabel]
) -> list[str]:
    if isinstance(resolved, SpecialLabel):
        if resolved.kind != "unk":
            raise TemplateMismatch(
                "only the refusal label may appear among candidates"
            )
        return [
            f"{number}. unk (id: {resolved.id})",
            "   Refusal to classify: pick this number if no listed class fits.",
        ]
    lines = [
        f"{number}. {resolved.name} (id: {resolved.id})",
        f"   Description: {resolved.description}",
    ]
    for prefix, bank in (
        ("   Examples that fit", resolved.positive_examples),
        ("   Examples that do not fit", resolved.negative_examples),
    ):
        if bank:
            lines.append(f"{prefix}:")
            lines.extend(f"   - {example}" for example in bank[:MAX_EXAMPLES])
    return lines


def render_multiclass(
    template_id: str,
    task: MultiClassTask,
    resolved: Sequence[Union[Intent, SpecialLabel]],
    docs: Sequence[DocumentChunk] = (),
) -> RenderedPrompt:
    """Render a five-option choice prompt for one task."""
    if template_id not in MULTICLASS_TEMPLATES:
        raise TemplateMismatch(f"{template_id!r} is not a multiclass template")
    if len(resolved) != 5:
        raise ArityError(f"expected 5 resolved candidates, got {len(resolved)}")
    for candidate_id, entry in zip(task.candidates, resolved):
        entry_id = entry.id
        if entry_id != candidate_id:
            raise ArityError(
                f"resolved order mismatch: {entry_id!r} vs {candidate_id!r}"
            )
    lines = [_INSTRUCTIONS[template_id]]
    lines.append(USER_MARKER)
    lines.append(task.utterance.text)
    lines.append("")
    lines.append("Options:")
    for number, entry in enumerate(resolved, start=1):
        lines.extend(_option_lines(number, entry))
    lines.extend(_retrieved_lines(docs))
    if template_id in PROB_TEMPLATES:
        lines.append("")
        lines.append(ANSWER_MARKER)
    return RenderedPrompt(
        text="\n".join(lines),
        task_id=task.utterance.id,
        template_id=template_id,
        doc_ids=tuple(doc.id for doc in docs),
    )


def strip_answer(generated: str) -> tuple[str, bool]:
    """Drop everything from the final ``[ANSWER]`` marker onward.

    Returns ``(text, marker_found)``; without a marker the text comes back
    unchanged with the flag unset.
    """
    position = generated.rfind(ANSWER_MARKER)
    if position < 0:
        return generated, False
    return generated[:position], True
