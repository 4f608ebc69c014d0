"""Evaluation formulas: coverage, agreement accuracy, and report tables.

Coverage is the fraction of non-abstained hypotheses. Accuracy is agreement
with the reference over the judged rows: rows abstained by the hypothesis
are excluded unless the reference abstained too (an abstention against an
abstaining reference is a correct judgment, one against a committed
reference is coverage's business, not an error). With the default policies
this makes ``accuracy * coverage`` equal the directly counted fraction of
rows that are both non-abstained and correct.

The ``conf`` (multiple-intentions) label appears only in human annotations;
the policy variants pin how it enters each formula.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .catalog import CONF_ID, UNK_ID
from .errors import DegenerateClass, EmptyAfterFilter, EmptyInput

Label = Union[int, str]


class ConfPolicy(enum.Enum):
    CONF_AS_UNK = "conf_as_unk"
    CONF_AS_COVERED = "conf_as_covered"
    DROP_CONF_ROWS = "drop_conf_rows"
    CONF_AS_WRONG = "conf_as_wrong"


@dataclass(frozen=True)
class LabeledPair:
    task_id: str
    hypothesis: Label
    reference: Label


def coverage(
    labels: Sequence[Label], policy: ConfPolicy = ConfPolicy.CONF_AS_UNK
) -> float:
    """Fraction of labels that are not abstentions."""
    if not labels:
        raise EmptyInput("coverage of an empty batch")
    if policy not in (ConfPolicy.CONF_AS_UNK, ConfPolicy.CONF_AS_COVERED):
        raise ValueError(f"coverage takes a conf-coverage policy, got {policy}")
    abstained = {UNK_ID}
    if policy is ConfPolicy.CONF_AS_UNK:
        abstained.add(CONF_ID)
    covered = sum(1 for label in labels if label not in abstained)
    return covered / len(labels)


def _judged_rows(
    pairs: Sequence[LabeledPair], policy: ConfPolicy
) -> list[tuple[LabeledPair, bool]]:
    """(pair, is_correct) over the rows accuracy judges."""
    rows = []
    for pair in pairs:
        if pair.hypothesis == CONF_ID:
            if policy is ConfPolicy.DROP_CONF_ROWS:
                continue
            rows.append((pair, False))
            continue
        if pair.hypothesis == UNK_ID and pair.reference != UNK_ID:
            continue
        rows.append((pair, pair.hypothesis == pair.reference))
    return rows


def accuracy(
    pairs: Sequence[LabeledPair], policy: ConfPolicy = ConfPolicy.DROP_CONF_ROWS
) -> float:
    """Agreement with the reference over the judged rows."""
    if not pairs:
        raise EmptyInput("accuracy of an empty batch")
    if policy not in (ConfPolicy.DROP_CONF_ROWS, ConfPolicy.CONF_AS_WRONG):
        raise ValueError(f"accuracy takes a conf-accuracy policy, got {policy}")
    rows = _judged_rows(pairs, policy)
    if not rows:
        raise EmptyAfterFilter("no judged rows remain")
    return sum(1 for _, correct in rows if correct) / len(rows)


def accuracy_total(acc: float, cov: float) -> float:
    """Fraction of rows that are both non-abstained and correct."""
    return acc * cov


# --- binary report --------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class BinaryReport:
    precision_pos: Optional[float]
    precision_neg: Optional[float]
    recall_pos: Optional[float]
    recall_neg: Optional[float]
    accuracy: Optional[float]
    macro_f1: Optional[float]
    coverage: float
    total: int
    covered: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "precision_pos": self.precision_pos,
            "precision_neg": self.precision_neg,
            "recall_pos": self.recall_pos,
            "recall_neg": self.recall_neg,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "coverage": self.coverage,
            "total": self.total,
            "covered": self.covered,
            "notes": list(self.notes),
        }


def _class_metrics(
    rows: Sequence[tuple[Label, Label]], positive: Label
) -> ClassMetrics:
    tp = sum(1 for h, r in rows if h == positive and r == positive)
    fp = sum(1 for h, r in rows if h == positive and r != positive)
    fn = sum(1 for h, r in rows if h != positive and r == positive)
    support = tp + fn
    if support == 0:
        raise DegenerateClass(f"class {positive!r} absent from covered references")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / support
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(precision=precision, recall=recall, f1=f1, support=support)


def binary_report(pairs: Sequence[LabeledPair]) -> BinaryReport:
    """Per-class precision/recall, accuracy, and macro F1 over covered rows.

    A class absent from the covered references makes its per-class metrics
    undefined; they are reported as absent (None), never as zero.
    """
    if not pairs:
        raise EmptyInput("binary report of an empty batch")
    bad_refs = {p.reference for p in pairs} - {0, 1}
    if bad_refs:
        raise ValueError(f"binary references must be 0/1, got {sorted(map(str, bad_refs))}")
    covered_rows = [
        (p.hypothesis, p.reference) for p in pairs if p.hypothesis != UNK_ID
    ]
    cov = len(covered_rows) / len(pairs)
    if not covered_rows:
        return BinaryReport(
            precision_pos=None,
            precision_neg=None,
            recall_pos=None,
            recall_neg=None,
            accuracy=None,
            macro_f1=None,
            coverage=cov,
            total=len(pairs),
            covered=0,
            notes=("empty_after_filter",),
        )
    acc = sum(1 for h, r in covered_rows if h == r) / len(covered_rows)
    notes = []
    per_class: dict[Label, Optional[ClassMetrics]] = {}
    for cls in (1, 0):
        try:
            per_class[cls] = _class_metrics(covered_rows, cls)
        except DegenerateClass:
            per_class[cls] = None
            notes.append(f"degenerate_class_{cls}")
    pos, neg = per_class[1], per_class[0]
    macro_f1 = (pos.f1 + neg.f1) / 2 if pos and neg else None
    return BinaryReport(
        precision_pos=pos.precision if pos else None,
        precision_neg=neg.precision if neg else None,
        recall_pos=pos.recall if pos else None,
        recall_neg=neg.recall if neg else None,
        accuracy=acc,
        macro_f1=macro_f1,
        coverage=cov,
        total=len(pairs),
        covered=len(covered_rows),
        notes=tuple(notes),
    )


# --- multiclass report ------------------------------------------------------------


@dataclass(frozen=True)
class MulticlassReport:
    coverage_conf_unk: float
    coverage_conf_covered: float
    accuracy_drop_conf: Optional[float]
    accuracy_conf_wrong: Optional[float]
    accuracy_total: float
    total: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "coverage_conf_unk": self.coverage_conf_unk,
            "coverage_conf_covered": self.coverage_conf_covered,
            "accuracy_drop_conf": self.accuracy_drop_conf,
            "accuracy_conf_wrong": self.accuracy_conf_wrong,
            "accuracy_total": self.accuracy_total,
            "total": self.total,
            "notes": list(self.notes),
            "accuracy_total_policies": ["conf_as_unk", "drop_conf_rows"],
        }


def multiclass_report(pairs: Sequence[LabeledPair]) -> MulticlassReport:
    """One table row: both coverage policies, both accuracy policies, and
    their combined total (conf-as-unk coverage times drop-conf accuracy)."""
    if not pairs:
        raise EmptyInput("multiclass report of an empty batch")
    hypotheses = [p.hypothesis for p in pairs]
    cov_unk = coverage(hypotheses, ConfPolicy.CONF_AS_UNK)
    cov_covered = coverage(hypotheses, ConfPolicy.CONF_AS_COVERED)
    notes = []
    try:
        acc_drop: Optional[float] = accuracy(pairs, ConfPolicy.DROP_CONF_ROWS)
    except EmptyAfterFilter:
        acc_drop = None
        notes.append("empty_after_filter_drop_conf")
    try:
        acc_wrong: Optional[float] = accuracy(pairs, ConfPolicy.CONF_AS_WRONG)
    except EmptyAfterFilter:
        acc_wrong = None
        notes.append("empty_after_filter_conf_wrong")
    total = accuracy_total(acc_drop, cov_unk) if acc_drop is not None else 0.0
    return MulticlassReport(
        coverage_conf_unk=cov_unk,
        coverage_conf_covered=cov_covered,
        accuracy_drop_conf=acc_drop,
        accuracy_conf_wrong=acc_wrong,
        accuracy_total=total,
        total=len(pairs),
        notes=tuple(notes),
    )


# --- table formatting --------------------------------------------------------------


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


_BINARY_COLUMNS = (
    ("Prec. 1", "precision_pos"),
    ("Prec. 0", "precision_neg"),
    ("Rec. 1", "recall_pos"),
    ("Rec. 0", "recall_neg"),
    ("Acc.", "accuracy"),
    ("F1 (macro)", "macro_f1"),
)

_MULTICLASS_COLUMNS = (
    ("Cov. (conf=unk)", "coverage_conf_unk"),
    ("Cov. (conf!=unk)", "coverage_conf_covered"),
    ("Acc. (w/o conf)", "accuracy_drop_conf"),
    ("Acc. (conf=wrong)", "accuracy_conf_wrong"),
    ("Acc. total", "accuracy_total"),
)


def _format_rows(
    columns, rows: Sequence[tuple[str, dict]], extra: Optional[dict] = None
) -> str:
    headers = ["Row"] + [title for title, _ in columns]
    if extra:
        headers += list(extra)
    table = [headers]
    for name, data in rows:
        line = [name] + [_fmt(data.get(key)) for _, key in columns]
        if extra:
            line += [extra[k](data) for k in extra]
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in table
    )


def format_binary_table(rows: Sequence[tuple[str, BinaryReport]]) -> str:
    """Aligned text table; coverage shown as a percentage column."""
    return _format_rows(
        _BINARY_COLUMNS,
        [(name, report.to_dict()) for name, report in rows],
        extra={"Coverage": lambda d: f"{100 * d['coverage']:.0f}%"},
    )


def format_multiclass_table(rows: Sequence[tuple[str, MulticlassReport]]) -> str:
    return _format_rows(
        _MULTICLASS_COLUMNS, [(name, report.to_dict()) for name, report in rows]
    )


def pairs_from_outcomes(outcomes, references: dict[str, Label]) -> list[LabeledPair]:
    """Join engine outcomes with reference labels by task id."""
    pairs = []
    for outcome in outcomes:
        if outcome.task_id in references:
            pairs.append(
                LabeledPair(
                    task_id=outcome.task_id,
                    hypothesis=outcome.decision,
                    reference=references[outcome.task_id],
                )
            )
    return pairs
