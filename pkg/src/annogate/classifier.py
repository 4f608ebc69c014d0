"""Bag-of-words softmax classifier.

Serves two roles: top-5 re-ranker producing candidate tuples for multi-class
annotation, and the measured subject of the label-noise experiments. Training
is plain mini-batch gradient descent on the cross-entropy loss; the model is
deliberately small enough to train at desk scale while exercising the loss
and its gradient exactly.

Determinism contract: training is a pure function of (records, config). The
records are canonicalized by utterance id before any seeded shuffling, so
permuting the input order does not change the final parameters.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .catalog import UNK_ID, Dataset, LabeledExample, MultiClassTask
from .errors import EmptyDataset, InvalidLabelIndex

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

#: Vocabulary index reserved for out-of-vocabulary tokens.
OOV_INDEX = 0


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-index mapping; index 0 is the pooled OOV slot."""

    index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.index) + 1

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        tokens = sorted({t for text in texts for t in tokenize(text)})
        return cls(index={tok: i + 1 for i, tok in enumerate(tokens)})


def featurize(text: str, vocabulary: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    """Sparse count vector as (indices, counts), OOV pooled at index 0."""
    counts: dict[int, float] = {}
    for token in tokenize(text):
        idx = vocabulary.index.get(token, OOV_INDEX)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return indices, values


def _csr_batch(
    features: Sequence[tuple[np.ndarray, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    indptr = np.zeros(len(features) + 1, dtype=np.int64)
    for i, (idx, _) in enumerate(features):
        indptr[i + 1] = indptr[i] + len(idx)
    if len(features):
        indices = np.concatenate([idx for idx, _ in features]).astype(np.int64)
        counts = np.concatenate([cnt for _, cnt in features]).astype(np.float64)
    else:
        indices = np.empty(0, dtype=np.int64)
        counts = np.empty(0, dtype=np.float64)
    return indptr, indices, counts


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0
    include_unk: bool = True
    kernel_backend: Optional[str] = None


@dataclass(frozen=True)
class TopKPrediction:
    """Top-K classes with softmax probabilities, non-increasing."""

    entries: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(intent_id for intent_id, _ in self.entries)


@dataclass
class ClassifierModel:
    classes: tuple[str, ...]
    vocabulary: Vocabulary
    weights: np.ndarray  # (C_total, V)
    bias: np.ndarray  # (C_total,)
    seed: int
    config: TrainConfig
    loss_history: tuple[float, ...] = ()
    class_index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.class_index = {c: i for i, c in enumerate(self.classes)}

    def save(self, path: Union[str, Path]) -> None:
        meta = {
            "classes": list(self.classes),
            "vocabulary": self.vocabulary.index,
            "seed": self.seed,
            "config": {
                "epochs": self.config.epochs,
                "learning_rate": self.config.learning_rate,
                "batch_size": self.config.batch_size,
                "seed": self.config.seed,
                "include_unk": self.config.include_unk,
            },
            "loss_history": list(self.loss_history),
        }
        buf = io.BytesIO()
        np.savez(
            buf,
            weights=self.weights,
            bias=self.bias,
            meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        )
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ClassifierModel":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            weights = data["weights"]
            bias = data["bias"]
        return cls(
            classes=tuple(meta["classes"]),
            vocabulary=Vocabulary(index=meta["vocabulary"]),
            weights=weights,
            bias=bias,
            seed=meta["seed"],
            config=TrainConfig(**meta["config"]),
            loss_history=tuple(meta["loss_history"]),
        )


def _training_pairs(
    dataset: Union[Dataset, Sequence[tuple[str, str]]],
) -> list[tuple[str, str, str]]:
    """Normalize to (utterance id, text, label) triples."""
    if isinstance(dataset, Dataset):
        triples = []
        for record in dataset.records:
            if isinstance(record, LabeledExample):
                triples.append((record.utterance.id, record.utterance.text, record.label))
            elif isinstance(record, MultiClassTask) and record.reference_label:
                triples.append(
                    (record.utterance.id, record.utterance.text, record.reference_label)
                )
        return triples
    return [(str(i), text, label) for i, (text, label) in enumerate(dataset)]


def loss_and_grad(
    model: ClassifierModel,
    features: Sequence[tuple[np.ndarray, np.ndarray]],
    labels: Sequence[int],
    backend=None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch and its exact analytic gradient."""
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.size and (
        labels_arr.min() < 0 or labels_arr.max() >= len(model.classes)
    ):
        raise InvalidLabelIndex(
            f"label index outside [0, {len(model.classes)})"
        )
    backend = backend or kernels.get_backend(model.config.kernel_backend)
    indptr, indices, counts = _csr_batch(features)
    loss, grad_w, grad_b = backend.ce_loss_grad(
        model.weights, model.bias, indptr, indices, counts, labels_arr
    )
    return loss, grad_w, grad_b


def train(
    dataset: Union[Dataset, Sequence[tuple[str, str]]],
    config: TrainConfig,
    classes: Optional[Sequence[str]] = None,
) -> ClassifierModel:
    """Train a model with mini-batch gradient descent, deterministic per seed."""
    triples = _training_pairs(dataset)
    if not triples:
        raise EmptyDataset("training requires at least one labeled record")
    triples.sort(key=lambda t: t[0])

    if classes is None:
        labels = {label for _, _, label in triples}
        if config.include_unk:
            labels.add(UNK_ID)
        classes = sorted(labels)
    classes = tuple(classes)
    class_index = {c: i for i, c in enumerate(classes)}
    for _, _, label in triples:
        if label not in class_index:
            raise InvalidLabelIndex(f"label {label!r} not in class list")

    vocabulary = Vocabulary.build(text for _, text, _ in triples)
    features = [featurize(text, vocabulary) for _, text, _ in triples]
    label_idx = np.array([class_index[label] for _, _, label in triples], dtype=np.int64)

    backend = kernels.get_backend(config.kernel_backend)
    n = len(triples)
    weights = np.zeros((len(classes), vocabulary.size), dtype=np.float64)
    bias = np.zeros(len(classes), dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            indptr, indices, counts = _csr_batch([features[i] for i in batch])
            loss, grad_w, grad_b = backend.ce_loss_grad(
                weights, bias, indptr, indices, counts, label_idx[batch]
            )
            weights -= config.learning_rate * grad_w
            bias -= config.learning_rate * grad_b
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
        if not np.all(np.isfinite(weights)) or not np.all(np.isfinite(bias)):
            raise FloatingPointError("training diverged to non-finite parameters")

    return ClassifierModel(
        classes=classes,
        vocabulary=vocabulary,
        weights=weights,
        bias=bias,
        seed=config.seed,
        config=config,
        loss_history=tuple(history),
    )


def predict_proba(model: ClassifierModel, texts: Sequence[str]) -> np.ndarray:
    """Softmax distribution over all classes for each text, shape (N, C_total)."""
    backend = kernels.get_backend(model.config.kernel_backend)
    features = [featurize(text, model.vocabulary) for text in texts]
    indptr, indices, counts = _csr_batch(features)
    logits = np.asarray(
        backend.sparse_logits(model.weights, model.bias, indptr, indices, counts)
    )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def predict_topk(model: ClassifierModel, text: str, k: int) -> TopKPrediction:
    """Top-K classes by probability; exact ties broken by ascending id."""
    if not 1 <= k <= len(model.classes):
        raise ValueError(f"k must be in [1, {len(model.classes)}]")
    probs = predict_proba(model, [text])[0]
    ranked = sorted(zip(model.classes, probs), key=lambda e: (-e[1], e[0]))
    return TopKPrediction(
        entries=tuple((intent_id, float(p)) for intent_id, p in ranked[:k])
    )


def predict_labels(model: ClassifierModel, texts: Sequence[str]) -> list[str]:
    """Argmax class per text, ties broken by ascending id."""
    probs = predict_proba(model, texts)
    out = []
    for row in probs:
        top = row.max()
        out.append(min(cls for cls, p in zip(model.classes, row) if p == top))
    return out
