import math

import numpy as np
import pytest

from annogate.catalog import UNK_ID, Dataset, LabeledExample, Utterance
from annogate.classifier import (
    ClassifierModel,
    TrainConfig,
    Vocabulary,
    featurize,
    loss_and_grad,
    predict_proba,
    predict_topk,
    tokenize,
    train,
)
from annogate.errors import EmptyDataset, InvalidLabelIndex


def make_model(classes, vocab_tokens, weights=None, bias=None, seed=0):
    vocabulary = Vocabulary.build(vocab_tokens)
    n_classes, n_features = len(classes), vocabulary.size
    return ClassifierModel(
        classes=tuple(classes),
        vocabulary=vocabulary,
        weights=(
            weights if weights is not None else np.zeros((n_classes, n_features))
        ),
        bias=bias if bias is not None else np.zeros(n_classes),
        seed=seed,
        config=TrainConfig(seed=seed),
    )


def labeled(idx, text, label):
    return LabeledExample(Utterance(id=f"r{idx:04d}", text=text), label=label)


def separable_dataset(n_per_class=100):
    records = []
    for i in range(n_per_class):
        records.append(labeled(2 * i, f"alpha utterance number {i}", "class_a"))
        records.append(labeled(2 * i + 1, f"beta message index {i}", "class_b"))
    return Dataset(kind="classification", records=tuple(records))


def test_tokenize_splits_non_alphanumeric():
    assert tokenize("Hello, world_2! price=10") == ["hello", "world", "2", "price", "10"]


def test_featurize_empty_text():
    vocab = Vocabulary.build(["price list"])
    indices, counts = featurize("", vocab)
    assert len(indices) == 0 and len(counts) == 0


def test_featurize_counts_and_oov():
    vocab = Vocabulary.build(["apple banana price"])
    idx = vocab.index["price"]
    indices, counts = featurize("price price", vocab)
    assert list(indices) == [idx]
    assert list(counts) == [2.0]

    indices, counts = featurize("zzz qqq", vocab)
    assert list(indices) == [0]  # all mass at the OOV slot
    assert list(counts) == [2.0]


def test_uniform_logits_loss_is_log_c():
    model = make_model(["a", "b", "c", "d"], ["some words here"])
    features = [featurize("some words", model.vocabulary)]
    loss, _, _ = loss_and_grad(model, features, [2])
    assert loss == pytest.approx(math.log(4), abs=1e-9)


def test_peaked_logits_low_loss():
    vocab_texts = ["trigger token"]
    model = make_model(["a", "b"], vocab_texts)
    model.weights[0, :] = 10.0  # strongly favor class a everywhere
    features = [featurize("trigger", model.vocabulary)]
    loss, _, _ = loss_and_grad(model, features, [0])
    assert loss < 0.01


def test_invalid_label_index():
    model = make_model(["a", "b"], ["words"])
    with pytest.raises(InvalidLabelIndex):
        loss_and_grad(model, [featurize("words", model.vocabulary)], [7])


def central_difference_grad(model, features, labels, eps=1e-5):
    """Finite-difference oracle for the cross-entropy gradient."""

    def loss_at(weights, bias):
        probe = ClassifierModel(
            classes=model.classes,
            vocabulary=model.vocabulary,
            weights=weights,
            bias=bias,
            seed=model.seed,
            config=model.config,
        )
        return loss_and_grad(probe, features, labels)[0]

    grad_w = np.zeros_like(model.weights)
    for i in range(model.weights.shape[0]):
        for j in range(model.weights.shape[1]):
            up = model.weights.copy()
            down = model.weights.copy()
            up[i, j] += eps
            down[i, j] -= eps
            grad_w[i, j] = (loss_at(up, model.bias) - loss_at(down, model.bias)) / (
                2 * eps
            )
    grad_b = np.zeros_like(model.bias)
    for i in range(len(model.bias)):
        up = model.bias.copy()
        down = model.bias.copy()
        up[i] += eps
        down[i] -= eps
        grad_b[i] = (loss_at(model.weights, up) - loss_at(model.weights, down)) / (
            2 * eps
        )
    return grad_w, grad_b


def relative_error(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for trial in range(20):
        n_classes = int(rng.integers(2, 5))
        texts = [
            " ".join(
                f"tok{int(t)}" for t in rng.integers(0, 12, size=rng.integers(1, 6))
            )
            for _ in range(4)
        ]
        model = make_model(
            [f"c{i}" for i in range(n_classes)],
            texts,
            weights=None,
            bias=None,
        )
        model.weights[:] = rng.standard_normal(model.weights.shape) * 0.5
        model.bias[:] = rng.standard_normal(model.bias.shape) * 0.5
        features = [featurize(text, model.vocabulary) for text in texts]
        labels = rng.integers(0, n_classes, size=len(texts)).tolist()
        _, grad_w, grad_b = loss_and_grad(model, features, labels)
        fd_w, fd_b = central_difference_grad(model, features, labels)
        assert relative_error(grad_w, fd_w) < 1e-4, f"trial {trial}"
        assert relative_error(grad_b, fd_b) < 1e-4, f"trial {trial}"


def test_train_separable_reaches_high_accuracy():
    dataset = separable_dataset(100)
    model = train(dataset, TrainConfig(epochs=10, learning_rate=0.5, seed=1))
    texts = [r.utterance.text for r in dataset.records]
    labels = [r.label for r in dataset.records]
    probs = predict_proba(model, texts)
    predicted = [model.classes[int(i)] for i in probs.argmax(axis=1)]
    accuracy = sum(p == l for p, l in zip(predicted, labels)) / len(labels)
    assert accuracy >= 0.95


def test_train_deterministic_and_order_independent():
    dataset = separable_dataset(20)
    config = TrainConfig(epochs=3, seed=7)
    first = train(dataset, config)
    second = train(dataset, config)
    np.testing.assert_array_equal(first.weights, second.weights)
    np.testing.assert_array_equal(first.bias, second.bias)

    shuffled = Dataset(
        kind="classification", records=tuple(reversed(dataset.records))
    )
    third = train(shuffled, config)
    np.testing.assert_array_equal(first.weights, third.weights)


def test_train_zero_epochs_returns_initial_model():
    dataset = separable_dataset(5)
    model = train(dataset, TrainConfig(epochs=0, seed=3))
    assert not model.loss_history
    np.testing.assert_array_equal(model.weights, np.zeros_like(model.weights))


def test_train_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(Dataset(kind="classification", records=()), TrainConfig())


def test_unk_is_a_learned_class():
    records = [labeled(i, f"mystery blob {i}", UNK_ID) for i in range(30)]
    records += [labeled(100 + i, f"alpha topic {i}", "class_a") for i in range(30)]
    dataset = Dataset(kind="classification", records=tuple(records))
    model = train(dataset, TrainConfig(epochs=10, learning_rate=0.5, seed=0))
    assert UNK_ID in model.classes
    top = predict_topk(model, "mystery blob 5", 1)
    assert top.entries[0][0] == UNK_ID


def test_predict_topk_contract():
    dataset = separable_dataset(20)
    model = train(dataset, TrainConfig(epochs=5, seed=0))
    k = len(model.classes)
    top = predict_topk(model, "alpha utterance", k)
    probs = [p for _, p in top.entries]
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-9)
    assert all(p1 >= p2 for p1, p2 in zip(probs, probs[1:]))
    assert len(set(top.ids)) == k


def test_predict_topk_favors_trigger_token():
    # Hand-built model: weight 2 on token "b" for class b, zeros elsewhere.
    model = make_model(["a", "b", "c"], ["a b c"])
    model.weights[1, model.vocabulary.index["b"]] = 2.0
    top = predict_topk(model, "b", 3)
    assert top.entries[0][0] == "b"
    # softmax([0, 2, 0]) -> 0.7869860421615985 for the favored class
    assert top.entries[0][1] == pytest.approx(
        math.exp(2) / (math.exp(2) + 2), abs=1e-12
    )


def test_topk_ties_break_by_ascending_id():
    model = make_model(["zeta", "alpha", "mid"], ["x"])
    top = predict_topk(model, "x", 3)  # all-zero weights: perfect tie
    assert top.ids == ("alpha", "mid", "zeta")


def test_topk_on_252_class_model():
    rng = np.random.default_rng(0)
    classes = [f"intent_{i:03d}" for i in range(251)] + [UNK_ID]
    texts = [" ".join(f"t{j}" for j in rng.integers(0, 400, size=6)) for _ in range(40)]
    model = make_model(classes, texts)
    model.weights[:] = rng.standard_normal(model.weights.shape) * 0.1
    top = predict_topk(model, texts[0], 5)
    assert len(top.ids) == 5
    assert len(set(top.ids)) == 5
    probs = [p for _, p in top.entries]
    assert all(p1 >= p2 for p1, p2 in zip(probs, probs[1:]))


def test_checkpoint_roundtrip(tmp_path):
    dataset = separable_dataset(20)
    model = train(dataset, TrainConfig(epochs=3, seed=9))
    path = tmp_path / "model.npz"
    model.save(path)
    restored = ClassifierModel.load(path)
    np.testing.assert_array_equal(model.weights, restored.weights)
    np.testing.assert_array_equal(model.bias, restored.bias)
    assert restored.classes == model.classes
    text = "alpha utterance number 3"
    np.testing.assert_array_equal(
        predict_proba(model, [text]), predict_proba(restored, [text])
    )
