import json

import pytest

from annogate import fixtures
from annogate.catalog import (
    CONF_ID,
    UNK_ID,
    Dataset,
    Intent,
    IntentCatalog,
    LabeledExample,
    MultiClassTask,
    SpecialLabel,
    Utterance,
    load_catalog,
    load_dataset,
    resolve_intent,
)
from annogate.errors import (
    DuplicateIntentId,
    MissingDescription,
    ParseError,
    SchemaError,
    TupleArityError,
    UnknownIntentId,
)


def write_catalog(path, intents):
    path.write_text(json.dumps({"intents": intents}), encoding="utf-8")


def test_load_catalog_includes_specials(tmp_path):
    path = tmp_path / "catalog.json"
    write_catalog(
        path,
        [
            {"id": "a", "name": "A", "description": "class a"},
            {"id": "b", "name": "B", "description": "class b"},
            {"id": "c", "name": "C", "description": "class c"},
        ],
    )
    catalog = load_catalog(path)
    assert len(catalog) == 5  # three intents plus unk and conf
    assert UNK_ID in catalog and CONF_ID in catalog


def test_duplicate_intent_id(tmp_path):
    path = tmp_path / "catalog.json"
    write_catalog(
        path,
        [
            {"id": "price", "name": "P1", "description": "d"},
            {"id": "price", "name": "P2", "description": "d"},
        ],
    )
    with pytest.raises(DuplicateIntentId):
        load_catalog(path)


def test_missing_description(tmp_path):
    path = tmp_path / "catalog.json"
    write_catalog(path, [{"id": "a", "name": "A", "description": "  "}])
    with pytest.raises(MissingDescription):
        load_catalog(path)


def test_malformed_catalog_file(tmp_path):
    path = tmp_path / "catalog.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_catalog(path)


def test_generated_250_intent_catalog():
    catalog = fixtures.generated_catalog(n_intents=250)
    assert len(catalog) == 252  # includes the two special labels


def test_resolve_intent(catalog):
    assert resolve_intent(catalog, UNK_ID) == SpecialLabel("unk")
    intent = resolve_intent(catalog, "pricing")
    assert isinstance(intent, Intent)
    assert intent.positive_examples
    with pytest.raises(UnknownIntentId):
        resolve_intent(catalog, "no_such_intent")


def test_reserved_ids_rejected_as_intents():
    with pytest.raises(DuplicateIntentId):
        IntentCatalog([Intent(id=UNK_ID, name="x", description="d")])


def test_load_binary_dataset_digest_stable(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    fixtures.write_demo_dataset(path)
    first = load_dataset(path, catalog)
    second = load_dataset(path, catalog)
    assert first.kind == "binary"
    assert len(first) == 10
    assert first.digest == second.digest

    copy = tmp_path / "copy.jsonl"
    copy.write_bytes(path.read_bytes())
    assert load_dataset(copy, catalog).digest == first.digest


def test_digest_changes_with_content(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    fixtures.write_demo_dataset(path)
    original = load_dataset(path, catalog)
    text = path.read_text(encoding="utf-8").replace("apple", "kiwi")
    path.write_text(text, encoding="utf-8")
    assert load_dataset(path, catalog).digest != original.digest


def test_multiclass_arity_error(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    record = {
        "id": "x1",
        "text": "hello",
        "candidates": ["pricing", "product_details", "delivery_status", UNK_ID],
    }
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(TupleArityError):
        load_dataset(path, catalog)


def test_multiclass_candidates_distinct():
    with pytest.raises(SchemaError):
        MultiClassTask(
            utterance=Utterance(id="x", text="t"),
            candidates=("a", "a", "b", "c", "d"),
        )


def test_unknown_intent_reference(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    record = {"id": "x1", "text": "hello", "candidate": "ghost"}
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(UnknownIntentId):
        load_dataset(path, catalog)


def test_mixed_record_kinds_rejected(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    lines = [
        {"id": "x1", "text": "hello", "candidate": "pricing"},
        {"id": "x2", "text": "hello", "label": "pricing"},
    ]
    path.write_text(
        "\n".join(json.dumps(line) for line in lines) + "\n", encoding="utf-8"
    )
    with pytest.raises(SchemaError):
        load_dataset(path, catalog)


def test_dataset_roundtrip_identity(tmp_path, catalog):
    dataset = fixtures.synthetic_noise_corpus(class_size=5, hub_size=10)
    path = tmp_path / "corpus.jsonl"
    dataset.dump(path)
    reloaded = load_dataset(path, fixtures.noise_corpus_catalog())
    assert reloaded.digest == dataset.digest
    assert reloaded.records == dataset.records


def test_classification_records(tmp_path, catalog):
    path = tmp_path / "data.jsonl"
    record = {"id": "x1", "text": "how much is it", "label": "pricing"}
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    dataset = load_dataset(path, catalog)
    assert dataset.kind == "classification"
    assert isinstance(dataset.records[0], LabeledExample)


def test_dataset_record_order_is_content():
    a = LabeledExample(Utterance(id="1", text="x"), label="pricing")
    b = LabeledExample(Utterance(id="2", text="y"), label="pricing")
    d1 = Dataset(kind="classification", records=(a, b))
    d2 = Dataset(kind="classification", records=(b, a))
    assert d1.digest != d2.digest
