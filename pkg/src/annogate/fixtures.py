"""Deterministic synthetic fixtures for tests and demos.

Everything here is generated from fixed seeds: a tiny product-support intent
catalog, a larger generated taxonomy, annotation task fixtures, the 10-class
corpus for the label-noise experiments, and stub endpoint scripts that force
known outcomes for the hermetic end-to-end job.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .catalog import (
    UNK_ID,
    BinaryTask,
    Dataset,
    Intent,
    IntentCatalog,
    LabeledExample,
    MultiClassTask,
    Utterance,
)
from .prompting import BINARY_PROB, MULTICLASS_PROB, render_binary, render_multiclass
from .stub_server import sha256_text

DEMO_INTENTS = [
    {
        "id": "pricing",
        "name": "Get product pricing",
        "description": "The client asks how much a product or plan costs.",
        "positive_examples": [
            "How much does the apple plan cost?",
            "Please send the price list for banana boxes.",
            "What is the monthly fee for premium?",
        ],
        "negative_examples": [
            "The apple plan stopped working yesterday.",
            "How do I cancel my premium plan?",
        ],
    },
    {
        "id": "cancel_subscription",
        "name": "Cancel a subscription",
        "description": "The client wants to stop or cancel an active subscription or plan.",
        "positive_examples": [
            "I want to cancel my subscription.",
            "Please stop charging me for premium.",
        ],
        "negative_examples": [
            "How much is the premium subscription?",
        ],
    },
    {
        "id": "delivery_status",
        "name": "Where is my delivery",
        "description": "The client asks about the status or location of an order in transit.",
        "positive_examples": [
            "Where is my order 4521?",
            "My package was supposed to arrive on Monday.",
        ],
        "negative_examples": [
            "I want to order a new package of bananas.",
        ],
    },
    {
        "id": "payment_failed",
        "name": "Payment did not go through",
        "description": "The client reports a failed, declined, or stuck payment.",
        "positive_examples": [
            "My card was declined at checkout.",
            "The payment page says error 502.",
        ],
        "negative_examples": [
            "Which cards do you accept?",
        ],
    },
    {
        "id": "product_details",
        "name": "Get product details",
        "description": "The client asks about characteristics or features of a product.",
        "positive_examples": [
            "What are the apple product characteristics?",
            "Does the orange box include a charger?",
        ],
        "negative_examples": [
            "How much does the orange box cost?",
        ],
    },
]


def demo_catalog() -> IntentCatalog:
    return IntentCatalog(
        Intent(
            id=e["id"],
            name=e["name"],
            description=e["description"],
            positive_examples=tuple(e["positive_examples"]),
            negative_examples=tuple(e["negative_examples"]),
        )
        for e in DEMO_INTENTS
    )


def write_demo_catalog(path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps({"intents": DEMO_INTENTS}, indent=2), encoding="utf-8"
    )


def generated_catalog(n_intents: int = 250, seed: int = 11) -> IntentCatalog:
    """A larger taxonomy with near-duplicate intents, as real ones have."""
    rng = np.random.default_rng(seed)
    areas = ["billing", "delivery", "account", "product", "refund",
             "warranty", "login", "promo", "contract", "support"]
    actions = ["check", "change", "cancel", "request", "report",
               "extend", "confirm", "dispute", "track", "restore"]
    intents = []
    for i in range(n_intents):
        area = areas[int(rng.integers(len(areas)))]
        action = actions[int(rng.integers(len(actions)))]
        intent_id = f"{area}_{action}_{i:03d}"
        intents.append(
            Intent(
                id=intent_id,
                name=f"{action.title()} {area} #{i:03d}",
                description=f"The client wants to {action} something related to {area}.",
                positive_examples=(
                    f"I need to {action} my {area}.",
                    f"Can you {action} the {area} for me?",
                ),
                negative_examples=(f"Nothing about {area} here.",),
            )
        )
    return IntentCatalog(intents)


# --- demo annotation job (10 items, 7 confident / 3 abstained) -----------------

_DEMO_TEXTS = [
    ("d01", "How much does the apple plan cost per month?", "pricing", 1),
    ("d02", "Please send the full price list for banana boxes.", "pricing", 1),
    ("d03", "My card was declined when paying for premium.", "pricing", 0),
    ("d04", "What is the fee for the orange subscription?", "pricing", 1),
    ("d05", "Where is my order 7781? It is late.", "delivery_status", 1),
    ("d06", "The package tracker has not moved for three days.", "delivery_status", 1),
    ("d07", "I want to stop paying for the premium plan.", "cancel_subscription", 1),
    ("d08", "apple banana orange question", "pricing", 0),
    ("d09", "Tell me something about boxes maybe?", "product_details", 0),
    ("d10", "hmm not sure what I want", "cancel_subscription", 0),
]

#: Items the demo stub answers with low confidence (forced abstentions).
DEMO_UNSURE_IDS = ("d08", "d09", "d10")


def demo_binary_dataset() -> Dataset:
    records = tuple(
        BinaryTask(
            utterance=Utterance(id=item_id, text=text),
            candidate=candidate,
            reference_label=label,
        )
        for item_id, text, candidate, label in _DEMO_TEXTS
    )
    return Dataset(kind="binary", records=records, provenance="demo-binary")


def write_demo_dataset(path: Union[str, Path]) -> None:
    demo_binary_dataset().dump(path)


def demo_stub_entries(catalog: IntentCatalog) -> list[dict]:
    """Stub script forcing 7 confident and 3 low-confidence answers.

    Entries are keyed by the digest of the rendered single-token prompt, so
    they only match when the prompt text is byte-identical to production
    rendering.
    """
    entries = []
    for task in demo_binary_dataset().records:
        prompt = render_binary(BINARY_PROB, task, catalog.resolve(task.candidate))
        if task.utterance.id in DEMO_UNSURE_IDS:
            top = {"1": 0.48, "0": 0.42, "?": 0.05}
        elif task.reference_label == 1:
            top = {"1": 0.93, "0": 0.04, "?": 0.01}
        else:
            top = {"0": 0.93, "1": 0.04, "?": 0.01}
        entries.append(
            {
                "prompt_sha256": sha256_text(prompt.text),
                "mode": "next_token_distribution",
                "top_tokens": top,
            }
        )
    return entries


def write_demo_stub_script(path: Union[str, Path], catalog: IntentCatalog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in demo_stub_entries(catalog):
            fh.write(json.dumps(entry) + "\n")


# --- prompt snapshot fixtures ------------------------------------------------------


def fixture_docs():
    """Two retrieved chunks used by the prompt snapshot fixtures."""
    from .rag import DocumentChunk

    return [
        DocumentChunk(
            id="doc-price#0",
            doc_id="doc-price",
            text="Plan prices: apple 10 USD/month, banana 14 USD/month.",
            position=0,
        ),
        DocumentChunk(
            id="doc-refund#1",
            doc_id="doc-refund",
            text="Refunds for cancelled plans are processed within 5 days.",
            position=1,
        ),
    ]


# --- multiclass fixture ----------------------------------------------------------


def demo_multiclass_task() -> MultiClassTask:
    return MultiClassTask(
        utterance=Utterance(
            id="m01", text="How much does the orange box cost and is it in stock?"
        ),
        candidates=("pricing", "product_details", "delivery_status",
                    "payment_failed", UNK_ID),
        reference_label="pricing",
    )


def demo_multiclass_stub_entries(catalog: IntentCatalog) -> list[dict]:
    task = demo_multiclass_task()
    resolved = [catalog.resolve(c) for c in task.candidates]
    prompt = render_multiclass(MULTICLASS_PROB, task, resolved)
    return [
        {
            "prompt_sha256": sha256_text(prompt.text),
            "mode": "next_token_distribution",
            "top_tokens": {"1": 0.7, "2": 0.2, "3": 0.05, "5": 0.03},
        }
    ]


# --- synthetic corpus for the noise experiments -----------------------------------


def synthetic_noise_corpus(
    n_classes: int = 10,
    seed: int = 20240601,
    hub_size: int = 150,
    class_size: int = 48,
    pool_size: int = 110,
    tokens_per_text: int = 6,
    n_filler: int = 30,
) -> Dataset:
    """A 10-class corpus with one broad hub class.

    Each ordinary class draws from its own token pool; the hub class draws
    from a wide pool overlapping every other class, so the baseline's
    confusions concentrate on it. Pool sizes are large relative to class
    sizes, which makes accuracy data-hungry: deleting examples keeps hurting
    at every rate.
    """
    rng = np.random.default_rng(seed)
    filler = [f"common{j:02d}" for j in range(n_filler)]
    pools = []
    for cls in range(n_classes):
        pools.append([f"w{cls:02d}x{j:03d}" for j in range(pool_size)])
    # The hub's pool mixes a slice of every class's tokens with its own.
    hub_pool = list(pools[0])
    for cls in range(1, n_classes):
        picks = rng.choice(pool_size, size=pool_size // 4, replace=False)
        hub_pool.extend(pools[cls][j] for j in picks)
    pools[0] = hub_pool

    records = []
    counter = 0
    for cls in range(n_classes):
        size = hub_size if cls == 0 else class_size
        pool = pools[cls]
        for _ in range(size):
            k_specific = tokens_per_text - 2
            words = [pool[j] for j in rng.integers(len(pool), size=k_specific)]
            words += [filler[j] for j in rng.integers(n_filler, size=2)]
            order = rng.permutation(len(words))
            text = " ".join(words[j] for j in order)
            records.append(
                LabeledExample(
                    utterance=Utterance(id=f"n{counter:05d}", text=text),
                    label=f"class_{cls:02d}",
                )
            )
            counter += 1
    return Dataset(
        kind="classification", records=tuple(records), provenance="synthetic-noise"
    )


def write_noise_corpus(path: Union[str, Path], **kwargs) -> None:
    synthetic_noise_corpus(**kwargs).dump(path)


def noise_corpus_catalog(n_classes: int = 10) -> IntentCatalog:
    return IntentCatalog(
        Intent(
            id=f"class_{cls:02d}",
            name=f"Synthetic class {cls:02d}",
            description=f"Synthetic token-pool class number {cls:02d}.",
        )
        for cls in range(n_classes)
    )
