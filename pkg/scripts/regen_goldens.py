"""Regenerate the committed prompt snapshots.

Run from the repo root after a deliberate template change, then review the
diff by hand before committing:

    python scripts/regen_goldens.py
"""

from __future__ import annotations

from pathlib import Path

from annogate import fixtures
from annogate.fixtures import fixture_docs
from annogate.prompting import (
    BINARY_PROB,
    BINARY_TEXT,
    MULTICLASS_PROB,
    MULTICLASS_TEXT,
    render_binary,
    render_multiclass,
)

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "prompt_goldens"


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    catalog = fixtures.demo_catalog()
    dataset = fixtures.demo_binary_dataset()
    task = dataset.records[0]
    intent = catalog.resolve(task.candidate)
    docs = fixture_docs()

    snapshots = {
        "binary_text_with_docs.txt": render_binary(
            BINARY_TEXT, task, intent, docs
        ),
        "binary_text_no_docs.txt": render_binary(BINARY_TEXT, task, intent),
        "binary_prob.txt": render_binary(BINARY_PROB, task, intent, docs),
    }

    mc_task = fixtures.demo_multiclass_task()
    resolved = [catalog.resolve(c) for c in mc_task.candidates]
    snapshots["multiclass_text.txt"] = render_multiclass(
        MULTICLASS_TEXT, mc_task, resolved, docs
    )
    snapshots["multiclass_prob.txt"] = render_multiclass(
        MULTICLASS_PROB, mc_task, resolved
    )

    for name, prompt in snapshots.items():
        (GOLDEN_DIR / name).write_text(prompt.text, encoding="utf-8")
        print(f"wrote {name} ({len(prompt.text)} chars, digest {prompt.digest[:12]})")


if __name__ == "__main__":
    main()
