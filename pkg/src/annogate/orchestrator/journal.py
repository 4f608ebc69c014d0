"""Append-only JSON Lines journals.

Each job directory keeps its state in append-only journals so a killed run
can resume by replaying them. Writes are flushed and fsynced per line; reads
tolerate a truncated final line (the record a crash cut short is simply
redone).
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator, Union


def append_record(path: Union[str, Path], record: dict) -> None:
    line = json.dumps(record, ensure_ascii=False)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_records(path: Union[str, Path]) -> Iterator[dict]:
    path = Path(path)
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.endswith("\n"):
                # Truncated tail from an interrupted write; drop it.
                return
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                return
