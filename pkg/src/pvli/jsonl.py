"""Line-delimited JSON record I/O.

All pipeline files are UTF-8 JSONL. Writes are canonical (sorted keys, no
extra whitespace) so that identical record streams serialize to identical
bytes, which the end-to-end determinism checks rely on.
"""

import json
from pathlib import Path
from typing import Iterable, Iterator


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict]) -> int:
    """Write records to `path`, one JSON object per line. Returns the count."""
    n = 0
    with open(ensure_parent(path), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON record: {exc}") from exc


def load_jsonl(path) -> list[dict]:
    return list(read_jsonl(path))


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
