"""Serialization utilities for run artefacts."""

import csv
import json
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Sequence, TextIO

import numpy as np
import yaml


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into JSON/YAML friendly values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@contextmanager
def _replacing(path: Path, newline: Any = None) -> Iterator[TextIO]:
    """Write to a sibling temp file and move it over ``path`` once complete."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline=newline) as f:
            yield f
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


class Serializer:
    """Reads and writes the text formats a run directory contains."""

    @staticmethod
    def to_json(data: Any, path: Path) -> None:
        """Write data to JSON with sorted keys."""
        with _replacing(path) as f:
            json.dump(_plain(data), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')

    @staticmethod
    def from_json(path: Path) -> Any:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    @staticmethod
    def to_yaml(data: Any, path: Path) -> None:
        """Write data to YAML file."""
        with _replacing(path) as f:
            yaml.safe_dump(_plain(data), f, default_flow_style=False, sort_keys=False, allow_unicode=True)

    @staticmethod
    def from_yaml(path: Path) -> Any:
        with open(path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f) or {}

    @staticmethod
    def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        with _replacing(path, newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_plain(v) for v in row])

    @staticmethod
    def append_csv_row(path: Path, header: Sequence[str], row: Sequence[Any]) -> None:
        """Append one row, writing the header first if the file is new."""
        new_file = not path.exists() or path.stat().st_size == 0
        with open(path, 'a', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(header)
            writer.writerow([_plain(v) for v in row])

    @staticmethod
    def read_csv(path: Path) -> List[Dict[str, str]]:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            return list(csv.DictReader(f))

    @staticmethod
    def append_jsonl(path: Path, record: Mapping[str, Any]) -> None:
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(_plain(record), sort_keys=True) + '\n')

    @staticmethod
    def read_jsonl(path: Path) -> List[Dict[str, Any]]:
        if not path.exists():
            return []
        with open(path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]

    @staticmethod
    def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> None:
        with _replacing(path) as f:
            for record in records:
                f.write(json.dumps(_plain(record), sort_keys=True) + '\n')
