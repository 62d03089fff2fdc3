"""Run directory layout and file operations."""

import shutil
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

from ..utils.errors import StorageError
from .serialization import Serializer

METRICS_FILE = "metrics.csv"
GATE_STATS_FILE = "gate_stats.jsonl"
RESOLVED_CONFIG_FILE = "resolved_config.yaml"
LOG_FILE = "train.log"
CHECKPOINT_DIR = "checkpoints"

METRICS_HEADER = ["epoch", "loss_ssl", "loss_gate", "flop_ratio", "lr", "tau"]


class RunDirectory:
    """All artefacts of one training or evaluation run live under ``root``."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root).absolute()
        self.serializer = Serializer()

    def ensure_dir(self, *parts: str) -> Path:
        """Ensure directory exists and return its path."""
        path = self.root.joinpath(*parts)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"Cannot create directory {path}: {e}")
        return path

    def get_path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def exists(self, *parts: str) -> bool:
        return self.get_path(*parts).exists()

    def list_dir(self, *parts: str) -> List[Path]:
        path = self.get_path(*parts)
        if not path.exists():
            return []
        return sorted(path.iterdir())

    @property
    def metrics_path(self) -> Path:
        return self.get_path(METRICS_FILE)

    @property
    def gate_stats_path(self) -> Path:
        return self.get_path(GATE_STATS_FILE)

    @property
    def log_path(self) -> Path:
        return self.get_path(LOG_FILE)

    @property
    def checkpoint_dir(self) -> Path:
        return self.ensure_dir(CHECKPOINT_DIR)

    def checkpoint_path(self, epoch: int) -> Path:
        return self.checkpoint_dir / f"epoch_{epoch:04d}.ckpt"

    def save_json(self, data: Any, *parts: str) -> Path:
        path = self.get_path(*parts)
        self.ensure_dir(*parts[:-1])
        self.serializer.to_json(data, path)
        return path

    def load_json(self, *parts: str) -> Any:
        path = self.get_path(*parts)
        if not path.exists():
            raise StorageError(f"File not found: {path}")
        return self.serializer.from_json(path)

    def save_yaml(self, data: Any, *parts: str) -> Path:
        path = self.get_path(*parts)
        self.ensure_dir(*parts[:-1])
        self.serializer.to_yaml(data, path)
        return path

    def load_yaml(self, *parts: str) -> Any:
        path = self.get_path(*parts)
        if not path.exists():
            raise StorageError(f"File not found: {path}")
        return self.serializer.from_yaml(path)

    def save_csv(self, header: Sequence[str], rows: Sequence[Sequence[Any]], *parts: str) -> Path:
        path = self.get_path(*parts)
        self.ensure_dir(*parts[:-1])
        self.serializer.write_csv(path, header, rows)
        return path

    def append_metrics(self, row: Mapping[str, Any]) -> None:
        self.ensure_dir()
        self.serializer.append_csv_row(self.metrics_path, METRICS_HEADER, [row[k] for k in METRICS_HEADER])

    def append_gate_stats(self, record: Mapping[str, Any]) -> None:
        self.ensure_dir()
        self.serializer.append_jsonl(self.gate_stats_path, record)

    def read_gate_stats(self) -> List[Dict[str, Any]]:
        return self.serializer.read_jsonl(self.gate_stats_path)

    def truncate_after(self, epoch: int) -> None:
        """Drop metric rows and gate stats recorded after ``epoch`` (used on resume)."""
        if self.metrics_path.exists():
            rows = self.serializer.read_csv(self.metrics_path)
            kept = [[r[k] for k in METRICS_HEADER] for r in rows if int(r["epoch"]) <= epoch]
            self.serializer.write_csv(self.metrics_path, METRICS_HEADER, kept)
        if self.gate_stats_path.exists():
            records = [r for r in self.read_gate_stats() if int(r["epoch"]) <= epoch]
            self.serializer.write_jsonl(self.gate_stats_path, records)

    def delete(self, *parts: str) -> bool:
        path = self.get_path(*parts)
        if not path.exists():
            return False
        if path.is_file():
            path.unlink()
        else:
            shutil.rmtree(path)
        return True
