"""Checkpoint index of a run directory."""

from datetime import datetime
from typing import Any, Dict, List, Optional

from ..utils.errors import StorageError
from .filesystem import RunDirectory

INDEX_FILE = "checkpoints.yaml"


class CheckpointIndex:
    """Tracks which checkpoints a run has written and which one is latest."""

    def __init__(self, run_dir: RunDirectory):
        self.run_dir = run_dir
        self._cache: Optional[Dict[str, Any]] = None

    def load(self) -> Dict[str, Any]:
        """Load index from disk."""
        if self._cache is not None:
            return self._cache
        try:
            if self.run_dir.exists(INDEX_FILE):
                self._cache = self.run_dir.load_yaml(INDEX_FILE)
            else:
                self._cache = self._create_default()
            return self._cache
        except Exception as e:
            raise StorageError(f"Failed to load checkpoint index: {e}")

    def save(self) -> None:
        if self._cache is None:
            return
        try:
            self.run_dir.save_yaml(self._cache, INDEX_FILE)
        except Exception as e:
            raise StorageError(f"Failed to save checkpoint index: {e}")

    def _create_default(self) -> Dict[str, Any]:
        return {
            'version': 1,
            'created': datetime.now().isoformat(),
            'latest': None,
            'checkpoints': [],
        }

    def add(self, epoch: int, filename: str, metrics: Optional[Dict[str, float]] = None) -> None:
        """Record a checkpoint written after ``epoch`` completed (epochs count from 1)."""
        index = self.load()
        entries = [e for e in index['checkpoints'] if e['epoch'] != epoch]
        entries.append({
            'epoch': int(epoch),
            'file': filename,
            'written': datetime.now().isoformat(),
            'metrics': {k: float(v) for k, v in (metrics or {}).items()},
        })
        entries.sort(key=lambda e: e['epoch'])
        index['checkpoints'] = entries
        index['latest'] = entries[-1]['file']
        self._cache = index
        self.save()

    def entries(self) -> List[Dict[str, Any]]:
        return list(self.load()['checkpoints'])

    def latest(self) -> Optional[Dict[str, Any]]:
        entries = self.entries()
        return entries[-1] if entries else None

