"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"GSSL" | uint32 format version | uint32 header length | JSON header
    then per entry:
    uint16 name length | name (UTF-8) | uint8 dtype code | uint8 ndim |
    uint32 dim * ndim | raw little-endian values

The JSON header holds the resolved run configuration, the number of completed
epochs and free-form metadata. Entry names are prefixed ``param/``,
``buffer/`` (BN running statistics) or ``optim/`` (momentum buffers).
"""

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Mapping, Optional

import numpy as np

from ..utils.errors import ArtifactMismatchError, CheckpointError
from ..utils.logger import Logger

MAGIC = b"GSSL"
FORMAT_VERSION = 1

DTYPE_CODES: Dict[np.dtype, int] = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i8"): 2,
}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    config: Dict[str, Any]
    epoch: int
    arrays: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def section(self, prefix: str) -> Dict[str, np.ndarray]:
        """Entries under ``prefix/`` with the prefix stripped."""
        head = prefix.rstrip("/") + "/"
        return {k[len(head):]: v for k, v in self.arrays.items() if k.startswith(head)}


def _write_entry(f: BinaryIO, name: str, array: np.ndarray) -> None:
    array = np.asarray(array)
    dtype = array.dtype.newbyteorder("<")
    if dtype not in DTYPE_CODES:
        raise CheckpointError(f"unsupported dtype {array.dtype} for entry {name!r}")
    raw_name = name.encode("utf-8")
    if len(raw_name) > 0xFFFF or array.ndim > 0xFF:
        raise CheckpointError(f"entry {name!r} cannot be encoded")
    f.write(struct.pack("<H", len(raw_name)))
    f.write(raw_name)
    f.write(struct.pack("<BB", DTYPE_CODES[dtype], array.ndim))
    if array.ndim:
        f.write(struct.pack(f"<{array.ndim}I", *array.shape))
    f.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def save_checkpoint(
    path: Path,
    config: Mapping[str, Any],
    epoch: int,
    arrays: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write a checkpoint atomically (temporary file, then rename)."""
    path = Path(path)
    header = json.dumps(
        {"config": dict(config), "epoch": int(epoch), "metadata": dict(metadata or {})},
        sort_keys=True,
    ).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", FORMAT_VERSION, len(header)))
            f.write(header)
            for name in sorted(arrays):
                _write_entry(f, name, arrays[name])
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}")
    Logger.debug(f"Wrote checkpoint {path} ({len(arrays)} entries)")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data, self.path, self.pos = data, path, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint {self.path} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint; a foreign file or another format version is a mismatch."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")

    reader = _Reader(data, path)
    if len(data) < len(MAGIC) or reader.take(len(MAGIC)) != MAGIC:
        raise ArtifactMismatchError(f"{path} is not a gatessl checkpoint")
    version, header_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise ArtifactMismatchError(
            f"{path} has checkpoint format version {version}, expected {FORMAT_VERSION}"
        )
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {e}")

    arrays: Dict[str, np.ndarray] = {}
    while not reader.done:
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for entry {name!r} in {path}")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = CODE_DTYPES[code]
        count = int(np.prod(shape)) if shape else 1
        raw = reader.take(count * dtype.itemsize)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))

    return Checkpoint(
        config=header.get("config", {}),
        epoch=int(header.get("epoch", 0)),
        arrays=arrays,
        metadata=header.get("metadata", {}),
        version=version,
    )
