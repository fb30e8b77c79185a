"""
Parameter checkpoint container.

Layout (all integers little-endian):

    magic        8 bytes  b"SADICKPT"
    version      uint32
    meta_len     uint32, then meta_len bytes of UTF-8 JSON
    n_tensors    uint32
    per tensor:  name_len uint16, name (UTF-8), ndim uint8,
                 ndim x uint32 dims, float64 payload (row-major)
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from .errors import CheckpointError

logger = logging.getLogger(__name__)


def save_checkpoint(path, tensors: Dict[str, np.ndarray], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write named float64 arrays plus a JSON metadata block."""
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(meta)),
        meta,
        struct.pack("<I", len(tensors)),
    ]
    for name, array in tensors.items():
        array = np.asarray(array, dtype=np.float64)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(array.astype("<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))
    logger.info(f"Checkpoint saved: {path} ({len(tensors)} tensors)")
    return path


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a checkpoint written by ``save_checkpoint``.

    Returns
    -------
    (dict, dict)
        Tensors by name, in file order, and the metadata.
    """
    cur = _Cursor(Path(path).read_bytes())
    magic = cur.take(len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {magic!r})")
    version, meta_len = cur.unpack("<II", "header")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        metadata = json.loads(cur.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: bad metadata block: {e}") from None
    (count,) = cur.unpack("<I", "tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H", "name length")
        name = cur.take(name_len, "name").decode("utf-8")
        (ndim,) = cur.unpack("<B", f"{name} rank")
        shape = cur.unpack(f"<{ndim}I", f"{name} shape") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        payload = cur.take(8 * size, f"{name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if cur.pos != len(cur.data):
        raise CheckpointError(f"{path}: {len(cur.data) - cur.pos} trailing bytes")
    return tensors, metadata
