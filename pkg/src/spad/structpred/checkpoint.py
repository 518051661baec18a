"""The SPAD1 checkpoint container used by every trained artifact.

Layout: magic ``SPAD1`` | uint32 format version | uint64 header length |
canonical-JSON header | concatenated little-endian float32 tensor payloads
in header order. The header carries kind/flavor tags, a config echo, and
free-form metadata (vocabulary, tagset, training curves, count tables).

Tensor payloads are 32-bit; training runs in 64-bit. Loading therefore
quantizes, and prediction code always runs from loaded checkpoints so that
save/load round trips reproduce predictions bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spad.errors import CheckpointError, KindMismatchError

MAGIC = b"SPAD1"
FORMAT_VERSION = 1

KINDS = ("parser", "tagger", "lm", "embedder", "generator")


@dataclass
class Checkpoint:
    """A kind-tagged bundle of named float32 tensors plus JSON metadata."""

    kind: str
    flavor: str
    config: dict
    metadata: dict = field(default_factory=dict)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CheckpointError(f"unknown checkpoint kind {self.kind!r}")
        self.tensors = {
            name: np.asarray(arr, dtype=np.float32)
            for name, arr in self.tensors.items()
        }

    def require_kind(self, kind: str):
        if self.kind != kind:
            raise KindMismatchError(f"expected a {kind} checkpoint, got {self.kind}")

    def to_bytes(self) -> bytes:
        names = sorted(self.tensors)
        header = {
            "kind": self.kind,
            "flavor": self.flavor,
            "config": self.config,
            "metadata": self.metadata,
            "tensors": [
                {"name": name, "shape": list(self.tensors[name].shape)}
                for name in names
            ],
        }
        header_bytes = json.dumps(
            header, sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
        parts.append(struct.pack("<Q", len(header_bytes)))
        parts.append(header_bytes)
        for name in names:
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
            raise CheckpointError("not a SPAD1 checkpoint")
        offset = len(MAGIC)
        (version,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        (header_len,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        try:
            header = json.loads(data[offset : offset + header_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
        offset += header_len
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 4
            if offset + nbytes > len(data):
                raise CheckpointError(f"truncated payload for tensor {entry['name']!r}")
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            tensors[entry["name"]] = arr.reshape(shape).copy()
            offset += nbytes
        if offset != len(data):
            raise CheckpointError("trailing bytes after tensor payloads")
        return cls(
            kind=header["kind"],
            flavor=header["flavor"],
            config=header["config"],
            metadata=header["metadata"],
            tensors=tensors,
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint file not found: {path}")
        return cls.from_bytes(path.read_bytes())

    def float64_tensors(self) -> dict[str, np.ndarray]:
        """Tensors widened back to float64 (values unchanged)."""
        return {name: arr.astype(np.float64) for name, arr in self.tensors.items()}
