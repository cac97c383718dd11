"""``CKP1`` checkpoints: ordered parameter table in a JSON header, f32 LE payload."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataio.formats import pack, unpack
from ..errors import ConfigError, FormatError

CKPT_MAGIC = b"CKP1"


@dataclass
class Checkpoint:
    state: dict  # name -> array, insertion order is payload order
    config_fingerprint: str
    seed: int
    extra: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "params": [{"name": k, "shape": list(v.shape)} for k, v in self.state.items()],
            "config_fingerprint": self.config_fingerprint,
            "seed": int(self.seed),
            "extra": self.extra,
        }

    def to_bytes(self) -> bytes:
        flat = [np.asarray(v, dtype=np.float64).reshape(-1) for v in self.state.values()]
        payload = np.concatenate(flat) if flat else np.zeros(0)
        return pack(CKPT_MAGIC, self.header(), payload)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        header, flat = unpack(blob, CKPT_MAGIC)
        try:
            table = header["params"]
            state, offset = {}, 0
            for entry in table:
                shape = tuple(int(s) for s in entry["shape"])
                size = int(np.prod(shape))
                state[entry["name"]] = flat[offset : offset + size].astype(np.float64).reshape(shape)
                offset += size
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed checkpoint header: {exc}") from exc
        if offset != flat.size:
            raise FormatError("checkpoint payload size does not match its parameter table")
        return cls(state, header.get("config_fingerprint", ""), header.get("seed", 0), header.get("extra", {}))

    def save(self, path) -> str:
        blob = self.to_bytes()
        Path(path).write_bytes(blob)
        return sha256(blob)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"missing checkpoint {path}")
        return cls.from_bytes(path.read_bytes())


def sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def file_fingerprint(path) -> str:
    return sha256(Path(path).read_bytes())
