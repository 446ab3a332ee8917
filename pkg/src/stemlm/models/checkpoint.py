"""Binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic b"STEMLMCK"
    u32       format version
    u64       header length in bytes
    header    UTF-8 JSON: config, vocab, optimizer state, epoch, tensor table
    blocks    raw little-endian tensor bytes at the offsets in the tensor table
    32 bytes  SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..numerics.optim import Optimizer, optimizer_from_state
from .config import ModelConfig
from .lm import LanguageModel

MAGIC = b"STEMLMCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: List[str]
    params: Dict[str, np.ndarray]
    optimizer_state: Dict = field(default_factory=dict)
    optimizer_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    target_map: Optional[np.ndarray] = None

    @classmethod
    def from_training(cls, model: LanguageModel, vocab: List[str], optimizer: Optimizer,
                      epoch: int) -> "Checkpoint":
        moments = {}
        for which in ("m", "v"):
            for name, arr in getattr(optimizer, which, {}).items():
                moments[f"{which}:{name}"] = arr.copy()
        return cls(model.config, list(vocab), {k: v.copy() for k, v in model.state_dict().items()},
                   optimizer.state_dict(), moments, epoch, model.target_map)

    def build_model(self) -> LanguageModel:
        model = LanguageModel(self.config, target_map=self.target_map)
        model.load_state_dict(self.params)
        return model

    def build_optimizer(self) -> Optimizer:
        return optimizer_from_state(self.optimizer_state, self.optimizer_moments)


def _le(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    blocks = [("param", k, v) for k, v in ckpt.params.items()]
    blocks += [("moment", k, v) for k, v in sorted(ckpt.optimizer_moments.items())]
    if ckpt.target_map is not None:
        blocks.append(("target_map", "target_map", ckpt.target_map))
    table, payload, offset = [], [], 0
    for kind, name, arr in blocks:
        data = _le(np.asarray(arr)).tobytes()
        table.append({"kind": kind, "name": name, "dtype": _le(np.asarray(arr)).dtype.str,
                      "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    header = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab,
        "optimizer": ckpt.optimizer_state,
        "epoch": ckpt.epoch,
        "tensors": table,
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + b"".join(payload)
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + 32:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(raw)} bytes)")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a stemlm checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is truncated or corrupted")
    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from None
    base = start + hlen
    params, moments, target_map = {}, {}, None
    for entry in header["tensors"]:
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(body):
            raise CheckpointError(f"{path}: tensor {entry['name']} runs past end of file")
        arr = np.frombuffer(body[lo:hi], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        if entry["kind"] == "param":
            params[entry["name"]] = arr
        elif entry["kind"] == "moment":
            moments[entry["name"]] = arr
        else:
            target_map = arr.astype(np.int64)
    return Checkpoint(ModelConfig.from_dict(header["config"]), header["vocab"], params,
                      header["optimizer"], moments, header["epoch"], target_map)
