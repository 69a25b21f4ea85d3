"""Condition providers for the generator.

Two interchangeable sources produce a (batch, L, condition_dim) sequence:
a learned class-label table (trained with the generator) and precomputed
embedding files.  The file format is a flat stream of little-endian records:

    id: int64 | L: int32 | condition_dim: int32 | values: L*condition_dim float32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

_RECORD_HEADER = struct.Struct("<qii")


class ClassConditioner(nn.Module):
    """Learned length-1 embedding sequence per class id."""

    def __init__(self, num_classes: int, condition_dim: int):
        super().__init__()
        self.num_classes = num_classes
        self.table = nn.Embedding(num_classes, condition_dim)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.min() < 0 or ids.max() >= self.num_classes:
            raise ValueError("class id outside table range")
        return self.table(ids).unsqueeze(1)


class FileConditioner:
    """Serves precomputed embedding sequences keyed by integer id."""

    def __init__(self, path: str | Path):
        self.records = read_embedding_records(path)
        lengths = {v.shape[0] for v in self.records.values()}
        dims = {v.shape[1] for v in self.records.values()}
        if len(lengths) > 1 or len(dims) > 1:
            raise ValueError("embedding file mixes sequence lengths or dims")
        self.condition_dim = dims.pop() if dims else 0

    def __call__(self, ids: torch.Tensor) -> torch.Tensor:
        rows = []
        for i in ids.tolist():
            if i not in self.records:
                raise KeyError(f"no embedding record for id {i}")
            rows.append(torch.from_numpy(self.records[i]))
        return torch.stack(rows)


def write_embedding_records(path: str | Path, records: dict[int, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        for rid in sorted(records):
            values = np.ascontiguousarray(records[rid], dtype="<f4")
            if values.ndim != 2:
                raise ValueError("each record must be a (L, condition_dim) array")
            fh.write(_RECORD_HEADER.pack(rid, values.shape[0], values.shape[1]))
            fh.write(values.tobytes())


def read_embedding_records(path: str | Path) -> dict[int, np.ndarray]:
    records: dict[int, np.ndarray] = {}
    data = Path(path).read_bytes()
    offset = 0
    while offset < len(data):
        rid, length, dim = _RECORD_HEADER.unpack_from(data, offset)
        offset += _RECORD_HEADER.size
        nbytes = length * dim * 4
        if offset + nbytes > len(data):
            raise ValueError("truncated embedding record")
        values = np.frombuffer(data, dtype="<f4", count=length * dim, offset=offset)
        records[rid] = values.reshape(length, dim).copy()
        offset += nbytes
    return records
