"""Binary model container and its byte accounting.

Layout (little-endian)::

    b"CPFL"  uint32 version
    section vocabulary  : uint32 k, uint32 D, k*D float32
    section embedding   : uint32 B, uint64 seed, B*D float32, k*B float32
    section points      : uint64 n, n * (uint32 id, 3 float64)
    section entries     : uint64 n, n * (uint32 point, uint32 word, B/8 bytes)
    section visibility  : uint64 n, n * (uint32 point, uint32 image)

Every section is preceded by its payload length as uint64.  Floating-point
vocabulary and embedding arrays are stored in single precision, so a model
read back from disk differs from the in-memory original by float32 rounding;
writing it again reproduces the file byte for byte.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .embedding import CompressedModel, HammingEmbedding, Vocabulary
from .scene_model import VisibilityGraph

MAGIC = b"CPFL"
VERSION = 1
SECTIONS = ("vocabulary", "embedding", "points", "entries", "visibility")
BASELINE_DESCRIPTOR_BYTES = 128
ID_BYTES = 4

_U4, _U8 = np.dtype("<u4"), np.dtype("<u8")
_POINT = np.dtype([("id", "<u4"), ("position", "<f8", (3,))])
_EDGE = np.dtype([("point", "<u4"), ("image", "<u4")])


class ContainerError(ValueError):
    pass


def _entry_dtype(n_bytes: int) -> np.dtype:
    return np.dtype([("point", "<u4"), ("word", "<u4"), ("signature", "u1", (n_bytes,))])


def _u32(name: str, value: int) -> bytes:
    if not 0 <= value < 2**32:
        raise ContainerError(f"{name}={value} does not fit in 32 bits")
    return np.array(value, _U4).tobytes()


def _sections(model: CompressedModel) -> dict[str, bytes]:
    vocab, emb = model.vocab, model.embedding
    k, d = vocab.centroids_.shape
    seed = emb.random_state if emb.random_state is not None else 0
    if not 0 <= int(seed) < 2**64:
        raise ContainerError("embedding seed must be a non-negative 64-bit integer")

    points = np.zeros(model.n_points, _POINT)
    points["id"] = np.arange(model.n_points)
    points["position"] = model.positions

    entries = np.zeros(model.n_entries, _entry_dtype(emb.n_bytes))
    entries["point"] = model.entry_point
    entries["word"] = model.entry_word
    entries["signature"] = model.entry_signature

    pts, imgs = model.graph.edges()
    edges = np.zeros(pts.size, _EDGE)
    edges["point"], edges["image"] = pts, imgs

    return {
        "vocabulary": _u32("k", k) + _u32("D", d) + vocab.centroids_.astype("<f4").tobytes(),
        "embedding": _u32("B", emb.n_bits) + np.array(int(seed), _U8).tobytes()
        + emb.projection_.astype("<f4").tobytes() + emb.thresholds_.astype("<f4").tobytes(),
        "points": np.array(points.size, _U8).tobytes() + points.tobytes(),
        "entries": np.array(entries.size, _U8).tobytes() + entries.tobytes(),
        "visibility": np.array(edges.size, _U8).tobytes() + edges.tobytes(),
    }


def to_bytes(model: CompressedModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC + np.array(VERSION, _U4).tobytes())
    for payload in _sections(model).values():
        out.write(np.array(len(payload), _U8).tobytes())
        out.write(payload)
    return out.getvalue()


def write_model(model: CompressedModel, path: str | os.PathLike) -> int:
    """Write ``model`` to ``path``; returns the number of bytes written."""
    data = to_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


class _Reader:
    def __init__(self, buf: bytes, where: str):
        self.buf, self.pos, self.where = buf, 0, where

    def take(self, dtype, count: int = 1) -> np.ndarray:
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        if self.pos + size > len(self.buf):
            raise ContainerError(f"truncated {self.where} section")
        arr = np.frombuffer(self.buf, dtype, count, self.pos)
        self.pos += size
        return arr

    def scalar(self, dtype) -> int:
        return int(self.take(dtype)[0])

    def done(self):
        if self.pos != len(self.buf):
            raise ContainerError(f"{len(self.buf) - self.pos} trailing bytes in {self.where} section")


def from_bytes(data: bytes) -> CompressedModel:
    if len(data) < 8 or data[:4] != MAGIC:
        raise ContainerError("not a model container (bad magic)")
    version = int(np.frombuffer(data, _U4, 1, 4)[0])
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos, payloads = 8, {}
    for name in SECTIONS:
        if pos + 8 > len(data):
            raise ContainerError(f"missing {name} section")
        size = int(np.frombuffer(data, _U8, 1, pos)[0])
        pos += 8
        if pos + size > len(data):
            raise ContainerError(f"truncated {name} section")
        payloads[name] = _Reader(data[pos : pos + size], name)
        pos += size
    if pos != len(data):
        raise ContainerError("trailing bytes after the last section")

    r = payloads["vocabulary"]
    k, d = r.scalar(_U4), r.scalar(_U4)
    centroids = r.take("<f4", k * d).reshape(k, d).astype(np.float64)
    r.done()

    r = payloads["embedding"]
    bits, seed = r.scalar(_U4), r.scalar(_U8)
    projection = r.take("<f4", bits * d).reshape(bits, d).astype(np.float64)
    thresholds = r.take("<f4", k * bits).reshape(k, bits).astype(np.float64)
    r.done()

    r = payloads["points"]
    points = r.take(_POINT, r.scalar(_U8))
    r.done()
    if not np.array_equal(points["id"], np.arange(points.size)):
        raise ContainerError("point ids must be dense and in order")

    r = payloads["entries"]
    entries = r.take(_entry_dtype(bits // 8), r.scalar(_U8))
    r.done()

    r = payloads["visibility"]
    edges = r.take(_EDGE, r.scalar(_U8))
    r.done()

    vocab = Vocabulary.from_centroids(centroids)
    emb = HammingEmbedding.from_arrays(projection, thresholds, random_state=seed)
    graph = VisibilityGraph.from_edges(edges["point"].astype(np.int64), edges["image"].astype(np.int64), points.size)
    return CompressedModel.from_entries(
        points["position"].copy(),
        entries["point"].astype(np.int64),
        entries["word"].astype(np.int64),
        entries["signature"].copy(),
        graph,
        vocab,
        emb,
    )


def read_model(path: str | os.PathLike) -> CompressedModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


@dataclass(frozen=True)
class MemoryReport:
    """Byte breakdown of a model, with the entry table compared to a 128-byte descriptor baseline."""

    n_points: int
    n_entries: int
    n_edges: int
    bits: int
    signature_bytes_per_entry: int
    signature_payload: int
    entry_table: int
    baseline_entry_table: int
    sections: dict

    @property
    def entry_reduction(self) -> float:
        return self.baseline_entry_table / self.entry_table if self.entry_table else 0.0

    @property
    def total(self) -> int:
        return 8 + sum(8 + v for v in self.sections.values())

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_entries": self.n_entries,
            "n_edges": self.n_edges,
            "bits": self.bits,
            "signature_bytes_per_entry": self.signature_bytes_per_entry,
            "signature_payload": self.signature_payload,
            "entry_table": self.entry_table,
            "baseline_entry_table": self.baseline_entry_table,
            "entry_reduction": self.entry_reduction,
            "sections": dict(self.sections),
            "total": self.total,
        }

    def render(self) -> str:
        lines = [
            f"points {self.n_points}  entries {self.n_entries}  edges {self.n_edges}  bits {self.bits}",
            f"signature per entry        {self.signature_bytes_per_entry:>14d} B",
            f"signature payload          {self.signature_payload:>14d} B",
            f"entry table                {self.entry_table:>14d} B",
            f"baseline entry table       {self.baseline_entry_table:>14d} B",
            f"entry reduction            {self.entry_reduction:>14.2f} x",
        ]
        lines += [f"section {name:<18s} {size:>14d} B" for name, size in self.sections.items()]
        lines.append(f"container total            {self.total:>14d} B")
        return "\n".join(lines)


def entry_table_bytes(n_entries: int, bits: int) -> tuple[int, int, int]:
    """``(signature payload, entry table, baseline entry table)`` in bytes."""
    sig = n_entries * (bits // 8)
    return sig, n_entries * 2 * ID_BYTES + sig, n_entries * (2 * ID_BYTES + BASELINE_DESCRIPTOR_BYTES)


def memory_report(model: CompressedModel) -> MemoryReport:
    sections = {name: len(payload) for name, payload in _sections(model).items()}
    sig, table, base = entry_table_bytes(model.n_entries, model.bits)
    return MemoryReport(model.n_points, model.n_entries, model.graph.n_edges, model.bits, model.bits // 8, sig, table, base, sections)
