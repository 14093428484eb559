"""Compression operators for gossip messages and their byte accounting.

Byte costs follow a fixed accounting convention:

* dense: 4 bytes per entry (32-bit float)
* top-k: 6 bytes per kept entry (32-bit value + 16-bit index)
* uniform quantization: ``ceil(bits * d / 8)`` bytes, scale excluded

Payloads keep their values in double precision so the simulation itself is
not perturbed by the wire format; only the accounting assumes 32-bit values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CompressionError",
    "CompressorSpec",
    "CompressedPayload",
    "compress",
    "decompress",
    "payload_bytes",
    "bytes_for_dim",
    "parse_compressor",
    "IDENTITY",
]

KINDS = ("identity", "top_k", "uniform_quant")


class CompressionError(ValueError):
    pass


@dataclass(frozen=True)
class CompressorSpec:
    kind: str = "identity"
    sparsity: float = 0.0
    bits: int = 8
    # top-k only: apply the selection within each consecutive block of these
    # lengths (one per parameter tensor) instead of over the whole vector
    segments: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(int(n) for n in self.segments))
        if self.segments and (self.kind != "top_k" or min(self.segments) < 1):
            raise CompressionError("segments apply to top-k only and must be positive lengths")
        if self.kind not in KINDS:
            raise CompressionError(f"unknown compressor kind {self.kind!r}")
        if self.kind == "top_k" and not 0.0 <= self.sparsity < 1.0:
            raise CompressionError(f"top-k sparsity must be in [0, 1), got {self.sparsity}")
        if self.kind == "uniform_quant" and not 1 <= self.bits <= 32:
            raise CompressionError(f"quantization bits must be in [1, 32], got {self.bits}")

    def keep_count(self, d: int) -> int:
        """Entries kept by top-k on a ``d``-vector (at least one per block)."""
        if self.segments:
            self._check_segments(d)
            return sum(self._keep(n) for n in self.segments)
        return self._keep(d)

    def _keep(self, d: int) -> int:
        return max(1, int(round((1.0 - self.sparsity) * d)))

    def _check_segments(self, d: int) -> None:
        if sum(self.segments) != d:
            raise CompressionError(f"segments sum to {sum(self.segments)} but the vector has {d} entries")

    def __str__(self) -> str:
        if self.kind == "top_k":
            return f"topk:{self.sparsity:g}"
        if self.kind == "uniform_quant":
            return f"quant:{self.bits}"
        return "none"


IDENTITY = CompressorSpec()


@dataclass(frozen=True)
class CompressedPayload:
    """Wire form of one compressed message.

    Exactly one body is populated: ``dense`` (identity), ``indices``/``values``
    (top-k) or ``codes``/``scale``/``bits`` (quantized).
    """

    dim: int
    dense: np.ndarray | None = None
    indices: np.ndarray | None = None
    values: np.ndarray | None = None
    codes: np.ndarray | None = None
    scale: float = 0.0
    bits: int = 0

    @property
    def kind(self) -> str:
        if self.dense is not None:
            return "identity"
        if self.indices is not None:
            return "top_k"
        return "uniform_quant"

    def tobytes(self) -> bytes:
        """Canonical serialization, used to check that compression is deterministic."""
        parts = [self.kind.encode(), np.int64(self.dim).tobytes()]
        for arr in (self.dense, self.indices, self.values, self.codes):
            if arr is not None:
                parts.append(np.ascontiguousarray(arr).tobytes())
        parts.append(np.float64(self.scale).tobytes())
        parts.append(np.int64(self.bits).tobytes())
        return b"".join(parts)


def _check_input(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise CompressionError("compress needs a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise CompressionError("compress got non-finite values")
    return v


def top_k_indices(v: np.ndarray, k: int) -> np.ndarray:
    """Ascending indices of the ``k`` largest ``|v_i|``; magnitude ties go to the lower index."""
    a = np.abs(v)
    d = a.size
    if k >= d:
        return np.arange(d, dtype=np.int64)
    threshold = np.partition(a, d - k)[d - k]
    above = np.flatnonzero(a > threshold)
    at = np.flatnonzero(a == threshold)[: k - above.size]
    return np.sort(np.concatenate([above, at])).astype(np.int64)


def compress(spec: CompressorSpec, v) -> CompressedPayload:
    v = _check_input(v)
    d = v.size
    if spec.kind == "identity":
        return CompressedPayload(dim=d, dense=v.copy())
    if spec.kind == "top_k":
        if spec.segments:
            spec._check_segments(d)
            starts = np.cumsum((0,) + spec.segments[:-1])
            idx = np.concatenate(
                [s + top_k_indices(v[s : s + n], spec._keep(n)) for s, n in zip(starts, spec.segments)]
            )
        else:
            idx = top_k_indices(v, spec.keep_count(d))
        return CompressedPayload(dim=d, indices=idx, values=v[idx].copy())
    levels = (1 << spec.bits) - 1
    s = float(np.max(np.abs(v)))
    if s == 0.0:
        codes = np.zeros(d, dtype=np.int64)
    else:
        codes = np.rint((v + s) / (2.0 * s) * levels)
        codes = np.clip(codes, 0, levels).astype(np.int64)
    return CompressedPayload(dim=d, codes=codes, scale=s, bits=spec.bits)


def decompress(p: CompressedPayload) -> np.ndarray:
    if p.dense is not None:
        if p.dense.shape != (p.dim,):
            raise CompressionError(f"dense payload has {p.dense.size} entries, expected {p.dim}")
        return p.dense.copy()
    if p.indices is not None:
        idx = np.asarray(p.indices)
        if idx.size and (idx.min() < 0 or idx.max() >= p.dim):
            raise CompressionError(f"sparse index out of range for dim {p.dim}")
        if np.any(np.diff(idx) <= 0):
            raise CompressionError("sparse indices must be strictly increasing")
        if len(p.values) != idx.size:
            raise CompressionError("sparse payload has mismatched index/value counts")
        out = np.zeros(p.dim)
        out[idx] = p.values
        return out
    if p.codes is None:
        raise CompressionError("payload has no body")
    codes = np.asarray(p.codes)
    levels = (1 << p.bits) - 1
    if codes.shape != (p.dim,):
        raise CompressionError(f"quantized payload has {codes.size} codes, expected {p.dim}")
    if codes.size and (codes.min() < 0 or codes.max() > levels):
        raise CompressionError(f"quantization code outside [0, {levels}]")
    s = p.scale
    return codes / levels * (2.0 * s) - s


def bytes_for_dim(spec: CompressorSpec, d: int) -> int:
    """Wire cost of one message of a ``d``-vector under ``spec``."""
    if spec.kind == "identity":
        return 4 * d
    if spec.kind == "top_k":
        return 6 * spec.keep_count(d)
    return math.ceil(spec.bits * d / 8)


def payload_bytes(p: CompressedPayload) -> int:
    if p.dense is not None:
        return 4 * p.dim
    if p.indices is not None:
        return 6 * len(p.indices)
    return math.ceil(p.bits * p.dim / 8)


def parse_compressor(text: str) -> CompressorSpec:
    """``none``, ``topk:F`` (fraction dropped) or ``quant:B`` (bits)."""
    text = text.strip().lower()
    if text in ("none", "identity", ""):
        return IDENTITY
    name, _, arg = text.partition(":")
    try:
        if name == "topk":
            return CompressorSpec("top_k", sparsity=float(arg))
        if name == "quant":
            return CompressorSpec("uniform_quant", bits=int(arg))
    except ValueError:
        raise CompressionError(f"bad compressor argument in {text!r}") from None
    raise CompressionError(f"unknown compressor {text!r}; expected none, topk:F or quant:B")
