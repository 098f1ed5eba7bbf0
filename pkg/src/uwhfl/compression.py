"""Uplink compression: Top-K sparsification with an error-feedback buffer,
8-bit symmetric quantization, payload-bit accounting, and the packed wire
layout used for byte accounting and optional dumps."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

B_QUANT = 8  # bits per quantized value


@dataclass(frozen=True)
class CompressionConfig:
    """Sensor-uplink compression settings; fog tiers always ride full precision."""

    rho_s: float = 0.05
    quantization: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.rho_s <= 1.0:
            raise DomainError(f"sparsification ratio must be in (0, 1], got {self.rho_s}")


@dataclass
class ErrorBuffer:
    """Residual of coordinates dropped by sparsification, re-added next round."""

    residual: np.ndarray

    @classmethod
    def zeros(cls, d_params: int) -> "ErrorBuffer":
        return cls(np.zeros(d_params))


@dataclass
class CompressedUpdate:
    """Sparse quantized model update as it travels over the acoustic link."""

    indices: np.ndarray   # int, strictly increasing
    qvalues: np.ndarray   # int8 in [-127, 127]
    scale: float
    payload_bits: int
    n_samples: int
    d_params: int

    def dense(self) -> np.ndarray:
        out = np.zeros(self.d_params)
        out[self.indices] = dequantize(self.qvalues, self.scale)
        return out


def index_bits(d_params: int) -> int:
    """Bits needed to address one coordinate of a d-dimensional vector."""
    if d_params < 1:
        raise DomainError(f"d_params must be >= 1, got {d_params}")
    return math.ceil(math.log2(d_params)) if d_params > 1 else 0


def topk_count(rho_s: float, d_params: int) -> int:
    if not 0.0 < rho_s <= 1.0:
        raise DomainError(f"sparsification ratio must be in (0, 1], got {rho_s}")
    return math.ceil(rho_s * d_params)


def payload_bits(rho_s: float, d_params: int, b_q: int = B_QUANT, b_idx: int | None = None) -> int:
    """Uplink payload in bits: K coordinates, each one index plus one value.

    At full density (K = d) the vector is dense and the index stream is
    dropped, matching the full-precision accounting of the fog tiers.
    """
    k = topk_count(rho_s, d_params)
    if k == d_params:
        return k * b_q
    if b_idx is None:
        b_idx = index_bits(d_params)
    return k * (b_q + b_idx)


def upload_payload_bits(cfg: "CompressionConfig", d_params: int) -> int:
    """Payload of one sensor upload under the given compression settings."""
    b_q = B_QUANT if cfg.quantization else 32
    return payload_bits(cfg.rho_s, d_params, b_q)


def topk_ef(update: np.ndarray, buf: ErrorBuffer, rho_s: float) -> tuple[np.ndarray, ErrorBuffer]:
    """Error-feedback Top-K: add the carried residual, keep the K
    largest-magnitude coordinates (ties to the lower index), bank the rest.

    Returns the kept dense vector (exactly K non-zero slots) and the new
    buffer; the caller's buffer is not mutated.
    """
    update = np.asarray(update, dtype=float)
    if update.shape != buf.residual.shape:
        raise DomainError(
            f"update length {update.size} does not match buffer length {buf.residual.size}")
    k = topk_count(rho_s, update.size)
    v = update + buf.residual
    # argsort is stable, so ties resolve to the lower index after negation by magnitude.
    keep = np.sort(np.argsort(-np.abs(v), kind="stable")[:k])
    kept = np.zeros_like(v)
    kept[keep] = v[keep]
    return kept, ErrorBuffer(v - kept)


def quantize(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric linear 8-bit quantization: scale = max|v| / 127."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("cannot quantize an empty vector")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite values in quantizer input")
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return np.zeros(v.shape, dtype=np.int8), 0.0
    scale = vmax / 127.0
    q = np.clip(np.rint(v / scale), -127, 127).astype(np.int8)
    return q, scale


def dequantize(qvalues: np.ndarray, scale: float) -> np.ndarray:
    return np.asarray(qvalues, dtype=float) * scale


def compress(
    update: np.ndarray,
    buf: ErrorBuffer,
    rho_s: float,
    n_samples: int,
    quantization: bool = True,
) -> tuple[CompressedUpdate, ErrorBuffer]:
    """Full sensor-uplink pipeline: EF Top-K then optional 8-bit quantization.

    With quantization off the values ride at full precision and the payload
    is accounted at 32 bits per value. The EF buffer only absorbs the
    sparsification residual; quantization error is not fed back.
    """
    kept, buf_new = topk_ef(update, buf, rho_s)
    idx = np.flatnonzero(kept)
    # topk_ef keeps exactly K slots but some kept values can be exactly zero;
    # recover the full index set so K stays fixed for payload accounting.
    k = topk_count(rho_s, update.size)
    if idx.size < k:
        keep = np.sort(np.argsort(-np.abs(np.asarray(update) + buf.residual), kind="stable")[:k])
        idx = keep
    vals = kept[idx]
    b_idx = index_bits(update.size) if k < update.size else 0
    if quantization:
        q, scale = quantize(vals)
        bits = idx.size * (B_QUANT + b_idx)
    else:
        q, scale = vals, 1.0
        bits = idx.size * (32 + b_idx)
    cu = CompressedUpdate(
        indices=idx.astype(np.int64),
        qvalues=q,
        scale=scale,
        payload_bits=bits,
        n_samples=n_samples,
        d_params=update.size,
    )
    return cu, buf_new


def decompress(cu: CompressedUpdate, quantization: bool = True) -> np.ndarray:
    """Reconstruct the dense update the aggregator works with."""
    out = np.zeros(cu.d_params)
    if quantization:
        out[cu.indices] = dequantize(cu.qvalues, cu.scale)
    else:
        out[cu.indices] = cu.qvalues
    return out


def pack_wire(cu: CompressedUpdate) -> bytes:
    """Wire layout: header {scale: f32, K: u32}, then K records of
    (index: b_idx bits, qvalue: 8 bits), bit-packed big-endian."""
    b_idx = index_bits(cu.d_params)
    out = bytearray(struct.pack("<fI", float(cu.scale), cu.indices.size))
    acc = 0
    nbits = 0
    for idx, q in zip(cu.indices, np.asarray(cu.qvalues, dtype=np.int64)):
        acc = (acc << b_idx) | int(idx)
        acc = (acc << 8) | (int(q) & 0xFF)
        nbits += b_idx + 8
        while nbits >= 8:
            nbits -= 8
            out.append((acc >> nbits) & 0xFF)
            acc &= (1 << nbits) - 1
    if nbits:
        out.append((acc << (8 - nbits)) & 0xFF)
    return bytes(out)


def unpack_wire(data: bytes, d_params: int) -> CompressedUpdate:
    scale, k = struct.unpack_from("<fI", data, 0)
    b_idx = index_bits(d_params)
    indices = np.empty(k, dtype=np.int64)
    qvalues = np.empty(k, dtype=np.int8)
    acc = int.from_bytes(data[8:], "big")
    total_bits = (len(data) - 8) * 8
    pos = 0
    for i in range(k):
        shift = total_bits - pos - b_idx
        indices[i] = (acc >> shift) & ((1 << b_idx) - 1)
        pos += b_idx
        shift = total_bits - pos - 8
        raw = (acc >> shift) & 0xFF
        qvalues[i] = raw - 256 if raw >= 128 else raw
        pos += 8
    return CompressedUpdate(
        indices=indices,
        qvalues=qvalues,
        scale=float(scale),
        payload_bits=k * (B_QUANT + b_idx),
        n_samples=0,
        d_params=d_params,
    )
