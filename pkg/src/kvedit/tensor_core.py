"""Dense numeric kernels for the toy decoder.

A "matrix" here is a 2-D C-contiguous float32 ndarray; vectors are 1-D
float32. All exposed operations validate shapes and guarantee finite
outputs (NumericError otherwise). The contracts are defined on the naive
semantics; numpy is just the vectorized backend.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

F32 = np.float32

# tanh-based GeLU constants
_GELU_C = np.float32(np.sqrt(2.0 / np.pi))
_GELU_A = np.float32(0.044715)


def matrix(data) -> np.ndarray:
    """Coerce nested lists / arrays to a 2-D C-contiguous float32 matrix."""
    m = np.ascontiguousarray(data, dtype=F32)
    if m.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got ndim={m.ndim}")
    return m


def check_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains NaN/Inf")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product; raises ShapeError naming both shapes."""
    a = np.asarray(a, dtype=F32)
    b = np.asarray(b, dtype=F32)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row softmax over the last axis, max-subtracted for stability.

    No validation: this is the hot path shared with masked attention,
    where -inf-like sentinel entries are expected to map to zero mass.
    """
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted, dtype=F32)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_row(v: np.ndarray) -> np.ndarray:
    """Softmax of a single vector: positive entries summing to 1."""
    v = np.asarray(v, dtype=F32)
    if v.ndim != 1 or v.size == 0:
        raise ArgumentError(f"softmax_row needs a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ArgumentError("softmax_row input contains NaN/Inf")
    return check_finite(softmax_rows(v), "softmax result")


def rms_norm_rows(x: np.ndarray, gain: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """RMS-normalize each row of x (last axis) and scale by gain."""
    ms = np.mean(np.square(x, dtype=F32), axis=-1, keepdims=True)
    return (x / np.sqrt(ms + F32(eps))) * gain


def rms_norm(v: np.ndarray, gain: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """out_k = gain_k * v_k / sqrt(mean(v^2) + eps).

    eps=0 is accepted for exact-value checks on nonzero inputs; the
    decoder itself always passes a positive eps.
    """
    v = np.asarray(v, dtype=F32)
    gain = np.asarray(gain, dtype=F32)
    if v.ndim != 1 or v.shape != gain.shape:
        raise ShapeError(f"rms_norm length mismatch: v {v.shape} vs gain {gain.shape}")
    if eps < 0:
        raise ArgumentError(f"rms_norm eps must be >= 0, got {eps}")
    return check_finite(rms_norm_rows(v, gain, eps), "rms_norm result")


def gelu(x: np.ndarray) -> np.ndarray:
    """GeLU, tanh approximation (keeps the kernel scipy-free)."""
    x = np.asarray(x, dtype=F32)
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return F32(0.5) * x * (F32(1.0) + np.tanh(inner))


def embedding_lookup(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Gather rows of an embedding matrix for a vector of token ids."""
    ids = np.asarray(ids)
    if np.any(ids < 0) or np.any(ids >= table.shape[0]):
        bad = int(ids[(ids < 0) | (ids >= table.shape[0])][0])
        raise ArgumentError(f"token id {bad} out of vocabulary [0, {table.shape[0]})")
    return table[ids]
