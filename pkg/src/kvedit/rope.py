"""Rotary position tables: forward, inverse, and relative re-rotation.

Pairing convention is half-split ("rotate_half"): component k pairs with
component k + head_dim/2, and the pair is rotated by angle pos * f_k with
f_k = base**(-2k/head_dim). Rotations compose additively (rotating by a
then b equals rotating by a+b) and are orthogonal, which is what lets a
cached key be moved to a new position with a single rotation by the
position delta - no knowledge of its absolute position required.

Angle tables are kept in float64; outputs preserve the input dtype.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ShapeError


class RotaryTable:
    """Precomputed cos/sin tables indexed [position][frequency].

    Covers positions 0..max_pos-1 and grows itself by doubling when a
    larger position is requested (never wraps silently). Negative
    positions are first-class: cos is even and sin is odd, so lookups use
    |pos| with the sine sign flipped. Growth is lock-protected; rotation
    itself is pure and safe to share across threads.
    """

    def __init__(self, head_dim: int, base: float = 10000.0, max_pos: int = 1024):
        if head_dim <= 0 or head_dim % 2 != 0:
            raise ShapeError(f"head_dim must be a positive even count, got {head_dim}")
        self.head_dim = head_dim
        self.base = float(base)
        self.freqs = self.base ** (-2.0 * np.arange(head_dim // 2) / head_dim)
        self._lock = threading.Lock()
        self.max_pos = 0
        self._grow(max(int(max_pos), 1))

    def _grow(self, limit: int) -> None:
        with self._lock:
            if limit <= self.max_pos:
                return
            new_max = max(self.max_pos, 1)
            while new_max < limit:
                new_max *= 2
            angles = np.arange(new_max)[:, None] * self.freqs[None, :]
            self.cos = np.cos(angles)
            self.sin = np.sin(angles)
            self.max_pos = new_max

    def _cos_sin(self, positions: np.ndarray):
        """cos/sin rows for signed positions, shape [len(positions), head_dim/2]."""
        positions = np.asarray(positions, dtype=np.int64)
        mag = np.abs(positions)
        top = int(mag.max(initial=0))
        if top >= self.max_pos:
            self._grow(top + 1)
        sign = np.where(positions < 0, -1.0, 1.0)
        return self.cos[mag], self.sin[mag] * sign[..., None]

    @staticmethod
    def _apply(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
        """Rotate half-split pairs of the last axis; cos/sin broadcast over it."""
        half = x.shape[-1] // 2
        lo, hi = x[..., :half], x[..., half:]
        out = np.empty_like(x)
        out[..., :half] = lo * cos - hi * sin
        out[..., half:] = hi * cos + lo * sin
        return out

    def rotate(self, v: np.ndarray, pos: int) -> np.ndarray:
        """Rotate one head-dim vector to (signed) position pos."""
        v = np.asarray(v)
        if v.shape != (self.head_dim,):
            raise ShapeError(f"rotate expects shape ({self.head_dim},), got {v.shape}")
        cos, sin = self._cos_sin(np.array([pos]))
        return self._apply(v, cos[0], sin[0]).astype(v.dtype, copy=False)

    def rerotate_delta(self, v: np.ndarray, delta: int) -> np.ndarray:
        """Move a key already rotated for some position p to position p+delta.

        Composition makes this a single rotate by delta; delta=0 returns
        the input bit-identically (the same-length-replacement case).
        """
        if delta == 0:
            return np.asarray(v)
        return self.rotate(v, delta)

    def rotate_block(self, x: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Rotate x[i, ..., :] to positions[i]; x is [n, ...heads..., head_dim]."""
        x = np.asarray(x)
        if x.shape[-1] != self.head_dim:
            raise ShapeError(f"rotate_block last dim {x.shape[-1]} != head_dim {self.head_dim}")
        cos, sin = self._cos_sin(positions)
        # align per-position cos/sin with any head axes between n and head_dim
        extra = x.ndim - 2
        shape = (len(cos),) + (1,) * extra + (self.head_dim // 2,)
        return self._apply(x, cos.reshape(shape), sin.reshape(shape)).astype(x.dtype, copy=False)

    def rotate_segment(self, x: np.ndarray, delta: int) -> np.ndarray:
        """Re-rotate every head-dim vector in x by one shared delta.

        The hot path of a cache update: one fused multiply over a whole
        retained segment, any leading shape. delta=0 is a bit-identical
        pass-through.
        """
        x = np.asarray(x)
        if x.shape[-1] != self.head_dim:
            raise ShapeError(f"rotate_segment last dim {x.shape[-1]} != head_dim {self.head_dim}")
        if delta == 0:
            return x
        cos, sin = self._cos_sin(np.array([delta]))
        return self._apply(x, cos[0], sin[0]).astype(x.dtype, copy=False)
