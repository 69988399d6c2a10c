"""Per-layer, per-head key/value storage with explicit position bookkeeping.

Layout is a pair of float32 arrays [n_layers, capacity, n_heads, head_dim]
with a shared logical length; position p of the post-edit sequence lives at
row p, always contiguous 0..logical_len-1. Keys are stored post-rotation
(position baked in), values unrotated.

`positionally_consistent` records whether stored key rotations actually
match the row indices. Every strategy restores it except conflict-fast
splicing, which deliberately leaves stale rotations behind and must say so
for diagnostics honesty.

A cache has a single owner at a time; there is no internal locking.
"""

from __future__ import annotations

import numpy as np

from .errors import CacheError

F32 = np.float32


class KvCache:
    def __init__(self, keys: np.ndarray, values: np.ndarray, logical_len: int,
                 positionally_consistent: bool = True):
        self.keys = keys
        self.values = values
        self.logical_len = int(logical_len)
        self.positionally_consistent = positionally_consistent

    @classmethod
    def empty(cls, n_layers: int, n_heads: int, head_dim: int, capacity: int = 64) -> "KvCache":
        shape = (n_layers, max(capacity, 1), n_heads, head_dim)
        return cls(np.zeros(shape, dtype=F32), np.zeros(shape, dtype=F32), 0)

    # -- shape/introspection ------------------------------------------------

    @property
    def n_layers(self) -> int:
        return self.keys.shape[0]

    @property
    def n_heads(self) -> int:
        return self.keys.shape[2]

    @property
    def head_dim(self) -> int:
        return self.keys.shape[3]

    def check_model(self, n_layers: int, n_heads: int, head_dim: int) -> None:
        got = (self.n_layers, self.n_heads, self.head_dim)
        want = (n_layers, n_heads, head_dim)
        if got != want:
            raise CacheError(f"cache shape {got} does not match model (L, H, head_dim) {want}")

    def copy(self) -> "KvCache":
        out = KvCache(self.keys[:, :self.logical_len].copy(),
                      self.values[:, :self.logical_len].copy(),
                      self.logical_len, self.positionally_consistent)
        return out

    # -- views --------------------------------------------------------------

    def layer_keys(self, layer: int, upto: int | None = None) -> np.ndarray:
        return self.keys[layer, :self.logical_len if upto is None else upto]

    def layer_values(self, layer: int, upto: int | None = None) -> np.ndarray:
        return self.values[layer, :self.logical_len if upto is None else upto]

    def segment(self, start: int, end: int):
        """Copy of (keys, values) over positions [start, end), all layers."""
        if not (0 <= start <= end <= self.logical_len):
            raise CacheError(f"segment [{start}, {end}) out of range for length {self.logical_len}")
        return self.keys[:, start:end].copy(), self.values[:, start:end].copy()

    # -- mutation -----------------------------------------------------------

    def _ensure_capacity(self, needed: int) -> None:
        cap = self.keys.shape[1]
        if needed <= cap:
            return
        while cap < needed:
            cap *= 2
        grow = lambda a: np.concatenate(
            [a, np.zeros((a.shape[0], cap - a.shape[1]) + a.shape[2:], dtype=F32)], axis=1)
        self.keys = grow(self.keys)
        self.values = grow(self.values)

    def reserve(self, n: int) -> int:
        """Reserve n rows for a block encode; returns the start row.

        logical_len is bumped only by commit(), so the per-layer length
        invariant holds between operations even though layers are filled
        one at a time during the forward pass.
        """
        self._ensure_capacity(self.logical_len + n)
        return self.logical_len

    def write_block(self, layer: int, start: int, k: np.ndarray, v: np.ndarray) -> None:
        n = k.shape[0]
        self.keys[layer, start:start + n] = k
        self.values[layer, start:start + n] = v

    def commit(self, n: int) -> None:
        self.logical_len += n

    def append_segment(self, k_seg: np.ndarray, v_seg: np.ndarray) -> None:
        """Splice a retained segment [L, m, H, d] onto the end of every layer."""
        m = k_seg.shape[1]
        if k_seg.shape != (self.n_layers, m, self.n_heads, self.head_dim):
            raise CacheError(f"segment shape {k_seg.shape} does not fit cache "
                             f"(L={self.n_layers}, H={self.n_heads}, d={self.head_dim})")
        self._ensure_capacity(self.logical_len + m)
        self.keys[:, self.logical_len:self.logical_len + m] = k_seg
        self.values[:, self.logical_len:self.logical_len + m] = v_seg
        self.logical_len += m
