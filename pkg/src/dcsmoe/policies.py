"""Greedy frontier selection from a gated mixture of Q-experts.

The policy keeps, per expert, a cached hidden-layer preactivation for every
frontier row (excluding the two evaluation-time feature entries: depth
normalization and last-target chaining) and a cached Q row.  After each
engine step it consumes the engine's dirty-row chunks and repairs exactly
what changed:

  * discovery steps shift the depth normalizer 1/|discovered| for every
    row, so a bulk branch-free repair recomputes all Q from the cached
    preactivations; rows carrying the chain entry are then fixed up
    exactly,
  * non-discovery steps only refresh the dirty rows (feature edits,
    deactivations) plus the rows whose chain bit flipped when the last
    expanded target moved.

Selection computes each expert's Boltzmann weights over its own Q row,
normalizes per expert, mixes with the fixed gate coefficients, and takes
the first row attaining the maximum mixture mass.  The gate vector is
supplied at construction and never mutated afterwards.

The exp argument is clamped at -87 (just above float32 exp underflow), so
hopeless rows contribute ~1.6e-38 mass instead of subnormals, which are
pathologically slow to stream through.  Deactivated rows keep Q = -inf and
are clamped to the same floor; they are excluded from the argmax by the
active mask, and their phantom contribution to a normalizer of any live
frontier is below 1e-30 relative, far under float64 noise.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .engine import Exploration
from .qnet import HIDDEN, N_FEATURES, QNetwork

EXP_FLOOR = np.float32(-87.0)


def stack_experts(nets: list[QNetwork]) -> tuple[np.ndarray, ...]:
    """Pack expert parameters into the float32 layout the kernels expect.

    Returns (w1, b1, u, v, w2, b2) with w1 of shape (m, features, hidden);
    u and v are the rows of w1 multiplying the depth and chain entries.
    """
    m = len(nets)
    w1 = np.empty((m, N_FEATURES, HIDDEN), dtype=np.float32)
    b1 = np.empty((m, HIDDEN), dtype=np.float32)
    w2 = np.empty((m, HIDDEN), dtype=np.float32)
    b2 = np.empty(m, dtype=np.float32)
    for i, net in enumerate(nets):
        w1[i] = net.w1.T
        b1[i] = net.b1
        w2[i] = net.w2
        b2[i] = net.b2
    u = np.ascontiguousarray(w1[:, 6, :])
    v = np.ascontiguousarray(w1[:, 7, :])
    return w1, b1, u, v, w2, b2


class ExpertMixturePolicy:
    """Expansion policy for one or more experts under fixed gate weights.

    With a single expert and g = [1.0] this is plain greedy selection from
    that expert's Boltzmann distribution (the argmax of a softmax is the
    argmax of Q, but the mixture path is kept identical for any m so that
    degenerate gates reproduce single-expert runs bit for bit).
    """

    def __init__(self, nets: list[QNetwork], g=None,
                 temperature: float = 2.0) -> None:
        if not nets:
            raise ValueError("need at least one expert")
        self.m = len(nets)
        (self._w1, self._b1, self._u, self._v,
         self._w2, self._b2) = stack_experts(nets)
        if g is None:
            g = np.full(self.m, 1.0 / self.m)
        self.g = np.asarray(g, dtype=np.float64).copy()
        if self.g.shape != (self.m,):
            raise ValueError("gate vector length must match expert count")
        self.temperature = float(temperature)
        self._invT = np.float32(1.0 / self.temperature)
        self._cap = 0
        self._z = np.empty((0, 0, 0), dtype=np.float32)
        self._q = np.empty((0, 0), dtype=np.float32)
        self._e = np.empty((0, 0), dtype=np.float32)

    # -- cache maintenance -------------------------------------------------

    def _ensure_cap(self, cap: int) -> None:
        if cap == self._cap:
            return
        z = np.zeros((self.m, cap, HIDDEN), dtype=np.float32)
        q = np.full((self.m, cap), _kernels.NEG_INF, dtype=np.float32)
        old = min(self._cap, cap)
        if old:
            z[:, :old] = self._z[:, :old]
            q[:, :old] = self._q[:, :old]
        self._z, self._q = z, q
        self._e = np.empty((self.m, cap), dtype=np.float32)
        self._cap = cap

    def reset(self, h: Exploration, seed: int) -> None:
        # seed is part of the policy protocol; selection is deterministic
        self._ensure_cap(h.X.shape[0])
        self._n_rows = 0
        self._n_disc = h.n_discovered
        self._last_tgt = -1
        self._dirty_pos = len(h.dirty)
        if h.n_rows:
            rows = np.arange(h.n_rows, dtype=np.int64)
            self._refresh(h, rows)
        self._n_rows = h.n_rows
        self._last_tgt = int(h.last_tgt)

    def _refresh(self, h: Exploration, rows: np.ndarray) -> None:
        _kernels.rows_refresh(
            rows, h.X, self._w1, self._b1, self._z, h.row_src_f, h.row_src,
            np.float32(1.0 / h.n_discovered), np.int32(h.last_tgt),
            h.row_active, self._u, self._v, self._w2, self._b2, self._q)

    def _sync(self, h: Exploration) -> None:
        self._ensure_cap(h.X.shape[0])
        n = h.n_rows
        parts = h.dirty[self._dirty_pos:]
        self._dirty_pos = len(h.dirty)
        if n > self._n_rows:
            parts.append(np.arange(self._n_rows, n, dtype=np.int64))
        cur_last = int(h.last_tgt)
        if cur_last >= 0 and h.source_rows[cur_last]:
            parts.append(np.asarray(h.source_rows[cur_last], dtype=np.int64))
        if self._last_tgt >= 0 and self._last_tgt != cur_last:
            prev = h.source_rows[self._last_tgt]
            if prev:
                parts.append(np.asarray(prev, dtype=np.int64))
        if h.n_discovered != self._n_disc:
            # depth normalizer moved: every cached Q is stale
            _kernels.q_repair_all(
                self._z, h.row_src_f, np.float32(1.0 / h.n_discovered),
                h.row_active[:n], self._u, self._w2, self._b2, self._q)
        if parts:
            self._refresh(h, np.unique(np.concatenate(parts)))
        self._n_rows = n
        self._n_disc = h.n_discovered
        self._last_tgt = cur_last

    # -- selection ----------------------------------------------------------

    def select(self, h: Exploration) -> int:
        self._sync(h)
        n = h.n_rows
        q = self._q[:, :n]
        e = self._e[:, :n]
        mx = q.max(axis=1)
        np.subtract(q, mx[:, None], out=e)
        e *= self._invT
        np.maximum(e, EXP_FLOOR, out=e)
        np.exp(e, out=e)
        z_norm = e.sum(axis=1, dtype=np.float64)
        coeff = self.g / z_norm
        row = _kernels.mix_argmax(self._e, coeff, h.row_active, n)
        if row < 0:
            raise ValueError("no expandable frontier transitions")
        return int(row)
