"""Frontier-transition featurization, schema version "at-v1".

Twelve entries, all in [0, 1]:

  f1  transition label is controllable
  f2  target state already discovered
  f3  target state marked (every component locally marked)
  f4  target verdict is Winning (0 while undiscovered or Unknown)
  f5  target verdict is Losing
  f6  fraction of components locally marked at the target
  f7  normalized source depth: insertion_index(source) / |discovered|
  f8  source is the target of the last expanded transition
  f9  fraction of uncontrollable labels among enabled(target); 0 when none
  f10 |enabled(target)| / |alphabet|
  f11 pending_count(source) / |enabled(source)|
  f12 constant 1 (bias)

This module is the reference implementation: it recomputes a vector from
scratch through the public system interface.  The engine maintains the same
values incrementally in its row matrix (f7/f8 folded in at evaluation time);
the two paths are held together by parity tests.  Ratio entries are computed
in float32 with the same operation shapes the incremental path uses
(index * reciprocal for f7 and f10, direct division for f9 and f11).
"""

from __future__ import annotations

import numpy as np

from .engine import Exploration, FrontierTransition, LOSE, WIN

FEATURE_VERSION = "at-v1"
N_FEATURES = 12


def extract_features(h: Exploration, ft: FrontierTransition,
                     feature_version: str = FEATURE_VERSION) -> np.ndarray:
    """Featurize one frontier transition; no side effects on the history."""
    if feature_version != FEATURE_VERSION:
        raise ValueError(
            f"feature version mismatch: got {feature_version!r}, "
            f"this featurizer implements {FEATURE_VERSION!r}")
    cs = h.cs
    x = np.zeros(N_FEATURES, dtype=np.float32)
    x[0] = 1.0 if ft.label.controllable else 0.0

    tgt_locs = np.asarray(ft.target, dtype=np.int32)
    tgt = h.state_index.get(tgt_locs.tobytes(), -1)
    x[1] = 1.0 if tgt >= 0 else 0.0
    hit = cs.marked_flat[cs.row_off + tgt_locs]
    x[2] = 1.0 if hit.all() else 0.0
    if tgt >= 0:
        if h.verdict[tgt] == WIN:
            x[3] = 1.0
        elif h.verdict[tgt] == LOSE:
            x[4] = 1.0
    x[5] = np.float32(hit.mean())

    src = h.state_index[np.asarray(ft.source, dtype=np.int32).tobytes()]
    x[6] = np.float32(src) * np.float32(1.0 / h.n_discovered)
    x[7] = 1.0 if src == int(h.last_tgt) else 0.0

    labels, _ = cs.successors(tgt_locs)
    n_en = len(labels)
    if n_en:
        n_unc = int((~cs.controllable[labels]).sum())
        x[8] = np.float32(n_unc / n_en)
    x[9] = np.float32(n_en * np.float32(1.0 / cs.n_labels))
    x[10] = np.float32(h.pending[src]) / np.float32(h.n_enabled[src])
    x[11] = 1.0
    return x


def materialize_rows(h: Exploration, rows: np.ndarray) -> np.ndarray:
    """Feature matrix for the given frontier rows with f7/f8 filled in.

    The engine's row matrix keeps those two columns at zero; this produces
    the concrete vectors (used for replay storage and direct evaluation).
    """
    x = h.X[rows].copy()
    x[:, 6] = h.row_src_f[rows] * np.float32(1.0 / h.n_discovered)
    x[:, 7] = h.row_src[rows] == h.last_tgt
    return x
