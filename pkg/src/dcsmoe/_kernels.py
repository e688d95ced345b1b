"""Numeric kernels, in two flavors.

Every hot kernel here has a plain-numpy implementation (suffix ``_np``) and a
numba-compiled twin (suffix ``_nb``).  The active set is chosen once at import
time from the ``DCSMOE_BACKEND`` environment variable:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require numba, fail loudly if missing
* ``numpy``: force the fallback path

The unsuffixed names (``succ_fill``, ``q_repair_all``, ...) are the dispatched
ones the rest of the package uses.  Both flavors stay importable so the
benchmark in ``benchmarks/bench_kernels.py`` can time them side by side.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "DCSMOE_BACKEND"

_requested = os.environ.get(_ENV_FLAG, "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"{_ENV_FLAG} must be one of auto|numba|numpy, got {_requested!r}"
    )

HAS_NUMBA = False
if _requested in ("auto", "numba"):
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise

ACTIVE_BACKEND = "numba" if HAS_NUMBA else "numpy"

NEG_INF = np.float32(-np.inf)


# ---------------------------------------------------------------------------
# synchronous-product successor enumeration
#
# A composed system is flattened to arrays: per-component transition tables are
# stacked into one dense (total_local_states, n_labels) int32 matrix `delta`
# (-1 where undefined), with `row_off[c]` locating component c's block.  Label
# ownership is CSR-encoded (owners_indptr/owners_comp); `owner_mask[c, l]`
# mirrors it as a boolean matrix for the vectorized fallback.
# ---------------------------------------------------------------------------


def _succ_fill_impl(q, delta, row_off, owners_indptr, owners_comp, owner_mask,
                    out_labels, out_locals):
    n_labels = delta.shape[1]
    n_comp = q.shape[0]
    count = 0
    for lab in range(n_labels):
        ok = True
        for t in range(owners_indptr[lab], owners_indptr[lab + 1]):
            c = owners_comp[t]
            if delta[row_off[c] + q[c], lab] < 0:
                ok = False
                break
        if ok:
            out_labels[count] = lab
            for c in range(n_comp):
                out_locals[count, c] = q[c]
            for t in range(owners_indptr[lab], owners_indptr[lab + 1]):
                c = owners_comp[t]
                out_locals[count, c] = delta[row_off[c] + q[c], lab]
            count += 1
    return count


def succ_fill_np(q, delta, row_off, owners_indptr, owners_comp, owner_mask,
                 out_labels, out_locals):
    """Fill enabled labels and successor local-state rows for state q.

    Returns the number of enabled transitions.  Labels come out in ascending
    id order.  A label fires only when every owning component defines a move.
    """
    rows = delta[row_off + q]                      # (n_comp, n_labels)
    ok = ((rows >= 0) | ~owner_mask).all(axis=0)
    labels = np.nonzero(ok)[0]
    m = labels.shape[0]
    out_labels[:m] = labels
    loc = out_locals[:m]
    loc[:] = q
    move = owner_mask[:, labels].T                 # (m, n_comp)
    vals = rows[:, labels].T
    loc[move] = vals[move]
    return m


if HAS_NUMBA:
    succ_fill_nb = njit(cache=True)(_succ_fill_impl)

succ_fill = succ_fill_nb if ACTIVE_BACKEND == "numba" else succ_fill_np


def _succ_stats_impl(block, delta, row_off, owners_indptr, owners_comp,
                     controllable, marked_flat, inv_labels, out):
    b = block.shape[0]
    n_comp = block.shape[1]
    n_labels = delta.shape[1]
    for s in range(b):
        n_en = 0
        n_unc = 0
        for lab in range(n_labels):
            ok = True
            for t in range(owners_indptr[lab], owners_indptr[lab + 1]):
                c = owners_comp[t]
                if delta[row_off[c] + block[s, c], lab] < 0:
                    ok = False
                    break
            if ok:
                n_en += 1
                if not controllable[lab]:
                    n_unc += 1
        n_marked = 0
        for c in range(n_comp):
            if marked_flat[row_off[c] + block[s, c]]:
                n_marked += 1
        out[s, 0] = 1.0 if n_marked == n_comp else 0.0
        out[s, 1] = n_marked / n_comp
        out[s, 2] = n_unc / n_en if n_en > 0 else 0.0
        out[s, 3] = n_en * inv_labels


def succ_stats_np(block, delta, row_off, owners_indptr, owners_comp,
                  controllable, marked_flat, inv_labels, out):
    """Per-state frontier-target statistics for a block of composite states.

    Columns: all-marked flag, marked fraction, uncontrollable fraction of the
    enabled labels (0 when none are enabled), branching |enabled|/|labels|.
    """
    owner_counts = np.diff(owners_indptr)
    rows = delta[row_off[None, :] + block]            # (b, n_comp, n_labels)
    # a label is enabled iff every owner defines a move
    defined = (rows >= 0).sum(axis=1)
    enabled = defined == owner_counts[None, :]
    n_en = enabled.sum(axis=1)
    n_unc = (enabled & ~controllable[None, :]).sum(axis=1)
    hit = marked_flat[row_off[None, :] + block]
    out[:, 0] = hit.all(axis=1)
    out[:, 1] = hit.mean(axis=1)
    with np.errstate(invalid="ignore"):
        out[:, 2] = np.where(n_en > 0, n_unc / np.maximum(n_en, 1), 0.0)
    out[:, 3] = n_en * inv_labels


if HAS_NUMBA:
    succ_stats_nb = njit(cache=True)(_succ_stats_impl)

succ_stats = succ_stats_nb if ACTIVE_BACKEND == "numba" else succ_stats_np


# ---------------------------------------------------------------------------
# mixture-policy evaluation over the frontier
#
# Exploration keeps, per frontier row, a feature vector x (12 entries) whose
# depth entry (index 6) and chaining entry (index 7) are left at zero; they
# depend on global per-step scalars (1/|discovered|, last expanded target) and
# are folded in here instead of being rewritten over the whole array each
# step.  `z` caches the hidden-layer preactivation of x *without* those two
# contributions, per expert.
#
# The full repair (every row, runs on each discovery step because the depth
# normalizer moves) deliberately ignores the chain entry so its inner loop
# stays branch-free and vectorizable; the few rows whose source matches the
# last expanded target are fixed up right after with rows_refresh, which
# computes the exact value including the chain contribution.
# ---------------------------------------------------------------------------


def _q_repair_all_impl(z, src_idx_f, inv_d, active, u, w2, b2, q_out):
    m = z.shape[0]
    n = active.shape[0]
    width = z.shape[2]
    for i in range(m):
        for r in range(n):
            if not active[r]:
                q_out[i, r] = NEG_INF
                continue
            f7 = src_idx_f[r] * inv_d
            acc = np.float32(0.0)
            for c in range(width):
                t = z[i, r, c] + u[i, c] * f7
                if t > 0.0:
                    acc += w2[i, c] * t
            q_out[i, r] = acc + b2[i]


def q_repair_all_np(z, src_idx_f, inv_d, active, u, w2, b2, q_out):
    """Recompute every active row's Q (chain entry excluded; see above).

    Inactive rows get -inf so a later exp() turns them into zero mass.
    """
    m = z.shape[0]
    n = active.shape[0]
    f7 = (src_idx_f[:n] * np.float32(inv_d))[:, None]      # (n, 1)
    act = active.astype(bool)
    for i in range(m):
        h = z[i, :n] + u[i][None, :] * f7
        np.maximum(h, np.float32(0.0), out=h)
        q = h @ w2[i] + b2[i]
        q[~act] = NEG_INF
        q_out[i, :n] = q


if HAS_NUMBA:
    q_repair_all_nb = njit(cache=True, fastmath=True)(_q_repair_all_impl)

q_repair_all = q_repair_all_nb if ACTIVE_BACKEND == "numba" else q_repair_all_np


def _rows_refresh_impl(rows, x, w1, b1, z, src_idx_f, src_state, inv_d,
                       last_tgt, active, u, v, w2, b2, q_out):
    m = z.shape[0]
    width = z.shape[2]
    n_feat = x.shape[1]
    for k in range(rows.shape[0]):
        r = rows[k]
        f7 = src_idx_f[r] * inv_d
        chain = src_state[r] == last_tgt
        for i in range(m):
            acc = np.float32(0.0)
            for c in range(width):
                s = b1[i, c]
                for f in range(n_feat):
                    s += w1[i, f, c] * x[r, f]
                z[i, r, c] = s
                t = s + u[i, c] * f7
                if chain:
                    t += v[i, c]
                if t > 0.0:
                    acc += w2[i, c] * t
            if active[r]:
                q_out[i, r] = acc + b2[i]
            else:
                q_out[i, r] = NEG_INF


def rows_refresh_np(rows, x, w1, b1, z, src_idx_f, src_state, inv_d,
                    last_tgt, active, u, v, w2, b2, q_out):
    """Rebuild z and Q for an explicit set of rows (new or feature-changed)."""
    m = z.shape[0]
    if rows.shape[0] == 0:
        return
    xr = x[rows]
    f7 = (src_idx_f[rows] * np.float32(inv_d))[:, None]
    chain_at = np.nonzero(src_state[rows] == last_tgt)[0]
    act = active[rows].astype(bool)
    for i in range(m):
        zi = xr @ w1[i] + b1[i][None, :]
        z[i, rows, :] = zi
        h = zi + u[i][None, :] * f7
        if chain_at.shape[0]:
            h[chain_at] += v[i][None, :]
        np.maximum(h, np.float32(0.0), out=h)
        q = h @ w2[i] + b2[i]
        q[~act] = NEG_INF
        q_out[i, rows] = q


if HAS_NUMBA:
    rows_refresh_nb = njit(cache=True)(_rows_refresh_impl)

rows_refresh = rows_refresh_nb if ACTIVE_BACKEND == "numba" else rows_refresh_np


def _mix_argmax_impl(e, coeff, active, n_rows):
    m = e.shape[0]
    best = -1
    best_p = -1.0
    for r in range(n_rows):
        if not active[r]:
            continue
        p = 0.0
        for i in range(m):
            p += coeff[i] * e[i, r]
        if p > best_p:
            best_p = p
            best = r
    return best


def mix_argmax_np(e, coeff, active, n_rows):
    """First index maximizing the g-weighted mixture over active rows."""
    act = active[:n_rows].astype(bool)
    if not act.any():
        return -1
    p = coeff @ e[:, :n_rows].astype(np.float64)
    p[~act] = -1.0
    return int(p.argmax())


if HAS_NUMBA:
    mix_argmax_nb = njit(cache=True)(_mix_argmax_impl)

mix_argmax = mix_argmax_nb if ACTIVE_BACKEND == "numba" else mix_argmax_np
