"""Compare the compiled kernels against their pure-numpy fallbacks.

Data shapes come from a real exploration: the script grows a frontier on a
landing instance with a random policy, then times each kernel flavor on
that live state.  Run as

    python3 benchmarks/bench_kernels.py [--n 4 --k 4 --steps 4000 ...]

The package-level backend flag (DCSMOE_BACKEND) does not matter here; both
flavors are imported directly.
"""

import argparse
import statistics
import time

import numpy as np

from dcsmoe import _kernels
from dcsmoe.atgen import build_at
from dcsmoe.engine import RandomPolicy, UNKNOWN, init_exploration
from dcsmoe.policies import stack_experts
from dcsmoe.qnet import QNetwork


def grow_frontier(n, k, steps):
    sys = build_at(n, k)
    h = init_exploration(sys)
    pol = RandomPolicy()
    pol.reset(h, 0)
    while h.steps < steps and h.n_active > 0 \
            and h.verdict[h.s0] == UNKNOWN:
        h.expand(pol.select(h))
    return h


def bench(fn, args, iters, warmup=3):
    for _ in range(warmup):
        fn(*args)
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn(*args)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--experts", type=int, default=3)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--refresh-rows", type=int, default=256)
    args = ap.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba unavailable: only the numpy flavors will run")

    print(f"growing AT({args.n},{args.k}) frontier "
          f"({args.steps} expansions)...")
    h = grow_frontier(args.n, args.k, args.steps)
    cs = h.cs
    n = h.n_rows
    m = args.experts
    print(f"rows: {n}  discovered: {h.n_discovered}  experts: {m}")

    nets = [QNetwork.init(np.random.default_rng(s)) for s in range(m)]
    w1, b1, u, v, w2, b2 = stack_experts(nets)
    z = np.zeros((m, n, 16), dtype=np.float32)
    q = np.full((m, n), _kernels.NEG_INF, dtype=np.float32)
    inv_d = np.float32(1.0 / h.n_discovered)
    rng = np.random.default_rng(0)
    all_rows = np.arange(n, dtype=np.int64)
    some_rows = np.sort(rng.choice(n, size=min(args.refresh_rows, n),
                                   replace=False)).astype(np.int64)
    _kernels.rows_refresh_np(all_rows, h.X, w1, b1, z, h.row_src_f,
                             h.row_src, inv_d, np.int32(h.last_tgt),
                             h.row_active, u, v, w2, b2, q)
    e = np.exp(np.maximum((q - q.max(axis=1, keepdims=True))
                          * np.float32(0.5), np.float32(-87.0)))
    coeff = np.full(m, 1.0 / m) / e.sum(axis=1, dtype=np.float64)

    qstate = np.asarray(h.state_tuple(0), dtype=np.int32)
    block = np.stack([np.asarray(h.state_tuple(i), dtype=np.int32)
                      for i in range(min(64, h.n_discovered))])
    stats_out = np.empty((block.shape[0], 4), dtype=np.float32)
    labels_buf = np.empty(cs.n_labels, dtype=np.int32)
    locals_buf = np.empty((cs.n_labels, cs.n_comp), dtype=np.int32)

    cases = [
        ("succ_fill", "per call (1 state)",
         (qstate, cs.delta, cs.row_off, cs.owners_indptr, cs.owners_comp,
          cs.owner_mask, labels_buf, locals_buf)),
        ("succ_stats", f"per call ({block.shape[0]} states)",
         (block, cs.delta, cs.row_off, cs.owners_indptr, cs.owners_comp,
          cs.controllable, cs.marked_flat, h.inv_labels, stats_out)),
        ("q_repair_all", f"per call ({m}x{n} rows)",
         (z, h.row_src_f, inv_d, h.row_active[:n], u, w2, b2, q)),
        ("rows_refresh", f"per call ({some_rows.shape[0]} rows)",
         (some_rows, h.X, w1, b1, z, h.row_src_f, h.row_src, inv_d,
          np.int32(h.last_tgt), h.row_active, u, v, w2, b2, q)),
        ("mix_argmax", f"per call ({m}x{n})",
         (e, coeff, h.row_active, n)),
    ]

    print(f"{'kernel':<14} {'numba ms':>10} {'numpy ms':>10} "
          f"{'speedup':>8}   shape")
    for name, shape, call_args in cases:
        np_fn = getattr(_kernels, name + "_np")
        t_np = bench(np_fn, call_args, args.iters)
        if _kernels.HAS_NUMBA:
            nb_fn = getattr(_kernels, name + "_nb")
            t_nb = bench(nb_fn, call_args, args.iters)
            ratio = t_np / t_nb if t_nb > 0 else float("inf")
            print(f"{name:<14} {t_nb:>10.4f} {t_np:>10.4f} "
                  f"{ratio:>7.1f}x   {shape}")
        else:
            print(f"{name:<14} {'-':>10} {t_np:>10.4f} {'-':>8}   {shape}")


if __name__ == "__main__":
    main()
