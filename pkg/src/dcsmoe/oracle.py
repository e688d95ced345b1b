"""Monolithic reference solver over the fully enumerated composition.

Computes exact winning/losing verdicts as the least fixpoint of the
reachability game: the controller picks among controllable events, the
environment among uncontrollable ones, and winning means the controller
can force a marked state.  Intended for tests and small instances; the
exploration engine must agree with it on every verdict it issues.
"""

from __future__ import annotations

import numpy as np

from .atgen import StateCapError
from .system import CompositeState, CompositeSystem

WINNING = "Winning"
LOSING = "Losing"
UNKNOWN = "Unknown"


def oracle_solve(sys: CompositeSystem,
                 state_cap: int = 5_000_000) -> dict[CompositeState, tuple[str, int | None]]:
    """Exact verdict and fixpoint round per reachable composite state.

    Round 0 holds the marked states.  Round r adds every unmarked state whose
    uncontrollable successors all lie in earlier rounds (when it has any), or
    with some controllable successor in an earlier round (when it has none).
    States never added are losing, with rank None.
    """
    cs = sys.compiled()
    init = cs.initial.copy()
    index: dict[bytes, int] = {init.tobytes(): 0}
    states: list[CompositeState] = [tuple(int(x) for x in init)]
    queue = [init]
    while queue:
        q = queue.pop()
        _, locs = cs.successors(q)
        for row in locs:
            key = row.tobytes()
            if key not in index:
                if len(index) >= state_cap:
                    raise StateCapError(f"reachable state count exceeds cap of {state_cap}")
                index[key] = len(index)
                states.append(tuple(int(x) for x in row))
                queue.append(np.array(row, dtype=np.int32))

    n = len(states)
    marked = np.zeros(n, dtype=bool)
    # per state: (uncontrollable successor indices, controllable successor indices)
    succ_u: list[list[int]] = [[] for _ in range(n)]
    succ_c: list[list[int]] = [[] for _ in range(n)]
    for i, st in enumerate(states):
        q = np.array(st, dtype=np.int32)
        labels, locs = cs.successors(q)
        marked[i] = cs.is_marked_locals(q)
        for lab, row in zip(labels, locs):
            t = index[row.tobytes()]
            (succ_c[i] if cs.controllable[lab] else succ_u[i]).append(t)

    rank = np.full(n, -1, dtype=np.int64)
    rank[marked] = 0
    won = marked.copy()
    rnd = 0
    changed = True
    while changed:
        rnd += 1
        changed = False
        add = []
        for i in range(n):
            if won[i]:
                continue
            if succ_u[i]:
                if all(won[t] for t in succ_u[i]):
                    add.append(i)
            elif any(won[t] for t in succ_c[i]):
                add.append(i)
        for i in add:
            won[i] = True
            rank[i] = rnd
            changed = True

    return {st: ((WINNING, int(rank[i])) if won[i] else (LOSING, None))
            for i, st in enumerate(states)}
