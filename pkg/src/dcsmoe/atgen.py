"""Air Traffic benchmark family AT(n, k).

n airplanes request landing clearance across k altitude levels, each level
guarded by a monitor component.  Arrivals (request) and level entries (reach)
are uncontrollable; altitude assignment (enter), descent (descend) and the
final landing (land) are controllable.  Two planes reaching the same level
collides the monitor into an unmarked sink, so safe controllers must sequence
descents.  Goal: every plane landed, every monitor free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import ComponentAutomaton, CompositeSystem, EventLabel


@dataclass(frozen=True)
class ATParams:
    n: int
    k: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1:
            raise ValueError(f"AT parameters must be positive, got n={self.n} k={self.k}")


class StateCapError(RuntimeError):
    """Exhaustive traversal aborted: reachable state count exceeds the cap."""


def build_at(n: int, k: int) -> CompositeSystem:
    """Compose n plane automata with k altitude monitors.

    Plane local states: 0 idle, 1 pending, 2j approach_j, 2j+1 alt_j
    (j = 1..k), 2k+2 landed (marked).  Monitor local states: 0 free,
    i occupied by plane i, n+1 collision sink; all but the sink marked.
    """
    p = ATParams(n, k)
    n, k = p.n, p.k

    labels: list[EventLabel] = []
    request = {}
    enter = {}
    reach = {}
    descend = {}
    land = {}

    def add(name: str, controllable: bool) -> int:
        lid = len(labels)
        labels.append(EventLabel(lid, name, controllable))
        return lid

    for i in range(1, n + 1):
        request[i] = add(f"request_{i}", False)
        for j in range(1, k + 1):
            enter[i, j] = add(f"enter_{i}_{j}", True)
        for j in range(1, k + 1):
            reach[i, j] = add(f"reach_{i}_{j}", False)
        for j in range(2, k + 1):
            descend[i, j] = add(f"descend_{i}_{j}", True)
        land[i] = add(f"land_{i}", True)

    comps: list[ComponentAutomaton] = []
    landed = 2 * k + 2
    for i in range(1, n + 1):
        trans: dict[tuple[int, int], int] = {(0, request[i]): 1}
        local = {request[i], land[i]}
        for j in range(1, k + 1):
            trans[(1, enter[i, j])] = 2 * j
            trans[(2 * j, reach[i, j])] = 2 * j + 1
            local |= {enter[i, j], reach[i, j]}
        for j in range(2, k + 1):
            trans[(2 * j + 1, descend[i, j])] = 2 * (j - 1)
            local.add(descend[i, j])
        trans[(3, land[i])] = landed
        comps.append(ComponentAutomaton(
            state_count=2 * k + 3, initial=0, marked=frozenset({landed}),
            local_alphabet=frozenset(local), transitions=trans))

    sink = n + 1
    for j in range(1, k + 1):
        trans = {}
        local = set()
        for i in range(1, n + 1):
            trans[(0, reach[i, j])] = i
            local.add(reach[i, j])
            for other in range(1, n + 1):
                if other != i:
                    trans[(other, reach[i, j])] = sink
            if j >= 2:
                trans[(i, descend[i, j])] = 0
                local.add(descend[i, j])
            else:
                trans[(i, land[i])] = 0
                local.add(land[i])
        comps.append(ComponentAutomaton(
            state_count=n + 2, initial=0,
            marked=frozenset(range(n + 1)),
            local_alphabet=frozenset(local), transitions=trans))

    sys_ = CompositeSystem(components=comps, alphabet=labels)
    sys_.validate()
    return sys_


def instance_stats(sys: CompositeSystem, state_cap: int = 5_000_000) -> dict[str, int]:
    """Exact reachable state and transition counts by exhaustive BFS."""
    cs = sys.compiled()
    init = cs.initial.copy()
    seen = {init.tobytes()}
    queue = [init]
    transitions = 0
    while queue:
        q = queue.pop()
        _, locs = cs.successors(q)
        transitions += len(locs)
        for row in locs:
            key = row.tobytes()
            if key not in seen:
                if len(seen) >= state_cap:
                    raise StateCapError(
                        f"reachable state count exceeds cap of {state_cap}")
                seen.add(key)
                queue.append(np.array(row, dtype=np.int32))
    return {"reachable_states": len(seen), "reachable_transitions": transitions}
