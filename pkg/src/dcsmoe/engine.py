"""On-the-fly directed synthesis: exploration history, verdict propagation,
controller extraction and verification.

The engine discovers the composition incrementally.  Each step a policy picks
one frontier transition; the engine expands it, discovers the target if new,
and propagates winning/losing verdicts backward over the explored graph.
Verdicts are monotone and always sound with respect to the full composition:

  W1  marked state -> Winning.
  W2  s Winning once every enabled uncontrollable transition of s is expanded
      with a Winning target, and s has at least one uncontrollable transition
      or some expanded controllable transition with a Winning target.
  L1  s Losing once some expanded uncontrollable transition hits a Losing
      target.
  L2  s Losing once unmarked with no pending transitions and every expanded
      successor Losing (deadlocks included, vacuously).
  F   frontier exhausted -> every remaining Unknown state is Losing.

Frontier rows live in flat parallel arrays with an active mask; rows are only
appended, never moved, so a row id is stable for the whole episode.  Rows
whose source state got classified are deactivated: expanding them cannot
change any verdict (successor sets of Unknown states stay complete), which
keeps rule F exact on the pruned frontier.

The engine also maintains the per-row feature matrix X (12 columns, float32).
Columns 6 and 7 (normalized source depth, chain flag) are left zero: they
depend on global counters that change every step and are folded in by the
policy-side kernels at evaluation time.  A per-episode change log (`dirty`
plus the appended-row watermark) lets policies refresh caches incrementally.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .system import CompositeState, CompositeSystem, EventLabel

UNKNOWN = 0
WIN = 1
LOSE = 2

VERDICT_NAMES = {UNKNOWN: "Unknown", WIN: "Winning", LOSE: "Losing"}

# feature columns (see features.py for the schema contract)
F_CTRL, F_DISC, F_MARK, F_WIN, F_LOSE, F_MFRAC = 0, 1, 2, 3, 4, 5
F_DEPTH, F_CHAIN, F_UFRAC, F_BRANCH, F_PEND, F_BIAS = 6, 7, 8, 9, 10, 11


@dataclass(frozen=True)
class FrontierTransition:
    """Read-only view of one frontier row."""
    row: int
    source: CompositeState
    label: EventLabel
    target: CompositeState
    target_discovered: bool


@dataclass
class Controller:
    """Enabled controllable labels per state; uncontrollables always pass."""
    enabled: dict[CompositeState, list[int]]
    domain: set[CompositeState]

    def to_json(self) -> str:
        entries = [{"state": list(st), "enabled": self.enabled.get(st, [])}
                   for st in sorted(self.domain)]
        return json.dumps({"states": entries}, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "Controller":
        doc = json.loads(text)
        enabled = {}
        domain = set()
        for e in doc["states"]:
            st = tuple(int(x) for x in e["state"])
            domain.add(st)
            enabled[st] = [int(l) for l in e["enabled"]]
        return Controller(enabled=enabled, domain=domain)


@dataclass
class VerificationReport:
    ok: bool
    violations: list[dict] = field(default_factory=list)


@dataclass
class SynthesisResult:
    solved: bool
    verdict_s0: str
    steps: int
    return_value: int
    wall_time: float
    controller: Controller | None = None
    discovered: int = 0


class Exploration:
    """Mutable exploration history of one synthesis episode."""

    _GROW = 1024

    def __init__(self, sys: CompositeSystem):
        self.sys = sys
        self.cs = sys.compiled()
        cs = self.cs
        self.n_labels = cs.n_labels
        self.inv_labels = np.float32(1.0 / cs.n_labels)

        # discovered-state arrays (index = insertion order)
        cap = self._GROW
        self.locals_arr = np.zeros((cap, cs.n_comp), dtype=np.int32)
        self.verdict = np.zeros(cap, dtype=np.int8)
        self.rank = np.full(cap, -1, dtype=np.int64)
        self.marked = np.zeros(cap, dtype=bool)
        self.pending = np.zeros(cap, dtype=np.int32)
        self.n_enabled = np.zeros(cap, dtype=np.int32)
        self.n_unc_enabled = np.zeros(cap, dtype=np.int32)
        # rule bookkeeping, one slot per state
        self.n_expanded = np.zeros(cap, dtype=np.int32)
        self.n_exp_losing = np.zeros(cap, dtype=np.int32)
        self.n_unc_exp_win = np.zeros(cap, dtype=np.int32)
        self.n_ctrl_exp_win = np.zeros(cap, dtype=np.int32)
        self.unc_losing = np.zeros(cap, dtype=bool)

        self.state_index: dict[bytes, int] = {}
        self.state_keys: list[bytes] = []
        self.parents: list[list[tuple[int, bool]]] = []     # (parent idx, uncontrollable)
        self.expanded_edges: list[list[tuple[int, bool]]] = []  # (target idx, uncontrollable)
        self.expanded_labels: list[list[tuple[int, int]]] = []  # (label id, target idx)
        self.source_rows: list[list[int]] = []

        # frontier rows, SoA
        rcap = self._GROW
        self.row_src = np.zeros(rcap, dtype=np.int32)
        self.row_src_f = np.zeros(rcap, dtype=np.float32)
        self.row_label = np.zeros(rcap, dtype=np.int32)
        self.row_tgt = np.full(rcap, -1, dtype=np.int32)
        self.row_active = np.zeros(rcap, dtype=bool)
        self.X = np.zeros((rcap, 12), dtype=np.float32)
        self.row_tgt_key: list[bytes] = []
        self.watchers: dict[bytes, list[int]] = {}

        self.n_rows = 0
        self.n_active = 0
        self.n_discovered = 0
        self.steps = 0
        self.last_tgt = np.int32(-1)
        # rows whose X or active flag changed, as an append-only list of
        # index chunks; policies track how many chunks they have consumed
        self.dirty: list[np.ndarray] = []
        self._worklist: list[tuple[int, list[tuple[int, bool]]]] = []
        self._stats_buf = np.empty((cs.n_labels, 4), dtype=np.float32)

        self._discover(cs.initial.copy())
        self.s0 = 0

    # ------------------------------------------------------------------
    # growth helpers
    # ------------------------------------------------------------------

    def _grow_states(self) -> None:
        for name in ("locals_arr", "verdict", "rank", "marked", "pending", "n_enabled",
                     "n_unc_enabled", "n_expanded", "n_exp_losing", "n_unc_exp_win",
                     "n_ctrl_exp_win", "unc_losing"):
            arr = getattr(self, name)
            new = np.zeros((arr.shape[0] * 2,) + arr.shape[1:], dtype=arr.dtype)
            if name == "rank":
                new.fill(-1)
            new[:arr.shape[0]] = arr
            setattr(self, name, new)

    def _grow_rows(self) -> None:
        for name in ("row_src", "row_src_f", "row_label", "row_tgt", "row_active", "X"):
            arr = getattr(self, name)
            new = np.zeros((arr.shape[0] * 2,) + arr.shape[1:], dtype=arr.dtype)
            if name == "row_tgt":
                new.fill(-1)
            new[:arr.shape[0]] = arr
            setattr(self, name, new)

    # ------------------------------------------------------------------
    # state discovery and frontier growth
    # ------------------------------------------------------------------

    def _discover(self, locs: np.ndarray) -> int:
        """Register a new composite state; append its frontier rows."""
        idx = self.n_discovered
        if idx == self.locals_arr.shape[0]:
            self._grow_states()
        key = locs.tobytes()
        self.state_index[key] = idx
        self.state_keys.append(key)
        self.locals_arr[idx] = locs
        self.parents.append([])
        self.expanded_edges.append([])
        self.expanded_labels.append([])
        self.source_rows.append([])
        self.n_discovered += 1

        labels, succ = self.cs.successors(locs)
        labels = labels.copy()
        succ = succ.copy()
        n_en = len(labels)
        self.n_enabled[idx] = n_en
        self.pending[idx] = n_en
        self.n_unc_enabled[idx] = int((~self.cs.controllable[labels]).sum()) if n_en else 0
        is_marked = self.cs.is_marked_locals(locs)
        self.marked[idx] = is_marked

        # W1 / deadlock at discovery
        if is_marked:
            self._classify(idx, WIN, 0)
        elif n_en == 0:
            self._classify(idx, LOSE, -1)

        # watchers waiting on this key: flip discovered flag (and verdict cols)
        ws = self.watchers.get(key)
        if ws:
            wa = np.asarray(ws, dtype=np.int64)
            self.row_tgt[wa] = idx
            self.X[wa, F_DISC] = 1.0
            if self.verdict[idx] == WIN:
                self.X[wa, F_WIN] = 1.0
            elif self.verdict[idx] == LOSE:
                self.X[wa, F_LOSE] = 1.0
            self.dirty.append(wa)

        # states classified at discovery get no frontier rows: classified
        # sources are pruned anyway, so appending would deactivate instantly
        if self.verdict[idx] == UNKNOWN:
            self._append_rows(idx, labels, succ)
        return idx

    def _append_rows(self, src: int, labels: np.ndarray, succ: np.ndarray) -> None:
        deg = len(labels)
        row0 = self.n_rows
        while row0 + deg > self.row_src.shape[0]:
            self._grow_rows()
        keys = [succ[i].tobytes() for i in range(deg)]
        tgts = np.array([self.state_index.get(k, -1) for k in keys], dtype=np.int32)
        stats = self._stats_buf[:deg]
        cs = self.cs
        _kernels.succ_stats(succ, cs.delta, cs.row_off, cs.owners_indptr,
                            cs.owners_comp, cs.controllable, cs.marked_flat,
                            self.inv_labels, stats)

        block = self.X[row0:row0 + deg]
        block[:, F_CTRL] = self.cs.controllable[labels]
        block[:, F_DISC] = tgts >= 0
        block[:, F_MARK] = stats[:, 0]
        disc = tgts >= 0
        v = np.zeros(deg, dtype=np.int8)
        v[disc] = self.verdict[tgts[disc]]
        block[:, F_WIN] = v == WIN
        block[:, F_LOSE] = v == LOSE
        block[:, F_MFRAC] = stats[:, 1]
        block[:, F_DEPTH] = 0.0
        block[:, F_CHAIN] = 0.0
        block[:, F_UFRAC] = stats[:, 2]
        block[:, F_BRANCH] = stats[:, 3]
        block[:, F_PEND] = 1.0
        block[:, F_BIAS] = 1.0

        self.row_src[row0:row0 + deg] = src
        self.row_src_f[row0:row0 + deg] = np.float32(src)
        self.row_label[row0:row0 + deg] = labels
        self.row_tgt[row0:row0 + deg] = tgts
        self.row_active[row0:row0 + deg] = True
        self.row_tgt_key.extend(keys)
        rows = self.source_rows[src]
        for i in range(deg):
            r = row0 + i
            self.watchers.setdefault(keys[i], []).append(r)
            rows.append(r)
        self.n_rows = row0 + deg
        self.n_active += deg

    # ------------------------------------------------------------------
    # verdict machinery
    # ------------------------------------------------------------------

    def _classify(self, idx: int, verdict: int, rank: int) -> None:
        self.verdict[idx] = verdict
        self.rank[idx] = rank
        # rows targeting this state: flip verdict feature columns
        col = F_WIN if verdict == WIN else F_LOSE
        ws = self.watchers.get(self.state_keys[idx])
        if ws:
            wa = np.asarray(ws, dtype=np.int64)
            self.X[wa, col] = 1.0
            self.dirty.append(wa)
        # prune rows from a classified source: expanding them cannot change
        # any other state's verdict (see module docstring)
        sr = self.source_rows[idx]
        if sr:
            sa = np.asarray(sr, dtype=np.int64)
            live = sa[self.row_active[sa]]
            if live.shape[0]:
                self.row_active[live] = False
                self.n_active -= live.shape[0]
                self.dirty.append(live)
        self._worklist.append((idx, list(self.parents[idx])))

    def _check_rules(self, idx: int) -> None:
        if self.verdict[idx] != UNKNOWN:
            return
        if self.unc_losing[idx]:
            self._classify(idx, LOSE, -1)
            return
        n_unc = int(self.n_unc_enabled[idx])
        if self.n_unc_exp_win[idx] == n_unc and (n_unc > 0 or self.n_ctrl_exp_win[idx] > 0):
            if n_unc > 0:
                r = 1 + max(int(self.rank[t]) for t, unc in self.expanded_edges[idx] if unc)
            else:
                r = 1 + min(int(self.rank[t]) for t, unc in self.expanded_edges[idx]
                            if not unc and self.verdict[t] == WIN)
            self._classify(idx, WIN, r)
            return
        if self.pending[idx] == 0 and self.n_exp_losing[idx] == self.n_expanded[idx]:
            self._classify(idx, LOSE, -1)

    def _bump(self, src: int, unc: bool, tgt_verdict: int) -> None:
        """Account one expanded edge whose target verdict just became known."""
        if tgt_verdict == WIN:
            if unc:
                self.n_unc_exp_win[src] += 1
            else:
                self.n_ctrl_exp_win[src] += 1
        else:
            self.n_exp_losing[src] += 1
            if unc:
                self.unc_losing[src] = True

    def propagate(self) -> list[int]:
        """Drain the classification worklist; returns newly classified states."""
        out = []
        while self._worklist:
            idx, parent_snapshot = self._worklist.pop()
            out.append(idx)
            v = int(self.verdict[idx])
            for p, unc in parent_snapshot:
                if self.verdict[p] != UNKNOWN:
                    continue
                self._bump(p, unc, v)
                self._check_rules(p)
        return out

    # ------------------------------------------------------------------
    # public stepping interface
    # ------------------------------------------------------------------

    def expand(self, row: int) -> list[int]:
        """Expand one frontier row; returns the newly classified states."""
        if not (0 <= row < self.n_rows) or not self.row_active[row]:
            raise ValueError(f"row {row} is not an expandable frontier transition")
        self.row_active[row] = False
        self.n_active -= 1
        self.steps += 1
        self.dirty.append(np.array([row], dtype=np.int64))

        src = int(self.row_src[row])
        self.pending[src] -= 1
        self.n_expanded[src] += 1
        pend_f = np.float32(self.pending[src]) / np.float32(self.n_enabled[src])
        sa = np.asarray(self.source_rows[src], dtype=np.int64)
        live = sa[self.row_active[sa]]
        if live.shape[0]:
            self.X[live, F_PEND] = pend_f
            self.dirty.append(live)

        key = self.row_tgt_key[row]
        tgt = self.state_index.get(key, -1)
        if tgt < 0:
            locs = np.frombuffer(key, dtype=np.int32).copy()
            tgt = self._discover(locs)

        unc = not bool(self.cs.controllable[self.row_label[row]])
        self.parents[tgt].append((src, unc))
        self.expanded_edges[src].append((tgt, unc))
        self.expanded_labels[src].append((int(self.row_label[row]), tgt))
        tv = int(self.verdict[tgt])
        if tv != UNKNOWN:
            self._bump(src, unc, tv)
        self._check_rules(src)
        self.last_tgt = np.int32(tgt)
        newly = self.propagate()

        if self.n_active == 0 and self.verdict[self.s0] == UNKNOWN:
            newly = newly + self.finalize_exhausted()
        return newly

    def finalize_exhausted(self) -> list[int]:
        """Rule F: frontier exhausted, remaining Unknown states are Losing."""
        unk = np.flatnonzero(self.verdict[:self.n_discovered] == UNKNOWN)
        self.verdict[unk] = LOSE
        return [int(i) for i in unk]

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def state_tuple(self, idx: int) -> CompositeState:
        return tuple(int(x) for x in self.locals_arr[idx])

    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_active[:self.n_rows])

    def frontier_transition(self, row: int) -> FrontierTransition:
        if not (0 <= row < self.n_rows):
            raise ValueError(f"row {row} out of range")
        tgt_locs = np.frombuffer(self.row_tgt_key[row], dtype=np.int32)
        return FrontierTransition(
            row=row,
            source=self.state_tuple(int(self.row_src[row])),
            label=self.sys.alphabet[int(self.row_label[row])],
            target=tuple(int(x) for x in tgt_locs),
            target_discovered=bool(self.row_tgt[row] >= 0),
        )

    def verdict_of(self, state: CompositeState) -> str:
        key = np.asarray(state, dtype=np.int32).tobytes()
        idx = self.state_index.get(key)
        if idx is None:
            return VERDICT_NAMES[UNKNOWN]
        return VERDICT_NAMES[int(self.verdict[idx])]


def init_exploration(sys: CompositeSystem) -> Exploration:
    """Fresh history: s0 discovered, its transitions on the frontier."""
    return Exploration(sys)


# ----------------------------------------------------------------------
# controller extraction and verification
# ----------------------------------------------------------------------

def extract_controller(h: Exploration) -> Controller:
    """Enable expanded controllable edges to Winning targets of smaller rank."""
    if h.verdict[h.s0] != WIN:
        raise ValueError("controller extraction requires a Winning initial state")
    enabled_all: dict[int, list[int]] = {}
    for idx in range(h.n_discovered):
        if h.verdict[idx] != WIN:
            continue
        rk = int(h.rank[idx])
        labs = [lab for lab, t in h.expanded_labels[idx]
                if h.cs.controllable[lab] and h.verdict[t] == WIN and h.rank[t] < rk]
        enabled_all[idx] = sorted(labs)

    # domain: winning states reachable under the controller, marked absorbing
    cs = h.cs
    seen = {h.s0}
    stack = [h.s0]
    enabled: dict[CompositeState, list[int]] = {}
    domain: set[CompositeState] = set()
    while stack:
        idx = stack.pop()
        st = h.state_tuple(idx)
        domain.add(st)
        enabled[st] = enabled_all.get(idx, [])
        if h.marked[idx]:
            continue
        allow = set(enabled[st])
        labels, locs = cs.successors(h.locals_arr[idx])
        for i in range(len(labels)):
            lab = int(labels[i])
            if cs.controllable[lab] and lab not in allow:
                continue
            t = h.state_index.get(locs[i].tobytes())
            if t is None:
                raise AssertionError("controller reaches an undiscovered state")
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return Controller(enabled=enabled, domain=domain)


def verify_controller(sys: CompositeSystem, c: Controller) -> VerificationReport:
    """Check the controlled composition: deadlock-free, co-reachable, closed.

    BFS over the controlled graph (uncontrollables plus enabled controllables,
    marked states absorbing).  Violations carry a witness path of label ids
    from the initial state.
    """
    cs = sys.compiled()
    init = cs.initial.copy()
    init_t = tuple(int(x) for x in init)
    violations: list[dict] = []

    index: dict[CompositeState, int] = {init_t: 0}
    states = [init_t]
    parent: list[tuple[int, int]] = [(-1, -1)]   # (parent idx, label id)
    succ: list[list[int]] = []
    marked_flags: list[bool] = []
    qi = 0
    while qi < len(states):
        st = states[qi]
        locs = np.asarray(st, dtype=np.int32)
        is_marked = cs.is_marked_locals(locs)
        marked_flags.append(is_marked)
        if st not in c.domain:
            violations.append({"kind": "outside-domain", "state": list(st),
                               "path": _path(parent, states, qi)})
            succ.append([])
            qi += 1
            continue
        out: list[int] = []
        if not is_marked:
            allow = set(c.enabled.get(st, []))
            labels, locs_rows = cs.successors(locs)
            for i in range(len(labels)):
                lab = int(labels[i])
                if cs.controllable[lab] and lab not in allow:
                    continue
                t = tuple(int(x) for x in locs_rows[i])
                ti = index.get(t)
                if ti is None:
                    ti = len(states)
                    index[t] = ti
                    states.append(t)
                    parent.append((qi, lab))
                out.append(ti)
            if not out:
                violations.append({"kind": "unmarked-deadlock", "state": list(st),
                                   "path": _path(parent, states, qi)})
        succ.append(out)
        qi += 1

    # co-reachability of marked states over the controlled graph
    n = len(states)
    rev: list[list[int]] = [[] for _ in range(n)]
    for i, out in enumerate(succ):
        for t in out:
            rev[t].append(i)
    good = [i for i in range(n) if marked_flags[i]]
    can = np.zeros(n, dtype=bool)
    for i in good:
        can[i] = True
    stack = list(good)
    while stack:
        i = stack.pop()
        for p in rev[i]:
            if not can[p]:
                can[p] = True
                stack.append(p)
    for i in range(n):
        if not can[i]:
            violations.append({"kind": "blocking", "state": list(states[i]),
                               "path": _path(parent, states, i)})

    return VerificationReport(ok=not violations, violations=violations)


def _path(parent: list[tuple[int, int]], states: list[CompositeState], idx: int) -> list[int]:
    labs: list[int] = []
    while parent[idx][0] >= 0:
        labs.append(parent[idx][1])
        idx = parent[idx][0]
    return labs[::-1]


# ----------------------------------------------------------------------
# episodes
# ----------------------------------------------------------------------

class RandomPolicy:
    """Uniform choice over the active frontier.

    Samples row ids by rejection (the active fraction is usually high), so a
    step costs O(1) instead of materializing the active index set.
    """

    def __init__(self) -> None:
        self.rng = np.random.default_rng(0)

    def reset(self, h: Exploration, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def select(self, h: Exploration) -> int:
        for _ in range(200):
            r = int(self.rng.integers(h.n_rows))
            if h.row_active[r]:
                return r
        rows = h.active_rows()
        return int(rows[self.rng.integers(len(rows))])


class BfsPolicy:
    """Oldest active frontier row first (discovery-order sweep)."""

    def __init__(self) -> None:
        self._cursor = 0

    def reset(self, h: Exploration, seed: int) -> None:
        self._cursor = 0

    def select(self, h: Exploration) -> int:
        while not h.row_active[self._cursor]:
            self._cursor += 1
        return self._cursor


class DfsPolicy:
    """Newest active frontier row first."""

    def reset(self, h: Exploration, seed: int) -> None:
        pass

    def select(self, h: Exploration) -> int:
        p = h.n_rows - 1
        while not h.row_active[p]:
            p -= 1
        return p


def run_episode(sys: CompositeSystem, policy, budget: int,
                rng_seed: int = 0) -> SynthesisResult:
    """Expand under `policy` until the initial state resolves, the frontier
    empties, or `budget` expansions are spent."""
    if budget < 1:
        raise ValueError("budget must be positive")
    t0 = time.perf_counter()
    h = init_exploration(sys)
    policy.reset(h, rng_seed)
    while h.verdict[h.s0] == UNKNOWN and h.steps < budget and h.n_active > 0:
        h.expand(policy.select(h))
    if h.verdict[h.s0] == UNKNOWN and h.n_active == 0:
        h.finalize_exhausted()

    verdict = VERDICT_NAMES[int(h.verdict[h.s0])]
    solved = h.verdict[h.s0] == WIN
    controller = None
    if solved:
        controller = extract_controller(h)
        report = verify_controller(sys, controller)
        if not report.ok:
            raise AssertionError(f"extracted controller failed verification: "
                                 f"{report.violations[:3]}")
    wall = time.perf_counter() - t0
    return SynthesisResult(solved=bool(solved), verdict_s0=verdict, steps=h.steps,
                           return_value=-h.steps, wall_time=wall,
                           controller=controller, discovered=h.n_discovered)
