"""Modular discrete event systems: typed model, interchange format, composition.

A system is a set of deterministic component automata over one global event
alphabet.  The composed behavior is their synchronous product: a label fires
only when every component owning it (having it in its local alphabet) defines
a move from its current local state; owners move, everyone else stays.  The
product is never materialized here; callers enumerate successors on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

CompositeState = tuple[int, ...]


class SystemFormatError(ValueError):
    """Raised for malformed or inconsistent system documents."""


@dataclass(frozen=True)
class EventLabel:
    id: int
    name: str
    controllable: bool


@dataclass
class ComponentAutomaton:
    state_count: int
    initial: int
    marked: frozenset[int]
    local_alphabet: frozenset[int]
    # (state, label id) -> state; at most one target per key
    transitions: dict[tuple[int, int], int]


@dataclass
class CompositeSystem:
    components: list[ComponentAutomaton]
    alphabet: list[EventLabel]
    _compiled: "CompiledSystem | None" = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        if not self.components:
            raise SystemFormatError("component list is empty")
        ids = [lab.id for lab in self.alphabet]
        if sorted(ids) != list(range(len(ids))):
            raise SystemFormatError("alphabet ids must be dense and unique")
        names = {lab.name for lab in self.alphabet}
        if len(names) != len(self.alphabet):
            raise SystemFormatError("duplicate label name")
        n_labels = len(self.alphabet)
        owned = set()
        for ci, comp in enumerate(self.components):
            if comp.state_count < 1:
                raise SystemFormatError(f"component {ci}: state_count must be positive")
            if not 0 <= comp.initial < comp.state_count:
                raise SystemFormatError(f"component {ci}: invalid initial state")
            for s in comp.marked:
                if not 0 <= s < comp.state_count:
                    raise SystemFormatError(f"component {ci}: marked state {s} out of range")
            for lab in comp.local_alphabet:
                if not 0 <= lab < n_labels:
                    raise SystemFormatError(f"component {ci}: unknown label {lab} in local alphabet")
            seen = set()
            for (src, lab), dst in comp.transitions.items():
                if lab >= n_labels or lab < 0:
                    raise SystemFormatError(f"component {ci}: unknown label {lab}")
                if lab not in comp.local_alphabet:
                    raise SystemFormatError(
                        f"component {ci}: transition label {lab} outside local alphabet")
                if not (0 <= src < comp.state_count and 0 <= dst < comp.state_count):
                    raise SystemFormatError(f"component {ci}: transition state out of range")
                if (src, lab) in seen:
                    raise SystemFormatError(
                        f"component {ci}: nondeterministic transition pair ({src},{lab})")
                seen.add((src, lab))
            owned |= comp.local_alphabet
        for lab in self.alphabet:
            if lab.id not in owned:
                raise SystemFormatError(f"label {lab.id} ({lab.name}) owned by no component")

    @property
    def initial_state(self) -> CompositeState:
        return tuple(c.initial for c in self.components)

    def compiled(self) -> "CompiledSystem":
        if self._compiled is None:
            self._compiled = CompiledSystem(self)
        return self._compiled


class CompiledSystem:
    """Array form of a CompositeSystem driving the successor kernels.

    Component transition tables are stacked into one dense int32 matrix
    (-1 = undefined); label ownership is kept both CSR-style and as a boolean
    mask so either kernel backend can use its preferred layout.
    """

    def __init__(self, sys: CompositeSystem):
        sys.validate()
        comps = sys.components
        n_labels = len(sys.alphabet)
        self.n_comp = len(comps)
        self.n_labels = n_labels
        counts = np.array([c.state_count for c in comps], dtype=np.int32)
        self.row_off = np.zeros(self.n_comp, dtype=np.int32)
        self.row_off[1:] = np.cumsum(counts)[:-1].astype(np.int32)
        total = int(counts.sum())

        self.delta = np.full((total, n_labels), -1, dtype=np.int32)
        self.marked_flat = np.zeros(total, dtype=bool)
        self.owner_mask = np.zeros((self.n_comp, n_labels), dtype=bool)
        for ci, comp in enumerate(comps):
            base = self.row_off[ci]
            for s in comp.marked:
                self.marked_flat[base + s] = True
            for lab in comp.local_alphabet:
                self.owner_mask[ci, lab] = True
            for (src, lab), dst in comp.transitions.items():
                self.delta[base + src, lab] = dst

        owners = [np.nonzero(self.owner_mask[:, lab])[0] for lab in range(n_labels)]
        self.owners_indptr = np.zeros(n_labels + 1, dtype=np.int32)
        self.owners_indptr[1:] = np.cumsum([len(o) for o in owners]).astype(np.int32)
        self.owners_comp = (np.concatenate(owners) if owners else
                            np.zeros(0, dtype=np.int64)).astype(np.int32)

        self.controllable = np.array([lab.controllable for lab in sys.alphabet], dtype=bool)
        self.initial = np.array(sys.initial_state, dtype=np.int32)
        # scratch reused by successors(); one state's successors at a time
        self._labels_buf = np.empty(n_labels, dtype=np.int32)
        self._locals_buf = np.empty((n_labels, self.n_comp), dtype=np.int32)

    def successors(self, locals_: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Enabled labels and successor local-state rows for one state.

        Returns views into shared scratch; copy before the next call if kept.
        """
        n = _kernels.succ_fill(
            locals_, self.delta, self.row_off, self.owners_indptr,
            self.owners_comp, self.owner_mask, self._labels_buf, self._locals_buf)
        return self._labels_buf[:n], self._locals_buf[:n]

    def is_marked_locals(self, locals_: np.ndarray) -> bool:
        return bool(self.marked_flat[self.row_off + locals_].all())

    def marked_stats(self, locals_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row (all components marked, fraction of components marked)."""
        hit = self.marked_flat[self.row_off[None, :] + locals_rows]
        return hit.all(axis=1), hit.mean(axis=1)


def enabled_transitions(sys: CompositeSystem,
                        q: CompositeState) -> list[tuple[EventLabel, CompositeState]]:
    """Globally enabled transitions at q, sorted by label id."""
    cs = sys.compiled()
    labels, locals_rows = cs.successors(np.asarray(q, dtype=np.int32))
    return [(sys.alphabet[int(lab)], tuple(int(x) for x in locals_rows[i]))
            for i, lab in enumerate(labels)]


def is_marked(sys: CompositeSystem, q: CompositeState) -> bool:
    """True when every component is in a locally marked state."""
    return sys.compiled().is_marked_locals(np.asarray(q, dtype=np.int32))


# ---------------------------------------------------------------------------
# interchange format
# ---------------------------------------------------------------------------

def serialize(sys: CompositeSystem) -> str:
    """Canonical document: fixed key order, sorted ids, indent 2, no floats."""
    doc = {
        "alphabet": [
            {"id": lab.id, "name": lab.name, "controllable": lab.controllable}
            for lab in sorted(sys.alphabet, key=lambda l: l.id)
        ],
        "components": [
            {
                "state_count": comp.state_count,
                "initial": comp.initial,
                "marked": sorted(comp.marked),
                "local_alphabet": sorted(comp.local_alphabet),
                "transitions": sorted([s, l, t] for (s, l), t in comp.transitions.items()),
            }
            for comp in sys.components
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SystemFormatError(msg)


def parse(text: str) -> CompositeSystem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(f"malformed document: {exc}") from exc
    _require(isinstance(doc, dict), "malformed document: top level must be an object")
    _require("alphabet" in doc and "components" in doc,
             "malformed document: missing alphabet or components")
    raw_alpha = doc["alphabet"]
    _require(isinstance(raw_alpha, list), "malformed document: alphabet must be an array")
    alphabet = []
    for entry in raw_alpha:
        _require(isinstance(entry, dict), "malformed document: alphabet entry must be an object")
        try:
            lab = EventLabel(id=int(entry["id"]), name=str(entry["name"]),
                             controllable=bool(entry["controllable"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SystemFormatError(f"malformed document: bad alphabet entry: {exc}") from exc
        alphabet.append(lab)
    n_labels = len(alphabet)

    raw_comps = doc["components"]
    _require(isinstance(raw_comps, list), "malformed document: components must be an array")
    comps = []
    for ci, entry in enumerate(raw_comps):
        _require(isinstance(entry, dict), f"malformed document: component {ci} must be an object")
        try:
            state_count = int(entry["state_count"])
            initial = int(entry["initial"])
            marked = frozenset(int(s) for s in entry["marked"])
            local = frozenset(int(l) for l in entry["local_alphabet"])
            raw_trans = entry["transitions"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SystemFormatError(f"malformed document: bad component {ci}: {exc}") from exc
        for lab in local:
            _require(0 <= lab < n_labels, f"component {ci}: unknown label {lab}")
        transitions: dict[tuple[int, int], int] = {}
        _require(isinstance(raw_trans, list),
                 f"malformed document: component {ci} transitions must be an array")
        for tr in raw_trans:
            _require(isinstance(tr, list) and len(tr) == 3,
                     f"component {ci}: transition must be [from, label, to]")
            src, lab, dst = (int(v) for v in tr)
            _require(0 <= lab < n_labels, f"component {ci}: unknown label {lab}")
            _require((src, lab) not in transitions,
                     f"component {ci}: nondeterministic transition pair ({src},{lab})")
            transitions[(src, lab)] = dst
        comps.append(ComponentAutomaton(state_count=state_count, initial=initial,
                                        marked=marked, local_alphabet=local,
                                        transitions=transitions))
    sys = CompositeSystem(components=comps, alphabet=alphabet)
    sys.validate()
    return sys
