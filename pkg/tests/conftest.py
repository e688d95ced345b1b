import numpy as np
import pytest

from dcsmoe.system import ComponentAutomaton, CompositeSystem, EventLabel

# acceptance tests append one line per criterion; echoed after the run so
# they survive pytest's output capture
from tests._acceptance_report import LINES as ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_random_system(rng: np.random.Generator) -> CompositeSystem:
    """Small random modular system; always validates, may be unsolvable."""
    n_labels = int(rng.integers(4, 9))
    alphabet = [EventLabel(i, f"e{i}", bool(rng.integers(2)))
                for i in range(n_labels)]
    n_comp = int(rng.integers(2, 4))
    owns: list[set[int]] = [set() for _ in range(n_comp)]
    for lab in range(n_labels):
        k = int(rng.integers(1, n_comp + 1))
        for c in rng.choice(n_comp, size=k, replace=False):
            owns[int(c)].add(lab)
    comps = []
    for c in range(n_comp):
        ns = int(rng.integers(2, 5))
        trans: dict[tuple[int, int], int] = {}
        for s in range(ns):
            for lab in sorted(owns[c]):
                if rng.random() < 0.55:
                    trans[(s, lab)] = int(rng.integers(ns))
        marked = frozenset(int(s) for s in range(ns) if rng.random() < 0.4)
        comps.append(ComponentAutomaton(
            state_count=ns, initial=0, marked=marked,
            local_alphabet=frozenset(owns[c]), transitions=trans))
    sys_ = CompositeSystem(components=comps, alphabet=alphabet)
    sys_.validate()
    return sys_


@pytest.fixture
def rng():
    return np.random.default_rng(0)
