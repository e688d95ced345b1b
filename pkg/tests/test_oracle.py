import numpy as np
import pytest

from dcsmoe.atgen import build_at
from dcsmoe.oracle import LOSING, UNKNOWN, WINNING, oracle_solve
from dcsmoe.system import ComponentAutomaton, CompositeSystem, EventLabel
from tests.conftest import make_random_system


def chain_system(controllable=True):
    # 0 -c-> 1 -c-> 2 (marked)
    lab = EventLabel(0, "step", controllable)
    c = ComponentAutomaton(state_count=3, initial=0, marked=frozenset({2}),
                           local_alphabet=frozenset({0}),
                           transitions={(0, 0): 1, (1, 0): 2})
    return CompositeSystem(components=[c], alphabet=[lab])


def test_chain_ranks():
    table = oracle_solve(chain_system())
    assert table[(0,)] == (WINNING, 2)
    assert table[(1,)] == (WINNING, 1)
    assert table[(2,)] == (WINNING, 0)


def test_marked_initial_rank_zero():
    lab = EventLabel(0, "loop", True)
    c = ComponentAutomaton(state_count=1, initial=0, marked=frozenset({0}),
                           local_alphabet=frozenset({0}),
                           transitions={(0, 0): 0})
    table = oracle_solve(CompositeSystem(components=[c], alphabet=[lab]))
    assert table[(0,)] == (WINNING, 0)


def test_unmarked_deadlock_is_losing():
    lab = EventLabel(0, "go", True)
    c = ComponentAutomaton(state_count=2, initial=0, marked=frozenset(),
                           local_alphabet=frozenset({0}),
                           transitions={(0, 0): 1})
    table = oracle_solve(CompositeSystem(components=[c], alphabet=[lab]))
    assert table[(0,)] == (LOSING, None)
    assert table[(1,)] == (LOSING, None)


def test_uncontrollable_trap_loses():
    # initial has a controllable path to marked AND an uncontrollable step
    # into a dead end: the environment can force the loss
    go = EventLabel(0, "go", True)
    drop = EventLabel(1, "drop", False)
    c = ComponentAutomaton(state_count=3, initial=0, marked=frozenset({1}),
                           local_alphabet=frozenset({0, 1}),
                           transitions={(0, 0): 1, (0, 1): 2})
    table = oracle_solve(CompositeSystem(components=[c], alphabet=[go, drop]))
    assert table[(2,)] == (LOSING, None)
    assert table[(0,)] == (LOSING, None)
    assert table[(1,)] == (WINNING, 0)


def test_uncontrollable_rank_is_worst_case():
    # two uncontrollable branches to marked states of different depth:
    # the rank counts the longer one
    u = EventLabel(0, "u", False)
    c0 = EventLabel(1, "a", True)
    comp = ComponentAutomaton(
        state_count=5, initial=0, marked=frozenset({2, 4}),
        local_alphabet=frozenset({0, 1}),
        # 0 -u-> 1 -a-> 2(marked); 0 -a-> 3 -a-> 4(marked)
        transitions={(0, 0): 1, (1, 1): 2, (0, 1): 3, (3, 1): 4})
    table = oracle_solve(CompositeSystem(components=[comp],
                                         alphabet=[u, c0]))
    # state 0: uncontrollable u must win (rank 1 + rank(1) = 2); having any
    # uncontrollable successor makes the controllable branch irrelevant
    assert table[(1,)] == (WINNING, 1)
    assert table[(3,)] == (WINNING, 1)
    assert table[(0,)] == (WINNING, 2)


def test_at_2_1_landing():
    sys_ = build_at(2, 1)
    table = oracle_solve(sys_)
    assert len(table) == 25
    verdict, rank = table[sys_.initial_state]
    assert (verdict, rank) == (WINNING, 8)
    losing = [q for q, (v, _) in table.items() if v == LOSING]
    assert len(losing) == 4
    # both planes committed to the single altitude: monitor conflict is
    # unavoidable, so the state before the collision is already lost
    assert (2, 2, 0) in losing


def test_at_small_instances_all_solvable():
    for n in (1, 2, 3):
        for k in (1, 2):
            sys_ = build_at(n, k)
            v, rank = oracle_solve(sys_)[sys_.initial_state]
            assert v == WINNING, (n, k)
            assert rank is not None and rank >= 2 * n


def test_random_systems_verdicts_are_exhaustive(rng):
    for _ in range(30):
        sys_ = make_random_system(rng)
        table = oracle_solve(sys_)
        assert all(v in (WINNING, LOSING) for v, _ in table.values())
        for q, (v, rank) in table.items():
            assert (rank is not None) == (v == WINNING)
