import numpy as np
import pytest

from dcsmoe.engine import run_episode
from dcsmoe.policies import ExpertMixturePolicy
from dcsmoe.qnet import QNetwork
from dcsmoe.system import ComponentAutomaton, CompositeSystem, EventLabel
from dcsmoe.training import (EpisodeMetric, ReplayBuffer, TrainConfig,
                             epsilon_for, save_metrics, train_expert)

QUICK = TrainConfig(episodes=8, budget=300, replay_capacity=2000,
                    batch_size=16, warmup=50, target_sync=100)


def test_epsilon_schedule_frozen_points():
    cfg = TrainConfig(episodes=200)
    assert epsilon_for(0, cfg) == 1.0
    assert epsilon_for(30, cfg) == pytest.approx(0.525)
    assert epsilon_for(60, cfg) == pytest.approx(0.05)
    assert epsilon_for(199, cfg) == pytest.approx(0.05)
    tiny = TrainConfig(episodes=1)
    assert epsilon_for(0, tiny) == 1.0
    assert epsilon_for(1, tiny) == pytest.approx(0.05)


def test_replay_ring_wraps_oldest_first():
    buf = ReplayBuffer(4)
    for i in range(6):
        buf.push(np.full(12, float(i), dtype=np.float32), None)
    assert len(buf) == 4
    firsts = [float(x[0]) for x, _ in buf.data]
    assert firsts == [4.0, 5.0, 2.0, 3.0]


def test_save_metrics_format(tmp_path):
    path = str(tmp_path / "m.csv")
    save_metrics([EpisodeMetric(0, 25, True), EpisodeMetric(1, 300, False)],
                 path)
    assert open(path).read() == "episode,steps,solved\n0,25,true\n1,300,false\n"


def test_training_bitwise_deterministic():
    ck1, m1 = train_expert(2, 1, QUICK, seed=3)
    ck2, m2 = train_expert(2, 1, QUICK, seed=3)
    np.testing.assert_array_equal(ck1.network.w1, ck2.network.w1)
    np.testing.assert_array_equal(ck1.network.b1, ck2.network.b1)
    np.testing.assert_array_equal(ck1.network.w2, ck2.network.w2)
    assert ck1.network.b2 == ck2.network.b2
    assert m1 == m2
    ck3, _ = train_expert(2, 1, QUICK, seed=4)
    assert not np.array_equal(ck1.network.w1, ck3.network.w1)


def test_training_metadata():
    ck, metrics = train_expert(1, 1, QUICK, seed=5)
    assert ck.metadata == {"n": 1, "k": 1, "seed": 5, "episodes_trained": 8,
                           "budget_per_episode": 300}
    assert len(metrics) == 8
    assert all(m.solved for m in metrics)  # AT(1,1) always finishes in 4


def test_trained_expert_beats_untrained_median():
    cfg = TrainConfig(episodes=200, budget=5000)
    ck, metrics = train_expert(2, 1, cfg, seed=0)
    assert metrics[-1].solved

    from dcsmoe.atgen import build_at
    sys_ = build_at(2, 1)
    trained = run_episode(
        sys_, ExpertMixturePolicy([ck.network], [1.0]), 5000)
    assert trained.solved
    untrained = []
    for s in range(25):
        net = QNetwork.init(np.random.default_rng(s))
        r = run_episode(sys_, ExpertMixturePolicy([net], [1.0]), 5000)
        assert r.solved
        untrained.append(r.steps)
    assert trained.steps < float(np.median(untrained))


def test_unsolvable_instance_aborts(monkeypatch):
    lab = EventLabel(0, "stall", True)
    dead = ComponentAutomaton(state_count=2, initial=0, marked=frozenset(),
                              local_alphabet=frozenset({0}),
                              transitions={(0, 0): 1})
    losing = CompositeSystem(components=[dead], alphabet=[lab])
    monkeypatch.setattr("dcsmoe.training.build_at", lambda n, k: losing)
    with pytest.raises(RuntimeError, match="no controller"):
        train_expert(9, 9, QUICK, seed=0)
