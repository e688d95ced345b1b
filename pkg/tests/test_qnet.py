import json
import math

import numpy as np
import pytest

from dcsmoe.atgen import build_at
from dcsmoe.engine import RandomPolicy, init_exploration
from dcsmoe.qnet import (CheckpointError, DIMS, ExpertCheckpoint, HIDDEN,
                         QNetwork, action_distribution, confidence,
                         load_checkpoint, save_checkpoint, softmax)


def make_net(seed=0):
    return QNetwork.init(np.random.default_rng(seed))


def test_init_bounds_and_determinism():
    net = make_net(7)
    s1 = 1.0 / math.sqrt(12)
    s2 = 1.0 / math.sqrt(HIDDEN)
    assert net.w1.shape == (HIDDEN, 12)
    assert np.all(np.abs(net.w1) <= s1) and np.all(np.abs(net.b1) <= s1)
    assert np.all(np.abs(net.w2) <= s2) and abs(net.b2) <= s2
    again = make_net(7)
    np.testing.assert_array_equal(net.w1, again.w1)
    np.testing.assert_array_equal(net.b1, again.b1)
    np.testing.assert_array_equal(net.w2, again.w2)
    assert net.b2 == again.b2
    other = make_net(8)
    assert not np.array_equal(net.w1, other.w1)


def test_forward_matches_hand_rolled():
    net = make_net(3)
    x = np.random.default_rng(1).uniform(0, 1, size=(5, 12))
    got = net.forward(x)
    want = np.empty(5)
    for i in range(5):
        hid = np.maximum(net.w1 @ x[i] + net.b1, 0.0)
        want[i] = hid @ net.w2 + net.b2
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    assert got.dtype == np.float64


def test_copy_is_independent():
    net = make_net(0)
    dup = net.copy()
    dup.w1[0, 0] += 1.0
    assert net.w1[0, 0] != dup.w1[0, 0]


def test_checkpoint_roundtrip_exact(tmp_path):
    net = make_net(11)
    meta = {"n": 2, "k": 1, "seed": 11, "episodes_trained": 5,
            "budget_per_episode": 100}
    path = str(tmp_path / "e.json")
    save_checkpoint(ExpertCheckpoint(network=net, metadata=meta), path)
    back = load_checkpoint(path)
    np.testing.assert_array_equal(back.network.w1, net.w1)
    np.testing.assert_array_equal(back.network.b1, net.b1)
    np.testing.assert_array_equal(back.network.w2, net.w2)
    assert back.network.b2 == net.b2
    assert back.metadata == meta
    assert back.feature_version == "at-v1"
    doc = json.loads(open(path).read())
    assert doc["dims"] == list(DIMS)
    assert len(doc["weights"][0]) == HIDDEN * 12
    assert len(doc["biases"][1]) == 1


def test_checkpoint_version_mismatch(tmp_path):
    net = make_net(0)
    path = str(tmp_path / "e.json")
    save_checkpoint(ExpertCheckpoint(network=net, metadata={}), path)
    doc = json.loads(open(path).read())
    doc["feature_version"] = "at-v0"
    open(path, "w").write(json.dumps(doc))
    with pytest.raises(CheckpointError, match="at-v0.*at-v1"):
        load_checkpoint(path)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("weights"),
    lambda d: d.__setitem__("dims", [12, 32, 1]),
    lambda d: d["weights"][0].pop(),
    lambda d: d["biases"][1].append(0.0),
])
def test_checkpoint_malformed_rejected(tmp_path, mutate):
    net = make_net(0)
    path = str(tmp_path / "e.json")
    save_checkpoint(ExpertCheckpoint(network=net, metadata={}), path)
    doc = json.loads(open(path).read())
    mutate(doc)
    open(path, "w").write(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_not_json(tmp_path):
    path = str(tmp_path / "junk.json")
    open(path, "w").write("not a checkpoint")
    with pytest.raises(CheckpointError, match="malformed"):
        load_checkpoint(path)


def test_softmax_frozen_two_point():
    p = softmax(np.array([0.0, 1.0]), temperature=2.0)
    np.testing.assert_allclose(p, [0.37754, 0.62246], atol=5e-6)
    assert abs(p.sum() - 1.0) < 1e-12


def test_softmax_low_temperature_is_greedy():
    p = softmax(np.array([0.3, -0.2, 0.31, 0.0]), temperature=1e-3)
    assert p[2] > 0.999


def test_softmax_shift_invariance():
    q = np.array([-3.0, -1.0, -2.0])
    np.testing.assert_allclose(softmax(q, 2.0), softmax(q + 100.0, 2.0),
                               atol=1e-12)


def test_confidence_uniform_and_single():
    dist_u = type("D", (), {"probabilities": np.full(4, 0.25)})()
    ent, margin = confidence(dist_u)
    assert abs(ent - math.log(4)) < 1e-9
    assert abs(margin) < 1e-12
    dist_1 = type("D", (), {"probabilities": np.array([1.0])})()
    assert confidence(dist_1) == (0.0, 1.0)


def test_action_distribution_over_frontier():
    sys_ = build_at(2, 1)
    h = init_exploration(sys_)
    pol = RandomPolicy()
    pol.reset(h, 0)
    for _ in range(4):
        h.expand(pol.select(h))
    net = make_net(5)
    dist = action_distribution(net, h, temperature=2.0)
    np.testing.assert_array_equal(dist.rows, h.active_rows())
    assert dist.q.shape == dist.rows.shape
    assert abs(dist.probabilities.sum() - 1.0) < 1e-12
    # accepts a checkpoint wrapper too
    ck = ExpertCheckpoint(network=net, metadata={})
    dist2 = action_distribution(ck, h, temperature=2.0)
    np.testing.assert_array_equal(dist.q, dist2.q)


def test_action_distribution_empty_frontier():
    sys_ = build_at(1, 1)
    h = init_exploration(sys_)
    pol = RandomPolicy()
    pol.reset(h, 0)
    while h.n_active > 0:
        h.expand(pol.select(h))
    with pytest.raises(ValueError, match="no expandable"):
        action_distribution(make_net(0), h)
