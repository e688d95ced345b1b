"""Q-learning for exploration experts.

One expert is trained on a single instance (one (n, k) of the landing
family).  Episodes run the exploration engine under an epsilon-greedy
behavior policy; every expansion costs reward -1, so Q estimates the
negative remaining expansions, clipped to [-budget, 0].  Targets come from
a periodically synced copy of the network; transitions bootstrap over the
*entire* successor frontier (the action set after the expansion), stored
as a feature matrix in the replay buffer.

A terminal transition is one whose expansion classified the initial state
(target is the bare reward); budget truncation is not terminal and keeps
bootstrapping.  Training on an instance whose initial state turns out to
be losing is aborted: no controller exists, so there is nothing to learn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atgen import build_at
from .engine import LOSE, UNKNOWN, WIN, init_exploration
from .features import materialize_rows
from .qnet import ExpertCheckpoint, QNetwork


@dataclass
class TrainConfig:
    episodes: int = 1000
    budget: int = 10_000
    replay_capacity: int = 50_000
    batch_size: int = 64
    warmup: int = 1_000          # stored transitions before updates begin
    lr: float = 1e-3
    discount: float = 1.0
    target_sync: int = 2_500     # gradient steps between target refreshes
    eps_final: float = 0.05
    eps_frac: float = 0.3        # fraction of episodes spent annealing


@dataclass
class EpisodeMetric:
    episode: int
    steps: int
    solved: bool


def epsilon_for(episode: int, cfg: TrainConfig) -> float:
    """Linear anneal 1.0 -> eps_final over the first eps_frac of training."""
    cutoff = max(1, int(round(cfg.eps_frac * cfg.episodes)))
    frac = min(1.0, episode / cutoff)
    return 1.0 - (1.0 - cfg.eps_final) * frac


class ReplayBuffer:
    """Ring buffer of (chosen features, successor frontier matrix | None)."""

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.data: list[tuple[np.ndarray, np.ndarray | None]] = []
        self.pos = 0

    def push(self, x: np.ndarray, next_x: np.ndarray | None) -> None:
        if len(self.data) < self.capacity:
            self.data.append((x, next_x))
        else:
            self.data[self.pos] = (x, next_x)
            self.pos = (self.pos + 1) % self.capacity

    def __len__(self) -> int:
        return len(self.data)


def _update(online: QNetwork, target: QNetwork, replay: ReplayBuffer,
            rng: np.random.Generator, cfg: TrainConfig) -> None:
    idx = rng.integers(len(replay), size=cfg.batch_size)
    batch = [replay.data[i] for i in idx]
    xb = np.stack([b[0] for b in batch]).astype(np.float64)

    y = np.full(cfg.batch_size, -1.0)
    live = [i for i, b in enumerate(batch) if b[1] is not None]
    if live:
        mats = [batch[i][1] for i in live]
        lens = np.array([m.shape[0] for m in mats])
        offsets = np.zeros(len(mats), dtype=np.int64)
        np.cumsum(lens[:-1], out=offsets[1:])
        qn = target.forward(np.concatenate(mats).astype(np.float64))
        y[live] = -1.0 + cfg.discount * np.maximum.reduceat(qn, offsets)
    np.clip(y, -cfg.budget, 0.0, out=y)

    hpre = xb @ online.w1.T + online.b1
    hact = np.maximum(hpre, 0.0)
    qb = hact @ online.w2 + online.b2

    d = (2.0 / cfg.batch_size) * (qb - y)
    gw2 = hact.T @ d
    gb2 = d.sum()
    dh = np.outer(d, online.w2)
    dh[hpre <= 0.0] = 0.0
    gw1 = dh.T @ xb
    gb1 = dh.sum(axis=0)

    online.w1 -= cfg.lr * gw1
    online.b1 -= cfg.lr * gb1
    online.w2 -= cfg.lr * gw2
    online.b2 -= cfg.lr * gb2


def train_expert(n: int, k: int, cfg: TrainConfig,
                 seed: int = 0) -> tuple[ExpertCheckpoint, list[EpisodeMetric]]:
    """Train one expert on AT(n, k); returns the checkpoint and per-episode
    metrics.  Fully deterministic for a fixed seed."""
    sys = build_at(n, k)
    rng = np.random.default_rng(seed)
    online = QNetwork.init(rng)
    target = online.copy()
    replay = ReplayBuffer(cfg.replay_capacity)
    n_updates = 0
    metrics: list[EpisodeMetric] = []

    for ep in range(cfg.episodes):
        eps = epsilon_for(ep, cfg)
        h = init_exploration(sys)
        prev_x: np.ndarray | None = None
        while h.verdict[h.s0] == UNKNOWN and h.steps < cfg.budget \
                and h.n_active > 0:
            rows = h.active_rows()
            x = materialize_rows(h, rows)
            if prev_x is not None:
                replay.push(prev_x, x)
            if rng.random() < eps:
                j = int(rng.integers(rows.size))
            else:
                j = int(np.argmax(online.forward(x.astype(np.float64))))
            prev_x = x[j].copy()
            h.expand(int(rows[j]))
            if len(replay) >= cfg.warmup:
                _update(online, target, replay, rng, cfg)
                n_updates += 1
                if n_updates % cfg.target_sync == 0:
                    target = online.copy()
        if h.verdict[h.s0] == UNKNOWN and h.n_active == 0:
            h.finalize_exhausted()

        if prev_x is not None:
            if h.verdict[h.s0] != UNKNOWN:
                replay.push(prev_x, None)
            else:
                # budget truncation: bootstrap from the frontier left behind
                replay.push(prev_x, materialize_rows(h, h.active_rows()))

        solved = bool(h.verdict[h.s0] == WIN)
        metrics.append(EpisodeMetric(episode=ep, steps=h.steps, solved=solved))
        if h.verdict[h.s0] == LOSE:
            raise RuntimeError(
                f"AT({n},{k}) has no controller from the initial state; "
                f"training aborted at episode {ep}")

    meta = {"n": n, "k": k, "seed": seed, "episodes_trained": cfg.episodes,
            "budget_per_episode": cfg.budget}
    return ExpertCheckpoint(network=online, metadata=meta), metrics


def save_metrics(metrics: list[EpisodeMetric], path: str) -> None:
    with open(path, "w") as f:
        f.write("episode,steps,solved\n")
        for m in metrics:
            f.write(f"{m.episode},{m.steps},{str(m.solved).lower()}\n")
