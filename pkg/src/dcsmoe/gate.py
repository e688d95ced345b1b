"""Similarity-gated mixture of experts for synthesis episodes.

Each expert carries a history of instances it solved (family parameters and
step counts).  For a query instance the gate combines three signals per
expert:

  a  prior strength: a Gaussian-kernel estimate of the expert's step cost
     at the query parameters, standardized across experts (negated first,
     so cheaper is stronger).  Experts whose history carries no mass near
     the query get an infinite estimate and are floored two standard units
     below the weakest finite expert.
  H  entropy (nats) of the expert's action distribution at the initial
     frontier: high entropy means the expert has no opinion.
  M  top-2 margin of that distribution: a large margin means a confident
     favorite action.

Logits a - beta*H + gamma*M pass through a plain softmax (no temperature).
The gate is computed once at the initial state and stays fixed for the
whole episode; soft mode runs the g-weighted mixture policy, hard mode
runs the single top-gate expert alone.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .engine import (Exploration, SynthesisResult, UNKNOWN, init_exploration,
                     run_episode)
from .policies import ExpertMixturePolicy
from .qnet import ExpertCheckpoint, action_distribution, confidence


# ----------------------------------------------------------------------
# solve histories
# ----------------------------------------------------------------------

@dataclass
class HistoryDataset:
    """Solved instances of one expert: (n, k) -> fewest expansions seen."""
    expert_id: str
    records: dict[tuple[int, int], int] = field(default_factory=dict)

    def add(self, n: int, k: int, steps: int) -> None:
        key = (int(n), int(k))
        prev = self.records.get(key)
        if prev is None or steps < prev:
            self.records[key] = int(steps)

    def save(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["n", "k", "steps"])
            for (n, k) in sorted(self.records):
                w.writerow([n, k, self.records[(n, k)]])

    @staticmethod
    def load(path: str, expert_id: str | None = None) -> "HistoryDataset":
        if expert_id is None:
            expert_id = os.path.splitext(os.path.basename(path))[0]
        ds = HistoryDataset(expert_id)
        with open(path, newline="") as f:
            rows = csv.reader(f)
            header = next(rows, None)
            if header != ["n", "k", "steps"]:
                raise ValueError(f"bad history header in {path}: {header}")
            for line in rows:
                if not line:
                    continue
                n, k, steps = (int(v) for v in line)
                ds.add(n, k, steps)
        return ds


def estimate_step_cost(history: HistoryDataset, n_q: int, k_q: int,
                       sigma_n: float = 1.0, sigma_k: float = 1.0,
                       eps: float = 1e-8) -> float:
    """Gaussian-kernel regression of solve cost at the query parameters.

    Returns inf when the history has (numerically) no mass near the query,
    which downstream standardization treats as "expert does not apply".
    """
    num = 0.0
    den = 0.0
    for (n_j, k_j) in sorted(history.records):
        d2 = ((n_j - n_q) / sigma_n) ** 2 + ((k_j - k_q) / sigma_k) ** 2
        w = math.exp(-0.5 * d2)
        num += w * history.records[(n_j, k_j)]
        den += w
    if den <= eps:
        return math.inf
    return num / den


def prior_strengths(s_hats, eps: float = 1e-8) -> np.ndarray:
    """Standardize negated cost estimates across experts (population std).

    Infinite estimates land 2.0 below the weakest finite expert; if no
    estimate is finite nobody gets an edge and all strengths are zero.
    A single finite expert standardizes to exactly zero.
    """
    s = np.asarray(s_hats, dtype=np.float64)
    a = np.zeros(s.shape[0], dtype=np.float64)
    fin = np.isfinite(s)
    if not fin.any():
        return a
    neg = -s[fin]
    a[fin] = (neg - neg.mean()) / (neg.std() + eps)
    if not fin.all():
        a[~fin] = a[fin].min() - 2.0
    return a


# ----------------------------------------------------------------------
# the gate
# ----------------------------------------------------------------------

@dataclass
class GatingWeights:
    """Per-expert gate computed once at the initial state of an episode."""
    expert_ids: list[str]
    a: np.ndarray         # prior strengths
    entropy: np.ndarray   # H per expert, nats
    margin: np.ndarray    # top-2 margin per expert
    logits: np.ndarray
    g: np.ndarray         # softmax of logits
    beta: float
    gamma: float
    temperature: float    # expert action temperature (not used by the gate)

    def describe(self) -> str:
        lines = ["gate:"]
        for i, eid in enumerate(self.expert_ids):
            lines.append(
                f"  expert={eid} a={self.a[i]:+.6f} H={self.entropy[i]:.6f} "
                f"M={self.margin[i]:.6f} logit={self.logits[i]:+.6f} "
                f"g={self.g[i]:.6f}")
        return "\n".join(lines)


def gating_weights(a, entropy, margin, beta: float = 1.0,
                   gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Combine the three signals into logits and softmax gate weights."""
    a = np.asarray(a, dtype=np.float64)
    logits = a - beta * np.asarray(entropy, dtype=np.float64) \
               + gamma * np.asarray(margin, dtype=np.float64)
    z = logits - logits.max()
    e = np.exp(z)
    return logits, e / e.sum()


@dataclass
class MixtureConfig:
    mode: str = "soft"            # "soft" or "hard"
    beta: float = 1.0
    gamma: float = 1.0
    temperature: float = 2.0
    sigma_n: float = 1.0
    sigma_k: float = 1.0
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.mode not in ("soft", "hard"):
            raise ValueError(f"mode must be 'soft' or 'hard', got {self.mode!r}")


def compute_gate(experts: list[ExpertCheckpoint],
                 histories: list[HistoryDataset], n_q: int, k_q: int,
                 h0: Exploration, cfg: MixtureConfig) -> GatingWeights:
    """Evaluate every gating signal at the initial exploration state."""
    s_hats = [estimate_step_cost(d, n_q, k_q, cfg.sigma_n, cfg.sigma_k,
                                 cfg.eps) for d in histories]
    a = prior_strengths(s_hats, cfg.eps)
    m = len(experts)
    ent = np.zeros(m)
    mar = np.ones(m)
    # a pre-classified initial state never consults the policy; keep the
    # degenerate single-action convention (H=0, M=1) for the record
    if h0.verdict[h0.s0] == UNKNOWN and h0.n_active > 0:
        for i, expert in enumerate(experts):
            dist = action_distribution(expert, h0, cfg.temperature)
            ent[i], mar[i] = confidence(dist)
    logits, g = gating_weights(a, ent, mar, cfg.beta, cfg.gamma)
    ids = [d.expert_id for d in histories]
    return GatingWeights(expert_ids=ids, a=a, entropy=ent, margin=mar,
                         logits=logits, g=g, beta=cfg.beta, gamma=cfg.gamma,
                         temperature=cfg.temperature)


def run_moe_episode(sys, experts: list[ExpertCheckpoint],
                    histories: list[HistoryDataset], n_q: int, k_q: int,
                    cfg: MixtureConfig, budget: int,
                    seed: int = 0) -> tuple[SynthesisResult, GatingWeights]:
    """One synthesis episode under the gated mixture.

    The gate is evaluated once on a fresh initial state, then the episode
    runs to completion with those weights frozen.  Hard mode degenerates
    to the top-gate expert alone (ties to the lowest expert index).
    """
    if not experts:
        raise ValueError("need at least one expert")
    if len(experts) != len(histories):
        raise ValueError("experts and histories must align")
    gw = compute_gate(experts, histories, n_q, k_q, init_exploration(sys),
                      cfg)
    nets = [e.network for e in experts]
    if cfg.mode == "hard":
        top = int(np.argmax(gw.g))
        policy = ExpertMixturePolicy([nets[top]], [1.0], cfg.temperature)
    else:
        policy = ExpertMixturePolicy(nets, gw.g, cfg.temperature)
    result = run_episode(sys, policy, budget, seed)
    return result, gw


# ----------------------------------------------------------------------
# expert set selection
# ----------------------------------------------------------------------

@dataclass
class SelectionRound:
    round: int
    expert_id: str
    marginal_solved: int
    cumulative_solved: int


def select_mixture(per_expert_solved: dict[str, dict[tuple[int, int], int]],
                   size: int) -> list[SelectionRound]:
    """Greedy set-cover over solved instances.

    Each round picks the expert adding the most newly covered instances;
    ties fall to the lower total step count over the expert's own solved
    set, then to the lexicographically lowest expert id.  Stops early when
    every expert has been taken.
    """
    if not per_expert_solved:
        raise ValueError("empty profiling table: nothing to select from")
    if size < 1:
        raise ValueError("selection size must be positive")
    covered: set[tuple[int, int]] = set()
    taken: set[str] = set()
    out: list[SelectionRound] = []
    for rnd in range(1, size + 1):
        best_key = None
        best_id = None
        for eid in sorted(per_expert_solved):
            if eid in taken:
                continue
            cells = per_expert_solved[eid]
            marginal = len(set(cells) - covered)
            key = (-marginal, sum(cells.values()), eid)
            if best_key is None or key < best_key:
                best_key, best_id = key, eid
        if best_id is None:
            break
        taken.add(best_id)
        covered |= set(per_expert_solved[best_id])
        out.append(SelectionRound(round=rnd, expert_id=best_id,
                                  marginal_solved=-best_key[0],
                                  cumulative_solved=len(covered)))
    return out
