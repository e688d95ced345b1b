"""Q-value experts: a small MLP over transition features, plus checkpoint
serialization and softmax action distributions.

Architecture is fixed at 12-16-1 (ReLU hidden layer, linear output).  Q
values estimate the negative number of remaining expansions, so they live
in [-budget, 0] and greedy selection picks the transition believed to be
closest to finishing the synthesis.

Checkpoints are JSON with every float written at 17 significant digits,
which round-trips IEEE double exactly; loading a checkpoint whose feature
schema does not match this package is an error rather than a silent
misinterpretation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Exploration
from .features import FEATURE_VERSION, N_FEATURES, materialize_rows

HIDDEN = 16
DIMS = (N_FEATURES, HIDDEN, 1)


class CheckpointError(ValueError):
    """Raised for unreadable, malformed, or incompatible checkpoint files."""


@dataclass
class QNetwork:
    w1: np.ndarray  # (16, 12)
    b1: np.ndarray  # (16,)
    w2: np.ndarray  # (16,)
    b2: float

    @staticmethod
    def init(rng: np.random.Generator) -> "QNetwork":
        # uniform +-1/sqrt(fan_in) for weights and biases, drawn in
        # declaration order so a single generator reproduces the net
        s1 = 1.0 / np.sqrt(N_FEATURES)
        s2 = 1.0 / np.sqrt(HIDDEN)
        w1 = rng.uniform(-s1, s1, size=(HIDDEN, N_FEATURES))
        b1 = rng.uniform(-s1, s1, size=HIDDEN)
        w2 = rng.uniform(-s2, s2, size=HIDDEN)
        b2 = float(rng.uniform(-s2, s2))
        return QNetwork(w1, b1, w2, b2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q values for a feature matrix (n, 12) -> (n,), float64."""
        h = x @ self.w1.T + self.b1
        np.maximum(h, 0.0, out=h)
        return h @ self.w2 + self.b2

    def copy(self) -> "QNetwork":
        return QNetwork(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                        self.b2)


@dataclass
class ExpertCheckpoint:
    network: QNetwork
    metadata: dict
    feature_version: str = FEATURE_VERSION


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _vec(a) -> str:
    return "[" + ", ".join(_fmt(v) for v in np.asarray(a).ravel()) + "]"


def save_checkpoint(ckpt: ExpertCheckpoint, path: str) -> None:
    net = ckpt.network
    meta = json.dumps(ckpt.metadata, sort_keys=True)
    text = (
        "{\n"
        f'  "feature_version": {json.dumps(ckpt.feature_version)},\n'
        f'  "dims": [{N_FEATURES}, {HIDDEN}, 1],\n'
        '  "weights": [\n'
        f"    {_vec(net.w1)},\n"
        f"    {_vec(net.w2)}\n"
        "  ],\n"
        '  "biases": [\n'
        f"    {_vec(net.b1)},\n"
        f"    {_vec([net.b2])}\n"
        "  ],\n"
        f'  "metadata": {meta}\n'
        "}\n"
    )
    with open(path, "w") as f:
        f.write(text)


def load_checkpoint(path: str) -> ExpertCheckpoint:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError("malformed checkpoint: expected an object")
    for key in ("feature_version", "dims", "weights", "biases"):
        if key not in doc:
            raise CheckpointError(f"malformed checkpoint: missing {key!r}")
    version = doc["feature_version"]
    if version != FEATURE_VERSION:
        raise CheckpointError(
            f"feature version mismatch: checkpoint was written for "
            f"{version!r} but this package computes {FEATURE_VERSION!r}")
    if list(doc["dims"]) != list(DIMS):
        raise CheckpointError(f"unsupported dims {doc['dims']}")
    try:
        w1 = np.asarray(doc["weights"][0], dtype=np.float64)
        w2 = np.asarray(doc["weights"][1], dtype=np.float64)
        b1 = np.asarray(doc["biases"][0], dtype=np.float64)
        b2 = np.asarray(doc["biases"][1], dtype=np.float64)
    except (IndexError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint arrays: {exc}") from None
    if w1.size != HIDDEN * N_FEATURES or w2.shape != (HIDDEN,):
        raise CheckpointError("weight arrays have the wrong size")
    if b1.shape != (HIDDEN,) or b2.shape != (1,):
        raise CheckpointError("bias arrays have the wrong size")
    net = QNetwork(w1.reshape(HIDDEN, N_FEATURES), b1, w2, float(b2[0]))
    meta = doc.get("metadata", {})
    return ExpertCheckpoint(network=net, metadata=meta,
                            feature_version=version)


def softmax(q: np.ndarray, temperature: float) -> np.ndarray:
    """Boltzmann distribution over Q values, max-subtracted for stability."""
    z = (np.asarray(q, dtype=np.float64) - np.max(q)) / temperature
    e = np.exp(z)
    return e / e.sum()


@dataclass
class ActionDistribution:
    """Softmax policy of one expert over the expandable frontier."""
    rows: np.ndarray            # frontier row ids, ascending
    q: np.ndarray               # raw Q values, aligned with rows
    probabilities: np.ndarray   # softmax(q / T), aligned with rows
    temperature: float


def action_distribution(expert, h: Exploration,
                        temperature: float = 2.0) -> ActionDistribution:
    """Evaluate an expert on every expandable transition of the frontier."""
    net = expert.network if isinstance(expert, ExpertCheckpoint) else expert
    rows = h.active_rows()
    if rows.size == 0:
        raise ValueError("frontier has no expandable transitions")
    x = materialize_rows(h, rows).astype(np.float64)
    q = net.forward(x)
    return ActionDistribution(rows=rows, q=q,
                              probabilities=softmax(q, temperature),
                              temperature=temperature)


def confidence(dist: ActionDistribution) -> tuple[float, float]:
    """(entropy, top-2 margin) of an action distribution.

    Entropy is in nats.  A single-action frontier is maximally confident
    by convention: H = 0, M = 1.
    """
    p = dist.probabilities
    if p.size == 1:
        return 0.0, 1.0
    nz = p[p > 0]
    ent = float(-(nz * np.log(nz)).sum())
    top2 = np.sort(p)[-2:]
    return ent, float(top2[1] - top2[0])
