"""Grid evaluation of synthesis policies over the landing family.

Runs are addressed by (policy, n, k, seed) and produce one CSV row each.
Row order, and therefore file content, is deterministic for a fixed
configuration regardless of worker scheduling; wall-clock columns are the
only nondeterministic field.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import platform
import sys as _sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels, __version__
from .atgen import build_at
from .engine import (BfsPolicy, DfsPolicy, RandomPolicy, SynthesisResult,
                     run_episode)
from .gate import HistoryDataset, MixtureConfig, run_moe_episode
from .policies import ExpertMixturePolicy
from .qnet import ExpertCheckpoint

CSV_HEADER = "policy,n,k,seed,solved,steps,return,wall_time_ms"


@dataclass
class EvalRow:
    policy: str
    n: int
    k: int
    seed: int
    solved: bool
    steps: int
    return_value: int
    wall_ms: float

    def csv(self) -> str:
        return (f"{self.policy},{self.n},{self.k},{self.seed},"
                f"{str(self.solved).lower()},{self.steps},"
                f"{self.return_value},{self.wall_ms:.3f}")


# a runner maps (system, n, k, seed, budget) to a SynthesisResult
Runner = Callable[[object, int, int, int, int], SynthesisResult]

_BASELINES = {"random": RandomPolicy, "bfs": BfsPolicy, "dfs": DfsPolicy}


def baseline_runner(name: str) -> Runner:
    cls = _BASELINES[name]

    def run(sys, n, k, seed, budget):
        return run_episode(sys, cls(), budget, seed)
    return run


def single_runner(ckpt: ExpertCheckpoint, temperature: float = 2.0) -> Runner:
    def run(sys, n, k, seed, budget):
        policy = ExpertMixturePolicy([ckpt.network], [1.0], temperature)
        return run_episode(sys, policy, budget, seed)
    return run


def moe_runner(experts: list[ExpertCheckpoint],
               histories: list[HistoryDataset],
               cfg: MixtureConfig) -> Runner:
    def run(sys, n, k, seed, budget):
        result, _ = run_moe_episode(sys, experts, histories, n, k, cfg,
                                    budget, seed)
        return result
    return run


def grid_cells(n_max: int, k_max: int) -> list[tuple[int, int]]:
    return [(n, k) for n in range(1, n_max + 1) for k in range(1, k_max + 1)]


# worker state for forked pools; closures do not cross pickle boundaries
_POOL_RUNNERS: list[tuple[str, Runner]] = []
_POOL_BUDGET = 0


def _pool_init(runners, budget):
    global _POOL_RUNNERS, _POOL_BUDGET
    _POOL_RUNNERS = runners
    _POOL_BUDGET = budget


def _pool_task(args):
    ri, n, k, seed = args
    name, run = _POOL_RUNNERS[ri]
    res = run(build_at(n, k), n, k, seed, _POOL_BUDGET)
    return (ri, n, k, seed, res.solved, res.steps, res.return_value,
            res.wall_time * 1000.0)


def eval_grid(runners: list[tuple[str, Runner]],
              cells: list[tuple[int, int]], seeds: list[int], budget: int,
              workers: int | None = None,
              progress: Callable[[EvalRow], None] | None = None
              ) -> list[EvalRow]:
    """Evaluate every runner on every (cell, seed); rows come back sorted
    by (runner order, n, k, seed)."""
    tasks = [(ri, n, k, seed)
             for ri in range(len(runners))
             for (n, k) in cells
             for seed in seeds]
    if workers is None:
        workers = os.cpu_count() or 1
    rows: list[EvalRow] = []
    if workers <= 1:
        for ri, n, k, seed in tasks:
            name, run = runners[ri]
            res = run(build_at(n, k), n, k, seed, budget)
            row = EvalRow(name, n, k, seed, res.solved, res.steps,
                          res.return_value, res.wall_time * 1000.0)
            rows.append(row)
            if progress is not None:
                progress(row)
    else:
        ctx = multiprocessing.get_context("fork")
        order = {t: i for i, t in enumerate(tasks)}
        tagged: list[tuple[int, EvalRow]] = []
        with ctx.Pool(workers, initializer=_pool_init,
                      initargs=(runners, budget)) as pool:
            for out in pool.imap_unordered(_pool_task, tasks):
                ri, n, k, seed, solved, steps, ret, ms = out
                row = EvalRow(runners[ri][0], n, k, seed, solved, steps,
                              ret, ms)
                tagged.append((order[(ri, n, k, seed)], row))
                if progress is not None:
                    progress(row)
        tagged.sort(key=lambda t: t[0])
        rows = [row for _, row in tagged]
    return rows


def write_rows(path: str, rows: list[EvalRow]) -> None:
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in rows:
            f.write(r.csv() + "\n")


def read_rows(path: str) -> list[EvalRow]:
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"bad grid header in {path}: {header}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            pol, n, k, seed, solved, steps, ret, ms = line.split(",")
            rows.append(EvalRow(pol, int(n), int(k), int(seed),
                                solved == "true", int(steps), int(ret),
                                float(ms)))
    return rows


# ----------------------------------------------------------------------
# profiling and derived tables
# ----------------------------------------------------------------------

def profile_experts(ckpts: list[ExpertCheckpoint], ids: list[str],
                    n_max: int = 4, k_max: int = 4, budget: int = 10_000,
                    temperature: float = 2.0, workers: int | None = None,
                    progress=None
                    ) -> tuple[list[HistoryDataset], list[EvalRow]]:
    """Run every expert alone over the profiling grid and collect its solve
    history (fewest steps per solved cell)."""
    runners = [(eid, single_runner(c, temperature))
               for eid, c in zip(ids, ckpts)]
    rows = eval_grid(runners, grid_cells(n_max, k_max), [0], budget,
                     workers=workers, progress=progress)
    table = solved_tables(rows)
    out = []
    for eid in ids:
        ds = HistoryDataset(eid)
        for (n, k), steps in table.get(eid, {}).items():
            ds.add(n, k, steps)
        out.append(ds)
    return out, rows


def solved_tables(rows: list[EvalRow]
                  ) -> dict[str, dict[tuple[int, int], int]]:
    """policy -> {(n, k) -> fewest steps among solved runs}."""
    table: dict[str, dict[tuple[int, int], int]] = {}
    for r in rows:
        if not r.solved:
            continue
        cell = table.setdefault(r.policy, {})
        key = (r.n, r.k)
        if key not in cell or r.steps < cell[key]:
            cell[key] = r.steps
    return table


def solved_counts(rows: list[EvalRow]) -> dict[str, dict[int, int]]:
    """policy -> {seed -> number of solved cells}."""
    out: dict[str, dict[int, int]] = {}
    for r in rows:
        per = out.setdefault(r.policy, {})
        per.setdefault(r.seed, 0)
        if r.solved:
            per[r.seed] += 1
    return out


def median_solved(rows: list[EvalRow], policy: str) -> float:
    per = solved_counts(rows).get(policy, {})
    if not per:
        return 0.0
    return float(np.median(sorted(per.values())))


def overhead_report(rows: list[EvalRow], heavy: str,
                    light: str) -> dict[str, float]:
    """Per-step cost and total wall comparison on cells both policies
    solved at every seed."""
    by: dict[tuple[str, int, int], list[EvalRow]] = {}
    for r in rows:
        if r.policy in (heavy, light):
            by.setdefault((r.policy, r.n, r.k), []).append(r)
    cells = sorted({(n, k) for (p, n, k) in by})
    common = [c for c in cells
              if (heavy,) + c in by and (light,) + c in by
              and all(r.solved for r in by[(heavy,) + c])
              and all(r.solved for r in by[(light,) + c])]
    hv, lt, hw, lw = [], [], 0.0, 0.0
    for c in common:
        for r in by[(heavy,) + c]:
            if r.steps > 0:
                hv.append(r.wall_ms / r.steps)
            hw += r.wall_ms
        for r in by[(light,) + c]:
            if r.steps > 0:
                lt.append(r.wall_ms / r.steps)
            lw += r.wall_ms
    return {
        "common_cells": float(len(common)),
        "ms_per_step_heavy": float(np.median(hv)) if hv else float("nan"),
        "ms_per_step_light": float(np.median(lt)) if lt else float("nan"),
        "wall_ratio": (hw / lw) if lw > 0 else float("nan"),
    }


# ----------------------------------------------------------------------
# run manifests
# ----------------------------------------------------------------------

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str, command: str, params: dict,
                   files: list[str]) -> None:
    doc = {
        "command": command,
        "params": params,
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "backend": _kernels.ACTIVE_BACKEND,
            "package": __version__,
            "argv": _sys.argv[1:],
        },
        "files": {os.path.basename(p): _sha256(p) for p in files},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
