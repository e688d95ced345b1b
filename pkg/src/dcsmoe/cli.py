"""Command line front end.

Exit codes: 0 on success, 1 when synthesis or verification fails (no
controller, losing instance, violations found), 2 for usage and input
errors.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

from . import system
from .atgen import build_at, instance_stats
from .engine import Controller, verify_controller
from .evalgrid import (baseline_runner, eval_grid, grid_cells, moe_runner,
                       overhead_report, profile_experts, read_rows,
                       single_runner, solved_tables, write_manifest,
                       write_rows)
from .gate import (HistoryDataset, MixtureConfig, run_moe_episode,
                   select_mixture)
from .heatmap import heatmap_svg
from .oracle import oracle_solve
from .qnet import load_checkpoint, save_checkpoint
from .training import TrainConfig, save_metrics, train_expert


def _seeds(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _stem(path: str) -> str:
    base = os.path.basename(path)
    for suffix in (".history.csv", ".json", ".csv"):
        if base.endswith(suffix):
            return base[:-len(suffix)]
    return os.path.splitext(base)[0]


def _load_experts(paths: list[str]):
    return [load_checkpoint(p) for p in paths], [_stem(p) for p in paths]


def _progress(row) -> None:
    print(f"  {row.policy} n={row.n} k={row.k} seed={row.seed} "
          f"solved={str(row.solved).lower()} steps={row.steps} "
          f"wall={row.wall_ms:.1f}ms", flush=True)


def cmd_gen_at(args) -> int:
    sys_ = build_at(args.n, args.k)
    with open(args.out, "w") as f:
        f.write(system.serialize(sys_))
    print(f"wrote AT({args.n},{args.k}) with {len(sys_.components)} "
          f"components, {len(sys_.alphabet)} labels -> {args.out}")
    if args.stats:
        st = instance_stats(sys_, state_cap=args.state_cap)
        print(f"reachable states: {st['reachable_states']}")
        print(f"reachable transitions: {st['reachable_transitions']}")
    return 0


def cmd_oracle(args) -> int:
    sys_ = build_at(args.n, args.k)
    table = oracle_solve(sys_, state_cap=args.state_cap)
    verdict, rank = table[sys_.initial_state]
    wins = sum(1 for v, _ in table.values() if v == "Winning")
    print(f"states: {len(table)}  winning: {wins}  "
          f"losing: {len(table) - wins}")
    print(f"initial verdict: {verdict}"
          + (f"  rank: {rank}" if rank is not None else ""))
    return 0 if verdict == "Winning" else 1


def cmd_synth(args) -> int:
    sys_ = build_at(args.n, args.k)
    if args.policy in ("random", "bfs", "dfs"):
        res = baseline_runner(args.policy)(sys_, args.n, args.k, args.seed,
                                           args.budget)
    elif args.policy == "expert":
        if not args.checkpoint:
            print("--policy expert needs --checkpoint", file=_sys.stderr)
            return 2
        experts, _ = _load_experts(args.checkpoint[:1])
        res = single_runner(experts[0], args.temperature)(
            sys_, args.n, args.k, args.seed, args.budget)
    else:  # soft / hard
        if not args.checkpoint or not args.history \
                or len(args.checkpoint) != len(args.history):
            print("--policy soft/hard needs matching --checkpoint and "
                  "--history lists", file=_sys.stderr)
            return 2
        experts, _ = _load_experts(args.checkpoint)
        histories = [HistoryDataset.load(p) for p in args.history]
        cfg = MixtureConfig(mode=args.policy, beta=args.beta,
                            gamma=args.gamma, temperature=args.temperature)
        res, gw = run_moe_episode(sys_, experts, histories, args.n, args.k,
                                  cfg, args.budget, args.seed)
        print(gw.describe())
    print(f"verdict: {res.verdict_s0}  steps: {res.steps}  "
          f"return: {res.return_value}  discovered: {res.discovered}  "
          f"wall: {res.wall_time * 1000.0:.1f}ms")
    if res.solved and args.controller:
        with open(args.controller, "w") as f:
            f.write(res.controller.to_json())
        print(f"controller -> {args.controller}")
    return 0 if res.solved else 1


def cmd_verify(args) -> int:
    with open(args.system) as f:
        sys_ = system.parse(f.read())
    with open(args.controller) as f:
        ctrl = Controller.from_json(f.read())
    report = verify_controller(sys_, ctrl)
    if report.ok:
        print("controller ok")
        return 0
    for v in report.violations:
        print(f"violation: {v}")
    return 1


def cmd_train(args) -> int:
    cfg = TrainConfig(episodes=args.episodes, budget=args.budget)
    ckpt, metrics = train_expert(args.n, args.k, cfg, seed=args.seed)
    save_checkpoint(ckpt, args.out)
    solved = sum(m.solved for m in metrics)
    print(f"trained AT({args.n},{args.k}) seed={args.seed}: "
          f"{solved}/{len(metrics)} episodes solved, "
          f"final steps {metrics[-1].steps} -> {args.out}")
    if args.metrics:
        save_metrics(metrics, args.metrics)
        print(f"metrics -> {args.metrics}")
    return 0


def cmd_profile(args) -> int:
    experts, ids = _load_experts(args.checkpoint)
    os.makedirs(args.out_dir, exist_ok=True)
    progress = _progress if args.verbose else None
    histories, rows = profile_experts(
        experts, ids, n_max=args.n_max, k_max=args.k_max,
        budget=args.budget, temperature=args.temperature,
        workers=args.workers, progress=progress)
    files = []
    for ds in histories:
        path = os.path.join(args.out_dir, f"{ds.expert_id}.history.csv")
        ds.save(path)
        files.append(path)
        print(f"{ds.expert_id}: solved {len(ds.records)} cells -> {path}")
    rows_path = os.path.join(args.out_dir, "profile.csv")
    write_rows(rows_path, rows)
    files.append(rows_path)
    write_manifest(os.path.join(args.out_dir, "profile.manifest.json"),
                   "profile",
                   {"n_max": args.n_max, "k_max": args.k_max,
                    "budget": args.budget, "experts": ids}, files)
    return 0


def cmd_select(args) -> int:
    rows = read_rows(args.profile)
    table = solved_tables(rows)
    rounds = select_mixture(table, args.size)
    with open(args.out, "w") as f:
        f.write("round,expert_id,marginal_solved,cumulative_solved\n")
        for r in rounds:
            f.write(f"{r.round},{r.expert_id},{r.marginal_solved},"
                    f"{r.cumulative_solved}\n")
    for r in rounds:
        print(f"round {r.round}: {r.expert_id} "
              f"(+{r.marginal_solved}, total {r.cumulative_solved})")
    print(f"selection -> {args.out}")
    return 0


def _read_selection(path: str) -> list[str]:
    ids = []
    with open(path) as f:
        header = f.readline().strip()
        if header != "round,expert_id,marginal_solved,cumulative_solved":
            raise ValueError(f"bad selection header: {header}")
        for line in f:
            line = line.strip()
            if line:
                ids.append(line.split(",")[1])
    return ids


def cmd_eval_grid(args) -> int:
    experts, ids = _load_experts(args.checkpoint)
    by_id = dict(zip(ids, experts))
    histories = {_stem(p): HistoryDataset.load(p) for p in args.history}
    runners = []
    if args.singles:
        for eid in ids:
            runners.append((eid, single_runner(by_id[eid],
                                               args.temperature)))
    if args.selection:
        order = _read_selection(args.selection)
        for t in range(1, len(order) + 1):
            sub = order[:t]
            exps = [by_id[eid] for eid in sub]
            hists = [histories[eid] for eid in sub]
            cfg = MixtureConfig(mode=args.mode, beta=args.beta,
                                gamma=args.gamma,
                                temperature=args.temperature)
            runners.append((f"{args.mode}-t{t}",
                            moe_runner(exps, hists, cfg)))
    if not runners:
        print("nothing to evaluate: no singles and no selection",
              file=_sys.stderr)
        return 2
    progress = _progress if args.verbose else None
    rows = eval_grid(runners, grid_cells(args.n_max, args.k_max),
                     _seeds(args.seeds), args.budget, workers=args.workers,
                     progress=progress)
    write_rows(args.out, rows)
    counts = {}
    for r in rows:
        counts.setdefault(r.policy, 0)
        counts[r.policy] += r.solved
    for name, c in counts.items():
        print(f"{name}: {c} solved runs")
    write_manifest(args.out + ".manifest.json", "eval-grid",
                   {"n_max": args.n_max, "k_max": args.k_max,
                    "budget": args.budget, "seeds": _seeds(args.seeds),
                    "mode": args.mode, "experts": ids}, [args.out])
    print(f"grid -> {args.out}")
    if args.overhead:
        heavy, light = args.overhead.split(":")
        rep = overhead_report(rows, heavy, light)
        print(f"overhead {heavy} vs {light}: "
              f"common cells {rep['common_cells']:.0f}, "
              f"ms/step {rep['ms_per_step_heavy']:.3f} vs "
              f"{rep['ms_per_step_light']:.3f}, "
              f"wall ratio {rep['wall_ratio']:.2f}")
    return 0


def cmd_plot(args) -> int:
    rows = read_rows(args.grid)
    svg = heatmap_svg(rows, args.policy, n_max=args.n_max, k_max=args.k_max)
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"heatmap -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dcsmoe",
        description="directed controller synthesis with mixture-of-experts "
                    "exploration")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-at", help="emit a landing instance as JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", action="store_true",
                   help="also count reachable states (exhaustive)")
    p.add_argument("--state-cap", type=int, default=5_000_000)
    p.set_defaults(fn=cmd_gen_at)

    p = sub.add_parser("oracle", help="exact fixpoint solve of an instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--state-cap", type=int, default=5_000_000)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("synth", help="run one synthesis episode")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--policy", default="random",
                   choices=["random", "bfs", "dfs", "expert", "soft",
                            "hard"])
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", action="append", default=[])
    p.add_argument("--history", action="append", default=[])
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--controller", help="write the controller here")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("verify", help="check a controller against a system")
    p.add_argument("--system", required=True)
    p.add_argument("--controller", required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("train", help="train one expert on AT(n,k)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("profile",
                       help="run experts alone over the profiling grid")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("select",
                       help="greedy expert subset from a profile table")
    p.add_argument("--profile", required=True)
    p.add_argument("--size", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("eval-grid", help="evaluate policies over a grid")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--history", action="append", default=[])
    p.add_argument("--selection")
    p.add_argument("--mode", default="soft", choices=["soft", "hard"])
    p.add_argument("--singles", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--overhead", metavar="HEAVY:LIGHT",
                   help="print a per-step cost comparison")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval_grid)

    p = sub.add_parser("plot", help="render a policy heatmap to SVG")
    p.add_argument("--grid", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
