"""Command-line harness.

    sfl train --map fourroom --seed 7 --steps 200000
    sfl eval --checkpoint runs/fourroom-s7 --trials 100
    sfl heatmap --checkpoint runs/fourroom-s7 --ref-state 1,1,N
    sfl export-graph --checkpoint runs/fourroom-s7
    sfl coverage --checkpoint runs/fourroom-s7
    sfl replay --checkpoint runs/fourroom-s7 --episode 3

Hyperparameters come from ``--config FILE`` / ``--profile NAME`` and
``--set section.key=value`` (flags win over the file, the file over the
defaults). Outputs go under ``$SFL_OUTPUT_ROOT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .agent import coverage, difficulty_pairs
from .checkpoint import CheckpointError
from .config import ConfigError
from .gridworld import GridState, Heading
from .similarity import heatmap_csv

CHECKPOINT_FILE = "checkpoint.sflc"


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [run], [sf], [sfs], [graph], [agent], [encoder]")
    p.add_argument("--profile", help="named profile shipped with the package, e.g. gridworld")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config field (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run frontier-directed exploration and SF learning")
    _add_config_args(p)
    p.add_argument("--map")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", help="run directory (default: $SFL_OUTPUT_ROOT/<map>-s<seed>)")
    p.add_argument("--traces", action="store_true", help="also write per-episode traces")

    p = sub.add_parser("eval", help="goal-reaching trials from one or more checkpoints")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="run directory or checkpoint file (repeat for several seeds)")
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=("fixed", "random"), help="fixed or random spawn pairs")
    p.add_argument("--baseline", action="store_true", help="also score the uniform-random policy")
    p.add_argument("--out", help="output file for per-trial results (JSON lines)")

    p = sub.add_parser("heatmap", help="SFS of every state against a reference state (CSV)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ref-state", required=True, help="x,y,heading e.g. 1,1,N")
    p.add_argument("--out")

    p = sub.add_parser("export-graph", help="write the landmark graph as DOT")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")

    p = sub.add_parser("coverage", help="percentage of reachable cells visited during training")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("replay", help="print the steps of a recorded training episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", type=int, default=0)
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected SECTION.KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for flag, key in (("map", "run.map"), ("seed", "run.seed"), ("steps", "run.steps")):
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = str(v)
    return out


def _run_dir(path: str) -> Path:
    p = Path(path)
    return p.parent if p.is_file() else p


def _checkpoint_file(path: str) -> Path:
    p = Path(path)
    f = p if p.is_file() else p / CHECKPOINT_FILE
    if not f.exists():
        raise CheckpointError(f"no checkpoint at {f}")
    return f


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_train(args) -> int:
    from .experiment import build

    if args.config and args.profile:
        raise ConfigError("config", "give either --config or --profile, not both")
    path = args.config or (config_mod.profile_path(args.profile) if args.profile else None)
    cfg = config_mod.load(path, _overrides(args))
    out = Path(args.out or cfg.run.output_dir or
               config_mod.output_root() / f"{Path(cfg.run.map).stem}-s{cfg.run.seed}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(f"# config_hash = {cfg.config_hash()}\n" + cfg.to_ini())
    run = build(cfg)
    traces = open(out / "traces.jsonl", "w") if args.traces else None
    try:
        with open(out / "metrics.jsonl", "w") as sink:
            records = run.train(sink=sink, trace_sink=traces)
    finally:
        if traces is not None:
            traces.close()
    run.save(out / CHECKPOINT_FILE)
    last = records[-1] if records else {}
    print(json.dumps({"run_dir": str(out), "config_hash": cfg.config_hash(),
                      "steps": run.agent.step, "num_landmarks": last.get("num_landmarks"),
                      "num_edges": last.get("num_edges"), "coverage_pct": last.get("coverage_pct")}))
    return 0


def cmd_eval(args) -> int:
    from .experiment import load_run, seed_summary

    per_seed, baseline = {}, {}
    lines = []
    for ck in args.checkpoint:
        run = load_run(_checkpoint_file(ck))
        trials = args.trials or run.config.run.trials
        mode = args.mode or run.config.agent.eval_mode
        seed = run.config.run.seed
        if mode == "fixed":
            start, goal = run.goal_pair()
            pairs = [(start, goal, None, None)] * trials
        else:
            cand = run.env._closed_ids
            pairs = difficulty_pairs(run.env.table, cand, trials, run.config.agent.difficulty_bins,
                                     run.rngs["eval"])
        results = []
        run.agent.rng = run.rngs["eval"]
        for k, (s, g, dist, bin_) in enumerate(pairs):
            ok, steps = run.agent.evaluate(s, g, run.eval_budget())
            results.append((ok, steps))
            lines.append(json.dumps({"seed": seed, "trial": k, "start": s, "goal": g,
                                     "geodesic": dist, "bin": bin_, "success": ok, "steps": steps,
                                     "config_hash": run.config_hash}))
        per_seed[seed] = results
        if args.baseline:
            from .agent import random_baseline
            baseline[seed] = [random_baseline(run.env.table, s, g, run.eval_budget(), run.rngs["eval"])
                              for s, g, _, _ in pairs]
    if args.out:
        _write("\n".join(lines) + "\n", args.out)
    report = {"success": seed_summary(per_seed)}
    if baseline:
        report["random_baseline"] = seed_summary(baseline)
    s = report["success"]
    print(f"success rate {s['mean']:.3f} +/- {s['stderr']:.3f} (stderr over {s['seeds']} seeds)")
    print(json.dumps(report, sort_keys=True))
    return 0


def parse_ref_state(text: str, grid) -> int:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (3, 4):
        raise ConfigError("ref-state", "expected x,y,heading[,door_mask]")
    try:
        x, y = int(parts[0]), int(parts[1])
        heading = Heading[parts[2].upper()]
        mask = int(parts[3]) if len(parts) == 4 else 0
    except (ValueError, KeyError):
        raise ConfigError("ref-state", f"cannot parse {text!r}") from None
    try:
        return grid.state_id(GridState(x, y, heading, mask))
    except (KeyError, ValueError):
        raise ConfigError("ref-state", f"{text!r} is not a floor cell of {grid.name}") from None


def cmd_heatmap(args) -> int:
    from .experiment import load_run

    run = load_run(_checkpoint_file(args.checkpoint))
    ref = parse_ref_state(args.ref_state, run.grid)
    table = run.learner.sf_of_states(np.arange(run.env.num_states))
    _write(f"# config_hash = {run.config_hash}\n" + heatmap_csv(run.grid, ref, table), args.out)
    return 0


def cmd_export_graph(args) -> int:
    from .experiment import load_run

    run = load_run(_checkpoint_file(args.checkpoint))
    _write(f"// config_hash = {run.config_hash}\n" + run.graph.to_dot(run.grid), args.out)
    return 0


def cmd_coverage(args) -> int:
    from .experiment import load_run

    run = load_run(_checkpoint_file(args.checkpoint))
    pct = coverage(run.agent.visited, run.grid)
    print(json.dumps({"coverage_pct": round(pct, 6), "config_hash": run.config_hash}))
    return 0


def cmd_replay(args) -> int:
    from .experiment import resolve_map

    traces = _run_dir(args.checkpoint) / "traces.jsonl"
    if not traces.exists():
        raise CheckpointError(f"{traces} not found; train with --traces")
    cfg_file = _run_dir(args.checkpoint) / "config.ini"
    grid = resolve_map(config_mod.load(cfg_file).run.map)
    with open(traces) as f:
        for line in f:
            ep = json.loads(line)
            if ep["episode"] != args.episode:
                continue
            print("t,x,y,heading,action,source")
            for t, (s, a, s2, src) in enumerate(ep["transitions"]):
                st = grid.state_from_id(s2)
                print(f"{t + 1},{st.x},{st.y},{st.heading.name},{a},{'random' if src == 0 else 'goal'}")
            return 0
    raise CheckpointError(f"episode {args.episode} not in {traces}")


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "heatmap": cmd_heatmap,
            "export-graph": cmd_export_graph, "coverage": cmd_coverage, "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
