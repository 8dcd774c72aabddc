"""Wiring a :class:`RunConfig` into live components, plus checkpoint bundles."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .agent import Agent, EpisodeTrace, random_baseline, success_summary
from .config import RunConfig, from_dict
from .encoder import EpisodeStore, LearnedEncoder, OneHotEncoder, observation_table, train_encoder
from .gridworld import (NUM_ACTIONS, GridMap, GridWorld, builtin_map, builtin_map_names,
                        default_goal_state, read_map)
from .landmarks import LandmarkGraph
from .successor import LearnedSF, SFLearner

# order of the per-component generators split from the root seed
STREAMS = ("env", "sf", "agent", "encoder", "eval")


def resolve_map(name: str) -> GridMap:
    if name in builtin_map_names():
        return builtin_map(name)
    stem = Path(name).stem
    if not Path(name).exists() and stem in builtin_map_names():
        return builtin_map(stem)
    return read_map(name)


def split_rngs(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


def random_walk_store(env: GridWorld, transitions: int, rng: np.random.Generator) -> EpisodeStore:
    store = EpisodeStore()
    total = 0
    while total < transitions:
        ep = [env.reset()]
        while not env.done and total < transitions:
            ep.append(env.step(int(rng.integers(NUM_ACTIONS)))[0])
            total += 1
        store.add_episode(ep)
    return store


@dataclass
class Run:
    config: RunConfig
    grid: GridMap
    env: GridWorld
    encoder: object
    learner: SFLearner
    provider: LearnedSF
    graph: LandmarkGraph
    agent: Agent
    rngs: dict

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def train(self, steps: int | None = None, sink=None, trace_sink=None) -> list[dict]:
        steps = self.config.run.steps if steps is None else steps
        records = []
        while self.agent.step < steps:
            trace: EpisodeTrace = self.agent.explore_episode(step_limit=steps)
            rec = trace.metrics_record(self.agent.step)
            rec["config_hash"] = self.config_hash
            records.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec, sort_keys=True) + "\n")
            if trace_sink is not None:
                trace_sink.write(trace.to_json() + "\n")
        return records

    def goal_pair(self) -> tuple[int, int]:
        start = self.grid.state_id(self.grid.start_state())
        goal = self.grid.state_id(default_goal_state(self.grid, self.env.table))
        return start, goal

    def eval_budget(self) -> int:
        return self.env.time_limit

    def evaluate_fixed(self, trials: int) -> list[tuple[bool, int]]:
        start, goal = self.goal_pair()
        self.agent.rng = self.rngs["eval"]
        return [self.agent.evaluate(start, goal, self.eval_budget()) for _ in range(trials)]

    def random_baseline_fixed(self, trials: int) -> list[tuple[bool, int]]:
        start, goal = self.goal_pair()
        rng = self.rngs["eval"]
        return [random_baseline(self.env.table, start, goal, self.eval_budget(), rng)
                for _ in range(trials)]

    # -- checkpoint bundle ---------------------------------------------------------
    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.learner.arrays("sf"))
        out.update(self.learner.buffer.arrays("buffer"))
        out.update(self.graph.arrays("graph"))
        if isinstance(self.encoder, LearnedEncoder):
            out.update(self.encoder.arrays("encoder"))
        out["agent.counters"] = np.array([self.agent.step, self.agent.episode], dtype=np.int64)
        out["agent.visited"] = np.array(sorted(self.agent.visited), dtype=np.int64).reshape(-1, 2)
        return out

    def meta(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config.to_dict(),
            "rng_states": {k: g.bit_generator.state for k, g in self.rngs.items()},
            "goal_insertion": f"temporary goal node linked from the top {self.config.agent.k_goal} "
                              "landmarks by SFS with weight exp(-1)",
        }

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.arrays(), self.meta())


def build(cfg: RunConfig) -> Run:
    rngs = split_rngs(cfg.run.seed)
    grid = resolve_map(cfg.run.map)
    env = GridWorld(grid, time_limit=cfg.run.time_limit or None,
                    random_spawn=cfg.run.random_spawn, rng=rngs["env"])
    if cfg.run.encoder == "learned":
        e = cfg.encoder
        encoder = LearnedEncoder(observation_table(grid), rngs["encoder"], e.hidden, e.out_dim, e.alpha)
        store = random_walk_store(GridWorld(grid, random_spawn=cfg.run.random_spawn,
                                            rng=rngs["encoder"]),
                                  e.pretrain_transitions, rngs["encoder"])
        train_encoder(encoder, store, e.pretrain_steps, rngs["encoder"], e.lr, e.batch_size,
                      e.margin, e.k_pos, e.u_neg, e.l_neg)
    else:
        encoder = OneHotEncoder(env.num_states)
    learner = SFLearner(encoder, NUM_ACTIONS, cfg.sf, rngs["sf"])
    provider = LearnedSF(learner)
    graph = LandmarkGraph(cfg.graph)
    agent = Agent(env, provider, graph, rngs["agent"], cfg.agent, cfg.sfs, learner=learner)
    return Run(cfg, grid, env, encoder, learner, provider, graph, agent, rngs)


def load_run(path: str | Path) -> Run:
    arrays, meta = checkpoint.load(path)
    cfg = from_dict(meta["config"])
    run = build(cfg)
    run.learner.load_arrays(arrays, "sf")
    run.learner.buffer.load_arrays(arrays, "buffer")
    if isinstance(run.encoder, LearnedEncoder):
        run.encoder.load_arrays(arrays, "encoder")
    run.graph = LandmarkGraph.from_arrays(arrays, cfg.graph, "graph")
    run.agent.graph = run.graph
    run.agent.step, run.agent.episode = (int(v) for v in arrays["agent.counters"])
    run.agent.visited = {(int(x), int(y)) for x, y in arrays["agent.visited"]}
    for k, state in meta["rng_states"].items():
        run.rngs[k].bit_generator.state = state
    return run


def seed_summary(results_by_seed: dict[int, list[tuple[bool, int]]]) -> dict:
    rates = [float(np.mean([ok for ok, _ in r])) for r in results_by_seed.values()]
    out = success_summary(rates)
    out["per_seed"] = {str(k): v for k, v in zip(results_by_seed, rates)}
    return out
