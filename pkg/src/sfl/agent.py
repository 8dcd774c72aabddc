"""Exploration / training loop, landmark traversal, evaluation and coverage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gridworld import NUM_ACTIONS, GridWorld, SourcePolicy, bfs_distances
from .landmarks import LandmarkGraph
from .planner import Done, Replan, Unreachable, next_waypoint, shortest_path
from .similarity import SFSConfig, ZeroNormSF, goal_q, greedy_from_q

FRONTIER_COUNT = "count"
FRONTIER_UNIFORM = "uniform"


@dataclass
class AgentConfig:
    n_front: int = 40
    n_explore: int = 40
    n_land: int = 8
    temperature: float = 1.0
    frontier_mode: str = FRONTIER_COUNT
    td_updates_per_segment: int = 1
    k_goal: int = 5
    eval_mode: str = "fixed"  # fixed | random
    difficulty_bins: int = 3

    def __post_init__(self):
        for name in ("n_front", "n_explore", "n_land", "td_updates_per_segment", "k_goal",
                     "difficulty_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.frontier_mode not in (FRONTIER_COUNT, FRONTIER_UNIFORM):
            raise ValueError(f"unknown frontier_mode {self.frontier_mode!r}")
        if self.eval_mode not in ("fixed", "random"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")


@dataclass
class EpisodeTrace:
    episode: int
    start_step: int
    transitions: list = field(default_factory=list)  # (s, a, s', source)
    localizations: list = field(default_factory=list)  # (step, landmark id)
    plans: list = field(default_factory=list)
    frontier_ids: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    num_landmarks: int = 0
    num_edges: int = 0
    coverage_pct: float = 0.0
    success: bool | None = None

    @property
    def steps(self) -> int:
        return len(self.transitions)

    def metrics_record(self, step: int) -> dict:
        return {
            "step": step,
            "num_landmarks": self.num_landmarks,
            "num_edges": self.num_edges,
            "coverage_pct": round(self.coverage_pct, 6),
            "frontier_id": self.frontier_ids[0] if self.frontier_ids else None,
            "success": self.success,
        }

    def to_json(self) -> str:
        return json.dumps({
            "episode": self.episode,
            "start_step": self.start_step,
            "transitions": [list(map(int, t)) for t in self.transitions],
            "localizations": self.localizations,
            "plans": self.plans,
            "frontier_ids": self.frontier_ids,
            "failures": self.failures,
        })


def frontier_probabilities(visit_counts, temperature: float = 1.0) -> np.ndarray:
    inv = 1.0 / np.maximum(np.asarray(visit_counts, dtype=float), 1.0)
    z = inv / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def sample_frontier(graph: LandmarkGraph, rng: np.random.Generator, temperature: float = 1.0,
                    mode: str = FRONTIER_COUNT, exclude=()) -> int | None:
    """Landmark id drawn with probability softmax(1 / visit_count)."""
    ids = [lm.id for lm in graph.landmarks[: graph.num_permanent] if lm.id not in exclude]
    if not ids:
        return None
    if mode == FRONTIER_UNIFORM:
        p = np.full(len(ids), 1.0 / len(ids))
    else:
        p = frontier_probabilities([graph.landmarks[i].visit_count for i in ids], temperature)
    return ids[int(rng.choice(len(ids), p=p))]


def coverage(visited_cells, grid) -> float:
    """Percentage of reachable floor cells visited at least once."""
    reachable = set(grid.floor_cells)
    return 100.0 * len(set(visited_cells) & reachable) / len(reachable)


class Agent:
    """Owns the environment, graph and SF provider for one run.

    ``learner`` may be None (fixed SF, e.g. the analytic oracle); otherwise
    random-exploration transitions go to its replay buffer and TD updates run
    after each exploration segment.
    """

    def __init__(self, env: GridWorld, provider, graph: LandmarkGraph, rng: np.random.Generator,
                 config: AgentConfig | None = None, sfs_config: SFSConfig | None = None,
                 learner=None):
        self.env = env
        self.provider = provider
        self.graph = graph
        self.rng = rng
        self.config = config or AgentConfig()
        self.sfs_config = sfs_config or SFSConfig()
        self.learner = learner
        self.step = 0
        self.episode = 0
        self.visited: set[tuple[int, int]] = set()
        self.cell_of = np.array([(st.x, st.y) for st in
                                 map(env.grid.state_from_id, range(env.num_states))])
        self.coverage_history: list[float] = []
        self._trace: EpisodeTrace | None = None
        self._step_limit: int | None = None

    # -- primitives -------------------------------------------------------------
    def _visit(self, sid: int) -> None:
        x, y = self.cell_of[sid]
        self.visited.add((int(x), int(y)))

    def _budget_left(self) -> int:
        left = self.env.remaining
        if self._step_limit is not None:
            left = min(left, self._step_limit - self.step)
        return max(left, 0)

    def _act(self, action: int, source: SourcePolicy) -> int:
        s = self.env.state_id
        s2, _, _ = self.env.step(action)
        self.step += 1
        self._visit(s2)
        self._trace.transitions.append((s, action, s2, int(source)))
        if source == SourcePolicy.RANDOM and self.learner is not None:
            self.learner.buffer.add(s, action, s2, self.episode, source)
        obs = self.graph.observe(s2, self.provider, self.step)
        if obs.localized:
            self._trace.localizations.append((self.step, obs.landmark))
        self.graph.maintain(self.step, self.provider)
        return s2

    def current_landmark(self) -> int:
        """Ungated argmax localization of the current state."""
        res = self.graph.nearest(self.provider.sf(self.env.state_id))
        return res[0] if res else None

    def _greedy(self, goal_sf: np.ndarray, eps: float) -> int:
        try:
            q = goal_q(self.provider.sf_sa(self.env.state_id), goal_sf)
        except ZeroNormSF:
            q = np.zeros(NUM_ACTIONS)
        return greedy_from_q(q, eps, self.rng)

    # -- traversal ---------------------------------------------------------------
    def traverse(self, target_id: int, budget: int, eps: float | None = None):
        """Follow the goal-conditioned policy toward landmark ``target_id``.

        Stops once localized to the target, when the budget is spent or when
        the episode ends; leaving the plan is handled by the caller between
        legs. Returns
        ``(trajectory, current_landmark, reached)``.
        """
        eps = self.sfs_config.epsilon_train if eps is None else eps
        traj: list[int] = []
        cur = self.current_landmark()
        if cur == target_id:
            return traj, cur, True
        goal_sf = self.graph.landmarks[target_id].sf
        while len(traj) < budget and self._budget_left() > 0:
            traj.append(self._act(self._greedy(goal_sf, eps), SourcePolicy.GOAL_CONDITIONED))
            cur = self.current_landmark()
            if cur == target_id:
                return traj, cur, True
        return traj, cur, False

    def navigate(self, target_id: int, budget: int) -> bool:
        """Plan to ``target_id`` and traverse leg by leg, replanning when off
        the plan; the leg that exhausts ``budget`` is recorded as a failure."""
        used = 0
        cur = self.current_landmark()
        plan = shortest_path(self.graph.edge_weights(), cur, target_id, self.step)
        while used < budget and self._budget_left() > 0:
            if plan is Unreachable:
                return False
            self._trace.plans.append(plan.to_record())
            nxt = next_waypoint(plan, cur)
            if nxt is Done:
                return True
            if nxt is Replan:
                plan = shortest_path(self.graph.edge_weights(), cur, target_id, self.step)
                continue
            # a leg may spend whatever is left of the path budget; it counts as
            # failed only if it ran out while holding at least its own n_land share
            src, allotted = cur, budget - used
            traj, cur, reached = self.traverse(nxt, allotted)
            used += len(traj)
            if not reached and used >= budget and allotted >= self.config.n_land:
                self.graph.record_failure(src, nxt, self.step)
                self._trace.failures.append((self.step, src, nxt))
            if not reached or next_waypoint(plan, cur) is Replan:
                plan = shortest_path(self.graph.edge_weights(), cur, target_id, self.step)
        return cur == target_id

    def explore_random(self, steps: int) -> list[int]:
        traj = []
        for _ in range(min(steps, self._budget_left())):
            traj.append(self._act(int(self.rng.integers(NUM_ACTIONS)), SourcePolicy.RANDOM))
        return traj

    def _train_sf(self) -> None:
        if self.learner is None or not self.learner.ready:
            return
        for _ in range(self.config.td_updates_per_segment):
            self.learner.td_update()

    # -- episodes -----------------------------------------------------------------
    def explore_episode(self, step_limit: int | None = None) -> EpisodeTrace:
        """One training episode of frontier-directed exploration."""
        cfg = self.config
        self._step_limit = step_limit
        trace = self._trace = EpisodeTrace(self.episode, self.step)
        s0 = self.env.reset()
        self._visit(s0)
        self.graph.begin_episode()
        self.graph.observe(s0, self.provider, self.step)
        while self._budget_left() > 0:
            tried: set[int] = set()
            while self.graph.edge_weights() and self._budget_left() > 0:
                frontier = sample_frontier(self.graph, self.rng, cfg.temperature,
                                           cfg.frontier_mode, exclude=tried)
                if frontier is None:
                    break
                cur = self.current_landmark()
                plan = shortest_path(self.graph.edge_weights(), cur, frontier, self.step)
                if plan is Unreachable:
                    tried.add(frontier)
                    continue
                trace.frontier_ids.append(frontier)
                budget = min(cfg.n_front, cfg.n_land * len(plan), self._budget_left())
                self.navigate(frontier, budget)
                break
            self.explore_random(cfg.n_explore)
            self._train_sf()
        self.episode += 1
        trace.num_landmarks = self.graph.num_permanent
        trace.num_edges = sum(1 for e in self.graph.edges.values() if e.active)
        trace.coverage_pct = coverage(self.visited, self.env.grid)
        self.coverage_history.append(trace.coverage_pct)
        self._step_limit = None
        return trace

    def train(self, total_steps: int, sink=None) -> list[dict]:
        """Run episodes until ``total_steps`` environment steps; returns the
        per-episode metrics records (also written to ``sink`` as JSON lines)."""
        records = []
        while self.step < total_steps:
            trace = self.explore_episode(step_limit=total_steps)
            rec = trace.metrics_record(self.step)
            records.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec, sort_keys=True) + "\n")
        return records

    # -- evaluation ------------------------------------------------------------------
    def evaluate(self, start: int, goal: int, budget: int, eps: float | None = None):
        """Goal-reaching trial: the goal joins the graph as a temporary node,
        the agent follows the shortest landmark path and then pursues the goal
        greedily. Returns ``(success, steps)``; the graph is left unchanged."""
        eps = self.sfs_config.epsilon_eval if eps is None else eps
        env = EvalEnv(self.env, start, budget)
        if start == goal:
            return True, 0
        goal_sf = self.provider.sf(goal)
        g = self.graph
        with g.temporary_landmark(goal, goal_sf, self.config.k_goal) as gid:
            sfs_of = lambda s: g.nearest(self.provider.sf(s))[0]  # noqa: E731
            # legs that expire are dropped for the rest of this trial only;
            # the stored graph is left untouched
            blocked: set[tuple[int, int]] = set()
            edges = lambda: {k: w for k, w in g.edge_weights().items() if k not in blocked}  # noqa: E731
            cur = sfs_of(env.state)
            plan = shortest_path(edges(), cur, gid)
            while plan is not Unreachable and not env.done:
                nxt = next_waypoint(plan, cur)
                if nxt is Done:
                    break
                if nxt is Replan:
                    plan = shortest_path(edges(), cur, gid)
                    continue
                target_sf = goal_sf if nxt == gid else g.landmarks[nxt].sf
                src = cur
                ahead = len(plan.waypoints) - plan.waypoints.index(cur) - 1
                for _ in range(self.config.n_land * ahead):
                    env.act(self._greedy_at(env.state, target_sf, eps))
                    if env.state == goal:
                        return True, env.t
                    cur = sfs_of(env.state)
                    if cur == nxt or env.done:
                        break
                else:
                    blocked.add((src, nxt))
                if cur != nxt:
                    plan = shortest_path(edges(), cur, gid)
        # final leg (or fallback when the goal is unreachable in the graph)
        while not env.done:
            env.act(self._greedy_at(env.state, goal_sf, eps))
            if env.state == goal:
                return True, env.t
        return False, env.t

    def _greedy_at(self, state: int, goal_sf: np.ndarray, eps: float) -> int:
        try:
            q = goal_q(self.provider.sf_sa(state), goal_sf)
        except ZeroNormSF:
            q = np.zeros(NUM_ACTIONS)
        return greedy_from_q(q, eps, self.rng)


class EvalEnv:
    """Side-effect free rollout over the transition table with its own budget."""

    def __init__(self, env: GridWorld, start: int, budget: int):
        self.table = env.table
        self.state = int(start)
        self.budget = budget
        self.t = 0

    @property
    def done(self) -> bool:
        return self.t >= self.budget

    def act(self, action: int) -> int:
        self.state = int(self.table[self.state, action])
        self.t += 1
        return self.state


def random_baseline(table: np.ndarray, start: int, goal: int, budget: int,
                    rng: np.random.Generator) -> tuple[bool, int]:
    """Uniform-random policy on the same protocol."""
    s = start
    if s == goal:
        return True, 0
    for t in range(1, budget + 1):
        s = int(table[s, rng.integers(table.shape[1])])
        if s == goal:
            return True, t
    return False, budget


def bfs_baseline(table: np.ndarray, start: int, goal: int, budget: int) -> tuple[bool, int]:
    """Oracle shortest-path policy: succeeds iff the goal is within budget."""
    d = bfs_distances(table, start)[goal]
    if np.isfinite(d) and d <= budget:
        return True, int(d)
    return False, budget


def difficulty_pairs(table: np.ndarray, candidates, count: int, bins: int,
                     rng: np.random.Generator):
    """Random (start, goal) pairs labelled with a geodesic-distance quantile
    bin (0 = easiest)."""
    candidates = np.asarray(candidates)
    pairs = []
    while len(pairs) < count:
        s, g = (int(v) for v in rng.choice(candidates, size=2, replace=False))
        d = bfs_distances(table, s)[g]
        if np.isfinite(d):
            pairs.append((s, g, int(d)))
    dists = np.array([p[2] for p in pairs], dtype=float)
    edges = np.quantile(dists, np.linspace(0, 1, bins + 1)[1:-1]) if bins > 1 else []
    return [(s, g, d, int(np.searchsorted(edges, d, side="right"))) for s, g, d in pairs]


def success_summary(per_seed_rates) -> dict:
    """Mean success rate and its standard error over seeds."""
    r = np.asarray(per_seed_rates, dtype=float)
    se = float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else 0.0
    return {"mean": float(r.mean()), "stderr": se, "seeds": len(r)}
