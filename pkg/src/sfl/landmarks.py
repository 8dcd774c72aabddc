"""Non-parametric landmark graph.

Landmarks are stored state snapshots with cached SF. The graph records
directed transition counts between consecutively localized landmarks; the
edge set is a derived view over those counts (threshold, optional temporal
and k-nearest filters, failure suppression) recomputed on a schedule.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .similarity import SFSHistory, aggregate_sfs, argmax_lowest, sfs_to_many

MEDIAN = "median"


class _NotLocalized:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotLocalized"

    def __bool__(self) -> bool:
        return False


NotLocalized = _NotLocalized()


@dataclass
class GraphConfig:
    add_threshold: float = 0.99
    local_threshold: float = 1.0
    edge_threshold: Union[float, str] = 1.0  # a count, or "median"
    landmark_cap: int = 10
    temporal_tau: float | None = None
    k_nearest: int | None = None
    failure_window: int = 80_000
    n_cand: int = 1
    n_add: int = 3_000
    n_update: int = 1_000
    n_form_edges: int = 1_000
    aggregation_window: int = 1
    localization_tol: float = 1e-9

    @property
    def effective_local_threshold(self) -> float:
        # cosine never exceeds 1, so a threshold of 1 means "within tol of 1"
        return min(self.local_threshold, 1.0 - self.localization_tol)


@dataclass
class Landmark:
    id: int
    state: int
    sf: np.ndarray = field(repr=False)
    visit_count: int = 0
    added_at_step: int = 0


class Edge(NamedTuple):
    src: int
    dst: int
    count: int
    weight: float
    filtered_by: tuple[str, ...]

    @property
    def active(self) -> bool:
        return not self.filtered_by


class Observation(NamedTuple):
    """What the graph concluded about one observed state."""

    landmark: int | None
    value: float
    localized: bool
    candidate: bool
    transition: tuple[int, int] | None


class CandidateBuffer:
    """States that failed the add threshold, keyed by state with their best
    (lowest) aggregated SFS."""

    def __init__(self):
        self.pending: dict[int, float] = {}

    def push(self, state: int, score: float) -> None:
        prev = self.pending.get(state)
        if prev is None or score < prev:
            self.pending[state] = float(score)

    def ranked(self) -> list[tuple[int, float]]:
        return sorted(self.pending.items(), key=lambda kv: (kv[1], kv[0]))

    def clear(self) -> None:
        self.pending.clear()

    def __len__(self) -> int:
        return len(self.pending)


WEIGHT_FLOOR = float(np.finfo(float).tiny)


def edge_weight(count: int) -> float:
    """exp(-count), floored so heavily travelled edges keep a positive weight
    (exp underflows to 0 beyond ~745 transitions)."""
    return max(math.exp(-count), WEIGHT_FLOOR)


class LandmarkGraph:
    def __init__(self, config: GraphConfig | None = None):
        self.config = config or GraphConfig()
        self.landmarks: list[Landmark] = []
        self.counts: dict[tuple[int, int], int] = {}
        self.failures: list[tuple[int, int, int]] = []
        self.candidates = CandidateBuffer()
        self.history = SFSHistory(self.config.aggregation_window)
        self.l_prev: int | None = None
        self.now = 0
        self.edges: dict[tuple[int, int], Edge] = {}
        self._extra_edges: dict[tuple[int, int], float] = {}
        self._permanent = 0
        self._sf_matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.landmarks)

    @property
    def num_permanent(self) -> int:
        return self._permanent

    # -- landmarks ------------------------------------------------------------
    def add_landmark(self, state: int, sf: np.ndarray, step: int | None = None) -> int | None:
        if self._permanent >= self.config.landmark_cap:
            return None
        lid = len(self.landmarks)
        step = self.now if step is None else step
        self.landmarks.append(Landmark(lid, int(state), np.array(sf, dtype=float), 0, step))
        self._permanent += 1
        self._sf_matrix = None
        return lid

    def landmark_sfs(self) -> np.ndarray:
        if self._sf_matrix is None:
            if self.landmarks:
                self._sf_matrix = np.stack([lm.sf for lm in self.landmarks])
            else:
                self._sf_matrix = np.zeros((0, 0))
        return self._sf_matrix

    def similarities(self, query_sf: np.ndarray) -> np.ndarray:
        if not self.landmarks:
            return np.zeros(0)
        return sfs_to_many(query_sf, self.landmark_sfs())

    def state_ids(self) -> list[int]:
        return [lm.state for lm in self.landmarks]

    def refresh(self, provider) -> None:
        """Recompute every landmark's SF cache from its snapshot."""
        if not self.landmarks:
            return
        fresh = provider.sf_many(self.state_ids())
        for lm, sf in zip(self.landmarks, fresh):
            lm.sf = np.array(sf, dtype=float)
        self._sf_matrix = None

    # -- localization -----------------------------------------------------------
    def localize(self, aggregated: np.ndarray):
        """Argmax landmark and its SFS; ties go to the lowest id."""
        if not self.landmarks or len(aggregated) == 0:
            return NotLocalized
        lid = argmax_lowest(aggregated)
        return lid, float(aggregated[lid])

    def passes_local(self, value: float) -> bool:
        return value > self.config.effective_local_threshold

    def nearest(self, query_sf: np.ndarray):
        """Ungated, unaggregated localization used while traversing."""
        return self.localize(self.similarities(query_sf))

    def begin_episode(self) -> None:
        self.history.clear()
        self.l_prev = None

    def observe(self, state: int, provider, step: int | None = None) -> Observation:
        """Process one visited state (one iteration of the graph update)."""
        if step is not None:
            self.now = step
        if not self.landmarks:
            self.add_landmark(state, provider.sf(state), self.now)
        sims = self.similarities(provider.sf(state))
        self.history.push(sims)
        agg = aggregate_sfs(self.history) if self.config.aggregation_window > 1 else sims
        lid, value = self.localize(agg)
        candidate = False
        if value < self.config.add_threshold and self._permanent < self.config.landmark_cap:
            self.candidates.push(state, value)
            candidate = True
        localized = self.passes_local(value)
        transition = None
        if localized:
            if self.l_prev != lid:
                self.landmarks[lid].visit_count += 1
                if self.l_prev is not None:
                    key = (self.l_prev, lid)
                    self.counts[key] = self.counts.get(key, 0) + 1
                    transition = key
            self.l_prev = lid
        return Observation(lid, value, localized, candidate, transition)

    def graph_update(self, trajectory, provider, start_step: int | None = None) -> list[Observation]:
        out = []
        for k, s in enumerate(trajectory):
            step = None if start_step is None else start_step + k
            out.append(self.observe(int(s), provider, step))
        return out

    def flush_candidates(self, provider) -> list[int]:
        """Promote up to ``n_cand`` buffered states, most novel first. Each is
        re-scored against the current landmarks so additions stay separated."""
        added = []
        for state, _ in self.candidates.ranked():
            if len(added) >= self.config.n_cand or self._permanent >= self.config.landmark_cap:
                break
            sf = provider.sf(state)
            if not np.any(sf):
                continue
            sims = self.similarities(sf)
            if len(sims) and sims.max() >= self.config.add_threshold:
                continue
            added.append(self.add_landmark(state, sf, self.now))
        self.candidates.clear()
        return added

    def maintain(self, step: int, provider) -> None:
        """Periodic refresh / landmark addition / edge formation."""
        cfg = self.config
        self.now = step
        if step % cfg.n_update == 0:
            self.refresh(provider)
        if step % cfg.n_add == 0:
            self.flush_candidates(provider)
        if step % cfg.n_form_edges == 0:
            self.form_edges()

    # -- edges --------------------------------------------------------------------
    def edge_threshold_value(self) -> float:
        thr = self.config.edge_threshold
        if thr == MEDIAN:
            return dynamic_edge_threshold(self.counts)
        return float(thr)

    def _failed(self, i: int, j: int, now: int) -> bool:
        window = self.config.failure_window
        return any(a == i and b == j and now - s <= window for a, b, s in self.failures)

    def apply_filters(self, now: int | None = None) -> dict[tuple[int, int], Edge]:
        """Every counted pair, annotated with the filters that remove it."""
        now = self.now if now is None else now
        cfg = self.config
        thr = self.edge_threshold_value()
        n = self._permanent
        reasons: dict[tuple[int, int], list[str]] = {}
        for (i, j), c in self.counts.items():
            r = []
            if not c > thr:
                r.append("threshold")
            if cfg.temporal_tau is not None and not abs(i - j) < cfg.temporal_tau * n:
                r.append("temporal")
            if self._failed(i, j, now):
                r.append("failure")
            reasons[(i, j)] = r
        if cfg.k_nearest is not None:
            by_src: dict[int, list[tuple[int, int]]] = {}
            for (i, j), c in self.counts.items():
                by_src.setdefault(i, []).append((-c, j))
            for i, outs in by_src.items():
                for _, j in sorted(outs)[cfg.k_nearest:]:
                    reasons[(i, j)].append("k_nearest")
        return {
            key: Edge(key[0], key[1], c, edge_weight(c), tuple(reasons[key]))
            for key, c in sorted(self.counts.items())
        }

    def form_edges(self, now: int | None = None) -> None:
        self._prune_failures(self.now if now is None else now)
        self.edges = self.apply_filters(now)

    def _prune_failures(self, now: int) -> None:
        window = self.config.failure_window
        self.failures = [f for f in self.failures if now - f[2] <= window]

    def edge_weights(self) -> dict[tuple[int, int], float]:
        """The active edge set E with weights, including temporary edges."""
        out = {k: e.weight for k, e in self.edges.items() if e.active}
        out.update(self._extra_edges)
        return out

    def record_failure(self, src: int, dst: int, step: int | None = None) -> None:
        for lid in (src, dst):
            if not 0 <= lid < len(self.landmarks):
                raise KeyError(f"unknown landmark id {lid}")
        step = self.now if step is None else step
        self.failures.append((int(src), int(dst), int(step)))
        if (src, dst) in self.edges:
            self.edges = self.apply_filters(max(self.now, step))

    # -- temporary goal node --------------------------------------------------------
    @contextmanager
    def temporary_landmark(self, state: int, sf: np.ndarray, k_connect: int = 5,
                           weight: float = math.exp(-1)):
        """Insert ``state`` as a landmark with synthetic edges from the
        ``k_connect`` most similar landmarks; removed on exit."""
        sims = self.similarities(sf)
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))[:k_connect]
        lid = len(self.landmarks)
        self.landmarks.append(Landmark(lid, int(state), np.array(sf, dtype=float), 0, self.now))
        self._sf_matrix = None
        for i in order:
            self._extra_edges[(i, lid)] = weight
        try:
            yield lid
        finally:
            self.landmarks.pop()
            self._sf_matrix = None
            self._extra_edges = {k: w for k, w in self._extra_edges.items() if lid not in k}

    # -- export ---------------------------------------------------------------------
    def to_dot(self, grid=None) -> str:
        lines = ["digraph landmarks {"]
        for lm in self.landmarks:
            attrs = {"id": lm.id, "visit_count": lm.visit_count, "added_at_step": lm.added_at_step,
                     "state": lm.state}
            if grid is not None:
                st = grid.state_from_id(lm.state)
                attrs.update(x=st.x, y=st.y, heading=st.heading.name)
            body = " ".join(f'{k}="{v}"' for k, v in attrs.items())
            lines.append(f"  {lm.id} [{body}];")
        for (i, j), e in sorted(self.edges.items()):
            lines.append(
                f'  {i} -> {j} [count="{e.count}" weight="{e.weight:.6g}" '
                f'filtered_by="{",".join(e.filtered_by)}"];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"

    def arrays(self, prefix: str = "graph") -> dict[str, np.ndarray]:
        L = self._permanent
        lms = self.landmarks[:L]
        out = {
            f"{prefix}.landmarks": np.array([[lm.state, lm.visit_count, lm.added_at_step] for lm in lms],
                                            dtype=np.int64).reshape(L, 3),
            f"{prefix}.sf": np.stack([lm.sf for lm in lms]) if lms else np.zeros((0, 0)),
            f"{prefix}.counts": np.array([[i, j, c] for (i, j), c in sorted(self.counts.items())],
                                         dtype=np.int64).reshape(-1, 3),
            f"{prefix}.failures": np.array(self.failures, dtype=np.int64).reshape(-1, 3),
            f"{prefix}.now": np.array([self.now]),
        }
        return out

    @classmethod
    def from_arrays(cls, arrays, config: GraphConfig, prefix: str = "graph") -> "LandmarkGraph":
        g = cls(config)
        sfs = arrays[f"{prefix}.sf"]
        for k, (state, visits, added) in enumerate(arrays[f"{prefix}.landmarks"]):
            lid = g.add_landmark(int(state), sfs[k], int(added))
            g.landmarks[lid].visit_count = int(visits)
        g.counts = {(int(i), int(j)): int(c) for i, j, c in arrays[f"{prefix}.counts"]}
        g.failures = [tuple(int(v) for v in f) for f in arrays[f"{prefix}.failures"]]
        g.now = int(arrays[f"{prefix}.now"][0])
        g.form_edges()
        return g

    def config_dict(self) -> dict:
        return asdict(self.config)


def dynamic_edge_threshold(counts) -> float:
    """Median of the positive transition counts (0 when there are none)."""
    values = [c for c in (counts.values() if isinstance(counts, dict) else counts) if c > 0]
    if not values:
        return 0.0
    return float(np.median(values))


def landmark_spacing(states, dist: np.ndarray) -> float:
    """Median over landmarks of the geodesic distance to the nearest other one."""
    states = list(states)
    if len(states) < 2:
        return 0.0
    nearest = []
    for a in states:
        d = [min(dist[a, b], dist[b, a]) for b in states if b != a]
        nearest.append(min(d))
    return float(np.median(nearest))


def long_edge_fraction(graph: LandmarkGraph, dist: np.ndarray, factor: float = 3.0) -> float:
    """Share of active edges whose endpoints lie more than ``factor`` times the
    median landmark spacing apart (directed geodesic distance)."""
    active = [k for k, e in graph.edges.items() if e.active]
    if not active:
        return 0.0
    states = graph.state_ids()[: graph.num_permanent]
    limit = factor * landmark_spacing(states, dist)
    long = sum(1 for i, j in active if dist[states[i], states[j]] > limit)
    return long / len(active)
