"""Deterministic egocentric gridworlds (FourRoom / MultiRoom analogs).

Maps are plain ASCII::

    #  wall        .  floor        D  door (starts closed)
    S  start       G  goal

The agent state is ``(x, y, heading, door_open)`` where ``door_open`` is a
bitmask over the map's doors in row-major order. Every state has a canonical
integer id; ids are dense, so tabular oracles (transition tables, the uniform
random-policy matrix, BFS distances) are plain numpy arrays indexed by id.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

WALL, FLOOR, DOOR, START, GOAL = "#", ".", "D", "S", "G"
_VALID = {WALL, FLOOR, DOOR, START, GOAL}

DEFAULT_STATE_CAP = 250_000
MAPS_DIR = Path(__file__).parent / "maps"


class Heading(enum.IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3


_DELTA = {Heading.N: (0, -1), Heading.E: (1, 0), Heading.S: (0, 1), Heading.W: (-1, 0)}


class Action(enum.IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    TOGGLE = 3


NUM_ACTIONS = len(Action)


class ActionMode(str, enum.Enum):
    """Which actions the uniform random policy draws from."""

    FULL = "full"
    NAVIGATION = "navigation"  # no Toggle

    @property
    def actions(self) -> tuple[Action, ...]:
        if self is ActionMode.FULL:
            return tuple(Action)
        return (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


class MapParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + where)
        self.row = row
        self.col = col


class StateSpaceTooLarge(ValueError):
    pass


class GridState(NamedTuple):
    x: int
    y: int
    heading: Heading
    door_open: int = 0

    def __str__(self) -> str:
        return f"{self.x},{self.y},{Heading(self.heading).name}"


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    cells: tuple[str, ...]
    start: tuple[int, int]
    goal: tuple[int, int] | None
    door_positions: tuple[tuple[int, int], ...]
    name: str = "map"
    _floor_index: dict = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {}
        for y, row in enumerate(self.cells):
            for x, ch in enumerate(row):
                if ch != WALL:
                    index[(x, y)] = len(index)
        object.__setattr__(self, "_floor_index", index)

    def cell(self, x: int, y: int) -> str:
        return self.cells[y][x]

    @property
    def floor_cells(self) -> list[tuple[int, int]]:
        """Non-wall cells (floor, doors, start, goal) in row-major order."""
        return list(self._floor_index)

    @property
    def num_floor(self) -> int:
        return len(self._floor_index)

    @property
    def num_doors(self) -> int:
        return len(self.door_positions)

    @property
    def num_states(self) -> int:
        return self.num_floor * 4 * (1 << self.num_doors)

    def door_index(self, x: int, y: int) -> int | None:
        try:
            return self.door_positions.index((x, y))
        except ValueError:
            return None

    # -- state ids -------------------------------------------------------
    def state_id(self, state: GridState) -> int:
        cell = self._floor_index.get((state.x, state.y))
        if cell is None:
            raise KeyError(f"({state.x},{state.y}) is not a walkable cell")
        return (state.door_open * self.num_floor + cell) * 4 + int(state.heading)

    def state_from_id(self, sid: int) -> GridState:
        if not 0 <= sid < self.num_states:
            raise KeyError(f"state id {sid} out of range")
        heading = sid % 4
        rest = sid // 4
        cell = rest % self.num_floor
        door_open = rest // self.num_floor
        x, y = self.floor_cells[cell]
        return GridState(x, y, Heading(heading), door_open)

    def start_state(self, heading: Heading = Heading.E) -> GridState:
        return GridState(self.start[0], self.start[1], Heading(heading), 0)

    def __str__(self) -> str:
        return "\n".join(self.cells)


def load_map(text: str, name: str = "map") -> GridMap:
    """Parse an ASCII map document into a :class:`GridMap`."""
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    lines = [ln.rstrip() for ln in lines]
    if not lines or not lines[0]:
        raise MapParseError("empty map")
    width = len(lines[0])
    starts, goals, doors = [], [], []
    for y, row in enumerate(lines):
        if len(row) != width:
            raise MapParseError(f"non-rectangular map: expected width {width}, got {len(row)}", row=y)
        for x, ch in enumerate(row):
            if ch not in _VALID:
                raise MapParseError(f"invalid character {ch!r}", row=y, col=x)
            edge = y in (0, len(lines) - 1) or x in (0, width - 1)
            if edge and ch != WALL:
                raise MapParseError("outer boundary must be wall", row=y, col=x)
            if ch == START:
                starts.append((x, y))
            elif ch == GOAL:
                goals.append((x, y))
            elif ch == DOOR:
                doors.append((x, y))
    if not starts:
        raise MapParseError("no start cell")
    if len(starts) > 1:
        raise MapParseError("multiple start cells", row=starts[1][1], col=starts[1][0])
    if len(goals) > 1:
        raise MapParseError("multiple goal cells", row=goals[1][1], col=goals[1][0])

    # every walkable cell must be reachable with all doors open
    seen = {starts[0]}
    queue = deque([starts[0]])
    while queue:
        x, y = queue.popleft()
        for dx, dy in _DELTA.values():
            nxt = (x + dx, y + dy)
            if nxt not in seen and lines[nxt[1]][nxt[0]] != WALL:
                seen.add(nxt)
                queue.append(nxt)
    for y, row in enumerate(lines):
        for x, ch in enumerate(row):
            if ch != WALL and (x, y) not in seen:
                raise MapParseError("unreachable floor cell", row=y, col=x)

    return GridMap(
        width=width,
        height=len(lines),
        cells=tuple(lines),
        start=starts[0],
        goal=goals[0] if goals else None,
        door_positions=tuple(doors),
        name=name,
    )


def read_map(path: str | Path) -> GridMap:
    path = Path(path)
    if not path.exists() and (MAPS_DIR / path.name).exists():
        path = MAPS_DIR / path.name
    return load_map(path.read_text(), name=path.stem)


def builtin_map(name: str) -> GridMap:
    return read_map(MAPS_DIR / f"{name}.txt")


def builtin_map_names() -> list[str]:
    return sorted(p.stem for p in MAPS_DIR.glob("*.txt"))


def step(grid: GridMap, state: GridState, action: Action) -> tuple[GridState, float, bool]:
    """Deterministic dynamics. Reward is always 0 and ``done`` is never set
    here: episodes end by time limit, which the environment wrapper owns."""
    x, y, heading, doors = state
    if action == Action.TURN_LEFT:
        return GridState(x, y, Heading((heading - 1) % 4), doors), 0.0, False
    if action == Action.TURN_RIGHT:
        return GridState(x, y, Heading((heading + 1) % 4), doors), 0.0, False
    dx, dy = _DELTA[Heading(heading)]
    ax, ay = x + dx, y + dy
    ahead = grid.cells[ay][ax]
    if action == Action.FORWARD:
        if ahead == WALL:
            return state, 0.0, False
        if ahead == DOOR and not doors >> grid.door_index(ax, ay) & 1:
            return state, 0.0, False
        return GridState(ax, ay, heading, doors), 0.0, False
    if action == Action.TOGGLE:
        if ahead == DOOR:
            return GridState(x, y, heading, doors ^ (1 << grid.door_index(ax, ay))), 0.0, False
        return state, 0.0, False
    raise ValueError(f"unknown action {action!r}")


def enumerate_states(grid: GridMap, cap: int = DEFAULT_STATE_CAP) -> list[GridState]:
    """All valid states in canonical-id order."""
    n = grid.num_states
    if n > cap:
        raise StateSpaceTooLarge(f"{n} states exceeds cap {cap}")
    return [grid.state_from_id(i) for i in range(n)]


def transition_table(grid: GridMap, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """``table[s, a]`` is the id of ``step(s, a)``; shape (|S|, 4)."""
    states = enumerate_states(grid, cap)
    table = np.empty((len(states), NUM_ACTIONS), dtype=np.int64)
    for sid, st in enumerate(states):
        for a in Action:
            table[sid, a] = grid.state_id(step(grid, st, a)[0])
    return table


def chain_table(n: int) -> np.ndarray:
    """A 1-D chain of ``n`` states with actions (Left, Right); bumping an end
    keeps the agent in place. ``chain_table(3)`` is the Line3 test world."""
    s = np.arange(n)
    return np.stack([np.maximum(s - 1, 0), np.minimum(s + 1, n - 1)], axis=1)


def policy_matrix(table: np.ndarray, actions: Sequence[int] | None = None) -> np.ndarray:
    """Uniform random-policy transition matrix over the given action columns."""
    n = table.shape[0]
    cols = list(range(table.shape[1])) if actions is None else [int(a) for a in actions]
    P = np.zeros((n, n))
    rows = np.arange(n)
    for a in cols:
        np.add.at(P, (rows, table[:, a]), 1.0 / len(cols))
    return P


def random_policy_matrix(grid: GridMap, action_mode: ActionMode | str = ActionMode.FULL,
                         cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    mode = ActionMode(action_mode)
    return policy_matrix(transition_table(grid, cap), mode.actions)


def bfs_distances(table: np.ndarray, source: int) -> np.ndarray:
    """Action counts from ``source`` to every state; ``inf`` where unreachable."""
    dist = np.full(table.shape[0], np.inf)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = np.unique(table[frontier].ravel())
        nxt = nxt[np.isinf(dist[nxt])]
        dist[nxt] = d
        frontier = nxt.tolist()
    return dist


def geodesic_distance(grid: GridMap, s1: GridState, s2: GridState,
                      table: np.ndarray | None = None) -> float:
    """Minimal number of actions from ``s1`` to ``s2`` (``math.inf`` if none)."""
    if s1 == s2:
        return 0
    if table is None:
        table = transition_table(grid)
    d = bfs_distances(table, grid.state_id(s1))[grid.state_id(s2)]
    return math.inf if np.isinf(d) else int(d)


def all_pairs_distances(table: np.ndarray) -> np.ndarray:
    return np.stack([bfs_distances(table, s) for s in range(table.shape[0])])


def default_goal_state(grid: GridMap, table: np.ndarray | None = None) -> GridState:
    """The goal cell with the heading in which a shortest path from the start
    first arrives there."""
    if grid.goal is None:
        raise ValueError(f"map {grid.name!r} has no goal cell")
    if table is None:
        table = transition_table(grid)
    dist = bfs_distances(table, grid.state_id(grid.start_state()))
    candidates = []
    for h in Heading:
        for mask in range(1 << grid.num_doors):
            st = GridState(grid.goal[0], grid.goal[1], h, mask)
            candidates.append((dist[grid.state_id(st)], grid.state_id(st), st))
    return min(candidates)[2]


def episode_time_limit(grid: GridMap) -> int:
    """100 steps for door-free maps (FourRoom); 40 per room otherwise."""
    if grid.num_doors == 0:
        return 100
    return 40 * (grid.num_doors + 1)


class GridWorld:
    """Episodic wrapper around :func:`step` with a time limit.

    Doors are reset to closed at every episode start.
    """

    def __init__(self, grid: GridMap, time_limit: int | None = None, random_spawn: bool = False,
                 rng: np.random.Generator | None = None):
        self.grid = grid
        self.time_limit = episode_time_limit(grid) if time_limit is None else time_limit
        self.random_spawn = random_spawn
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.table = transition_table(grid)
        self._closed_ids = np.array(
            [grid.state_id(GridState(x, y, h, 0)) for (x, y) in grid.floor_cells for h in Heading]
        )
        self.state_id: int = grid.state_id(grid.start_state())
        self.t = 0

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    @property
    def state(self) -> GridState:
        return self.grid.state_from_id(self.state_id)

    @property
    def done(self) -> bool:
        return self.t >= self.time_limit

    @property
    def remaining(self) -> int:
        return self.time_limit - self.t

    def reset(self, state: GridState | int | None = None) -> int:
        self.t = 0
        if state is None:
            if self.random_spawn:
                self.state_id = int(self.rng.choice(self._closed_ids))
            else:
                self.state_id = self.grid.state_id(self.grid.start_state())
        elif isinstance(state, (int, np.integer)):
            self.state_id = int(state)
        else:
            self.state_id = self.grid.state_id(state)
        return self.state_id

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        self.state_id = int(self.table[self.state_id, action])
        self.t += 1
        return self.state_id, 0.0, self.done


def positions_of(grid: GridMap, state_ids: Iterable[int]) -> set[tuple[int, int]]:
    out = set()
    for sid in state_ids:
        st = grid.state_from_id(int(sid))
        out.add((st.x, st.y))
    return out


class SourcePolicy(enum.IntEnum):
    RANDOM = 0
    GOAL_CONDITIONED = 1


class Transition(NamedTuple):
    """One environment step; states are canonical ids."""

    state: int
    action: int
    reward: float
    next_state: int
    done: bool
    source_policy: SourcePolicy = SourcePolicy.RANDOM
