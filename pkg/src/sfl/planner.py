"""Minimal-weight landmark paths and waypoint bookkeeping."""

from __future__ import annotations

import heapq
from dataclasses import dataclass


class _Signal:
    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return self.name

    def __bool__(self) -> bool:
        return False


Unreachable = _Signal("Unreachable")
Done = _Signal("Done")
Replan = _Signal("Replan")


@dataclass(frozen=True)
class Plan:
    waypoints: tuple[int, ...]
    total_weight: float
    created_at_step: int = 0

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def target(self) -> int:
        return self.waypoints[-1]

    def to_record(self) -> dict:
        return {"waypoints": list(self.waypoints), "total_weight": self.total_weight,
                "created_at_step": self.created_at_step}


def adjacency(edges: dict[tuple[int, int], float]) -> dict[int, list[tuple[int, float]]]:
    adj: dict[int, list[tuple[int, float]]] = {}
    for (i, j), w in edges.items():
        if w <= 0:
            raise ValueError(f"edge ({i}->{j}) has non-positive weight {w}")
        adj.setdefault(i, []).append((j, w))
    return adj


def shortest_path(edges: dict[tuple[int, int], float], src: int, dst: int, step: int = 0):
    """Dijkstra over directed weighted edges.

    Among equal-weight paths the lexicographically smallest id sequence wins:
    heap entries carry the whole path, so ties on distance compare paths.
    Returns a :class:`Plan` or ``Unreachable``.
    """
    if src == dst:
        return Plan((src,), 0.0, step)
    adj = adjacency(edges)
    heap = [(0.0, (src,))]
    done: set[int] = set()
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return Plan(path, d, step)
        for v, w in adj.get(u, ()):
            if v not in done:
                heapq.heappush(heap, (d + w, path + (v,)))
    return Unreachable


def next_waypoint(plan: Plan, current: int):
    """Successor of ``current`` on the plan, ``Done`` at the end, ``Replan``
    when the agent is off the plan."""
    if not plan.waypoints:
        raise ValueError("empty plan")
    if current == plan.waypoints[-1]:
        return Done
    try:
        k = plan.waypoints.index(current)
    except ValueError:
        return Replan
    return plan.waypoints[k + 1]


def path_weight(edges: dict[tuple[int, int], float], path) -> float:
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        total += edges[(a, b)]
    return total
