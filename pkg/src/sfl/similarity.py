"""Successor feature similarity (SFS) and the goal-conditioned policy built on it.

SFS is the cosine between SF vectors. The goal-conditioned Q-value of action
``a`` in ``s`` toward goal ``g`` is the SFS between ``psi(s, a)`` and
``psi(g)``, so no reward weights are learned.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels

TIE_ATOL = 1e-12


class ZeroNormSF(ValueError):
    """Raised when an SF vector has zero norm (typically an untrained SF)."""


@dataclass
class SFSConfig:
    normalize: bool = True
    aggregation_window: int = 1
    epsilon_train: float = 0.1
    epsilon_eval: float = 0.05

    def __post_init__(self):
        if self.aggregation_window < 1:
            raise ValueError("aggregation_window must be >= 1")
        for eps in (self.epsilon_train, self.epsilon_eval):
            if not 0.0 <= eps <= 1.0:
                raise ValueError(f"epsilon {eps} outside [0, 1]")


def sfs(sf1: np.ndarray, sf2: np.ndarray, normalize: bool = True) -> float:
    sf1 = np.asarray(sf1, dtype=float)
    sf2 = np.asarray(sf2, dtype=float)
    if sf1.shape != sf2.shape:
        raise ValueError(f"SF shapes differ: {sf1.shape} vs {sf2.shape}")
    if not normalize:
        return float(sf1 @ sf2)
    n1, n2 = np.linalg.norm(sf1), np.linalg.norm(sf2)
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroNormSF("SFS undefined for a zero SF vector")
    # symmetric by construction: both orders reduce identically
    return float(np.dot(sf1 / n1, sf2 / n2))


def sfs_to_many(query: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Cosine of ``query`` against each row of ``others``. Zero-norm vectors
    score 0 instead of raising, so an untrained SF never localizes."""
    if len(others) == 0:
        return np.zeros(0)
    return kernels.cosine_to_rows(query, others)


def normalize_rows(X: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(X, axis=-1, keepdims=True)
    return np.divide(X, norm, out=np.zeros_like(X, dtype=float), where=norm > 0)


def argmax_lowest(values: np.ndarray, atol: float = TIE_ATOL) -> int:
    """Index of the maximum; near-ties (within ``atol``) go to the lowest index."""
    values = np.asarray(values)
    best = values.max()
    return int(np.flatnonzero(values >= best - atol)[0])


def goal_q(sf_sa: np.ndarray, goal_sf: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Q(s, a, g) for every action; ``sf_sa`` has shape (A, d)."""
    goal_sf = np.asarray(goal_sf, dtype=float)
    if normalize:
        gn = np.linalg.norm(goal_sf)
        if gn == 0.0:
            raise ZeroNormSF("goal SF has zero norm")
        return normalize_rows(np.asarray(sf_sa, dtype=float)) @ (goal_sf / gn)
    return np.asarray(sf_sa, dtype=float) @ goal_sf


def greedy_from_q(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over ``q`` with lowest-index tie breaking.

    Always consumes exactly one uniform draw, plus one more when exploring, so
    the random stream does not depend on the Q-values.
    """
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return argmax_lowest(q)


def greedy_action(provider, state: int, goal_sf: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Action for ``state`` toward a goal SF, using ``provider.sf_sa``."""
    return greedy_from_q(goal_q(provider.sf_sa(state), goal_sf), epsilon, rng)


class SFSHistory:
    """Ring of the last ``window`` SFS vectors (one entry per landmark).

    Vectors may grow as landmarks are added; older, shorter entries are
    treated as missing for the new landmarks.
    """

    def __init__(self, window: int = 8):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._ring: deque = deque(maxlen=window)

    def push(self, values: np.ndarray) -> None:
        self._ring.append(np.asarray(values, dtype=float))

    def clear(self) -> None:
        self._ring.clear()

    def __len__(self) -> int:
        return len(self._ring)

    def entries(self) -> list[np.ndarray]:
        return list(self._ring)


def aggregate_sfs(history: SFSHistory) -> np.ndarray:
    """Per-landmark median over the stored window."""
    entries = history.entries()
    if not entries:
        raise ValueError("empty SFS history")
    width = len(entries[-1])
    if len(entries) == 1:
        return entries[0].copy()
    stack = np.full((len(entries), width), np.nan)
    for i, e in enumerate(entries):
        stack[i, : len(e)] = e[:width]
    return np.nanmedian(stack, axis=0)


def heatmap_csv(grid, ref_state: int, sf_table: np.ndarray) -> str:
    """CSV rows ``x,y,heading,sfs`` of every state against ``ref_state``."""
    values = sfs_to_many(sf_table[ref_state], sf_table)
    buf = io.StringIO()
    buf.write("x,y,heading,sfs\n")
    for sid, v in enumerate(values):
        st = grid.state_from_id(sid)
        buf.write(f"{st.x},{st.y},{st.heading.name},{v:.6f}\n")
    return buf.getvalue()
