"""State feature encoders.

Two modes share one interface (``dim``, ``encode``, ``features``,
``net_input``):

* :class:`OneHotEncoder` -- ``alpha * e_s``; makes TD-learned SF directly
  comparable to the analytic SR.
* :class:`LearnedEncoder` -- an MLP over the flat top-down grid encoding,
  trained with a time-contrastive triplet loss and normalized to norm
  ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridworld import DOOR, WALL, GridMap, GridState
from .nn import MLP, Adam, OneHot

# channels of the top-down encoding
_C_WALL, _C_DOOR_CLOSED, _C_DOOR_OPEN = 0, 1, 2
_C_AGENT = 3  # + heading
NUM_CHANNELS = 7


class EncoderError(ValueError):
    pass


class EncoderDiverged(RuntimeError):
    pass


def observe(grid: GridMap, state: GridState) -> np.ndarray:
    """Flat (height * width * 7) top-down encoding of ``state``."""
    obs = np.zeros((grid.height, grid.width, NUM_CHANNELS))
    for y, row in enumerate(grid.cells):
        for x, ch in enumerate(row):
            if ch == WALL:
                obs[y, x, _C_WALL] = 1.0
    for i, (x, y) in enumerate(grid.door_positions):
        obs[y, x, _C_DOOR_OPEN if state.door_open >> i & 1 else _C_DOOR_CLOSED] = 1.0
    obs[state.y, state.x, _C_AGENT + int(state.heading)] = 1.0
    return obs.ravel()


def observation_table(grid: GridMap) -> np.ndarray:
    """Observations of every state, indexed by state id."""
    return np.stack([observe(grid, grid.state_from_id(i)) for i in range(grid.num_states)])


def _normalize(z: np.ndarray, alpha: float):
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    norm = np.maximum(norm, 1e-12)
    return alpha * z / norm, norm


class OneHotEncoder:
    mode = "onehot"

    def __init__(self, num_states: int, alpha: float = 1.0):
        self.num_states = int(num_states)
        self.alpha = float(alpha)

    @property
    def dim(self) -> int:
        return self.num_states

    def _check(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_states):
            raise EncoderError(f"unknown state id in {ids.min()}..{ids.max()} (have {self.num_states})")
        return ids

    def encode(self, state_id: int) -> np.ndarray:
        return self.features(np.array([state_id]))[0]

    def features(self, ids) -> np.ndarray:
        ids = self._check(ids)
        return OneHot(ids, self.alpha, self.num_states).dense()

    def net_input(self, ids):
        return OneHot(self._check(ids), self.alpha, self.num_states)

    def arrays(self, prefix="encoder"):
        return {f"{prefix}.onehot": np.array([self.num_states, self.alpha])}


@dataclass
class TripletBatch:
    anchors: np.ndarray  # state ids
    positives: np.ndarray
    negatives: np.ndarray
    margin: float = 2.0
    # (episode, t) indices, kept for window checks
    anchor_index: np.ndarray = field(default=None, repr=False)
    positive_index: np.ndarray = field(default=None, repr=False)
    negative_index: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.anchors)


class EpisodeStore:
    """Episode-indexed log of visited state ids (the encoder's replay)."""

    def __init__(self):
        self.episodes: list[np.ndarray] = []

    def add_episode(self, state_ids) -> None:
        self.episodes.append(np.asarray(state_ids, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.episodes)

    def num_states(self) -> int:
        return sum(len(e) for e in self.episodes)


def sample_triplets(store: EpisodeStore, count: int, rng: np.random.Generator,
                    k_pos: int = 2, u_neg: int = 10, l_neg: int = 15,
                    margin: float = 2.0) -> TripletBatch:
    """Time-contrastive triples: positives within ``k_pos`` steps of the anchor,
    negatives from ``[t-l_neg, t-u_neg] U [t+u_neg, t+l_neg]``."""
    eligible = [i for i, ep in enumerate(store.episodes) if len(ep) > l_neg]
    if not eligible:
        raise EncoderError(f"no episode longer than {l_neg} steps to sample negatives from")
    weights = np.array([len(store.episodes[i]) for i in eligible], dtype=float)
    ep_choice = rng.choice(eligible, size=count, p=weights / weights.sum())
    out = np.zeros((3, count, 2), dtype=np.int64)
    for j, e in enumerate(ep_choice):
        T = len(store.episodes[e])
        t = int(rng.integers(0, T))
        pos = [k for k in range(t - k_pos, t + k_pos + 1) if 0 <= k < T and k != t]
        neg = [k for k in range(t - l_neg, t - u_neg + 1) if k >= 0]
        neg += [k for k in range(t + u_neg, t + l_neg + 1) if k < T]
        # every t has a negative once T > l_neg; the positive window may not
        out[0, j] = (e, t)
        out[1, j] = (e, pos[int(rng.integers(len(pos)))] if pos else t)
        out[2, j] = (e, neg[int(rng.integers(len(neg)))])
    ids = [np.array([store.episodes[e][t] for e, t in out[k]], dtype=np.int64) for k in range(3)]
    return TripletBatch(ids[0], ids[1], ids[2], margin, out[0], out[1], out[2])


class LearnedEncoder:
    """MLP encoder over observations; output rescaled to l2 norm ``alpha``."""

    mode = "learned"

    def __init__(self, obs_table: np.ndarray, rng: np.random.Generator,
                 hidden: tuple[int, ...] = (128,), out_dim: int = 64, alpha: float = 10.0):
        self.obs_table = obs_table
        self.alpha = float(alpha)
        self.net = MLP([obs_table.shape[1], *hidden, out_dim], rng)
        self._feature_table = None

    @property
    def dim(self) -> int:
        return self.net.sizes[-1]

    @property
    def num_states(self) -> int:
        return len(self.obs_table)

    def embed(self, obs: np.ndarray, params=None) -> np.ndarray:
        return _normalize(self.net(np.atleast_2d(obs), params), self.alpha)[0]

    def encode(self, obs_or_id) -> np.ndarray:
        if np.ndim(obs_or_id) == 0:
            return self.features(np.array([obs_or_id]))[0]
        return self.embed(obs_or_id)[0]

    def _table(self) -> np.ndarray:
        if self._feature_table is None:
            self._feature_table = self.embed(self.obs_table)
        return self._feature_table

    def features(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.obs_table)):
            raise EncoderError("unknown state id")
        return self._table()[ids]

    net_input = features

    def invalidate(self) -> None:
        self._feature_table = None

    def arrays(self, prefix="encoder"):
        return {f"{prefix}.p{i}": p for i, p in enumerate(self.net.params)}

    def load_arrays(self, arrays, prefix="encoder"):
        self.net.params = [arrays[f"{prefix}.p{i}"].copy() for i in range(len(self.net.params))]
        self.invalidate()


def triplet_loss(encoder: LearnedEncoder, batch: TripletBatch, params=None):
    """Hinge loss ``mean(max(0, |f(a)-f(p)|^2 - |f(a)-f(n)|^2 + m))`` and its
    gradient with respect to the encoder parameters."""
    B = len(batch)
    if B == 0:
        raise EncoderError("empty triplet batch")
    obs = encoder.obs_table[np.concatenate([batch.anchors, batch.positives, batch.negatives])]
    if params is not None:
        saved, encoder.net.params = encoder.net.params, params
    try:
        z, acts = encoder.net.forward(obs)
        f, norm = _normalize(z, encoder.alpha)
        fa, fp, fn = f[:B], f[B:2 * B], f[2 * B:]
        d_ap = np.sum((fa - fp) ** 2, axis=1)
        d_an = np.sum((fa - fn) ** 2, axis=1)
        hinge = d_ap - d_an + batch.margin
        active = (hinge > 0).astype(float)[:, None]
        loss = float(np.mean(np.maximum(hinge, 0.0)))
        g_f = np.concatenate([
            active * 2.0 * (fn - fp),
            active * -2.0 * (fa - fp),
            active * 2.0 * (fa - fn),
        ]) / B
        u = f / encoder.alpha
        g_z = (encoder.alpha / norm) * (g_f - u * np.sum(u * g_f, axis=1, keepdims=True))
        grads = encoder.net.backward(acts, g_z)
    finally:
        if params is not None:
            encoder.net.params = saved
    return loss, grads


def triplet_accuracy(encoder: LearnedEncoder, batch: TripletBatch) -> float:
    fa, fp, fn = (encoder.features(x) for x in (batch.anchors, batch.positives, batch.negatives))
    return float(np.mean(np.sum((fa - fp) ** 2, 1) < np.sum((fa - fn) ** 2, 1)))


def train_encoder(encoder: LearnedEncoder, store: EpisodeStore, steps: int,
                  rng: np.random.Generator, lr: float = 5e-4, batch_size: int = 128,
                  margin: float = 2.0, k_pos: int = 2, u_neg: int = 10, l_neg: int = 15,
                  divergence_factor: float = 10.0) -> list[float]:
    """Adam on the triplet loss. Returns the per-step loss history."""
    opt = Adam(lr=lr)
    history: list[float] = []
    initial = None
    for i in range(steps):
        batch = sample_triplets(store, batch_size, rng, k_pos, u_neg, l_neg, margin)
        loss, grads = triplet_loss(encoder, batch)
        if initial is None:
            initial = max(loss, 1e-12)
        if not np.isfinite(loss) or loss > divergence_factor * initial:
            raise EncoderDiverged(
                f"triplet loss {loss:.4g} at step {i} exceeds {divergence_factor}x initial {initial:.4g}"
            )
        opt.step(encoder.net.params, grads)
        history.append(loss)
    encoder.invalidate()
    return history
