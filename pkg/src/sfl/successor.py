"""Successor features: the exact tabular oracle and the TD learner."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .gridworld import SourcePolicy
from .nn import MLP, Adam, OneHot, clip_by_global_norm


class TrainingDiverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# analytic oracle


@dataclass
class SRMatrix:
    """``M[s]`` is the state-only SR row, ``M_sa[s, a]`` the state-action row."""

    M: np.ndarray
    M_sa: np.ndarray
    gamma: float

    @property
    def M_sa_flat(self) -> np.ndarray:
        n, A, _ = self.M_sa.shape
        return self.M_sa.reshape(n * A, n)


def analytic_sr(P: np.ndarray, table: np.ndarray, gamma: float) -> SRMatrix:
    """Closed-form SR of the policy with transition matrix ``P``.

    ``table[s, a]`` gives the (deterministic) successor of ``s`` under ``a``;
    a float array of shape (A, S, S) is accepted for stochastic dynamics.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    n = P.shape[0]
    A = np.eye(n) - gamma * P
    if np.linalg.cond(A) > 1e14:
        raise np.linalg.LinAlgError("I - gamma*P is numerically singular")
    M = np.linalg.solve(A, np.eye(n))
    if table.dtype.kind in "iu":
        M_sa = np.eye(n)[:, None, :] + gamma * M[table]
    else:
        M_sa = np.eye(n)[:, None, :] + gamma * np.einsum("ast,tk->sak", table, M)
    return SRMatrix(M=M, M_sa=M_sa, gamma=gamma)


# --------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """Ring buffer of random-policy transitions with n-step segment sampling."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.state = np.zeros(self.capacity, dtype=np.int64)
        self.action = np.zeros(self.capacity, dtype=np.int64)
        self.next_state = np.zeros(self.capacity, dtype=np.int64)
        self.episode = np.zeros(self.capacity, dtype=np.int64)
        self.seq = np.full(self.capacity, -1, dtype=np.int64)
        self.total = 0  # transitions ever inserted

    def __len__(self) -> int:
        return min(self.total, self.capacity)

    def add(self, state: int, action: int, next_state: int, episode: int,
            source_policy: SourcePolicy = SourcePolicy.RANDOM) -> None:
        if source_policy != SourcePolicy.RANDOM:
            raise ValueError("only random-policy transitions may enter the SF replay buffer")
        i = self.total % self.capacity
        self.state[i] = state
        self.action[i] = action
        self.next_state[i] = next_state
        self.episode[i] = episode
        self.seq[i] = self.total
        self.total += 1

    def add_transition(self, tr, episode: int) -> None:
        self.add(tr.state, tr.action, tr.next_state, episode, tr.source_policy)

    def sample_segments(self, batch_size: int, n_step: int, gamma: float,
                        rng: np.random.Generator):
        """Draw ``batch_size`` n-step segments.

        Returns ``(states, actions, seg_states, seg_mask, boot_states, boot_disc)``
        where ``seg_states[:, k]`` is the k-th state of each segment (masked
        beyond the segment end) and the target is
        ``sum_k gamma^k phi(seg_states[:, k]) + boot_disc * psi_hat(boot_states)``.
        """
        size = len(self)
        if size == 0:
            raise ValueError("replay buffer is empty")
        idx = rng.integers(0, size, size=batch_size)
        seg_states = np.zeros((batch_size, n_step), dtype=np.int64)
        seg_mask = np.zeros((batch_size, n_step), dtype=bool)
        seg_states[:, 0] = self.state[idx]
        seg_mask[:, 0] = True
        boot = self.next_state[idx].copy()
        length = np.ones(batch_size, dtype=np.int64)
        cur = idx.copy()
        alive = np.ones(batch_size, dtype=bool)
        for k in range(1, n_step):
            nxt = (cur + 1) % self.capacity
            ok = (
                alive
                & (self.seq[nxt] == self.seq[cur] + 1)
                & (self.episode[nxt] == self.episode[cur])
                & (self.state[nxt] == self.next_state[cur])
            )
            seg_states[ok, k] = self.state[nxt[ok]]
            seg_mask[ok, k] = True
            boot[ok] = self.next_state[nxt[ok]]
            length[ok] += 1
            cur = np.where(ok, nxt, cur)
            alive = ok
        return (self.state[idx], self.action[idx], seg_states, seg_mask, boot,
                gamma ** length.astype(float))

    def arrays(self, prefix: str = "buffer") -> dict[str, np.ndarray]:
        return {
            f"{prefix}.state": self.state, f"{prefix}.action": self.action,
            f"{prefix}.next_state": self.next_state, f"{prefix}.episode": self.episode,
            f"{prefix}.seq": self.seq, f"{prefix}.total": np.array([self.total]),
        }

    def load_arrays(self, arrays, prefix: str = "buffer") -> None:
        for name in ("state", "action", "next_state", "episode", "seq"):
            getattr(self, name)[:] = arrays[f"{prefix}.{name}"]
        self.total = int(arrays[f"{prefix}.total"][0])


# --------------------------------------------------------------------------
# learner


TARGET_TABLE_MAX = 4096  # enumerate target SF for state spaces up to this size


@dataclass
class SFConfig:
    hidden: tuple[int, ...] = (512,)
    lr: float = 5e-4
    batch_size: int = 128
    n_step: int = 1
    buffer_size: int = 20_000
    gamma: float = 0.99
    target_update_interval: int = 250
    grad_clip: float = 1.0
    bias: bool = True
    zero_init_head: bool = True

    @classmethod
    def tabular(cls, **kw) -> "SFConfig":
        """One linear layer, no bias: with one-hot features this is a lookup table."""
        kw.setdefault("hidden", ())
        kw.setdefault("bias", False)
        return cls(**kw)


class SFLearner:
    """TD-learned successor features ``psi(phi(s), a)``.

    ``encoder`` supplies ``dim``, ``features(ids)`` (dense phi) and
    ``net_input(ids)`` (what the network consumes; may be sparse one-hot).
    """

    def __init__(self, encoder, num_actions: int, config: SFConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or SFConfig()
        self.encoder = encoder
        self.featurize = encoder.features
        self.d = int(encoder.dim)
        self.num_actions = int(num_actions)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        cfg = self.config
        sizes = [self.d, *cfg.hidden, self.num_actions * self.d]
        self.net = MLP(sizes, self.rng, bias=cfg.bias, zero_last=cfg.zero_init_head)
        self.target = self.net.copy_params()
        self._target_table = None
        self.optimizer = Adam(lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size)
        self.updates = 0
        self.syncs = 0
        self.version = 0  # bumps whenever theta changes
        self.last_grad_norm = 0.0
        self.last_clipped_norm = 0.0

    # -- prediction ---------------------------------------------------------
    def predict_sa(self, phi, params=None) -> np.ndarray:
        """(B, d) features -> (B, A, d) action-conditioned SF."""
        if isinstance(phi, OneHot):
            B, dim = len(phi.ids), phi.dim
        else:
            phi = np.atleast_2d(phi)
            B, dim = phi.shape
        if dim != self.d:
            raise ValueError(f"feature dimension {dim} != {self.d}")
        return self.net(phi, params).reshape(B, self.num_actions, self.d)

    def predict(self, phi: np.ndarray, params=None) -> np.ndarray:
        """State-only SF: uniform mean over the action heads."""
        return self.predict_sa(phi, params).mean(axis=1)

    def sf_of_states(self, ids, params=None) -> np.ndarray:
        return self.predict(self.encoder.net_input(np.asarray(ids, dtype=np.int64)), params)

    def sf_sa_of_states(self, ids, params=None) -> np.ndarray:
        return self.predict_sa(self.encoder.net_input(np.asarray(ids, dtype=np.int64)), params)

    # -- training -----------------------------------------------------------
    @property
    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def sample_batch(self):
        cfg = self.config
        return self.buffer.sample_segments(cfg.batch_size, cfg.n_step, cfg.gamma, self.rng)

    def td_targets(self, batch) -> np.ndarray:
        _, _, seg_states, seg_mask, boot, boot_disc = batch
        B, n = seg_states.shape
        gamma = self.config.gamma
        target = np.zeros((B, self.d))
        for k in range(n):
            m = seg_mask[:, k]
            if m.any():
                target[m] += gamma ** k * self.featurize(seg_states[m, k])
        target += boot_disc[:, None] * self.target_sf(boot)
        return target

    def target_sf(self, ids) -> np.ndarray:
        """State SF under the target parameters. For small state spaces the
        whole table is computed once per sync and then indexed."""
        n = getattr(self.encoder, "num_states", None)
        if n is None or n > TARGET_TABLE_MAX:
            return self.sf_of_states(ids, self.target)
        if self._target_table is None:
            self._target_table = self.sf_of_states(np.arange(n), self.target)
        return self._target_table[np.asarray(ids, dtype=np.int64)]

    def loss_on(self, batch, params=None) -> float:
        states, actions = batch[0], batch[1]
        target = self.td_targets(batch)
        pred = self.sf_sa_of_states(states, params)[np.arange(len(states)), actions]
        return float(np.mean((target - pred) ** 2))

    def loss_and_grads(self, batch):
        """TD loss (mean over batch and feature dimensions) and its gradient
        with respect to theta; targets are held fixed."""
        states, actions = batch[0], batch[1]
        B = len(states)
        target = self.td_targets(batch)
        out, acts = self.net.forward(self.encoder.net_input(states))
        out = out.reshape(B, self.num_actions, self.d)
        pred = out[np.arange(B), actions]
        err = pred - target
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite TD loss at update {self.updates}: "
                f"max|pred|={np.abs(pred).max():.3g}, max|target|={np.abs(target).max():.3g}"
            )
        grad_out = np.zeros_like(out)
        grad_out[np.arange(B), actions] = 2.0 * err / (B * self.d)
        return loss, self.net.backward(acts, grad_out.reshape(B, -1))

    def td_update(self, batch=None) -> float:
        """One optimizer step on the n-step TD loss; returns the pre-step loss."""
        if batch is None:
            if len(self.buffer) == 0:
                raise ValueError("replay buffer is empty")
            batch = self.sample_batch()
        loss, grads = self.loss_and_grads(batch)
        grads, self.last_grad_norm = clip_by_global_norm(grads, self.config.grad_clip)
        self.last_clipped_norm = min(self.last_grad_norm, self.config.grad_clip)
        self.optimizer.step(self.net.params, grads)
        self.updates += 1
        self.version += 1
        if self.updates % self.config.target_update_interval == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        self.target = self.net.copy_params()
        self._target_table = None
        self.syncs += 1

    # -- persistence --------------------------------------------------------
    def arrays(self, prefix: str = "sf") -> dict[str, np.ndarray]:
        out = {}
        for i, p in enumerate(self.net.params):
            out[f"{prefix}.theta{i}"] = p
        for i, p in enumerate(self.target):
            out[f"{prefix}.target{i}"] = p
        out.update(self.optimizer.state_arrays(f"{prefix}.adam"))
        out[f"{prefix}.counters"] = np.array([self.updates, self.syncs, self.version])
        return out

    def load_arrays(self, arrays, prefix: str = "sf") -> None:
        self.net.params = [arrays[f"{prefix}.theta{i}"].copy() for i in range(len(self.net.params))]
        self.target = [arrays[f"{prefix}.target{i}"].copy() for i in range(len(self.target))]
        self._target_table = None
        self.optimizer.load_arrays(arrays, f"{prefix}.adam")
        self.updates, self.syncs, self.version = (int(v) for v in arrays[f"{prefix}.counters"])

    def set_tabular(self, M_sa: np.ndarray) -> None:
        """Load an exact SR into a tabular (bias-free, single-layer) network.
        Only meaningful with one-hot features of unit norm."""
        if self.net.num_layers != 1 or self.net.bias:
            raise ValueError("set_tabular needs a single bias-free linear layer")
        n, A, d = M_sa.shape
        self.net.params[0] = M_sa.reshape(n, A * d).copy()
        self.version += 1


# --------------------------------------------------------------------------
# SF providers: what the graph, policy and planner read SF from


class AnalyticSF:
    """Exact SF from an :class:`SRMatrix` (one-hot features with alpha = 1)."""

    version = 0

    def __init__(self, sr: SRMatrix):
        self.sr = sr

    def sf(self, state: int) -> np.ndarray:
        return self.sr.M[state]

    def sf_sa(self, state: int) -> np.ndarray:
        return self.sr.M_sa[state]

    def sf_many(self, ids) -> np.ndarray:
        return self.sr.M[np.asarray(ids, dtype=np.int64)]


class LearnedSF:
    """Read-through cache over an :class:`SFLearner`; entries are dropped
    whenever the learner's parameters change."""

    def __init__(self, learner: SFLearner):
        self.learner = learner
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._version = learner.version

    @property
    def version(self) -> int:
        return self.learner.version

    def _entry(self, state: int):
        if self._version != self.learner.version:
            self._cache.clear()
            self._version = self.learner.version
        hit = self._cache.get(state)
        if hit is None:
            sa = self.learner.sf_sa_of_states([state])[0]
            hit = (sa.mean(axis=0), sa)
            self._cache[state] = hit
        return hit

    def sf(self, state: int) -> np.ndarray:
        return self._entry(int(state))[0]

    def sf_sa(self, state: int) -> np.ndarray:
        return self._entry(int(state))[1]

    def sf_many(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) == 0:
            return np.zeros((0, self.learner.d))
        return self.learner.sf_of_states(ids)
