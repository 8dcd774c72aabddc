"""Minimal numpy MLP with manual backprop, Adam and global-norm clipping.

Everything here is float64 and single-threaded so that a fixed seed gives a
bit-identical parameter trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels


class OneHot(NamedTuple):
    """Sparse stand-in for ``alpha * eye(dim)[ids]`` as a network input; the
    first layer then becomes a row gather instead of a dense matmul."""

    ids: np.ndarray
    alpha: float
    dim: int

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.ids), self.dim))
        out[np.arange(len(self.ids)), self.ids] = self.alpha
        return out


class MLP:
    """Fully connected ReLU network. ``params`` is a flat list [W0, b0, W1, b1, ...]
    (biases omitted when ``bias=False``)."""

    def __init__(self, sizes, rng: np.random.Generator, bias: bool = True,
                 zero_last: bool = False, init_scale: float | None = None):
        self.sizes = list(sizes)
        self.bias = bias
        self.params: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = i == len(self.sizes) - 2
            if last and zero_last:
                W = np.zeros((fan_in, fan_out))
            else:
                scale = init_scale if init_scale is not None else np.sqrt(2.0 / fan_in)
                W = rng.normal(0.0, scale, size=(fan_in, fan_out))
            self.params.append(W)
            if bias:
                self.params.append(np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.sizes) - 1

    def _layer(self, i):
        if self.bias:
            return self.params[2 * i], self.params[2 * i + 1]
        return self.params[i], None

    def forward(self, x: np.ndarray, params=None):
        """Returns ``(output, cache)``; pass ``params`` to evaluate a snapshot."""
        if params is not None:
            saved, self.params = self.params, params
        try:
            acts = [x]
            h = x
            for i in range(self.num_layers):
                W, b = self._layer(i)
                h = W[h.ids] * h.alpha if isinstance(h, OneHot) else h @ W
                if b is not None:
                    h = h + b
                if i < self.num_layers - 1:
                    h = np.maximum(h, 0.0)
                acts.append(h)
        finally:
            if params is not None:
                self.params = saved
        return h, acts

    def __call__(self, x, params=None):
        return self.forward(x, params)[0]

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)
        g = grad_out
        for i in reversed(range(self.num_layers)):
            W, b = self._layer(i)
            inp = acts[i]
            if isinstance(inp, OneHot):
                gW = np.zeros_like(W)
                kernels.scatter_add_rows(gW, inp.ids, g, inp.alpha)
            else:
                gW = inp.T @ g
            if self.bias:
                grads[2 * i] = gW
                grads[2 * i + 1] = g.sum(axis=0)
            else:
                grads[i] = gW
            if i > 0:
                g = (g @ W.T) * (acts[i] > 0)
        return grads

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, max_norm: float):
    """Scale ``grads`` so their joint l2 norm is at most ``max_norm``.
    Returns ``(clipped, pre_clip_norm)``."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


@dataclass
class Adam:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            kernels.adam_step(p, g, m, v, self.lr, self.beta1, self.beta2, self.eps, c1, c2)

    def describe(self) -> str:
        return f"adam(lr={self.lr},beta1={self.beta1},beta2={self.beta2},eps={self.eps},bias_correction=true)"

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.t": np.array([self.t], dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}.m{i}"] = m
            out[f"{prefix}.v{i}"] = v
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        self.t = int(arrays[f"{prefix}.t"][0])
        self.m, self.v = [], []
        i = 0
        while f"{prefix}.m{i}" in arrays:
            self.m.append(arrays[f"{prefix}.m{i}"].copy())
            self.v.append(arrays[f"{prefix}.v{i}"].copy())
            i += 1
