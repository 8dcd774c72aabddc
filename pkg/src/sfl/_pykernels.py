"""Pure numpy reference versions of the compiled kernels in ``_ckernels``."""

import numpy as np


def adam_step(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def scatter_add_rows(out, ids, rows, alpha):
    np.add.at(out, ids, alpha * rows)


def cosine_to_rows(q, X):
    qn = np.linalg.norm(q)
    xn = np.linalg.norm(X, axis=1)
    out = np.zeros(X.shape[0])
    if qn == 0.0:
        return out
    ok = xn > 0
    out[ok] = (X[ok] @ q) / (xn[ok] * qn)
    return out


def bfs_distances(table, source):
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


def rollout(table, start, actions):
    out = np.empty(len(actions) + 1, dtype=np.int64)
    s = int(start)
    out[0] = s
    for k, a in enumerate(actions):
        s = int(table[s, a])
        out[k + 1] = s
    return out
