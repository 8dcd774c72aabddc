"""Hot inner loops, dispatched to the compiled extension when it is built.

Set ``SFL_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND`` names the
implementation in use (``"cython"`` or ``"python"``).
"""

import os

import numpy as np

from . import _pykernels

python = _pykernels

try:
    if os.environ.get("SFL_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

BACKEND = "cython" if compiled is not None else "python"
_impl = compiled if compiled is not None else python


def _f64(a):
    return a.dtype == np.float64 and a.flags.c_contiguous


def adam_step(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place bias-corrected Adam update of ``p`` (and moments ``m``, ``v``)."""
    if compiled is not None and _f64(p) and _f64(g) and _f64(m) and _f64(v):
        compiled.adam_step(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
                           lr, beta1, beta2, eps, c1, c2)
    else:
        python.adam_step(p, g, m, v, lr, beta1, beta2, eps, c1, c2)


def scatter_add_rows(out, ids, rows, alpha=1.0):
    """``out[ids[b]] += alpha * rows[b]`` with repeated ids accumulating."""
    if compiled is not None and _f64(out):
        compiled.scatter_add_rows(out, np.ascontiguousarray(ids, dtype=np.int64),
                                  np.ascontiguousarray(rows, dtype=np.float64), float(alpha))
    else:
        python.scatter_add_rows(out, ids, rows, alpha)


def cosine_to_rows(q, X):
    return _impl.cosine_to_rows(np.ascontiguousarray(q, dtype=np.float64),
                                np.ascontiguousarray(X, dtype=np.float64))


def bfs_distances(table, source):
    return _impl.bfs_distances(np.ascontiguousarray(table, dtype=np.int64), int(source))


def rollout(table, start, actions):
    return _impl.rollout(np.ascontiguousarray(table, dtype=np.int64), int(start),
                         np.ascontiguousarray(actions, dtype=np.int64))
