"""Compiled kernels must agree with the numpy reference implementations."""

import numpy as np
import pytest

from sfl import _pykernels as py
from sfl import kernels
from sfl.gridworld import builtin_map, transition_table

ck = kernels.compiled
needs_compiled = pytest.mark.skipif(ck is None, reason="compiled extension not built")


@needs_compiled
def test_adam_step_matches(rng):
    shape = (7, 5)
    p0, g = rng.normal(size=shape), rng.normal(size=shape)
    m0, v0 = rng.normal(size=shape), rng.random(shape)
    args = (1e-3, 0.9, 0.999, 1e-8, 0.3, 0.02)
    a = [x.copy() for x in (p0, g, m0, v0)]
    b = [x.copy() for x in (p0, g, m0, v0)]
    py.adam_step(*a, *args)
    ck.adam_step(*(x.reshape(-1) for x in b), *args)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-15)


@needs_compiled
def test_scatter_add_rows_matches(rng):
    out_a, out_b = np.zeros((6, 4)), np.zeros((6, 4))
    ids = rng.integers(0, 6, size=50)
    rows = rng.normal(size=(50, 4))
    py.scatter_add_rows(out_a, ids, rows, 0.5)
    ck.scatter_add_rows(out_b, ids.astype(np.int64), rows, 0.5)
    np.testing.assert_allclose(out_a, out_b, rtol=1e-12, atol=1e-12)


@needs_compiled
def test_cosine_matches(rng):
    X = rng.normal(size=(30, 8))
    X[3] = 0.0
    q = rng.normal(size=8)
    np.testing.assert_allclose(py.cosine_to_rows(q, X), ck.cosine_to_rows(q, X), atol=1e-14)
    assert ck.cosine_to_rows(np.zeros(8), X).tolist() == [0.0] * 30


@needs_compiled
@pytest.mark.parametrize("name", ["fourroom", "multiroom2", "empty5"])
def test_bfs_and_rollout_match(name, rng):
    table = transition_table(builtin_map(name)).astype(np.int64)
    for src in rng.integers(0, table.shape[0], size=5):
        np.testing.assert_array_equal(py.bfs_distances(table, int(src)),
                                      ck.bfs_distances(table, int(src)))
    acts = rng.integers(0, table.shape[1], size=200).astype(np.int64)
    np.testing.assert_array_equal(py.rollout(table, 0, acts), ck.rollout(table, 0, acts))


def test_dispatch_handles_non_contiguous_input(rng):
    p = rng.normal(size=(4, 6)).T  # Fortran-ordered view
    g, m, v = np.ones((6, 4)), np.zeros((6, 4)), np.zeros((6, 4))
    expect = p.copy()
    py.adam_step(expect, g.copy(), m.copy(), v.copy(), 0.1, 0.9, 0.999, 1e-8, 0.1, 0.001)
    kernels.adam_step(p, g, m, v, 0.1, 0.9, 0.999, 1e-8, 0.1, 0.001)
    np.testing.assert_allclose(p, expect)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (ck is not None)
