"""Shared fixtures and small exact-arithmetic oracles."""

from fractions import Fraction

import numpy as np
import pytest

from sfl.gridworld import builtin_map, chain_table, policy_matrix, transition_table
from sfl.successor import analytic_sr


def exact_inverse(A):
    """Gauss-Jordan inverse over Fractions; independent of numpy's solver."""
    n = len(A)
    M = [[Fraction(A[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)]
         for i in range(n)]
    for c in range(n):
        p = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        M[c] = [v / piv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return [row[n:] for row in M]


def exact_sr(table, gamma: Fraction):
    """(I - gamma P)^-1 for the uniform policy, in exact rationals."""
    n, A = table.shape
    P = [[Fraction(0)] * n for _ in range(n)]
    for s in range(n):
        for a in range(A):
            P[s][int(table[s, a])] += Fraction(1, A)
    I_gP = [[Fraction(int(i == j)) - gamma * P[i][j] for j in range(n)] for i in range(n)]
    return exact_inverse(I_gP)


@pytest.fixture(scope="session")
def line3():
    table = chain_table(3)
    sr = analytic_sr(policy_matrix(table), table, 0.5)
    return table, sr


@pytest.fixture(scope="session")
def fourroom():
    return builtin_map("fourroom")


@pytest.fixture(scope="session")
def fourroom_table(fourroom):
    return transition_table(fourroom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criteria lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results, key=lambda c: int(c[1:])):
        terminalreporter.write_line(results[cid])
