import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfl.gridworld import (GridWorld, all_pairs_distances, builtin_map, random_policy_matrix,
                           transition_table)
from sfl.landmarks import (CandidateBuffer, GraphConfig, LandmarkGraph, NotLocalized,
                           WEIGHT_FLOOR, dynamic_edge_threshold, edge_weight, landmark_spacing,
                           long_edge_fraction)
from sfl.successor import AnalyticSF, analytic_sr


def line3_graph(line3, states=(0, 2), **kw):
    _, sr = line3
    P = AnalyticSF(sr)
    g = LandmarkGraph(GraphConfig(**kw))
    for s in states:
        g.add_landmark(s, P.sf(s))
    return g, P


def test_localize_examples(line3):
    g, P = line3_graph(line3)
    assert g.localize(g.similarities(P.sf(0))) == (0, 1.0)
    lid, v = g.localize(g.similarities(P.sf(1)))
    assert lid == 0 and v == pytest.approx(0.5532065, abs=1e-7)
    assert LandmarkGraph().localize(np.zeros(0)) is NotLocalized
    assert not NotLocalized


def test_gate_rejects_without_visit(line3):
    g, P = line3_graph(line3, local_threshold=0.9, add_threshold=0.5)
    obs = g.observe(1, P)
    assert obs.landmark == 0 and not obs.localized
    assert [lm.visit_count for lm in g.landmarks] == [0, 0]


def test_default_gate_accepts_exact_landmark_state(line3):
    g, P = line3_graph(line3)
    assert g.config.effective_local_threshold == 1.0 - 1e-9
    assert g.observe(2, P).localized
    assert g.landmarks[1].visit_count == 1


def test_bootstrap(line3):
    _, sr = line3
    g = LandmarkGraph()
    obs = g.observe(1, AnalyticSF(sr))
    assert len(g) == 1 and g.landmarks[0].state == 1
    assert obs.localized and g.landmarks[0].visit_count == 1


def test_candidate_then_flush(line3):
    g, P = line3_graph(line3, add_threshold=0.6, local_threshold=0.99)
    obs = g.observe(1, P)
    assert obs.candidate and 1 in g.candidates.pending
    added = g.flush_candidates(P)
    assert added == [2] and g.landmarks[2].state == 1
    assert len(g.candidates) == 0


def test_walk_counts_transitions(line3):
    g, P = line3_graph(line3, states=(0, 1, 2), local_threshold=0.4)
    g.graph_update([0, 1, 2], P)
    assert g.counts == {(0, 1): 1, (1, 2): 1}
    g.begin_episode()
    g.graph_update([2], P)
    assert g.counts == {(0, 1): 1, (1, 2): 1}  # no transition across the reset


def test_staying_does_not_count(line3):
    g, P = line3_graph(line3, states=(0, 2))
    g.graph_update([0, 0, 1, 0, 2, 2, 0], P)
    assert g.counts == {(0, 1): 1, (1, 0): 1}
    assert [lm.visit_count for lm in g.landmarks] == [2, 1]


def test_dynamic_threshold_examples():
    assert dynamic_edge_threshold({(0, 1): 1, (1, 2): 2, (2, 0): 5}) == 2
    assert dynamic_edge_threshold({(0, 1): 3}) == 3
    assert dynamic_edge_threshold({}) == 0.0
    g = LandmarkGraph(GraphConfig(edge_threshold="median"))
    for i in range(3):
        g.add_landmark(i, np.ones(2))
    g.counts = {(0, 1): 1, (1, 2): 2, (2, 0): 5}
    g.form_edges()
    assert [k for k, e in g.edges.items() if e.active] == [(2, 0)]
    g.counts = {(0, 1): 3}
    g.form_edges()
    assert g.edge_weights() == {}


def _graph_with(n, counts, **kw):
    g = LandmarkGraph(GraphConfig(landmark_cap=max(n, 1), **kw))
    for i in range(n):
        g.add_landmark(i, np.ones(2))
    g.counts = dict(counts)
    return g


def test_temporal_filter_example():
    g = _graph_with(50, {(3, 9): 5, (3, 6): 5}, temporal_tau=0.1)
    g.form_edges()
    assert g.edges[(3, 9)].filtered_by == ("temporal",)
    assert g.edges[(3, 6)].active


def test_weight_example():
    assert edge_weight(3) == pytest.approx(0.0498, abs=1e-4)
    assert edge_weight(1000) == WEIGHT_FLOOR > 0.0
    g = _graph_with(2, {(0, 1): 3})
    g.form_edges()
    assert g.edge_weights() == {(0, 1): math.exp(-3)}


def test_k_nearest_filter():
    g = _graph_with(8, {(0, j): 10 - j for j in range(1, 8)}, k_nearest=5)
    g.form_edges()
    kept = sorted(j for (i, j), e in g.edges.items() if e.active)
    assert kept == [1, 2, 3, 4, 5]
    assert g.edges[(0, 7)].filtered_by == ("k_nearest",)


def test_failure_forgetting_example():
    g = _graph_with(2, {(0, 1): 5})
    g.record_failure(0, 1, step=10_000)
    g.form_edges(now=20_000)
    assert not g.edges[(0, 1)].active
    g.form_edges(now=95_000)
    assert g.edges[(0, 1)].active


def test_failure_is_directed_and_expires():
    g = _graph_with(8, {(2, 7): 4, (7, 2): 4})
    g.now = 100
    g.form_edges()
    g.record_failure(2, 7, step=100)
    g.record_failure(2, 7, step=200)
    assert (2, 7) not in g.edge_weights() and (7, 2) in g.edge_weights()
    g.form_edges(now=200 + 80_000)
    assert (2, 7) not in g.edge_weights()
    g.form_edges(now=200 + 80_001)
    assert (2, 7) in g.edge_weights()


def test_failure_on_non_adjacent_pair_and_unknown_id():
    g = _graph_with(4, {(0, 1): 4})
    g.form_edges()
    before = g.edge_weights()
    g.record_failure(2, 3, step=5)
    assert g.edge_weights() == before and (2, 3, 5) in g.failures
    with pytest.raises(KeyError):
        g.record_failure(0, 9)


def test_refresh(line3):
    g, P = line3_graph(line3)
    cache = [lm.sf.copy() for lm in g.landmarks]
    g.refresh(P)
    assert all(np.array_equal(a, lm.sf) for a, lm in zip(cache, g.landmarks))

    class Shifted:
        def sf(self, s):
            return P.sf(s) + 1.0

        def sf_many(self, ids):
            return P.sf_many(ids) + 1.0

    g.refresh(Shifted())
    for lm in g.landmarks:
        assert g.localize(g.similarities(Shifted().sf(lm.state))) == (lm.id, pytest.approx(1.0))


def test_maintenance_schedule(line3):
    g, P = line3_graph(line3, states=(0,), n_update=10, n_add=30, n_form_edges=20,
                       add_threshold=0.6)
    g.observe(2, P, step=1)
    calls = []
    g.refresh = lambda p: calls.append("refresh")
    for step in range(1, 61):
        g.maintain(step, P)
    assert calls.count("refresh") == 6
    assert len(g) == 2  # one flush at step 30 added the candidate


def test_candidate_buffer_keeps_lowest_score():
    b = CandidateBuffer()
    b.push(4, 0.5)
    b.push(4, 0.3)
    b.push(2, 0.3)
    b.push(4, 0.9)
    assert b.ranked() == [(2, 0.3), (4, 0.3)]


def test_zero_sf_candidates_are_not_added():
    class Zero:
        def sf(self, s):
            return np.zeros(3)

    g = LandmarkGraph()
    g.observe(0, Zero())
    g.observe(1, Zero())
    assert len(g) == 1 and 1 in g.candidates.pending
    assert g.flush_candidates(Zero()) == []


def _fourroom_run(cap, steps, seed, gamma=0.95, **kw):
    grid = builtin_map("fourroom")
    table = transition_table(grid)
    P = AnalyticSF(analytic_sr(random_policy_matrix(grid), table, gamma))
    g = LandmarkGraph(GraphConfig(landmark_cap=cap, n_add=200, n_update=100, n_form_edges=100,
                                  local_threshold=0.99, **kw))
    env = GridWorld(grid)
    rng = np.random.default_rng(seed)
    step = 0
    separations = []
    orig_add = g.add_landmark

    def add(state, sf, at=None):
        if len(g):
            separations.append(g.similarities(sf).max())
        return orig_add(state, sf, at)

    g.add_landmark = add
    localized = 0
    while step < steps:
        g.begin_episode()
        g.observe(env.reset(), P, step)
        while not env.done and step < steps:
            s, _, _ = env.step(int(rng.integers(4)))
            step += 1
            localized += g.observe(s, P, step).localized
            g.maintain(step, P)
    return grid, table, g, separations, localized


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_cap_monotone_ids_conservation_and_separation(cap, seed):
    _, _, g, seps, localized = _fourroom_run(cap, 3000, seed)
    assert len(g) <= cap
    assert [lm.id for lm in g.landmarks] == list(range(len(g)))
    assert sum(g.counts.values()) <= localized
    assert all(s < g.config.add_threshold for s in seps)
    assert all(lm.visit_count >= 0 for lm in g.landmarks)


def test_edge_soundness_with_analytic_sf():
    grid, table, g, _, _ = _fourroom_run(10, 60_000, 0)
    D = all_pairs_distances(table)
    assert len(g) == 10
    assert sum(e.active for e in g.edges.values()) > 0
    assert long_edge_fraction(g, D) < 0.05


def test_spacing_helper():
    D = np.array([[0, 1, 5], [1, 0, 4], [5, 4, 0]], dtype=float)
    assert landmark_spacing([0, 1, 2], D) == 1.0
    assert landmark_spacing([0], D) == 0.0


def test_temporary_landmark(line3):
    g, P = line3_graph(line3, states=(0, 2))
    with g.temporary_landmark(1, P.sf(1), k_connect=1) as gid:
        assert gid == 2 and len(g) == 3 and g.num_permanent == 2
        assert g.edge_weights() == {(0, 2): math.exp(-1)}
    assert len(g) == 2 and g.edge_weights() == {}


def test_dot_export(fourroom):
    g = LandmarkGraph()
    for s in (0, 5):
        g.add_landmark(s, np.ones(2))
    g.counts = {(0, 1): 3, (1, 0): 1}
    g.form_edges()
    dot = g.to_dot(fourroom)
    assert dot.startswith("digraph landmarks {")
    assert '0 [id="0" visit_count="0" added_at_step="0" state="0" x="1" y="1" heading="N"];' in dot
    assert '0 -> 1 [count="3" weight="0.0497871" filtered_by=""];' in dot
    assert '1 -> 0 [count="1" weight="0.367879" filtered_by="threshold"];' in dot


def test_arrays_roundtrip(line3):
    g, P = line3_graph(line3, local_threshold=0.4)
    g.graph_update([0, 1, 2, 1, 0], P, start_step=1)
    g.record_failure(0, 1, 3)
    g.form_edges()
    h = LandmarkGraph.from_arrays(g.arrays(), g.config)
    assert h.counts == g.counts and h.failures == g.failures and h.now == g.now
    assert [(lm.state, lm.visit_count, lm.added_at_step) for lm in h.landmarks] == \
           [(lm.state, lm.visit_count, lm.added_at_step) for lm in g.landmarks]
    assert h.edges == g.edges
