import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfl.gridworld import (Action, ActionMode, GridState, GridWorld, Heading, MapParseError,
                           StateSpaceTooLarge, SourcePolicy, Transition, all_pairs_distances,
                           bfs_distances, builtin_map, builtin_map_names, chain_table,
                           default_goal_state, enumerate_states, episode_time_limit,
                           geodesic_distance, load_map, policy_matrix, positions_of,
                           random_policy_matrix, step, transition_table)


def test_minimal_map():
    g = load_map("###\n#S#\n###")
    assert g.num_floor == 1 and g.num_doors == 0
    assert len(enumerate_states(g)) == 4


def test_corridor_has_12_states():
    assert builtin_map("corridor3").num_states == 12


def test_fourroom_layout(fourroom):
    # four 3x3 rooms joined by four one-cell gaps
    assert fourroom.num_floor == 4 * 9 + 4
    assert fourroom.num_states == fourroom.num_floor * 4
    assert fourroom.num_doors == 0
    gaps = [(x, y) for (x, y) in fourroom.floor_cells if x == 4 or y == 4]
    assert len(gaps) == 4


@pytest.mark.parametrize("text,msg,row,col", [
    ("####\n#SS#\n####", "multiple start", 1, 2),
    ("####\n#..#\n####", "no start", None, None),
    ("####\n#S.#\n###", "non-rectangular", 2, None),
    ("####\n#Sx#\n####", "invalid character", 1, 2),
    ("#.##\n#S.#\n####", "boundary", 0, 1),
    ("#####\n#S#.#\n#####", "unreachable", 1, 3),
    ("#####\n#SGG#\n#####", "multiple goal", 1, 3),
])
def test_parse_errors_name_position(text, msg, row, col):
    with pytest.raises(MapParseError) as exc:
        load_map(text)
    assert msg in str(exc.value)
    assert exc.value.row == row
    if col is not None:
        assert exc.value.col == col


def test_step_semantics():
    g = builtin_map("multiroom2")
    s = GridState(1, 1, Heading.N, 0)
    assert step(g, s, Action.FORWARD)[0] == s  # wall ahead
    assert step(g, GridState(1, 1, Heading.E, 0), Action.TURN_LEFT)[0] == GridState(1, 1, Heading.N, 0)
    assert step(g, GridState(1, 1, Heading.N, 0), Action.TURN_LEFT)[0].heading == Heading.W
    assert step(g, s, Action.TOGGLE)[0] == s  # no door ahead
    # door at (5, 3): closed door blocks, toggle opens, then forward passes
    front = GridState(4, 3, Heading.E, 0)
    assert step(g, front, Action.FORWARD)[0] == front
    opened = step(g, front, Action.TOGGLE)[0]
    assert opened == GridState(4, 3, Heading.E, 1)
    assert step(g, opened, Action.FORWARD)[0] == GridState(5, 3, Heading.E, 1)
    assert step(g, opened, Action.TOGGLE)[0] == front
    assert step(g, front, Action.FORWARD)[1:] == (0.0, False)


@pytest.mark.parametrize("name", builtin_map_names())
def test_state_ids_are_a_bijection(name):
    g = builtin_map(name)
    states = enumerate_states(g)
    assert [g.state_id(s) for s in states] == list(range(g.num_states))
    assert len(set(states)) == g.num_states


@pytest.mark.parametrize("name", builtin_map_names())
def test_closure_and_table_consistency(name):
    g = builtin_map(name)
    table = transition_table(g)
    for sid in range(g.num_states):
        s = g.state_from_id(sid)
        for a in Action:
            nxt = step(g, s, a)[0]
            assert g.cell(nxt.x, nxt.y) != "#"
            assert table[sid, a] == g.state_id(nxt)


@pytest.mark.parametrize("name", builtin_map_names())
def test_policy_rows_are_distributions(name):
    P = random_policy_matrix(builtin_map(name))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert (P >= 0).all()


def test_policy_matrix_examples():
    P = policy_matrix(chain_table(3))
    np.testing.assert_array_equal(P[0], [0.5, 0.5, 0.0])
    assert policy_matrix(np.zeros((1, 2), dtype=np.int64)).tolist() == [[1.0]]


def test_navigation_mode_drops_toggle(fourroom):
    P = random_policy_matrix(fourroom, ActionMode.NAVIGATION)
    assert ActionMode.NAVIGATION.actions == (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


def test_state_cap():
    with pytest.raises(StateSpaceTooLarge):
        enumerate_states(builtin_map("multiroom3"), cap=100)


def test_geodesic_examples(fourroom):
    s = GridState(1, 1, Heading.E, 0)
    assert geodesic_distance(fourroom, s, s) == 0
    assert geodesic_distance(fourroom, s, GridState(2, 1, Heading.E, 0)) == 1


def test_closed_door_costs_a_toggle():
    g = builtin_map("multiroom2")
    a = GridState(4, 3, Heading.E, 0)
    b = GridState(6, 3, Heading.E, 1)
    # 2 forward moves would suffice if the door were open
    assert geodesic_distance(g, a, b) == 3


def test_unreachable_is_infinite():
    table = np.array([[0, 0], [0, 1]])  # state 0 cannot reach 1
    assert np.isinf(bfs_distances(table, 0)[1])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 159), st.integers(0, 159), st.integers(0, 159))
def test_triangle_inequality(a, b, c):
    D = _fourroom_dist()
    assert D[a, c] <= D[a, b] + D[b, c]


_D = {}


def _fourroom_dist():
    if "d" not in _D:
        _D["d"] = all_pairs_distances(transition_table(builtin_map("fourroom")))
    return _D["d"]


def test_bfs_matches_brute_force_relaxation(fourroom_table):
    # Bellman-Ford style relaxation as an independent oracle
    n = fourroom_table.shape[0]
    d = np.full(n, np.inf)
    d[0] = 0
    for _ in range(n):
        nd = d.copy()
        for s in range(n):
            for a in range(4):
                nd[fourroom_table[s, a]] = min(nd[fourroom_table[s, a]], d[s] + 1)
        if np.array_equal(nd, d):
            break
        d = nd
    np.testing.assert_array_equal(bfs_distances(fourroom_table, 0), d)


def test_time_limits():
    assert episode_time_limit(builtin_map("fourroom")) == 100
    assert episode_time_limit(builtin_map("multiroom3")) == 120
    assert episode_time_limit(builtin_map("multiroom2")) == 80


def test_env_episode(fourroom):
    env = GridWorld(fourroom, time_limit=3)
    s0 = env.reset()
    assert env.state == fourroom.start_state()
    for k in range(3):
        sid, r, done = env.step(Action.FORWARD)
        assert r == 0.0
        assert done == (k == 2)
    with pytest.raises(RuntimeError):
        env.step(Action.FORWARD)
    assert env.reset() == s0 and env.remaining == 3


def test_doors_reset_closed():
    g = builtin_map("multiroom2")
    env = GridWorld(g)
    env.reset(GridState(4, 3, Heading.E, 0))
    env.step(Action.TOGGLE)
    assert env.state.door_open == 1
    env.reset()
    assert env.state.door_open == 0


def test_random_spawn_uses_closed_door_states():
    g = builtin_map("multiroom2")
    env = GridWorld(g, random_spawn=True, rng=np.random.default_rng(0))
    spawns = {env.reset() for _ in range(300)}
    assert len(spawns) > 50
    assert all(g.state_from_id(s).door_open == 0 for s in spawns)


def test_default_goal_state_is_reachable(fourroom, fourroom_table):
    goal = default_goal_state(fourroom, fourroom_table)
    assert (goal.x, goal.y) == fourroom.goal
    d = bfs_distances(fourroom_table, fourroom.state_id(fourroom.start_state()))
    others = [fourroom.state_id(GridState(goal.x, goal.y, h, 0)) for h in Heading]
    assert d[fourroom.state_id(goal)] == min(d[o] for o in others)


def test_transition_record_and_positions(fourroom):
    t = Transition(0, 1, 0.0, 3, False)
    assert t.source_policy == SourcePolicy.RANDOM
    ids = [fourroom.state_id(GridState(1, 1, h, 0)) for h in Heading]
    assert positions_of(fourroom, ids) == {(1, 1)}
