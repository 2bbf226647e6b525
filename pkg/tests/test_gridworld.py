import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bossgrid.gridworld import (Action, EpisodeState, MapError, State, decode_state, default_map,
                                enumerate_tasks, parse_map, reset, state_index, step)
from oracles import neighbours

GMAP = default_map()
TASKS = enumerate_tasks(GMAP)
FREE = [int(c) for c in GMAP.free_cells]


def test_default_map_layout():
    assert (GMAP.width, GMAP.height) == (7, 7)
    assert len(FREE) == 39
    assert int(GMAP.walls.sum()) == 10
    assert GMAP.doorways == ((3, 1), (3, 5), (5, 3))
    assert GMAP.n_states == 392
    assert GMAP.corners == ((0, 0), (0, 6), (6, 0), (6, 6))


def test_map_text_round_trip():
    again = parse_map(GMAP.to_text())
    assert again.digest == GMAP.digest
    assert np.array_equal(again.walls, GMAP.walls)


@pytest.mark.parametrize("text, message", [
    ("...\n..\n...\n", "line 2"),
    ("..x\n...\n", "unknown character"),
    ("#..\n...\n", "corner blocked (NW)"),
    ("...\n###\n...\n", "disconnected"),
    (".#.\n.#.\n.#.\n", "disconnected"),
    ("", "empty"),
])
def test_map_errors(text, message):
    with pytest.raises(MapError, match=message.replace("(", r"\(").replace(")", r"\)")):
        parse_map(text)


def test_one_cell_map():
    g = parse_map(".\n")
    assert (len(g.free_cells), g.n_states, len(g.doorways)) == (1, 8, 0)


def test_tasks_are_ordered_corner_pairs():
    assert [t.id for t in TASKS] == list(range(12))
    pairs = {(t.full_corner, t.empty_corner) for t in TASKS}
    assert len(pairs) == 12 and all(a != b for a, b in pairs)


def test_state_encoding_is_a_bijection():
    seen = set()
    for p in FREE:
        for f in (0, 1):
            for last in Action:
                i = state_index(State(p, f, int(last)), GMAP)
                assert decode_state(i, GMAP) == (p, f, int(last))
                seen.add(i)
    assert len(seen) == 39 * 8
    assert max(seen) < GMAP.n_states


def test_state_index_rejects_walls():
    with pytest.raises(ValueError, match="wall"):
        state_index(State(GMAP.cell(0, 3), 0, 0), GMAP)


def test_move_table_matches_independent_construction():
    assert np.array_equal(GMAP.move_to, neighbours(GMAP.walls))


def test_reset_draws_last_action_uniformly():
    rng = np.random.default_rng(0)
    counts = np.bincount([reset(TASKS[0], FREE[5], GMAP, rng).last_action for _ in range(4000)], minlength=4)
    assert (np.abs(counts - 1000) < 4 * np.sqrt(4000 * 0.25 * 0.75)).all()
    with pytest.raises(ValueError):
        reset(TASKS[0], GMAP.cell(3, 3), GMAP, rng)


def test_mismatched_action_never_moves_and_draws_nothing():
    rng = np.random.default_rng(1)
    for p in FREE:
        for last in range(4):
            for a in range(4):
                if a == last:
                    continue
                before = rng.bit_generator.state
                out = step(State(p, 1, last), a, TASKS[0], GMAP, rng)
                assert out.next_state.position == p
                assert out.next_state.last_action == a
                assert rng.bit_generator.state == before


def test_slip_rate_binomial():
    rng = np.random.default_rng(2)
    n = 20_000
    moved = sum(step(State(GMAP.cell(4, 0), 0, 1), 1, TASKS[0], GMAP, rng).moved for _ in range(n))
    assert abs(moved - 0.9 * n) <= 3 * np.sqrt(n * 0.09)


def test_blocked_move_stays():
    rng = np.random.default_rng(3)
    for _ in range(50):
        out = step(State(GMAP.cell(0, 2), 0, 1), Action.EAST, TASKS[0], GMAP, rng)
        assert out.next_state.position == GMAP.cell(0, 2)
        assert out.reward == -1.0


def test_eating_toggles_source():
    task = TASKS[0]  # full NW, empty NE
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(200):
        out = step(State(GMAP.cell(0, 1), 0, 3), Action.WEST, task, GMAP, rng)
        if out.moved:
            hits += 1
            assert out.ate_food and out.reward == 99.0
            assert out.next_state.active_source == 1
        else:
            assert out.reward == -1.0 and out.next_state.active_source == 0
    assert hits > 150


def test_empty_source_gives_nothing():
    out = step(State(GMAP.cell(0, 5), 0, 1), Action.EAST, TASKS[0], GMAP, np.random.default_rng(0))
    assert out.reward == -1.0 and not out.ate_food


def test_episode_terminal():
    assert not EpisodeState().terminal
    assert EpisodeState(steps_taken=500).terminal
    assert EpisodeState(foods_eaten=3).terminal


@given(st.sampled_from(FREE), st.integers(0, 1), st.integers(0, 3), st.integers(0, 3),
       st.integers(0, 11), st.integers(0, 2**32 - 1))
@settings(max_examples=300, deadline=None)
def test_step_invariants(pos, flag, last, action, task_id, seed):
    task = TASKS[task_id]
    out = step(State(pos, flag, last), action, task, GMAP, np.random.default_rng(seed))
    nxt = out.next_state
    assert nxt.last_action == action
    assert nxt.position in FREE
    assert out.reward in (-1.0, 99.0)
    assert out.ate_food == (out.reward == 99.0)
    assert nxt.active_source == (1 - flag if out.ate_food else flag)
    if out.ate_food:
        assert nxt.position == task.sources(GMAP)[flag]
    if action != last:
        assert nxt.position == pos
    else:
        assert nxt.position in (pos, int(GMAP.move_to[pos, action]))
