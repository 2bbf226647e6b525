import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bossgrid.gridworld import EpisodeState, State, default_map, enumerate_tasks, parse_map
from bossgrid.learner import (ChoiceOutcome, LearnConfig, QTable, execute_choice, greedy_choice,
                              learn_policy, q_update)
from bossgrid.options import OptionSet, pretrain_goal_options
from oracles import plain_q_learning

GMAP = default_map()
TASKS = enumerate_tasks(GMAP)
DOORS, _ = pretrain_goal_options(GMAP, GMAP.doorway_cells)
BOTTLENECK = OptionSet(tuple(DOORS.values()))
PRIMITIVES = OptionSet(include_low_level=False)


def sidx(p, f, last):
    return (p * 2 + f) * 4 + last


def test_update_example():
    q = QTable.zeros(GMAP, PRIMITIVES)
    s = sidx(GMAP.cell(1, 1), 0, 0)
    nxt = State(GMAP.cell(1, 1), 0, 1)
    q.values[sidx(*nxt), 2] = 0.5
    out = ChoiceOutcome(nxt, -1.0, 1, "none", 0)
    q_update(q, s, 1, out, LearnConfig())
    assert q.values[s, 1] == pytest.approx(0.25 * (-1 + 0.99 * 0.5))
    assert q.values[s, 1] == pytest.approx(-0.12625, abs=1e-12)


def test_update_two_step_option_from_zero():
    q = QTable.zeros(GMAP, OptionSet())
    out = ChoiceOutcome(State(GMAP.cell(1, 2), 0, 1), -1 - 0.99, 2, "none", 0)
    q_update(q, 0, 5, out, LearnConfig())
    assert q.values[0, 5] == pytest.approx(-0.4975, abs=1e-12)


def test_q_values_stay_bounded():
    q = learn_policy(TASKS[1], OptionSet(), GMAP, LearnConfig(budget=50_000), np.random.default_rng(0))
    assert np.isfinite(q.values).all() and np.abs(q.values).max() < 1e6


def test_update_multi_step_discount():
    q = QTable.zeros(GMAP, BOTTLENECK)
    nxt = State(GMAP.cell(3, 1), 0, 2)
    q.values[sidx(*nxt)] = 10.0
    out = ChoiceOutcome(nxt, -2.9701, 3, "none", 0)
    q_update(q, 0, 8, out, LearnConfig(learning_rate=1.0))
    assert q.values[0, 8] == pytest.approx(-2.9701 + 0.99 ** 3 * 10)


def test_update_zero_table_single_step():
    q = QTable.zeros(GMAP, PRIMITIVES)
    q_update(q, 5, 0, ChoiceOutcome(State(1, 0, 0), -1.0, 1, "none", 0), LearnConfig(learning_rate=0.5))
    q_update(q, 5, 0, ChoiceOutcome(State(1, 0, 0), -1.0, 1, "none", 0), LearnConfig(learning_rate=0.5))
    assert q.values[5, 0] == pytest.approx(-0.75)


def test_foods_terminal_does_not_bootstrap_but_timeout_does():
    cfg = LearnConfig(learning_rate=1.0)
    nxt = State(GMAP.cell(0, 0), 1, 3)
    for terminal, want in (("foods", 99.0), ("timeout", 99.0 + 0.99 * 7.0), ("none", 99.0 + 0.99 * 7.0)):
        q = QTable.zeros(GMAP, PRIMITIVES)
        q.values[sidx(*nxt)] = 7.0
        q_update(q, 0, 3, ChoiceOutcome(nxt, 99.0, 1, terminal, 3), cfg)
        assert q.values[0, 3] == pytest.approx(want)


def test_bootstrap_masks_goal_option_at_its_goal():
    goal = GMAP.doorway_cells[0]
    q = QTable.zeros(GMAP, BOTTLENECK)
    nxt = State(goal, 0, 0)
    q.values[sidx(*nxt)] = [-5, -5, -5, -5, -5, -5, -5, -5, 50.0, -5, -5]
    q_update(q, 0, 0, ChoiceOutcome(nxt, -1.0, 1, "none", 0), LearnConfig(learning_rate=1.0))
    assert q.values[0, 0] == pytest.approx(-1 + 0.99 * -5)
    assert greedy_choice(q, nxt) == 0


def test_greedy_ties_break_low():
    q = QTable.zeros(GMAP, BOTTLENECK)
    assert greedy_choice(q, State(0, 0, 0)) == 0
    q.values[sidx(0, 0, 0), [2, 9]] = 1.0
    assert greedy_choice(q, State(0, 0, 0)) == 2


def test_low_level_option_takes_two_steps():
    rng = np.random.default_rng(0)
    for _ in range(50):
        start = State(GMAP.cell(1, 1), 0, 0)
        out = execute_choice(start, 5, TASKS[0], GMAP, EpisodeState(), OptionSet(), LearnConfig(), rng)
        assert out.duration == 2
        assert out.next_state.last_action == 1
        assert out.next_state.position in (GMAP.cell(1, 1), GMAP.cell(1, 2))
        assert out.cumulative_discounted_reward == pytest.approx(-1 - 0.99)


def test_goal_option_reaches_goal_and_discounts():
    rng = np.random.default_rng(1)
    goal = GMAP.cell(5, 3)
    j = 8 + BOTTLENECK.goals.index(goal)
    out = execute_choice(State(GMAP.cell(4, 1), 0, 0), j, TASKS[11], GMAP, EpisodeState(),
                         BOTTLENECK, LearnConfig(), rng)
    assert out.next_state.position == goal
    assert out.cumulative_discounted_reward == pytest.approx(-sum(0.99 ** i for i in range(out.duration)))


def test_goal_option_unavailable_at_own_goal():
    with pytest.raises(ValueError, match="own goal"):
        execute_choice(State(GMAP.doorway_cells[0], 0, 0), 8, TASKS[0], GMAP, EpisodeState(),
                       BOTTLENECK, LearnConfig(), np.random.default_rng(0))


def test_option_truncated_by_budget():
    out = execute_choice(State(GMAP.cell(0, 0), 0, 0), 10, TASKS[0], GMAP, EpisodeState(),
                         BOTTLENECK, LearnConfig(), np.random.default_rng(0), budget_left=3)
    assert out.duration == 3


def test_option_truncated_by_episode_cap():
    out = execute_choice(State(GMAP.cell(0, 0), 0, 0), 10, TASKS[0], GMAP, EpisodeState(steps_taken=498),
                         BOTTLENECK, LearnConfig(), np.random.default_rng(0))
    assert out.duration == 2 and out.terminal == "timeout"


def test_eating_inside_an_option_counts():
    task = TASKS[0]  # full NW
    out = execute_choice(State(GMAP.cell(0, 1), 0, 3), 7, task, GMAP, EpisodeState(foods_eaten=2),
                         OptionSet(), LearnConfig(), np.random.default_rng(5))
    if out.foods_eaten == 3:
        assert out.terminal == "foods"


@pytest.mark.parametrize("budget", [1, 2, 499, 500, 501, 5_000])
def test_budget_is_consumed_exactly(budget):
    _, trace = learn_policy(TASKS[3], BOTTLENECK, GMAP, LearnConfig(budget=budget),
                            np.random.default_rng(budget), return_trace=True)
    assert int(trace[:, 2].sum()) == budget
    assert (trace[:, 2] >= 1).all()


def test_trace_replay_reproduces_q():
    cfg = LearnConfig(budget=4_000)
    q, trace = learn_policy(TASKS[5], BOTTLENECK, GMAP, cfg, np.random.default_rng(9), return_trace=True)
    names = {0: "none", 1: "foods", 2: "timeout"}
    replay = QTable.zeros(GMAP, BOTTLENECK)
    for s, c, k, ret, s2, term in trace:
        rest, last = divmod(int(s2), 4)
        pos, flag = divmod(rest, 2)
        q_update(replay, int(s), int(c), ChoiceOutcome(State(pos, flag, last), ret, int(k), names[int(term)], 0), cfg)
    assert np.allclose(replay.values, q.values, rtol=0, atol=1e-12)


def test_learning_is_deterministic_per_seed():
    cfg = LearnConfig(budget=3_000)
    a = learn_policy(TASKS[2], BOTTLENECK, GMAP, cfg, np.random.default_rng(4))
    b = learn_policy(TASKS[2], BOTTLENECK, GMAP, cfg, np.random.default_rng(4))
    c = learn_policy(TASKS[2], BOTTLENECK, GMAP, cfg, np.random.default_rng(5))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


@given(st.integers(0, 11), st.integers(1, 3_000), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_primitives_only_matches_plain_q_learning(task_id, budget, seed):
    task = TASKS[task_id]
    ref, log = plain_q_learning(GMAP.walls, tuple(int(c) for c in task.sources(GMAP)), budget,
                                np.random.default_rng(seed))
    q, trace = learn_policy(task, PRIMITIVES, GMAP, LearnConfig(budget=budget), np.random.default_rng(seed),
                            return_trace=True)
    assert np.array_equal(q.values, ref)
    assert len(trace) == len(log)


def test_plain_q_learning_match_on_small_map():
    g = parse_map("...\n.#.\n...\n")
    task = enumerate_tasks(g)[7]
    ref, _ = plain_q_learning(g.walls, tuple(int(c) for c in task.sources(g)), 20_000, np.random.default_rng(0))
    q = learn_policy(task, PRIMITIVES, g, LearnConfig(budget=20_000), np.random.default_rng(0))
    assert np.array_equal(q.values, ref)


def test_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(budget=0)
    with pytest.raises(ValueError):
        LearnConfig(discount=1.5)
    with pytest.raises(ValueError):
        LearnConfig(epsilon=0)
