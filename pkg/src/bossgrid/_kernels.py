"""Compiled inner loops for the food-source domain.

Every function here is a pure function of its array arguments plus an explicit
``numpy.random.Generator``. The Python-level modules wrap these kernels; nothing
else in the package re-implements the dynamics.

Random-draw protocol (kept stable so independent oracles can replay a stream):

* reset: ``integers(0, n_free)`` for the start cell (learning only), then
  ``integers(0, 4)`` for the initial last action.
* decision: ``random()`` compared against epsilon; on exploration
  ``integers(0, n_available)`` picks the m-th available choice.
* primitive step: one ``random()`` draw only when the action repeats the last
  action; the move succeeds when the draw is below ``MOVE_PROB``.
"""

import numba
import numpy as np

MOVE_PROB = 0.9
STEP_REWARD = -1.0
EAT_REWARD = 99.0
EPISODE_STEPS = 500
FOODS_PER_EPISODE = 3

TERM_NONE = 0
TERM_FOODS = 1
TERM_TIMEOUT = 2

# (drow, dcol) for north, east, south, west
ACTION_DELTAS = np.array([[-1, 0], [0, 1], [1, 0], [0, -1]], dtype=np.int64)


@numba.njit(cache=True)
def state_index(pos, flag, last):
    return (pos * 2 + flag) * 4 + last


@numba.njit(cache=True)
def episode(q, pos, flag, last, t, foods, budget_left, learning, alpha, gamma, eps,
            cap, horizon, forced, move_to, sources, n_low, goal_cells, goal_policy,
            rng, trace, n_trace):
    """Run choices from the given state until the episode ends.

    Also stops once ``budget_left`` primitive steps are spent, or after one
    choice when ``forced >= 0`` (that choice is executed as given). With
    ``learning`` the choice is epsilon-greedy and each one is followed by an
    SMDP update; otherwise selection is greedy and ``q`` is untouched.

    Returns (pos, flag, last, t, foods, steps, total, ret, k, terminal,
    n_trace) where ``total`` sums the per-choice discounted returns and
    (ret, k, terminal) describe the final choice.

    Kept as one flat loop on purpose: numba helpers taking arrays inside the
    step loop cost about five times the step itself.
    """
    n_choices = q.shape[1]
    n_base = 4 + n_low
    n_goals = goal_cells.shape[0]
    steps = 0
    total = 0.0
    ret = 0.0
    k = 0
    terminal = TERM_NONE
    while True:
        s = (pos * 2 + flag) * 4 + last

        # select
        if forced >= 0:
            c = forced
        else:
            c = -1
            if learning and rng.random() < eps:
                n_avail = n_choices
                for j in range(n_goals):
                    if goal_cells[j] == pos:
                        n_avail -= 1
                m = rng.integers(0, n_avail)
                for cc in range(n_choices):
                    if cc >= n_base and goal_cells[cc - n_base] == pos:
                        continue
                    if m == 0:
                        c = cc
                        break
                    m -= 1
            if c < 0:
                c = 0
                best_v = q[s, 0]
                for cc in range(1, n_choices):
                    if cc >= n_base and goal_cells[cc - n_base] == pos:
                        continue
                    if q[s, cc] > best_v:
                        best_v = q[s, cc]
                        c = cc

        # execute
        limit = min(cap, horizon - t, budget_left - steps)
        j = 0
        goal = -1
        fixed = -1
        if c < 4:
            fixed = c
            limit = min(limit, 1)
        elif c < n_base:
            fixed = c - 4
            limit = min(limit, 2)
        else:
            j = c - n_base
            goal = goal_cells[j]
        ret = 0.0
        disc = 1.0
        k = 0
        while k < limit:
            if fixed >= 0:
                a = fixed
            else:
                if pos == goal:
                    break
                a = goal_policy[j, pos, last]
            if a == last and rng.random() < MOVE_PROB:
                pos = move_to[pos, a]
            last = a
            k += 1
            if pos == sources[flag]:
                flag = 1 - flag
                ret += disc * EAT_REWARD
                foods += 1
                if foods >= FOODS_PER_EPISODE:
                    break
            else:
                ret += disc * STEP_REWARD
            disc *= gamma
        steps += k
        t += k
        total += ret
        if foods >= FOODS_PER_EPISODE:
            terminal = TERM_FOODS
        elif t >= horizon:
            terminal = TERM_TIMEOUT
        else:
            terminal = TERM_NONE
        s2 = (pos * 2 + flag) * 4 + last

        # learn
        if learning:
            target = ret
            if terminal != TERM_FOODS:
                best_v = q[s2, 0]
                for cc in range(1, n_choices):
                    if cc >= n_base and goal_cells[cc - n_base] == pos:
                        continue
                    if q[s2, cc] > best_v:
                        best_v = q[s2, cc]
                target += gamma ** k * best_v
            q[s, c] += alpha * (target - q[s, c])
        if n_trace < trace.shape[0]:
            trace[n_trace, 0] = s
            trace[n_trace, 1] = c
            trace[n_trace, 2] = k
            trace[n_trace, 3] = ret
            trace[n_trace, 4] = s2
            trace[n_trace, 5] = terminal
        n_trace += 1

        if terminal != TERM_NONE or steps >= budget_left or forced >= 0:
            break
    return pos, flag, last, t, foods, steps, total, ret, k, terminal, n_trace


@numba.njit(cache=True)
def learn(q, budget, alpha, gamma, eps, cap, horizon, free_cells, move_to,
          sources, n_low, goal_cells, goal_policy, rng, trace):
    """Budgeted SMDP Q-learning; updates ``q`` in place.

    Exactly ``budget`` primitive steps are consumed. When ``trace`` has rows,
    decision i is written as (state, choice, duration, return, next_state,
    terminal). Returns the number of decisions taken.
    """
    n_free = free_cells.shape[0]
    used = 0
    n_trace = 0
    while used < budget:
        pos = free_cells[rng.integers(0, n_free)]
        last = rng.integers(0, 4)
        out = episode(q, pos, 0, last, 0, 0, budget - used, True, alpha, gamma, eps,
                      cap, horizon, -1, move_to, sources, n_low, goal_cells, goal_policy,
                      rng, trace, n_trace)
        used += out[5]
        n_trace = out[10]
    return n_trace


@numba.njit(cache=True)
def evaluate(q, starts, rollouts, horizon, cap, move_to, sources, n_low,
             goal_cells, goal_policy, rng, out):
    """Undiscounted greedy rollouts; one return per (start, rollout) into ``out``."""
    no_trace = np.zeros((0, 6))
    i = 0
    for si in range(starts.shape[0]):
        for _ in range(rollouts):
            last = rng.integers(0, 4)
            res = episode(q, starts[si], 0, last, 0, 0, horizon, False, 0.0, 1.0, 0.0,
                          cap, horizon, -1, move_to, sources, n_low, goal_cells, goal_policy,
                          rng, no_trace, 0)
            out[i] = res[6]
            i += 1


@numba.njit(cache=True, inline="always")
def _move(pos, last, a, move_to, rng):
    if a == last and rng.random() < MOVE_PROB:
        return move_to[pos, a]
    return pos


@numba.njit(cache=True, inline="always")
def _greedy_row(row):
    best = 0
    for a in range(1, 4):
        if row[a] > row[best]:
            best = a
    return best


@numba.njit(cache=True)
def pretrain(goal, alpha, eps, max_episodes, episode_steps, patience,
             free_cells, move_to, rng):
    """Shortest-path Q-learning towards ``goal`` over (position, last_action).

    Returns (q, policy, episodes_run, visited). Stops early once the greedy
    policy over non-goal free states has been stable for ``patience`` episodes
    and every such state has been visited.
    """
    n_pos = move_to.shape[0]
    q = np.zeros((n_pos, 4, 4))
    visited = np.zeros((n_pos, 4), dtype=np.bool_)
    policy = np.zeros((n_pos, 4), dtype=np.int8)
    starts = np.empty(free_cells.shape[0] - 1, dtype=np.int64)
    j = 0
    for p in free_cells:
        if p != goal:
            starts[j] = p
            j += 1
    n_states = starts.shape[0] * 4
    n_visited = 0
    stable = 0
    ep = 0
    while ep < max_episodes:
        if starts.shape[0] == 0:
            break
        pos = starts[rng.integers(0, starts.shape[0])]
        last = rng.integers(0, 4)
        t = 0
        while pos != goal and t < episode_steps:
            if not visited[pos, last]:
                visited[pos, last] = True
                n_visited += 1
            if rng.random() < eps:
                a = rng.integers(0, 4)
            else:
                a = _greedy_row(q[pos, last])
            nxt = _move(pos, last, a, move_to, rng)
            if nxt == goal:
                target = -1.0
            else:
                target = -1.0 + q[nxt, a, _greedy_row(q[nxt, a])]
            q[pos, last, a] += alpha * (target - q[pos, last, a])
            pos = nxt
            last = a
            t += 1
        ep += 1
        changed = False
        for p in starts:
            for l in range(4):
                g = _greedy_row(q[p, l])
                if g != policy[p, l]:
                    policy[p, l] = g
                    changed = True
        if changed:
            stable = 0
        else:
            stable += 1
        if stable >= patience and n_visited == n_states:
            break
    return q, policy, ep, visited


@numba.njit(cache=True)
def option_rollouts(policy, goal, start, n, cap, move_to, rng, out):
    """Steps-to-goal for ``n`` greedy executions from ``start``; -1 if capped."""
    for i in range(n):
        pos = start
        last = rng.integers(0, 4)
        k = 0
        while pos != goal and k < cap:
            a = policy[pos, last]
            pos = _move(pos, last, a, move_to, rng)
            last = a
            k += 1
        out[i] = k if pos == goal else -1
