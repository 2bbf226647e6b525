"""Budgeted SMDP Q-learning over primitive actions plus an option set.

Every primitive environment step, including those taken inside options, is
charged to the learning budget. Updates happen at choice boundaries only:

    Q(s, c) += alpha * (R + gamma**k * max_c' Q(s', c') - Q(s, c))

where R is the gamma-discounted reward collected over the k primitive steps of
the choice. Finishing the episode by eating the last food is terminal (no
bootstrap); hitting the 500-step cap or the budget is truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bossgrid import _kernels as K
from bossgrid.gridworld import EPISODE_STEPS, EpisodeState, GridMap, State, Task
from bossgrid.options import OptionSet

TERMINAL_NAMES = {K.TERM_NONE: "none", K.TERM_FOODS: "foods", K.TERM_TIMEOUT: "timeout"}
TERMINAL_CODES = {v: k for k, v in TERMINAL_NAMES.items()}


@dataclass(frozen=True)
class LearnConfig:
    budget: int = 5_000
    learning_rate: float = 0.25
    discount: float = 0.99
    epsilon: float = 0.1
    option_cap: int = 500

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if not 0 < self.learning_rate <= 1 or not 0 < self.epsilon <= 1:
            raise ValueError("learning_rate and epsilon must be in (0, 1]")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")
        if self.option_cap < 1:
            raise ValueError("option_cap must be >= 1")


@dataclass(eq=False)
class QTable:
    values: np.ndarray  # (n_states, n_choices)
    option_set: OptionSet

    @classmethod
    def zeros(cls, gmap: GridMap, option_set: OptionSet) -> "QTable":
        return cls(np.zeros((gmap.n_states, option_set.n_choices)), option_set)

    def to_text(self) -> str:
        rows = ["state_index,choice_index,value"]
        for s, c in np.ndindex(*self.values.shape):
            rows.append(f"{s},{c},{self.values[s, c]:.6g}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class ChoiceOutcome:
    next_state: State
    cumulative_discounted_reward: float
    duration: int
    terminal: str  # "none", "foods" or "timeout"
    foods_eaten: int  # episode total after the choice


def _check_available(state: State, choice: int, option_set: OptionSet) -> None:
    n_base = 4 + option_set.n_low
    if not 0 <= choice < option_set.n_choices:
        raise ValueError(f"choice {choice} out of range for {option_set.n_choices} choices")
    if choice >= n_base and option_set.goals[choice - n_base] == state.position:
        raise ValueError("goal option selected at its own goal cell")


def execute_choice(state: State, choice: int, task: Task, gmap: GridMap, episode: EpisodeState,
                   option_set: OptionSet, cfg: LearnConfig, rng: np.random.Generator,
                   budget_left: int | None = None) -> ChoiceOutcome:
    _check_available(state, choice, option_set)
    n_low, goal_cells, policy = option_set.kernel_arrays(gmap.n_positions)
    if budget_left is None:
        budget_left = cfg.option_cap
    out = K.episode(np.zeros((1, option_set.n_choices)), state.position, state.active_source,
                    state.last_action, episode.steps_taken, episode.foods_eaten, budget_left,
                    False, 0.0, cfg.discount, 0.0, cfg.option_cap, EPISODE_STEPS, choice,
                    gmap.move_to, task.sources(gmap), n_low, goal_cells, policy, rng,
                    np.zeros((0, 6)), 0)
    pos, flag, last, _, foods, _, _, ret, k, terminal, _ = out
    return ChoiceOutcome(State(int(pos), int(flag), int(last)), float(ret), int(k),
                         TERMINAL_NAMES[int(terminal)], int(foods))


def _best_available(q: QTable, s: int, position: int) -> int:
    n_base = 4 + q.option_set.n_low
    row = q.values[s].copy()
    for j, g in enumerate(q.option_set.goals):
        if g == position:
            row[n_base + j] = -np.inf
    return int(np.argmax(row))  # first maximum wins


def q_update(q: QTable, s: int, choice: int, outcome: ChoiceOutcome, cfg: LearnConfig) -> QTable:
    """Apply one SMDP update in place and return ``q``."""
    target = outcome.cumulative_discounted_reward
    if outcome.terminal != "foods":
        nxt = outcome.next_state
        s2 = ((nxt.position * 2) + nxt.active_source) * 4 + nxt.last_action
        target += cfg.discount ** outcome.duration * q.values[s2, _best_available(q, s2, nxt.position)]
    q.values[s, choice] += cfg.learning_rate * (target - q.values[s, choice])
    return q


def greedy_choice(q: QTable, state: State) -> int:
    """Best available choice; ties go to the lowest index, own-goal options are masked."""
    s = ((state.position * 2) + state.active_source) * 4 + state.last_action
    return _best_available(q, s, state.position)


def learn_policy(task: Task, option_set: OptionSet, gmap: GridMap, cfg: LearnConfig,
                 rng: np.random.Generator, return_trace: bool = False):
    """Learn a task policy using exactly ``cfg.budget`` primitive steps.

    With ``return_trace`` the per-decision log is returned as well, one row of
    (state, choice, duration, return, next_state, terminal_code) per update.
    """
    q = QTable.zeros(gmap, option_set)
    n_low, goal_cells, policy = option_set.kernel_arrays(gmap.n_positions)
    trace = np.zeros((cfg.budget if return_trace else 0, 6))
    n = K.learn(q.values, cfg.budget, cfg.learning_rate, cfg.discount, cfg.epsilon, cfg.option_cap,
                EPISODE_STEPS, gmap.free_cells, gmap.move_to, task.sources(gmap),
                n_low, goal_cells, policy, rng, trace)
    if return_trace:
        return q, trace[:n]
    return q
