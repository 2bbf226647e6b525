"""Food-source grid-world: map geometry, task set, state encoding and dynamics.

Cells are addressed as ``(row, col)`` with row 0 at the top; the flat cell index
is ``row * width + col``. Actions are ordered north, east, south, west.

An agent only moves when it repeats its previous primitive action, and even
then slips (stays put) with probability 0.1. Two corners hold food sources; at
any time exactly one is full. Stepping on the full one yields +99 net
(-1 step cost plus +100 food), empties it and refills the other.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from typing import NamedTuple

import numpy as np

from bossgrid import _kernels as K

EPISODE_STEPS = K.EPISODE_STEPS
FOODS_PER_EPISODE = K.FOODS_PER_EPISODE
MOVE_PROB = K.MOVE_PROB
STEP_REWARD = K.STEP_REWARD
EAT_REWARD = K.EAT_REWARD


class Action(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


CORNER_NAMES = ("NW", "NE", "SW", "SE")


class MapError(ValueError):
    """Raised when a map document fails to parse or validate."""


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    walls: np.ndarray  # bool, shape (height, width)
    doorways: tuple[tuple[int, int], ...] = ()
    text: str = field(default="", repr=False)

    @property
    def n_positions(self) -> int:
        return self.width * self.height

    @property
    def n_states(self) -> int:
        return self.n_positions * 2 * 4

    @property
    def corners(self) -> tuple[tuple[int, int], ...]:
        w, h = self.width - 1, self.height - 1
        return ((0, 0), (0, w), (h, 0), (h, w))

    def cell(self, row: int, col: int) -> int:
        return row * self.width + col

    def coords(self, cell: int) -> tuple[int, int]:
        return divmod(int(cell), self.width)

    def is_free(self, cell: int) -> bool:
        r, c = self.coords(cell)
        return 0 <= cell < self.n_positions and not self.walls[r, c]

    @property
    def free_cells(self) -> np.ndarray:
        return np.flatnonzero(~self.walls.ravel()).astype(np.int64)

    @property
    def doorway_cells(self) -> tuple[int, ...]:
        return tuple(self.cell(r, c) for r, c in self.doorways)

    @property
    def move_to(self) -> np.ndarray:
        """Destination cell of a successful move, shape (n_positions, 4)."""
        cached = self.__dict__.get("_move_to")
        if cached is None:
            cached = _move_table(self.walls)
            object.__setattr__(self, "_move_to", cached)
        return cached

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def to_text(self) -> str:
        doors = set(self.doorways)
        rows = []
        for r in range(self.height):
            rows.append("".join(
                "#" if self.walls[r, c] else ("D" if (r, c) in doors else ".")
                for c in range(self.width)))
        return "\n".join(rows) + "\n"


def _move_table(walls: np.ndarray) -> np.ndarray:
    h, w = walls.shape
    table = np.empty((h * w, 4), dtype=np.int64)
    for r in range(h):
        for c in range(w):
            p = r * w + c
            for a, (dr, dc) in enumerate(K.ACTION_DELTAS):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and not walls[rr, cc]:
                    table[p, a] = rr * w + cc
                else:
                    table[p, a] = p
    return table


def _connected(walls: np.ndarray) -> bool:
    free = list(zip(*np.nonzero(~walls)))
    if not free:
        return False
    h, w = walls.shape
    seen = {free[0]}
    todo = deque([free[0]])
    while todo:
        r, c = todo.popleft()
        for dr, dc in K.ACTION_DELTAS:
            nb = (r + int(dr), c + int(dc))
            if 0 <= nb[0] < h and 0 <= nb[1] < w and not walls[nb] and nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(free)


def parse_map(text: str) -> GridMap:
    """Parse an ASCII map ('#' wall, '.' free, 'D' free doorway)."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    if width == 0:
        raise MapError("line 1: empty row")
    walls = np.zeros((len(lines), width), dtype=bool)
    doorways = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(f"line {r + 1}: expected {width} columns, got {len(line)} (map not rectangular)")
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = True
            elif ch == "D":
                doorways.append((r, c))
            elif ch != ".":
                raise MapError(f"line {r + 1}, column {c + 1}: unknown character {ch!r}")
    gm = GridMap(width=width, height=len(lines), walls=walls, doorways=tuple(doorways))
    for name, (r, c) in zip(CORNER_NAMES, gm.corners):
        if walls[r, c]:
            raise MapError(f"line {r + 1}, column {c + 1}: corner blocked ({name})")
    if not _connected(walls):
        raise MapError("free region is disconnected")
    return GridMap(width=gm.width, height=gm.height, walls=walls,
                   doorways=gm.doorways, text=gm.to_text())


def load_map(path) -> GridMap:
    with open(path) as fh:
        return parse_map(fh.read())


def default_map() -> GridMap:
    """Four 3x3 rooms; doorways at (3,1), (3,5) and (5,3)."""
    text = resources.files("bossgrid").joinpath("maps/rooms39.map").read_text()
    return parse_map(text)


@dataclass(frozen=True)
class Task:
    id: int
    full_corner: int
    empty_corner: int

    def sources(self, gmap: GridMap) -> np.ndarray:
        """Cells of (initially full, initially empty) sources."""
        corners = gmap.corners
        return np.array([gmap.cell(*corners[self.full_corner]),
                         gmap.cell(*corners[self.empty_corner])], dtype=np.int64)


def enumerate_tasks(gmap: GridMap | None = None) -> list[Task]:
    """All 12 ordered pairs of distinct corners, ``id = 3*full + rank(empty)``."""
    tasks = []
    for full in range(4):
        others = [c for c in range(4) if c != full]
        for rank, empty in enumerate(others):
            tasks.append(Task(id=3 * full + rank, full_corner=full, empty_corner=empty))
    return tasks


class State(NamedTuple):
    position: int
    active_source: int
    last_action: int


def state_index(state: State, gmap: GridMap) -> int:
    if not gmap.is_free(state.position):
        raise ValueError(f"position {gmap.coords(state.position)} is a wall")
    return int(K.state_index(state.position, state.active_source, state.last_action))


def decode_state(index: int, gmap: GridMap) -> State:
    if not 0 <= index < gmap.n_states:
        raise ValueError(f"state index {index} out of range")
    rest, last = divmod(index, 4)
    pos, flag = divmod(rest, 2)
    return State(pos, flag, last)


@dataclass(frozen=True)
class StepOutcome:
    next_state: State
    reward: float
    ate_food: bool
    moved: bool


@dataclass
class EpisodeState:
    steps_taken: int = 0
    foods_eaten: int = 0

    @property
    def terminal(self) -> bool:
        return self.steps_taken >= EPISODE_STEPS or self.foods_eaten >= FOODS_PER_EPISODE


def reset(task: Task, start_cell: int, gmap: GridMap, rng: np.random.Generator) -> State:
    if not gmap.is_free(start_cell):
        raise ValueError(f"start cell {gmap.coords(start_cell)} is a wall")
    return State(int(start_cell), 0, int(rng.integers(0, 4)))


_NO_Q = np.zeros((1, 4))
_NO_GOALS = np.zeros(0, dtype=np.int64)
_NO_POLICY = np.zeros((0, 1, 4), dtype=np.int8)
_NO_TRACE = np.zeros((0, 6))


def step(state: State, action: int, task: Task, gmap: GridMap, rng: np.random.Generator) -> StepOutcome:
    """One primitive step. Draws from ``rng`` only when ``action`` repeats the last action."""
    out = K.episode(_NO_Q, state.position, state.active_source, state.last_action, 0, 0, 1,
                    False, 0.0, 1.0, 0.0, 1, EPISODE_STEPS, int(action), gmap.move_to,
                    task.sources(gmap), 0, _NO_GOALS, _NO_POLICY, rng, _NO_TRACE, 0)
    pos, flag, last, ret = int(out[0]), int(out[1]), int(out[2]), float(out[7])
    return StepOutcome(State(pos, flag, last), ret, ret > 0, pos != state.position)
