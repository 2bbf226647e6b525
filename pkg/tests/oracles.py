"""Reference implementations written without the package's kernels.

They re-derive dynamics from the wall grid so that agreement with the package
is evidence, not tautology.
"""

from __future__ import annotations

import numpy as np

DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))


def neighbours(walls: np.ndarray) -> np.ndarray:
    h, w = walls.shape
    out = np.empty((h * w, 4), dtype=np.int64)
    for r in range(h):
        for c in range(w):
            for a, (dr, dc) in enumerate(DELTAS):
                rr, cc = r + dr, c + dc
                ok = 0 <= rr < h and 0 <= cc < w and not walls[rr, cc]
                out[r * w + c, a] = rr * w + cc if ok else r * w + c
    return out


def finite_horizon_optimum(walls: np.ndarray, sources: tuple[int, int], horizon: int = 500,
                           foods: int = 3, move_prob: float = 0.9) -> np.ndarray:
    """Optimal expected undiscounted return V[pos, last] at episode start.

    Full state is (position, active source, last action, foods eaten, steps left),
    so the value is exact for the 500-step, 3-food episode.
    """
    nb = neighbours(walls)
    n = walls.size
    # v[pos, flag, last, eaten] with `steps left` implicit in the loop
    v = np.zeros((n, 2, 4, foods))
    for _ in range(horizon):
        new = np.full_like(v, -np.inf)
        for p in range(n):
            if walls.flat[p]:
                continue
            for flag in range(2):
                for eaten in range(foods):
                    for last in range(4):
                        for a in range(4):
                            outcomes = [(move_prob, nb[p, a]), (1 - move_prob, p)] if a == last else [(1.0, p)]
                            q = 0.0
                            for prob, p2 in outcomes:
                                if p2 == sources[flag]:
                                    cont = 0.0 if eaten + 1 == foods else v[p2, 1 - flag, a, eaten + 1]
                                    q += prob * (99.0 + cont)
                                else:
                                    q += prob * (-1.0 + v[p2, flag, a, eaten])
                            new[p, flag, last, eaten] = max(new[p, flag, last, eaten], q)
        v = new
    return v[:, 0, :, 0]


def plain_q_learning(walls: np.ndarray, sources: tuple[int, int], budget: int, rng: np.random.Generator,
                     alpha: float = 0.25, gamma: float = 0.99, eps: float = 0.1,
                     horizon: int = 500, foods: int = 3, move_prob: float = 0.9):
    """Textbook one-step Q-learning over the 4 primitive actions.

    Consumes ``rng`` in the order: start cell, initial last action, then per
    step the exploration coin, the exploratory action, and the slip coin (only
    when the action repeats the last one). Returns (Q, list of transitions).
    """
    nb = neighbours(walls)
    free = np.flatnonzero(~walls.ravel())
    q = np.zeros((walls.size * 8, 4))
    log = []
    used = 0
    while used < budget:
        pos = int(free[rng.integers(0, len(free))])
        last = int(rng.integers(0, 4))
        flag, eaten, t = 0, 0, 0
        while used < budget and t < horizon:
            s = (pos * 2 + flag) * 4 + last
            if rng.random() < eps:
                a = int(rng.integers(0, 4))
            else:
                a = int(np.argmax(q[s]))
            p2 = pos
            if a == last and rng.random() < move_prob:
                p2 = int(nb[pos, a])
            r = -1.0
            done = False
            flag2 = flag
            if p2 == sources[flag]:
                r = 99.0
                flag2 = 1 - flag
                eaten += 1
                done = eaten == foods
            s2 = (p2 * 2 + flag2) * 4 + a
            target = r if done else r + gamma * q[s2].max()
            q[s, a] += alpha * (target - q[s, a])
            log.append((s, a, r, s2))
            pos, flag, last = p2, flag2, a
            used += 1
            t += 1
            if done:
                break
    return q, log


def fixed_policy_return(walls: np.ndarray, sources: tuple[int, int], policy: np.ndarray, horizon: int = 500,
                        foods: int = 3, move_prob: float = 0.9) -> np.ndarray:
    """Exact expected undiscounted return V[pos, last] of a stationary primitive policy.

    ``policy[pos, flag, last]`` is the action taken; the policy ignores the food
    count and the clock, as a greedy Q policy does.
    """
    nb = neighbours(walls)
    n = walls.size
    v = np.zeros((n, 2, 4, foods))
    for _ in range(horizon):
        new = np.zeros_like(v)
        for p in range(n):
            if walls.flat[p]:
                continue
            for flag in range(2):
                for last in range(4):
                    a = int(policy[p, flag, last])
                    outcomes = [(move_prob, nb[p, a]), (1 - move_prob, p)] if a == last else [(1.0, p)]
                    for eaten in range(foods):
                        q = 0.0
                        for prob, p2 in outcomes:
                            if p2 == sources[flag]:
                                cont = 0.0 if eaten + 1 == foods else v[p2, 1 - flag, a, eaten + 1]
                                q += prob * (99.0 + cont)
                            else:
                                q += prob * (-1.0 + v[p2, flag, a, eaten])
                        new[p, flag, last, eaten] = q
        v = new
    return v[:, 0, :, 0]
