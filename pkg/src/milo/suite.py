"""Named tabular MDPs used by the experiments and tests.

* ``chain2``: two states, actions ``go`` (0) and ``stay`` (1).
* ``cliff_chain``: a ring the expert circles, with rarely visited ledges
  beside it and an absorbing cliff below.  One wrong action on an unvisited
  ledge loses every remaining reward, which is the compounding-error regime.
* ``two_room``: a slippery gridworld; the goal lies in the second room, which
  a random policy rarely reaches.
* ``random``: a seeded sparse Dirichlet instance.
"""

from __future__ import annotations

import numpy as np

from .mdp import MdpSpec, random_mdp

SUITE = ("cliff_chain", "two_room", "random")
GO, STAY = 0, 1


def chain2(gamma: float = 0.9, reward=(0.0, 1.0)) -> MdpSpec:
    """``go`` moves 0 -> 1 and stays at 1; ``stay`` self-loops.  ``r(s, .) = reward[s]``."""
    T = np.zeros((2, 2, 2))
    T[0, GO, 1] = 1.0
    T[1, GO, 1] = 1.0
    T[0, STAY, 0] = 1.0
    T[1, STAY, 1] = 1.0
    r = np.repeat(np.asarray(reward, dtype=np.float64)[:, None], 2, axis=1)
    return MdpSpec(T, r, np.array([1.0, 0.0]), gamma, r_max=max(1.0, float(r.max())))


def cliff_chain(n: int = 10, gamma: float = 0.95, slip: float = 0.01, sloppy_cost: float = 0.1) -> MdpSpec:
    """Ring states ``0..n-1``, ledge states ``n..2n-1`` (ledge ``i`` beside
    ring ``i``) and the cliff ``2n``.

    Ring actions: 0 advance (reward 1), 1 sloppy advance (same move, reward
    ``1 - sloppy_cost``), 2 step off to the ledge (reward 0).  Any ring
    action slips to the ledge with probability ``slip``.  Ledge actions:
    0 climb to ring ``i+1`` (reward 1), 1 sloppy climb (reward
    ``1 - sloppy_cost``), 2 jump to the cliff (reward 0).  The cliff is
    absorbing with reward 0.  ``d0`` is uniform on the ring.
    """
    S, A = 2 * n + 1, 3
    cliff = 2 * n
    T = np.zeros((S, A, S))
    r = np.zeros((S, A))
    for i in range(n):
        nxt, ledge = (i + 1) % n, n + i
        for a in (0, 1):
            T[i, a, nxt] = 1.0 - slip
            T[i, a, ledge] = slip
            T[ledge, a, nxt] = 1.0
        T[i, 2, ledge] = 1.0
        T[ledge, 2, cliff] = 1.0
        r[i] = r[ledge] = (1.0, 1.0 - sloppy_cost, 0.0)
    T[cliff, :, cliff] = 1.0
    d0 = np.zeros(S)
    d0[:n] = 1.0 / n
    return MdpSpec(T, r, d0, gamma, r_max=1.0)


def two_room(width: int = 4, height: int = 4, gamma: float = 0.95, slip: float = 0.1) -> MdpSpec:
    """Two ``width x height`` rooms joined by a one-cell door in the middle row.

    Actions are up/down/left/right; with probability ``slip`` a uniformly
    random other direction is taken.  Walls keep the agent in place.  The
    goal (far corner of room 2) is absorbing with reward 1 on every action.
    ``d0`` is uniform over room 1.
    """
    cells = {}
    for y in range(height):
        for x in range(width):
            cells[(x, y)] = len(cells)
    door = (width, height // 2)
    cells[door] = len(cells)
    for y in range(height):
        for x in range(width + 1, 2 * width + 1):
            cells[(x, y)] = len(cells)
    S, A = len(cells), 4
    moves = ((0, -1), (0, 1), (-1, 0), (1, 0))
    goal = cells[(2 * width, height - 1)]

    def target(c, m):
        nc = (c[0] + m[0], c[1] + m[1])
        return cells.get(nc, cells[c])

    T = np.zeros((S, A, S))
    for c, s in cells.items():
        for a in range(A):
            for b, m in enumerate(moves):
                p = 1.0 - slip if a == b else slip / (A - 1)
                T[s, a, target(c, m)] += p
    T[goal] = 0.0
    T[goal, :, goal] = 1.0
    r = np.zeros((S, A))
    r[goal] = 1.0
    d0 = np.zeros(S)
    d0[: width * height] = 1.0 / (width * height)
    return MdpSpec(T, r, d0, gamma, r_max=1.0)


def random_instance(seed: int = 7, n_states: int = 12, n_actions: int = 3, gamma: float = 0.95,
                    branching: int | None = 2) -> MdpSpec:
    return random_mdp(n_states, n_actions, gamma, np.random.default_rng(seed), branching=branching)


BUILDERS = {"chain2": chain2, "cliff_chain": cliff_chain, "two_room": two_room, "random": random_instance}


def load(name: str, **params) -> MdpSpec:
    """Build a named MDP; ``params`` are forwarded to its builder."""
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown MDP {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**params)
