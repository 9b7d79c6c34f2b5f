"""Hallway and McCallum gridworlds with successor-state wall features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import TabularMdp
from ..policies import GibbsPolicy

ACTIONS = ("up", "down", "left", "right")
_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


@dataclass(frozen=True)
class GridworldSpec:
    """Grid with cells numbered row-major from 1.

    ``walls`` holds extra interior walls as frozensets of two adjacent cell
    numbers; the outer boundary is always walled.
    """

    width: int
    height: int
    walls: frozenset
    starts: tuple
    goal: int
    goal_reward: float = 1.0
    discount: float = 0.95

    @property
    def num_states(self):
        return self.width * self.height

    def cell(self, state):
        return divmod(state - 1, self.width)

    def neighbour(self, state, action):
        """Cell reached by ``action``, or ``None`` if a wall blocks it."""
        r, c = self.cell(state)
        dr, dc = _MOVES[action]
        r2, c2 = r + dr, c + dc
        if not (0 <= r2 < self.height and 0 <= c2 < self.width):
            return None
        other = r2 * self.width + c2 + 1
        if frozenset((state, other)) in self.walls:
            return None
        return other

    def successor(self, state, action):
        nxt = self.neighbour(state, action)
        return state if nxt is None else nxt

    def wall_features(self, state):
        return np.array([float(self.neighbour(state, a) is None) for a in ACTIONS])


def gridworld_mdp(spec):
    """Goal pays ``goal_reward`` for any action and resets to the start states."""
    S, A = spec.num_states, len(ACTIONS)
    start = np.zeros(S)
    start[[s - 1 for s in spec.starts]] = 1.0 / len(spec.starts)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    feats = np.zeros((S, A, 4))
    for s in range(1, S + 1):
        for ai, a in enumerate(ACTIONS):
            if s == spec.goal:
                P[s - 1, ai] = start
                R[s - 1, ai] = spec.goal_reward
                feats[s - 1, ai] = spec.wall_features(s)
            else:
                nxt = spec.successor(s, a)
                P[s - 1, ai, nxt - 1] = 1.0
                feats[s - 1, ai] = spec.wall_features(nxt)
    return TabularMdp(P, R, start, spec.discount), feats


def hallway_spec(discount=0.95):
    return GridworldSpec(5, 1, frozenset(), (1,), 5, discount=discount)


def mccallum_spec(discount=0.95):
    # vertical walls between the columns of the middle and bottom rows
    walls = frozenset(frozenset(p) for p in [(4, 5), (5, 6), (7, 8), (8, 9)])
    return GridworldSpec(3, 3, walls, (7, 9), 8, discount=discount)


def build_hallway(discount=0.95):
    """``(mdp, policy)`` for the 5-cell corridor; cells 2-4 share features."""
    mdp, feats = gridworld_mdp(hallway_spec(discount))
    return mdp, GibbsPolicy(feats)


def build_mccallum(discount=0.95):
    """``(mdp, policy)`` for the 3x3 grid; cells 4-6 share features."""
    mdp, feats = gridworld_mdp(mccallum_spec(discount))
    return mdp, GibbsPolicy(feats)


def optimal_tabular_actions(spec):
    """Greedy action names per non-goal state, from value iteration on the tabular MDP."""
    mdp, _ = gridworld_mdp(spec)
    V = np.zeros(mdp.num_states)
    for _ in range(5000):
        Q = mdp.reward + mdp.discount * mdp.transition @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < 1e-13:
            break
        V = V_new
    Q = mdp.reward + mdp.discount * mdp.transition @ V
    out = {}
    for s in range(1, spec.num_states + 1):
        if s == spec.goal:
            continue
        best = np.flatnonzero(Q[s - 1] >= Q[s - 1].max() - 1e-12)
        out[s] = tuple(ACTIONS[b] for b in best)
    return out
