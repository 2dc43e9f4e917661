"""Comparison selectors: visit-count tree scores and flat joint-arm bandits.

The tree baseline reuses the search engine in :mod:`linuct.tree` with
``selector="puct"`` (sampled expansion, no node generation, no estimator).
This module adds the raw scoring rule plus two flat selectors over the
enumerated joint action space: UCB1 (the ``d^n``-armed control whose regret
scales with the number of arms) and uniform random (a sanity floor).
"""

from __future__ import annotations

import math

import numpy as np

from linuct.bandit import JointAction
from linuct.selection import enumerate_joint_actions

SELECTOR_KINDS = ("linuct", "puct", "flat_ucb", "random")


def puct_score(q: float, prior: float, n_action: int, n_total: int, c: float) -> float:
    """Visit-count selection score: q + c * prior * sqrt(N_total) / (N_a + 1)."""
    return q + c * prior * math.sqrt(n_total) / (n_action + 1.0)


class FlatUCB:
    """UCB1 over all d^n joint actions treated as independent arms.

    Unpulled arms score infinity and are taken first (in lexicographic
    order); afterwards an arm scores mean + sqrt(2 ln t / pulls).
    """

    def __init__(self, n_agents: int, n_actions: int):
        self.actions = list(enumerate_joint_actions(n_agents, n_actions))
        k = len(self.actions)
        self.pulls = np.zeros(k, dtype=np.int64)
        self.reward_sum = np.zeros(k)
        self.t = 0

    def score(self, arm: int) -> float:
        if self.pulls[arm] == 0:
            return math.inf
        return self.reward_sum[arm] / self.pulls[arm] + math.sqrt(
            2.0 * math.log(max(self.t, 1)) / self.pulls[arm]
        )

    def select(self) -> int:
        self.t += 1
        if np.any(self.pulls == 0):
            return int(np.argmin(self.pulls > 0))  # first unpulled, lex order
        means = self.reward_sum / self.pulls
        ucb = means + np.sqrt(2.0 * math.log(self.t) / self.pulls)
        return int(np.argmax(ucb))

    def update(self, arm: int, reward: float) -> None:
        self.pulls[arm] += 1
        self.reward_sum[arm] += reward

    def action(self, arm: int) -> JointAction:
        return self.actions[arm]


class RandomSelector:
    """Uniform random joint actions; the do-nothing baseline."""

    def __init__(self, n_agents: int, n_actions: int, rng: np.random.Generator):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.rng = rng

    def select(self) -> JointAction:
        idx = tuple(int(j) for j in self.rng.integers(0, self.n_actions, self.n_agents))
        return JointAction(self.n_agents, self.n_actions, idx)
