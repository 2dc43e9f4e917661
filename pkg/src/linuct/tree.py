"""Monte Carlo tree search with linear-bandit selection.

Each node owns a :class:`~linuct.bandit.DesignState` over the joint action
space.  While a node has fewer than ``chi`` children, selection delegates
to dynamic node generation: a greedy maximization of the bandit score over
the entire joint action space, adding the winner as a new child if it is
unseen.  At capacity the child set freezes and selection picks the best
existing child.  Back-propagation walks the path leaf-to-root, updating
visit counts, exact return sums, and the node estimators with the
curvature weight chosen by comparing the observed reward to the child's
running value.

A planning model supplies the environment dynamics:

    model.n_agents, model.n_actions
    model.initial_state() -> state
    model.step(state, action, rng) -> (next_state, reward, done)
    model.leaf_value(state) -> float        (optional, defaults to 0)

One tree is owned by one simulation loop; run independent trees in
parallel for independent seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from linuct.bandit import ConvexLoss, DesignState, JointAction
from linuct.selection import SelectionObjective, greedy_select


@dataclass
class SearchConfig:
    """Knobs for one search tree.

    ``value_quantile`` and ``decay_lambda`` are accepted for forward
    compatibility with learned-value reanalysis and are currently unused.
    """

    num_simulations: int = 50
    chi: int = 3  # maximum children per node
    zeta: float = 0.6  # dynamic generation ratio; kappa = floor(zeta * chi)
    gamma: float = 0.99
    lam: float = 1e-4
    f_plus: float = 1.0
    f_minus: float = 0.75
    c1: float = 1.25
    c2: float = 19652.0
    selector: str = "linuct"  # "linuct" or "puct"
    shift_nonneg: bool = True
    prior_table: np.ndarray | None = None  # (n, d) per-agent prior, None = uniform
    value_quantile: float = 0.75
    decay_lambda: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.chi < 1:
            raise ValueError(f"chi must be at least 1, got {self.chi}")
        if self.selector not in ("linuct", "puct"):
            raise ValueError(f"unknown selector {self.selector!r}")

    @property
    def kappa(self) -> int:
        return max(1, math.floor(self.zeta * self.chi))

    def exploration_coefficient(self, total_visits: int) -> float:
        return self.c1 + math.log((total_visits + self.c2 + 1.0) / self.c2)

    def loss(self) -> ConvexLoss:
        return ConvexLoss(w_plus=self.f_plus, w_minus=self.f_minus)


@dataclass
class ChildStat:
    """Edge statistics for one child action."""

    action: JointAction
    prior: float
    n: int = 0
    g_sum: float = 0.0  # exact sum of backed-up returns, so q * n == g_sum
    node: "SearchNode | None" = None

    @property
    def q(self) -> float:
        return self.g_sum / self.n if self.n > 0 else 0.0


class SearchNode:
    """One tree node: child map plus the node-local bandit estimator."""

    def __init__(self, n_agents: int, n_actions: int, config: SearchConfig, depth: int = 0):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.depth = depth
        self.chi = config.chi
        self.children: dict[tuple[int, ...], ChildStat] = {}
        if config.selector == "linuct":
            self.design = DesignState(
                n_agents, n_actions, lam=config.lam, track_dense_inverse=True
            )
        else:
            self.design = None
        self._config = config

    @property
    def total_visits(self) -> int:
        return sum(stat.n for stat in self.children.values())

    @property
    def expanded(self) -> bool:
        return bool(self.children)

    def prior_of(self, action: JointAction) -> float:
        table = self._config.prior_table
        if table is None:
            return float(self.n_actions) ** (-self.n_agents)
        return float(np.prod([table[i, j] for i, j in enumerate(action.indices)]))

    def add_child(self, action: JointAction) -> ChildStat:
        if action.indices in self.children:
            return self.children[action.indices]
        if len(self.children) >= self.chi:
            raise RuntimeError("node is at child capacity")
        stat = ChildStat(action=action, prior=self.prior_of(action))
        self.children[action.indices] = stat
        if self.design is not None:
            self.design.register(action)
        return stat


def sample_distinct_actions(n_agents, n_actions, k, prior_table, rng):
    """Sample k distinct joint actions from the per-agent product prior."""
    total = n_actions**n_agents
    k = min(k, total)
    if total <= 4096:
        # exact sampling without replacement over the enumerated space
        probs = np.ones(total) / total
        if prior_table is not None:
            grids = np.meshgrid(*[prior_table[i] for i in range(n_agents)], indexing="ij")
            probs = np.ones(total)
            for g in grids:
                probs *= g.ravel()
            probs = probs / probs.sum()
        picks = rng.choice(total, size=k, replace=False, p=probs)
        out = []
        for flat in picks:
            idx, rem = [], int(flat)
            for _ in range(n_agents):
                idx.append(rem % n_actions)
                rem //= n_actions
            out.append(JointAction(n_agents, n_actions, tuple(reversed(idx))))
        return out
    seen: dict[tuple[int, ...], JointAction] = {}
    attempts = 0
    while len(seen) < k and attempts < 1000 * k:
        attempts += 1
        if prior_table is None:
            idx = tuple(int(j) for j in rng.integers(0, n_actions, n_agents))
        else:
            idx = tuple(
                int(rng.choice(n_actions, p=prior_table[i] / prior_table[i].sum()))
                for i in range(n_agents)
            )
        seen.setdefault(idx, JointAction(n_agents, n_actions, idx))
    return list(seen.values())


def expand(node: SearchNode, config: SearchConfig, rng: np.random.Generator) -> list[JointAction]:
    """Populate a fresh node with sampled children.

    The bandit selector seeds ``kappa = floor(zeta * chi)`` children and
    leaves the rest of the capacity to dynamic node generation; the
    visit-count selector has no generation step, so it samples up to
    capacity immediately.
    """
    if node.expanded:
        return []
    if config.prior_table is None:
        pass
    elif np.any(config.prior_table.sum(axis=1) <= 0):
        raise ValueError("prior table has a non-normalizable agent row")
    k = config.chi if config.selector == "puct" else config.kappa
    sampled = sample_distinct_actions(
        node.n_agents, node.n_actions, k, config.prior_table, rng
    )
    for a in sampled:
        node.add_child(a)
    return sampled


def dynamic_node_generation(node: SearchNode, config: SearchConfig) -> JointAction:
    """Greedy argmax of the bandit score over the full joint action space.

    If the winning action has no child yet, it is added to the tree.
    """
    objective = SelectionObjective(
        node.design,
        c=config.exploration_coefficient(node.total_visits),
        prior=config.prior_table,
    )
    action = greedy_select(objective, shift_nonneg=config.shift_nonneg)
    if action.indices not in node.children:
        node.add_child(action)
    return action


def select_action(node: SearchNode, config: SearchConfig) -> JointAction:
    """One selection step at an expanded node.

    Under capacity the bandit selector delegates to dynamic node
    generation; at capacity (or with the visit-count selector) the best
    existing child wins, ties broken by lexicographic action order.
    """
    if not node.expanded:
        raise RuntimeError("select_action on a node that was never expanded")
    if config.selector == "linuct":
        if len(node.children) < node.chi:
            return dynamic_node_generation(node, config)
        c = config.exploration_coefficient(node.total_visits)
        keys = list(node.children)
        priors = np.array([node.children[k].prior for k in keys])
        scores = node.design.scores_registered(priors=priors, c=c)
        best = max(range(len(keys)), key=lambda i: (scores[i], [-j for j in keys[i]]))
        return node.children[keys[best]].action
    # visit-count rule
    c = config.exploration_coefficient(node.total_visits)
    sqrt_total = math.sqrt(node.total_visits)
    best_key, best_score = None, -math.inf
    for key in sorted(node.children):
        stat = node.children[key]
        score = stat.q + c * stat.prior * sqrt_total / (stat.n + 1.0)
        if score > best_score:
            best_key, best_score = key, score
    return node.children[best_key].action


def backpropagate(path, leaf_value: float, config: SearchConfig) -> float:
    """Walk the path leaf-to-root, updating Q, N, and the node estimators.

    ``path`` is a root-to-leaf list of (node, action, observed_reward).
    The curvature weight rewards observations above the child's current
    running value with the larger curvature.  Returns the root return G.
    """
    loss = config.loss()
    g = leaf_value
    for node, action, x in reversed(path):
        g = x + config.gamma * g
        stat = node.children[action.indices]
        w = loss.w_minus if x <= stat.q else loss.w_plus
        stat.g_sum += g
        stat.n += 1
        if node.design is not None:
            node.design.update(action, x, weight=w)
    return g


@dataclass
class SearchStats:
    """Per-simulation records plus the final root child table."""

    records: list[dict] = field(default_factory=list)
    root_children: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        """Line-delimited record stream (one JSON object per simulation)."""
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + ("\n" if lines else "")

    @staticmethod
    def parse_jsonl(text: str) -> list[dict]:
        return [json.loads(line) for line in text.splitlines() if line.strip()]


@dataclass
class PlanResult:
    action: JointAction
    stats: SearchStats
    root: SearchNode


def plan(model, config: SearchConfig, rng: np.random.Generator, state=None) -> PlanResult:
    """Run a full search from the model's initial state.

    Each simulation selects root-to-leaf, queries the model for rewards,
    expands the reached leaf, and back-propagates.  The returned root
    action maximizes visit count (ties: higher value, then lexicographic
    order).  Deterministic given the generator state and config.
    """
    root_state = model.initial_state() if state is None else state
    root = SearchNode(model.n_agents, model.n_actions, config, depth=0)
    expand(root, config, rng)
    stats = SearchStats()
    leaf_value_fn = getattr(model, "leaf_value", lambda s: 0.0)
    for sim in range(config.num_simulations):
        node, node_state = root, root_state
        path = []
        leaf_v = 0.0
        while True:
            action = select_action(node, config)
            next_state, reward, done = model.step(node_state, action, rng)
            path.append((node, action, reward))
            if done:
                leaf_v = 0.0
                break
            stat = node.children[action.indices]
            if stat.node is None:
                stat.node = SearchNode(
                    model.n_agents, model.n_actions, config, depth=node.depth + 1
                )
                expand(stat.node, config, rng)
                leaf_v = float(leaf_value_fn(next_state))
                break
            node, node_state = stat.node, next_state
        g_root = backpropagate(path, leaf_v, config)
        stats.records.append(
            {
                "sim": sim,
                "action": list(path[0][1].indices),
                "reward": path[0][2],
                "return": g_root,
                "depth": len(path),
            }
        )
    best_key = max(
        sorted(root.children),
        key=lambda k: (root.children[k].n, root.children[k].q, [-j for j in k]),
    )
    stats.root_children = [
        {
            "action": list(k),
            "visits": root.children[k].n,
            "value": root.children[k].q,
            "prior": root.children[k].prior,
        }
        for k in sorted(root.children)
    ]
    return PlanResult(action=root.children[best_key].action, stats=stats, root=root)
