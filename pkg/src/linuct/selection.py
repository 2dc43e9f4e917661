"""Joint-action selection: greedy maximization and brute-force oracle.

Maximizing the selection score over all ``d^n`` joint actions is treated as
monotone submodular maximization under a partition matroid: the greedy
builder picks one coordinate (agent, action) at a time, each step taking
the extension with the largest marginal gain of the set function

    Psi(S) = sum_{v in S} <v, theta>  +  rho * sum_{v in S} |v|_{V(S)^{-1}}

with ``V(S) = V_base + sum_{v in S} v v^T``.  For node selection the base
matrix is the node's accumulated design matrix, ``theta`` is shifted to be
non-negative (rank-preserving across complete actions), and the radius
scale ``rho = c * trace(V) / d^n`` mirrors the magnitude of the node-level
exploration term under a uniform prior.  The returned complete action is
re-scored with the exact node-level objective, so greedy construction and
final scoring stay consistent.

Per-coordinate prior variation is deliberately not folded into the greedy
surrogate; non-uniform priors enter only through the final re-scoring.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from linuct.bandit import DesignState, JointAction, encode_batch


class InvalidPartitionError(ValueError):
    """A candidate block is empty or malformed."""


class SelectionSizeError(ValueError):
    """The joint action space exceeds the enumeration cap."""


PriorLike = Callable[[JointAction], float] | np.ndarray | None


def _normalize_blocks(n_agents, n_actions, blocks):
    if blocks is None:
        return [tuple(range(n_actions))] * n_agents
    if len(blocks) != n_agents:
        raise InvalidPartitionError(f"expected {n_agents} blocks, got {len(blocks)}")
    out = []
    for i, blk in enumerate(blocks):
        blk = tuple(int(j) for j in blk)
        if not blk:
            raise InvalidPartitionError(f"block {i} is empty")
        if any(j < 0 or j >= n_actions for j in blk):
            raise InvalidPartitionError(f"block {i} has out-of-range candidates")
        out.append(blk)
    return out


def enumerate_joint_actions(n_agents, n_actions, blocks=None):
    """Yield every joint action in lexicographic index order."""
    blocks = _normalize_blocks(n_agents, n_actions, blocks)
    for combo in itertools.product(*blocks):
        yield JointAction(n_agents, n_actions, combo)


class SelectionObjective:
    """Node-level selection score over joint actions.

    ``score(a) = <theta, a> + c * P(a) * trace(V) * sqrt(a^T V^{-1} a)``.
    ``prior`` may be None (uniform product prior), an (n, d) table of
    per-agent action probabilities, or a callable on complete actions.
    """

    def __init__(self, design: DesignState, c: float = 1.0, prior: PriorLike = None):
        self.design = design
        self.c = float(c)
        if isinstance(prior, np.ndarray):
            if prior.shape != (design.n_agents, design.n_actions):
                raise ValueError(
                    f"prior table shape {prior.shape} does not match "
                    f"({design.n_agents}, {design.n_actions})"
                )
            if np.any(prior < 0):
                raise ValueError("prior table must be non-negative")
        self.prior = prior

    def prior_of(self, action: JointAction) -> float:
        if self.prior is None:
            return float(self.design.n_actions) ** (-self.design.n_agents)
        if isinstance(self.prior, np.ndarray):
            return float(np.prod([self.prior[i, j] for i, j in enumerate(action.indices)]))
        return float(self.prior(action))

    def score(self, action: JointAction) -> float:
        return self.design.ucb_score(action, self.prior_of(action), self.c)


def set_function_value(vectors, theta, v_base, radius_scale: float = 1.0) -> float:
    """Evaluate ``Psi(S)`` for an explicit set of vectors.

    ``v_base`` is either the full base matrix or a scalar ridge constant
    (meaning ``v_base * I``).  Direct dense implementation, meant for small
    dimensions and for validating the incremental greedy path.
    """
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    if not vectors:
        return 0.0
    dim = vectors[0].size
    v = v_base * np.eye(dim) if np.isscalar(v_base) else np.array(v_base, dtype=float)
    for u in vectors:
        v += np.outer(u, u)
    sol = np.linalg.solve(v, np.stack(vectors, axis=1))
    linear = sum(float(u @ theta) for u in vectors)
    radii = sum(
        math.sqrt(max(float(u @ sol[:, k]), 0.0)) for k, u in enumerate(vectors)
    )
    return linear + radius_scale * radii


def marginal_gain(vectors, candidate, theta, v_base, radius_scale: float = 1.0) -> float:
    """``Psi(S + candidate) - Psi(S)`` via the dense set-function evaluator."""
    base = set_function_value(vectors, theta, v_base, radius_scale)
    extended = set_function_value(list(vectors) + [candidate], theta, v_base, radius_scale)
    return extended - base


def greedy_select(
    objective: SelectionObjective,
    blocks: Sequence[Sequence[int]] | None = None,
    shift_nonneg: bool = True,
) -> JointAction:
    """Build a complete joint action by partition-matroid greedy.

    Each step extends the partial selection with the coordinate of largest
    marginal gain among all unfilled agent blocks; ties break
    lexicographically by (agent, action).  The result satisfies the usual
    greedy approximation guarantee for the monotone submodular surrogate.
    """
    design = objective.design
    n, d = design.n_agents, design.n_actions
    blocks = _normalize_blocks(n, d, blocks)
    theta = design.theta
    if shift_nonneg:
        theta = theta - theta.min()
    rho = objective.c * design.trace_v * float(d) ** (-n)
    w = design.dense_inverse()

    chosen: dict[int, int] = {}
    selected_pos: list[int] = []
    for _ in range(n):
        best_gain, best = -math.inf, None
        for i in range(n):
            if i in chosen:
                continue
            for j in blocks[i]:
                p = i * d + j
                wee = w[p, p]
                # radius of the new coordinate once it joins the design
                r_new = math.sqrt(max(wee / (1.0 + wee), 0.0))
                # shrinkage of the radii of already-selected coordinates
                loss = 0.0
                for q in selected_pos:
                    wv, wve = w[q, q], w[q, p]
                    shrunk = max(wv - wve * wve / (1.0 + wee), 0.0)
                    loss += math.sqrt(max(wv, 0.0)) - math.sqrt(shrunk)
                gain = theta[p] + rho * (r_new - loss)
                if gain > best_gain:
                    best_gain, best = gain, (i, j, p)
        i, j, p = best
        chosen[i] = j
        u = w[:, p].copy()
        w -= np.outer(u, u) / (1.0 + w[p, p])
        selected_pos.append(p)
    return JointAction(n, d, tuple(chosen[i] for i in range(n)))


def brute_force_select(
    objective: SelectionObjective,
    blocks: Sequence[Sequence[int]] | None = None,
    cap: int = 100_000,
) -> tuple[JointAction, float]:
    """Exact argmax of the node-level score by enumeration.

    Deterministic tie-break: the lexicographically smallest action among
    maximizers.  Refuses spaces larger than ``cap``.
    """
    design = objective.design
    n, d = design.n_agents, design.n_actions
    blocks = _normalize_blocks(n, d, blocks)
    size = 1
    for blk in blocks:
        size *= len(blk)
    if size > cap:
        raise SelectionSizeError(f"joint action space {size} exceeds cap {cap}")
    actions = list(enumerate_joint_actions(n, d, blocks))
    enc = encode_batch(actions, n, d)
    vinv = design.dense_inverse()
    means = enc @ design.theta
    radii = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", enc, vinv, enc), 0.0, None))
    priors = np.array([objective.prior_of(a) for a in actions])
    scores = means + objective.c * priors * design.trace_v * radii
    best = int(np.argmax(scores))  # first maximizer = lexicographically smallest
    return actions[best], float(scores[best])
