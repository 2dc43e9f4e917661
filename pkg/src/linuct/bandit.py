"""Joint-action encoding and the weighted ridge estimator behind LinUCT.

A joint action of ``n`` agents, each with ``d`` local actions, is encoded as
an n-hot vector of length ``n*d`` (one 1 per agent block, so the Euclidean
norm is always sqrt(n)).  Observed scalar rewards are regressed onto these
vectors with a curvature-weighted ridge objective; the estimator state is
maintained incrementally through rank-one (Sherman-Morrison) updates so
that a single observation costs O(n*d) per cached candidate action instead
of a dense matrix inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidActionError(ValueError):
    """A joint action is malformed or incompatible with the estimator."""


class NumericError(ValueError):
    """An observation or weight is not a finite number."""


@dataclass(frozen=True)
class JointAction:
    """One local action per agent, encodable as an n-hot vector.

    ``indices[i]`` is agent ``i``'s chosen action, in ``[0, n_actions)``.
    """

    n_agents: int
    n_actions: int
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.n_agents < 1 or self.n_actions < 1:
            raise InvalidActionError("need at least one agent and one action")
        if len(self.indices) != self.n_agents:
            raise InvalidActionError(
                f"expected {self.n_agents} indices, got {len(self.indices)}"
            )
        for i, j in enumerate(self.indices):
            if not 0 <= j < self.n_actions:
                raise InvalidActionError(
                    f"agent {i} index {j} out of range [0, {self.n_actions})"
                )
        object.__setattr__(self, "indices", tuple(int(j) for j in self.indices))

    @property
    def dim(self) -> int:
        return self.n_agents * self.n_actions

    @property
    def positions(self) -> tuple[int, ...]:
        """Flat coordinates of the ones in the encoding."""
        d = self.n_actions
        return tuple(i * d + j for i, j in enumerate(self.indices))

    def encode(self) -> np.ndarray:
        """Dense n-hot encoding: ones at ``i*d + indices[i]``, norm sqrt(n)."""
        v = np.zeros(self.dim)
        v[list(self.positions)] = 1.0
        return v


def encode_batch(actions, n_agents: int, n_actions: int) -> np.ndarray:
    """Stack n-hot encodings of an iterable of index tuples into (k, n*d)."""
    idx = np.asarray([a.indices if isinstance(a, JointAction) else a for a in actions])
    k = idx.shape[0]
    out = np.zeros((k, n_agents * n_actions))
    rows = np.arange(k)
    for i in range(n_agents):
        out[rows, i * n_actions + idx[:, i]] = 1.0
    return out


@dataclass(frozen=True)
class ConvexLoss:
    """Piecewise-quadratic loss described by its two curvature values.

    ``w_plus`` is the second derivative applied to underestimation residuals
    (observation at or above the current linear estimate) and ``w_minus`` to
    overestimation residuals.  The curvatures double as the per-sample
    regression weights, so they are the values exposed here directly; the
    defaults (1.0 / 0.75) put more weight on rewards that beat the estimate.
    """

    w_plus: float = 1.0
    w_minus: float = 0.75

    def __post_init__(self):
        if not (self.w_plus > 0 and self.w_minus > 0):
            raise ValueError("curvatures must be positive")
        if not (math.isfinite(self.w_plus) and math.isfinite(self.w_minus)):
            raise ValueError("curvatures must be finite")

    @property
    def mu(self) -> float:
        """Smoothness bound: the larger curvature."""
        return max(self.w_plus, self.w_minus)

    @property
    def eps(self) -> float:
        """Strong-convexity bound: the smaller curvature."""
        return min(self.w_plus, self.w_minus)

    def weight(self, residual: float) -> float:
        """Curvature at the residual's sign; ties go to the plus branch."""
        return self.w_plus if residual >= 0 else self.w_minus


class DesignState:
    """Incremental weighted ridge regression over n-hot joint actions.

    Maintains the estimate ``theta`` of the per-agent action values, the
    accumulator ``m_accum`` of weighted reward-scaled actions, and a cache of
    inverse-design products ``V^{-1} a`` for every registered candidate
    action, where ``V = lam*I + sum_s w_s a_s a_s^T``.  Each observation
    applies a rank-one correction to every cached product and to ``theta``,
    so no dense matrix is ever inverted on the hot path.

    Single-writer: one search loop owns and mutates an instance.  Scoring
    reads are safe from other threads only between updates.
    """

    def __init__(
        self,
        n_agents: int,
        n_actions: int,
        lam: float = 1e-4,
        track_dense_inverse: bool | None = None,
    ):
        if lam <= 0 or not math.isfinite(lam):
            raise ValueError(f"ridge constant must be positive, got {lam}")
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.dim = n_agents * n_actions
        self.lam = float(lam)
        self.theta = np.zeros(self.dim)
        self.m_accum = np.zeros(self.dim)
        self.trace_v = self.dim * self.lam
        self.logdet = 0.0  # ln det(V) - ln det(lam*I), kept exact via rank-one steps
        self.update_count = 0
        # candidate cache: row r of _vinv holds V^{-1} a for the r-th candidate
        self._keys: dict[tuple[int, ...], int] = {}
        self._enc = np.zeros((0, self.dim))
        self._vinv = np.zeros((0, self.dim))
        # per-update records (w, positions, V_t^{-1} a_t, denominator) allow
        # registering a new candidate later by replaying the rank-one chain
        self._history: list[tuple[float, tuple[int, ...], np.ndarray, float]] = []
        if track_dense_inverse is None:
            track_dense_inverse = self.dim <= 64
        self._dense_inv = np.eye(self.dim) / self.lam if track_dense_inverse else None

    # -- candidate registration -------------------------------------------

    def _check(self, action: JointAction) -> None:
        if action.n_agents != self.n_agents or action.n_actions != self.n_actions:
            raise InvalidActionError(
                f"action shape ({action.n_agents},{action.n_actions}) does not "
                f"match estimator shape ({self.n_agents},{self.n_actions})"
            )

    def is_registered(self, action: JointAction) -> bool:
        return action.indices in self._keys

    def register(self, action: JointAction) -> int:
        """Ensure ``V^{-1} a`` is cached for the action; return its row."""
        self._check(action)
        row = self._keys.get(action.indices)
        if row is not None:
            return row
        enc = action.encode()
        if self._dense_inv is not None:
            u = self._dense_inv @ enc
        else:
            # replay the stored rank-one chain: O(t * dim)
            u = enc / self.lam
            for w, pos, hu, denom in self._history:
                u = u - (w * u[list(pos)].sum() / denom) * hu
        row = len(self._keys)
        self._keys[action.indices] = row
        self._enc = np.vstack([self._enc, enc[None, :]])
        self._vinv = np.vstack([self._vinv, u[None, :]])
        return row

    def register_all(self, actions) -> None:
        for a in actions:
            self.register(a)

    @property
    def registered_keys(self) -> list[tuple[int, ...]]:
        return list(self._keys)

    # -- observation ------------------------------------------------------

    def update(
        self,
        action: JointAction,
        reward: float,
        weight: float | None = None,
        loss: ConvexLoss | None = None,
    ) -> None:
        """Absorb one weighted observation ``(action, reward)``.

        When ``weight`` is omitted, it is taken from ``loss`` evaluated at
        the pre-update residual ``reward - <theta, a>``.  Every cached
        candidate product, the estimate, the trace, and the running
        log-determinant are corrected in O(dim) each.
        """
        if not math.isfinite(reward):
            raise NumericError(f"reward must be finite, got {reward}")
        if weight is None:
            loss = loss or ConvexLoss()
            weight = loss.weight(reward - self.mean(action))
        if not math.isfinite(weight) or weight <= 0:
            raise NumericError(f"weight must be finite and positive, got {weight}")
        row = self.register(action)
        pos = list(action.positions)
        u = self._vinv[row].copy()
        quad = u[pos].sum()  # a^T V^{-1} a
        denom = 1.0 + weight * quad
        assert denom >= 1.0 - 1e-9, "rank-one denominator lost positive-definiteness"
        # theta_{t+1} = theta_t + w (x - <a, theta_t>) / denom * V^{-1} a
        self.theta = self.theta + (weight * (reward - self.theta[pos].sum()) / denom) * u
        enc = self._enc[row]
        self.m_accum = self.m_accum + weight * reward * enc
        # all cached products: V^{-1}c -= w (a^T V^{-1} c) / denom * V^{-1} a
        coefs = (weight / denom) * self._vinv[:, pos].sum(axis=1)
        self._vinv -= np.outer(coefs, u)
        if self._dense_inv is not None:
            du = self._dense_inv @ enc
            self._dense_inv -= (weight / (1.0 + weight * (du @ enc))) * np.outer(du, du)
        self.trace_v += weight * action.n_agents
        self.logdet += math.log(denom)
        self.update_count += 1
        self._history.append((float(weight), action.positions, u, denom))

    # -- scoring ----------------------------------------------------------

    def mean(self, action: JointAction) -> float:
        """Estimated value ``<theta, a>``."""
        self._check(action)
        return float(self.theta[list(action.positions)].sum())

    def quadform(self, action: JointAction) -> float:
        """``a^T V^{-1} a`` from the cached product (registers if needed)."""
        row = self.register(action)
        return float(self._vinv[row][list(action.positions)].sum())

    def radius(self, action: JointAction) -> float:
        return math.sqrt(max(self.quadform(action), 0.0))

    def ucb_score(self, action: JointAction, prior: float, c: float) -> float:
        """Practical selection score: mean + c * prior * trace(V) * radius."""
        if not 0.0 <= prior <= 1.0:
            raise ValueError(f"prior must be a probability, got {prior}")
        return self.mean(action) + c * prior * self.trace_v * self.radius(action)

    def theoretical_score(self, action: JointAction, beta: float) -> float:
        """Confidence-ellipsoid score: mean + beta * radius."""
        return self.mean(action) + beta * self.radius(action)

    def scores_registered(
        self, priors: np.ndarray | None = None, c: float = 0.0, beta: float | None = None
    ) -> np.ndarray:
        """Vectorized scores for all registered candidates, in row order.

        With ``beta`` set, returns the ellipsoid score; otherwise the
        practical score with per-candidate ``priors`` and coefficient ``c``.
        """
        means = self._enc @ self.theta
        radii = np.sqrt(np.clip(np.einsum("ij,ij->i", self._enc, self._vinv), 0.0, None))
        if beta is not None:
            return means + beta * radii
        if priors is None:
            priors = np.ones(len(means))
        return means + c * priors * self.trace_v * radii

    # -- diagnostics ------------------------------------------------------

    def dense_v(self) -> np.ndarray:
        """Rebuild ``V = lam*I + sum w a a^T`` from the update history."""
        v = self.lam * np.eye(self.dim)
        for w, pos, _u, _denom in self._history:
            p = list(pos)
            v[np.ix_(p, p)] += w
        return v

    def dense_inverse(self) -> np.ndarray:
        """Current ``V^{-1}``: tracked copy if enabled, else a fresh solve."""
        if self._dense_inv is not None:
            return self._dense_inv.copy()
        return np.linalg.inv(self.dense_v())

    @property
    def history(self) -> list[tuple[float, tuple[int, ...], np.ndarray, float]]:
        return self._history


@dataclass
class BetaSchedule:
    """Confidence-ellipsoid width schedule.

    ``beta_t = sqrt(2 mu * (0.5 * logdet_ratio + ln(1/delta))) + sqrt(lam) * S``
    where ``logdet_ratio = ln det(V_t) - ln det(lam I)`` is maintained by the
    estimator through the matrix determinant lemma.  Non-decreasing in t and
    never below ``sqrt(lam) * S``.
    """

    delta: float
    s_bound: float
    mu: float = 1.0
    lam: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.s_bound < 0:
            raise ValueError("norm bound must be non-negative")
        if self.mu <= 0 or self.lam <= 0:
            raise ValueError("mu and lam must be positive")

    def beta_at(self, logdet_ratio: float) -> float:
        return math.sqrt(
            2.0 * self.mu * (0.5 * logdet_ratio + math.log(1.0 / self.delta))
        ) + math.sqrt(self.lam) * self.s_bound

    def beta(self, design: DesignState) -> float:
        return self.beta_at(design.logdet)
