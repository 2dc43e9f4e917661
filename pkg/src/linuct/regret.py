"""Regret experiments: bandit decision loops, bound evaluation, coverage.

The flat decision loop plays the matrix game as a contextual linear bandit:
every joint action is an arm, the selector picks one per step, and realized
regret accumulates the gap between the oracle arm's observed reward and the
chosen arm's observed reward (each with its own noise draw).

Common random numbers: noise is drawn from a stream keyed by (seed, step)
only, never by the chosen arm, so paired selectors under the same seed face
identical noise realizations and their regret difference reflects decision
quality alone.  Selector-internal randomness uses a separate stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from linuct.bandit import BetaSchedule, ConvexLoss, DesignState, encode_batch
from linuct.baselines import FlatUCB, RandomSelector
from linuct.matgame import MatGamePlanningModel, MatGameSpec, linear_reward, oracle_optimum, theta_star
from linuct.selection import enumerate_joint_actions
from linuct.tree import SearchConfig, plan

NOISE_KINDS = ("unit", "matgame", "none")


def regret_bound_value(
    t: int, n_agents: int, n_actions: int, mu: float, lam: float, beta_t: float
) -> float:
    """High-probability cumulative regret bound after t steps.

    ``sqrt(8 mu nd t beta_t ln((nd lam + mu n t) / (nd lam)))`` with
    ``nd = n_agents * n_actions``; grows as sqrt(t) times a log factor.
    """
    nd = n_agents * n_actions
    return math.sqrt(
        8.0 * mu * nd * t * beta_t * math.log((nd * lam + mu * n_agents * t) / (nd * lam))
    )


@dataclass
class RegretTrace:
    """Per-step record arrays for one bandit or planning run."""

    selector: str
    seed: int
    actions: np.ndarray  # (T, n) chosen indices
    rewards: np.ndarray  # (T,) observed rewards
    regrets: np.ndarray  # (T,) realized per-step regret
    betas: np.ndarray | None = None  # (T,) ellipsoid widths, bandit rule only
    bounds: np.ndarray | None = None  # (T,) theoretical bound values

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.regrets)

    @property
    def cum_reward(self) -> np.ndarray:
        return np.cumsum(self.rewards)


def _noise_pair(kind: str, spec: MatGameSpec, rng: np.random.Generator) -> tuple[float, float]:
    """(chosen-arm noise, oracle-arm noise) for one step; fixed draw count."""
    if kind == "none":
        return 0.0, 0.0
    if kind == "unit":
        eta = rng.normal(size=2)
        return float(eta[0]), float(eta[1])
    u = rng.normal(0.0, spec.gauss_sigma, size=2)
    v = rng.uniform(-spec.uniform_halfwidth, spec.uniform_halfwidth, size=2)
    s = spec.noise_scale
    return float(s * (u[0] + v[0])), float(s * (u[1] + v[1]))


def run_bandit(
    spec: MatGameSpec,
    selector: str,
    horizon: int,
    seed: int,
    delta: float = 0.01,
    lam: float = 1e-4,
    loss: ConvexLoss | None = None,
    noise: str = "unit",
    s_bound: float | None = None,
) -> RegretTrace:
    """Flat decision loop over all joint actions for one selector and seed.

    ``selector`` is one of ``linuct`` (ellipsoid score with the adaptive
    width schedule), ``flat_ucb``, or ``random``.  ``s_bound`` defaults to
    the true parameter norm of the game's linear payoff.
    """
    if noise not in NOISE_KINDS:
        raise ValueError(f"noise must be one of {NOISE_KINDS}, got {noise!r}")
    loss = loss or ConvexLoss()
    rng_noise = np.random.default_rng([seed, 0])
    rng_sel = np.random.default_rng([seed, 1])
    ts = theta_star(spec)
    opt_action, opt_value = oracle_optimum(spec)
    n, d = spec.n_agents, spec.n_actions
    actions = list(enumerate_joint_actions(n, d))
    means = encode_batch(actions, n, d) @ ts

    chosen = np.zeros((horizon, n), dtype=np.int64)
    rewards = np.zeros(horizon)
    regrets = np.zeros(horizon)
    betas = bounds = None

    if selector == "linuct":
        design = DesignState(n, d, lam=lam, track_dense_inverse=False)
        design.register_all(actions)
        if s_bound is None:
            s_bound = float(np.linalg.norm(ts))
        sched = BetaSchedule(delta=delta, s_bound=s_bound, mu=loss.mu, lam=lam)
        betas = np.zeros(horizon)
        bounds = np.zeros(horizon)
        for t in range(horizon):
            beta_prev = sched.beta(design)
            scores = design.scores_registered(beta=beta_prev)
            k = int(np.argmax(scores))  # first maximizer = lexicographic tie-break
            eta, eta_star = _noise_pair(noise, spec, rng_noise)
            x = means[k] + eta
            regrets[t] = (opt_value + eta_star) - x
            rewards[t] = x
            chosen[t] = actions[k].indices
            design.update(actions[k], x, loss=loss)
            betas[t] = sched.beta(design)
            bounds[t] = regret_bound_value(t + 1, n, d, loss.mu, lam, betas[t])
    elif selector == "flat_ucb":
        ucb = FlatUCB(n, d)
        for t in range(horizon):
            k = ucb.select()
            eta, eta_star = _noise_pair(noise, spec, rng_noise)
            x = means[k] + eta
            ucb.update(k, x)
            regrets[t] = (opt_value + eta_star) - x
            rewards[t] = x
            chosen[t] = actions[k].indices
    elif selector == "random":
        sel = RandomSelector(n, d, rng_sel)
        for t in range(horizon):
            a = sel.select()
            eta, eta_star = _noise_pair(noise, spec, rng_noise)
            x = linear_reward(spec, a) + eta
            regrets[t] = (opt_value + eta_star) - x
            rewards[t] = x
            chosen[t] = a.indices
    else:
        raise ValueError(f"unknown bandit selector {selector!r}")
    return RegretTrace(selector, seed, chosen, rewards, regrets, betas, bounds)


def run_planning(
    spec: MatGameSpec,
    config: SearchConfig,
    horizon: int,
    seed: int,
    noise: str = "matgame",
) -> RegretTrace:
    """Tree-search decision loop: a fresh search per decision step.

    The planner's internal sampling (and its planning-time reward queries)
    draw from a selector-keyed stream; the environment noise stream is
    shared across selectors for paired comparisons.
    """
    if noise not in NOISE_KINDS:
        raise ValueError(f"noise must be one of {NOISE_KINDS}, got {noise!r}")
    rng_noise = np.random.default_rng([seed, 0])
    sel_id = 2 if config.selector == "linuct" else 3
    rng_plan = np.random.default_rng([seed, sel_id])
    model = MatGamePlanningModel(spec)
    opt_action, opt_value = oracle_optimum(spec)
    n = spec.n_agents
    chosen = np.zeros((horizon, n), dtype=np.int64)
    rewards = np.zeros(horizon)
    regrets = np.zeros(horizon)
    for t in range(horizon):
        result = plan(model, config, rng_plan)
        a = result.action
        eta, eta_star = _noise_pair(noise, spec, rng_noise)
        x = linear_reward(spec, a) + eta
        regrets[t] = (opt_value + eta_star) - x
        rewards[t] = x
        chosen[t] = a.indices
    name = "linuct_mcts" if config.selector == "linuct" else "puct_mcts"
    return RegretTrace(name, seed, chosen, rewards, regrets)


# -- confidence coverage ----------------------------------------------------


def _coverage_core(
    theta_true: np.ndarray,
    action_idx: np.ndarray,
    noise: np.ndarray,
    n_actions: int,
    delta: float,
    lam: float,
    loss: ConvexLoss,
) -> np.ndarray:
    """Worst ellipsoid margin ``max_t (|theta_t - theta*|_{V_t} - beta_t)``.

    Vectorized over independent runs; inputs are (runs, dim) true
    parameters, (runs, T, n) action indices and (runs, T) noise draws.
    The per-run recursions are exactly the estimator's rank-one updates.
    """
    runs, dim = theta_true.shape
    _, horizon, n = action_idx.shape
    s_bounds = np.linalg.norm(theta_true, axis=1)
    vinv = np.broadcast_to(np.eye(dim) / lam, (runs, dim, dim)).copy()
    v = np.broadcast_to(lam * np.eye(dim), (runs, dim, dim)).copy()
    theta = np.zeros((runs, dim))
    logdet = np.zeros(runs)
    worst = np.full(runs, -np.inf)
    rows = np.arange(runs)
    offsets = np.arange(n) * n_actions
    for t in range(horizon):
        enc = np.zeros((runs, dim))
        enc[rows[:, None], action_idx[:, t, :] + offsets[None, :]] = 1.0
        x = np.einsum("rm,rm->r", enc, theta_true) + noise[:, t]
        resid = x - np.einsum("rm,rm->r", enc, theta)
        w = np.where(resid >= 0, loss.w_plus, loss.w_minus)
        u = np.einsum("rij,rj->ri", vinv, enc)
        quad = np.einsum("rm,rm->r", enc, u)
        denom = 1.0 + w * quad
        theta = theta + ((w * resid / denom)[:, None]) * u
        vinv -= (w / denom)[:, None, None] * np.einsum("ri,rj->rij", u, u)
        v += w[:, None, None] * np.einsum("ri,rj->rij", enc, enc)
        logdet += np.log(denom)
        beta = (
            np.sqrt(2.0 * loss.mu * (0.5 * logdet + math.log(1.0 / delta)))
            + math.sqrt(lam) * s_bounds
        )
        diff = theta - theta_true
        dist = np.sqrt(np.einsum("ri,rij,rj->r", diff, v, diff))
        worst = np.maximum(worst, dist - beta)
    return worst


def confidence_coverage(
    n_agents: int,
    n_actions: int,
    horizon: int,
    runs: int,
    delta: float,
    lam: float = 1e-4,
    loss: ConvexLoss | None = None,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Fraction of synthetic runs whose estimate stays inside the ellipsoid.

    Each run draws a standard-normal true parameter, plays uniformly random
    joint actions for ``horizon`` steps under unit Gaussian noise, and
    checks ``|theta_t - theta*|_{V_t} <= beta_t`` uniformly over t.
    """
    loss = loss or ConvexLoss()
    rng = np.random.default_rng(seed)
    dim = n_agents * n_actions
    theta_true = rng.normal(0.0, 1.0, (runs, dim))
    action_idx = rng.integers(0, n_actions, (runs, horizon, n_agents))
    noise = rng.normal(size=(runs, horizon))
    worst = _coverage_core(theta_true, action_idx, noise, n_actions, delta, lam, loss)
    return float(np.mean(worst <= 0.0)), worst
