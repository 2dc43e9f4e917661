"""Stateless n-agent matrix game benchmark with a shared payoff.

Linear mode pays the sum of the chosen action indices, so the payoff is an
exact linear function of the n-hot encoding and the per-agent optimum is
the highest index.  Nonlinear mode adds fresh Gaussian-plus-uniform noise
to every reward query.  The payoff reading ("sum of chosen indices") is
isolated in :func:`linear_reward` so it can be swapped wholesale.

Randomness uses numpy's default PCG64 generator; with a fixed seed, reward
sequences are reproducible across platforms.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, asdict

import numpy as np

from linuct.bandit import InvalidActionError, JointAction


class ProtocolError(RuntimeError):
    """The episode protocol was violated (e.g. stepping a finished episode)."""


@dataclass(frozen=True)
class MatGameSpec:
    n_agents: int
    n_actions: int
    mode: str = "linear"  # "linear" or "nonlinear"
    gauss_sigma: float = 2.0
    uniform_halfwidth: float = 3.0
    noise_scale: float = 1.0
    episode_length: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_agents < 1 or self.n_actions < 1:
            raise ValueError("need at least one agent and one action")
        if self.mode not in ("linear", "nonlinear"):
            raise ValueError(f"mode must be 'linear' or 'nonlinear', got {self.mode!r}")
        if self.gauss_sigma < 0 or self.uniform_halfwidth < 0 or self.noise_scale < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")

    # -- config file round-trip (key = value under a [matgame] section) ----

    def to_config_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["matgame"] = {k: str(v) for k, v in asdict(self).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_config_text(cls, text: str) -> "MatGameSpec":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "matgame" not in cp:
            raise ValueError("missing [matgame] section")
        sec = cp["matgame"]
        known = set(asdict(cls(1, 1)))
        unknown = set(sec) - known
        if unknown:
            raise ValueError(f"unknown keys in [matgame]: {sorted(unknown)}")
        return cls(
            n_agents=sec.getint("n_agents"),
            n_actions=sec.getint("n_actions"),
            mode=sec.get("mode", "linear"),
            gauss_sigma=sec.getfloat("gauss_sigma", 2.0),
            uniform_halfwidth=sec.getfloat("uniform_halfwidth", 3.0),
            noise_scale=sec.getfloat("noise_scale", 1.0),
            episode_length=sec.getint("episode_length", 500),
            seed=sec.getint("seed", 0),
        )


def linear_reward(spec: MatGameSpec, action: JointAction) -> float:
    """Deterministic payoff: the sum of the chosen action indices."""
    if action.n_agents != spec.n_agents or action.n_actions != spec.n_actions:
        raise InvalidActionError(
            f"action shape ({action.n_agents},{action.n_actions}) does not match "
            f"game shape ({spec.n_agents},{spec.n_actions})"
        )
    return float(sum(action.indices))


def theta_star(spec: MatGameSpec) -> np.ndarray:
    """True per-agent action values: ``<theta*, encode(a)> == linear_reward(a)``."""
    return np.tile(np.arange(spec.n_actions, dtype=float), spec.n_agents)


def sample_reward(spec: MatGameSpec, action: JointAction, rng: np.random.Generator) -> float:
    """One reward query; nonlinear mode draws fresh noise every call."""
    r = linear_reward(spec, action)
    if spec.mode == "nonlinear":
        u = rng.normal(0.0, spec.gauss_sigma)
        v = rng.uniform(-spec.uniform_halfwidth, spec.uniform_halfwidth)
        r += spec.noise_scale * (u + v)
    return r


def noise_variance(spec: MatGameSpec) -> float:
    """Variance of the nonlinear reward noise (0 in linear mode)."""
    if spec.mode == "linear":
        return 0.0
    return spec.noise_scale**2 * (
        spec.gauss_sigma**2 + spec.uniform_halfwidth**2 / 3.0
    )


def oracle_optimum(spec: MatGameSpec) -> tuple[JointAction, float]:
    """Best joint action and its expected reward (noise is zero-mean)."""
    best = JointAction(spec.n_agents, spec.n_actions, (spec.n_actions - 1,) * spec.n_agents)
    return best, linear_reward(spec, best)


class MatGame:
    """Episodic wrapper: the only state is the step counter.

    One instance per search thread; instances are independent.
    """

    def __init__(self, spec: MatGameSpec, seed: int | None = None):
        self.spec = spec
        self._seed = spec.seed if seed is None else seed
        self.reset()

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self._seed = seed
        self.rng = np.random.default_rng(self._seed)
        self.steps_taken = 0
        self.done = False

    def expected_reward(self, action: JointAction) -> float:
        return linear_reward(self.spec, action)

    def step(self, action: JointAction) -> tuple[float, bool]:
        if self.done:
            raise ProtocolError("episode is finished; call reset() before stepping")
        r = sample_reward(self.spec, action, self.rng)
        self.steps_taken += 1
        self.done = self.steps_taken >= self.spec.episode_length
        return r, self.done


class MatGamePlanningModel:
    """Ground-truth planning model over the matrix game.

    The state is the number of decisions left in the lookahead (default 1,
    matching the game's statelessness); every reward query resamples the
    nonlinear noise, so planning itself is stochastic in nonlinear mode.
    """

    def __init__(self, spec: MatGameSpec, horizon: int = 1):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.spec = spec
        self.horizon = horizon

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def initial_state(self) -> int:
        return self.horizon

    def step(self, state: int, action: JointAction, rng) -> tuple[int, float, bool]:
        reward = sample_reward(self.spec, action, rng)
        remaining = state - 1
        return remaining, reward, remaining <= 0

    def leaf_value(self, state: int) -> float:
        return 0.0


def reward_table_csv(spec: MatGameSpec, cap: int = 100_000) -> str:
    """Expected-reward table for every joint action, as CSV text."""
    size = spec.n_actions**spec.n_agents
    if size > cap:
        raise ValueError(f"joint action space {size} exceeds cap {cap}")
    from linuct.selection import enumerate_joint_actions

    lines = [",".join([f"agent{i}" for i in range(spec.n_agents)] + ["reward"])]
    for a in enumerate_joint_actions(spec.n_agents, spec.n_actions):
        lines.append(",".join([str(j) for j in a.indices] + [repr(linear_reward(spec, a))]))
    return "\n".join(lines) + "\n"
