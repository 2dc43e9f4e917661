"""Experiment runner: config files, seeded cells, records, summaries.

A run is a grid of (selector x seed) cells over one matrix-game spec.
Bandit-mode cells play the flat decision loop; search-mode cells run a
fresh tree search per decision.  Every cell writes one result file whose
header echoes the full configuration, followed by one record per decision
step.  Records are re-parseable by this module's own readers, and a rerun
with the same config produces byte-identical data (no timestamps).

Config files are INI-style key = value text with three sections::

    [env]      agents, actions, mode, gauss_sigma, uniform_halfwidth,
               noise_scale, episode_length, seed
    [run]      selectors, seeds, horizon, output, format, workers,
               mode (bandit|search), noise (unit|matgame|none)
    [bandit]   delta, lam, f_plus, f_minus
    [search]   simulations, chi, zeta, gamma, lam, f_plus, f_minus, c1, c2

Unknown sections or keys are rejected before any simulation starts.
Cells run in parallel up to ``workers``; each cell derives its random
streams from its own seed, and results are written by a single collector
in sorted (selector, seed) order.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from linuct.baselines import SELECTOR_KINDS
from linuct.bandit import ConvexLoss
from linuct.matgame import MatGameSpec, linear_reward, oracle_optimum
from linuct.regret import NOISE_KINDS, RegretTrace, run_bandit, run_planning
from linuct.selection import enumerate_joint_actions
from linuct.tree import SearchConfig


class ConfigError(ValueError):
    """The experiment configuration is invalid or unreadable."""


_ENV_KEYS = {
    "agents", "actions", "mode", "gauss_sigma", "uniform_halfwidth",
    "noise_scale", "episode_length", "seed",
}
_RUN_KEYS = {
    "selectors", "seeds", "horizon", "output", "format", "workers", "mode", "noise",
}
_BANDIT_KEYS = {"delta", "lam", "f_plus", "f_minus"}
_SEARCH_KEYS = {
    "simulations", "chi", "zeta", "gamma", "lam", "f_plus", "f_minus", "c1", "c2",
}


@dataclass
class ExperimentConfig:
    spec: MatGameSpec
    selectors: list[str]
    seeds: list[int]
    horizon: int
    output: Path = Path("results")
    fmt: str = "csv"  # csv | jsonl
    workers: int = 1
    run_mode: str = "bandit"  # bandit | search
    noise: str = "unit"
    delta: float = 0.01
    lam: float = 1e-4
    loss: ConvexLoss = field(default_factory=ConvexLoss)
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if not self.selectors:
            raise ConfigError("no selectors configured")
        if not self.seeds:
            raise ConfigError("no seeds configured")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.fmt not in ("csv", "jsonl"):
            raise ConfigError(f"format must be csv or jsonl, got {self.fmt!r}")
        if self.run_mode not in ("bandit", "search"):
            raise ConfigError(f"mode must be bandit or search, got {self.run_mode!r}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        allowed = set(SELECTOR_KINDS)
        if self.run_mode == "search":
            allowed = {"linuct", "puct"}
        for s in self.selectors:
            if s not in allowed:
                raise ConfigError(
                    f"selector {s!r} not available in {self.run_mode} mode "
                    f"(allowed: {sorted(allowed)})"
                )

    def echo(self) -> dict[str, str]:
        """Flat key -> value view of everything that defines the experiment."""
        out = {
            "env.agents": self.spec.n_agents,
            "env.actions": self.spec.n_actions,
            "env.mode": self.spec.mode,
            "env.gauss_sigma": self.spec.gauss_sigma,
            "env.uniform_halfwidth": self.spec.uniform_halfwidth,
            "env.noise_scale": self.spec.noise_scale,
            "env.episode_length": self.spec.episode_length,
            "env.seed": self.spec.seed,
            "run.selectors": ",".join(self.selectors),
            "run.seeds": ",".join(str(s) for s in self.seeds),
            "run.horizon": self.horizon,
            "run.mode": self.run_mode,
            "run.noise": self.noise,
            "run.format": self.fmt,
            "bandit.delta": self.delta,
            "bandit.lam": self.lam,
            "bandit.f_plus": self.loss.w_plus,
            "bandit.f_minus": self.loss.w_minus,
            "search.simulations": self.search.num_simulations,
            "search.chi": self.search.chi,
            "search.zeta": self.search.zeta,
            "search.gamma": self.search.gamma,
            "search.lam": self.search.lam,
        }
        return {k: str(v) for k, v in out.items()}


def parse_config_text(text: str) -> ExperimentConfig:
    import configparser

    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    known_sections = {"env", "run", "bandit", "search"}
    unknown = set(cp.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    for sec, keys in (
        ("env", _ENV_KEYS), ("run", _RUN_KEYS), ("bandit", _BANDIT_KEYS), ("search", _SEARCH_KEYS),
    ):
        if sec in cp:
            bad = set(cp[sec]) - keys
            if bad:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(bad)}")
    if "env" not in cp or "run" not in cp:
        raise ConfigError("config needs [env] and [run] sections")
    env, run = cp["env"], cp["run"]
    try:
        spec = MatGameSpec(
            n_agents=env.getint("agents"),
            n_actions=env.getint("actions"),
            mode=env.get("mode", "linear"),
            gauss_sigma=env.getfloat("gauss_sigma", 2.0),
            uniform_halfwidth=env.getfloat("uniform_halfwidth", 3.0),
            noise_scale=env.getfloat("noise_scale", 1.0),
            episode_length=env.getint("episode_length", 500),
            seed=env.getint("seed", 0),
        )
        selectors = [s.strip() for s in run.get("selectors").split(",") if s.strip()]
        seeds = [int(s) for s in run.get("seeds").split(",") if s.strip()]
        bandit = cp["bandit"] if "bandit" in cp else {}
        search_sec = cp["search"] if "search" in cp else None
        search = SearchConfig()
        if search_sec is not None:
            search = SearchConfig(
                num_simulations=search_sec.getint("simulations", 50),
                chi=search_sec.getint("chi", 3),
                zeta=search_sec.getfloat("zeta", 0.6),
                gamma=search_sec.getfloat("gamma", 0.99),
                lam=search_sec.getfloat("lam", 1e-4),
                f_plus=search_sec.getfloat("f_plus", 1.0),
                f_minus=search_sec.getfloat("f_minus", 0.75),
                c1=search_sec.getfloat("c1", 1.25),
                c2=search_sec.getfloat("c2", 19652.0),
            )
        return ExperimentConfig(
            spec=spec,
            selectors=selectors,
            seeds=seeds,
            horizon=run.getint("horizon"),
            output=Path(run.get("output", "results")),
            fmt=run.get("format", "csv"),
            workers=run.getint("workers", 1),
            run_mode=run.get("mode", "bandit"),
            noise=run.get("noise", "unit"),
            delta=float(bandit.get("delta", 0.01)) if bandit else 0.01,
            lam=float(bandit.get("lam", 1e-4)) if bandit else 1e-4,
            loss=ConvexLoss(
                w_plus=float(bandit.get("f_plus", 1.0)) if bandit else 1.0,
                w_minus=float(bandit.get("f_minus", 0.75)) if bandit else 0.75,
            ),
            search=search,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


# -- record IO ---------------------------------------------------------------

_FIELDS = ("step", "action", "reward", "regret", "cum_regret", "beta", "bound")


def trace_records(trace: RegretTrace):
    cum = trace.cum_regret
    for t in range(len(trace.rewards)):
        yield {
            "step": t + 1,
            "action": " ".join(str(int(j)) for j in trace.actions[t]),
            "reward": float(trace.rewards[t]),
            "regret": float(trace.regrets[t]),
            "cum_regret": float(cum[t]),
            "beta": None if trace.betas is None else float(trace.betas[t]),
            "bound": None if trace.bounds is None else float(trace.bounds[t]),
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_result(path: Path, echo: dict, selector: str, seed: int, trace: RegretTrace, fmt: str):
    meta = dict(echo)
    meta["cell.selector"] = selector
    meta["cell.seed"] = str(seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        lines = [f"# {k} = {v}" for k, v in sorted(meta.items())]
        lines.append(",".join(_FIELDS))
        for rec in trace_records(trace):
            lines.append(",".join(_fmt(rec[f]) for f in _FIELDS))
        path.write_text("\n".join(lines) + "\n")
    else:
        lines = [json.dumps({"config": meta}, sort_keys=True)]
        for rec in trace_records(trace):
            lines.append(json.dumps(rec, sort_keys=True))
        path.write_text("\n".join(lines) + "\n")


def read_result(path) -> tuple[dict, list[dict]]:
    """Parse a result file written by :func:`write_result` (either format)."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"empty result file {path}")
    if lines[0].startswith("#"):
        meta = {}
        body_start = 0
        for i, ln in enumerate(lines):
            if ln.startswith("#"):
                key, _, val = ln[1:].partition("=")
                meta[key.strip()] = val.strip()
                body_start = i + 1
            else:
                break
        header = lines[body_start].split(",")
        records = []
        for ln in lines[body_start + 1 :]:
            parts = ln.split(",")
            rec = {}
            for name, raw in zip(header, parts):
                if name == "step":
                    rec[name] = int(raw)
                elif name == "action":
                    rec[name] = raw
                else:
                    rec[name] = float(raw) if raw else None
            records.append(rec)
        return meta, records
    first = json.loads(lines[0])
    if "config" not in first:
        raise ConfigError(f"missing config line in {path}")
    return first["config"], [json.loads(ln) for ln in lines[1:]]


# -- running -----------------------------------------------------------------


def _run_cell(config: ExperimentConfig, selector: str, seed: int) -> RegretTrace:
    if config.run_mode == "bandit":
        return run_bandit(
            config.spec,
            selector,
            config.horizon,
            seed,
            delta=config.delta,
            lam=config.lam,
            loss=config.loss,
            noise=config.noise,
        )
    search = replace(config.search, selector=selector)
    return run_planning(config.spec, search, config.horizon, seed, noise=config.noise)


def _cell_task(args):
    config, selector, seed = args
    return selector, seed, _run_cell(config, selector, seed)


@dataclass
class CellResult:
    selector: str
    seed: int
    trace: RegretTrace
    path: Path


def run(config: ExperimentConfig) -> list[CellResult]:
    """Execute every (selector x seed) cell and write one file per cell."""
    config.output.mkdir(parents=True, exist_ok=True)
    probe = config.output / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output path {config.output} is not writable: {exc}") from exc
    cells = [(config, sel, seed) for sel in config.selectors for seed in config.seeds]
    if config.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            done = list(pool.map(_cell_task, cells))
    else:
        done = [_cell_task(c) for c in cells]
    done.sort(key=lambda item: (item[0], item[1]))
    echo = config.echo()
    results = []
    for selector, seed, trace in done:
        path = config.output / f"{selector}_seed{seed}.{config.fmt}"
        write_result(path, echo, selector, seed, trace, config.fmt)
        results.append(CellResult(selector, seed, trace, path))
    return results


# -- summaries ---------------------------------------------------------------


def summarize(paths) -> str:
    """Aggregate result files into a CSV table of per-cell means and sds.

    Groups by (agents, actions, mode, decision steps, selector); reports
    the across-seed mean and sample standard deviation (ddof=1, reported
    as 0 for a single seed) of cumulative return and cumulative regret.
    """
    groups: dict[tuple, list[tuple[float, float]]] = {}
    for p in paths:
        meta, records = read_result(p)
        if not records:
            raise ConfigError(f"result file {p} has no records")
        key = (
            meta["env.agents"],
            meta["env.actions"],
            meta["env.mode"],
            meta["run.horizon"],
            meta["cell.selector"],
        )
        total_reward = sum(r["reward"] for r in records)
        final_regret = records[-1]["cum_regret"]
        groups.setdefault(key, []).append((total_reward, final_regret))
    lines = ["agents,actions,mode,steps,selector,mean,sd,mean_regret,sd_regret"]
    for key in sorted(groups):
        vals = np.array(groups[key])
        mean_r, mean_g = vals.mean(axis=0)
        if len(vals) > 1:
            sd_r, sd_g = vals.std(axis=0, ddof=1)
        else:
            sd_r = sd_g = 0.0
        lines.append(
            ",".join(list(key) + [repr(float(x)) for x in (mean_r, sd_r, mean_g, sd_g)])
        )
    return "\n".join(lines) + "\n"


def oracle_text(spec: MatGameSpec, cap: int = 100_000) -> str:
    """Human-readable optimum of the game, cross-checked by enumeration."""
    action, value = oracle_optimum(spec)
    lines = [
        f"agents = {spec.n_agents}, actions = {spec.n_actions}, mode = {spec.mode}",
        f"optimal joint action: {' '.join(str(j) for j in action.indices)}",
        f"expected reward: {value}",
    ]
    if spec.n_actions**spec.n_agents <= cap:
        best = max(
            enumerate_joint_actions(spec.n_agents, spec.n_actions),
            key=lambda a: linear_reward(spec, a),
        )
        check = "confirmed" if linear_reward(spec, best) == value else "MISMATCH"
        lines.append(f"enumeration check: {check}")
    return "\n".join(lines) + "\n"
