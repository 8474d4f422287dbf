"""Reproducible experiments on the synthetic drift market.

* smoke: does the agent learn to hold the drifting asset and beat UCRP?
* gini sweep: mean Gini bonus of the trained policy for several coefficients
* efficiency: episodes to 90% of final reward, shared vs separate encoders
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import Agent, Hyperparams, train
from .baselines import run_baseline
from .env import EnvConfig, TradingEnv, run_episode
from .plotting import line_plot
from .portfolio import gini_bonus
from .synthetic import drift_market

log = logging.getLogger(__name__)

GINI_ETAS = (0.0, 0.01, 0.05, 0.1)
DRIFT_ASSET = 0


@dataclass(frozen=True)
class Setting:
    """Smoke-test market and protocol: 80/20 split, 50 episodes."""

    n_days: int = 300
    n_assets: int = 5
    drift: float = 0.003
    vol: float = 0.005
    market_seed: int = 7
    split: float = 0.8
    episodes: int = 50
    qpl_lookback: int = 64

    def frame(self):
        return drift_market(self.n_days, self.n_assets, DRIFT_ASSET, self.drift, self.vol,
                            self.market_seed)

    def env_config(self, gini_eta=0.0):
        return EnvConfig(gini_eta=gini_eta, qpl_lookback=self.qpl_lookback)

    def ranges(self):
        n_train = math.floor(self.split * self.n_days)
        warm = self.env_config().warmup
        return (warm, n_train), (max(n_train, warm), self.n_days)


@dataclass
class RunResult:
    logs: list
    agent: Agent
    test_ledger: list
    train_seconds: float


class Lab:
    """Trains on demand and memoizes runs keyed by (gini_eta, shared, seed)."""

    def __init__(self, setting=Setting()):
        self.setting = setting
        self.frame = setting.frame()
        self.train_range, self.test_range = setting.ranges()
        self._runs = {}
        self._envs = {}

    def _env(self, gini_eta, days):
        key = (gini_eta, days)
        if key not in self._envs:
            self._envs[key] = TradingEnv(self.frame, self.setting.env_config(gini_eta), *days)
        return self._envs[key]

    def run(self, gini_eta=0.0, shared=True, seed=0):
        key = (gini_eta, shared, seed)
        if key not in self._runs:
            hyper = Hyperparams(episodes=self.setting.episodes, shared_encoder=shared)
            agent = Agent(self.frame.m, 3, hyper, seed)
            log.info("training eta=%s shared=%s seed=%s", gini_eta, shared, seed)
            t0 = time.perf_counter()
            logs = train(self._env(gini_eta, self.train_range), agent)
            seconds = time.perf_counter() - t0
            ledger = run_episode(self._env(gini_eta, self.test_range), agent.policy_fn())
            self._runs[key] = RunResult(logs, agent, ledger, seconds)
        return self._runs[key]

    def baseline(self, name="ucrp"):
        return run_baseline(name, self.frame, self.setting.env_config(), *self.test_range)


def episodes_to_fraction(rewards, fraction=0.9):
    """1-based first episode whose reward covers ``fraction`` of the start-to-final gain.

    The target is R_0 + fraction * (R_final - R_0), which stays meaningful when
    rewards are negative.  A run that never improves reaches it at episode 1.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("no episodes")
    target = r[0] + fraction * (r[-1] - r[0])
    hit = r >= target if r[-1] >= r[0] else r <= target
    return int(np.argmax(hit)) + 1


def smoke(lab, seed=0):
    res = lab.run(0.0, True, seed)
    final_w = res.logs[-1].mean_weights[DRIFT_ASSET + 1]
    ucrp_value = lab.baseline("ucrp")[-1].value
    agent_value = res.test_ledger[-1].value
    return {"seed": seed, "final_episode_mean_weight_drift_asset": final_w,
            "agent_test_value": agent_value, "ucrp_test_value": ucrp_value,
            "weight_ok": final_w > 0.6, "beats_ucrp": agent_value > ucrp_value}


def gini_sweep(lab, etas=GINI_ETAS, seeds=(0, 1, 2)):
    """Mean test-period Gini bonus of the deterministic policy, per eta."""
    per_seed = {}
    for eta in etas:
        per_seed[eta] = [float(np.mean([gini_bonus(e.weights) for e in lab.run(eta, True, s).test_ledger]))
                         for s in seeds]
    means = [float(np.mean(per_seed[eta])) for eta in etas]
    monotone = all(b >= a for a, b in zip(means, means[1:]))
    return {"etas": list(etas), "seeds": list(seeds), "mean_gini": means,
            "per_seed": {str(k): v for k, v in per_seed.items()}, "monotone": monotone}


def efficiency(lab, seeds=(0, 1, 2, 3, 4), fraction=0.9):
    out = {"seeds": list(seeds), "fraction": fraction}
    for label, shared in (("shared", True), ("separate", False)):
        curves = [[ep.cum_reward for ep in lab.run(0.0, shared, s).logs] for s in seeds]
        out[label] = {"episodes_to_target": [episodes_to_fraction(c, fraction) for c in curves],
                      "curves": curves}
        out[label]["median"] = float(np.median(out[label]["episodes_to_target"]))
    out["shared_not_slower"] = out["shared"]["median"] <= out["separate"]["median"]
    return out


def write_experiment_report(results, out_dir):
    """JSON with every number plus SVG figures; failed checks are flagged, not hidden."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = {}
    if "smoke" in results:
        flags["smoke"] = results["smoke"]["weight_ok"] and results["smoke"]["beats_ucrp"]
    if "gini_sweep" in results:
        g = results["gini_sweep"]
        flags["gini_sweep"] = g["monotone"]
        x = np.asarray(g["etas"])
        line_plot({"mean Gini bonus": (x, np.asarray(g["mean_gini"]))}, out_dir / "gini_sweep.svg",
                  "Test-period Gini bonus vs coefficient", "mean 1 - sum w^2", xlabel="gini_eta")
    if "efficiency" in results:
        e = results["efficiency"]
        flags["efficiency"] = e["shared_not_slower"]
        series = {}
        for label in ("shared", "separate"):
            c = np.mean(np.asarray(e[label]["curves"]), axis=0)
            series[f"{label} encoder (mean of {len(e['seeds'])} seeds)"] = (np.arange(1, c.size + 1), c)
        line_plot(series, out_dir / "training_efficiency.svg", "Cumulative reward per episode",
                  "cumulative reward", xlabel="episode")
    payload = dict(results, flags=flags, all_passed=all(flags.values()))
    (out_dir / "experiments.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                              encoding="utf-8")
    for name, ok in flags.items():
        if not ok:
            log.warning("experiment check failed: %s", name)
    return payload


def run_all(out_dir, setting=Setting(), which=("smoke", "gini_sweep", "efficiency")):
    lab = Lab(setting)
    results = {"setting": {k: getattr(setting, k) for k in setting.__dataclass_fields__}}
    if "smoke" in which:
        results["smoke"] = smoke(lab)
    if "gini_sweep" in which:
        results["gini_sweep"] = gini_sweep(lab)
    if "efficiency" in which:
        results["efficiency"] = efficiency(lab)
    return write_experiment_report(results, out_dir)

