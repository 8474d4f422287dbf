"""Daily trading environment with QPL-triggered early execution."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import portfolio as pf
from .market import InsufficientHistoryError, log_return_matrix, window_state
from .qpl import qpl_table


class Signal(str, enum.Enum):
    S_PLUS = "S+"
    S_MINUS = "S-"


class Trigger(str, enum.Enum):
    EARLY_AT_QPL_M1 = "EARLY_AT_QPL_M1"
    EARLY_AT_QPL_P1 = "EARLY_AT_QPL_P1"
    AT_CLOSE = "AT_CLOSE"


@dataclass(frozen=True)
class ExecutionDecision:
    price: float
    trigger: Trigger


@dataclass(frozen=True)
class EnvConfig:
    commission: float = 0.001
    gini_eta: float = 0.05
    risk_free: float = 0.0
    window: int = 3
    qpl_lookback: int = 504
    initial_value: float = 100_000.0
    use_qpl: bool = True
    qpl_grid_points: int = 512
    qpl_vol_scaled: bool = True

    def __post_init__(self):
        if self.initial_value <= 0:
            raise ValueError("initial_value must be positive")
        if self.commission < 0:
            raise ValueError("commission must be non-negative")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def warmup(self):
        """First day index with a full state window (and QPL history if used)."""
        need = self.window + 2
        if self.use_qpl:
            need = max(need, self.qpl_lookback + 1)
        return need


def execution_price(low, high, close, qpl_m1, qpl_p1, signal, dw):
    """Resolve one asset's execution price for the day.

    Early execution needs agreement between signal and trade direction
    (S+ with a buy, S- with a sell).  A dip below QPL^-1 takes precedence over
    a break above QPL^+1.  The chosen price is clamped into [low, high].
    """
    agrees = (signal == Signal.S_PLUS and dw > 0) or (signal == Signal.S_MINUS and dw < 0)
    if agrees and low < qpl_m1:
        price, trig = qpl_m1, Trigger.EARLY_AT_QPL_M1
    elif agrees and high > qpl_p1:
        price, trig = qpl_p1, Trigger.EARLY_AT_QPL_P1
    else:
        price, trig = close, Trigger.AT_CLOSE
    return ExecutionDecision(float(min(max(price, low), high)), trig)


@dataclass(frozen=True, eq=False)
class StepResult:
    next_state: np.ndarray
    reward: float
    pg_reward: float
    entry: pf.LedgerEntry
    done: bool
    triggers: tuple


class TradingEnv:
    """Trades days ``start`` .. ``end-1`` of ``frame``.

    The state handed to the agent before day d holds the log returns of the
    ``window`` days ending at d-1.  Weights chosen from it are executed on day d.
    """

    def __init__(self, frame, config=EnvConfig(), start=None, end=None, ladders=None):
        self.frame = frame
        self.config = config
        # precomputed ladders lift the QPL history requirement
        warmup = config.warmup if ladders is None else config.window + 2
        self.start = warmup if start is None else start
        self.end = frame.n_days if end is None else end
        if self.start < warmup:
            raise InsufficientHistoryError(f"start day {self.start} precedes warmup {warmup}")
        if not self.start < self.end <= frame.n_days:
            raise ValueError(f"bad day range [{self.start}, {self.end}) for {frame.n_days} days")
        self.returns = log_return_matrix(frame, config.risk_free)
        if config.use_qpl and ladders is None:
            down, up = qpl_table(frame, range(self.start, self.end), config.qpl_lookback, K=1,
                                 grid_points=config.qpl_grid_points,
                                 vol_scaled=config.qpl_vol_scaled)
            ladders = (down[:, :, 0], up[:, :, 0])
        self.ladders = ladders
        self.m = frame.m
        self.reset()

    @property
    def n_steps(self):
        return self.end - self.start

    def state(self, day):
        return window_state(self.returns, day - 2, self.config.window).values

    def reset(self):
        self.day = self.start
        self.weights = np.zeros(self.m + 1)
        self.weights[0] = 1.0
        self.prev_y = np.ones(self.m + 1)
        self.prev_exec = self.frame.close[:, self.start - 1].copy()
        self.value = self.config.initial_value
        return self.state(self.day)

    def step(self, weights, signal=Signal.S_PLUS):
        if self.day >= self.end:
            raise RuntimeError("episode finished; call reset()")
        cfg, f, d = self.config, self.frame, self.day
        w = pf.as_weights(weights)
        drifted = pf.drift_weights(self.weights, self.prev_y)
        dw = pf.trade_delta(w, drifted)
        close = f.close[:, d]
        exec_prices = close.copy()
        triggers = [Trigger.AT_CLOSE] * self.m
        if cfg.use_qpl:
            j = d - self.start
            for i in range(self.m):
                dec = execution_price(f.low[i, d], f.high[i, d], close[i],
                                      self.ladders[0][i, j], self.ladders[1][i, j],
                                      signal, dw[i + 1])
                exec_prices[i] = dec.price
                triggers[i] = dec.trigger
        y = pf.price_relatives(exec_prices, self.prev_exec, cfg.risk_free)
        mu = pf.transaction_cost(dw, cfg.commission)
        reward = pf.step_reward(w, y, mu, cfg.gini_eta)
        gross = float(w @ y)
        self.value *= (1.0 - mu) * gross
        pg_reward = float(dw[1:] @ (close / exec_prices - 1.0))
        entry = pf.LedgerEntry(d, f.dates[d].isoformat(), drifted, w, exec_prices, mu, gross,
                               self.value, signal.value if cfg.use_qpl else "")
        self.weights, self.prev_y, self.prev_exec = w, y, exec_prices
        self.day += 1
        return StepResult(self.state(self.day), reward, pg_reward, entry,
                          self.day == self.end, tuple(triggers))


def run_episode(env, policy):
    """Drive ``policy(state, env) -> (weights, signal)`` through a full pass."""
    state = env.reset()
    ledger = []
    while True:
        weights, signal = policy(state, env)
        res = env.step(weights, signal)
        ledger.append(res.entry)
        state = res.next_state
        if res.done:
            return ledger
