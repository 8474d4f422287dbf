"""Deterministic comparison strategies: UCRP, ONS, Follow-the-Winner, Best Asset.

All strategies see cash as entry 0 of the weight vector and trade at closes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .env import Signal, TradingEnv, run_episode

BASELINES = ("ucrp", "ons", "winner", "best")


def ucrp_weights(m):
    if m < 1:
        raise ValueError("need at least one asset")
    return np.full(m + 1, 1.0 / (m + 1))


# ---------------------------------------------------------------- ONS

def project_simplex_norm(c, A, tol=1e-12, max_iter=500):
    """argmin_x (x-c)^T A (x-c) s.t. sum(x) = 1, x >= 0 (A symmetric positive definite).

    Primal active-set method started from the uniform point; the working set
    holds the coordinates pinned at zero.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    x = np.full(n, 1.0 / n)
    active = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        free = ~active
        # equality-constrained step on the free coordinates
        Af = A[np.ix_(free, free)]
        gf = (A @ (x - c))[free]
        nf = int(free.sum())
        kkt = np.zeros((nf + 1, nf + 1))
        kkt[:nf, :nf] = Af
        kkt[:nf, nf] = 1.0
        kkt[nf, :nf] = 1.0
        sol = np.linalg.solve(kkt, np.concatenate([-gf, [0.0]]))
        p = np.zeros(n)
        p[free] = sol[:nf]
        if np.abs(p).max() <= tol:
            lam = -sol[nf]
            grad = A @ (x - c)
            mult = grad - lam  # multipliers of x_i >= 0 for active i
            mult[free] = np.inf
            i = int(np.argmin(mult))
            if mult[i] >= -tol:
                return x
            active[i] = False
            continue
        alpha, block = 1.0, -1
        for i in np.flatnonzero(free & (p < 0)):
            step = -x[i] / p[i]
            if step < alpha:
                alpha, block = step, i
        x = x + alpha * p
        if block >= 0:
            x[block] = 0.0
            active[block] = True
    raise RuntimeError("simplex projection did not converge")


@dataclass
class OnsState:
    n: int
    eta: float = 0.0
    beta: float = 1.0
    delta: float = 0.125
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.A is None:
            self.A = np.eye(self.n)
        if self.b is None:
            self.b = np.zeros(self.n)


def ons_step(state, y, w):
    """Online Newton Step update with relatives ``y`` observed under weights ``w``."""
    y = np.asarray(y, dtype=np.float64)
    g = y / float(w @ y)
    state.A = state.A + np.outer(g, g)
    state.b = state.b + (1.0 + 1.0 / state.beta) * g
    try:
        cand = state.delta * np.linalg.solve(state.A, state.b)
    except np.linalg.LinAlgError:
        state.A = state.A + 1e-10 * np.eye(state.n)
        cand = state.delta * np.linalg.solve(state.A, state.b)
    p = project_simplex_norm(cand, state.A)
    w_next = (1.0 - state.eta) * p + state.eta / state.n
    return state, w_next


# ---------------------------------------------------------------- winner / best

def winner_weights(returns, lookback=5):
    """One-hot on the row with the largest cumulative log return over ``lookback`` columns.

    Ties prefer the lowest risky-asset index; cash (row 0) wins only outright.
    """
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    window = np.asarray(returns)[:, -lookback:]
    score = window.sum(axis=1)
    best_risky = 1 + int(np.argmax(score[1:]))
    pick = 0 if score[0] > score[best_risky] else best_risky
    w = np.zeros(score.size)
    w[pick] = 1.0
    return w


def best_asset(frame, start, end):
    """Hindsight best asset over days start..end-1 and its value curve (base 1)."""
    if not 0 < start < end <= frame.n_days:
        raise ValueError(f"bad range [{start}, {end})")
    curve = frame.close[:, start - 1:end] / frame.close[:, start - 1:start]
    idx = int(np.argmax(curve[:, -1]))
    return idx, curve[idx, 1:]


# ---------------------------------------------------------------- runners

def baseline_policy(name, frame, start, end, ons_params=None, winner_lookback=5):
    """``policy(state, env)`` closure for a named baseline."""
    m = frame.m
    if name == "ucrp":
        w = ucrp_weights(m)
        return lambda state, env: (w, Signal.S_PLUS)
    if name == "best":
        idx, _ = best_asset(frame, start, end)
        w = np.zeros(m + 1)
        w[idx + 1] = 1.0
        return lambda state, env: (w, Signal.S_PLUS)
    if name == "winner":
        def winner(state, env):
            known = env.returns[:, :env.day - 1]
            return winner_weights(known, winner_lookback), Signal.S_PLUS
        return winner
    if name == "ons":
        ons = OnsState(m + 1, **(ons_params or {}))
        cur = {"w": ucrp_weights(m)}

        def online_newton(state, env):
            if env.day > env.start:
                _, cur["w"] = ons_step(ons, env.prev_y, env.weights)
            return cur["w"], Signal.S_PLUS
        return online_newton
    raise ValueError(f"unknown baseline {name!r}; expected one of {BASELINES}")


def run_baseline(name, frame, config, start, end, charge_commission=True, **kwargs):
    """Ledger of a baseline over [start, end), trading at closes."""
    config = replace(config, use_qpl=False)
    if not charge_commission:
        config = replace(config, commission=0.0)
    env = TradingEnv(frame, config, start, end)
    return run_episode(env, baseline_policy(name, frame, start, end, **kwargs))
