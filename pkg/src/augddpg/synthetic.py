"""Seeded synthetic OHLC markets for tests, smoke runs and demos."""
from __future__ import annotations

import datetime as dt

import numpy as np

from .market import MarketFrame


def business_days(n, start=dt.date(2014, 2, 3)):
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return tuple(days)


def geometric_market(n_days, drifts, vols, seed=0, start_price=1.0, symbols=None):
    """Log-normal closes with per-asset daily drift and volatility.

    Opens gap slightly from the previous close; highs and lows extend the
    open/close range by a half-normal amount scaled with the asset's volatility.
    """
    drifts = np.asarray(drifts, dtype=np.float64)
    vols = np.broadcast_to(np.asarray(vols, dtype=np.float64), drifts.shape)
    m = drifts.size
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((m, n_days))
    log_ret = np.log1p(drifts)[:, None] - 0.5 * vols[:, None] ** 2 + vols[:, None] * eps
    log_ret[:, 0] = 0.0
    close = start_price * np.exp(np.cumsum(log_ret, axis=1))
    prev = np.concatenate([close[:, :1], close[:, :-1]], axis=1)
    open_ = prev * np.exp(0.2 * vols[:, None] * rng.standard_normal((m, n_days)))
    top = np.maximum(open_, close)
    bottom = np.minimum(open_, close)
    high = top * np.exp(0.5 * vols[:, None] * np.abs(rng.standard_normal((m, n_days))))
    low = bottom * np.exp(-0.5 * vols[:, None] * np.abs(rng.standard_normal((m, n_days))))
    symbols = symbols or [f"SYN{i + 1}" for i in range(m)]
    return MarketFrame.from_arrays(symbols, business_days(n_days), open_, high, low, close)


def drift_market(n_days=300, n_assets=5, drift_asset=0, drift=0.003, vol=0.005, seed=7):
    """Smoke-test market: one asset drifts upward, the others are driftless."""
    drifts = np.zeros(n_assets)
    drifts[drift_asset] = drift
    return geometric_market(n_days, drifts, vol, seed=seed)
