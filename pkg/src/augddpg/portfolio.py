"""Portfolio accounting: weight drift, trades, costs, Gini bonus and rewards.

Weight vectors carry cash at index 0 followed by the m risky assets.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SIMPLEX_TOL = 1e-9


class AccountingError(ArithmeticError):
    """Portfolio growth factor is non-positive (bankruptcy)."""


def as_weights(w, tol=SIMPLEX_TOL):
    """Validate a weight vector and renormalize away float drift."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise ValueError(f"weight vector must be 1-D with cash + >=1 asset, got shape {w.shape}")
    if np.any(w < -tol) or np.any(w > 1 + tol) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"not on the simplex: {w}")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def price_relatives(v_now, v_prev, r=0.0):
    """(1+r, v_now/v_prev) for the risky assets."""
    y = np.concatenate([[1.0 + r], np.asarray(v_now, float) / np.asarray(v_prev, float)])
    if np.any(y <= 0):
        raise ValueError(f"price relatives must be positive: {y}")
    return y


def drift_weights(w_prev, y_prev):
    """Weights after prices move and before rebalancing."""
    g = y_prev * w_prev
    return g / g.sum()


def trade_delta(w_target, w_drifted):
    return np.asarray(w_target, float) - np.asarray(w_drifted, float)


def transaction_cost(delta, commission):
    """Commission on the risky legs only; cash moves are free."""
    if not 0.0 <= commission <= 0.1:
        raise ValueError(f"commission must lie in [0, 0.1], got {commission}")
    return commission * float(np.abs(delta[1:]).sum())


def gini_bonus(w):
    w = np.asarray(w, float)
    return 1.0 - float(w @ w)


def step_reward(w, y, mu, gini_eta=0.0):
    growth = (1.0 - mu) * float(np.dot(w, y))
    if growth <= 0:
        raise AccountingError(f"non-positive growth factor {growth}")
    return math.log(growth) + gini_eta * gini_bonus(w)


@dataclass(frozen=True, eq=False)
class LedgerEntry:
    day: int
    date: str
    drifted: np.ndarray
    weights: np.ndarray
    exec_prices: np.ndarray
    mu: float
    gross_return: float
    value: float
    signal: str = ""


def accumulate(ledger):
    """Cumulative return: product of (1 - mu_t) * (w_t . y_t)."""
    if not ledger:
        raise ValueError("empty ledger")
    return math.prod((1.0 - e.mu) * e.gross_return for e in ledger)


def ledger_header(m):
    return (["date", "value", "mu", "gross_return"] + [f"w_{i}" for i in range(m + 1)]
            + [f"vE_{i}" for i in range(1, m + 1)] + ["signal"])


def write_ledger(ledger, path, m):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ledger_header(m))
        for e in ledger:
            w.writerow([e.date, repr(float(e.value)), repr(float(e.mu)), repr(float(e.gross_return))]
                       + [repr(float(x)) for x in e.weights]
                       + [repr(float(x)) for x in e.exec_prices] + [e.signal])


def read_ledger(path):
    """Load a ledger CSV into a dict of columns (floats as numpy arrays)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty ledger")
    wcols = sorted((k for k in rows[0] if k.startswith("w_")), key=lambda k: int(k[2:]))
    vcols = sorted((k for k in rows[0] if k.startswith("vE_")), key=lambda k: int(k[3:]))
    return {
        "date": [r["date"] for r in rows],
        "value": np.array([float(r["value"]) for r in rows]),
        "mu": np.array([float(r["mu"]) for r in rows]),
        "gross_return": np.array([float(r["gross_return"]) for r in rows]),
        "weights": np.array([[float(r[k]) for k in wcols] for r in rows]),
        "exec_prices": np.array([[float(r[k]) for k in vcols] for r in rows]),
        "signal": [r["signal"] for r in rows],
    }
