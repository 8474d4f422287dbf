"""Performance metrics (ARR, ASR, MDD) and the comparison report."""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .plotting import line_plot

log = logging.getLogger(__name__)

T_YEAR = 252
COLUMNS = ("strategy", "mdd", "arr", "asr", "arr_growth_factor", "final_value", "n_days")
# row order of the comparison table; unknown names follow alphabetically
TABLE_ORDER = ("ours", "ddpg", "ons", "ucrp", "winner", "best")
COLUMN_NOTES = {
    "mdd": "maximum drawdown, fraction of the running peak",
    "arr": "annualized simple rate ((V_f - V_i) / V_i) * (T_year / T_all)",
    "asr": "annualized Sharpe ratio of daily excess returns (sample std)",
    "arr_growth_factor": "annualized growth factor (V_f / V_i) ** (T_year / T_all)",
}


class UndefinedSharpeError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MetricsSummary:
    arr: float
    growth_factor_annualized: float
    asr: float
    mdd: float
    final_value: float
    n_days: int


def arr(values, t_year=T_YEAR):
    """Annualized simple rate and annualized growth factor.

    ``values`` starts with the initial value; T_all is the number of trading days.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2 or np.any(v <= 0):
        raise ValueError("need at least two positive values")
    t_all = v.size - 1
    ratio = v[-1] / v[0]
    return (ratio - 1.0) * t_year / t_all, ratio ** (t_year / t_all)


def asr(values, rf=0.0, t_year=T_YEAR):
    v = np.asarray(values, dtype=np.float64)
    rets = v[1:] / v[:-1] - 1.0
    if rets.size < 3:
        raise ValueError("need at least three daily returns")
    excess = rets - rf / t_year
    sd = excess.std(ddof=1)
    if sd <= 1e-14 * max(1.0, abs(excess.mean())):
        raise UndefinedSharpeError("zero variance of excess returns")
    return float(excess.mean() / sd * math.sqrt(t_year))


def mdd(values):
    """Largest peak-to-trough loss as a fraction of the peak (single pass)."""
    peak, worst = -math.inf, 0.0
    for x in values:
        if x <= 0:
            raise ValueError("values must be positive")
        peak = max(peak, x)
        worst = max(worst, (peak - x) / peak)
    return worst


def summarize(values, rf=0.0, t_year=T_YEAR):
    a, g = arr(values, t_year)
    try:
        s = asr(values, rf, t_year)
    except (UndefinedSharpeError, ValueError):
        s = math.nan
    return MetricsSummary(a, g, s, mdd(values), float(values[-1]), len(values) - 1)


def rolling_sharpe(values, window=63, t_year=T_YEAR):
    v = np.asarray(values, dtype=np.float64)
    rets = v[1:] / v[:-1] - 1.0
    out = np.full(rets.size, np.nan)
    for i in range(window - 1, rets.size):
        chunk = rets[i - window + 1:i + 1]
        sd = chunk.std(ddof=1)
        if sd > 0:
            out[i] = chunk.mean() / sd * math.sqrt(t_year)
    return out


def ledger_values(ledger):
    """Value series with the initial value prepended (recovered from day one)."""
    v0 = ledger["value"][0] / ((1.0 - ledger["mu"][0]) * ledger["gross_return"][0])
    return np.concatenate([[v0], ledger["value"]])


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or not math.isfinite(x):
        return "nan"
    return f"{x:.6g}"


def _json_num(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    return None if not math.isfinite(x) else float(f"{x:.6g}")


def sanitize(name):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("._") or "strategy"


def _restrict(ledgers):
    common = None
    for led in ledgers.values():
        dates = set(led["date"])
        common = dates if common is None else common & dates
    if not common:
        raise ValueError("ledgers share no dates")
    if any(len(led["date"]) != len(common) for led in ledgers.values()):
        log.warning("ledger date ranges differ; using the %d common dates", len(common))
    out = {}
    for name, led in ledgers.items():
        full = ledger_values(led)
        keep = [i for i, d in enumerate(led["date"]) if d in common]
        first = keep[0]
        values = np.concatenate([[full[first]], full[np.array(keep) + 1]])
        out[name] = {"dates": [led["date"][i] for i in keep], "values": values,
                     "weights": led["weights"][keep]}
    return out


def _row_key(name):
    return (TABLE_ORDER.index(name), "") if name in TABLE_ORDER else (len(TABLE_ORDER), name)


def report(ledgers, out_dir, rf=0.0, t_year=T_YEAR, sharpe_window=63):
    """Write metrics.csv / metrics.json and SVG figures; return the table rows."""
    if not ledgers:
        raise ValueError("no ledgers to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = _restrict(ledgers)
    rows = []
    for name in sorted(data, key=_row_key):
        s = summarize(data[name]["values"], rf, t_year)
        rows.append({"strategy": name, "mdd": s.mdd, "arr": s.arr, "asr": s.asr,
                     "arr_growth_factor": s.growth_factor_annualized,
                     "final_value": s.final_value, "n_days": s.n_days})

    with (out_dir / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r["strategy"]] + [_fmt(r[c]) for c in COLUMNS[1:]])
    payload = {"columns": list(COLUMNS), "notes": COLUMN_NOTES, "t_year": t_year, "rf": rf,
               "rows": [{c: (r[c] if c == "strategy" else _json_num(r[c])) for c in COLUMNS}
                        for r in rows]}
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    curves, sharpe, gini = {}, {}, {}
    for name, d in data.items():
        x = np.arange(d["values"].size)
        curves[name] = (x, d["values"] / d["values"][0])
        sharpe[name] = (x[1:], rolling_sharpe(d["values"], sharpe_window, t_year))
        w = d["weights"]
        gini[name] = (x[1:], 1.0 - (w * w).sum(axis=1))
    line_plot(curves, out_dir / "cumulative_value.svg", "Cumulative value", "value / initial value")
    line_plot(sharpe, out_dir / "rolling_sharpe.svg",
              f"Rolling Sharpe ratio ({sharpe_window}-day window)", "annualized Sharpe")
    line_plot(gini, out_dir / "gini_bonus.svg", "Gini bonus of daily weights", "1 - sum w^2")
    return rows


def summary_json(ledger_entries, config_hash, rf=0.0, t_year=T_YEAR, extra=None):
    """Backtest summary record for one ledger (list of LedgerEntry)."""
    first = ledger_entries[0]
    v0 = first.value / ((1.0 - first.mu) * first.gross_return)
    values = np.array([v0] + [e.value for e in ledger_entries])
    s = summarize(values, rf, t_year)
    out = {"final_value": s.final_value, "arr": s.arr, "arr_growth_factor": s.growth_factor_annualized,
           "asr": None if math.isnan(s.asr) else s.asr, "mdd": s.mdd, "n_days": s.n_days,
           "config_hash": config_hash}
    out.update(extra or {})
    return out

