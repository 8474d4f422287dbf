"""OHLC CSV ingestion, date alignment and log-return state windows."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MarketDataError(ValueError):
    """Base class for data ingestion and alignment problems."""


class ParseError(MarketDataError):
    pass


class ValidationError(MarketDataError):
    pass


class AlignmentError(MarketDataError):
    pass


class InsufficientHistoryError(MarketDataError):
    pass


@dataclass(frozen=True)
class OhlcBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise ValidationError(f"{self.date}: prices must be positive and finite, got {prices}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValidationError(f"{self.date}: inconsistent OHLC {prices}")


@dataclass(frozen=True)
class AssetSeries:
    symbol: str
    bars: tuple

    def __post_init__(self):
        for a, b in zip(self.bars, self.bars[1:]):
            if b.date <= a.date:
                raise ValidationError(f"{self.symbol}: dates not strictly increasing at {b.date}")


_REQUIRED = ("Date", "Open", "High", "Low", "Close")


def _parse_price(text, row, column):
    text = text.strip()
    if text == "" or text.lower() in ("null", "nan"):
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"row {row}: column {column}: not a number: {text!r}") from None


def load_csv(path, symbol=None):
    """Read a Yahoo-style ``Date,Open,High,Low,Close[,...]`` file.

    A row with any missing price becomes a flat bar at the previous close.
    """
    path = Path(path)
    symbol = symbol or path.stem
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in _REQUIRED if c not in header]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                date = dt.date.fromisoformat(rec["Date"].strip())
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: bad date {rec['Date']!r}") from None
            prices = [_parse_price(rec[c], lineno, c) for c in _REQUIRED[1:]]
            rows.append((lineno, date, prices))
    rows.sort(key=lambda r: r[1])
    bars = []
    for (lineno, date, prices) in rows:
        if bars and date == bars[-1].date:
            raise ValidationError(f"{path}: row {lineno}: duplicate date {date}")
        if any(p is None for p in prices):
            if not bars:
                raise ValidationError(f"{path}: row {lineno}: missing price with no previous bar")
            c = bars[-1].close
            prices = [c, c, c, c]
        try:
            bars.append(OhlcBar(date, *prices))
        except ValidationError as exc:
            raise ValidationError(f"{path}: row {lineno}: {exc}") from None
    return AssetSeries(symbol, tuple(bars))


def write_csv(series, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_REQUIRED)
        for b in series.bars:
            w.writerow([b.date.isoformat()] + [repr(float(x)) for x in (b.open, b.high, b.low, b.close)])


@dataclass(frozen=True, eq=False)
class MarketFrame:
    """Aligned price grid: arrays are (m, T_all), one row per symbol."""

    symbols: tuple
    dates: tuple
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray

    def __post_init__(self):
        for a in (self.open, self.high, self.low, self.close):
            a.setflags(write=False)

    @property
    def m(self):
        return len(self.symbols)

    @property
    def n_days(self):
        return len(self.dates)

    def bar(self, asset, day):
        return OhlcBar(self.dates[day], float(self.open[asset, day]), float(self.high[asset, day]),
                       float(self.low[asset, day]), float(self.close[asset, day]))

    def series(self, asset):
        return AssetSeries(self.symbols[asset], tuple(self.bar(asset, d) for d in range(self.n_days)))

    @classmethod
    def from_arrays(cls, symbols, dates, open, high, low, close):
        arrays = [np.array(a, dtype=np.float64, ndmin=2) for a in (open, high, low, close)]
        shape = (len(symbols), len(dates))
        for a in arrays:
            if a.shape != shape:
                raise ValidationError(f"price array shape {a.shape} != {shape}")
        o, h, lo, c = arrays
        if not (np.all(np.isfinite(arrays)) and np.all(np.array(arrays) > 0)):
            raise ValidationError("prices must be positive and finite")
        if np.any(lo > np.minimum(o, c)) or np.any(h < np.maximum(o, c)):
            raise ValidationError("inconsistent OHLC values")
        return cls(tuple(symbols), tuple(dates), o, h, lo, c)

    def slice(self, start, end):
        return MarketFrame(self.symbols, self.dates[start:end], self.open[:, start:end],
                           self.high[:, start:end], self.low[:, start:end], self.close[:, start:end])


def align(series):
    """Join series on the intersection of their dates."""
    if not series:
        raise AlignmentError("no series to align")
    for s in series:
        if not s.bars:
            raise AlignmentError(f"{s.symbol}: empty series")
    common = set(b.date for b in series[0].bars)
    for s in series[1:]:
        common &= {b.date for b in s.bars}
    if not common:
        raise AlignmentError("date intersection is empty")
    dates = tuple(sorted(common))
    grids = {k: np.empty((len(series), len(dates))) for k in ("open", "high", "low", "close")}
    for i, s in enumerate(series):
        by_date = {b.date: b for b in s.bars}
        for j, d in enumerate(dates):
            b = by_date[d]
            grids["open"][i, j] = b.open
            grids["high"][i, j] = b.high
            grids["low"][i, j] = b.low
            grids["close"][i, j] = b.close
    return MarketFrame(tuple(s.symbol for s in series), dates, **grids)


def log_return_matrix(frame_or_prices, r=0.0):
    """(m+1) x (T_all-1) log returns; row 0 is the cash row ln(1+r).

    Accepts a MarketFrame (close prices) or an explicit (m, T_all) price array,
    e.g. execution prices.  Column k holds ln(p[k+1] / p[k]).
    """
    if r <= -1:
        raise ValueError(f"risk-free rate must exceed -1, got {r}")
    prices = frame_or_prices.close if isinstance(frame_or_prices, MarketFrame) else np.asarray(
        frame_or_prices, dtype=np.float64)
    rets = np.log(prices[:, 1:] / prices[:, :-1])
    cash = np.full((1, rets.shape[1]), math.log1p(r))
    return np.vstack([cash, rets])


@dataclass(frozen=True, eq=False)
class StateTensor:
    values: np.ndarray
    t: int
    T: int


def window_state(returns, t, T):
    """Columns t-T+1 .. t of the return matrix (newest last)."""
    if T < 1:
        raise ValueError(f"window length must be >= 1, got {T}")
    if t < T:
        raise InsufficientHistoryError(f"day index {t} < window {T}")
    if t >= returns.shape[1]:
        raise InsufficientHistoryError(f"day index {t} beyond return matrix width {returns.shape[1]}")
    values = np.array(returns[:, t - T + 1:t + 1])
    values.setflags(write=False)
    return StateTensor(values, t, T)


FRAME_FORMAT = "augddpg-frame"
FRAME_VERSION = 1


def _frame_payload(frame):
    return {
        "format": FRAME_FORMAT,
        "version": FRAME_VERSION,
        "symbols": list(frame.symbols),
        "dates": [d.isoformat() for d in frame.dates],
        "open": frame.open.tolist(),
        "high": frame.high.tolist(),
        "low": frame.low.tolist(),
        "close": frame.close.tolist(),
    }


def frame_hash(frame):
    blob = json.dumps(_frame_payload(frame), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_frame(frame, path):
    """Write the aligned frame as JSON with its content hash; returns the hash."""
    payload = _frame_payload(frame)
    digest = frame_hash(frame)
    payload["content_hash"] = digest
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return digest


def load_frame(path):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MarketDataError(f"cannot read frame cache {path}: {exc}") from None
    if payload.get("format") != FRAME_FORMAT or payload.get("version") != FRAME_VERSION:
        raise MarketDataError(f"{path}: not a frame cache (version {FRAME_VERSION})")
    frame = MarketFrame.from_arrays(
        payload["symbols"], tuple(dt.date.fromisoformat(d) for d in payload["dates"]),
        payload["open"], payload["high"], payload["low"], payload["close"])
    if frame_hash(frame) != payload.get("content_hash"):
        raise ValidationError(f"{path}: content hash mismatch")
    return frame
