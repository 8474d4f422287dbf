"""Quantum price levels from an anharmonic-oscillator fit to the return density.

Pipeline per asset and day: histogram of trailing log returns -> least-squares
fit of the quartic potential to -ln(density) -> lowest eigenvalues of the
discretized stationary operator -> price ladder around the previous close.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .market import InsufficientHistoryError

MIN_OBSERVATIONS = 32
MIN_BINS = 8
MIN_GRID_POINTS = 128
EPS_FLOOR = 0.01


class QplError(ValueError):
    pass


class FitError(QplError):
    pass


class DomainError(QplError):
    pass


class MappingError(QplError):
    pass


@dataclass(frozen=True, eq=False)
class ReturnDensity:
    grid: np.ndarray
    mass: np.ndarray

    @property
    def mean(self):
        return float(self.grid @ self.mass)

    @property
    def std(self):
        return math.sqrt(max(float(((self.grid - self.mean) ** 2) @ self.mass), 0.0))


@dataclass(frozen=True)
class PotentialParams:
    """V(r) = (gamma*eta*delta/2) r^2 - (gamma*eta*v/4) r^4 with kinetic scale hbar/(2m)."""

    hbar: float = 1.0
    mass_m: float = 1.0
    gamma_q: float = 1.0
    eta_q: float = 1.0
    delta_q: float = 1.0
    v_q: float = 0.0

    def __post_init__(self):
        if self.hbar <= 0 or self.mass_m <= 0:
            raise ValueError("hbar and mass_m must be positive")
        if self.quadratic <= 0:
            raise ValueError(f"quadratic coefficient must be positive, got {self.quadratic}")

    @property
    def quadratic(self):
        return self.gamma_q * self.eta_q * self.delta_q / 2.0

    @property
    def quartic(self):
        """Coefficient of -r^4."""
        return self.gamma_q * self.eta_q * self.v_q / 4.0

    def potential(self, r):
        r = np.asarray(r, dtype=np.float64)
        return self.quadratic * r ** 2 - self.quartic * r ** 4


@dataclass(frozen=True, eq=False)
class EnergyLevels:
    energies: np.ndarray
    vectors: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class QplLadder:
    anchor: float
    levels_up: np.ndarray
    levels_down: np.ndarray

    @property
    def K(self):
        return len(self.levels_up)

    @property
    def m1(self):
        return float(self.levels_down[0])

    @property
    def p1(self):
        return float(self.levels_up[0])


def estimate_density(returns, bins=None):
    """Normalized histogram over [min, max] of the observations."""
    x = np.asarray(returns, dtype=np.float64)
    if x.size < MIN_OBSERVATIONS:
        raise InsufficientHistoryError(
            f"need at least {MIN_OBSERVATIONS} returns for a density, got {x.size}")
    if bins is None:
        bins = max(MIN_BINS, math.ceil(math.sqrt(x.size)))
    if bins < MIN_BINS:
        raise ValueError(f"bins must be >= {MIN_BINS}")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        # degenerate sample: one cell holds everything
        edges = np.linspace(lo - 0.5, hi + 0.5, bins + 1)
        counts = np.zeros(bins)
        counts[bins // 2] = x.size
    else:
        counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    if hi == lo:
        centers = centers - centers[bins // 2] + lo
    return ReturnDensity(centers, counts / counts.sum())


def fit_potential(density, defaults=PotentialParams()):
    """Least-squares fit of -ln(mass) ~ c + a r^2 - b r^4 over occupied cells.

    Only delta_q and v_q are fitted; the other constants come from ``defaults``.
    Raises FitError when the quadratic term is not clearly positive.
    """
    keep = density.mass > 0
    r = density.grid[keep]
    if r.size < 3:
        raise FitError(f"only {r.size} occupied cells; cannot fit a quartic potential")
    scale = float(np.abs(r).max())
    if scale == 0:
        raise FitError("density concentrated at zero return")
    u = r / scale
    X = np.column_stack([np.ones_like(u), u ** 2, u ** 4])
    y = -np.log(density.mass[keep])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    # quadratic contribution across the occupied range, in -ln(mass) units
    if coef[1] <= 1e-8 * max(1.0, float(np.ptp(y))):
        raise FitError(f"non-positive quadratic coefficient {coef[1] / scale ** 2:.3g}")
    quad = coef[1] / scale ** 2
    quart = -coef[2] / scale ** 4
    ge = defaults.gamma_q * defaults.eta_q
    return replace(defaults, delta_q=2.0 * quad / ge, v_q=4.0 * quart / ge)


def qfse_operator(params, R, grid_points):
    """Diagonal, off-diagonal and grid of the discretized operator on (-R, R).

    Kinetic term -(hbar/2m) d^2/dr^2 by central differences, Dirichlet walls.
    """
    r = np.linspace(-R, R, grid_points + 2)[1:-1]
    h = r[1] - r[0]
    k = params.hbar / (2.0 * params.mass_m) / h ** 2
    diag = 2.0 * k + params.potential(r)
    off = np.full(grid_points - 1, -k)
    return diag, off, r


def solve_qfse(params, R, grid_points=2048, K=1, vectors=False):
    """Lowest K+1 eigenvalues (ascending) of the stationary operator on [-R, R]."""
    if grid_points < MIN_GRID_POINTS:
        raise ValueError(f"grid_points must be >= {MIN_GRID_POINTS}")
    if K < 1:
        raise ValueError("K must be >= 1")
    if not R > 0:
        raise DomainError(f"half-width must be positive, got {R}")
    if params.potential(R) < params.potential(0.0):
        raise DomainError(f"potential not confining on [-{R}, {R}]: quartic term dominates")
    diag, off, _ = qfse_operator(params, R, grid_points)
    if vectors:
        w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, K))
        return EnergyLevels(w, v)
    w = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, K))
    return EnergyLevels(w)


def qpl_ladder(close, energies, K=1, scale=1.0):
    """Map energies to prices via the relative gaps (E_n - E_0)/E_0.

    ``scale`` multiplies every gap; 1.0 gives the bare mapping.
    """
    E = np.asarray(getattr(energies, "energies", energies), dtype=np.float64)
    if E.size < K + 1:
        raise MappingError(f"need {K + 1} energies, got {E.size}")
    if close <= 0:
        raise MappingError(f"anchor price must be positive, got {close}")
    if E[0] <= 0:
        raise MappingError(f"ground energy must be positive, got {E[0]}")
    lam = scale * (E[1:K + 1] - E[0]) / E[0]
    up = close * (1.0 + lam)
    down = close * np.maximum(1.0 - lam, EPS_FLOOR)
    return QplLadder(float(close), up, down)


def daily_qpl(frame, asset, t, lookback=504, K=1, bins=None, grid_points=512,
              defaults=PotentialParams(), vol_scaled=True):
    """Ladder for day ``t`` from log returns of days t-lookback .. t-1.

    Anchored at close[t-1]; bars at index >= t are never read.  Falls back to
    ``defaults`` when the fit fails or the fitted potential does not confine.
    With ``vol_scaled`` the relative gaps are multiplied by the return std so
    levels sit at a volatility-sized distance from the anchor.
    """
    if lookback < MIN_OBSERVATIONS:
        raise InsufficientHistoryError(f"lookback must be >= {MIN_OBSERVATIONS}, got {lookback}")
    if t - lookback < 1:
        raise InsufficientHistoryError(
            f"day {t} has fewer than {lookback} prior returns")
    closes = frame.close[asset, t - lookback - 1:t]
    returns = np.log(closes[1:] / closes[:-1])
    ladder, _ = _ladder_from_returns(returns, float(closes[-1]), K, bins, grid_points,
                                     defaults, vol_scaled)
    return ladder


def _ladder_from_returns(returns, anchor, K, bins, grid_points, defaults, vol_scaled):
    density = estimate_density(returns, bins)
    sigma = density.std
    R = 3.0 * sigma if sigma > 0 else 1.0
    try:
        params = fit_potential(density, defaults)
        energies = solve_qfse(params, R, grid_points, K)
    except (FitError, DomainError, ValueError):
        params = defaults
        energies = solve_qfse(params, R, grid_points, K)
    scale = sigma if vol_scaled else 1.0
    return qpl_ladder(anchor, energies, K, scale), params


def qpl_table(frame, days, lookback=504, K=1, **kwargs):
    """Ladders for every asset over ``days``: arrays (m, len(days), K) down/up."""
    days = list(days)
    down = np.empty((frame.m, len(days), K))
    up = np.empty((frame.m, len(days), K))
    for i in range(frame.m):
        for j, d in enumerate(days):
            lad = daily_qpl(frame, i, d, lookback, K, **kwargs)
            down[i, j] = lad.levels_down
            up[i, j] = lad.levels_up
    return down, up
