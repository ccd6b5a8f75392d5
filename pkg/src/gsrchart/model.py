"""Gaussian Shiryaev-Roberts primitives: score, one-step transition law, overshoot constant."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Regime(enum.Enum):
    PRE_CHANGE = "pre"    # X ~ N(0, 1)
    POST_CHANGE = "post"  # X ~ N(mu, 1)

    @property
    def sign(self) -> float:
        return 1.0 if self is Regime.PRE_CHANGE else -1.0


@dataclass(frozen=True)
class ModelParams:
    """Post-change mean shift, in units of the process standard deviation.

    The sign of the shift does not matter for the chart, so only |mu| is kept.
    """

    mu: float

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu) or mu == 0.0:
            raise ValueError(f"mean shift must be finite and nonzero, got {self.mu!r}")
        object.__setattr__(self, "mu", abs(mu))


def _params(params) -> ModelParams:
    return params if isinstance(params, ModelParams) else ModelParams(params)


def score(x, params):
    """Log-likelihood ratio of one observation: mu * (x - mu / 2)."""
    mu = _params(params).mu
    return mu * (x - mu / 2.0)


def _z(x, y, mu, regime):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise ValueError("transition target y must be positive")
    if np.any(x < 0.0):
        raise ValueError("transition source x must be nonnegative")
    return np.log(y / (1.0 + x)) / mu + regime.sign * mu / 2.0


def kernel_cdf(x, y, params, regime: Regime):
    """P(R_n <= y | R_{n-1} = x) under the given regime. Broadcasts over x and y."""
    mu = _params(params).mu
    out = ndtr(_z(x, y, mu, regime))
    return float(out) if np.ndim(out) == 0 else out


def kernel_density(x, y, params, regime: Regime):
    """Density in y of the one-step transition from x. Broadcasts over x and y."""
    mu = _params(params).mu
    z = _z(x, y, mu, regime)
    out = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / (mu * np.asarray(y, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class XiResult:
    value: float
    terms: int        # number of series terms summed explicitly
    tail: float       # estimated remainder added after truncation


def xi_series(params, series_tol: float = 1e-12) -> XiResult:
    """Limiting average exponential overshoot for the Gaussian model, with truncation info.

    xi = (2 / mu^2) exp(-2 sum_{m>=1} Phi(-(mu/2) sqrt(m)) / m)

    Terms are summed in blocks until one falls below ``series_tol * 1e-2``; the
    remainder is bounded with the Gaussian tail Phi(-c sqrt(m)) <= exp(-c^2 m / 2) / 2,
    which makes it geometric with ratio exp(-c^2 / 2).
    """
    if series_tol <= 0:
        raise ValueError("series_tol must be positive")
    mu = _params(params).mu
    c = mu / 2.0
    cutoff = series_tol * 1e-2
    total = 0.0
    start = 1
    block = 4096
    while True:
        m = np.arange(start, start + block, dtype=float)
        terms = ndtr(-c * np.sqrt(m)) / m
        below = np.nonzero(terms < cutoff)[0]
        if below.size:
            stop = below[0]
            total += math.fsum(terms[: stop + 1])
            last_m = int(start + stop)
            break
        total += math.fsum(terms)
        start += block
        block *= 2
    q = math.exp(-c * c / 2.0)
    tail = 0.5 * math.exp(-c * c * (last_m + 1) / 2.0) / ((last_m + 1) * (1.0 - q))
    # The bound above overestimates the true remainder; the actual terms are
    # smaller, so use the geometric continuation of the last term when tighter.
    tail = min(tail, float(terms[stop]) * q / (1.0 - q))
    total += tail
    return XiResult(value=2.0 / (mu * mu) * math.exp(-2.0 * total), terms=last_m, tail=tail)


def xi(params, series_tol: float = 1e-12) -> float:
    return xi_series(params, series_tol).value
