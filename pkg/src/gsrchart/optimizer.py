"""Optimal headstart and control limit: minimize SADD - STADD subject to ARL = gamma."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .metrics import ChartDesign, NumericsConfig, PerformanceReport, evaluate
from .model import ModelParams, xi
from .solver import build_discretization, solve_arl

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class CalibrationError(ValueError):
    pass


def arl_at(mu: float, r: float, A: float, numerics: NumericsConfig = NumericsConfig()) -> float:
    """ARL to false alarm of the chart with headstart r and limit A."""
    disc = build_discretization(A, numerics.resolution, numerics.panels)
    return solve_arl(disc, ModelParams(mu)).interpolate(r)


def threshold_seed(mu: float, r: float, gamma: float) -> float:
    return xi(mu) * (gamma + r)


def calibrate_threshold(mu: float, r: float, gamma: float, rel_tol: float = 1e-4,
                        numerics: NumericsConfig = NumericsConfig(),
                        max_expansions: int = 60) -> float:
    """Control limit A with ARL(r, A) = gamma to relative accuracy ``rel_tol``.

    ARL is strictly increasing in A, so the root is unique. The seed comes from
    ARL ~ A / xi - r; the bracket is grown geometrically around it and the root
    is polished with Brent's method well past ``rel_tol``, which keeps the
    returned A a smooth function of r.
    """
    if not gamma > 1:
        raise CalibrationError(f"gamma must exceed 1, got {gamma}")
    if r < 0:
        raise CalibrationError(f"headstart must be nonnegative, got {r}")
    if not 0 < rel_tol <= 1e-2:
        raise CalibrationError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")
    floor = r * (1.0 + 1e-9) if r > 0 else 1e-9

    def excess(A):
        return arl_at(mu, r, A, numerics) - gamma

    seed = max(threshold_seed(mu, r, gamma), floor * 1.01)
    f_seed = excess(seed)
    growth = 0.02
    if f_seed < 0:
        lo, f_lo = seed, f_seed
        for _ in range(max_expansions):
            hi = lo * (1.0 + growth)
            f_hi = excess(hi)
            if f_hi >= 0:
                break
            lo, f_lo = hi, f_hi
            growth *= 2.0
        else:
            raise CalibrationError(f"could not bracket ARL = {gamma} (mu={mu}, r={r})")
    else:
        hi, f_hi = seed, f_seed
        for _ in range(max_expansions):
            lo = max(hi / (1.0 + growth), floor)
            f_lo = excess(lo)
            if f_lo <= 0:
                break
            if lo == floor:
                raise CalibrationError(
                    f"ARL exceeds gamma={gamma} even with A just above r={r}; lower the headstart")
            hi, f_hi = lo, f_lo
            growth *= 2.0
        else:
            raise CalibrationError(f"could not bracket ARL = {gamma} (mu={mu}, r={r})")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    A = brentq(excess, lo, hi, xtol=1e-13 * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
    achieved = excess(A) + gamma
    if abs(achieved - gamma) / gamma > rel_tol:
        raise CalibrationError(f"calibration missed: ARL={achieved} for gamma={gamma}")
    return A


@dataclass(frozen=True)
class SearchConfig:
    numerics: NumericsConfig = NumericsConfig()
    rel_tol: float = 1e-4         # calibration tolerance on ARL
    grid_points: int = 33         # r = 0 plus a geometric grid
    r_hi: Optional[float] = None  # None: gamma * xi / 2
    r_lo_fraction: float = 1e-3   # smallest positive grid point, as a fraction of r_hi
    max_extension: int = 24       # extra grid points allowed past r_hi while the minimum sits on the edge
    r_tol: float = 1e-3           # golden-section stop, relative to r
    escalations: int = 2
    escalation_tol: float = 1e-4  # relative change of (r*, SADD, STADD) that triggers escalation


@dataclass(frozen=True)
class DesignResult:
    mu: float
    gamma: float
    r_star: float
    a_star: float
    sadd: float
    lower_bound: float
    gap: float
    arl_achieved: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def row(self) -> dict:
        return {
            "gamma": self.gamma, "mu": self.mu, "r_star": self.r_star, "a_star": self.a_star,
            "sadd": self.sadd, "lower_bound": self.lower_bound,
            "arl_achieved": self.arl_achieved, "gap": self.gap,
        }


@dataclass(frozen=True)
class Probe:
    r: float
    A: float
    report: PerformanceReport

    @property
    def gap(self) -> float:
        return self.report.gap


def headstart_grid(mu: float, gamma: float, config: SearchConfig = SearchConfig()) -> np.ndarray:
    r_hi = config.r_hi if config.r_hi is not None else 0.5 * gamma * xi(mu)
    n = config.grid_points - 1
    return np.concatenate([[0.0], np.geomspace(r_hi * config.r_lo_fraction, r_hi, n)])


class ConstrainedCurve:
    """Designs along the ARL = gamma contour, memoized by headstart."""

    def __init__(self, mu: float, gamma: float, config: SearchConfig = SearchConfig()):
        self.mu = abs(mu)
        self.gamma = gamma
        self.config = config
        self._cache: dict[float, Probe] = {}

    def __call__(self, r: float) -> Probe:
        r = float(r)
        if r not in self._cache:
            A = calibrate_threshold(self.mu, r, self.gamma, self.config.rel_tol, self.config.numerics)
            report = evaluate(ChartDesign(r=r, A=A, mu=self.mu), self.config.numerics)
            self._cache[r] = Probe(r, A, report)
        return self._cache[r]

    @property
    def evaluations(self) -> int:
        return len(self._cache)

    def scan(self, grid) -> list[Probe]:
        return [self(r) for r in grid]


def golden_section(f: Callable[[float], float], a: float, b: float, tol: Callable[[float], float],
                   max_iter: int = 200) -> float:
    """Minimize f on [a, b] by golden-section search; ties go to the smaller argument."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol(0.5 * (a + b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def _local_minima(values: np.ndarray) -> list[int]:
    n = values.size
    out = []
    for i in range(n):
        left = values[i - 1] if i > 0 else math.inf
        right = values[i + 1] if i < n - 1 else math.inf
        if values[i] <= left and values[i] < right:
            out.append(i)
    return out


def refine(curve: ConstrainedCurve, lo: float, hi: float, anchor: Optional[float] = None) -> Probe:
    """Golden-section minimum of SADD - STADD on [lo, hi]; never worse than ``anchor``."""
    rtol = curve.config.r_tol
    r = golden_section(lambda r: curve(r).gap, lo, hi, tol=lambda m: max(rtol * m, 1e-6))
    found = [curve(r)] if anchor is None else [curve(r), curve(anchor)]
    return min(found, key=lambda p: (p.gap, p.r))


def optimize_design(mu: float, gamma: float, config: SearchConfig = SearchConfig()) -> DesignResult:
    """Headstart and limit minimizing SADD - STADD along ARL = gamma."""
    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    ModelParams(mu)
    mu = abs(mu)
    grid = headstart_grid(mu, gamma, config)
    curve = ConstrainedCurve(mu, gamma, config)
    probes = curve.scan(grid)
    ratio = grid[-1] / grid[-2]
    extended = 0
    # Faint shifts can put the optimum past the default range: keep stepping out
    # geometrically until the scan minimum is no longer the last point.
    while extended < config.max_extension and int(np.argmin([p.gap for p in probes])) == len(probes) - 1:
        try:
            probes.append(curve(grid[-1] * ratio))
        except CalibrationError:
            break
        grid = np.append(grid, probes[-1].r)
        extended += 1
    if extended:
        log.info("extended the headstart grid by %d points to r=%g", extended, grid[-1])
    gaps = np.array([p.gap for p in probes])
    minima = _local_minima(gaps)
    multimodal = len(minima) > 1
    if multimodal:
        log.info("gap(r) has %d local minima on the scan grid (mu=%g, gamma=%g)", len(minima), mu, gamma)
    candidates = []
    for i in minima:
        bracket = (grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)])
        candidates.append((refine(curve, *bracket, anchor=grid[i]), bracket))
    best, bracket = min(candidates, key=lambda c: (c[0].gap, c[0].r))
    evaluations = curve.evaluations
    base_curve = curve

    resolution = config.numerics.resolution
    escalated = 0
    for _ in range(config.escalations):
        finer_cfg = replace(config, numerics=replace(config.numerics, resolution=2 * resolution))
        finer = ConstrainedCurve(mu, gamma, finer_cfg)
        check = finer(best.r)
        drift = max(abs(check.report.sadd - best.report.sadd) / best.report.sadd,
                    abs(check.report.stadd - best.report.stadd) / best.report.stadd,
                    abs(check.A - best.A) / best.A)
        if drift <= config.escalation_tol:
            break
        log.info("escalating resolution %d -> %d (drift %.2e)", resolution, 2 * resolution, drift)
        resolution *= 2
        escalated += 1
        curve = finer
        best = refine(curve, *bracket, anchor=best.r)
        evaluations += curve.evaluations

    rep = best.report
    return DesignResult(
        mu=mu, gamma=gamma, r_star=best.r, a_star=best.A, sadd=rep.sadd,
        lower_bound=rep.lower_bound, gap=rep.gap, arl_achieved=rep.arl,
        diagnostics={
            "evaluations": evaluations, "resolution": resolution, "escalations": escalated,
            "multimodal": multimodal, "extended": extended, "sadd_argmax": rep.sadd_argmax,
            "bracket": bracket, "probes": probes, "constrained_curve": base_curve,
        },
    )
