"""Performance indices of one GSR design: ARL, ADD_k profile, SADD, IADD, RIADD, STADD."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .model import ModelParams, Regime
from .solver import (DEFAULT_PANELS, DEFAULT_RESOLUTION, DelayProfile, NumericalFailure,
                     add_sequence, build_discretization, build_operator, solve_arl,
                     solve_delay, solve_iadd)


@dataclass(frozen=True)
class ChartDesign:
    r: float
    A: float
    mu: float

    def __post_init__(self):
        if not (self.A > 0 and math.isfinite(self.A)):
            raise ValueError(f"control limit must be positive, got {self.A}")
        if not 0 <= self.r < self.A:
            raise ValueError(f"headstart must satisfy 0 <= r < A, got r={self.r}, A={self.A}")
        ModelParams(self.mu)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.mu)


@dataclass(frozen=True)
class NumericsConfig:
    resolution: int = DEFAULT_RESOLUTION
    panels: int = DEFAULT_PANELS
    stall_tol: float = 1e-7
    stall_window: int = 10
    k_max: Optional[int] = None  # None: 20 x ARL, at least 1000


@dataclass(frozen=True)
class PerformanceReport:
    design: ChartDesign
    arl: float
    add0: float
    sadd: float
    sadd_argmax: Optional[int]   # None when the steady-state limit is the maximum
    iadd: float
    riadd: float
    stadd: float
    lower_bound: float
    profile: DelayProfile = field(repr=False, compare=False)
    resolution: int = DEFAULT_RESOLUTION

    @property
    def gap(self) -> float:
        return self.sadd - self.lower_bound

    def to_dict(self, profile: bool = True) -> dict:
        out = {
            "mu": self.design.mu,
            "r": self.design.r,
            "A": self.design.A,
            "arl": self.arl,
            "add0": self.add0,
            "sadd": self.sadd,
            "sadd_argmax": "limit" if self.sadd_argmax is None else self.sadd_argmax,
            "iadd": self.iadd,
            "riadd": self.riadd,
            "stadd": self.stadd,
            "lower_bound": self.lower_bound,
            "steady_state_add": self.profile.steady_state_add,
            "converged": self.profile.converged,
            "resolution": self.resolution,
        }
        if profile:
            out["profile"] = {
                "k": self.profile.k.tolist(),
                "add_k": self.profile.add.tolist(),
                "survival_k": self.profile.survival.tolist(),
            }
        return out


def stadd(r: float, add0: float, iadd: float, arl: float) -> float:
    return (r * add0 + iadd) / (arl + r)


def sadd_of(profile: DelayProfile) -> tuple[float, Optional[int]]:
    """(max_k ADD_k, argmax). The argmax is None when only the steady-state limit attains it."""
    if not (profile.converged or profile.capped):
        raise ValueError("profile neither converged nor hard-capped; SADD is undefined")
    return profile.sadd, profile.sadd_argmax


def evaluate(design: ChartDesign, numerics: NumericsConfig = NumericsConfig()) -> PerformanceReport:
    params = design.params
    disc = build_discretization(design.A, numerics.resolution, numerics.panels)
    k_pre = build_operator(disc, params, Regime.PRE_CHANGE)
    k_post = build_operator(disc, params, Regime.POST_CHANGE)
    try:
        ell = solve_arl(disc, params, k_pre)
        delay = solve_delay(disc, params, k_post)
        integral = solve_iadd(disc, params, delay, k_pre)
    except NumericalFailure as exc:
        exc.diagnostics.update(r=design.r, A=design.A, mu=design.mu)
        raise

    r = design.r
    arl = ell(r)
    add0 = delay(r)
    iadd = integral(r)
    k_max = numerics.k_max or max(1000, 20 * math.ceil(arl))
    profile = add_sequence(disc, params, r, delay, k_max=k_max, stall_tol=numerics.stall_tol,
                           stall_window=numerics.stall_window, operator=k_pre)
    sadd, argmax = sadd_of(profile)
    lower = stadd(r, add0, iadd, arl)
    return PerformanceReport(
        design=design, arl=arl, add0=add0, sadd=sadd, sadd_argmax=argmax, iadd=iadd,
        riadd=iadd / arl, stadd=lower, lower_bound=lower, profile=profile,
        resolution=disc.size,
    )
