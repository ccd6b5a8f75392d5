"""Simulation oracle for GSR run lengths.

Randomness is counter-based: the n-th observation of replication i is a pure
function of (seed, i, n), so results do not depend on how replications are
split across workers or in which order they run.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import ndtri

from .metrics import ChartDesign
from .model import xi

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class CensoredRunError(RuntimeError):
    pass


class InsufficientRunsError(RuntimeError):
    pass


def _mix(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps modulo 2**64.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, replications: np.ndarray) -> np.ndarray:
    """Per-replication SplitMix64 starting states."""
    base = np.array([seed & _MASK64], dtype=np.uint64)
    key = _mix(base ^ _GOLDEN)
    return _mix(key + np.asarray(replications, dtype=np.uint64) * _GOLDEN)


def uniforms(keys: np.ndarray, step: int) -> np.ndarray:
    """Open-interval uniforms for observation ``step`` of each stream."""
    z = _mix(keys + np.uint64((step * int(_GOLDEN)) & _MASK64))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(keys: np.ndarray, step: int) -> np.ndarray:
    return ndtri(uniforms(keys, step))


@dataclass(frozen=True)
class SimulationPlan:
    design: ChartDesign
    change_point: Optional[int] = None   # None: never (pure in-control run)
    replications: int = 100_000
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.change_point is not None and self.change_point < 0:
            raise ValueError("change point must be nonnegative")

    @property
    def step_cap(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        d = self.design
        arl_scale = d.A / xi(d.mu) + 1.0
        if self.change_point is None:
            return int(math.ceil(50 * arl_scale))
        delay_scale = math.log1p(d.A) / (d.mu * d.mu / 2.0) + 10.0
        return int(self.change_point + math.ceil(50 * delay_scale))


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    se: float
    effective: int
    replications: int

    def z(self, reference: float) -> float:
        return (self.value - reference) / self.se if self.se > 0 else (0.0 if self.value == reference else math.inf)


@dataclass(frozen=True)
class DelayEstimate(EstimateWithError):
    change_point: int = 0
    survival: float = 1.0       # fraction of runs with T > k
    survival_se: float = 0.0


def _simulate(plan: SimulationPlan, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = plan.design
    mu, A = d.mu, d.A
    k = math.inf if plan.change_point is None else plan.change_point
    keys = stream_keys(plan.seed, indices)
    T = np.zeros(indices.size, dtype=np.int64)
    R = np.full(indices.size, float(d.r))
    active = np.arange(indices.size)
    for n in range(1, plan.step_cap + 1):
        if active.size == 0:
            break
        x = normals(keys[active], n)
        if n > k:
            x += mu
        R[active] = (1.0 + R[active]) * np.exp(mu * (x - mu / 2.0))
        crossed = R[active] >= A
        T[active[crossed]] = n
        active = active[~crossed]
    censored = np.zeros(indices.size, dtype=bool)
    censored[active] = True
    T[active] = plan.step_cap
    return T, censored


def run_lengths(plan: SimulationPlan, jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Run lengths of every replication, in replication order, plus a censoring mask."""
    indices = np.arange(plan.replications, dtype=np.uint64)
    if jobs <= 1:
        return _simulate(plan, indices)
    chunks = np.array_split(indices, jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(lambda c: _simulate(plan, c), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def simulate_run_length(plan: SimulationPlan, index: int,
                        observations: Optional[Iterable[float]] = None) -> tuple[int, bool]:
    """Run length of one replication, and whether it was censored at the step cap.

    ``observations`` replaces the random stream, for scripted scenarios.
    """
    if observations is None:
        T, censored = _simulate(plan, np.array([index], dtype=np.uint64))
        return int(T[0]), bool(censored[0])
    d = plan.design
    mu = d.mu
    R = float(d.r)
    for n, x in enumerate(observations, start=1):
        if n > plan.step_cap:
            break
        R = (1.0 + R) * math.exp(mu * (x - mu / 2.0))
        if R >= d.A:
            return n, False
    return plan.step_cap, True


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    total = int(values.sum())
    mean = total / n
    if n < 2:
        return mean, math.inf
    centered = values - mean
    var = float(np.dot(centered, centered)) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_arl(plan: SimulationPlan, jobs: int = 1) -> EstimateWithError:
    if plan.change_point is not None:
        raise ValueError("ARL to false alarm needs a plan with no change point")
    T, censored = run_lengths(plan, jobs)
    if censored.any():
        raise CensoredRunError(
            f"{int(censored.sum())} replications hit the step cap {plan.step_cap}; raise max_steps")
    mean, se = _mean_se(T)
    return EstimateWithError(mean, se, T.size, plan.replications)


def estimate_add_k(plan: SimulationPlan, jobs: int = 1, min_accepted: int = 100) -> DelayEstimate:
    """E_k[T - k | T > k] from the runs that have not alarmed by the change point k."""
    if plan.change_point is None:
        raise ValueError("detection delay needs a finite change point")
    k = plan.change_point
    T, censored = run_lengths(plan, jobs)
    accepted = T > k
    n_acc = int(accepted.sum())
    if n_acc < min_accepted:
        raise InsufficientRunsError(
            f"only {n_acc} of {plan.replications} runs survived to k={k}; raise replications")
    if (censored & accepted).any():
        warnings.warn(f"{int((censored & accepted).sum())} delayed runs censored at {plan.step_cap}")
    mean, se = _mean_se(T[accepted] - k)
    p = n_acc / plan.replications
    return DelayEstimate(mean, se, n_acc, plan.replications, change_point=k, survival=p,
                         survival_se=math.sqrt(p * (1.0 - p) / plan.replications))
