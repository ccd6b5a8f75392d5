"""Nystrom solution of the GSR chart's renewal equations on the continuation region [0, A).

Every quantity of interest is the solution of a second-kind Fredholm equation

    u(x) = f(x) + int_0^A K(x, y) u(y) dy

with K the one-step transition density of the SR statistic (pre- or post-change).
The integral is replaced by a composite Gauss-Legendre rule whose panels are
graded geometrically in 1 + y, which keeps the kernel (log-normal in y, with
log-scale |mu|) resolved uniformly across the whole range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dgecon

from .model import ModelParams, Regime, kernel_density

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 768
DEFAULT_PANELS = 12
MAX_CONDITION = 1e12


class NumericalFailure(RuntimeError):
    """The discretized equation could not be solved reliably."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class Discretization:
    threshold: float
    nodes: np.ndarray
    weights: np.ndarray
    panel_edges: np.ndarray
    panel_orders: tuple

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def panel_count(self) -> int:
        return len(self.panel_orders)


def build_discretization(A: float, resolution: int = DEFAULT_RESOLUTION,
                         panels: int = DEFAULT_PANELS) -> Discretization:
    """Composite Gauss-Legendre nodes on [0, A) with ``resolution`` nodes in total.

    Panel edges are (1 + A)**(i / panels) - 1, so panels widen geometrically
    away from 0. Nodes are split as evenly as possible between panels.
    """
    if not (A > 0 and math.isfinite(A)):
        raise ValueError(f"threshold must be positive and finite, got {A!r}")
    if resolution < 8:
        raise ValueError(f"resolution must be at least 8, got {resolution}")
    panels = max(1, min(int(panels), resolution // 4))
    base, extra = divmod(int(resolution), panels)
    orders = tuple(base + (1 if i < extra else 0) for i in range(panels))

    edges = np.expm1(np.linspace(0.0, math.log1p(A), panels + 1))
    edges[0], edges[-1] = 0.0, A

    nodes, weights = [], []
    rules = {}
    for lo, hi, order in zip(edges[:-1], edges[1:], orders):
        if order not in rules:
            rules[order] = np.polynomial.legendre.leggauss(order)
        t, w = rules[order]
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (t + 1.0))
        weights.append(half * w)
    return Discretization(
        threshold=float(A),
        nodes=np.concatenate(nodes),
        weights=np.concatenate(weights),
        panel_edges=edges,
        panel_orders=orders,
    )


class KernelMatrix:
    """Nystrom matrix entries[i, j] = K(node_i, node_j) * weight_j for one regime.

    Row i sums to the probability of staying below A in one step from node_i,
    up to quadrature error. The LU factorization of I - entries is computed on
    first use and cached.
    """

    def __init__(self, disc: Discretization, params: ModelParams, regime: Regime):
        self.disc = disc
        self.params = params
        self.regime = regime
        y = disc.nodes
        self.entries = kernel_density(y[:, None], y[None, :], params, regime) * disc.weights[None, :]
        self.entries.setflags(write=False)

    def row(self, x: float) -> np.ndarray:
        """Quadrature-weighted kernel row for an arbitrary source state x."""
        return kernel_density(x, self.disc.nodes, self.params, self.regime) * self.disc.weights

    def rows(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return kernel_density(x[:, None], self.disc.nodes[None, :], self.params, self.regime) * self.disc.weights

    @cached_property
    def lu(self):
        system = np.eye(self.disc.size) - self.entries
        anorm = np.abs(system).sum(axis=0).max()
        lu, piv = scipy.linalg.lu_factor(system, check_finite=False)
        rcond, info = dgecon(lu, anorm, norm="1")
        if info != 0 or not rcond > 0 or 1.0 / rcond > MAX_CONDITION:
            raise NumericalFailure(
                f"I - K ({self.regime.value}-change) is singular or ill-conditioned",
                condition_estimate=(math.inf if rcond <= 0 else 1.0 / rcond),
                threshold=self.disc.threshold, resolution=self.disc.size, mu=self.params.mu,
            )
        self.condition_estimate = 1.0 / rcond
        return lu, piv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)


def build_operator(disc: Discretization, params, regime: Regime) -> KernelMatrix:
    if not isinstance(params, ModelParams):
        params = ModelParams(params)
    return KernelMatrix(disc, params, regime)


@dataclass(eq=False)
class NodeFunction:
    """Solution of u = f + K u at the nodes, extendable to any x >= 0 by Nystrom interpolation."""

    values: np.ndarray
    operator: KernelMatrix
    forcing: Callable[[np.ndarray], np.ndarray]

    @property
    def disc(self) -> Discretization:
        return self.operator.disc

    def interpolate(self, x):
        """Nystrom extension f(x) + sum_j K(x, y_j) w_j u_j, without node short-circuit."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = self.forcing(x_arr) + self.operator.rows(x_arr) @ self.values
        return float(out[0]) if np.ndim(x) == 0 else out

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.asarray(self.interpolate(x_arr), dtype=float)
        idx = np.searchsorted(self.disc.nodes, x_arr)
        idx = np.clip(idx, 0, self.disc.size - 1)
        hit = self.disc.nodes[idx] == x_arr
        out[hit] = self.values[idx[hit]]
        return float(out[0]) if np.ndim(x) == 0 else out

    def residual(self) -> float:
        """Sup-norm residual of the discrete equation at the nodes."""
        y = self.disc.nodes
        return float(np.max(np.abs(self.values - self.forcing(y) - self.operator.entries @ self.values)))


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _solve(operator: KernelMatrix, forcing, what: str) -> NodeFunction:
    rhs = forcing(operator.disc.nodes)
    try:
        values = operator.solve(rhs)
    except NumericalFailure as exc:
        exc.diagnostics["equation"] = what
        raise
    if not np.all(np.isfinite(values)):
        raise NumericalFailure(f"non-finite solution of the {what} equation", equation=what)
    return NodeFunction(values=values, operator=operator, forcing=forcing)


def solve_arl(disc: Discretization, params, operator: Optional[KernelMatrix] = None) -> NodeFunction:
    """ARL to false alarm as a function of the starting state: l = 1 + K_pre l."""
    operator = operator or build_operator(disc, params, Regime.PRE_CHANGE)
    return _solve(operator, _ones, "ARL")


def solve_delay(disc: Discretization, params, operator: Optional[KernelMatrix] = None) -> NodeFunction:
    """Detection delay from a given state when the change has already happened: d = 1 + K_post d."""
    operator = operator or build_operator(disc, params, Regime.POST_CHANGE)
    return _solve(operator, _ones, "delay")


def solve_iadd(disc: Discretization, params, delay: NodeFunction,
               operator: Optional[KernelMatrix] = None) -> NodeFunction:
    """Integral ADD as a function of the starting state: I = d + K_pre I."""
    operator = operator or build_operator(disc, params, Regime.PRE_CHANGE)
    return _solve(operator, delay, "IADD")


@dataclass(eq=False)
class DelayProfile:
    add: np.ndarray                  # ADD_k, k = 0..K
    survival: np.ndarray             # P_inf(T > k), k = 0..K
    steady_state_add: float
    converged: bool
    capped: bool
    survival_tail: float = 0.0       # estimate of sum_{k>K} P_inf(T > k)
    decay_ratio: float = float("nan")

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.add.size)

    @property
    def delay_tail(self) -> float:
        """Estimate of sum_{k>K} P_inf(T > k) ADD_k, using the steady-state ADD."""
        return self.steady_state_add * self.survival_tail

    @property
    def arl(self) -> float:
        return float(math.fsum(self.survival)) + self.survival_tail

    @property
    def iadd(self) -> float:
        return float(math.fsum(self.survival * self.add)) + self.delay_tail

    @property
    def sadd(self) -> float:
        return max(float(self.add.max()), self.steady_state_add)

    @property
    def sadd_argmax(self) -> Optional[int]:
        """k attaining SADD; None if only the steady-state limit does."""
        k = int(np.argmax(self.add))
        if self.steady_state_add > self.add[k] + 1e-9:
            return None
        return k


def _aitken(a: np.ndarray) -> float:
    if a.size < 3:
        return float(a[-1])
    d1, d2 = a[-2] - a[-3], a[-1] - a[-2]
    if d1 == 0.0 or d2 == 0.0 or d1 * d2 < 0:
        return float(a[-1])
    ratio = d2 / d1
    if not 0.0 < ratio < 1.0:
        return float(a[-1])
    return float(a[-1] + d2 * ratio / (1.0 - ratio))


def add_sequence(disc: Discretization, params, r: float, delay: NodeFunction,
                 k_max: int = 20_000, stall_tol: float = 1e-7, stall_window: int = 10,
                 operator: Optional[KernelMatrix] = None) -> DelayProfile:
    """ADD_k = E_k[T - k | T > k] for k = 0, 1, ... until the sequence settles.

    The sub-probability law of R_k on {T > k} is propagated with the pre-change
    operator, stored as masses q_k at the nodes. The first step from the point
    mass at r uses the exact kernel, so r never needs to sit on the grid.
    """
    A = disc.threshold
    if not 0.0 <= r < A:
        raise ValueError(f"headstart must lie in [0, A) = [0, {A}), got {r}")
    operator = operator or build_operator(disc, params, Regime.PRE_CHANGE)
    d = delay.values
    kt = np.ascontiguousarray(operator.entries.T)

    add = [delay(r)]
    survival = [1.0]
    q = operator.row(r)
    quiet = 0
    converged = False
    for _ in range(k_max):
        mass = q.sum()
        if not mass > 0:
            break
        survival.append(float(mass))
        add.append(float(q @ d / mass))
        rel = abs(add[-1] - add[-2]) / add[-2]
        quiet = quiet + 1 if rel < stall_tol else 0
        if quiet >= stall_window:
            converged = True
            break
        q = kt @ q

    add_arr = np.asarray(add)
    surv = np.asarray(survival)
    if surv.size >= 2 and surv[-2] > 0:
        rho = float(surv[-1] / surv[-2])
    else:
        rho = 0.0
    tail = surv[-1] * rho / (1.0 - rho) if 0.0 < rho < 1.0 else 0.0
    steady = _aitken(add_arr)
    if not converged:
        log.warning("ADD_k did not settle within %d steps (r=%g, A=%g)", k_max, r, A)
    return DelayProfile(add=add_arr, survival=surv, steady_state_add=steady,
                        converged=converged, capped=not converged,
                        survival_tail=float(tail), decay_ratio=rho)


def spectral_radius(operator: KernelMatrix, iterations: int = 2000, tol: float = 1e-12) -> float:
    """Dominant eigenvalue of a nonnegative kernel matrix by power iteration."""
    v = np.full(operator.disc.size, 1.0 / operator.disc.size)
    lam = 0.0
    for _ in range(iterations):
        w = operator.entries @ v
        new = float(w.sum() / v.sum())
        v = w / w.sum()
        if abs(new - lam) < tol * new:
            return new
        lam = new
    return lam
