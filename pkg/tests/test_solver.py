import math

import numpy as np
import pytest

from gsrchart.model import ModelParams, Regime, kernel_cdf, xi
from gsrchart.solver import (NumericalFailure, add_sequence, build_discretization, build_operator,
                             solve_arl, solve_delay, solve_iadd, spectral_radius)

from conftest import REFERENCE

PRE, POST = Regime.PRE_CHANGE, Regime.POST_CHANGE


class Solved:
    def __init__(self, mu, A, resolution=768):
        self.params = ModelParams(mu)
        self.disc = build_discretization(A, resolution)
        self.pre = build_operator(self.disc, self.params, PRE)
        self.post = build_operator(self.disc, self.params, POST)
        self.arl = solve_arl(self.disc, self.params, self.pre)
        self.delay = solve_delay(self.disc, self.params, self.post)
        self.iadd = solve_iadd(self.disc, self.params, self.delay, self.pre)

    def profile(self, r, **kw):
        return add_sequence(self.disc, self.params, r, self.delay, operator=self.pre, **kw)


@pytest.fixture(scope="module")
def mid():
    # gamma = 100 optimal design for mu = 0.5
    return Solved(0.5, 82.14)


def test_single_panel_weights_sum():
    disc = build_discretization(1.0, 8, panels=1)
    assert disc.panel_count == 1
    assert disc.weights.sum() == pytest.approx(1.0, abs=1e-14)


def test_discretization_layout():
    disc = build_discretization(956.81, 770)
    assert disc.size == 770
    assert np.all(np.diff(disc.nodes) > 0)
    assert disc.nodes[0] > 0 and disc.nodes[-1] < disc.threshold
    assert np.all(disc.weights > 0)
    assert disc.weights.sum() == pytest.approx(disc.threshold, rel=1e-12)
    widths = np.diff(disc.panel_edges)
    assert np.all(np.diff(widths) > 0)  # graded away from 0
    with pytest.raises(ValueError):
        build_discretization(10.0, 7)
    with pytest.raises(ValueError):
        build_discretization(0.0, 64)


def test_polynomial_exactness():
    A = 57.31
    disc = build_discretization(A, 768)
    assert disc.weights @ disc.nodes ** 2 == pytest.approx(A ** 3 / 3, rel=1e-9)


def test_quadrature_of_kernel_matches_cdf():
    A = 82.14
    disc = build_discretization(A, 768)
    from gsrchart.model import kernel_density
    val = disc.weights @ kernel_density(0.0, disc.nodes, 0.5, PRE)
    assert val == pytest.approx(kernel_cdf(0.0, A, 0.5, PRE), abs=1e-8)


def test_operator_rows(mid):
    pre_rows = mid.pre.entries.sum(axis=1)
    post_rows = mid.post.entries.sum(axis=1)
    assert np.all(mid.pre.entries >= 0)
    assert np.all(pre_rows <= 1 + 1e-8)
    assert np.all(post_rows <= pre_rows + 1e-12)
    np.testing.assert_allclose(pre_rows, kernel_cdf(mid.disc.nodes, mid.disc.threshold, 0.5, PRE),
                               atol=1e-7)


def test_spectral_radius_in_unit_interval(mid):
    rho = spectral_radius(mid.pre)
    assert 0 < rho < 1
    # Quasi-stationary decay matches the ARL scale: 1 / (1 - rho) is of order ARL.
    assert 0.5 * 100 < 1 / (1 - rho) < 2 * 100


def test_fixed_point_residuals(mid):
    for fn in (mid.arl, mid.delay, mid.iadd):
        assert fn.residual() < 1e-8 * np.abs(fn.values).max()


def test_interpolation_agrees_with_nodes(mid):
    idx = np.array([0, 5, 300, 767])
    for fn in (mid.arl, mid.delay, mid.iadd):
        interp = fn.interpolate(mid.disc.nodes[idx])
        np.testing.assert_allclose(interp, fn.values[idx], rtol=1e-12)
        assert fn(mid.disc.nodes[idx[2]]) == fn.values[idx[2]]


def test_arl_and_delay_shape(mid):
    arl, d = mid.arl.values, mid.delay.values
    assert np.all(arl >= 1) and np.all(d >= 1)
    assert np.all(np.diff(arl) <= 0)
    assert np.all(np.diff(d) <= 0)
    assert np.all(mid.iadd.values >= d)


def test_arl_general_lower_bound(mid):
    A = mid.disc.threshold
    x = mid.disc.nodes
    assert np.all(mid.arl.values >= A - x)


def test_arl_approximation_at_gamma_500():
    s = Solved(0.5, 384.21)
    assert s.arl(14.36) == pytest.approx(500, rel=0.02)
    assert s.arl(14.36) == pytest.approx(384.21 / xi(0.5) - 14.36, rel=0.02)


def test_delay_bounded_by_tabulated_sadd():
    s = Solved(1.0, 57.31)
    assert s.delay(3.05) <= 5.46 + 0.005


def test_riadd_equals_stadd_at_zero_headstart(mid):
    riadd = mid.iadd(0.0) / mid.arl(0.0)
    stadd = (0.0 * mid.delay(0.0) + mid.iadd(0.0)) / (mid.arl(0.0) + 0.0)
    assert riadd == stadd


def test_iadd_matches_partial_sums(mid):
    prof = mid.profile(10.32)
    assert prof.converged
    assert prof.iadd == pytest.approx(mid.iadd(10.32), rel=1e-3)


def test_profile_basic_properties(mid):
    prof = mid.profile(10.32)
    assert prof.add[0] == mid.delay(10.32)
    assert prof.survival[0] == 1.0
    assert np.all(np.diff(prof.survival) <= 0)
    assert np.all(prof.add > 0)
    assert prof.arl == pytest.approx(mid.arl(10.32), rel=1e-3)


def test_headstart_free_profile_peaks_at_zero(mid):
    prof = mid.profile(0.0)
    assert prof.sadd_argmax == 0
    assert prof.sadd == prof.add[0]


def test_profile_domain_and_cap(mid):
    with pytest.raises(ValueError):
        mid.profile(82.14)
    with pytest.raises(ValueError):
        mid.profile(-1.0)
    short = mid.profile(10.32, k_max=5)
    assert not short.converged and short.capped
    assert short.add.size == 6


def test_condition_guard():
    s = Solved(0.5, 82.14, resolution=64)
    with pytest.raises(NumericalFailure) as info:
        # A stochastic matrix: I - K annihilates constants.
        op = s.pre
        op.entries = np.full((op.disc.size, op.disc.size), 1.0 / op.disc.size)
        del op.__dict__["lu"]
        solve_arl(s.disc, s.params, op)
    assert "condition_estimate" in info.value.diagnostics


@pytest.mark.parametrize("gamma", [100, 500, 1000])
@pytest.mark.parametrize("mu", [round(0.1 * i, 1) for i in range(1, 11)])
def test_self_convergence_at_tabulated_designs(mu, gamma):
    ref = REFERENCE[(gamma, mu)]
    r, A = ref["r_star"], ref["a_star"]
    coarse, fine = Solved(mu, A, 384), Solved(mu, A, 768)
    for a, b in ((coarse.arl, fine.arl), (coarse.delay, fine.delay), (coarse.iadd, fine.iadd)):
        assert a(r) == pytest.approx(b(r), rel=5e-4)
