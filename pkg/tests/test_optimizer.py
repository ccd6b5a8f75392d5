import math

import numpy as np
import pytest

from gsrchart.metrics import NumericsConfig
from gsrchart.model import xi
from gsrchart.optimizer import (CalibrationError, SearchConfig, arl_at, calibrate_threshold,
                                golden_section, headstart_grid, optimize_design, refine,
                                threshold_seed)

from conftest import REFERENCE, optimum

STUDY = [(mu, g) for mu in (0.2, 0.5) for g in (100, 500, 1000)]


def test_calibration_examples():
    assert calibrate_threshold(1.0, 3.05, 100) == pytest.approx(57.31, rel=5e-3)
    assert calibrate_threshold(0.2, 48.29, 200) == pytest.approx(220.71, rel=5e-3)


def test_calibration_hits_target():
    A = calibrate_threshold(0.7, 8.0, 400, rel_tol=1e-6)
    assert arl_at(0.7, 8.0, A) == pytest.approx(400, rel=1e-6)


def test_calibration_input_errors():
    with pytest.raises(CalibrationError):
        calibrate_threshold(0.5, 1.0, 1.0)
    with pytest.raises(CalibrationError):
        calibrate_threshold(0.5, -1.0, 100)
    with pytest.raises(CalibrationError):
        calibrate_threshold(0.5, 1.0, 100, rel_tol=0.5)
    with pytest.raises(CalibrationError):
        # A huge headstart cannot be offset: ARL exceeds gamma as soon as A > r.
        calibrate_threshold(0.5, 5000.0, 100)


@pytest.mark.parametrize("gamma", [100, 200, 300, 400, 500])
def test_seed_quality(gamma):
    numerics = NumericsConfig(resolution=384)
    for mu in (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
        r = REFERENCE[(gamma, mu)]["r_star"]
        A = calibrate_threshold(mu, r, gamma, numerics=numerics)
        assert abs(threshold_seed(mu, r, gamma) - A) / A < 0.05


def test_arl_increasing_in_limit():
    mu, r, gamma = 0.5, 10.32, 100
    A = calibrate_threshold(mu, r, gamma)
    lo, hi = 0.9 * A, 1.1 * A
    values = [arl_at(mu, r, a) for a in (lo, 0.5 * (lo + hi), hi)]
    assert values[0] < gamma < values[2]
    assert values[0] < values[1] < values[2]


def test_golden_section_smooth_and_cusp():
    x = golden_section(lambda t: (t - 1.3) ** 2, 0.0, 4.0, tol=lambda m: 1e-8)
    assert x == pytest.approx(1.3, abs=1e-7)
    x = golden_section(lambda t: abs(t - 2.71), 0.0, 10.0, tol=lambda m: 1e-6)
    assert x == pytest.approx(2.71, abs=1e-6)


def test_golden_section_flat_prefers_left():
    x = golden_section(lambda t: 0.0, 0.0, 1.0, tol=lambda m: 1e-3)
    assert x < 0.5


def test_headstart_grid():
    grid = headstart_grid(0.5, 500)
    assert grid.size == 33 and grid[0] == 0.0 and grid[-1] == pytest.approx(250 * xi(0.5))
    assert np.all(np.diff(grid) > 0)


def test_grid_extends_when_minimum_sits_on_the_edge():
    config = SearchConfig(numerics=NumericsConfig(resolution=256), r_hi=5.0)
    res = optimize_design(0.5, 100, config)
    assert res.diagnostics["extended"] > 0
    assert res.r_star == pytest.approx(REFERENCE[(100, 0.5)]["r_star"], rel=0.01)


def test_gap_nonnegative_and_headstart_helps():
    res = optimum(0.5, 100)
    probes = res.diagnostics["probes"]
    assert all(p.gap >= -1e-9 for p in probes)
    assert probes[0].r == 0.0
    assert res.gap <= probes[0].gap
    assert 0 <= res.r_star < res.a_star
    assert abs(res.arl_achieved - 100) / 100 <= 1e-4


def test_optimizer_examples():
    res = optimum(0.5, 500)
    ref = REFERENCE[(500, 0.5)]
    for key in ("r_star", "a_star", "sadd", "lower_bound"):
        assert getattr(res, key) == pytest.approx(ref[key], rel=0.01)
    res = optimum(0.9, 900)
    assert res.r_star == pytest.approx(5.57, rel=0.01)
    assert res.a_star == pytest.approx(536.98, rel=0.01)
    assert res.sadd == pytest.approx(11.1, rel=0.01)


def test_optimal_headstart_trends():
    for gamma in (100, 500, 1000):
        rs = [optimum(mu, gamma).r_star for mu in (0.2, 0.5, 1.0)]
        assert rs[0] > rs[1] > rs[2]
    for mu in (0.2, 0.5, 1.0):
        rs = [optimum(mu, gamma).r_star for gamma in (100, 500, 1000)]
        assert rs[0] < rs[1] < rs[2]


def _refined_extrema(mu, gamma):
    res = optimum(mu, gamma)
    curve = res.diagnostics["constrained_curve"]
    probes = res.diagnostics["probes"]
    r = np.array([p.r for p in probes])
    lb = np.array([p.report.lower_bound for p in probes])
    sadd = np.array([p.report.sadd for p in probes])
    i_lb, i_sadd = int(np.argmax(lb)), int(np.argmin(sadd))
    tol = lambda m: 1e-3 * m
    r_lb = golden_section(lambda x: -curve(x).report.lower_bound, r[i_lb - 1], r[i_lb + 1], tol)
    r_sadd = golden_section(lambda x: curve(x).report.sadd, r[i_sadd - 1], r[i_sadd + 1], tol)
    return i_lb, r.size, r_lb, r_sadd


@pytest.mark.slow
@pytest.mark.parametrize("mu,gamma", STUDY)
def test_lower_bound_peak_near_sadd_minimum(mu, gamma):
    i_lb, n, r_lb, r_sadd = _refined_extrema(mu, gamma)
    assert 0 < i_lb < n - 1
    assert abs(r_sadd - r_lb) / r_sadd <= 0.10
