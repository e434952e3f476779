import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sisde import models
from sisde.coefficients import DriftSpec, QuadraticDiffusionSpec, TruncatedModel, greenhalgh_coeffs
from sisde.diagnostics import (
    ThetaFamily,
    a_seq,
    cauchy_errors,
    g_constant,
    pathwise_uniqueness_check,
    step_bound_check,
    theta,
    theta_prime,
    theta_second,
    uniform_bound_G,
)
from sisde.drivers import correlate, dyadic_partition, sample_brownian_grids
from sisde.engine import SquareRootProcess, TriangularRun, run_triangular
from sisde.errors import InputDomainError
from sisde.transition import ContactRate, GreenhalghParams

PARAMS = GreenhalghParams(mu=0.01, gamma=0.05, contact=ContactRate("constant", 0.2))


def greenhalgh_run(level=8, x0=30.0):
    drift, diff = greenhalgh_coeffs(PARAMS)
    return TriangularRun(TruncatedModel(drift, diff), SquareRootProcess(PARAMS.mu), x0, 100.0, 1.0, level)


def zero_run(level=6):
    drift = DriftSpec(models.zero, M=1.0, L=1.0)
    spec = QuadraticDiffusionSpec(models.zero, models.zero, models.one, M=1.0, H=1.0)
    return TriangularRun(TruncatedModel(drift, spec), SquareRootProcess(0.5), 2.0, 3.0, 1.0, level)


def linear_run(level=6):
    # scale 0 switches the noise off while the root interval [-1000, 1000] leaves the drift unclamped
    drift = DriftSpec(models.linear_drift, M=1.0, L=1.0)
    spec = QuadraticDiffusionSpec(models.zero, lambda t, y: np.full_like(np.asarray(y, float), 1e6), models.zero)
    return TriangularRun(TruncatedModel(drift, spec), SquareRootProcess(0.5), 1.0, 3.0, 1.0, level)


# -- a_h and theta ---------------------------------------------------------------------


def test_a_seq_values():
    assert a_seq(0) == 1.0
    assert a_seq(1) == pytest.approx(0.36788, abs=1e-5)
    assert a_seq(2) == pytest.approx(0.049787, abs=1e-6)
    assert a_seq(3) == math.exp(-6)
    with pytest.raises(InputDomainError):
        a_seq(-1)


def test_a_seq_log_gaps():
    vals = [a_seq(h) for h in range(12)]
    assert all(x > y for x, y in zip(vals, vals[1:]))
    for h in range(1, 12):
        assert math.log(vals[h - 1] / vals[h]) == pytest.approx(h, rel=1e-12)


@pytest.mark.parametrize("h", range(1, 7))
def test_theta_sandwich_and_bounds(h):
    fam = ThetaFamily(h)
    u = np.concatenate([np.linspace(-2, 2, 10_000), [fam.lo, fam.hi, -fam.lo, -fam.hi]])
    th, tp, ts = theta(fam, u), theta_prime(fam, u), theta_second(fam, u)
    au = np.abs(u)
    assert np.all(th <= au + 1e-15)
    assert np.all(th >= au - fam.hi - 1e-15)
    assert np.all(np.abs(tp) <= 1.0)
    assert np.all(ts >= 0.0)
    band = (au > fam.lo) & (au < fam.hi)
    assert np.all(ts[~band] == 0.0)
    assert np.all(ts[band] <= 2.0 / (h * au[band]) * (1 + 1e-12))


@pytest.mark.parametrize("h", [1, 2, 4])
def test_theta_basic_values(h):
    fam = ThetaFamily(h)
    assert fam.theta(0.0) == 0.0
    assert fam.theta_prime(fam.hi) == 1.0
    assert fam.theta_prime(-3.0) == -1.0
    assert fam.theta_prime(0.5 * fam.lo) == 0.0


@pytest.mark.parametrize("h", [1, 2, 3, 5])
def test_profile_integrates_to_one(h):
    fam = ThetaFamily(h)
    # integrate in s = log(u / a_h), where du = u ds
    s = np.linspace(0, h, 200_001)
    u = fam.lo * np.exp(s)
    f = fam.phi_second(u) * u
    integral = np.sum((f[1:] + f[:-1]) / 2 * np.diff(s))
    assert integral == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("h", [1, 2, 3])
def test_derivatives_are_consistent(h):
    fam = ThetaFamily(h)
    u = np.linspace(0.5 * fam.lo, 1.5 * fam.hi, 3001)
    eps = 1e-7 * fam.hi
    num1 = (fam.phi(u + eps) - fam.phi(u - eps)) / (2 * eps)
    num2 = (fam.phi_prime(u + eps) - fam.phi_prime(u - eps)) / (2 * eps)
    assert np.allclose(num1, fam.phi_prime(u), atol=1e-6)
    assert np.allclose(num2, fam.phi_second(u), atol=1e-4 / fam.lo)


@pytest.mark.parametrize("h", [1, 3])
def test_profile_is_twice_continuously_differentiable(h):
    fam = ThetaFamily(h)
    for edge in (fam.lo, fam.hi):
        for side in (1 - 1e-9, 1 + 1e-9):
            assert fam.phi_second(edge * side) == pytest.approx(0.0, abs=1e-12 / fam.lo)
    assert fam.phi_prime(fam.hi * (1 - 1e-12)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(1, 8), st.floats(-5, 5))
def test_theta_is_even(h, u):
    fam = ThetaFamily(h)
    assert fam.theta(u) == fam.theta(-u)
    assert fam.theta_prime(u) == -fam.theta_prime(-u)


def test_theta_family_index_checked():
    with pytest.raises(InputDomainError):
        ThetaFamily(0)


# -- moment bounds -----------------------------------------------------------------------


def test_uniform_bound_examples():
    assert g_constant(1.0, 1.0, 1.0, 1.0, 1.0) == 3.0
    assert uniform_bound_G(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(3 * math.e)
    assert uniform_bound_G(-2.5, 0.0, 4.0, 7.0, 60.0) == 2.5


# -- Cauchy errors -------------------------------------------------------------------------


def test_zero_model_has_zero_errors():
    rep = cauchy_errors(zero_run(), [3, 4, 5, 6], 50, seed=1)
    assert np.all(rep.l1_error == 0.0) and np.all(rep.sup_error == 0.0)


def test_pure_drift_errors_halve():
    rep = cauchy_errors(linear_run(), [5, 6, 7, 8, 9], 4, seed=0)
    ratios = rep.l1_error[:-1] / rep.l1_error[1:]
    assert np.allclose(ratios, 2.0, rtol=0.02)
    assert rep.l1_slope == pytest.approx(1.0, abs=0.02)


def test_greenhalgh_errors_decrease_at_half_order():
    rep = cauchy_errors(greenhalgh_run(), [5, 6, 7, 8], 4000, seed=3)
    assert rep.strictly_decreasing
    # strong order 1/2: the inter-level error shrinks by about sqrt(2) per level
    assert rep.l1_slope == pytest.approx(0.5, abs=0.15)
    assert rep.step1_ok
    assert rep.meshes == sorted(rep.meshes, reverse=True)
    assert all(np.diff(rep.gamma1) < 0)


def test_cauchy_needs_two_levels():
    with pytest.raises(InputDomainError):
        cauchy_errors(zero_run(), [4], 10, seed=0)


def test_cauchy_independent_of_workers():
    a = cauchy_errors(greenhalgh_run(), [3, 4, 5], 300, seed=2, workers=1, block=100)
    b = cauchy_errors(greenhalgh_run(), [3, 4, 5], 300, seed=2, workers=3, block=100)
    assert np.array_equal(a.l1_error, b.l1_error) and np.array_equal(a.sup_error, b.sup_error)
    assert a.G == b.G


# -- one-step bound ------------------------------------------------------------------------


def test_step_bound_zero_model():
    rep = step_bound_check(zero_run(), dyadic_partition(1.0, 5), 50, seed=0)
    assert rep.empirical == 0.0 and rep.passed


def test_step_bound_scaling_and_monotone_bound():
    run = greenhalgh_run()
    coarse = step_bound_check(run, dyadic_partition(1.0, 5), 2000, seed=4)
    fine = step_bound_check(run, dyadic_partition(1.0, 6), 2000, seed=4)
    assert 1.2 <= coarse.empirical / fine.empirical <= 1.8
    assert fine.bound <= coarse.bound
    assert coarse.passed and fine.passed


# -- pathwise uniqueness ---------------------------------------------------------------------


def test_same_driver_gives_identical_paths():
    run = greenhalgh_run(level=7)
    grid = correlate(sample_brownian_grids(dyadic_partition(1.0, 7), 5, range(64)), 0.2)
    assert pathwise_uniqueness_check(run, grid) == 0.0
    assert pathwise_uniqueness_check(run, grid, rng=np.random.default_rng(0)) == 0.0


def test_perturbed_start_gives_positive_gap():
    run = greenhalgh_run(level=7)
    grid = sample_brownian_grids(dyadic_partition(1.0, 7), 5, range(8))
    a = run_triangular(run.model, run.y_process, 30.0, 100.0, grid).x
    b = run_triangular(run.model, run.y_process, 30.001, 100.0, grid).x
    assert np.max(np.abs(a - b)) > 0
