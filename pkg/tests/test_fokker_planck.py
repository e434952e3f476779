import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sisde.engine import JumpRun, ensemble
from sisde.errors import InputDomainError, StepSizeError
from sisde.fokker_planck import (
    DensityField,
    compare_density,
    evolve_fp,
    evolve_master,
    fields_from_table,
    fp_step,
    histogram_field,
    l1_distance,
    master_step,
    n_marginal,
    point_mass,
    stable_dt,
    unit_bin_histogram,
)
from sisde.transition import CHANGES, RATE_NAMES, ContactRate, GreenhalghParams, TransitionTable, greenhalgh_table

PARAMS = GreenhalghParams(mu=0.01, gamma=0.05, contact=ContactRate("constant", 0.2))


def const(v):
    return lambda t, s1, s2: np.full(np.broadcast(np.asarray(s1), np.asarray(s2)).shape, float(v))


# -- master equation --------------------------------------------------------------------


def test_zero_rates_leave_field_unchanged():
    f = point_mass((5, 5), (2, 2))
    assert np.array_equal(master_step(f, TransitionTable(), 0.1).p, f.p)


def test_single_birth_channel_step():
    f = point_mass((4, 4), (1, 1))
    out = master_step(f, TransitionTable(b1=const(1.0)), 0.1)
    assert out.p[2, 1] == pytest.approx(0.1)
    assert out.p[1, 1] == pytest.approx(0.9)
    assert out.p.sum() == pytest.approx(1.0, abs=1e-15)


def test_every_channel_moves_mass_to_its_neighbour():
    rates = {name: const(0.05 * (k + 1)) for k, name in enumerate(RATE_NAMES)}
    f = point_mass((5, 5), (2, 2))
    dt = 0.2
    out = master_step(f, TransitionTable(**rates), dt)
    for k, (di, dj) in enumerate(CHANGES):
        assert out.p[2 + di, 2 + dj] == pytest.approx(0.05 * (k + 1) * dt)
    assert out.p[2, 2] == pytest.approx(1 - dt * 0.05 * 36)


def test_master_conserves_mass_in_the_interior():
    table = greenhalgh_table(PARAMS)
    f = point_mass((201, 201), (70, 30))
    for k in range(50):
        before = f.p.sum()
        f = master_step(f, table, 0.01, t=k * 0.01)
        assert abs(f.p.sum() - before) <= 1e-14
    assert f.lost == 0.0
    assert np.all(f.p >= 0)


def test_boundary_outflow_is_tracked():
    f = point_mass((3, 3), (2, 1))
    out = master_step(f, TransitionTable(b1=const(1.0)), 0.25)
    assert out.lost == pytest.approx(0.25)
    assert out.p.sum() + out.lost == pytest.approx(1.0)


def test_master_step_size_guard():
    with pytest.raises(StepSizeError):
        master_step(point_mass((201, 201), (50, 50)), greenhalgh_table(PARAMS), 1.0)


def test_master_requires_unit_jumps():
    with pytest.raises(InputDomainError):
        master_step(point_mass((4, 4), (1, 1)), TransitionTable(lam1=2.0), 0.1)


def test_master_matches_jump_chain_histogram():
    table = greenhalgh_table(PARAMS)
    dt, T, n = 0.01, 1.0, 100_000
    field = evolve_master(point_mass((161, 161), (70, 30)), table, dt, 100)
    stats = ensemble(JumpRun(table, (70, 30), dt, T, record_every=100), n, seed=17)
    hist = histogram_field(stats.samples["S1"][:, -1], stats.samples["S2"][:, -1], field)
    assert hist.lost == 0.0
    assert compare_density(field, hist) <= 0.05
    # the means agree with the exact lattice expectation
    x1, x2 = field.coords()
    m2 = float((field.p * x2).sum())
    s2 = stats.samples["S2"][:, -1]
    assert abs(s2.mean() - m2) <= 3 * s2.std(ddof=1) / math.sqrt(n)


# -- Fokker-Planck -------------------------------------------------------------------------


def zeros_like_fields(f):
    return np.zeros((2,) + f.shape), np.zeros((3,) + f.shape)


def test_fp_zero_coefficients():
    f = point_mass((7, 7), (3, 3))
    mu, cov = zeros_like_fields(f)
    assert np.array_equal(fp_step(f, mu, cov, 1.0).p, f.p)


def heat_setup(sigma2=1.0, h=0.1, half=6.0):
    n = int(round(2 * half / h)) + 1
    f = point_mass((n, n), (0.0, 0.0), origin=(-half, -half), spacing=(h, h))
    mu, cov = zeros_like_fields(f)
    cov[0] = sigma2
    cov[2] = sigma2
    return f, mu, cov


def test_heat_kernel_second_moment():
    sigma2, dt, steps = 1.0, 0.002, 1000
    f, mu, cov = heat_setup(sigma2)
    out = evolve_fp(f, mu, cov, dt, steps)
    x1, x2 = out.coords()
    t = dt * steps
    for x in (x1, x2):
        m2 = float((out.p * x * x).sum())
        assert m2 == pytest.approx(sigma2 * t, rel=0.02)
    assert out.first_negative is None


def test_fp_mass_conservation_per_step():
    f, mu, cov = heat_setup()
    mu[0] = 0.3
    mu[1] = -0.2
    cov[1] = 0.4
    for _ in range(200):
        before = f.p.sum()
        f = fp_step(f, mu, cov, 0.002)
        assert abs(f.p.sum() - before) <= 1e-10


def test_cross_term_builds_covariance():
    f, mu, cov = heat_setup()
    rho = 0.5
    cov[1] = rho
    dt, steps = 0.002, 500
    out = evolve_fp(f, mu, cov, dt, steps)
    x1, x2 = out.coords()
    assert float((out.p * x1 * x2).sum()) == pytest.approx(rho * dt * steps, rel=0.02)


def test_constant_drift_translates_mean():
    f, mu, cov = heat_setup(sigma2=0.1)
    mu[0] = 1.0
    dt, steps = 0.01, 100
    out = evolve_fp(f, mu, cov, dt, steps)
    x1, _ = out.coords()
    assert float((out.p * x1).sum()) == pytest.approx(1.0, rel=1e-9)
    assert out.first_negative is None


def test_fp_stability_guard():
    f, mu, cov = heat_setup()
    limit = stable_dt(mu, cov, f.spacing)
    assert limit == pytest.approx(1 / (2 / 0.01))
    with pytest.raises(StepSizeError):
        fp_step(f, mu, cov, 1.01 * limit)


def test_fp_shape_checked():
    f = point_mass((5, 5), (2, 2))
    with pytest.raises(InputDomainError):
        fp_step(f, np.zeros((2, 4, 5)), np.zeros((3, 5, 5)), 0.1)


def test_fp_reports_first_negative_cell():
    f, mu, cov = heat_setup()
    cov[1] = 0.99
    out = fp_step(f, mu, cov, 0.9 * stable_dt(mu, cov, f.spacing))
    assert out.first_negative is not None
    assert out.p[out.first_negative] < 0


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 2), st.floats(0, 2), st.integers(0, 2**31))
def test_fp_nonnegative_without_cross_term(m1, m2, v1, v2, seed):
    rng = np.random.default_rng(seed)
    p = rng.random((12, 12))
    f = DensityField(p / p.sum(), spacing=(0.5, 0.5))
    mu = np.stack([np.full(f.shape, m1), np.full(f.shape, m2)])
    cov = np.stack([np.full(f.shape, v1), np.zeros(f.shape), np.full(f.shape, v2)])
    dt = stable_dt(mu, cov, f.spacing)
    dt = 1.0 if math.isinf(dt) else 0.99 * dt
    out = fp_step(f, mu, cov, dt)
    assert out.first_negative is None
    assert out.p.sum() == pytest.approx(1.0, abs=1e-12)


def test_fields_from_table_matches_pointwise():
    f = point_mass((101, 101), (50, 50))
    mu, cov = fields_from_table(greenhalgh_table(PARAMS), f)
    assert mu[:, 50, 50] == pytest.approx([-2.0, 2.0])
    assert cov[:, 50, 50] == pytest.approx([9.0, -7.5, 8.0])


def test_greenhalgh_fp_tracks_master_equation():
    table = greenhalgh_table(GreenhalghParams(0.5, 0.05, ContactRate("constant", 0.2)))
    start = point_mass((61, 61), (15, 5))
    master = evolve_master(start, table, 1e-3, 1000)
    mu, cov = fields_from_table(table, start)
    fp = evolve_fp(start, mu, cov, 1e-3, 1000)
    x1, x2 = master.coords()
    for x in (x1, x2, x1 + x2):
        assert float((fp.p * x).sum()) == pytest.approx(float((master.p * x).sum()), rel=0.02)
    assert fp.p.sum() == pytest.approx(1.0, abs=1e-10)


# -- comparison -----------------------------------------------------------------------------


def test_compare_examples():
    f = point_mass((5, 5), (1, 1))
    g = point_mass((5, 5), (3, 3))
    assert compare_density(f, f) == 0.0
    assert compare_density(f, g) == 2.0
    with pytest.raises(InputDomainError):
        compare_density(f, point_mass((6, 5), (1, 1)))
    with pytest.raises(InputDomainError):
        compare_density(f, point_mass((5, 5), (1, 1), origin=(1.0, 0.0)))


def test_l1_normalises():
    assert l1_distance([1.0, 1.0], [2.0, 2.0]) == 0.0
    with pytest.raises(InputDomainError):
        l1_distance([0.0, 0.0], [1.0, 0.0])


def test_n_marginal_and_unit_bins():
    p = np.zeros((3, 3))
    p[0, 2] = 0.25
    p[1, 1] = 0.25
    p[2, 2] = 0.5
    m = n_marginal(DensityField(p))
    assert list(m) == [0.0, 0.0, 0.5, 0.0, 0.5]
    assert list(unit_bin_histogram([0.2, 0.6, 1.49, 7.0], 3)) == [0.25, 0.5, 0.0]


def test_histogram_field_assigns_nearest_cell():
    like = point_mass((3, 3), (0, 0))
    h = histogram_field([0.4, 1.6, 5.0], [0.0, 2.2, 0.0], like)
    assert h.p[0, 0] == pytest.approx(1 / 3) and h.p[2, 2] == pytest.approx(1 / 3)
    assert h.lost == pytest.approx(1 / 3)
