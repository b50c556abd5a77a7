"""Both shipped models: certified tolerances, exact oracles, field statistics."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from mlmcsr.estimators import LevelSchedule
from mlmcsr.models import (
    EllipticFlux1D,
    ModelInitError,
    SyntheticNormalModel,
    build_model,
    standard_normal_cdf,
)
from mlmcsr.refinement import SampleId, sample_corrector_batch

Y = 0.8
B = 0.1


# ---------------------------------------------------------------------------
# synthetic model
# ---------------------------------------------------------------------------

class TestSyntheticSolve:
    def test_plug_in_values_with_fixture_stream(self):
        model = SyntheticNormalModel(uniform_source=lambda l, i, j: 0.5)
        v, w = model.solve(model.from_omega(0.0), 1.0, 0)
        assert v == pytest.approx(0.0909090909090909, abs=1e-15)
        v, _ = model.solve(model.from_omega(0.79), 0.25, 2)
        assert v == pytest.approx(0.8127272727272727, abs=1e-15)

    def test_boundary_uniforms(self):
        up = SyntheticNormalModel(uniform_source=lambda l, i, j: 1.0)
        v, _ = up.solve(up.from_omega(0.3), 0.5, 1)
        assert v == pytest.approx(0.3 + 0.5)
        centered = SyntheticNormalModel(uniform_source=lambda l, i, j: (1 - B) / 2)
        v, _ = centered.solve(centered.from_omega(0.3), 0.5, 1)
        assert v == pytest.approx(0.3, abs=1e-15)

    def test_work_units(self):
        assert SyntheticNormalModel(q=1.0).work_units(1.0) == 1.0
        assert SyntheticNormalModel(q=3.0).work_units(0.5) == pytest.approx(8.0)
        assert SyntheticNormalModel(q=2.0).work_units(0.25) == pytest.approx(16.0)
        with pytest.raises(ValueError):
            SyntheticNormalModel().work_units(0.0)

    def test_certified_bound_holds_exactly(self):
        # |value - omega| <= tolerance for a million keyed draws
        model = SyntheticNormalModel(q=1.0)
        batch = model.draw_batch(404, 3, 0, 1_000_000)
        sel = np.arange(1_000_000)
        for tol in (1.0, 0.125):
            v, _ = model.solve_batch(batch, sel, tol, 3)
            assert np.max(np.abs(v - batch.omega)) <= tol

    def test_solve_is_reproducible_per_tolerance_index(self):
        model = SyntheticNormalModel()
        h = model.draw(SampleId(9, 2, 13))
        assert model.solve(h, 0.25, 2) == model.solve(h, 0.25, 2)
        v1, _ = model.solve(h, 0.25, 2)
        v2, _ = model.solve(h, 0.25, 3)  # different index, fresh uniform
        assert v1 != v2

    def test_batch_draw_matches_scalar_draw(self):
        model = SyntheticNormalModel()
        batch = model.draw_batch(77, 4, 100, 140)
        for pos, idx in enumerate(range(100, 140)):
            assert batch.omega[pos] == model.draw(SampleId(77, 4, idx)).omega


def test_standard_normal_cdf_values():
    assert standard_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)
    assert standard_normal_cdf(0.8) == pytest.approx(0.788145, abs=1e-6)
    assert standard_normal_cdf(-40.0) < 1e-300
    for y in (-3.7, -0.9, 0.0, 0.44, 2.5):
        assert standard_normal_cdf(y) == pytest.approx(
            scipy.stats.norm.cdf(y), abs=1e-10
        )
    model = SyntheticNormalModel()
    assert model.exact_probability(0.8) == standard_normal_cdf(0.8)


def test_full_refinement_mean_matches_quadrature():
    # E[1(X_l <= y)] integrated over (omega, U) against a 1e6-draw MC
    level, gamma = 3, 0.5
    tol = gamma ** level

    def integrand(u):
        return standard_normal_cdf(Y - tol * (2 * u - 1 + B) / (1 + B))

    target, quad_err = scipy.integrate.quad(integrand, 0.0, 1.0)
    assert quad_err < 1e-9

    model = SyntheticNormalModel(q=1.0)
    n = 1_000_000
    batch = model.draw_batch(2024, level, 0, n)
    v, _ = model.solve_batch(batch, np.arange(n), tol, level)
    p_hat = np.mean(v <= Y)
    se = math.sqrt(target * (1 - target) / n)
    assert abs(p_hat - target) < 4 * se


def test_corrector_variance_scales_geometrically():
    # var bound at level 3 vs level 1 tracks gamma^2 within a factor 2
    from mlmcsr.estimators import corrector_moments, CorrectorTally

    model = SyntheticNormalModel(q=1.0)
    sched = LevelSchedule(0.5, 1.0)
    n = 200_000
    bounds = {}
    for level in (1, 3):
        batch = sample_corrector_batch(model, 8, level, 0, n, Y, sched)
        d = batch.q_fine.astype(int) - batch.q_coarse.astype(int)
        tally = CorrectorTally(level, n=n, n_plus=int((d > 0).sum()), n_minus=int((d < 0).sum()))
        bounds[level] = corrector_moments(tally, k=1.0).var_bound
    ratio = bounds[3] / bounds[1]
    assert 0.5 * 0.25 < ratio < 2.0 * 0.25


def test_synthetic_rejects_bad_parameters():
    with pytest.raises(ModelInitError):
        SyntheticNormalModel(q=0.0)
    with pytest.raises(ModelInitError):
        SyntheticNormalModel(b=1.0)


# ---------------------------------------------------------------------------
# elliptic flux model
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def elliptic():
    return EllipticFlux1D(master_cells=256)


def test_elliptic_validation():
    with pytest.raises(ModelInitError):
        EllipticFlux1D(master_cells=100)
    with pytest.raises(ModelInitError):
        EllipticFlux1D(sigma=-1.0)
    with pytest.raises(ModelInitError):
        EllipticFlux1D(rho=0.0)


def test_elliptic_draw_is_deterministic(elliptic):
    a = elliptic.draw(SampleId(5, 2, 9))
    b = elliptic.draw(SampleId(5, 2, 9))
    np.testing.assert_array_equal(a.fluxes, b.fluxes)
    assert a.exact == b.exact


def test_elliptic_master_grid_reproduces_exact_flux(elliptic):
    h = elliptic.draw(SampleId(1, 0, 0))
    v, w = elliptic.solve(h, 1e-300, 0)
    assert v == elliptic.exact_qoi(h)  # bitwise: the master grid is the truth
    assert w == 256.0
    assert h.errors[-1] == 0.0


def test_elliptic_selected_cells_monotone_in_tolerance(elliptic):
    h = elliptic.draw(SampleId(2, 0, 3))
    t, prev_cells = 1.0, 0.0
    for _ in range(20):
        _, cells = elliptic.solve(h, t, 0)
        assert cells >= prev_cells
        prev_cells = cells
        t /= 2.0


def test_elliptic_flux_between_extreme_conductivities(elliptic):
    # series-network bound against the dumped coefficient field
    for i in range(10):
        a = elliptic._field(3, 0, i)
        h = elliptic.draw(SampleId(3, 0, i))
        assert a.min() - 1e-12 <= h.exact <= a.max() + 1e-12


def test_elliptic_field_variance_and_correlation(elliptic):
    n = 10_000
    m = elliptic.master_cells
    probes = [0, m // 3, m // 2, m - 1]
    rows = np.empty((n, m))
    for i in range(n):
        rows[i] = np.log(elliptic._field(60, 0, i))
    kappa = rows[:, probes]
    var = kappa.var(axis=0)
    assert np.all(var > 0.94) and np.all(var < 1.06)
    # correlation at one correlation length ~ 1/e
    d = int(round(elliptic.rho * m))
    corr = np.corrcoef(rows[:, m // 4], rows[:, m // 4 + d])[0, 1]
    assert abs(corr - math.exp(-1.0)) < 0.05


def test_elliptic_error_decay_rate(elliptic):
    # median coarse-grid error decays roughly like the mesh width
    batch = elliptic.draw_batch(71, 0, 0, 1000)
    med = np.median(batch.errors, axis=0)
    cells = np.array(elliptic._grids, dtype=float)
    lo, hi = 2, 7  # skip the coarsest grids and the exact master grid
    slope = np.polyfit(np.log(cells[lo:hi]), np.log(med[lo:hi]), 1)[0]
    assert -1.5 < slope < -0.7


def test_elliptic_zero_variance_field():
    model = EllipticFlux1D(sigma=0.0, master_cells=64)
    h = model.draw(SampleId(0, 0, 0))
    assert h.exact == 1.0
    v, w = model.solve(h, 0.5, 0)
    assert v == 1.0 and w == 1.0  # constant field: coarsest grid is exact


def test_elliptic_field_dump_round_trip(tmp_path):
    model = EllipticFlux1D(master_cells=64, field_dump_dir=tmp_path)
    h = model.draw(SampleId(4, 1, 7))
    dumped = np.fromfile(tmp_path / "field_L1_i7.f64le", dtype="<f8")
    assert dumped.size == 64
    assert np.all(dumped > 0)
    # the dumped field regenerates the cached exact flux bit for bit
    assert model._coarse_flux(dumped, 64) == h.exact


def test_elliptic_batch_draw_matches_scalar(elliptic):
    batch = elliptic.draw_batch(13, 2, 5, 15)
    for pos, idx in enumerate(range(5, 15)):
        h = elliptic.draw(SampleId(13, 2, idx))
        np.testing.assert_array_equal(batch.fluxes[pos], h.fluxes)
        assert batch.exact[pos] == h.exact


def test_elliptic_work_units_is_master_bound(elliptic):
    assert elliptic.work_units(0.01) == 256.0
    assert not hasattr(elliptic, "exact_probability")


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def test_build_model_registry():
    m = build_model("synthetic-normal", {"q": 2.0})
    assert isinstance(m, SyntheticNormalModel) and m.q == 2.0
    e = build_model("elliptic-flux-1d", {"master_cells": 32})
    assert isinstance(e, EllipticFlux1D)
    with pytest.raises(ModelInitError):
        build_model("galton-board")
    with pytest.raises(ModelInitError):
        build_model("synthetic-normal", {"qq": 2.0})
