import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmelab import experiments as ex
from pmelab.core import FieldKind, Grid, PotentialSpec, ScalarField, mass
from pmelab.experiments import (
    ConfigError,
    ExpFit,
    InsufficientData,
    RateReport,
    ScenarioConfig,
    compute_equilibrium,
    estimate_holder,
    fit_exponential,
)

QUAD = PotentialSpec("quadratic")


# equilibrium -------------------------------------------------------------------
def test_equilibrium_closed_form_m2():
    # mass = (2 Cbar)^(3/2) / 3, so mass 1/3 gives Cbar = 1/2
    eq = compute_equilibrium(QUAD, 1 / 3, Grid(1, -2.0, 2.0, 4000), 2.0)
    assert eq.Cbar == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("m,dim,cells", [(1.5, 1, 400), (3.0, 1, 400), (2.0, 2, 80)])
def test_equilibrium_mass_and_shape(m, dim, cells):
    g = Grid(dim, -3.0, 3.0, cells)
    eq = compute_equilibrium(QUAD, 0.7, g, m)
    assert mass(eq.density) == pytest.approx(0.7, rel=1e-10)
    np.testing.assert_array_equal(eq.pressure.values, np.clip(eq.Cbar - QUAD.value(g.centers), 0, None))


def test_equilibrium_limits_and_monotonicity():
    g = Grid(1, -3.0, 3.0, 600)
    small = compute_equilibrium(QUAD, 1e-9, g, 2.0)
    assert small.Cbar == pytest.approx(float(QUAD.value(g.centers).min()), abs=1e-4)
    c1 = compute_equilibrium(QUAD, 0.5, g, 1.5).Cbar
    c2 = compute_equilibrium(QUAD, 1.0, g, 1.5).Cbar
    assert c2 > c1


def test_equilibrium_unreachable_mass():
    with pytest.raises(ValueError, match="unreachable"):
        compute_equilibrium(QUAD, 1e6, Grid(1, -1.0, 1.0, 50), 2.0)


# fitting -------------------------------------------------------------------------
def test_fit_exact_model():
    t = np.linspace(0, 2, 9)
    fit = fit_exponential(t, 2 * np.exp(-3 * t))
    assert fit.K == pytest.approx(2, abs=1e-10)
    assert fit.alpha == pytest.approx(3, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_constant_series():
    fit = fit_exponential(np.arange(6.0), np.full(6, 0.4))
    assert abs(fit.alpha) <= 1e-12


def test_fit_noisy_series():
    rng = np.random.default_rng(7)
    t = np.linspace(0, 2, 40)
    v = 2 * np.exp(-3 * t) * (1 + 0.01 * rng.standard_normal(t.size))
    fit = fit_exponential(t, v)
    assert fit.alpha == pytest.approx(3, abs=0.1)
    assert fit.r_squared >= 0.99


def test_fit_needs_four_points():
    with pytest.raises(InsufficientData, match="got 3"):
        fit_exponential([0, 1, 2, 3, 4], [1.0, 0.5, 0.25, 0.01, 0.001], resolution_floor=0.1)


@given(st.floats(-5, 5), st.floats(0.1, 3.0), st.floats(0.5, 3.0))
def test_fit_time_shift_invariance(shift, alpha, K):
    t = np.linspace(0, 3, 12)
    rng = np.random.default_rng(0)
    v = K * np.exp(-alpha * t) * np.exp(0.05 * rng.standard_normal(t.size))
    a = fit_exponential(t, v)
    b = fit_exponential(t + shift, v)
    assert b.alpha == pytest.approx(a.alpha, abs=1e-10)
    assert b.K == pytest.approx(a.K * math.exp(a.alpha * shift), rel=1e-9)


def test_rate_report_alpha_gate_and_lengths():
    fits = {"d_pos": ExpFit(1.0, 2.0, 0.95, 5), "d_gamma": ExpFit(1.0, 2.0, 0.5, 5)}
    rep = RateReport([0, 1], [1, 1], [1, 1], 0.1, fits)
    assert rep.alpha("d_pos") == 2.0
    assert rep.alpha("d_gamma") is None
    with pytest.raises(ValueError):
        RateReport([0, 1], [1], [1, 1], 0.1)


# Hölder --------------------------------------------------------------------------
def test_holder_square_root():
    g = Grid(1, -2.0, 2.0, 4001)
    f = ScalarField(g, np.sqrt(np.abs(g.centers[..., 0])))
    assert estimate_holder(f) == pytest.approx(0.5, abs=0.05)


def test_holder_affine_clamped():
    g = Grid(2, -2.0, 2.0, 64)
    f = ScalarField(g, 1 + 0.3 * g.centers[..., 0] - 0.2 * g.centers[..., 1], FieldKind.SIGNED)
    assert estimate_holder(f) == pytest.approx(1.0, abs=1e-9)


def test_holder_constant_is_error():
    g = Grid(1, -2.0, 2.0, 100)
    with pytest.raises(ValueError, match="constant"):
        estimate_holder(ScalarField(g, np.ones(g.shape)))


def test_holder_too_few_radii():
    g = Grid(1, -2.0, 2.0, 100)
    f = ScalarField(g, np.abs(g.centers[..., 0]))
    with pytest.raises(ValueError, match="at least 3"):
        estimate_holder(f, radii=[0.04, 0.08])


# config ------------------------------------------------------------------------
@pytest.mark.parametrize(
    "kwargs,match",
    [
        (dict(command="lemma34", m=2.5), "requires 1<m<2"),
        (dict(command="lemma34", m=1.5, a=0.3), "C1\\*a < 2-m"),
        (dict(command="lemma34", k=1.2), "k must lie"),
        (dict(gamma=1.0), "gamma"),
        (dict(command="nope"), "unknown command"),
        (dict(dim=1, x0=(0.0, 0.0)), "x0 needs 1"),
        (dict(form="bogus"), "unknown potential"),
    ],
)
def test_config_validation(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        ScenarioConfig(**kwargs).validate()


def test_config_c1_default_from_potential():
    assert ScenarioConfig(x0=(0.0,)).resolved_C1() == pytest.approx(2.5)
    assert ScenarioConfig(C1=7.0).resolved_C1() == 7.0
    assert ScenarioConfig(form="none").resolved_C1() == 0.0


def test_config_k_prime_default():
    assert ScenarioConfig(m=1.5, dim=1).resolved_k_prime == pytest.approx(0.6)


# lemma 3.4 -----------------------------------------------------------------------
L34 = dict(command="lemma34", m=1.5, a=0.1, k=0.3, lower=-2.0, upper=2.0, cells=800)


def test_lemma34_pass():
    rep = ex.run_lemma34(ScenarioConfig(**L34))
    assert rep.outcome == ex.PASS
    assert rep.measured["hypothesis_value"] >= rep.measured["hypothesis_threshold"] * (1 - 1e-12)
    assert rep.measured["mtilde"] < 2


def test_lemma34_zero_data():
    rep = ex.run_lemma34(ScenarioConfig(**L34, hypothesis_factor=0.0))
    assert rep.outcome == ex.HYPOTHESIS_NOT_MET
    assert rep.checks == {}


def test_lemma34_monotone_in_data():
    cfg = ScenarioConfig(**{**L34, "cells": 400})
    base = ex.lemma34_initial(cfg)
    bigger = base.replace(values=base.values + 0.05 * ex.lemma34_initial(ScenarioConfig(**{**L34, "cells": 400, "a": 0.2})).values)
    r1, r2 = ex.run_lemma34(cfg, base), ex.run_lemma34(cfg, bigger)
    assert r1.outcome == ex.PASS and r2.outcome == ex.PASS
    assert r2.measured["min_pressure_on_ball"] >= r1.measured["min_pressure_on_ball"]


def test_lemma34_regime_rejected_before_solve():
    with pytest.raises(ConfigError, match="requires 1<m<2"):
        ex.run_lemma34(ScenarioConfig(**{**L34, "m": 2.5}))


# signed sink -------------------------------------------------------------------------
def test_eq2_mass_slope_example():
    rep = ex.run_eq2_diagnostics(ScenarioConfig(command="eq2", m=1.5, a=0.01, C2=1.0, cells=200))
    assert rep.measured["mass_slope"] == pytest.approx(-0.04, abs=1e-8)
    assert rep.checks["containment"] and rep.checks["domination_pme"]


def test_eq2_zero_data_source_off():
    cfg = ScenarioConfig(command="eq2", m=1.5, a=0.01, C2=0.0, cells=100)
    g = cfg.grid
    rep = ex.run_eq2_diagnostics(cfg, ScalarField(g, np.zeros(g.shape), FieldKind.SIGNED))
    assert rep.outcome == ex.PASS
    assert rep.measured["mass_final"] == 0.0


def test_eq2_unit_box_escapes_ball():
    rep = ex.run_eq2_diagnostics(ScenarioConfig(command="eq2", m=1.3, a=0.01, initial_height=1.0, lower=-6.0, upper=6.0, cells=300))
    assert not rep.checks["containment"]
    assert rep.outcome == ex.FAIL


# lemma 3.5 -----------------------------------------------------------------------
L35 = dict(command="lemma35", m=2.0, cells=200)


def test_lemma35_zero_data():
    cfg = ScenarioConfig(**L35)
    g = cfg.grid
    rep = ex.run_lemma35(cfg, initial=ScalarField(g, np.zeros(g.shape)))
    assert rep.outcome == ex.PASS and rep.measured["max_on_B1"] == 0.0


def test_lemma35_uses_reciprocal_exponent_at_m2():
    rep = ex.run_lemma35(ScenarioConfig(**L35), c0=1e-2)
    assert rep.measured["k"] == 0.5
    assert rep.measured["t2"] == pytest.approx(math.log(100))
    assert rep.measured["fitted_C"] == pytest.approx(rep.measured["max_on_B1"] / 0.1)


def test_lemma35_escape_aborts():
    cfg = ScenarioConfig(**L35, form="none", compact_radius=1.0, initial_radius=0.9, ball_C=3.0)
    rep = ex.run_lemma35(cfg, c0=1e-2)
    assert rep.outcome == ex.ERROR
    assert "left the compact set" in rep.message


def test_lemma35_hypothesis_monitor():
    cfg = ScenarioConfig(**L35, ball_C=0.5, initial_radius=0.5, initial_center=(-2.0,))
    g = cfg.grid
    outside = np.where(np.abs(g.centers[..., 0] + 2.0) < 0.5, 1.0, 0.0)
    rho0 = ScalarField(g, 1e-2 * outside / (outside.sum() * g.h))
    rep = ex.run_lemma35(cfg, c0=1e-3, initial=rho0)
    assert rep.outcome == ex.HYPOTHESIS_NOT_MET
    assert "hypothesis_lost_at" in rep.measured


# convergence -----------------------------------------------------------------------
def test_convergence_from_equilibrium_is_stationary():
    cfg = ScenarioConfig(command="converge", m=2.0, initial="equilibrium", initial_radius=1.5, cells=200, end_time=1.0)
    rate, rep = ex.run_convergence(cfg, snapshot_dt=0.25)
    h = cfg.grid.h
    assert max(rate.d_gamma) <= 2 * h + 1e-12
    assert rate.fits["d_gamma"] is None and "got 0" in rate.fit_errors["d_gamma"]


def test_convergence_short_run_reports_series():
    cfg = ScenarioConfig(command="converge", m=1.5, cells=200, end_time=2.0, initial_center=(0.3,))
    rate, rep = ex.run_convergence(cfg, snapshot_dt=0.25)
    assert len(rate.times) == len(rate.d_pos) == 9
    assert rate.d_pos[-1] < rate.d_pos[0]
    assert rate.series_csv().splitlines()[0] == "t,d_pos,d_gamma"
