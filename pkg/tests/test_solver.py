import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmelab import analytic
from pmelab.core import FieldKind, Grid, PotentialSpec, RegionBall, ScalarField, mass
from pmelab.experiments import compute_equilibrium
from pmelab.solver import (
    CFLViolation,
    DomainTooSmall,
    SolverConfig,
    SourceTerm,
    cfl_dt,
    solve,
    step_density,
    step_signed,
)

QUAD = PotentialSpec("quadratic")


def bump(grid, center=0.0, radius=1.0, height=1.0, kind=FieldKind.DENSITY):
    r = np.linalg.norm(grid.centers - center, axis=-1)
    return ScalarField(grid, height * np.clip(1 - (r / radius) ** 2, 0, None), kind)


def test_cfl_dt_plugged_rule():
    g = Grid(1, -2.0, 2.0, 400)
    f = ScalarField(g, np.where(np.abs(g.centers[..., 0]) < 0.5, 1.0, 0.0))
    assert cfl_dt(f, 2.0) == pytest.approx(1.125e-5, rel=1e-12)


def test_cfl_dt_zero_field_returns_remaining():
    g = Grid(1, -1.0, 1.0, 50)
    assert cfl_dt(ScalarField(g, np.zeros(g.shape)), 2.0, remaining=0.3) == 0.3


def test_cfl_dt_scaling_in_amplitude():
    g = Grid(1, -2.0, 2.0, 100)
    f = bump(g)
    assert cfl_dt(f * 2.0, 2.0) == pytest.approx(cfl_dt(f, 2.0) / 2, rel=1e-12)


def test_cfl_dt_drift_limited():
    g = Grid(1, -4.0, 4.0, 100)
    f = bump(g, height=1e-6)
    vmax = 4.0 - g.h  # outermost interior face
    assert cfl_dt(f, 2.0, QUAD) == pytest.approx(0.45 * g.h / (2 * vmax), rel=1e-12)


def test_step_density_zero_stays_zero():
    g = Grid(2, -1.0, 1.0, 16)
    out = step_density(ScalarField(g, np.zeros(g.shape)), QUAD, 1.5, 1e-3)
    assert not out.values.any()
    assert out.time == pytest.approx(1e-3)


def test_step_density_rejects_large_step():
    g = Grid(1, -2.0, 2.0, 100)
    f = bump(g)
    with pytest.raises(CFLViolation):
        step_density(f, None, 2.0, 10 * cfl_dt(f, 2.0))


def test_domain_too_small_reports_time():
    g = Grid(1, -1.0, 1.0, 40)
    f = ScalarField(g, np.ones(g.shape), FieldKind.DENSITY, 0.7)
    with pytest.raises(DomainTooSmall, match="t=0.7"):
        step_density(f, None, 2.0, 1e-6)


def test_stationary_profile_one_step_change():
    for cells in (200, 400):
        g = Grid(1, -2.0, 2.0, cells)
        rho = compute_equilibrium(QUAD, 1 / 3, g, 2.0).density
        dt = cfl_dt(rho, 2.0, QUAD)
        change = np.abs(step_density(rho, QUAD, 2.0, dt).values - rho.values).max()
        assert change <= g.h


def test_step_signed_zero_without_source():
    g = Grid(1, -4.0, 4.0, 80)
    out = step_signed(ScalarField(g, np.zeros(g.shape), FieldKind.SIGNED), 1.5, None, 0.01)
    assert not out.values.any()


@pytest.mark.parametrize("dim,cells", [(1, 80), (2, 40)])
def test_step_signed_pure_source(dim, cells):
    g = Grid(dim, -4.0, 4.0, cells)
    s, dt = 0.3, 0.01
    src = SourceTerm(RegionBall((0.0,) * dim, 2.0), -s)
    out = step_signed(ScalarField(g, np.zeros(g.shape), FieldKind.SIGNED), 1.5, src, dt)
    r = np.linalg.norm(g.centers, axis=-1)
    inner = r < 2.0 - g.h * math.sqrt(dim)
    outer = r > 2.0 + g.h * math.sqrt(dim)
    np.testing.assert_allclose(out.values[inner], -s * dt, rtol=1e-12)
    assert not out.values[outer].any()
    assert out.values.min() >= -s * dt * (1 + 1e-12) and out.values.max() <= 0


@pytest.mark.parametrize("dim,cells,cn", [(1, 200, 4.0), (2, 60, 4 * math.pi)])
def test_mass_drainage_exact(dim, cells, cn):
    g = Grid(dim, -4.0, 4.0, cells)
    w0 = ScalarField(g, RegionBall((0.0,) * dim, 1.0).cell_mask(g) * 0.4, FieldKind.SIGNED)
    C2a = 1e-2
    src = SourceTerm(RegionBall((0.0,) * dim, 2.0), -C2a)
    traj = solve(w0, SolverConfig(1.5, 0.2, (0.1,)), source=src)
    steps = traj.diagnostics["steps"]
    for s in traj.snapshots:
        expected = mass(w0) - cn * C2a * s.time
        assert abs(mass(s) - expected) <= 1e-12 * steps


def test_solve_zero_end_time_returns_initial():
    g = Grid(1, -2.0, 2.0, 50)
    f = bump(g)
    traj = solve(f, SolverConfig(2.0, 0.0))
    assert len(traj.snapshots) == 1
    np.testing.assert_array_equal(traj.final.values, f.values)


def test_solve_lands_on_snapshot_times():
    g = Grid(1, -3.0, 3.0, 60)
    traj = solve(bump(g), SolverConfig(2.0, 0.3, (0.05, 0.2)))
    assert traj.times == pytest.approx([0.0, 0.05, 0.2, 0.3], abs=1e-14)


def test_solve_rejects_pressure():
    g = Grid(1, -2.0, 2.0, 50)
    with pytest.raises(ValueError):
        solve(bump(g, kind=FieldKind.PRESSURE, height=0.5), SolverConfig(2.0, 0.1))


@given(st.floats(1.2, 3.0), st.floats(-0.5, 0.5), st.floats(0.3, 1.0), st.floats(0.1, 2.0))
def test_mass_conserved_without_drift(m, center, radius, height):
    g = Grid(1, -3.0, 3.0, 60)
    f = bump(g, center, radius, height)
    traj = solve(f, SolverConfig(m, 0.05))
    assert mass(traj.final) == pytest.approx(mass(f), rel=1e-10)
    assert traj.diagnostics["clamped_mass"] == 0.0


def test_mass_conserved_with_drift_2d():
    g = Grid(2, -3.0, 3.0, 40)
    f = bump(g, np.array([0.4, -0.2]), 1.0, 0.5)
    traj = solve(f, SolverConfig(1.5, 0.1), drift=QUAD)
    assert mass(traj.final) == pytest.approx(mass(f), rel=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_comparison_random_pair(seed):
    rng = np.random.default_rng(seed)
    g = Grid(1, -3.0, 3.0, 60)
    base = bump(g, rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.2), rng.uniform(0.1, 1.0))
    upper = base.values + rng.random(g.shape) * bump(g, 0.0, 1.5, 0.5).values
    cfg = SolverConfig(1.5, 0.05, (0.025,), dt=0.4 * cfl_dt(ScalarField(g, upper), 1.5, QUAD))
    lo = solve(base, cfg, drift=QUAD)
    hi = solve(ScalarField(g, upper), cfg, drift=QUAD)
    for a, b in zip(lo.snapshots, hi.snapshots):
        assert np.all(a.values <= b.values + 1e-12)


def test_barenblatt_convergence_factor():
    m = 2.0
    p = analytic.BarenblattParams.for_exponent(m, 1, 0.5)
    errs = []
    for cells in (100, 200, 400):
        g = Grid(1, -3.0, 3.0, cells)
        u0 = analytic.barenblatt_pressure(p, g.centers, 0.0)
        rho0 = ScalarField(g, ((m - 1) / m * u0) ** (1 / (m - 1)))
        traj = solve(rho0, SolverConfig(m, 0.5))
        exact = ((m - 1) / m * analytic.barenblatt_pressure(p, g.centers, 0.5)) ** (1 / (m - 1))
        errs.append(np.abs(traj.final.values - exact).sum() * g.h)
    assert errs[0] / errs[1] >= 1.7 and errs[1] / errs[2] >= 1.7


def test_export_writes_manifest(tmp_path):
    g = Grid(1, -2.0, 2.0, 40)
    traj = solve(bump(g, height=0.5), SolverConfig(2.0, 0.01, (0.005,)))
    paths = traj.export(tmp_path, "run")
    names = sorted(p.name for p in paths)
    assert "run_manifest.json" in names and "run_steps.csv" in names
    assert sum(n.endswith(".csv") and "steps" not in n for n in names) == 3
