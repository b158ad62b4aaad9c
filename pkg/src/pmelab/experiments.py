"""Scenario harness: each lower bound, decay and rate estimate as a falsifiable run.

Constants that are only known to exist (K, alpha, C4, the small-mass
multiplier) are measured and reported; pass criteria are structural.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np
from scipy.optimize import brentq

from . import analytic
from .core import (
    FieldKind,
    Grid,
    Mask,
    PotentialSpec,
    RegionBall,
    ScalarField,
    ball_average,
    hausdorff,
    mass,
    one_sided_distance,
    support,
)
from .solver import SolverConfig, SourceTerm, Trajectory, solve
from .transforms import RegimeError, density_of_pressure, lemma35_exponent, mtilde, pressure_of_density

logger = logging.getLogger(__name__)

PASS, FAIL, HYPOTHESIS_NOT_MET, ERROR = "PASS", "FAIL", "HYPOTHESIS_NOT_MET", "ERROR"
COMMANDS = ("solve", "lemma34", "eq2", "lemma35", "converge")
INITIAL_SHAPES = ("bump", "box", "barenblatt", "equilibrium")


class ConfigError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """Every tunable of a run. Sections group the keys in the config file."""

    command: str = "converge"
    # [scenario]
    m: float = 1.5
    dim: int = 1
    a: float = 0.1
    k: float = 0.3
    k_prime: float | None = None
    gamma: float = 0.5
    c0: float = 1e-3
    c0_scan: tuple[float, ...] = ()
    C1: float | None = None
    C2: float = 1.0
    x0: tuple[float, ...] | None = None
    t0: float = 0.0
    t1: float = 0.0
    end_time: float = 6.0
    snapshot_dt: float = 0.25
    initial: str = "bump"
    initial_center: tuple[float, ...] | None = None
    initial_radius: float = 2.5
    initial_height: float | None = None
    hypothesis_factor: float = 1.0
    bound_C: float = 1.0
    ball_C: float = 3.0
    compact_radius: float = 3.5
    support_rel_threshold: float = 1e-3
    l1_tol: float | None = None
    seed: int = 0
    # [solver]
    cfl_fraction: float = 0.45
    support_guard: float | None = None
    positivity_floor: float = 0.0
    max_dt: float | None = None
    # [grid]
    lower: float = -4.0
    upper: float = 4.0
    cells: int = 400
    # [potential]
    form: str = "quadratic"
    b: float = 1.0
    coeffs: tuple[float, ...] = ()
    # [output]
    plot: bool = True
    csv: bool = True

    def __post_init__(self):
        for name in ("c0_scan", "coeffs"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("x0", "initial_center"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, tuple(float(c) for c in np.atleast_1d(v)))

    def validate(self) -> ScenarioConfig:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if not self.m > 1:
            raise ConfigError(f"m must exceed 1, got {self.m}")
        if self.initial not in INITIAL_SHAPES:
            raise ConfigError(f"unknown initial shape {self.initial!r}")
        if self.form != "none":
            try:
                PotentialSpec(self.form, self.b, self.coeffs)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for name in ("x0", "initial_center"):
            v = getattr(self, name)
            if v is not None and len(v) != self.dim:
                raise ConfigError(f"{name} needs {self.dim} coordinates, got {len(v)}")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.command in ("lemma34", "eq2") and not 0 < self.k < 1:
            raise ConfigError(f"k must lie in (0, 1), got {self.k}")
        if self.command == "lemma34":
            if not 1 < self.m < 2:
                raise ConfigError(f"lemma34 requires 1<m<2, got m={self.m}")
            c1a = self.resolved_C1() * self.a
            if not c1a < 2 - self.m:
                raise ConfigError(
                    f"lemma34 requires C1*a < 2-m so that mtilde < 2; got C1*a={c1a:.4g}, 2-m={2 - self.m:.4g}"
                )
        if self.command == "lemma35" and not 0 < self.c0 < 1:
            raise ConfigError("c0 must lie in (0, 1)")
        if self.cells < 8:
            raise ConfigError("cells must be at least 8")
        return self

    # derived objects --------------------------------------------------------
    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.lower, self.upper, self.cells)

    @property
    def potential(self) -> PotentialSpec | None:
        return None if self.form == "none" else PotentialSpec(self.form, self.b, self.coeffs)

    @property
    def center(self) -> tuple[float, ...]:
        return self.x0 if self.x0 is not None else (0.0,) * self.dim

    @property
    def lam(self) -> float:
        return analytic.lambda_exponent(self.m, self.dim)

    @property
    def resolved_k_prime(self) -> float:
        return 1 - self.lam if self.k_prime is None else self.k_prime

    def resolved_C1(self) -> float:
        """Drift constant; defaults to the C^2 norm of Phi on the unit ball at x0."""
        if self.C1 is not None:
            return self.C1
        phi = self.potential
        return 0.0 if phi is None else phi.c2_norm(RegionBall(self.center, 1.0))

    def solver_config(self, end_time: float, snapshot_times=()) -> SolverConfig:
        return SolverConfig(
            m=self.m,
            end_time=end_time,
            snapshot_times=tuple(snapshot_times),
            cfl_fraction=self.cfl_fraction,
            support_guard=self.support_guard,
            positivity_floor=self.positivity_floor,
            max_dt=self.max_dt,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class Report:
    """Outcome of one scenario: named checks plus measured quantities."""

    scenario: str
    outcome: str
    checks: dict[str, bool] = field(default_factory=dict)
    measured: dict[str, Any] = field(default_factory=dict)
    message: str = ""

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _outcome(checks: dict[str, bool]) -> str:
    return PASS if all(checks.values()) else FAIL


# --------------------------------------------------------------------------
# Initial data
# --------------------------------------------------------------------------
def initial_field(cfg: ScenarioConfig, grid: Grid | None = None) -> ScalarField:
    grid = cfg.grid if grid is None else grid
    xc = np.asarray(cfg.initial_center if cfg.initial_center is not None else cfg.center)
    r = np.linalg.norm(grid.centers - xc, axis=-1)
    R = cfg.initial_radius
    H = 0.1 if cfg.initial_height is None else cfg.initial_height
    if cfg.initial == "bump":
        vals = H * np.clip(1 - (r / R) ** 2, 0, None)
    elif cfg.initial == "box":
        vals = H * (r <= R)
    elif cfg.initial == "barenblatt":
        p = analytic.BarenblattParams.for_exponent(cfg.m, cfg.dim, H, tuple(xc))
        u = analytic.barenblatt_pressure(p, grid.centers, 0.0)
        vals = ((cfg.m - 1) / cfg.m * u) ** (1 / (cfg.m - 1))
    else:
        bump = H * np.clip(1 - (r / R) ** 2, 0, None)
        phi = cfg.potential
        if phi is None:
            raise ConfigError("equilibrium initial data needs a potential")
        eq = compute_equilibrium(phi, float(bump.sum() * grid.cell_volume), grid, cfg.m)
        return eq.density.replace(time=cfg.t0)
    return ScalarField(grid, vals, FieldKind.DENSITY, cfg.t0)


# --------------------------------------------------------------------------
# Equilibrium
# --------------------------------------------------------------------------
@dataclass
class EquilibriumProfile:
    pressure: ScalarField
    Cbar: float
    mass_target: float
    m: float

    @property
    def density(self) -> ScalarField:
        return density_of_pressure(self.pressure, self.m)


def _eq_density(values_phi: np.ndarray, Cbar: float, m: float) -> np.ndarray:
    return ((m - 1) / m * np.clip(Cbar - values_phi, 0, None)) ** (1 / (m - 1))


def compute_equilibrium(potential: PotentialSpec, mass_target: float, grid: Grid, m: float) -> EquilibriumProfile:
    """Mass-matched stationary profile ``u_inf = (Cbar - Phi)_+``.

    ``Cbar`` is found by bracketed root finding on the cell-sum mass.
    """
    if not mass_target > 0:
        raise ValueError("mass_target must be positive")
    P = potential.value(grid.centers)
    lo = float(P.min())
    hi = float(P.max())

    def excess(c):
        return _eq_density(P, c, m).sum() * grid.cell_volume - mass_target

    if excess(hi) < 0:
        raise ValueError(f"mass_target {mass_target} unreachable on the box (max {excess(hi) + mass_target:.4g})")
    Cbar = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    u = np.clip(Cbar - P, 0, None)
    return EquilibriumProfile(ScalarField(grid, u, FieldKind.PRESSURE, 0.0, math.inf), Cbar, mass_target, m)


# --------------------------------------------------------------------------
# Fitting and Hölder estimate
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ExpFit:
    K: float
    alpha: float
    r_squared: float
    n_points: int


def fit_exponential(times, values, resolution_floor: float = 0.0) -> ExpFit:
    """Least squares of ``log d = log K - alpha t`` on points above the floor."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > resolution_floor
    n = int(keep.sum())
    if n < 4:
        raise InsufficientData(f"need at least 4 points above the resolution floor, got {n}")
    t, y = t[keep], np.log(v[keep])
    A = np.vstack([np.ones_like(t), t]).T
    (c, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (c + slope * t)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float((y**2).sum())) else 1.0 - ss_res / ss_tot
    return ExpFit(float(math.exp(c)), float(-slope), r2, n)


def estimate_holder(f: ScalarField, radii=None, center=None, radius: float = 2.0) -> float:
    """Empirical Hölder exponent from the oscillation modulus on ``B_radius(center)``.

    ``omega(r)`` is the largest difference between values at cells a distance
    ``r`` apart along an axis, both inside the ball. The exponent is the
    least-squares slope of ``log omega`` against ``log r``, clamped to (0, 1].
    """
    grid = f.grid
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    inside = np.linalg.norm(grid.centers - center, axis=-1) <= radius
    vals = f.values
    if np.ptp(vals[inside]) == 0:
        raise ValueError("field is constant on the ball; Hölder exponent undefined")
    if radii is None:
        radii = [grid.h * 2**j for j in range(12) if grid.h * 2**j <= radius / 2]
    rs, oms = [], []
    for r in radii:
        s = int(round(r / grid.h))
        if s < 1 or s >= grid.cells:
            continue
        om = 0.0
        for axis in range(grid.dim):
            a = [slice(None)] * grid.dim
            b = [slice(None)] * grid.dim
            a[axis], b[axis] = slice(0, -s), slice(s, None)
            a, b = tuple(a), tuple(b)
            both = inside[a] & inside[b]
            if both.any():
                om = max(om, float(np.abs(vals[b] - vals[a])[both].max()))
        if om > 0:
            rs.append(s * grid.h)
            oms.append(om)
    if len(rs) < 3:
        raise ValueError(f"need at least 3 usable radii, got {len(rs)}")
    slope = np.polyfit(np.log(rs), np.log(oms), 1)[0]
    return float(min(max(slope, 1e-12), 1.0))


# --------------------------------------------------------------------------
# Mass on a small ball -> pointwise pressure lower bound
# --------------------------------------------------------------------------
def lemma34_initial(cfg: ScenarioConfig) -> ScalarField:
    """Flat data on ``B_a(x0)`` whose ball average is ``hypothesis_factor * a^k``."""
    grid = cfg.grid
    ball = RegionBall(cfg.center, cfg.a)
    shape = ball.cell_mask(grid).astype(float)
    if cfg.initial == "bump":
        r = np.linalg.norm(grid.centers - np.asarray(cfg.center), axis=-1)
        shape = np.clip(1 - (r / cfg.a) ** 2, 0, None)
    unit = ball_average(ScalarField(grid, shape), ball)
    return ScalarField(grid, cfg.hypothesis_factor * cfg.a**cfg.k / unit * shape, FieldKind.DENSITY, cfg.t0)


def run_lemma34(cfg: ScenarioConfig, initial: ScalarField | None = None) -> Report:
    cfg.validate()
    if cfg.command != "lemma34":
        cfg = ScenarioConfig(**{**cfg.to_dict(), "command": "lemma34"}).validate()
    C1 = cfg.resolved_C1()
    C1a = C1 * cfg.a
    mt = mtilde(cfg.m, C1a, require_below_two=True)
    a0 = (2 - cfg.m) / C1 if C1 > 0 else math.inf
    rho0 = lemma34_initial(cfg) if initial is None else initial
    ball = RegionBall(cfg.center, cfg.a)
    hyp = ball_average(rho0, ball)
    measured = {
        "C1": C1,
        "C1a": C1a,
        "mtilde": mt,
        "a0": a0,
        "lambda": cfg.lam,
        "k": cfg.k,
        "k_prime": cfg.resolved_k_prime,
        "hypothesis_value": hyp,
        "hypothesis_threshold": cfg.a**cfg.k,
        "initial_pressure_max": float(cfg.m / (cfg.m - 1) * rho0.values.max() ** (cfg.m - 1)),
    }
    if not hyp >= cfg.a**cfg.k * (1 - 1e-12):
        return Report("lemma34", HYPOTHESIS_NOT_MET, {}, measured, "hypothesis not satisfied")
    traj = solve(rho0, cfg.solver_config(cfg.a), drift=cfg.potential)
    u = pressure_of_density(traj.final, cfg.m)
    inside = ball.cell_mask(u.grid)
    umin = float(u.values[inside].min())
    target = cfg.a**cfg.resolved_k_prime
    measured.update(
        {
            "t_final": traj.final.time,
            "min_pressure_on_ball": umin,
            "target": target,
            "margin_ratio": umin / target,
            "steps": traj.diagnostics["steps"],
            "mass_drift": abs(mass(traj.final) - mass(rho0)),
        }
    )
    checks = {"pressure_lower_bound": umin >= target}
    return Report("lemma34", _outcome(checks), checks, measured)


# --------------------------------------------------------------------------
# Signed equation with a sink
# --------------------------------------------------------------------------
def ball_volume_constant(n: int, radius: float = 2.0) -> float:
    return RegionBall((0.0,) * n, radius).volume()


def eq2_initial(cfg: ScenarioConfig, grid: Grid | None = None, radius: float = 1.0) -> ScalarField:
    """``w(.,0) = rho_bar(.,0) * 1_{|x-x0|<=1}`` with ``rho_bar`` the density of a pressure <= 1.

    ``initial_height`` overrides the height; the default is the density of
    the largest admissible pressure ``u = 1``.
    """
    grid = cfg.grid if grid is None else grid
    height = cfg.initial_height
    if height is None:
        height = ((cfg.m - 1) / cfg.m) ** (1 / (cfg.m - 1))
    chi = RegionBall(cfg.center, radius).cell_mask(grid)
    return ScalarField(grid, height * chi, FieldKind.SIGNED, 0.0)


def run_eq2_diagnostics(cfg: ScenarioConfig, w0: ScalarField | None = None, n_snapshots: int = 11) -> Report:
    cfg.validate()
    grid = cfg.grid
    n = cfg.dim
    w0 = eq2_initial(cfg, grid) if w0 is None else w0
    strength = -cfg.C2 * cfg.a
    sink = SourceTerm(RegionBall(cfg.center, 2.0), strength, active=strength != 0)
    times = np.linspace(0, 0.5, n_snapshots)
    scfg = cfg.solver_config(0.5, times)
    traj = solve(w0, scfg, source=sink)

    cn = ball_volume_constant(n)
    masses = np.array(traj.diagnostics["snapshot_mass"])
    ts = np.array(traj.times)
    slope = float(np.polyfit(ts, masses, 1)[0]) if len(ts) > 1 else 0.0
    expected = -cn * cfg.C2 * cfg.a
    if expected == 0:
        slope_err = abs(slope)
    else:
        slope_err = abs(slope / expected - 1)
    identity_err = float(np.max(np.abs(masses - (masses[0] + expected * (ts - ts[0])))))

    outer = RegionBall(cfg.center, 2.0)
    radii = []
    contained = True
    for s in traj.snapshots:
        pos = Mask(grid, s.values > (1e-8 * np.abs(s.values).max() if np.any(s.values) else 0.0))
        contained &= pos.is_contained_in(outer, slack=grid.h)
        pts = pos.points()
        radii.append(float(np.linalg.norm(pts - np.asarray(cfg.center), axis=-1).max()) if len(pts) else 0.0)

    # supersolutions: pure PME from w0 and from a larger rho_bar(.,0)
    super_cfg = cfg.solver_config(0.5, times)
    dens0 = ScalarField(grid, np.clip(w0.values, 0, None), FieldKind.DENSITY, 0.0)
    pme = solve(dens0, super_cfg)
    rhobar0 = eq2_initial(cfg, grid, radius=1.5)
    rhobar0 = ScalarField(grid, np.maximum(rhobar0.values, dens0.values), FieldKind.DENSITY, 0.0)
    rhobar = solve(rhobar0, super_cfg)
    dom_pme = max(float((s.values - p.values).max()) for s, p in zip(traj.snapshots, pme.snapshots))
    dom_bar = max(float((s.values - p.values).max()) for s, p in zip(traj.snapshots, rhobar.snapshots))

    # lower-bound chain at t = 1/2
    ak = cfg.a**cfg.k
    wT = traj.final
    mass0, massT = float(masses[0]), float(masses[-1])
    C4 = 1.0 / (4.0 * cn)
    imax = np.unravel_index(np.argmax(wT.values), grid.shape)
    xstar = grid.centers[imax]
    rball = cfg.a ** (cfg.k / cfg.gamma)
    near = np.linalg.norm(grid.centers - xstar, axis=-1) <= rball
    ball_min = float(wT.values[near].min())
    try:
        gamma_hat = estimate_holder(wT.replace(kind=FieldKind.SIGNED), center=cfg.center)
    except ValueError:
        gamma_hat = math.nan
    premise = mass0 >= ak / 2
    chain = {
        "mass_half": massT >= ak / 4,
        "max_bound": float(wT.values.max()) >= C4 * ak,
        "ball_bound": ball_min >= C4 / 2 * ak,
    }
    checks = {
        "containment": bool(contained),
        "mass_slope": slope_err <= 1e-6,
        "domination_pme": dom_pme <= 1e-12,
        "domination_rhobar": dom_bar <= 1e-12,
    }
    if premise:
        checks.update({f"chain_{k}": v for k, v in chain.items()})
    measured = {
        "c_n": cn,
        "mass_slope": slope,
        "expected_slope": expected,
        "slope_rel_error": slope_err,
        "mass_identity_max_error": identity_err,
        "support_radius": radii,
        "times": ts,
        "min_value": float(traj.diagnostics["value_min"]),
        "domination_excess_pme": dom_pme,
        "domination_excess_rhobar": dom_bar,
        "premise_mass_at_least_half_ak": bool(premise),
        "mass_initial": mass0,
        "mass_final": massT,
        "C4": C4,
        "x_star": xstar,
        "ball_radius": rball,
        "ball_min": ball_min,
        "max_w_half": float(wT.values.max()),
        "chain": chain,
        "gamma_config": cfg.gamma,
        "gamma_estimate": gamma_hat,
    }
    return Report("eq2", _outcome(checks), checks, measured)


# --------------------------------------------------------------------------
# Small mass -> small sup after a logarithmic time
# --------------------------------------------------------------------------
def lemma35_initial(cfg: ScenarioConfig, c0: float) -> ScalarField:
    """Bump of cell-sum mass exactly ``c0`` centred inside ``B_C(0)``."""
    grid = cfg.grid
    xc = np.asarray(cfg.initial_center if cfg.initial_center is not None else (0.0,) * cfg.dim)
    r = np.linalg.norm(grid.centers - xc, axis=-1)
    R = min(cfg.initial_radius, cfg.ball_C)
    shape = np.clip(1 - (r / R) ** 2, 0, None)
    return ScalarField(grid, c0 * shape / (shape.sum() * grid.cell_volume), FieldKind.DENSITY, cfg.t1)


def run_lemma35(cfg: ScenarioConfig, c0: float | None = None, initial: ScalarField | None = None) -> Report:
    cfg.validate()
    c0 = cfg.c0 if c0 is None else c0
    grid = cfg.grid
    rho0 = lemma35_initial(cfg, c0) if initial is None else initial
    k = lemma35_exponent(cfg.m, cfg.dim)
    t2 = cfg.t1 + math.log(1 / c0)
    times = np.linspace(0, t2 - cfg.t1, 21)
    BC = RegionBall((0.0,) * cfg.dim, cfg.ball_C)
    K = RegionBall((0.0,) * cfg.dim, cfg.compact_radius)
    measured: dict[str, Any] = {"c0": c0, "k": k, "t1": cfg.t1, "t2": t2}
    if mass(rho0) == 0:
        measured.update({"max_on_B1": 0.0, "bound": cfg.bound_C * c0**k, "fitted_C": 0.0})
        return Report("lemma35", PASS, {"sup_bound": True}, measured)
    traj = solve(rho0, cfg.solver_config(t2 - cfg.t1, times), drift=cfg.potential)
    inBC = BC.cell_mask(grid)
    lost_at = None
    escaped_at = None
    for s in traj.snapshots:
        if s.values[inBC].sum() * grid.cell_volume > c0 * (1 + 1e-9) and lost_at is None:
            lost_at = s.time
        if not support(s).is_contained_in(K) and escaped_at is None:
            escaped_at = s.time
    if escaped_at is not None:
        measured["escaped_at"] = escaped_at
        return Report("lemma35", ERROR, {}, measured, f"support left the compact set at t={escaped_at:.4g}")
    if lost_at is not None:
        measured["hypothesis_lost_at"] = lost_at
        return Report("lemma35", HYPOTHESIS_NOT_MET, {}, measured, f"hypothesis lost at t={lost_at:.4g}")
    B1 = RegionBall((0.0,) * cfg.dim, 1.0).cell_mask(grid)
    mx = float(traj.final.values[B1].max())
    bound = cfg.bound_C * c0**k
    measured.update({"max_on_B1": mx, "bound": bound, "fitted_C": mx / c0**k})
    checks = {"sup_bound": mx <= bound}
    return Report("lemma35", _outcome(checks), checks, measured)


def run_lemma35_scan(cfg: ScenarioConfig, c0_values=None) -> Report:
    """Fit the slope of ``log max_{B_1} rho(t2)`` against ``log c0``."""
    c0_values = list(cfg.c0_scan or (1e-2, 1e-3, 1e-4)) if c0_values is None else list(c0_values)
    runs = [run_lemma35(cfg, c0) for c0 in c0_values]
    k = lemma35_exponent(cfg.m, cfg.dim)
    maxima = [r.measured.get("max_on_B1", math.nan) for r in runs]
    ok = all(r.outcome in (PASS, FAIL) for r in runs) and all(v > 0 for v in maxima)
    slope = float(np.polyfit(np.log(c0_values), np.log(maxima), 1)[0]) if ok else math.nan
    checks = {"decay_slope": bool(ok and slope >= k - 0.1)}
    measured = {
        "k": k,
        "c0": c0_values,
        "max_on_B1": maxima,
        "slope": slope,
        "fitted_C": [r.measured.get("fitted_C") for r in runs],
        "runs": [r.to_dict() for r in runs],
    }
    if not ok and any(r.outcome == HYPOTHESIS_NOT_MET for r in runs):
        return Report("lemma35_scan", HYPOTHESIS_NOT_MET, checks, measured)
    return Report("lemma35_scan", _outcome(checks), checks, measured)


# --------------------------------------------------------------------------
# Free-boundary convergence
# --------------------------------------------------------------------------
@dataclass
class RateReport:
    times: list[float]
    d_pos: list[float]
    d_gamma: list[float]
    resolution_floor: float
    fits: dict[str, ExpFit | None] = field(default_factory=dict)
    fit_errors: dict[str, str] = field(default_factory=dict)
    monotone_violations: list[float] = field(default_factory=list)
    equilibrium: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.times) == len(self.d_pos) == len(self.d_gamma):
            raise ValueError("distance series must share the time axis")

    def alpha(self, series: str) -> float | None:
        fit = self.fits.get(series)
        return fit.alpha if fit is not None and fit.r_squared >= 0.9 else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = {s: self.alpha(s) for s in ("d_pos", "d_gamma")}
        return _jsonable(d)

    def series_csv(self) -> str:
        rows = ["t,d_pos,d_gamma"]
        rows += [f"{t!r},{p!r},{g!r}" for t, p, g in zip(self.times, self.d_pos, self.d_gamma)]
        return "\n".join(rows) + "\n"


def free_boundary_distances(s: ScalarField, eq_support: Mask, threshold: float) -> tuple[float, float]:
    """``(d_pos, d_gamma)`` for one snapshot against the equilibrium support."""
    S = support(s, threshold)
    G = S.boundary_cells()
    outside = G - eq_support
    d_pos = one_sided_distance(outside, eq_support) if len(outside) else 0.0
    d_gamma = hausdorff(G, eq_support.boundary_cells())
    return d_pos, d_gamma


def run_convergence(
    cfg: ScenarioConfig, end_time: float | None = None, snapshot_dt: float | None = None
) -> tuple[RateReport, Report]:
    cfg.validate()
    phi = cfg.potential
    if phi is None:
        raise ConfigError("convergence runs need a confining potential")
    end_time = cfg.end_time if end_time is None else end_time
    snapshot_dt = cfg.snapshot_dt if snapshot_dt is None else snapshot_dt
    grid = cfg.grid
    rho0 = initial_field(cfg, grid)
    eq = compute_equilibrium(phi, mass(rho0), grid, cfg.m)
    rho_eq = eq.density
    rel = cfg.support_rel_threshold
    eq_support = support(rho_eq, rel * float(rho_eq.values.max()))
    times = np.arange(0.0, end_time + 1e-12, snapshot_dt)
    traj = solve(rho0, cfg.solver_config(end_time, times), drift=phi)
    ts, dp, dg = [], [], []
    for s in traj.snapshots:
        p, g = free_boundary_distances(s, eq_support, rel * float(s.values.max()))
        ts.append(s.time - rho0.time)
        dp.append(p)
        dg.append(g)
    floor = 5 * grid.h
    fits: dict[str, ExpFit | None] = {}
    errors: dict[str, str] = {}
    for name, series in (("d_pos", dp), ("d_gamma", dg)):
        try:
            fits[name] = fit_exponential(ts, series, floor)
        except InsufficientData as exc:
            fits[name] = None
            errors[name] = str(exc)
    violations = [t for t, a, b in zip(ts[1:], dp, dp[1:]) if b > a + 2 * grid.h]
    rate = RateReport(
        ts,
        dp,
        dg,
        floor,
        fits,
        errors,
        violations,
        {"Cbar": eq.Cbar, "mass": eq.mass_target, "support_points": len(eq_support)},
    )
    checks = {
        "d_pos_rate": _rate_ok(fits["d_pos"]),
    }
    if cfg.m < 2:
        checks["d_gamma_rate"] = _rate_ok(fits["d_gamma"])
    measured = {
        "m": cfg.m,
        "fits": {k: (asdict(v) if v else None) for k, v in fits.items()},
        "alpha": {s: rate.alpha(s) for s in ("d_pos", "d_gamma")},
        "monotone_violations": violations,
        "d_gamma_asserted": cfg.m < 2,
        "steps": traj.diagnostics["steps"],
        "mass_drift": abs(mass(traj.final) - mass(rho0)),
    }
    return rate, Report("converge", _outcome(checks), checks, measured)


def _rate_ok(fit: ExpFit | None) -> bool:
    return fit is not None and fit.alpha > 0 and fit.r_squared >= 0.95


# --------------------------------------------------------------------------
# Plain solve
# --------------------------------------------------------------------------
def run_solve(cfg: ScenarioConfig) -> tuple[Trajectory, Report]:
    """Evolve the configured initial data and check the balance laws."""
    cfg.validate()
    rho0 = initial_field(cfg)
    times = np.arange(0.0, cfg.end_time + 1e-12, cfg.snapshot_dt)
    phi = cfg.potential
    traj = solve(rho0, cfg.solver_config(cfg.end_time, times), drift=phi)
    masses = np.array(traj.diagnostics["snapshot_mass"])
    drift_rel = float(np.abs(masses - masses[0]).max() / masses[0]) if masses[0] > 0 else 0.0
    checks = {
        "mass_conservation": drift_rel <= 1e-10 or traj.diagnostics["clamped_mass"] > 0,
        "positivity": traj.diagnostics["value_min"] >= cfg.positivity_floor - 1e-15,
    }
    measured: dict[str, Any] = {
        "mass_relative_drift": drift_rel,
        "clamped_mass": traj.diagnostics["clamped_mass"],
        "steps": traj.diagnostics["steps"],
    }
    if cfg.initial == "barenblatt" and phi is None:
        p = analytic.BarenblattParams.for_exponent(
            cfg.m, cfg.dim, 0.1 if cfg.initial_height is None else cfg.initial_height,
            cfg.initial_center if cfg.initial_center is not None else cfg.center,
        )
        u = analytic.barenblatt_pressure(p, traj.grid.centers, cfg.end_time)
        exact = ((cfg.m - 1) / cfg.m * u) ** (1 / (cfg.m - 1))
        l1 = float(np.abs(traj.final.values - exact).sum() * traj.grid.cell_volume)
        measured["l1_error_vs_barenblatt"] = l1
        if cfg.l1_tol is not None:
            checks["barenblatt_l1"] = l1 <= cfg.l1_tol
    return traj, Report("solve", _outcome(checks), checks, measured)


def regime_guard(m: float, C1a: float) -> float:
    """Reject configurations outside ``1 < m < 2``, ``mtilde < 2``."""
    if not 1 < m < 2:
        raise RegimeError(f"requires 1<m<2, got m={m}")
    return mtilde(m, C1a, require_below_two=True)
