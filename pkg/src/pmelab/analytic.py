"""Closed-form Barenblatt pressure profiles and barrier certification.

The pressure profile ``U(x, t) = (C (t+1)^(2 lam) - lam/2 |x - x*|^2)_+ / (t+1)``
with ``lam = 1/((m-1) d + 2)`` solves ``U_t = (m-1) U Lap U + |DU|^2`` on its
positivity set. The drained barrier subtracts ``2 C1 a int_0^t c(s) ds`` where
``c(t) = sqrt(C) (t+1)^(lam-1)`` bounds both ``a U`` and ``|DU|``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Grid


def lambda_exponent(m: float, d: int) -> float:
    if m <= 1 or d < 1:
        raise ValueError("need m > 1 and d >= 1")
    lam = 1.0 / ((m - 1) * d + 2)
    assert 0 < lam < 0.5
    return lam


@dataclass(frozen=True)
class BarenblattParams:
    C: float
    lam: float
    center: tuple[float, ...] = (0.0,)
    time_offset: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 < self.lam < 0.5:
            raise ValueError("lambda must lie in (0, 1/2)")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @classmethod
    def for_exponent(cls, m: float, d: int, C: float, center=None) -> BarenblattParams:
        return cls(C, lambda_exponent(m, d), tuple(center) if center is not None else (0.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.center)

    def peak(self, t: float) -> float:
        s = t + self.time_offset
        return self.C * s ** (2 * self.lam) / s

    def support_radius(self, t: float) -> float:
        return math.sqrt(2 * self.C / self.lam) * (t + self.time_offset) ** self.lam


@dataclass(frozen=True)
class BarrierParams:
    base: BarenblattParams
    C1: float
    a: float

    def __post_init__(self):
        if self.C1 * self.a < 0:
            raise ValueError("need C1*a >= 0")


def _r2(p: BarenblattParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sum((x - np.asarray(p.center)) ** 2, axis=-1)


def barenblatt_pressure(p: BarenblattParams, x, t: float) -> np.ndarray:
    """Evaluate ``U``; ``x`` has shape ``(..., d)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    s = t + p.time_offset
    return np.maximum(p.C * s ** (2 * p.lam) - 0.5 * p.lam * _r2(p, x), 0.0) / s


def barenblatt_gradient_norm(p: BarenblattParams, x, t: float) -> np.ndarray:
    """``|DU|``, which is ``lam |x - x*| / (t+1)`` inside the support."""
    inside = barenblatt_pressure(p, x, t) > 0
    return np.where(inside, p.lam * np.sqrt(_r2(p, x)) / (t + p.time_offset), 0.0)


def growth_bound(p: BarenblattParams, t) -> np.ndarray:
    """``c(t) = sqrt(C) (t+1)^(lam-1)``."""
    return math.sqrt(p.C) * (np.asarray(t, dtype=float) + p.time_offset) ** (p.lam - 1)


def drainage(bp: BarrierParams, t) -> np.ndarray:
    """``2 C1 a int_0^t c(s) ds`` in closed form."""
    p = bp.base
    t = np.asarray(t, dtype=float)
    s0 = p.time_offset
    return 2 * bp.C1 * bp.a * math.sqrt(p.C) * ((t + s0) ** p.lam - s0**p.lam) / p.lam


def barrier_eval(bp: BarrierParams, x, t: float) -> np.ndarray:
    return np.maximum(barenblatt_pressure(bp.base, x, t) - drainage(bp, t), 0.0)


@dataclass
class GradientBoundReport:
    a: float
    t_max: float
    max_excess_aU: float
    max_excess_grad: float
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def gradient_bound_check(
    p: BarenblattParams, a: float, t_max: float | None = None, *, nx: int | None = None, nt: int = 201
) -> GradientBoundReport:
    """Sample ``a U`` and ``|DU|`` against ``c(t)`` for ``0 <= t <= t_max <= 1/a``.

    PASS when both excesses are at most ``10 h`` with ``h`` the sampling step.
    """
    if nx is None:
        nx = 4001 if p.dim == 1 else 401
    t_max = 1.0 / a if t_max is None else t_max
    if t_max > 1.0 / a * (1 + 1e-12):
        raise ValueError("t_max must not exceed 1/a")
    ts = np.linspace(0.0, t_max, nt)
    R = p.support_radius(t_max)
    s = np.linspace(-R, R, nx)
    h = s[1] - s[0]
    offs = np.stack(np.meshgrid(*([s] * p.dim), indexing="ij"), axis=-1).reshape(-1, p.dim)
    x = offs + np.asarray(p.center)
    ex_u = ex_g = -math.inf
    for t in ts:
        U = barenblatt_pressure(p, x, t)
        pos = U > 0
        c = float(growth_bound(p, t))
        ex_u = max(ex_u, float((a * U[pos]).max()) - c)
        # sup of |DU| over the closed positivity set is attained on the free boundary
        g_edge = p.lam * p.support_radius(t) / (t + p.time_offset)
        ex_g = max(ex_g, float(barenblatt_gradient_norm(p, x, t)[pos].max()) - c, g_edge - c)
    slack = 10 * h
    return GradientBoundReport(a, t_max, float(ex_u), float(ex_g), float(slack), bool(ex_u <= slack and ex_g <= slack))


# --------------------------------------------------------------------------
# Residual certification
# --------------------------------------------------------------------------
@dataclass
class ResidualResult:
    residual: np.ndarray  # (n_times, *grid.shape), NaN off the certified set
    max_residual: float
    max_abs_residual: float
    n_points: int
    h: float
    dt: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("residual")
        return d


def residual_pressure_operator(
    field_fn,
    m: float,
    C1: float,
    a: float,
    grid: Grid,
    times,
    delta: float,
    dt: float | None = None,
) -> ResidualResult:
    """Pointwise residual of the drifted pressure inequality by central differences.

    ``R = f_t - (m-1) f Lap f - |Df|^2 + C1 a (|Df| + a f)`` is evaluated on
    the set where ``f > delta`` and every stencil point has ``f > 0``.
    ``field_fn(x, t)`` takes points of shape ``(..., d)``. A subsolution has
    ``max R <= 0`` up to discretization error.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    times = np.asarray(times, dtype=float)
    if dt is None:
        dt = float(np.min(np.diff(times))) if len(times) > 1 else grid.h
    if times.min() - dt < 0:
        raise ValueError(f"time stencil exits the sampled region: t - dt = {times.min() - dt:.3g} < 0")
    h = grid.h
    x = grid.centers
    out = np.full((len(times),) + grid.shape, np.nan)
    for i, t in enumerate(times):
        f = field_fn(x, t)
        ft = (field_fn(x, t + dt) - field_fn(x, t - dt)) / (2 * dt)
        lap = np.zeros_like(f)
        grad2 = np.zeros_like(f)
        ok = (f > delta) & (field_fn(x, t + dt) > 0) & (field_fn(x, t - dt) > 0)
        for k in range(grid.dim):
            e = np.zeros(grid.dim)
            e[k] = h
            fp, fm = field_fn(x + e, t), field_fn(x - e, t)
            lap += (fp - 2 * f + fm) / h**2
            grad2 += ((fp - fm) / (2 * h)) ** 2
            ok &= (fp > 0) & (fm > 0)
        R = ft - (m - 1) * f * lap - grad2 + C1 * a * (np.sqrt(grad2) + a * f)
        out[i][ok] = R[ok]
    valid = ~np.isnan(out)
    n = int(valid.sum())
    mx = float(out[valid].max()) if n else -math.inf
    mabs = float(np.abs(out[valid]).max()) if n else 0.0
    return ResidualResult(out, mx, mabs, n, h, dt)


@dataclass
class BarrierReport:
    m: float
    dim: int
    a: float
    C: float
    lam: float
    C1: float
    levels: list = field(default_factory=list)
    calibration_constant: float = 0.0
    order: float = math.nan
    gradient_bound: dict = field(default_factory=dict)
    terminal: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def certify_barrier(
    m: float,
    dim: int,
    a: float,
    C1: float,
    *,
    refine: int = 3,
    cells: int = 80,
    t_final: float | None = None,
    n_times: int = 12,
) -> BarrierReport:
    """Refinement sweep certifying the drained barrier as a subsolution.

    Level ``j`` uses ``h_j = h_0 / 2^j`` and ``dt_j = dt_0 / 2^j``. The exact
    Barenblatt profile (``C1 = 0``) calibrates ``tol = A (h + dt)``; the
    drained barrier passes when its largest residual stays below ``tol`` at
    every level and the calibration residual refines at order >= 0.8.
    """
    lam = lambda_exponent(m, dim)
    C = a ** (lam / 2)
    base = BarenblattParams(C, lam, (0.0,) * dim)
    bp = BarrierParams(base, C1, a)
    t_final = 1.0 / a - 0.5 if t_final is None else t_final
    L = 1.05 * base.support_radius(t_final + 1.0)
    peak_min = base.peak(t_final)
    exact = lambda x, t: barenblatt_pressure(base, x, t)  # noqa: E731
    barrier = lambda x, t: barrier_eval(bp, x, t)  # noqa: E731

    rows = []
    for j in range(refine):
        grid = Grid(dim, -L, L, cells * 2**j)
        dt = 0.05 / 2**j
        times = np.linspace(dt, t_final, n_times)
        delta = 1e-3 * peak_min
        ex = residual_pressure_operator(exact, m, 0.0, a, grid, times, delta, dt)
        br = residual_pressure_operator(barrier, m, C1, a, grid, times, delta, dt)
        rows.append(
            {
                "h": grid.h,
                "dt": dt,
                "exact_max_abs": ex.max_abs_residual,
                "barrier_max": br.max_residual,
                "barrier_points": br.n_points,
            }
        )
    A = max(r["exact_max_abs"] / (r["h"] + r["dt"]) for r in rows)
    for r in rows:
        r["tol"] = A * (r["h"] + r["dt"])
        r["certified"] = bool(r["barrier_max"] <= r["tol"])
    errs = [r["exact_max_abs"] for r in rows]
    if len(errs) >= 2 and min(errs) > 0:
        order = float(np.mean([math.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]))
    else:
        order = math.nan
    gb = gradient_bound_check(base, a)
    # final-time bound on B_3(x*) compared with a^(1-lam)
    t_end = 1.0 / a - 0.5
    ring = np.array([[3.0] + [0.0] * (dim - 1)])
    terminal = {
        "t": t_end,
        "barrier_at_radius_3": float(barrier_eval(bp, ring, t_end)[0]),
        "target": a ** (1 - lam),
        "drainage": float(drainage(bp, t_end)),
        "peak": base.peak(t_end),
    }
    passed = bool(all(r["certified"] for r in rows) and order >= 0.8 and gb.passed)
    return BarrierReport(m, dim, a, C, lam, C1, rows, A, order, gb.to_dict(), terminal, passed)
