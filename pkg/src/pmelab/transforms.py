"""Exact variable changes: pressure/density, parabolic zoom, and the mass scaling.

The rescalings act on whole trajectories by sampling: multilinear in space,
linear in time between stored snapshots. Both interpolants are linear and
order preserving, so they commute with the comparison arguments built on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import FieldKind, Grid, ScalarField
from .solver import Trajectory


class RegimeError(ValueError):
    """Raised when parameters leave the range where the lower-bound argument applies."""


@dataclass(frozen=True)
class TransformParams:
    a: float
    x0: tuple[float, ...] = (0.0,)
    t0: float = 0.0
    C1: float = 0.0
    m: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("scale a must be positive")
        if self.C1 < 0:
            raise ValueError("C1 must be nonnegative")
        object.__setattr__(self, "x0", tuple(float(c) for c in np.atleast_1d(self.x0)))

    @property
    def C1a(self) -> float:
        return self.C1 * self.a


def pressure_of_density(rho: ScalarField, m: float, pressure_cap: float = math.inf) -> ScalarField:
    """``u = m/(m-1) * rho^(m-1)``."""
    if m <= 1:
        raise ValueError("m must exceed 1")
    if rho.values.min() < 0:
        raise ValueError("density must be nonnegative")
    u = m / (m - 1) * rho.values ** (m - 1)
    return ScalarField(rho.grid, u, FieldKind.PRESSURE, rho.time, pressure_cap)


def density_of_pressure(u: ScalarField, m: float) -> ScalarField:
    """``rho = ((m-1)/m * u)^(1/(m-1))``."""
    if m <= 1:
        raise ValueError("m must exceed 1")
    if u.values.min() < 0:
        raise ValueError("pressure must be nonnegative")
    rho = ((m - 1) / m * u.values) ** (1 / (m - 1))
    return ScalarField(u.grid, rho, FieldKind.DENSITY, u.time)


def mtilde(m: float, C1a: float, require_below_two: bool = False) -> float:
    """Exponent after absorbing the drift gradient term: ``(m-1)/(1-C1a) + 1``.

    With ``require_below_two`` a result ``>= 2`` raises :class:`RegimeError`.
    """
    if not 0 <= C1a < 1:
        raise ValueError(f"need 0 <= C1*a < 1, got {C1a}")
    mt = (m - 1) / (1 - C1a) + 1
    assert mt >= m
    if require_below_two and mt >= 2:
        raise RegimeError(
            f"mtilde = {mt:.6g} >= 2 (m={m}, C1*a={C1a}); the lower bound requires 1<m<2 and C1*a < 2-m"
        )
    return mt


def ubar_transform(u: ScalarField, C1a: float) -> ScalarField:
    if not 0 <= C1a < 1:
        raise ValueError(f"need 0 <= C1*a < 1, got {C1a}")
    return u.replace(values=(1 - C1a) * u.values)


def lemma35_exponent(m: float, n: int) -> float:
    """Decay exponent ``2 / (m (n+1))`` of the small-mass sup bound."""
    if m <= 1 or n < 1:
        raise ValueError("need m > 1 and n >= 1")
    return 2.0 / (m * (n + 1))


# --------------------------------------------------------------------------
# Trajectory sampling
# --------------------------------------------------------------------------
class _Sampler:
    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.grid = traj.grid
        self.times = np.asarray(traj.times)
        axes = (self.grid.axis_centers,) * self.grid.dim
        self._interp = [
            RegularGridInterpolator(axes, s.values, method="linear", bounds_error=True) for s in traj.snapshots
        ]

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        g = self.grid
        x = np.asarray(x, dtype=float)
        tol = 1e-9 * (g.upper - g.lower)
        bad = np.any((x < g.lower - tol) | (x > g.upper + tol), axis=-1)
        if bad.any():
            first = x[bad][0]
            raise ValueError(f"mapped point x={tuple(first.tolist())} at t={t:.6g} lies outside the sampled box")
        c = g.axis_centers
        xc = np.clip(x, c[0], c[-1]).reshape(-1, g.dim)
        ttol = 1e-9 * max(1.0, abs(t))
        if t < self.times[0] - ttol or t > self.times[-1] + ttol:
            raise ValueError(
                f"mapped time t={t:.6g} outside sampled range [{self.times[0]:.6g}, {self.times[-1]:.6g}]"
            )
        t = min(max(t, self.times[0]), self.times[-1])
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(j, len(self.times) - 1)
        if j == len(self.times) - 1 or abs(self.times[j] - t) <= ttol:
            out = self._interp[j](xc)
        else:
            w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
            out = (1 - w) * self._interp[j](xc) + w * self._interp[j + 1](xc)
        return out.reshape(x.shape[:-1])


def parabolic_rescale(
    traj: Trajectory, p: TransformParams, target_grid: Grid, target_times
) -> Trajectory:
    """``u~(x, t) = u(a (x - x0), a^2 (t - t0))`` sampled on a new grid and times."""
    kind = traj.snapshots[0].kind
    if kind is not FieldKind.PRESSURE:
        raise ValueError("parabolic_rescale expects a pressure trajectory")
    sampler = _Sampler(traj)
    x = target_grid.centers
    mapped = p.a * (x - np.asarray(p.x0))
    cap = traj.snapshots[0].pressure_cap
    snaps = [
        ScalarField(target_grid, sampler(mapped, p.a**2 * (t - p.t0)), kind, float(t), cap)
        for t in target_times
    ]
    return Trajectory(snaps)


def lemma35_rescale(traj: Trajectory, a: float, m: float, target_grid: Grid, target_times) -> Trajectory:
    """``rho~(x, t) = rho(a^(m/2) x, a t) / a`` sampled on a new grid and times."""
    if not a > 0:
        raise ValueError("scale a must be positive")
    if traj.snapshots[0].kind is not FieldKind.DENSITY:
        raise ValueError("lemma35_rescale expects a density trajectory")
    sampler = _Sampler(traj)
    mapped = a ** (m / 2) * target_grid.centers
    snaps = [
        ScalarField(target_grid, sampler(mapped, a * t) / a, FieldKind.DENSITY, float(t)) for t in target_times
    ]
    return Trajectory(snaps)


def to_pressure(traj: Trajectory, m: float) -> Trajectory:
    return Trajectory([pressure_of_density(s, m) for s in traj.snapshots], traj.config, traj.drift, traj.source)


def to_density(traj: Trajectory, m: float) -> Trajectory:
    return Trajectory([density_of_pressure(s, m) for s in traj.snapshots], traj.config, traj.drift, traj.source)
