"""Explicit monotone finite-volume steppers.

Two equations share one kernel:

* density form with drift, ``rho_t = Lap(rho^m) + div(rho grad Phi)``;
* signed form with a source, ``w_t = Lap(w|w|^(m-1)) + s * 1_region``.

Interface fluxes are ``-(phi(f_R) - phi(f_L))/h`` for the degenerate
diffusion (``phi(f) = f|f|^(m-1)``) plus first-order upwinding of ``f`` along
``-grad Phi``. Box edges carry zero flux, so the cell sum changes only
through the source and (density fields only) positivity clamping.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import FieldKind, Grid, PotentialSpec, RegionBall, ScalarField, write_field

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    pass


class DomainTooSmall(SolverError):
    def __init__(self, time: float, detail: str = ""):
        self.time = time
        super().__init__(f"domain too small: support within guard of box edge at t={time:.6g}{detail}")


@dataclass(frozen=True)
class SolverConfig:
    m: float
    end_time: float
    snapshot_times: tuple[float, ...] = ()
    cfl_fraction: float = 0.45
    support_guard: float | None = None  # defaults to 4h
    positivity_floor: float = 0.0
    max_dt: float | None = None
    dt: float | None = None  # fixed step; checked against the monotonicity limit

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"m must exceed 1, got {self.m}")
        if self.end_time < 0:
            raise ValueError("end_time must be nonnegative")
        if not 0 < self.cfl_fraction <= 1:
            raise ValueError("cfl_fraction must lie in (0, 1]")
        times = tuple(sorted(float(t) for t in self.snapshot_times))
        if times and (times[0] < 0 or times[-1] > self.end_time):
            raise ValueError("snapshot_times must lie in [0, end_time]")
        object.__setattr__(self, "snapshot_times", times)

    def guard(self, grid: Grid) -> float:
        return 4 * grid.h if self.support_guard is None else self.support_guard


@dataclass(frozen=True)
class SourceTerm:
    """Constant-rate source ``strength`` on a ball (negative for a sink)."""

    region: RegionBall
    strength: float
    active: bool = True

    def __post_init__(self):
        if not math.isfinite(self.strength):
            raise ValueError("source strength must be finite")

    def rate(self, grid: Grid) -> np.ndarray:
        if not self.active or self.strength == 0:
            return np.zeros(grid.shape)
        return self.strength * _weights(grid, self.region)

    def total_rate(self, grid: Grid) -> float:
        """d/dt of the cell-sum mass contributed by the source."""
        return float(self.rate(grid).sum() * grid.cell_volume)


@lru_cache(maxsize=64)
def _weights(grid: Grid, region: RegionBall) -> np.ndarray:
    w = region.overlap_fractions(grid)
    w.setflags(write=False)
    return w


@dataclass
class Trajectory:
    snapshots: list[ScalarField]
    config: SolverConfig | None = None
    drift: PotentialSpec | None = None
    source: SourceTerm | None = None
    diagnostics: dict = field(default_factory=dict)
    step_log: np.ndarray | None = None  # rows of (t, dt, clamped_mass, min, max)

    def __post_init__(self):
        times = self.times
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        if any(s.grid != self.snapshots[0].grid for s in self.snapshots):
            raise ValueError("all snapshots must share one grid")

    @property
    def times(self) -> list[float]:
        return [s.time for s in self.snapshots]

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    def at(self, t: float, tol: float = 1e-9) -> ScalarField:
        for s in self.snapshots:
            if abs(s.time - t) <= tol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")

    def export(self, directory: str | Path, stem: str = "snapshot") -> list[Path]:
        """One CSV per snapshot plus ``<stem>_manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [write_field(s, directory / f"{stem}_{i:04d}.csv") for i, s in enumerate(self.snapshots)]
        manifest = {
            "config": asdict(self.config) if self.config else None,
            "drift": asdict(self.drift) if self.drift else None,
            "source": asdict(self.source) if self.source else None,
            "snapshots": [{"file": p.name, "t": s.time} for p, s in zip(paths, self.snapshots)],
            "diagnostics": self.diagnostics,
        }
        if self.step_log is not None:
            spath = directory / f"{stem}_steps.csv"
            np.savetxt(spath, self.step_log, delimiter=",", fmt="%.17g", header="t,dt,clamped_mass,min,max")
            manifest["step_log"] = spath.name
            paths.append(spath)
        mpath = directory / f"{stem}_manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return paths + [mpath]


# --------------------------------------------------------------------------
# Kernel
# --------------------------------------------------------------------------
@lru_cache(maxsize=64)
def _face_velocities(grid: Grid, drift: PotentialSpec) -> tuple[np.ndarray, ...]:
    """Velocity ``-dPhi/dx_k`` at interior faces normal to each axis."""
    out = []
    for axis in range(grid.dim):
        pts = grid.centers.copy()
        sl = [slice(None)] * grid.dim
        sl[axis] = slice(0, -1)
        pts = pts[tuple(sl)]
        pts[..., axis] += 0.5 * grid.h
        v = -drift.partial(pts, axis)
        v.setflags(write=False)
        out.append(v)
    return tuple(out)


def _max_speed(grid: Grid, drift: PotentialSpec | None) -> float:
    if drift is None:
        return 0.0
    return max(float(np.abs(v).max()) for v in _face_velocities(grid, drift))


def _phi(values: np.ndarray, m: float) -> np.ndarray:
    return np.sign(values) * np.abs(values) ** m


def _monotone_limit(values: np.ndarray, grid: Grid, m: float, speed: float) -> float:
    """Largest dt keeping the explicit update order preserving."""
    d, h = grid.dim, grid.h
    fmax = float(np.abs(values).max())
    rate = 2 * d * m * fmax ** (m - 1) / h**2 + 2 * d * speed / h
    return math.inf if rate == 0 else 1.0 / rate


def cfl_dt(
    f: ScalarField,
    m: float,
    drift: PotentialSpec | None = None,
    *,
    cfl_fraction: float = 0.45,
    remaining: float = math.inf,
    source: SourceTerm | None = None,
) -> float:
    """Stable explicit step for the current field.

    ``cfl_fraction * min(h^2 / (2 d m max|f|^(m-1)), h / (2 d max|grad Phi|))``,
    capped by ``remaining``. A zero field with no active source has nothing to
    evolve and gets the remaining time.
    """
    grid = f.grid
    d, h = grid.dim, grid.h
    fmax = float(np.abs(f.values).max())
    source_on = source is not None and source.active and source.strength != 0
    if fmax == 0 and not source_on:
        return remaining
    diff = h**2 / (2 * d * m * fmax ** (m - 1)) if fmax > 0 else math.inf
    speed = _max_speed(grid, drift)
    adv = h / (2 * d * speed) if speed > 0 else math.inf
    return min(cfl_fraction * min(diff, adv), remaining)


def _tendency(values: np.ndarray, grid: Grid, m: float, drift: PotentialSpec | None) -> np.ndarray:
    h = grid.h
    phi = _phi(values, m)
    vel = _face_velocities(grid, drift) if drift is not None else None
    out = np.zeros_like(values)
    for axis in range(grid.dim):
        flux = -np.diff(phi, axis=axis) / h
        if vel is not None:
            v = vel[axis]
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            flux = flux + np.maximum(v, 0) * values[tuple(lo)] + np.minimum(v, 0) * values[tuple(hi)]
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        flux = np.pad(flux, pad)
        out -= np.diff(flux, axis=axis) / h
    return out


def _guard_band(grid: Grid, guard: float) -> np.ndarray:
    x = grid.centers
    near = (x - grid.lower < guard) | (grid.upper - x < guard)
    return near.any(axis=-1)


def _check_guard(values: np.ndarray, grid: Grid, guard: float, time: float) -> None:
    amax = float(np.abs(values).max())
    if amax == 0:
        return
    band = _guard_band(grid, guard)
    edge = float(np.abs(values[band]).max()) if band.any() else 0.0
    if edge > 1e-8 * amax:
        raise DomainTooSmall(time, f" (edge value {edge:.3e} vs max {amax:.3e})")


def _advance(values, grid, m, dt, drift, source_rate, floor, clamp, time=0.0):
    """One forward-Euler step on raw arrays. Returns ``(new, clamped_mass)``."""
    limit = _monotone_limit(values, grid, m, _max_speed(grid, drift))
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.6e} exceeds monotone limit {limit:.6e} at t={time:.6g}")
    new = values + dt * _tendency(values, grid, m, drift)
    if source_rate is not None:
        new = new + dt * source_rate
    if not np.all(np.isfinite(new)):
        raise SolverError(f"non-finite values at t={time:.6g}")
    clamped = 0.0
    if clamp:
        low = new < floor
        if low.any():
            clamped = float((floor - new[low]).sum() * grid.cell_volume)
            new[low] = floor
            if clamped > 0:
                logger.debug("clamped mass %.3e at t=%.6g", clamped, time)
    return new, clamped


def step_density(
    rho: ScalarField,
    drift: PotentialSpec | None,
    m: float,
    dt: float,
    *,
    positivity_floor: float = 0.0,
    support_guard: float | None = None,
) -> ScalarField:
    """Advance ``rho_t = Lap(rho^m) + div(rho grad Phi)`` by one explicit step."""
    grid = rho.grid
    guard = 4 * grid.h if support_guard is None else support_guard
    _check_guard(rho.values, grid, guard, rho.time)
    new, _ = _advance(rho.values, grid, m, dt, drift, None, positivity_floor, True, rho.time)
    return rho.replace(values=new, time=rho.time + dt)


def step_signed(
    w: ScalarField,
    m: float,
    source: SourceTerm | None,
    dt: float,
    *,
    drift: PotentialSpec | None = None,
    support_guard: float | None = None,
) -> ScalarField:
    """Advance ``w_t = Lap(w|w|^(m-1)) + source`` by one step; no clamping."""
    grid = w.grid
    guard = 4 * grid.h if support_guard is None else support_guard
    _check_guard(w.values, grid, guard, w.time)
    rate = source.rate(grid) if source is not None else None
    new, _ = _advance(w.values, grid, m, dt, drift, rate, 0.0, False, w.time)
    return w.replace(values=new, time=w.time + dt)


def solve(
    initial: ScalarField,
    cfg: SolverConfig,
    drift: PotentialSpec | None = None,
    source: SourceTerm | None = None,
) -> Trajectory:
    """Run from ``initial`` for ``cfg.end_time`` time units.

    Snapshot times are elapsed times measured from ``initial.time``; the end
    time is always recorded. Steps are truncated to land exactly on them.
    """
    if initial.kind is FieldKind.PRESSURE:
        raise ValueError("solve evolves density or signed fields; convert pressure first")
    grid = initial.grid
    clamp = initial.kind is FieldKind.DENSITY
    guard = cfg.guard(grid)
    rate = source.rate(grid) if source is not None else None
    speed = _max_speed(grid, drift)
    t0 = initial.time
    targets = sorted(set(cfg.snapshot_times) | {cfg.end_time})
    targets = [s for s in targets if s > 0]

    values = np.array(initial.values, dtype=float)
    snaps = [initial]
    log: list[tuple[float, float, float, float, float]] = []
    clamped_total = 0.0
    elapsed = 0.0
    for target in targets:
        while target - elapsed > 1e-13 * max(1.0, target):
            remaining = target - elapsed
            if cfg.dt is not None:
                dt = min(cfg.dt, remaining)
            else:
                fmax = float(np.abs(values).max())
                if fmax == 0 and rate is None:
                    dt = remaining
                else:
                    diff = grid.h**2 / (2 * grid.dim * cfg.m * fmax ** (cfg.m - 1)) if fmax > 0 else math.inf
                    adv = grid.h / (2 * grid.dim * speed) if speed > 0 else math.inf
                    dt = min(cfg.cfl_fraction * min(diff, adv), remaining)
            if cfg.max_dt is not None:
                dt = min(dt, cfg.max_dt)
            if dt == remaining or remaining - dt < 1e-13 * max(1.0, target):
                dt = remaining
            try:
                _check_guard(values, grid, guard, t0 + elapsed)
            except DomainTooSmall:
                logger.error("aborting run at t=%.6g", t0 + elapsed)
                raise
            values, clamped = _advance(
                values, grid, cfg.m, dt, drift, rate, cfg.positivity_floor, clamp, t0 + elapsed
            )
            clamped_total += clamped
            elapsed = elapsed + dt if remaining - dt > 0 else target
            log.append((t0 + elapsed, dt, clamped, float(values.min()), float(values.max())))
        snaps.append(initial.replace(values=values.copy(), time=t0 + target))

    steps = np.array(log, dtype=float).reshape(-1, 5)
    diagnostics = {
        "steps": len(steps),
        "dt_min": float(steps[:, 1].min()) if len(steps) else None,
        "dt_max": float(steps[:, 1].max()) if len(steps) else None,
        "clamped_mass": clamped_total,
        "value_min": float(min(initial.values.min(), steps[:, 3].min() if len(steps) else np.inf)),
        "value_max": float(max(initial.values.max(), steps[:, 4].max() if len(steps) else -np.inf)),
        "snapshot_mass": [float(s.values.sum() * grid.cell_volume) for s in snaps],
    }
    return Trajectory(snaps, cfg, drift, source, diagnostics, steps)
