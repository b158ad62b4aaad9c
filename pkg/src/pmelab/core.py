"""Grids, cell-centred fields, drift potentials and the measurement toolkit.

Everything here is an immutable value. Fields live on a uniform, axis-aligned
box grid in one or two dimensions; quadrature is the cell sum (midpoint rule),
which is what the finite-volume steppers conserve exactly.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

MIN_CELLS = 8


class FieldKind(str, enum.Enum):
    DENSITY = "density"
    PRESSURE = "pressure"
    SIGNED = "signed"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on the box ``[lower, upper]^dim``."""

    dim: int
    lower: float
    upper: float
    cells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.cells < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {self.cells}")
        if not self.upper > self.lower:
            raise ValueError("upper must exceed lower")

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def axis_centers(self) -> np.ndarray:
        return self.lower + self.h * (np.arange(self.cells) + 0.5)

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(*shape, dim)``."""
        axes = np.meshgrid(*([self.axis_centers] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class RegionBall:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        return math.pi ** (self.dim / 2) / math.gamma(self.dim / 2 + 1) * self.radius**self.dim

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) <= self.radius

    def cell_mask(self, grid: Grid) -> np.ndarray:
        return self.contains(grid.centers)

    def overlap_fractions(self, grid: Grid) -> np.ndarray:
        """Exact fraction of each cell covered by the ball.

        The fractions sum (times ``h^d``) to the ball volume up to round-off
        whenever the ball lies inside the box.
        """
        return _overlap_fractions(grid, self)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell values of a density, pressure or signed field at one time."""

    grid: Grid
    values: np.ndarray
    kind: FieldKind = FieldKind.DENSITY
    time: float = 0.0
    pressure_cap: float = 1.0

    def __post_init__(self):
        kind = FieldKind(self.kind)
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if kind is FieldKind.DENSITY and values.min() < 0:
            raise ValueError(f"density field has negative value {values.min():.3e}")
        if kind is FieldKind.PRESSURE and (values.min() < 0 or values.max() > self.pressure_cap):
            raise ValueError(
                f"pressure values must lie in [0, {self.pressure_cap}], "
                f"got [{values.min():.3e}, {values.max():.3e}]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    def replace(self, values=None, kind=None, time=None, pressure_cap=None) -> ScalarField:
        return ScalarField(
            self.grid,
            self.values if values is None else values,
            self.kind if kind is None else kind,
            self.time if time is None else time,
            self.pressure_cap if pressure_cap is None else pressure_cap,
        )

    def __add__(self, other: ScalarField) -> ScalarField:
        return self.replace(values=self.values + other.values)

    def __mul__(self, c: float) -> ScalarField:
        return self.replace(values=c * self.values)

    __rmul__ = __mul__


def sample(grid: Grid, fn, kind=FieldKind.DENSITY, time: float = 0.0, **kwargs) -> ScalarField:
    """Evaluate ``fn(x)`` at cell centres; ``x`` has shape ``(*shape, dim)``."""
    return ScalarField(grid, fn(grid.centers), kind, time, **kwargs)


# --------------------------------------------------------------------------
# Measurements
# --------------------------------------------------------------------------
def mass(f: ScalarField) -> float:
    return float(f.grid.cell_volume * np.sum(f.values))


def ball_average(f: ScalarField, ball: RegionBall) -> float:
    """``radius^-d`` times the cell-sum integral of ``f`` over the ball.

    Membership is decided by cell centre.
    """
    inside = ball.cell_mask(f.grid)
    if not inside.any():
        raise ValueError(f"no cell centre lies in ball {ball}; radius under-resolved")
    return float(f.grid.cell_volume * f.values[inside].sum() / ball.radius**f.grid.dim)


@dataclass(frozen=True, eq=False)
class Mask:
    grid: Grid
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __len__(self) -> int:
        return int(self.cells.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and self.grid == other.grid and np.array_equal(self.cells, other.cells)

    def is_empty(self) -> bool:
        return not self.cells.any()

    def points(self) -> np.ndarray:
        """Centres of member cells, shape ``(n, dim)``."""
        return self.grid.centers[self.cells]

    def is_contained_in(self, ball: RegionBall, slack: float = 0.0) -> bool:
        pts = self.points()
        if len(pts) == 0:
            return True
        return bool(np.all(np.linalg.norm(pts - np.asarray(ball.center), axis=-1) <= ball.radius + slack))

    def boundary_cells(self) -> Mask:
        """Member cells with at least one face neighbour outside the mask.

        Cells on the box edge count as having an outside neighbour.
        """
        padded = np.pad(self.cells, 1, constant_values=False)
        structure = ndimage.generate_binary_structure(self.grid.dim, 1)
        interior = ndimage.binary_erosion(padded, structure=structure, border_value=0)
        inner = tuple(slice(1, -1) for _ in range(self.grid.dim))
        return Mask(self.grid, self.cells & ~interior[inner])

    def dilate(self, steps: int = 1) -> Mask:
        structure = ndimage.generate_binary_structure(self.grid.dim, 1)
        return Mask(self.grid, ndimage.binary_dilation(self.cells, structure=structure, iterations=steps))

    def __or__(self, other: Mask) -> Mask:
        return Mask(self.grid, self.cells | other.cells)

    def __and__(self, other: Mask) -> Mask:
        return Mask(self.grid, self.cells & other.cells)

    def __sub__(self, other: Mask) -> Mask:
        return Mask(self.grid, self.cells & ~other.cells)


def default_threshold(f: ScalarField) -> float:
    return 1e-8 * float(np.max(np.abs(f.values)))


def support(f: ScalarField, threshold: float | None = None) -> Mask:
    """Cells where ``f > threshold`` (default ``1e-8 * max|f|``)."""
    if threshold is None:
        threshold = default_threshold(f)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return Mask(f.grid, f.values > threshold)


def one_sided_distance(a: Mask, b: Mask) -> float:
    """Largest distance from a cell of ``a`` to the nearest cell of ``b``.

    Returns ``inf`` when ``b`` is empty.
    """
    if a.is_empty():
        raise ValueError("one_sided_distance needs a nonempty first mask")
    if b.is_empty():
        return math.inf
    dist, _ = cKDTree(b.points()).query(a.points())
    return float(dist.max())


def hausdorff(a: Mask, b: Mask) -> float:
    return max(one_sided_distance(a, b), one_sided_distance(b, a))


# --------------------------------------------------------------------------
# Drift potentials
# --------------------------------------------------------------------------
POTENTIAL_FORMS = ("quadratic", "scaled_quadratic", "cosine_well", "polynomial")


@dataclass(frozen=True)
class PotentialSpec:
    """Separable closed-form potential ``Phi(x) = sum_i p(x_i)``.

    ``quadratic`` is ``|x|^2/2``; ``scaled_quadratic`` is ``b|x|^2/2``;
    ``cosine_well`` is ``b * sum(1 - cos x_i)``; ``polynomial`` uses
    ``p(s) = sum_j coeffs[j] s^j`` on every axis.
    """

    form: str = "quadratic"
    b: float = 1.0
    coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.form not in POTENTIAL_FORMS:
            raise ValueError(f"unknown potential form {self.form!r}; expected one of {POTENTIAL_FORMS}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.form == "polynomial" and not self.coeffs:
            raise ValueError("polynomial potential needs coefficients")

    def _axis(self, s: np.ndarray, order: int) -> np.ndarray:
        """``order``-th derivative of the 1D profile."""
        if self.form in ("quadratic", "scaled_quadratic"):
            b = 1.0 if self.form == "quadratic" else self.b
            return [0.5 * b * s**2, b * s, b * np.ones_like(s)][order] if order < 3 else np.zeros_like(s)
        if self.form == "cosine_well":
            return self.b * [1 - np.cos(s), np.sin(s), np.cos(s), -np.sin(s), -np.cos(s)][order]
        poly = np.polynomial.Polynomial(self.coeffs).deriv(order) if order else np.polynomial.Polynomial(self.coeffs)
        return poly(s)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._axis(x, 0).sum(axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._axis(np.asarray(x, dtype=float), 1)

    def partial(self, x: np.ndarray, axis: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._axis(x[..., axis], 1)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        return self._axis(np.asarray(x, dtype=float), 2).sum(axis=-1)

    def hessian_norm(self, x: np.ndarray) -> np.ndarray:
        # Hessian is diagonal for separable forms.
        return np.abs(self._axis(np.asarray(x, dtype=float), 2)).max(axis=-1)

    def derivative_bound(self, order: int, radius: float) -> float:
        """Sup of the ``order``-th axis derivative over ``[-radius, radius]``."""
        s = np.linspace(-radius, radius, 4001)
        return float(np.abs(self._axis(s, order)).max())

    def c2_norm(self, region: RegionBall | Grid, samples: int = 201) -> float:
        """Sup of ``|Phi| + |grad Phi| + |D^2 Phi|`` over a ball or a grid box."""
        if isinstance(region, Grid):
            s = np.linspace(region.lower, region.upper, samples)
            pts = np.stack(np.meshgrid(*([s] * region.dim), indexing="ij"), axis=-1).reshape(-1, region.dim)
        else:
            s = np.linspace(-region.radius, region.radius, samples)
            offs = np.stack(np.meshgrid(*([s] * region.dim), indexing="ij"), axis=-1).reshape(-1, region.dim)
            offs = offs[np.linalg.norm(offs, axis=-1) <= region.radius]
            pts = offs + np.asarray(region.center)
        total = (
            np.abs(self.value(pts))
            + np.linalg.norm(self.gradient(pts), axis=-1)
            + self.hessian_norm(pts)
        )
        return float(total.max())


# --------------------------------------------------------------------------
# Cell/ball overlap
# --------------------------------------------------------------------------
def _disc_lower_left_area(x: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """Area of the disc ``|p| <= r`` intersected with ``{p_x <= x, p_y <= y}``."""
    x = np.clip(x, -r, r)

    def prim(s):
        s = np.clip(s, -r, r)
        return 0.5 * (s * np.sqrt(np.maximum(r * r - s * s, 0.0)) + r * r * np.arcsin(s / r))

    full = 2.0 * (prim(x) - prim(-r))
    xy = np.sqrt(np.maximum(r * r - y * y, 0.0))
    hi = np.clip(x, -xy, xy)
    lo = -xy
    chord = np.where(hi > lo, prim(hi) - prim(lo) - y * (hi - lo), 0.0)
    upper_half = full - chord
    lower_half = np.where(hi > lo, prim(hi) - prim(lo) + y * (hi - lo), 0.0)
    return np.where(y >= r, full, np.where(y <= -r, 0.0, np.where(y >= 0, upper_half, lower_half)))


def _overlap_fractions(grid: Grid, ball: RegionBall) -> np.ndarray:
    h = grid.h
    if grid.dim == 1:
        c = grid.axis_centers - ball.center[0]
        lo = np.maximum(c - h / 2, -ball.radius)
        hi = np.minimum(c + h / 2, ball.radius)
        return np.clip((hi - lo) / h, 0.0, 1.0)
    cx = grid.axis_centers - ball.center[0]
    cy = grid.axis_centers - ball.center[1]
    x0, y0 = np.meshgrid(cx - h / 2, cy - h / 2, indexing="ij")
    x1, y1 = x0 + h, y0 + h
    r = ball.radius
    area = (
        _disc_lower_left_area(x1, y1, r)
        - _disc_lower_left_area(x0, y1, r)
        - _disc_lower_left_area(x1, y0, r)
        + _disc_lower_left_area(x0, y0, r)
    )
    frac = np.clip(area / (h * h), 0.0, 1.0)
    # exact values where the cell misses the disc or lies inside it
    near = np.hypot(np.clip(0.0, x0, x1), np.clip(0.0, y0, y1))
    far = np.hypot(np.maximum(np.abs(x0), np.abs(x1)), np.maximum(np.abs(y0), np.abs(y1)))
    frac[near >= r] = 0.0
    frac[far <= r] = 1.0
    return frac


# --------------------------------------------------------------------------
# CSV serialization
# --------------------------------------------------------------------------
def field_to_csv(f: ScalarField) -> str:
    buf = io.StringIO()
    buf.write(f"# t={f.time!r} kind={f.kind.value} dim={f.grid.dim} h={f.grid.h!r}\n")
    pts = f.grid.centers.reshape(-1, f.grid.dim)
    for p, v in zip(pts, f.values.reshape(-1)):
        buf.write(",".join(repr(float(c)) for c in p) + f",{float(v)!r}\n")
    return buf.getvalue()


def field_from_csv(text: str, pressure_cap: float = math.inf) -> ScalarField:
    lines = text.strip().splitlines()
    header = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
    dim, h = int(header["dim"]), float(header["h"])
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    cells = round(len(rows) ** (1.0 / dim))
    lower = rows[0, 0] - h / 2
    grid = Grid(dim, lower, lower + cells * h, cells)
    return ScalarField(grid, rows[:, -1].reshape(grid.shape), FieldKind(header["kind"]), float(header["t"]), pressure_cap)


def write_field(f: ScalarField, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(field_to_csv(f))
    return path


def mask_to_csv(mask: Mask) -> str:
    header = ",".join("xy"[: mask.grid.dim])
    return header + "\n" + "".join(",".join(repr(float(c)) for c in p) + "\n" for p in mask.points())
