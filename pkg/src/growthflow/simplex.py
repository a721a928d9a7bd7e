"""Discretized domains, the conserved driver distribution, and readout.

A driver state stores a density ``h`` per grid cell. The cell masses
``m_i = h_i * dV`` always sum to one, which is the discrete form of the
conservation constraint the dynamics evolve on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from growthflow.objectives import PotentialField

NORM_TOL = 1e-9


class GridMismatchError(ValueError):
    """Raised when two objects that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Regular M-dimensional grid with both endpoints of every axis included."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        points = tuple(int(n) for n in self.points)
        if not (len(lower) == len(upper) == len(points)) or not lower:
            raise ValueError("lower, upper and points must be non-empty and equally long")
        for k, (lo, hi, n) in enumerate(zip(lower, upper, points)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"axis {k}: bounds must be finite")
            if not lo < hi:
                raise ValueError(f"axis {k}: need lower < upper, got {lo} >= {hi}")
            if n < 2:
                raise ValueError(f"axis {k}: need at least 2 points, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "points", points)

    @classmethod
    def regular(cls, lower, upper, points, dims: int | None = None) -> "Grid":
        """Build a grid, broadcasting scalar bounds/counts to ``dims`` axes."""
        seqs = [np.atleast_1d(np.asarray(v)) for v in (lower, upper, points)]
        if dims is None:
            dims = max(s.size for s in seqs)
        out = []
        for s in seqs:
            if s.size == 1:
                s = np.repeat(s, dims)
            if s.size != dims:
                raise ValueError(f"expected {dims} values per axis spec, got {s.size}")
            out.append(tuple(s.tolist()))
        return cls(*out)

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return math.prod(self.points)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.points))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.points))

    @cached_property
    def coordinates(self) -> np.ndarray:
        """All cell coordinates as an (N, M) array in flattened (C) order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=1)

    def flatten(self, multi_index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in multi_index), self.shape))

    def unflatten(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(index), self.shape))

    def coordinate(self, index: int) -> tuple[float, ...]:
        return tuple(float(self.axes[k][i]) for k, i in enumerate(self.unflatten(index)))


def index_grid(n: int) -> Grid:
    """1-D grid over cell indices 0..n-1 (unit spacing), used for tables."""
    return Grid((0.0,), (float(n - 1),), (n,))


@dataclass(frozen=True, eq=False)
class DriverState:
    """Nonnegative density on a grid whose masses sum to one.

    ``nu`` is the budget: the unnormalized masses are ``p_i = nu * h_i * dV``.
    Zeros are allowed and stay zero under the multiplicative dynamics.
    """

    values: np.ndarray
    grid: Grid
    nu: float = 1.0
    t: int = 0
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self._checked:
            return
        if values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("driver values must be finite")
        if np.any(values < 0):
            raise ValueError(f"driver values must be nonnegative (min {values.min()})")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"budget nu must be positive, got {self.nu}")
        total = math.fsum(values) * self.grid.cell_volume
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"driver state not normalized: sum(h)*dV = {total!r}")

    @classmethod
    def trusted(cls, values: np.ndarray, grid: Grid, nu: float, t: int = 0) -> "DriverState":
        """Wrap values produced by an update that preserves the invariants."""
        return cls(values, grid, nu, t, _checked=False)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.grid.cell_volume

    def replace(self, values: np.ndarray, t: int | None = None) -> "DriverState":
        return DriverState.trusted(values, self.grid, self.nu, self.t if t is None else t)


@dataclass(frozen=True)
class Measurement:
    mode: str = "argmax"
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("argmax", "sample"):
            raise ValueError(f"unknown measurement mode {self.mode!r}")


@dataclass(frozen=True)
class Readout:
    index: int
    coordinate: tuple[float, ...]
    tie: bool = False


def uniform_init(grid: Grid, nu: float = 1.0) -> DriverState:
    dv = grid.cell_volume
    if not (math.isfinite(dv) and dv > 0):
        raise ValueError(f"cell volume must be finite and positive, got {dv}")
    return DriverState(np.full(grid.size, 1.0 / (grid.size * dv)), grid, nu)


def random_init(grid: Grid, nu: float = 1.0, seed: int = 0) -> DriverState:
    rng = np.random.default_rng(seed)
    raw = 1.0 - rng.random(grid.size)  # in (0, 1], so strictly positive
    return normalize(raw, grid, nu)


def normalize(values, grid: Grid, nu: float = 1.0) -> DriverState:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.size,):
        raise ValueError(f"expected {grid.size} values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot normalize non-finite values")
    if np.any(values < 0):
        raise ValueError("cannot normalize negative values")
    total = values.sum()
    if total <= 0:
        raise ValueError("cannot normalize an all-zero vector")
    return DriverState(values / (total * grid.cell_volume), grid, nu)


def entropy(state: DriverState) -> float:
    """Shannon entropy (nats) of the cell masses, with 0 log 0 = 0."""
    m = state.masses
    m = m[m > 0]
    return float(max(0.0, -np.sum(m * np.log(m))))


def argmax(state: DriverState) -> Readout:
    values = state.values
    i = int(np.argmax(values))  # first occurrence on ties
    tie = int(np.count_nonzero(values == values[i])) > 1
    return Readout(i, state.grid.coordinate(i), tie)


def sample(state: DriverState, measurement: Measurement, size: int | None = None):
    """Draw cell coordinates with probability equal to their mass.

    Returns a single coordinate tuple, or an (size, M) array when ``size``
    is given.
    """
    rng = np.random.default_rng(measurement.seed)
    p = state.masses
    p = p / p.sum()
    idx = rng.choice(state.grid.size, size=size, p=p)
    if size is None:
        return state.grid.coordinate(int(idx))
    return state.grid.coordinates[idx]


def measure(state: DriverState, measurement: Measurement) -> tuple[float, ...]:
    if measurement.mode == "argmax":
        return argmax(state).coordinate
    return sample(state, measurement)


def expected_value(state: DriverState, field: "PotentialField") -> float:
    if field.grid != state.grid:
        raise GridMismatchError("state and field live on different grids")
    return float(np.dot(field.q, state.masses))
