"""Target objectives and their sampled fields."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from growthflow.simplex import Grid, index_grid


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Objective values ``q`` sampled on every cell of a grid.

    ``source`` is ``"table"`` for user-supplied discrete objectives and
    ``"sampled"`` for callables evaluated on a grid; it selects the default
    budget rule in the dynamics.
    """

    q: np.ndarray
    grid: Grid
    source: str = "sampled"

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} objective values, got shape {q.shape}")
        bad = np.flatnonzero(~np.isfinite(q))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"non-finite objective value {q[i]} at {self.grid.coordinate(i)}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def q_min(self) -> float:
        return float(self.q.min())

    @property
    def q_max(self) -> float:
        return float(self.q.max())

    @property
    def argmin(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.q == self.q.min()))

    @property
    def smallest_gap(self) -> float:
        """Smallest difference between distinct objective values (0 if constant)."""
        distinct = np.unique(self.q)
        if distinct.size < 2:
            return 0.0
        return float(np.diff(distinct).min())


def rastrigin(x) -> float | np.ndarray:
    """Shifted Rastrigin function with its global minimum 0 at x = (1, ..., 1).

    Accepts a single point of shape (M,) or a batch of shape (..., M).
    """
    x = np.asarray(x, dtype=float)
    z = x - 1.0
    out = np.sum(z**2 - 10.0 * np.cos(np.pi * z), axis=-1) + 10.0 * x.shape[-1]
    return float(out) if np.ndim(out) == 0 else out


def step(x):
    """0 for x_0 < 0, 1 otherwise: a discontinuous objective with a flat minimum."""
    x = np.asarray(x, dtype=float)
    out = np.where(x[..., 0] < 0, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def notch(x):
    """|x - 1| summed over axes, plus a unit jump on the right of 1 in each axis.

    Discontinuous at its unique global minimum 0 at x = (1, ..., 1).
    """
    x = np.asarray(x, dtype=float)
    z = x - 1.0
    out = np.sum(np.abs(z) + (z > 0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def constant(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    return float(out) if np.ndim(out) == 0 else out


BUILTINS: dict[str, Callable] = {
    "rastrigin": rastrigin,
    "step": step,
    "notch": notch,
    "constant": constant,
}


def default_grid(dims: int) -> Grid:
    """[-4, 6]^M with 501 points in 1-D and 101 per axis otherwise.

    Both keep x = 1 exactly on a grid node.
    """
    return Grid.regular(-4.0, 6.0, 501 if dims == 1 else 101, dims=dims)


def sample_field(f: Callable, grid: Grid, vectorized: bool = True) -> PotentialField:
    coords = grid.coordinates
    if vectorized:
        q = np.asarray(f(coords), dtype=float)
        if q.shape != (grid.size,):
            raise ValueError(f"vectorized objective returned shape {q.shape}, expected ({grid.size},)")
    else:
        q = np.array([f(c) for c in coords], dtype=float)
    bad = np.flatnonzero(~np.isfinite(q))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"objective is not finite at {grid.coordinate(i)}: {q[i]}")
    return PotentialField(q, grid, "sampled")


def table_field(values, grid: Grid | None = None) -> PotentialField:
    values = np.asarray(values, dtype=float).ravel()
    if grid is None:
        grid = index_grid(values.size)
    if values.size != grid.size:
        raise ValueError(f"table has {values.size} entries but grid has {grid.size} cells")
    return PotentialField(values, grid, "table")


def read_values_csv(path) -> list[float]:
    """One real per line; blank lines are skipped."""
    out = []
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                v = float(row[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            out.append(v)
    return out
