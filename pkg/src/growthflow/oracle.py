"""Independent ground truth for the dynamics.

Nothing here calls into :mod:`growthflow.dynamics`. The argmin scan is a
plain Python loop and the replay redoes the whole recursion in mpmath.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from growthflow.dynamics import DynamicsConfig
from growthflow.objectives import PotentialField
from growthflow.simplex import DriverState

REPLAY_MAX_CELLS = 64


@dataclass(frozen=True)
class OracleReport:
    argmin: tuple[int, ...]
    argmin_coordinates: tuple[tuple[float, ...], ...]
    q_min: float
    gap: float
    predicted_cell: int | None  # None when the minimum is tied
    agreement: bool | None = None  # None when no state was supplied

    @property
    def tie(self) -> bool:
        return len(self.argmin) > 1

    def to_dict(self) -> dict:
        return {
            "argmin": list(self.argmin),
            "argmin_coordinates": [list(c) for c in self.argmin_coordinates],
            "q_min": self.q_min,
            "gap": self.gap,
            "tie": self.tie,
            "predicted_cell": self.predicted_cell,
            "agreement": self.agreement,
        }


def brute_force_argmin(field: PotentialField, state: DriverState | None = None) -> OracleReport:
    """Exhaustive scan of the sampled objective.

    ``gap`` is the smallest positive difference between distinct values.
    With ``state`` given, ``agreement`` says whether the state's heaviest
    cell (lowest index on ties) lies in the argmin set.
    """
    q = [float(v) for v in field.q]
    best = q[0]
    cells = [0]
    for i in range(1, len(q)):
        if q[i] < best:
            best, cells = q[i], [i]
        elif q[i] == best:
            cells.append(i)

    distinct = sorted(set(q))
    gap = min((b - a for a, b in zip(distinct, distinct[1:])), default=0.0)

    agreement = None
    if state is not None:
        h = [float(v) for v in state.values]
        top = 0
        for i in range(1, len(h)):
            if h[i] > h[top]:
                top = i
        agreement = top in cells

    return OracleReport(
        argmin=tuple(cells),
        argmin_coordinates=tuple(field.grid.coordinate(i) for i in cells),
        q_min=best,
        gap=gap,
        predicted_cell=cells[0] if len(cells) == 1 else None,
        agreement=agreement,
    )


def high_precision_replay(
    field: PotentialField,
    config: DynamicsConfig,
    steps: int,
    init=None,
    dps: int = 50,
) -> DriverState:
    """Replay ``steps`` homotopy growth steps in ``dps``-digit arithmetic.

    ``config.nu`` must be set. Starts from ``init`` (density values) or the
    uniform state. No stop rules are applied.
    """
    grid = field.grid
    n = grid.size
    if n > REPLAY_MAX_CELLS:
        raise ValueError(f"replay is limited to {REPLAY_MAX_CELLS} cells, got {n}")
    if config.nu is None:
        raise ValueError("replay needs an explicit nu in the config")

    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        nu = mpf(config.nu)
        sigma = mpf(config.L.sigma)
        dv = mpf(1)
        for lo, hi, k in zip(grid.lower, grid.upper, grid.points):
            dv *= (mpf(hi) - mpf(lo)) / (k - 1)
        q = [mpf(float(v)) for v in field.q]
        if config.lam is not None:
            lam = mpf(config.lam)
        else:
            worst = max(-sigma * v for v in q)
            lam = max(mpf(0), worst / nu) + mpf(config.lambda_margin)
        alpha = mpf(config.dt) / (mpf(config.tau) + mpf(config.dt))

        if init is None:
            h = [1 / (n * dv)] * n
        else:
            h = [mpf(float(v)) for v in init]
            s = mpmath.fsum(h) * dv
            h = [v / s for v in h]

        for _ in range(steps):
            K = [hi * ((nu * hi + sigma * qi) / nu + lam) for hi, qi in zip(h, q)]
            total = mpmath.fsum(K) * dv
            h = [(1 - alpha) * hi + alpha * ki / total for hi, ki in zip(h, K)]

        values = np.array([float(v) for v in h])
    return DriverState(values, grid, float(config.nu), steps)
