"""Growth-transform dynamics on the conservation manifold.

One step of the evolution is

    K_i = h_i * (L(q_i, nu*h_i)/nu + lam)
    g_i = K_i / (sum_j K_j * dV)
    h_i <- (1 - alpha) * h_i + alpha * g_i,   alpha = dt / (tau + dt)

which is the implicit-form discretization of ``tau dh/dt + h = g(h)``. The
convex combination keeps the state on the simplex without renormalizing.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from growthflow.objectives import PotentialField
from growthflow.simplex import DriverState, GridMismatchError, entropy

log = logging.getLogger(__name__)

DEFAULT_CONTINUOUS_NU = 1e-2
GAP_FRACTION = 0.1


class CertificateError(RuntimeError):
    """A growth factor became nonpositive: the shift lambda is too small."""


@dataclass(frozen=True)
class LFunctional:
    """Shifted-affine coupling ``L(q, nu*h) = nu*h + sigma*q``.

    Strictly increasing in h for any sigma. ``sigma = -1`` drives mass
    toward small q (minimization), ``sigma = +1`` toward large q.
    """

    sigma: float = -1.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma != 0):
            raise ValueError(f"sigma must be finite and nonzero, got {self.sigma}")

    def __call__(self, q, nu_h):
        return nu_h + self.sigma * q


@dataclass(frozen=True)
class DynamicsConfig:
    tau: float = 1.0
    dt: float = 0.1
    nu: float | None = None  # None: gap rule for tables, 1e-2 for sampled fields
    lam: float | None = None  # None: lambda_auto with lambda_margin
    lambda_margin: float = 1.0
    L: LFunctional = field(default_factory=LFunctional)
    max_steps: int = 100_000
    stop_mass: float = 0.99
    stop_change: float = 1e-12
    nu_decay: float | None = None  # optional geometric schedule nu_t = nu * decay**t
    nu_floor: float = 0.0

    def __post_init__(self):
        if not (self.tau > 0 and self.dt > 0):
            raise ValueError("tau and dt must be positive")
        if self.dt > self.tau:
            raise ValueError(f"dt ({self.dt}) must not exceed tau ({self.tau})")
        if self.nu is not None and not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.lambda_margin > 0:
            raise ValueError("lambda_margin must be positive")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"fixed lambda must be finite and nonnegative, got {self.lam}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not 0 < self.stop_mass <= 1:
            raise ValueError("stop_mass must lie in (0, 1]")
        if self.nu_decay is not None and not 0 < self.nu_decay <= 1:
            raise ValueError("nu_decay must lie in (0, 1]")

    @property
    def alpha(self) -> float:
        return self.dt / (self.tau + self.dt)


def resolve_nu(field: PotentialField, config: DynamicsConfig) -> float:
    if config.nu is not None:
        return float(config.nu)
    if field.source == "table":
        gap = field.smallest_gap
        if gap > 0:
            return GAP_FRACTION * gap
    return DEFAULT_CONTINUOUS_NU


def lambda_auto(field: PotentialField, nu: float, L: LFunctional = LFunctional(), margin: float = 1.0) -> float:
    """Smallest shift of the form max(0, worst/nu) + margin that keeps every factor >= margin.

    The nu*h part of L is nonnegative, so the worst case is h = 0 and only
    the extreme of ``-sigma * q`` matters.
    """
    if not (math.isfinite(field.q_min) and math.isfinite(field.q_max)):
        raise ValueError("objective must be finite")
    worst = max(-L.sigma * field.q_min, -L.sigma * field.q_max)
    return max(0.0, worst / nu) + margin


def _factors(h, q, nu, lam, L):
    return L(q, nu * h) / nu + lam


def _check_factors(factors, h, state: DriverState, where: str = ""):
    bad = np.flatnonzero((factors <= 0) & (h > 0))
    if bad.size:
        i = int(bad[0])
        raise CertificateError(
            f"growth factor {factors[i]:.6g} <= 0 at cell {i} {state.grid.coordinate(i)}{where}; "
            "lambda is too small"
        )


def check_lambda(state: DriverState, field: PotentialField, lam: float, L: LFunctional = LFunctional()) -> float:
    """Validate a user-fixed lambda against the current state."""
    _check_factors(_factors(state.values, field.q, state.nu, lam, L), state.values, state)
    return lam


def interaction(state: DriverState, field: PotentialField, lam: float, L: LFunctional = LFunctional()) -> np.ndarray:
    if field.grid != state.grid:
        raise GridMismatchError("state and field live on different grids")
    h = state.values
    f = _factors(h, field.q, state.nu, lam, L)
    _check_factors(f, h, state)
    return h * f


def growth_map(state: DriverState, field: PotentialField, lam: float, L: LFunctional = LFunctional()) -> DriverState:
    K = interaction(state, field, lam, L)
    total = K.sum()
    if not total > 0:
        raise CertificateError("interaction sums to zero; no mass left to redistribute")
    # dividing by dV last keeps a vertex exactly in place
    return state.replace((K / total) / state.grid.cell_volume)


def homotopy_step(state: DriverState, g_state: DriverState, alpha: float) -> DriverState:
    if state.grid != g_state.grid:
        raise GridMismatchError("homotopy between states on different grids")
    if state.nu != g_state.nu:
        raise ValueError(f"budget mismatch: {state.nu} vs {g_state.nu}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return state.replace((1.0 - alpha) * state.values + alpha * g_state.values, t=state.t + 1)


def budget_masses(state: DriverState) -> np.ndarray:
    """Unnormalized masses ``p_i = nu * h_i * dV`` (they sum to nu)."""
    return state.nu * state.values * state.grid.cell_volume


def surrogate_gradient(state: DriverState, field: PotentialField, L: LFunctional = LFunctional()) -> np.ndarray:
    """dH/dp_i at the current state, which equals -L_i / nu."""
    return -L(field.q, state.nu * state.values) / state.nu


def discrete_growth_update(p, grad, lam: float, nu: float | None = None) -> np.ndarray:
    """Baum-Eagon style update of budget masses against a gradient of H.

    p_i <- nu * p_i (lam - grad_i) / sum_j p_j (lam - grad_j)
    """
    p = np.asarray(p, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if nu is None:
        nu = p.sum()
    f = lam - grad
    bad = np.flatnonzero((f <= 0) & (p > 0))
    if bad.size:
        raise CertificateError(f"nonpositive growth factor {f[bad[0]]:.6g} at index {int(bad[0])}")
    w = p * f
    return nu * w / w.sum()


def energy(state: DriverState, field: PotentialField, L: LFunctional = LFunctional()) -> float:
    """Surrogate H = sum_i (-sigma q_i h_i - nu/2 h_i^2) dV.

    Its derivative with respect to h_i is -L_i * dV, so the trajectory is a
    growth-transform descent on H.
    """
    h = state.values
    return float(np.sum(-L.sigma * field.q * h - 0.5 * state.nu * h * h) * state.grid.cell_volume)


def auxiliary_gain(p_before, p_after, grad, lam: float) -> float:
    """Linearized gain of G = -H + lam * sum(p) between two mass vectors."""
    p_before = np.asarray(p_before, dtype=float)
    p_after = np.asarray(p_after, dtype=float)
    slope = lam - np.asarray(grad, dtype=float)
    return math.fsum(slope * (p_after - p_before))


@dataclass
class Trajectory:
    step: np.ndarray
    time: np.ndarray
    entropy: np.ndarray
    max_mass: np.ndarray
    argmax: np.ndarray  # (T, M) coordinates
    expected_q: np.ndarray
    energy: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    stop_reason: str = ""

    def __len__(self):
        return len(self.step)


class _Recorder:
    def __init__(self, field: PotentialField, L: LFunctional, dt: float):
        self.field, self.L, self.dt = field, L, dt
        self.rows: list[tuple] = []

    def record(self, state: DriverState, lam: float):
        m = state.masses
        i = int(np.argmax(m))
        coord = state.grid.coordinate(i)
        self.rows.append(
            (
                state.t,
                state.t * self.dt,
                entropy(state),
                float(m[i]),
                coord,
                float(np.dot(self.field.q, m)),
                energy(state, self.field, self.L),
                state.nu,
                lam,
            )
        )

    def finish(self, stop_reason: str) -> Trajectory:
        cols = list(zip(*self.rows))
        return Trajectory(
            step=np.array(cols[0], dtype=int),
            time=np.array(cols[1]),
            entropy=np.array(cols[2]),
            max_mass=np.array(cols[3]),
            argmax=np.array(cols[4], dtype=float),
            expected_q=np.array(cols[5]),
            energy=np.array(cols[6]),
            nu=np.array(cols[7]),
            lam=np.array(cols[8]),
            stop_reason=stop_reason,
        )


class _Stepper:
    """Elementwise work split across threads; the one reduction stays whole-array.

    Chunking never changes an elementwise result and the sum is always taken
    over the full array, so the output is bitwise independent of ``threads``.
    """

    def __init__(self, q, sigma, alpha, dv, threads: int = 1):
        self.q, self.sigma, self.alpha, self.dv = q, sigma, alpha, dv
        n = q.size
        self.threads = max(1, int(threads))
        self.pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        bounds = np.linspace(0, n, self.threads + 1).astype(int)
        self.chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _map(self, fn):
        if self.pool is None:
            fn(slice(None))
        else:
            list(self.pool.map(fn, self.chunks))

    def step(self, h, nu, lam):
        K = np.empty_like(h)
        fac = np.empty_like(h)

        def weights(s):
            hs = h[s]
            fac[s] = (nu * hs + self.sigma * self.q[s]) / nu + lam
            K[s] = hs * fac[s]

        self._map(weights)
        total = K.sum()
        out = np.empty_like(h)
        a, dv = self.alpha, self.dv

        def combine(s):
            out[s] = (1.0 - a) * h[s] + a * ((K[s] / total) / dv)

        self._map(combine)
        return out, fac, total


def run(
    state: DriverState,
    field: PotentialField,
    config: DynamicsConfig = DynamicsConfig(),
    observer: Callable[[DriverState], None] | None = None,
    threads: int = 1,
) -> tuple[DriverState, Trajectory]:
    """Iterate the homotopy growth step until a stop rule fires.

    Stop reasons: ``"converged"`` (max cell mass >= stop_mass),
    ``"stationary"`` (max per-step mass change <= stop_change) and
    ``"max_steps"``.
    """
    if field.grid != state.grid:
        raise GridMismatchError("state and field live on different grids")
    L = config.L
    nu0 = resolve_nu(field, config)
    nu = nu0
    state = DriverState.trusted(state.values, state.grid, nu, state.t)

    def shift(nu):
        if config.lam is not None:
            return config.lam
        return lambda_auto(field, nu, L, config.lambda_margin)

    lam = shift(nu)
    if config.lam is not None:
        check_lambda(state, field, lam, L)

    dv = state.grid.cell_volume
    rec = _Recorder(field, L, config.dt)
    rec.record(state, lam)
    if observer is not None:
        observer(state)

    stepper = _Stepper(field.q, L.sigma, config.alpha, dv, threads)
    h = state.values
    reason = "max_steps"
    try:
        for k in range(1, config.max_steps + 1):
            if config.nu_decay is not None:
                nu = max(config.nu_floor, nu0 * config.nu_decay**k)
                lam = shift(nu)
            new, fac, total = stepper.step(h, nu, lam)
            bad = np.flatnonzero((fac <= 0) & (h > 0))
            if bad.size or not total > 0:
                where = f"cell {int(bad[0])}" if bad.size else "all cells"
                raise CertificateError(f"lambda certificate violated at step {k} ({where})")
            change = float(np.max(np.abs(new - h))) * dv
            h = new
            state = DriverState.trusted(h, state.grid, nu, state.t + 1)
            rec.record(state, lam)
            if observer is not None:
                observer(state)
            if rec.rows[-1][3] >= config.stop_mass:
                reason = "converged"
                break
            if change <= config.stop_change:
                reason = "stationary"
                break
    finally:
        stepper.close()
    log.info("run stopped after %d steps: %s", state.t, reason)
    return state, rec.finish(reason)
