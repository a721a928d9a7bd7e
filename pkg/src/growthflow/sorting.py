"""Decentralized sorting on top of the growth-transform dynamics.

Each agent holds one value ``q_i`` and one mass ``m_i``. Per tick an active
agent sends its own interaction weight ``K_i`` to the substrate, the
substrate broadcasts the total ``Z``, and every agent updates its own mass.
No agent ever reads another agent's value or mass; the only shared
quantities are the broadcasts ``Z``, ``nu``, ``lam`` and, in constant mode,
the reference bound.

Two drivers are provided:

* ``linear_sort``: repeated extremum extraction. Each round runs ticks until
  one agent's mass reaches ``theta_win``; that agent is recorded and
  deactivated and the rest restart from uniform mass.
* ``constant_time_sort``: one run in which ``nu`` ramps up linearly. An
  inactive agent switches on at the first tick where its own growth factor
  at zero mass turns positive, which happens in order of ``q``. The run
  length is fixed by the ramp alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from growthflow.dynamics import CertificateError, LFunctional


class SortResolutionError(RuntimeError):
    """The simulation could not separate two agents."""


@dataclass(frozen=True)
class SortConfig:
    mode: str = "linear"
    tau: float = 1.0
    dt: float = 1.0
    sigma: float = -1.0
    lambda_margin: float = 1.0
    # linear mode
    theta_win: float = 0.99
    t_round: int = 20_000
    gap_fraction: float = 0.1
    # constant mode: nu(t) = nu0 + ramp_rate * t
    nu0: float = 1e-3
    ramp_rate: float = 1e-3
    lower: float | None = None  # known value bounds; default to the data's
    upper: float | None = None

    def __post_init__(self):
        if self.mode not in ("linear", "constant"):
            raise ValueError(f"unknown sort mode {self.mode!r}")
        if not (self.tau > 0 and 0 < self.dt <= self.tau):
            raise ValueError("need tau > 0 and 0 < dt <= tau")
        if self.sigma not in (-1.0, 1.0):
            raise ValueError("sigma must be -1 or +1")
        if not 0 < self.theta_win < 1:
            raise ValueError("theta_win must lie in (0, 1)")
        if self.t_round < 1:
            raise ValueError("t_round must be positive")
        if not (self.nu0 > 0 and self.ramp_rate > 0):
            raise ValueError("nu0 and ramp_rate must be positive")
        if not self.lambda_margin > 0:
            raise ValueError("lambda_margin must be positive")

    @property
    def alpha(self) -> float:
        return self.dt / (self.tau + self.dt)

    @property
    def L(self) -> LFunctional:
        return LFunctional(self.sigma)


# Agent-local rules. Arguments are the agent's own state plus broadcasts.


def agent_emit(q_i, m_i, nu: float, lam: float, L: LFunctional):
    """Interaction weight an agent sends up to the substrate."""
    return m_i * (L(q_i, nu * m_i) / nu + lam)


def agent_absorb(m_i, k_i, z: float, alpha: float):
    """Mass update from the agent's own weight and the broadcast total."""
    return (1.0 - alpha) * m_i + alpha * (k_i / z)


def agent_ready(q_i, nu: float, lam: float, L: LFunctional) -> bool:
    """Constant mode: an agent at zero mass switches on once its factor is positive."""
    return L(q_i, 0.0) / nu + lam > 0


@dataclass
class AgentNetwork:
    q: np.ndarray
    m: np.ndarray
    active: np.ndarray
    activated_at: np.ndarray
    Z: float = 0.0
    ticks: int = 0
    # run-length message log: [ticks, active agents] segments
    segments: list[list[int]] = field(default_factory=list)

    @classmethod
    def create(cls, values, active=None) -> "AgentNetwork":
        q = np.asarray(values, dtype=float).copy()
        act = np.ones(q.size, bool) if active is None else np.asarray(active, bool).copy()
        m = np.zeros(q.size)
        if act.any():
            m[act] = 1.0 / act.sum()
        return cls(q, m, act, np.full(q.size, -1))

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def reset_uniform(self):
        self.m[:] = 0.0
        n = self.n_active
        if n:
            self.m[self.active] = 1.0 / n

    def deactivate(self, i: int):
        self.active[i] = False
        self.m[i] = 0.0

    def join(self, i: int):
        """Switch agent i on with an equal share; the others rescale on broadcast."""
        n_new = self.n_active + 1
        if n_new == 1:
            self.m[i] = 1.0
        else:
            self.m[self.active] *= 1.0 - 1.0 / n_new
            self.m[i] = 1.0 / n_new
        self.active[i] = True

    def _log(self, ticks: int, n_active: int):
        if self.segments and self.segments[-1][1] == n_active:
            self.segments[-1][0] += ticks
        else:
            self.segments.append([ticks, n_active])


def tick(network: AgentNetwork, nu: float, lam: float, alpha: float, L: LFunctional = LFunctional()) -> AgentNetwork:
    """One synchronous round: emit up, integrate, broadcast, absorb."""
    a = np.flatnonzero(network.active)
    if a.size == 0:
        raise ValueError("tick needs at least one active agent")
    K = agent_emit(network.q[a], network.m[a], nu, lam, L)
    if np.any(K < 0):
        i = int(a[np.flatnonzero(K < 0)[0]])
        raise CertificateError(f"agent {i} sent a negative weight")
    z = math.fsum(K)  # exact, so the result is independent of agent order
    if not z > 0:
        raise CertificateError("substrate total is not positive")
    network.Z = z
    network.m[a] = agent_absorb(network.m[a], K, z, alpha)
    network.ticks += 1
    network._log(1, a.size)
    return network


def message_stats(network: AgentNetwork) -> dict:
    """Two scalar messages per active agent per tick (one up, one down)."""
    per_segment = [{"ticks": t, "active": n, "messages_per_tick": 2 * n} for t, n in network.segments]
    return {
        "ticks": network.ticks,
        "messages_total": sum(2 * n * t for t, n in network.segments),
        "messages_last_tick": 2 * network.segments[-1][1] if network.segments else 0,
        "segments": per_segment,
    }


def per_tick_messages(network: AgentNetwork) -> np.ndarray:
    return np.concatenate([np.full(t, 2 * n, dtype=int) for t, n in network.segments]) if network.segments else np.zeros(0, int)


def lambda_for(values: np.ndarray, nu: float, L: LFunctional, margin: float) -> float:
    worst = float(np.max(-L.sigma * values))
    return max(0.0, worst / nu) + margin


def min_gap(values) -> float:
    s = np.sort(np.asarray(values, dtype=float))
    return float(np.diff(s).min()) if s.size > 1 else math.inf


@dataclass
class RoundLog:
    round: int
    agent: int
    value: float
    ticks: int
    nu: float
    lam: float
    active: int


@dataclass
class SortResult:
    order: list[int]  # agent ids in extraction/activation order
    values: list[float]
    ticks: list[int]  # tick at which each agent was extracted/activated
    network: AgentNetwork
    rounds: list[RoundLog] = field(default_factory=list)
    events: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def total_ticks(self) -> int:
        return self.network.ticks


def _check_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("nothing to sort")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    return v


def _run_round(net: AgentNetwork, nu, lam, alpha, L, theta, cap) -> int:
    """Repeat ``tick`` on the active agents until one holds ``theta`` of the mass.

    Same arithmetic as ``tick``, kept on compact arrays. Returns the number
    of ticks used, or -1 if ``cap`` ticks pass without a winner.
    """
    a = np.flatnonzero(net.active)
    q, m = net.q[a], net.m[a].copy()
    n = 0
    while m.max() < theta:
        if n >= cap:
            break
        K = agent_emit(q, m, nu, lam, L)
        if np.any(K < 0):
            raise CertificateError(f"agent {int(a[np.argmin(K)])} sent a negative weight")
        z = math.fsum(K)
        m = agent_absorb(m, K, z, alpha)
        net.Z = z
        n += 1
    net.m[a] = m
    net.ticks += n
    if n:
        net._log(n, a.size)
    return n if m.max() >= theta else -1


def linear_sort(values, config: SortConfig = SortConfig()) -> SortResult:
    v = _check_values(values)
    if np.unique(v).size != v.size:
        raise SortResolutionError("values must be distinct for linear_sort")
    L = config.L
    net = AgentNetwork.create(v)
    result = SortResult([], [], [], net)
    for r in range(v.size):
        net.reset_uniform()
        remaining = v[net.active]
        gap = min_gap(remaining)
        nu = config.gap_fraction * gap if math.isfinite(gap) else 1.0
        lam = lambda_for(remaining, nu, L, config.lambda_margin)
        n = _run_round(net, nu, lam, config.alpha, L, config.theta_win, config.t_round)
        if n < 0:
            raise SortResolutionError(
                f"round {r}: no winner within {config.t_round} ticks (smallest gap {gap:.3g})"
            )
        winner = int(np.argmax(net.m))
        result.order.append(winner)
        result.values.append(float(v[winner]))
        result.ticks.append(net.ticks)
        result.rounds.append(RoundLog(r, winner, float(v[winner]), n, nu, lam, net.n_active))
        result.events.append((net.ticks, winner, "extracted"))
        net.deactivate(winner)
        net.activated_at[winner] = net.ticks
    return result


def ramp_length(config: SortConfig, lower: float, upper: float) -> int:
    """Ticks needed for nu(t) to pass the switch-on point of the far bound."""
    nu_end = (upper - lower) / config.lambda_margin
    return int(math.floor(max(0.0, nu_end - config.nu0) / config.ramp_rate)) + 2


def constant_time_sort(values, config: SortConfig = SortConfig(mode="constant")) -> SortResult:
    """Single ramped run; activation order is ascending q for sigma = -1.

    The shift lam is fixed at ``lambda_margin`` so that an agent at distance
    d from the reference bound switches on when nu(t) first exceeds
    d / lam. Raises SortResolutionError when two agents switch on in the
    same tick or some agent never switches on.
    """
    v = _check_values(values)
    lower = float(v.min()) if config.lower is None else config.lower
    upper = float(v.max()) if config.upper is None else config.upper
    if v.min() < lower or v.max() > upper:
        raise ValueError("values fall outside the declared bounds")
    L = config.L
    lam = config.lambda_margin
    ref = lower if config.sigma < 0 else upper
    local = v - ref  # each agent subtracts the broadcast reference from its own value

    net = AgentNetwork.create(local, active=np.zeros(v.size, bool))
    result = SortResult([], [], [], net)
    total = ramp_length(config, lower, upper)
    for t in range(total):
        nu = config.nu0 + config.ramp_rate * t
        waiting = np.flatnonzero(~net.active & (net.activated_at < 0))
        ready = [int(i) for i in waiting if agent_ready(local[i], nu, lam, L)]
        if len(ready) > 1:
            raise SortResolutionError(
                f"agents {ready} switched on in the same tick {t}; lower the ramp rate"
            )
        for i in ready:
            net.join(i)
            net.activated_at[i] = t
            result.order.append(i)
            result.values.append(float(v[i]))
            result.ticks.append(t)
            result.events.append((t, i, "activated"))
        if net.n_active:
            tick(net, nu, lam, config.alpha, L)
        else:
            net.ticks += 1
            net._log(1, 0)
    if len(result.order) != v.size:
        missing = sorted(set(range(v.size)) - set(result.order))
        raise SortResolutionError(f"agents {missing} never switched on")
    return result


def sort(values, config: SortConfig = SortConfig()) -> SortResult:
    if config.mode == "linear":
        return linear_sort(values, config)
    return constant_time_sort(values, config)


def reference_order(values, sigma: float = -1.0) -> list[float]:
    return sorted((float(x) for x in values), reverse=sigma > 0)
