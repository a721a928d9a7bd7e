import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthflow.dynamics import LFunctional, growth_map, homotopy_step
from growthflow.objectives import table_field
from growthflow.simplex import DriverState, index_grid
from growthflow.sorting import (
    AgentNetwork,
    SortConfig,
    SortResolutionError,
    agent_absorb,
    agent_emit,
    constant_time_sort,
    linear_sort,
    message_stats,
    per_tick_messages,
    ramp_length,
    reference_order,
    tick,
)

MIN = LFunctional(-1.0)
CONSTANT = SortConfig(mode="constant")


def spaced_values(rng, n, gap):
    """n distinct values in [0, 1] with pairwise gaps >= gap, shuffled."""
    slack = 1.0 - (n - 1) * gap
    base = np.sort(rng.uniform(0, slack, n)) + np.arange(n) * gap
    return rng.permutation(base)


def test_tick_single_agent_is_fixed():
    net = AgentNetwork.create([0.7])
    tick(net, 0.1, 10.0, 0.5, MIN)
    assert net.m[0] == 1.0


def test_tick_two_agents_matches_dynamics():
    net = AgentNetwork.create([0.0, 1.0])
    tick(net, 1.0, 1.5, 0.1, MIN)
    assert np.allclose(net.m, [31 / 60, 29 / 60], atol=1e-15)
    g = index_grid(2)
    s = DriverState(np.array([0.5, 0.5]), g)
    ref = homotopy_step(s, growth_map(s, table_field([0.0, 1.0], g), 1.5, MIN), 0.1)
    assert np.allclose(net.m, ref.values, atol=1e-15)


def test_tick_equal_values_keep_uniform_masses():
    net = AgentNetwork.create([0.4] * 5)
    for _ in range(10):
        tick(net, 0.1, 5.0, 0.5, MIN)
    assert np.allclose(net.m, 0.2, rtol=1e-14)


def test_tick_is_agent_local():
    rng = np.random.default_rng(1)
    q = rng.uniform(0, 1, 6)
    net = AgentNetwork.create(q)
    net.m[:] = rng.dirichlet(np.ones(6))
    before = net.m.copy()
    tick(net, 0.1, 11.0, 0.5, MIN)
    for i in range(6):
        k_i = agent_emit(q[i], before[i], 0.1, 11.0, MIN)
        assert agent_absorb(before[i], k_i, net.Z, 0.5) == net.m[i]


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_tick_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0, 1, 9)
    m = rng.dirichlet(np.ones(9))
    perm = rng.permutation(9)
    a = AgentNetwork.create(q)
    a.m[:] = m
    b = AgentNetwork.create(q[perm])
    b.m[:] = m[perm]
    for _ in range(20):
        tick(a, 0.05, 21.0, 0.5, MIN)
        tick(b, 0.05, 21.0, 0.5, MIN)
    assert np.array_equal(a.m[perm], b.m)
    assert abs(math.fsum(a.m) - 1) <= 1e-9


def test_tick_messages_and_inactive_agents():
    net = AgentNetwork.create([0.1, 0.5, 0.9], active=[True, False, True])
    assert net.m[1] == 0
    tick(net, 0.1, 10.0, 0.5, MIN)
    tick(net, 0.1, 10.0, 0.5, MIN)
    stats = message_stats(net)
    assert stats["messages_last_tick"] == 4
    assert stats["messages_total"] == 8
    assert net.m[1] == 0
    assert list(per_tick_messages(net)) == [4, 4]


def test_tick_requires_an_active_agent():
    net = AgentNetwork.create([0.1, 0.2], active=[False, False])
    with pytest.raises(ValueError):
        tick(net, 0.1, 1.0, 0.5, MIN)


def test_linear_sort_examples():
    assert linear_sort([3, 1, 2], SortConfig(sigma=1.0)).values == [3, 2, 1]
    assert linear_sort([3, 1, 2]).values == [1, 2, 3]
    assert linear_sort([3, 1, 2]).order == [1, 2, 0]


def test_linear_sort_all_permutations_of_four():
    for perm in itertools.permutations([0.1, 0.4, 0.5, 0.9]):
        assert linear_sort(perm).values == sorted(perm)


def test_linear_sort_64_random():
    rng = np.random.default_rng(64)
    v = spaced_values(rng, 64, 1 / 128)
    res = linear_sort(v)
    assert res.values == sorted(v.tolist())
    assert len(res.rounds) == 64
    assert max(r.ticks for r in res.rounds) <= SortConfig().t_round


def test_linear_sort_message_accounting():
    rng = np.random.default_rng(2)
    v = spaced_values(rng, 12, 0.05)
    res = linear_sort(v)
    expected = sum(2 * r.active * r.ticks for r in res.rounds)
    assert message_stats(res.network)["messages_total"] == expected
    assert message_stats(res.network)["ticks"] == sum(r.ticks for r in res.rounds)


def test_linear_sort_round_cap():
    with pytest.raises(SortResolutionError, match="round 0"):
        linear_sort([0.0, 0.001, 1.0], SortConfig(t_round=5))


def test_linear_sort_rejects_duplicates():
    with pytest.raises(SortResolutionError):
        linear_sort([1.0, 1.0, 2.0])


def test_constant_sort_two_agents():
    res = constant_time_sort([0.2, 0.9], CONSTANT)
    assert res.order == [0, 1]
    assert res.ticks[0] < res.ticks[1]


def test_constant_sort_equal_values_unresolved():
    with pytest.raises(SortResolutionError):
        constant_time_sort([0.5, 0.5, 0.5], CONSTANT)


def test_constant_sort_uniform_gaps_fixed_duration():
    rng = np.random.default_rng(0)
    totals = set()
    for n in (8, 16, 32):
        v = rng.permutation(np.linspace(0, 1, n))
        res = constant_time_sort(v, CONSTANT)
        assert res.values == sorted(v.tolist())
        totals.add(res.total_ticks)
    assert totals == {ramp_length(CONSTANT, 0.0, 1.0)}


def test_constant_sort_descending_with_sigma_plus():
    res = constant_time_sort([0.3, 0.1, 0.8], SortConfig(mode="constant", sigma=1.0))
    assert res.values == [0.8, 0.3, 0.1]


def test_constant_sort_conserves_mass():
    v = np.linspace(0, 1, 10)
    res = constant_time_sort(v, CONSTANT)
    assert abs(math.fsum(res.network.m) - 1) <= 1e-9
    assert res.network.active.all()


def test_constant_sort_ramp_too_fast():
    with pytest.raises(SortResolutionError, match="same tick"):
        constant_time_sort(np.linspace(0, 1, 32), SortConfig(mode="constant", ramp_rate=0.1))


def test_constant_sort_bounds_checked():
    with pytest.raises(ValueError):
        constant_time_sort([0.0, 2.0], SortConfig(mode="constant", lower=0.0, upper=1.0))


def test_reference_order():
    assert reference_order([2, 3, 1]) == [1, 2, 3]
    assert reference_order([2, 3, 1], 1.0) == [3, 2, 1]


@pytest.mark.parametrize("kwargs", [dict(mode="bubble"), dict(sigma=0.5), dict(theta_win=1.0), dict(dt=2.0)])
def test_sort_config_validation(kwargs):
    with pytest.raises(ValueError):
        SortConfig(**kwargs)
