import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coaglab import (
    ConcentrationState,
    ParticleType,
    SolverSettings,
    TruncationPolicy,
    empirical_error,
    first_event_distribution,
    integrate,
    run_simulation,
    step,
)
from coaglab.particles import ParticleSystemState, _Fenwick


def brute_force_pair_table(counts: dict) -> dict:
    """Normalized event law over canonical species pairs, via the ordered
    rate table lambda(p, q) = p.q eta(p) eta(q) / 2 (diagonal uses eta(eta-1))."""

    def rate(p, q):
        return q[0] * p[1] + p[0] * q[1]

    table = {}
    items = sorted(counts.items())
    for i, (p, kp) in enumerate(items):
        for q, kq in items[i:]:
            if p == q:
                lam = 0.5 * rate(p, p) * kp * (kp - 1)
            else:
                lam = rate(p, q) * kp * kq
            if lam > 0:
                table[(ParticleType(*p), ParticleType(*q))] = lam
    total = sum(table.values())
    return {k: v / total for k, v in table.items()}


@given(st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=40))
def test_fenwick_against_naive(weights):
    f = _Fenwick(weights)
    total = sum(weights)
    assert f.tree[0] == 0
    for i, w in enumerate(weights):
        assert f.value(i) == w
    for v in range(total):
        cum = 0
        for i, w in enumerate(weights):
            cum += w
            if cum > v:
                assert f.find(v) == i
                break


def test_fenwick_updates():
    f = _Fenwick([1, 0, 3, 2])
    f.add(1, 5)
    f.add(2, -3)
    assert [f.value(i) for i in range(4)] == [1, 5, 0, 2]
    assert f.find(0) == 0
    assert f.find(1) == 1
    assert f.find(6) == 3


def test_total_rate_examples():
    assert ParticleSystemState({(1, 0, 1): 1, (0, 1, 1): 1}, n=2).total_rate() == 1
    assert ParticleSystemState({(1, 1, 1): 2}, n=2).total_rate() == 2
    assert ParticleSystemState({(2, 1, 1): 1}, n=1).total_rate() == 0


def test_step_examples():
    rng = np.random.default_rng(0)
    s = ParticleSystemState({(1, 0, 1): 1, (0, 1, 1): 1}, n=2, debug=True)
    ev = step(s, rng)
    assert ev.merged == ParticleType(0, 0, 2)
    assert s.counts == {ParticleType(0, 0, 2): 1}
    assert step(s, rng) is None  # absorbed

    s = ParticleSystemState({(1, 1, 1): 2}, n=2, debug=True)
    ev = step(s, rng)
    assert ev.merged == ParticleType(1, 1, 2)

    s = ParticleSystemState({(2, 0, 1): 1, (0, 0, 5): 7}, n=8)
    assert s.total_rate() == 0
    assert step(s, rng) is None


def test_event_conservation_laws():
    rng = np.random.default_rng(42)
    s = ParticleSystemState({(3, 0, 1): 40, (0, 3, 1): 40, (1, 1, 1): 20}, n=100, debug=True)
    mass0 = s.total_mass
    while True:
        male, female, count = s.total_male, s.total_female, s.n_particles
        ev = step(s, rng)
        if ev is None:
            break
        assert s.total_mass == mass0
        assert s.total_male == male - 1
        assert s.total_female == female - 1
        assert s.n_particles == count - 1


def test_bound_check():
    with pytest.raises(ValueError, match="population bound"):
        ParticleSystemState({(3, 3, 1): 10}, n=10, bound=2.0)
    ParticleSystemState({(3, 3, 1): 10}, n=10, bound=7.0)


@pytest.mark.parametrize(
    "counts",
    [
        {(1, 0, 1): 1, (0, 1, 1): 1, (1, 1, 1): 1},
        {(1, 1, 1): 2, (2, 1, 1): 1},
        {(1, 0, 1): 2, (0, 1, 1): 2},
        {(2, 1, 1): 2, (1, 1, 1): 1, (0, 1, 1): 1},
    ],
)
def test_sampler_matches_rate_table(counts):
    draws = 200_000
    emp = first_event_distribution(counts, draws, seed=9)
    table = brute_force_pair_table(counts)
    assert set(emp) == set(table)
    for pair, prob in table.items():
        sigma = math.sqrt(prob * (1 - prob) / draws)
        assert abs(emp[pair] - prob) <= 4 * sigma + 1e-12


def test_run_deterministic_given_seed():
    kw = dict(n=500, t_end=1.0, checkpoints=[0.5, 1.0], seed=1234)
    a = run_simulation({(1, 1, 1): 500}, **kw)
    b = run_simulation({(1, 1, 1): 500}, **kw)
    assert a.states == b.states and a.events == b.events


def test_run_records_initial_state_at_zero():
    run = run_simulation({(1, 1, 1): 100}, n=100, t_end=0.0, checkpoints=[0.0], seed=0)
    assert run.states[0] == {ParticleType(1, 1, 1): 1.0}
    assert run.events == 0


def test_arm_moment_tracks_inverse_time():
    # Empirical mean arm counts follow 1/(1+t) along the run.
    run = run_simulation(
        {(1, 1, 1): 100_000}, n=100_000, t_end=1.0, checkpoints=[0.25, 0.5, 1.0], seed=7
    )
    for t, state in zip(run.times, run.states):
        mean_a = sum(p.a * v for p, v in state.items())
        assert abs(mean_a - 1 / (1 + t)) <= 0.01


def test_pair_annihilation_limit():
    # Initial concentrations are 1/2 per species, so the exact kinetic
    # solution is c_t(0,0,2) = t/(2(2+t)) -> 1/2 (every pair annihilates).
    n = 20_000
    t = 60.0
    run = run_simulation(
        {(1, 0, 1): n // 2, (0, 1, 1): n // 2}, n=n, t_end=t, checkpoints=[t], seed=3
    )
    c2 = run.states[-1].get(ParticleType(0, 0, 2), 0.0)
    assert abs(c2 - t / (2 * (2 + t))) <= 0.01


def test_empirical_error_against_trajectory():
    c0 = ConcentrationState({(1, 1, 1): 1.0})
    cks = [0.5, 1.0]
    traj = integrate(c0, 1.0, TruncationPolicy(mass_cap=32, arm_cap=4), SolverSettings(dt=1e-3), cks)
    run = run_simulation({(1, 1, 1): 50_000}, n=50_000, t_end=1.0, checkpoints=cks, seed=21)
    tracked = [ParticleType(1, 1, m) for m in range(1, 6)]
    errs = empirical_error(run, traj, tracked)
    assert len(errs) == 2
    assert max(errs) <= 0.02
    with pytest.raises(ValueError, match="grids differ"):
        bad = integrate(c0, 0.7, TruncationPolicy(mass_cap=8, arm_cap=4), checkpoints=[0.7])
        empirical_error(run, bad, tracked)


def test_counts_validation():
    with pytest.raises(ValueError, match="negative count"):
        ParticleSystemState({(1, 1, 1): -2}, n=2)
    with pytest.raises(ValueError, match="no possible event"):
        first_event_distribution({(1, 0, 1): 3}, 10)
