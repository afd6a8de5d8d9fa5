import math
from fractions import Fraction

import numpy as np
import pytest

from coaglab import (
    ConcentrationState,
    ParticleType,
    SolverSettings,
    TruncationPolicy,
    initial_state,
    integrate,
    reachable_types,
    rhs_full,
    rhs_reduced,
    truncation_error_estimate,
)
from coaglab.kinetics import TruncatedSystem, UniformArmSystem, make_system


def test_rhs_full_examples():
    c = ConcentrationState({(1, 1, 1): 1.0})
    r = rhs_full(c, TruncationPolicy(mass_cap=8, arm_cap=4))
    assert r[ParticleType(1, 1, 1)] == pytest.approx(-2.0, abs=1e-14)
    assert r[ParticleType(1, 1, 2)] == pytest.approx(1.0, abs=1e-14)

    inert = ConcentrationState({(0, 0, 5): 3.0})
    r = rhs_full(inert, TruncationPolicy(mass_cap=8, arm_cap=4))
    assert all(v == 0 for v in r.values())

    assert rhs_full(ConcentrationState({})) == {}


def test_rhs_reduced_examples():
    c = ConcentrationState({(1, 1, 1): 1.0})
    r = rhs_reduced(c, 0.0, TruncationPolicy(mass_cap=8, arm_cap=4))
    assert r[ParticleType(1, 1, 1)] == pytest.approx(-2.0, abs=1e-14)
    assert rhs_reduced(ConcentrationState({}), 2.0) == {}


def test_reduced_equals_full_on_arm_identity_states():
    # On the exact trajectory <a> = <b> = 1/(1+t), so both forms agree; the
    # closed-form state of the one-female-arm family provides such states
    # (carried to mass 60, where the arm-moment tail is ~1e-13).
    pol = TruncationPolicy(mass_cap=60, arm_cap=4)
    for t in (0.0, 0.5, 1.5):
        entries = {
            (1, 1, m): t ** (m - 1) / (1 + t) ** (m + 1) for m in range(1, 61)
        }
        c = ConcentrationState(entries)
        full = rhs_full(c, pol)
        red = rhs_reduced(c, t, pol)
        gap = max(abs(full[p] - red[p]) for p in full)
        assert gap <= 1e-10


def test_reachable_types():
    pol = TruncationPolicy(mass_cap=5, arm_cap=3)
    types = reachable_types([(1, 1, 1)], pol)
    assert types == [ParticleType(1, 1, m) for m in range(1, 6)]
    with pytest.raises(ValueError, match="exceeds truncation caps"):
        reachable_types([(9, 1, 1)], pol)


def test_engine_dispatch(three_arm_state, pq_state):
    pol = TruncationPolicy(mass_cap=10, arm_cap=14)
    assert isinstance(make_system(three_arm_state.support(), pol), UniformArmSystem)
    assert isinstance(make_system(pq_state.support(), pol), TruncatedSystem)


def test_engines_agree(three_arm_state):
    pol = TruncationPolicy(mass_cap=16, arm_cap=12)
    generic = TruncatedSystem(three_arm_state.support(), pol)
    fast = UniformArmSystem(three_arm_state.support(), pol, 3)
    rng = np.random.default_rng(5)
    state = ConcentrationState(
        {p: float(w) for p, w in zip(generic.types, rng.random(len(generic.types)))}
    )
    dg, *fluxg = generic.rhs(generic.concentration_vector(state), 0.4, False)
    df, *fluxf = fast.rhs(fast.concentration_vector(state), 0.4, False)
    mg = dict(zip(generic.types, dg))
    mf = dict(zip(fast.types, df))
    assert max(abs(mg.get(p, 0.0) - mf.get(p, 0.0)) for p in set(mg) | set(mf)) < 1e-9
    assert fluxg == pytest.approx(fluxf, rel=1e-12, abs=1e-12)


def test_integrate_one_female_family():
    c0 = ConcentrationState({(1, 1, 1): 1.0})
    traj = integrate(
        c0, 1.0, TruncationPolicy(mass_cap=64, arm_cap=4), SolverSettings(dt=1e-3)
    )
    s = traj.state_at(1.0)
    for m in range(1, 21):
        assert abs(s[(1, 1, m)] - 1.0 / 2 ** (m + 1)) <= 1e-8


def test_integrate_pair_annihilation():
    c0 = ConcentrationState({(1, 0, 1): 1.0, (0, 1, 1): 1.0})
    traj = integrate(c0, 3.0, TruncationPolicy(mass_cap=4, arm_cap=2), SolverSettings(dt=1e-3))
    assert abs(traj.state_at(3.0)[(0, 0, 2)] - 0.75) <= 1e-10


def test_integrate_t_end_zero():
    c0 = ConcentrationState({(1, 1, 1): 1.0})
    traj = integrate(c0, 0.0, TruncationPolicy(mass_cap=4, arm_cap=2))
    assert traj.times == [0.0]
    assert dict(traj.states[0].items()) == {ParticleType(1, 1, 1): 1.0}


def test_conservation_and_arm_identity(three_arm_state):
    pol = TruncationPolicy(mass_cap=64, arm_cap=66)
    cks = [0.1, 0.3, 0.5]
    traj = integrate(three_arm_state, 0.5, pol, SolverSettings(dt=2e-3), cks)
    m0 = traj.observables[0].mass
    for o in traj.observables:
        assert abs(o.mass + o.lost_mass - m0) <= 1e-12
        assert abs(o.mean_a - 1 / (1 + o.time)) <= 2e-5
        assert abs(o.mean_b - 1 / (1 + o.time)) <= 2e-5
        assert abs(o.total_conc - (2 / 3 - o.time / (1 + o.time))) <= 2e-5


def test_checkpoint_states_nonnegative(pq_state):
    traj = integrate(
        pq_state, 2.0, TruncationPolicy(mass_cap=16, arm_cap=4), SolverSettings(dt=2e-3), [1.0, 2.0]
    )
    for s in traj.states:
        assert all(v >= 0 for _, v in s.items())


def test_full_vs_reduced_trajectories():
    c0 = ConcentrationState({(1, 1, 1): 1.0})
    pol = TruncationPolicy(mass_cap=32, arm_cap=4)
    cks = [0.5, 1.0]
    full = integrate(c0, 1.0, pol, SolverSettings(rhs="full", dt=1e-3), cks)
    red = integrate(c0, 1.0, pol, SolverSettings(rhs="reduced", dt=1e-3), cks)
    for sf, sr in zip(full.states, red.states):
        tracked = {ParticleType(1, 1, m) for m in range(1, 13)}
        assert max(abs(sf[p] - sr[p]) for p in tracked) <= 1e-9


def test_truncation_error_estimate_bounds_real_error(three_arm_state):
    # Reference: closed-form second moment 2/((1-t)(1+3t)); the cap-128 run
    # is truncation-limited at t = 0.5, and the estimate must cover the gap.
    pol = TruncationPolicy(mass_cap=128, arm_cap=130)
    t = 0.5
    eps = truncation_error_estimate(three_arm_state, t, pol, SolverSettings(dt=2e-3), [t])
    traj = integrate(three_arm_state, t, pol, SolverSettings(dt=2e-3), [t])
    true_err = abs(traj.observables[-1].second_a - 2 / ((1 - t) * (1 + 3 * t)))
    assert eps["second_a"][-1] >= true_err
    assert eps["second_a"][-1] <= 1e-3  # and it is not a uselessly loose bound


def test_csv_exports(tmp_path):
    c0 = ConcentrationState({(1, 0, 1): 1.0, (0, 1, 1): 1.0})
    traj = integrate(c0, 1.0, TruncationPolicy(mass_cap=4, arm_cap=2), SolverSettings(dt=1e-2))
    p1 = tmp_path / "conc.csv"
    p2 = tmp_path / "obs.csv"
    traj.write_concentrations_csv(p1)
    traj.write_observables_csv(p2)
    lines = p1.read_text().splitlines()
    assert lines[0] == "t,a,b,m,concentration"
    assert any(line.startswith("1,0,0,2,") for line in lines)
    header = p2.read_text().splitlines()[0]
    assert header.startswith("t,total_conc,mean_a,mean_b,mass,second_a")


def test_solver_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(rhs="implicit")
    with pytest.raises(ValueError):
        SolverSettings(dt=0)
    with pytest.raises(ValueError):
        TruncationPolicy(mass_cap=0)
