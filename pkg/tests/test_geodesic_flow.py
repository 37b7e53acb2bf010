from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lsoda_return
from revolution_geodesics.geodesic_flow import (
    GeodesicState,
    PoleApproachError,
    clairaut,
    flow,
    flow_batch,
    next_crossing,
    state_on_section,
    vector_field,
)


def test_vector_field_examples(profile):
    assert vector_field(profile, GeodesicState(profile.s_min, 0.0, 0.0)) == pytest.approx((0.0, 0.0, 2.0), abs=1e-14)
    assert vector_field(profile, GeodesicState(math.pi / 2, 0.0, math.pi / 2)) == pytest.approx((1.0, 0.0, 0.0), abs=1e-15)
    s, b = math.pi / 4, math.pi / 3
    expected = (math.sin(b), math.cos(s) / math.sin(s) * math.cos(b), math.cos(b) / math.sin(s))
    assert vector_field(profile, GeodesicState(s, 0.0, b)) == pytest.approx(expected, rel=1e-14)


def test_vector_field_refuses_pole(profile):
    with pytest.raises(PoleApproachError):
        vector_field(profile, GeodesicState(1e-6, 0.0, 0.3))


def test_clairaut_examples(profile):
    assert clairaut(profile, GeodesicState(profile.s_min, 0.0, 0.0)) == pytest.approx(0.5)
    assert abs(clairaut(profile, GeodesicState(2.0, 0.0, math.pi / 2))) < 1e-16
    assert clairaut(profile, GeodesicState(profile.s_min, 0.0, math.pi / 3)) == pytest.approx(0.25)


def test_minimal_parallel_is_a_geodesic(profile):
    traj = flow(profile, GeodesicState(profile.s_min, 0.0, 0.0), 20.0)
    assert np.max(np.abs(traj.states[:, 0] - profile.s_min)) < 1e-13
    assert traj.final.theta == pytest.approx(20.0 / profile.r_min, rel=1e-12)


def test_turning_parallel_on_the_cap(profile):
    traj = flow(profile, GeodesicState(profile.s_min, 0.0, math.pi / 3), 2 * profile.M)
    r = profile.r(traj.states[:, 0])
    s_turn = math.asin(0.25)
    # confinement: r never drops below |K| and the trajectory reaches the turning parallel
    assert r.min() >= 0.25 - 1e-10
    lower = traj.states[:, 0] < profile.s_min
    assert np.min(traj.states[lower, 0]) == pytest.approx(s_turn, abs=1e-3)
    # at the turning point beta is 0 or pi, so s' = 0
    i = int(np.argmin(traj.states[:, 0]))
    assert abs(math.sin(traj.states[i, 2])) < 0.05


def test_clairaut_drift_single_flow(profile):
    traj = flow(profile, GeodesicState(1.0, 0.0, 0.7), 10 * profile.M)
    assert traj.clairaut_drift < 1e-10
    assert np.all(np.diff(traj.t) > 0)


def test_crossings_on_section(profile):
    traj = flow(profile, GeodesicState(2.0, 0.0, 1.2), 5 * profile.M)  # |K| < r_min
    assert len(traj.crossings) >= 4
    for c in traj.crossings:
        assert abs(c.s - profile.s_min) < 1e-12
        assert -1 < c.eta < 1
        assert c.direction == (1 if math.sin(c.beta) > 0 else -1)
        assert c.x == pytest.approx(profile.r_min * c.theta)


def test_meridian_return_is_analytic(profile):
    c = next_crossing(profile, 0.3, 0.0)
    assert (c.t, c.x) == (profile.M, 0.3)


@pytest.mark.parametrize("eta", [-0.8, -0.3, 0.45])
def test_return_matches_lsoda_oracle(profile, eta):
    c = next_crossing(profile, 0.0, eta)
    theta, t = lsoda_return(profile, eta)
    assert c.t == pytest.approx(t, abs=1e-9)
    assert c.theta == pytest.approx(theta, abs=1e-9)
    assert c.eta == pytest.approx(eta, abs=1e-11)


def test_return_time_even(profile):
    assert next_crossing(profile, 0.0, 0.6).t == pytest.approx(next_crossing(profile, 0.0, -0.6).t, abs=1e-10)


@settings(max_examples=5)
@given(st.floats(0.0, 10.0))
def test_return_independent_of_x(profile, x):
    base = next_crossing(profile, 0.0, -0.4)
    c = next_crossing(profile, x, -0.4)
    assert c.t == pytest.approx(base.t, abs=1e-9)
    assert c.x - x == pytest.approx(base.x, abs=1e-9)


def test_rotational_equivariance(profile):
    a = 1.234
    t1 = flow(profile, GeodesicState(2.3, 0.0, 1.1), 30.0).final
    t2 = flow(profile, GeodesicState(2.3, a, 1.1), 30.0).final
    assert abs(t2.theta - t1.theta - a) < 1e-9
    assert abs(t2.s - t1.s) < 1e-9 and abs(t2.beta - t1.beta) < 1e-9


def test_time_reversal(profile):
    start = GeodesicState(2.3, 0.4, 1.1)
    end = flow(profile, start, 17.0).final
    back = flow(profile, GeodesicState(end.s, end.theta, end.beta + math.pi), 17.0).final
    assert abs(back.s - start.s) < 1e-9
    assert abs(back.theta - start.theta) < 1e-9
    assert abs(math.remainder(back.beta - math.pi - start.beta, 2 * math.pi)) < 1e-9


def test_reflection_mirrors_theta(profile):
    # beta -> pi - beta keeps s' and flips theta'
    a = flow(profile, GeodesicState(2.3, 0.0, 1.1), 13.0).final
    b = flow(profile, GeodesicState(2.3, 0.0, math.pi - 1.1), 13.0).final
    assert abs(a.s - b.s) < 1e-9 and abs(a.theta + b.theta) < 1e-9


def test_meridian_hits_pole_guard(profile):
    with pytest.raises(PoleApproachError):
        flow(profile, GeodesicState(1.0, 0.0, -math.pi / 2), 5.0)


def test_batch_agrees_with_single(profile):
    starts = np.array([[1.0, 0.0, 0.7], [3.3, 1.0, 2.0], [4.5, 2.0, -0.4]])
    t, states, drift = flow_batch(profile, starts, 25.0, n_checkpoints=11)
    assert states.shape == (11, 3, 3)
    assert np.all(drift < 1e-8)
    for i, row in enumerate(starts):
        single = flow(profile, GeodesicState(*row), 25.0).final.as_array()
        assert np.allclose(states[-1, i], single, atol=1e-8)


def test_small_batch_crossing_junction_near_meridian(profile):
    # nearly meridional start: fast crossings of the C^2 junction levels
    start = np.array([[1.78720523, 5.10992762, 4.58356207]])
    _, _, drift = flow_batch(profile, start, 10 * profile.M)
    assert drift[0] < 1e-9


def test_state_on_section(profile):
    st_ = state_on_section(profile, 1.0, -0.5)
    assert st_.s == profile.s_min and st_.theta == pytest.approx(2.0)
    assert -math.cos(st_.beta) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        state_on_section(profile, 0.0, 1.0)


def test_trajectory_csv(profile, tmp_path):
    traj = flow(profile, GeodesicState(2.0, 0.0, 0.5), 3.0)
    traj.to_csv(tmp_path / "t.csv", profile)
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,s,theta,beta,K"
    assert np.allclose(data[:, 4], traj.clairaut, atol=1e-10)
