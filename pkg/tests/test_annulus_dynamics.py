from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from revolution_geodesics.annulus_dynamics import (
    AnnulusError,
    AnnulusMapSpec,
    count_orbits,
    find_periodic,
    iterate_lift,
    jacobian,
    make_map,
    rotation_number,
)
from revolution_geodesics.counting_growth import exponent_fit, totient_sum

PERTURBED = make_map(0.05)


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        AnnulusMapSpec(L=0.0)
    with pytest.raises(ValueError):
        AnnulusMapSpec(twist="cubic")
    with pytest.raises(ValueError):
        AnnulusMapSpec(epsilon=-1.0)
    spec = make_map(0.05, L=2.0, twist="atanh")
    assert spec.epsilon == pytest.approx(0.1)
    spec.to_json(tmp_path / "m.json")
    assert AnnulusMapSpec.from_json(tmp_path / "m.json") == spec


@given(st.floats(-3, 3), st.floats(-0.9, 0.9))
def test_jacobian_matches_finite_differences(x, eta):
    spec = make_map(0.05, L=1.3)
    h = 1e-6
    J = jacobian(spec, x, eta)
    cols = []
    for dz in ((h, 0.0), (0.0, h)):
        plus = iterate_lift(spec, (x + dz[0], eta + dz[1]), 1)[1]
        minus = iterate_lift(spec, (x - dz[0], eta - dz[1]), 1)[1]
        cols.append((plus - minus) / (2 * h))
    np.testing.assert_allclose(J, np.column_stack(cols), rtol=1e-5, atol=1e-5)


def test_area_preservation():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 1000)
    eta = rng.uniform(-0.95, 0.95, 1000)
    det = np.linalg.det(jacobian(PERTURBED, x, eta))
    assert np.max(np.abs(det - 1.0)) < 1e-8


@pytest.mark.parametrize("p,q", [(1, 2), (1, 3), (2, 3), (3, 7), (-1, 4)])
def test_integrable_orbit_level(p, q):
    spec = make_map(0.0)
    (orb,) = find_periodic(spec, p, q)
    assert orb.family
    assert orb.eta == pytest.approx(-2 / math.pi * math.atan(p / q), abs=1e-14)
    end = iterate_lift(spec, orb.point, q)[-1]
    assert end[0] - orb.x == pytest.approx(p * spec.L, abs=1e-12)


def test_integrable_rotation_number():
    spec = make_map(0.0, L=2.0)
    est = rotation_number(spec, (0.1, -0.3), n=500)
    assert est.value == pytest.approx(math.tan(0.15 * math.pi), rel=1e-12)
    assert est.converged


def test_newton_detects_circle_family():
    spec = make_map(0.0)
    (orb,) = find_periodic(spec, 1, 2, shortcut=False)
    assert orb.family and orb.eta == pytest.approx(-2 / math.pi * math.atan(0.5), abs=1e-9)


def test_perturbed_one_one_orbits_are_isolated():
    orbits = find_periodic(PERTURBED, 1, 1, shortcut=False)
    isolated = [o for o in orbits if not o.family]
    assert len(isolated) >= 2
    for o in isolated:
        assert o.residual < 1e-10
        x1, e1 = iterate_lift(PERTURBED, o.point, 1)[-1]
        assert math.hypot(x1 - o.x - PERTURBED.L, e1 - o.eta) < 1e-10
    assert len({round(o.x, 6) for o in isolated}) == len(isolated)


def test_find_periodic_rejects_non_coprime():
    with pytest.raises(ValueError):
        find_periodic(PERTURBED, 2, 4)


def test_integrable_count_reproduces_coprime_pairs(tmp_path):
    count = count_orbits(make_map(0.0), (0, 1), 10)
    assert sum(len(v) for v in count.orbits.values()) == 31 == totient_sum(10) - 1
    assert not count.failures
    count.to_csv(tmp_path / "o.csv")
    assert len((tmp_path / "o.csv").read_text().splitlines()) == 32


def test_integrable_count_growth_exponent():
    count = count_orbits(make_map(0.0), (0, 1), 200)
    slope, _ = exponent_fit(count.series(), window=(10, 200))
    assert slope >= 1.8


def test_perturbed_count_small_periods():
    count = count_orbits(make_map(0.01), (0, 1), 5)
    assert set(count.orbits) | set(count.failures) == {(1, 2), (1, 3), (2, 3), (1, 4), (3, 4),
                                                       (1, 5), (2, 5), (3, 5), (4, 5)}
    for orbs in count.orbits.values():
        assert all(o.residual < 1e-10 for o in orbs if not o.family)
    assert count.periods().size >= len(count.orbits)


def test_count_rejects_uncovered_band():
    with pytest.raises(AnnulusError):
        count_orbits(make_map(0.0), (0, 100), 3)


def test_integrable_iterates_translate():
    spec = make_map(0.0, L=1.7)
    eta = 0.3
    orbit = iterate_lift(spec, (0.0, eta), 20)
    np.testing.assert_allclose(orbit[:, 0], np.arange(21) * float(spec.f(eta)), rtol=1e-14, atol=1e-13)
    assert np.all(orbit[:, 1] == eta)


def test_one_one_level_and_rotation():
    spec = make_map(0.0)
    (orb,) = find_periodic(spec, 1, 1, shortcut=False)
    assert orb.family and orb.eta == pytest.approx(-0.5, abs=1e-9)
    assert rotation_number(spec, (0.0, -0.5), n=10_000).value == pytest.approx(1.0, abs=1e-12)


def test_rotation_number_decreases_in_eta():
    spec = make_map(0.0)
    values = [rotation_number(spec, (0.0, e), n=2000).value for e in np.linspace(-0.9, 0.9, 13)]
    assert np.all(np.diff(values) < 0)


def test_perturbed_orbits_have_exact_prime_period():
    spec = make_map(0.01)
    for p, q in ((1, 3), (2, 5)):
        for o in find_periodic(spec, p, q, shortcut=False):
            if o.family:
                continue
            orbit = iterate_lift(spec, o.point, q)
            assert abs(orbit[q, 0] - o.x - p * spec.L) < 1e-9 and abs(orbit[q, 1] - o.eta) < 1e-9
            for d in range(1, q):
                gap = (orbit[d, 0] - o.x) % spec.L
                assert min(gap, spec.L - gap) + abs(orbit[d, 1] - o.eta) > 1e-9


def test_perturbed_count_finds_birkhoff_pairs():
    count = count_orbits(PERTURBED, (0, 1), 6)
    assert not count.failures and len(count.orbits) == 11
    for orbs in count.orbits.values():
        isolated = [o for o in orbs if not o.family]
        assert len(isolated) >= 2 and all(o.residual < 1e-10 for o in isolated)
