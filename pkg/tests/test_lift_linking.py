from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import winding_of
from revolution_geodesics.lift_linking import (
    LINK_TABLE,
    EulerAngles,
    LinkingError,
    S3Curve,
    core_circle,
    covering_map,
    lift_satellite_model,
    linking_number,
    model_link,
    preimage,
    torus_curve,
    verify_link_table,
)

N = 1024
angles = st.floats(0.0, 2 * math.pi, exclude_max=True)


def _ang_close(a, b, tol=1e-9):
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d) < tol


@given(angles, angles, st.floats(0.01, math.pi - 0.01))
def test_preimage_round_trip(phi, theta, nu):
    e = EulerAngles(phi, theta, nu)
    for x in preimage(e):
        assert np.linalg.norm(x) == pytest.approx(1.0)
        back = covering_map(x)
        assert _ang_close(back.phi, phi) and _ang_close(back.theta, theta)
        assert back.nu == pytest.approx(nu, abs=1e-12)


def test_covering_map_example():
    x = np.array([math.cos(0.3), math.sin(0.3), 0.0, 0.0]) * math.sqrt(0.5)
    x[2:] = [math.sqrt(0.5) * math.cos(0.1), math.sqrt(0.5) * math.sin(0.1)]
    e = covering_map(x)
    assert e.phi == pytest.approx(0.4) and e.theta == pytest.approx(0.2)
    assert e.nu == pytest.approx(math.pi / 2)


def test_covering_map_rejects_core_points():
    with pytest.raises(LinkingError):
        covering_map([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(LinkingError):
        EulerAngles(0.0, 0.0, math.pi)


def test_curve_validation():
    with pytest.raises(LinkingError):
        S3Curve(np.ones((5, 4)))
    t = np.linspace(0.0, math.pi, 16)
    bad = np.column_stack([np.cos(t), np.sin(t), 0 * t, 0 * t])
    with pytest.raises(LinkingError):
        S3Curve(bad)


def test_hopf_link_is_positive():
    res = linking_number(core_circle(1, 1, N), core_circle(2, 1, N))
    assert res.value == 1 and res.residual < 0.05


def test_reversal_and_symmetry():
    a, b = core_circle(1, 1, N), torus_curve(0.6, 2, 3, 2 * math.pi, N)
    ab = linking_number(a, b).value
    assert linking_number(b, a).value == ab
    assert linking_number(a.reversed(), b).value == -ab
    assert linking_number(a, b.reversed()).value == -ab


@pytest.mark.parametrize("p,q", [(1, 0), (1, 1), (2, 1), (3, 1), (3, 2), (5, 2)])
def test_satellite_against_winding_oracle(p, q):
    sat = lift_satellite_model(p, q, samples=N)
    z1, z2 = sat.complex_pair()
    assert linking_number(sat, core_circle(2, 1, N)).value == winding_of(z1)
    assert linking_number(sat, core_circle(1, 1, N)).value == winding_of(z2)


def test_unlinked_parallel_circles():
    a = torus_curve(0.3, 1, 0, 2 * math.pi, N)
    b = torus_curve(0.3, 1, 0, 2 * math.pi, N, phase2=math.pi)
    assert linking_number(a, b).value == 0


def test_projection_pole_does_not_matter():
    a, b = lift_satellite_model(3, 1, samples=N), core_circle(1, 1, N)
    assert {linking_number(a, b, seed=s).value for s in range(4)} == {linking_number(a, b).value}


def test_noise_does_not_change_value():
    rng = np.random.default_rng(3)
    a = lift_satellite_model(3, 2, samples=N)
    z1, z2 = a.complex_pair()
    noise = 1e-3 * (rng.standard_normal(z1.shape) + 1j * rng.standard_normal(z1.shape))
    noisy = S3Curve.from_complex(z1 + noise, z2 + noise[::-1])
    b = core_circle(2, 1, N)
    assert linking_number(noisy, b).value == linking_number(a, b).value


def test_too_close_curves_rejected():
    a = core_circle(1, 1, N)
    with pytest.raises(LinkingError):
        linking_number(a, a)


def test_model_link_involution():
    c = model_link(N)
    z1, z2 = c["D+"].complex_pair()
    w1, w2 = c["D-"].complex_pair()
    np.testing.assert_allclose(w1, np.conj(z2), atol=1e-15)
    np.testing.assert_allclose(w2, np.conj(z1), atol=1e-15)


def test_link_table():
    report = verify_link_table(N, check_refinement=True)
    assert report.passed and report.sigma == 1
    assert report.values == LINK_TABLE
    assert max(report.residuals.values()) < 0.05


def test_curve_json_round_trip(tmp_path):
    a = lift_satellite_model(3, 1, samples=64)
    a.to_json(tmp_path / "c.json")
    np.testing.assert_array_equal(S3Curve.from_json(tmp_path / "c.json").samples, a.samples)
