from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cz_rotation, gf2_rank_brute
from revolution_geodesics.cz_morsebott import (
    J,
    CZError,
    PerturbationData,
    SymplecticPath,
    Z2ChainComplex,
    assemble_model_homology,
    cz_index,
    exp_path,
    expm_sl2,
    gf2_rank,
    gradient_flowlines,
    linearized_monodromy,
    logm_sl2,
    maslov_loop,
    perturbed_pair,
    rotation_path,
    z2_homology,
)

MB_GRID = list(itertools.product([0.5, -0.5, 2.0, -2.0], [0.01, 0.1]))


def _random_path(rng):
    """Rotation-type or hyperbolic-type path with nondegenerate endpoint."""
    if rng.random() < 0.5:
        k = int(rng.integers(-3, 4))
        angle = 2 * math.pi * k + rng.uniform(0.3, 2 * math.pi - 0.3)
        return rotation_path(angle), cz_rotation(angle)
    a = rng.uniform(0.5, 2.0)
    S = np.array([[1.0, rng.uniform(-1, 1)], [0.0, 1.0]])
    A = S @ np.diag([a, -a]) @ np.linalg.inv(S)
    return exp_path(A), 0


# ------------------------------------------------------------------ sl(2)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_expm_matches_series_and_logm_inverts(a, b, c):
    A = np.array([[a, b], [c, -a]])
    E = expm_sl2(A)
    series = sum(np.linalg.matrix_power(A, k) / math.factorial(k) for k in range(60))
    np.testing.assert_allclose(E, series, rtol=1e-9, atol=1e-9)
    assert np.linalg.det(E) == pytest.approx(1.0, abs=1e-9)
    small = 0.2 * A / max(1.0, np.abs(A).max())
    np.testing.assert_allclose(logm_sl2(expm_sl2(small)), small, atol=1e-12)


def test_path_validation():
    t = np.linspace(0, 1, 3)
    with pytest.raises(CZError):
        SymplecticPath(t, np.array([2 * np.eye(2)] * 3))
    with pytest.raises(CZError):
        SymplecticPath(t[::-1], np.array([np.eye(2)] * 3))
    with pytest.raises(CZError):
        exp_path([[1.0, 0.0], [0.0, 1.0]])


# ------------------------------------------------------------------ axioms
def test_normalization_inverse_triple_speed_hyperbolic():
    assert cz_index(rotation_path(math.pi)) == 1
    assert cz_index(rotation_path(math.pi).inverse()) == -1
    assert cz_index(rotation_path(3 * math.pi)) == 3
    assert cz_index(exp_path(np.diag([1.0, -1.0]))) == 0


@given(st.floats(-7 * math.pi, 7 * math.pi))
def test_rotation_against_oracle(angle):
    frac = (angle / (2 * math.pi)) % 1.0
    if min(frac, 1 - frac) < 0.02:
        return
    assert cz_index(rotation_path(angle)) == cz_rotation(angle)


def test_degenerate_endpoint_rejected():
    with pytest.raises(CZError):
        cz_index(rotation_path(2 * math.pi))


@pytest.mark.parametrize("k", [-2, -1, 0, 1, 3])
def test_maslov_of_rotation_loops(k):
    assert maslov_loop(rotation_path(2 * math.pi * k)) == k


def test_maslov_rejects_open_path():
    with pytest.raises(CZError):
        maslov_loop(rotation_path(1.0))


def test_loop_axiom_randomized():
    rng = np.random.default_rng(11)
    for _ in range(50):
        path, mu = _random_path(rng)
        k = int(rng.integers(-2, 3))
        S = expm_sl2(rng.uniform(-0.5, 0.5, (2, 2)) * np.array([[1, 1], [1, -1]]))
        Si = np.linalg.inv(S)
        loop = SymplecticPath.from_function(lambda t, k=k: S @ expm_sl2(2 * math.pi * k * t * J) @ Si)
        assert cz_index(path.compose(loop)) == mu + 2 * k == cz_index(path) + 2 * maslov_loop(loop)


def test_homotopy_invariance_randomized():
    rng = np.random.default_rng(12)
    for _ in range(20):
        path, mu = _random_path(rng)
        b = rng.uniform(-3, 3) or 1.0
        a = rng.uniform(-0.3, 0.3)
        # monotone reparametrisations fixing both endpoints
        phi = lambda t, b=b, a=a: (math.expm1(b * t) / math.expm1(b) + a * math.sin(math.pi * t) / math.pi) \
            if abs(b) > 1e-9 else t
        assert cz_index(path.reparametrize(phi)) == mu


def test_inverse_axiom_randomized():
    rng = np.random.default_rng(13)
    for _ in range(10):
        path, mu = _random_path(rng)
        assert cz_index(path.inverse()) == -mu


def test_sampled_path_json_round_trip(tmp_path):
    path = rotation_path(5.5 * math.pi)
    path.to_json(tmp_path / "p.json")
    again = SymplecticPath.from_json(tmp_path / "p.json")
    assert again.func is None
    assert cz_index(again) == cz_index(path) == 5


# ------------------------------------------------------------------ Morse-Bott pair
def test_perturbation_data_validation():
    for kw in ({"T": 0.0, "delta": 0.1, "c": 1.0}, {"T": 1.0, "delta": 1.0, "c": 1.0},
               {"T": 1.0, "delta": 0.1, "c": 0.0}):
        with pytest.raises(ValueError):
            PerturbationData(**kw)


@pytest.mark.parametrize("c,delta", MB_GRID)
def test_perturbed_pair(c, delta):
    data = PerturbationData(1.0, delta, c)
    pair = perturbed_pair(data)
    assert pair.action_max == (1 + delta) * 1.0 and pair.action_min == (1 - delta) * 1.0
    assert pair.mu_max - pair.mu_min == 1
    for which, mu, kind in (("max", pair.mu_max, pair.kind_max), ("min", pair.mu_min, pair.kind_min)):
        b = data.b(which)
        assert kind == ("hyperbolic" if b * c > 0 else "elliptic")
        if kind == "hyperbolic":
            assert mu == 0
        else:
            # exp(t T_w [[0, c], [b, 0]]) is conjugate to rotation by sign(b) sqrt|bc| T_w
            angle = math.copysign(math.sqrt(abs(b * c)), b) * data.period(which)
            assert mu == cz_rotation(angle)


def test_monodromy_endpoint():
    data = PerturbationData(2.0, 0.1, -0.5)
    path = linearized_monodromy(data, "max")
    A = data.period("max") * data.generator("max")
    np.testing.assert_allclose(path.endpoint, expm_sl2(A), atol=1e-14)


@pytest.mark.parametrize("delta", [0.01, 0.1, 0.5])
def test_gradient_flowlines(delta):
    lines = gradient_flowlines(delta)
    assert len(lines) == 2
    for ln in lines:
        assert ln.source == pytest.approx(math.pi, abs=1e-6)
        assert min(ln.sink, 2 * math.pi - ln.sink) < 1e-6
        assert ln.forward_time > 0 and ln.backward_time > 0


# ------------------------------------------------------------------ GF(2)
@given(st.lists(st.lists(st.integers(0, 1), min_size=5, max_size=5), min_size=1, max_size=6))
def test_gf2_rank_against_span_size(rows):
    assert gf2_rank(np.array(rows)) == gf2_rank_brute(rows)


def test_gf2_rank_examples():
    assert gf2_rank(np.array([[1, 1], [1, 1]])) == 1
    assert gf2_rank(np.array([[2, 0], [0, 3]])) == 1
    assert gf2_rank(np.zeros((0, 0))) == 0


def test_circle_complex_homology():
    # simplicial circle: three vertices, three edges
    d1 = [[1, 0, 1], [1, 1, 0], [0, 1, 1]]
    cx = Z2ChainComplex({0: 3, 1: 3}, {1: d1})
    h = z2_homology(cx)
    assert h == {0: 1, 1: 1}
    assert sum((-1) ** k * b for k, b in h.items()) == cx.euler_characteristic() == 0


def test_boundary_squared_rejected():
    with pytest.raises(ValueError):
        Z2ChainComplex({0: 1, 1: 1, 2: 1}, {1: [[1]], 2: [[1]]})
    with pytest.raises(ValueError):
        Z2ChainComplex({0: 1, 1: 2}, {1: [[1]]})


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.data())
def test_homology_euler_characteristic(n0, n1, n2, data):
    # d2 chosen so that d1 d2 = 0: columns of d2 drawn from the kernel of d1
    d1 = np.array(data.draw(st.lists(st.lists(st.integers(0, 1), min_size=n1, max_size=n1),
                                     min_size=n0, max_size=n0)), dtype=int).reshape(n0, n1)
    kernel = [v for v in itertools.product([0, 1], repeat=n1) if not np.any((d1 @ np.array(v, dtype=int)) % 2)]
    d2 = np.array([data.draw(st.sampled_from(kernel)) for _ in range(n2)], dtype=int).reshape(n2, n1).T
    cx = Z2ChainComplex({0: n0, 1: n1, 2: n2}, {1: d1, 2: d2})
    h = z2_homology(cx)
    assert sum((-1) ** k * b for k, b in h.items()) == cx.euler_characteristic()


@pytest.mark.parametrize("c,delta", [(0.5, 0.1), (-2.0, 0.01)])
def test_assembled_homology_is_circle(c, delta):
    pair = perturbed_pair(PerturbationData(1.0, delta, c))
    summary = assemble_model_homology(pair, len(gradient_flowlines(delta)))
    assert summary.degrees == {pair.mu_min: 1, pair.mu_max: 1}
    shifted = assemble_model_homology(pair, 2, offset=3)
    assert set(shifted.degrees) == {pair.mu_min + 3, pair.mu_min + 4}
    assert summary.to_dict()["degrees"] == {str(pair.mu_min): 1, str(pair.mu_max): 1}


def test_odd_cylinder_count_kills_homology():
    pair = perturbed_pair(PerturbationData(1.0, 0.1, 1.0))
    assert set(assemble_model_homology(pair, 1).degrees.values()) == {0}
