import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from horolab.algebraic import (A, L, U, AlgebraicBackend, chart_matrix, closed_form_holonomy,
                               core_volume, domain_coords, iwasawa, reduce)
from horolab.errors import DeterminantOutOfRange, LocalityViolated, OutOfChart
from horolab.flows import LocalCoords

small = st.floats(-0.3, 0.3)
coord = st.floats(-2.0, 2.0)


def _sl2z(rng, steps=6):
    m = np.eye(2)
    gens = [np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[0.0, -1.0], [1.0, 0.0]])]
    for _ in range(steps):
        g = gens[rng.integers(2)]
        m = m @ (g if rng.random() < 0.5 else np.linalg.inv(g))
    return np.round(m)


def test_generators_conjugation():
    s, t = 0.7, -0.4
    np.testing.assert_allclose(A(-s) @ L(t) @ A(s), L(math.exp(s) * t), atol=1e-14)
    np.testing.assert_allclose(A(-s) @ U(t) @ A(s), U(math.exp(-s) * t), atol=1e-14)


def test_reduce_rejects_bad_determinant():
    with pytest.raises(DeterminantOutOfRange):
        reduce(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_reduce_identity_and_invariance(rng):
    assert np.allclose(np.abs(reduce(np.eye(2))), np.eye(2))
    x = iwasawa(0.2, 1.7, 0.4)
    r0 = reduce(x)
    for _ in range(20):
        r1 = reduce(_sl2z(rng) @ x)
        assert np.allclose(r0, r1, atol=1e-10) or np.allclose(r0, -r1, atol=1e-10)


def test_domain_coords_in_fundamental_domain(alg, rng):
    xs = alg.haar_sample(rng, 200)
    c = domain_coords(xs)
    assert np.all(np.abs(c[:, 0]) <= 0.5 + 1e-12)
    assert np.all(c[:, 0] ** 2 + c[:, 1] ** 2 >= 1 - 1e-12)


def test_distance_is_quotient_invariant(alg, rng):
    x = alg.haar_sample(rng)
    y = alg.h(x, 0.01)
    d = alg.distance(x, y)
    assert d > 0
    assert math.isclose(alg.distance(_sl2z(rng) @ x, _sl2z(rng) @ y), d, rel_tol=1e-8)
    assert alg.distance(x, _sl2z(rng) @ x) < 1e-7


@given(small, small, small)
def test_chart_roundtrip(u, v, w):
    alg = AlgebraicBackend()
    y = iwasawa(0.1, 1.3, 0.5)
    x = y @ chart_matrix(u, v, w)
    c = alg.local_coords(x, y)
    assert max(abs(c.u - u), abs(c.v - v), abs(c.w - w)) < 1e-9


def test_chart_roundtrip_after_lattice_change(alg, rng):
    y = alg.haar_sample(rng)
    c0 = LocalCoords(0.05, -0.03, 0.02)
    x = _sl2z(rng) @ alg.reconstruct(y, c0)
    c = alg.local_coords(x, y)
    assert max(abs(a - b) for a, b in zip(c, c0)) < 1e-9


def test_chart_out_of_range(alg):
    y = iwasawa(0.0, 1.0, 0.0)
    x = alg.g(y, 3.0)
    with pytest.raises(OutOfChart):
        alg.local_coords(x, y)


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_closed_form_solves_relation(s, t):
    if abs(s * t) >= 0.99:
        return
    hol = closed_form_holonomy(s, t)
    lhs = L(s) @ U(hol.tau) @ A(hol.rho)
    rhs = U(t) @ L(hol.sigma)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_closed_form_locality():
    with pytest.raises(LocalityViolated):
        closed_form_holonomy(2.0, 0.5)


def test_haar_sample_uniform_in_theta_and_x(alg, rng):
    c = domain_coords(alg.haar_sample(rng, 4000))
    # X uniform on [-1/2, 1/2] up to the arc cut; theta uniform on [0, pi)
    assert abs(np.mean(c[:, 2]) - math.pi / 2) < 0.1
    assert abs(np.mean(c[:, 0])) < 0.03


def test_core_volume_limit():
    # the full modular surface has area pi/3, times pi for the angle
    assert abs(core_volume(1e4) - math.pi ** 2 / 3) < 1e-6
    assert core_volume(5.0) < core_volume(10.0)


def test_box_measure_ratio(alg, rng):
    ratio, se, nin = alg.box_measure_ratio(iwasawa(0.2, 1.1, 0.0), (0.8, 0.8, 0.8), 20000, rng)
    assert nin == 1
    assert abs(ratio - 1.0) < 4 * se + 1e-3
