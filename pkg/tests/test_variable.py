import math

import numpy as np
import pytest

from horolab.errors import ConfigError, HorizonExceeded
from horolab.flows import (LocalCoords, chart_roundtrip_residual, equivariance_residual,
                           renormalization_residuals)
from horolab.variable import ConformalMetric, VariableBackend, curvature_grid, state

HYP = VariableBackend(ConformalMetric(a=0.0))
VAR = VariableBackend(ConformalMetric(a=0.05))
X0 = state(0.1, 0.5, 0.4)


def _semicircle(x, y, theta, s):
    """Closed-form unit-speed half-plane geodesic (theta measured from +x)."""
    c = x + y * math.tan(theta)
    r = y / abs(math.cos(theta))
    phi0 = math.atan2(y, x - c)
    q = math.log(math.tan(phi0 / 2)) + (-s if math.cos(theta) > 0 else s)
    phi = 2 * math.atan(math.exp(q))
    return c + r * math.cos(phi), r * math.sin(phi)


def test_constant_curvature():
    m = ConformalMetric(a=0.0)
    for x, y in [(0.0, 1.0), (0.4, 0.2), (-1.0, 2.5)]:
        assert abs(m.curvature(x, y) + 1.0) < 1e-10


def test_fd_laplacian_matches_formula():
    m = ConformalMetric(a=0.0)
    x, y, h = 0.3, 0.7, 1e-4
    f = m.log_lambda
    lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4 * f(x, y)) / h ** 2
    K = -lap / math.exp(2 * f(x, y))
    assert abs(K - m.curvature(x, y)) < 1e-6


def test_perturbed_curvature_negative():
    m = ConformalMetric(a=0.05)
    xs, ys = np.meshgrid(np.linspace(-3, 3, 100), np.linspace(0.01, 3.0, 100))
    assert np.all(curvature_grid(0.05, xs, ys) < 0)
    assert m.kbound < 0


def test_metric_validation():
    with pytest.raises(ConfigError):
        ConformalMetric(a=0.05, kind="flat")
    with pytest.raises(HorizonExceeded):
        ConformalMetric().curvature(0.0, 10.0)


def test_geodesic_matches_closed_form():
    for theta in (0.3, 2.5, -0.4):
        x0 = state(0.2, 0.8, theta)
        for s in (0.5, 1.5, 3.0):
            p = HYP.g(x0, s)
            cx, cy = _semicircle(0.2, 0.8, theta, s)
            assert abs(p[0] - cx) < 1e-7 and abs(math.exp(p[1]) - cy) < 1e-7


def test_geodesic_reversible_and_unit_speed():
    p = VAR.g(X0, 1.3)
    assert VAR.distance(VAR.g(p, -1.3), X0) < 1e-6
    assert VAR.unit_speed_defect(p) < 1e-8
    assert VAR.distance(VAR.g(X0, 0.0), X0) == 0.0


def test_horizon():
    with pytest.raises(HorizonExceeded):
        HYP.g(state(0.0, 1.0, math.pi / 2), 6.0)


def test_unstable_direction_constant_curvature():
    assert abs(HYP.unstable_direction(X0, warmup=10.0).u - 1.0) < 1e-6


def test_riccati_seed_independence():
    a = VAR.unstable_direction(X0, warmup=10.0, seed=0.5).u
    b = VAR.unstable_direction(X0, warmup=10.0, seed=2.0).u
    assert abs(a - b) < 1e-8
    assert 1 - 0.15 <= a <= 1 + 0.15


def test_riccati_residual():
    d = 1e-3
    up = VAR.unstable_direction(VAR.g(X0, d)).u
    um = VAR.unstable_direction(VAR.g(X0, -d)).u
    u = VAR.unstable_direction(X0).u
    K = VAR.metric.curvature(X0[0], math.exp(X0[1]))
    assert abs((up - um) / (2 * d) + u * u + K) < 1e-5


def test_density_calibration():
    assert abs(VAR.density(state(*VAR.ref)) - 1.0) < 1e-12


def test_arc_measure_constant_curvature():
    est = HYP.margulis_arc_measure(X0, 0.1)
    assert abs(est.value - 0.1) < 1e-6
    assert est.convergence_gap < 1e-6


def test_arc_measure_additive():
    a = VAR.margulis_arc_measure(X0, 0.05).value
    b = VAR.margulis_arc_measure(VAR.leaf_point(X0, 0.05), 0.05).value
    ab = VAR.margulis_arc_measure(X0, 0.1).value
    assert abs(a + b - ab) < 0.01 * ab


def test_expansion_law():
    assert abs(VAR.expansion_ratio(X0, 0.1, 1.0) - 1.0) < 0.02


def test_horocycle_constant_curvature_closed_form():
    # through i with horizontal direction the leaf is a horocycle based at
    # -1 or +1: a Euclidean circle of radius 1 tangent to the real axis
    x = state(0.0, 1.0, 0.0)
    p = HYP.h(x, 0.2)
    z = complex(p[0], math.exp(p[1]))
    assert min(abs(z - complex(-1, 1)), abs(z - complex(1, 1))) - 1.0 < 1e-6
    d = math.acosh(1 + abs(z - 1j) ** 2 / (2 * z.imag))
    assert abs(2 * math.sinh(d / 2) - 0.2) < 1e-5
    assert VAR.distance(VAR.h(X0, 0.0), X0) < 1e-12


def test_renormalization_variable():
    for s, t in [(1.0, 0.05), (-1.0, -0.05), (0.5, 0.03)]:
        rh, rk = renormalization_residuals(VAR, X0, s, t)
        assert rh < 1e-3 and rk < 1e-3


def test_chart_and_equivariance_variable():
    c = LocalCoords(0.02, -0.01, 0.015)
    y = VAR.reconstruct(X0, c)
    assert chart_roundtrip_residual(VAR, y, X0) < 1e-6
    assert max(abs(a - b) for a, b in zip(VAR.local_coords(y, X0), c)) < 1e-6
    assert equivariance_residual(VAR, X0, 0.3, 0.004, 0.5) < 1e-3


def test_entropy():
    rng = np.random.default_rng(1)
    samples = [state(x, y, th) for x, y, th in zip(rng.uniform(-0.3, 0.3, 4),
                                                   rng.uniform(0.8, 1.2, 4),
                                                   rng.uniform(-0.5, 0.5, 4))]
    h0, _ = HYP.entropy_estimate(samples, 6.0)
    assert abs(h0 - 1.0) < 1e-3
    h1, _ = VAR.entropy_estimate(samples, 6.0)
    h2, _ = VAR.entropy_estimate(samples, 3.0)
    assert 0.85 <= h1 <= 1.15
    assert abs(h1 - h2) < 0.02 * h1
    hs, _ = VAR.entropy_estimate(samples, 6.0, stable=True)
    assert 0.85 <= hs <= 1.15
