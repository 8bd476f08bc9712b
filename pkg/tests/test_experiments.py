import math

import numpy as np
import pytest

from horolab.algebraic import chart_matrix
from horolab.errors import PreconditionViolated
from horolab.matching import experiments as E
from horolab.matching import fr
from horolab.matching.partition import UPartition


@pytest.fixture(scope="module")
def part3():
    return UPartition.grid((1, 3, 1), y_spacing="log")


def test_pm_membership_box(alg, rng):
    y = alg.haar_sample(rng)
    eps, R = 0.1, 10.0
    assert E.pm_membership(alg, y, y, R, eps)
    assert E.pm_membership(alg, alg.g(y, eps / 2), y, R, eps)
    assert not E.pm_membership(alg, alg.g(y, 2 * eps), y, R, eps)
    assert not E.pm_membership(alg, alg.k(y, 2 * eps / R), y, R, eps)
    assert not E.pm_membership(alg, alg.g(y, 5.0), y, R, eps)


def test_pm_volume_mc(alg, rng):
    y = alg.haar_sample(rng)
    for one_sided in (True, False):
        v, se = E.pm_volume_mc(alg, y, 20.0, 0.1, 20000, rng, one_sided)
        exact = E.pm_volume(20.0, 0.1, one_sided)
        assert abs(v - exact) < 0.05 * exact


def test_sample_pm_coordinates(alg, rng):
    y = alg.haar_sample(rng)
    z, c = E.sample_pm(alg, y, 10.0, 0.05, 50, rng, one_sided=True)
    got, found = E.pm_coords(z, y, alg, 10.0, 0.05)
    assert found.all()
    assert np.allclose(got, c, atol=1e-9)


def test_claimA_identity(alg, rng, part3):
    y = alg.haar_sample(rng)
    res = E.claimA_build_matching(alg, y, y, 0.0, 20.0, part3, 0.3)
    assert res.in_ball
    assert res.max_slope_dev < 1e-9
    assert fr.check_matching(res.map, 0.3)


def test_claimA_trials(alg, rng, part3):
    res = E.claimA_experiment(alg, part3, 0.3, 50.0, 10, rng)
    assert np.mean([r.in_ball for r in res]) >= 0.8
    for r in res:
        if r.in_ball:
            assert r.max_slope_dev < 0.3
            assert fr.check_matching(r.map, 0.3)


def test_claimB_preconditions(alg, rng):
    y = alg.haar_sample(rng)
    with pytest.raises(PreconditionViolated):
        E.claimB_disjointness(alg, y, 100.0, 0.3, 1.0, 1.0, 10, rng)
    with pytest.raises(PreconditionViolated):
        E.claimB_disjointness(alg, y, 100.0, 0.3, 0.0, 50.0, 10, rng)


def test_claimB_small(alg, rng):
    y = alg.haar_sample(rng)
    res = E.claimB_experiment(alg, y, 100.0, 0.3, 50, 50, rng)
    assert res.disjoint
    assert 0.3 ** 2 / 2 <= res.sep_min and res.sep_max <= 2 * 0.3


def test_union_mass_lower_bound(alg, rng):
    y = alg.haar_sample(rng)
    eps, R = 0.3, 100.0
    mass, _, pieces = E.pm_union_mass(alg, y, R, eps, 500, rng)
    assert pieces == math.floor(eps ** 3 * R) + 1
    assert mass >= 0.5 * math.floor(eps ** 3 * R) * eps ** 15 / R


def test_good_set(alg, rng, part3):
    xs = alg.haar_sample(rng, 200)
    eps, R, dt = 0.3, 20.0, 0.05
    mask, occ = E.good_set_filter(alg, xs, R, eps, part3, dt)
    assert np.all(occ[mask] <= eps * R / 2)
    single = UPartition.grid((1, 1, 1))
    assert E.good_set_filter(alg, xs, R, eps, single, dt)[0].all()
    N, hist = E.find_N_eps(alg, xs, eps, part3, dt)
    assert N is not None and hist[-1][1] >= 1 - 2 * eps ** 2


def test_greedy_cover():
    F = np.ones((5, 5), dtype=bool)
    assert E.greedy_cover(F, 0.3) == (1, [0])
    F = np.eye(4, dtype=bool)
    n, centers = E.greedy_cover(F, 0.3)
    assert n == 3 and centers == [0, 1, 2]


def test_cover_single_cell_and_monotone(alg, rng):
    xs = alg.haar_sample(rng, 40)
    n, _, _ = E.covering_number(alg, xs, 10.0, 0.3, UPartition.grid((1, 1, 1)), 0.5)
    assert n == 1
    part = UPartition.grid((1, 2, 10))
    ns = [E.covering_number(alg, xs, 10.0, e, part, 0.5)[0] for e in (0.2, 0.3, 0.5)]
    assert ns[0] >= ns[1] >= ns[2]


def test_ball_measure(alg, rng):
    part = UPartition.grid((1, 2, 10))
    y = alg.haar_sample(rng)
    # near 1 only pairs with no common cell at all fail
    p, _ = E.ball_measure_mc(alg, y, 10.0, 0.99, part, 200, rng, 0.1)
    assert p > 0.9
    xs = alg.haar_sample(rng, 50)
    q, _ = E.ball_measure_mc(alg, xs[0], 10.0, 0.3, part, 50, rng, 0.5, samples=xs)
    F = E.feasibility_matrix(xs, 10.0, 0.3, part, 0.5)
    assert math.isclose(q, F[0].mean())
