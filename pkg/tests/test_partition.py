import math

import numpy as np
import pytest

from horolab.algebraic import iwasawa
from horolab.errors import CoreNotCovered
from horolab.matching.partition import (OUT, UPartition, boundary_measure, boundary_occupancy,
                                        build_u_partition, itineraries, itinerary, sample_times)


def test_grid_labels_cover_core(alg, rng):
    part = UPartition.grid((2, 3, 4))
    assert part.m == 24
    lab = part.label(alg.haar_sample(rng, 2000))
    assert lab.min() >= 0 and lab.max() < 24
    assert len(np.unique(lab)) == 24


def test_label_is_coset_invariant(alg, rng):
    part = UPartition.grid((2, 3, 4))
    x = alg.haar_sample(rng)
    S = np.array([[0.0, -1.0], [1.0, 0.0]])
    T = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert part.label(x) == part.label(S @ T @ x) == part.label(-x)


def test_outside_core_is_out():
    part = UPartition.grid((1, 1, 1), core_norm=3.0)
    assert part.label(iwasawa(0.0, 50.0, 0.0)) == OUT


def test_single_cell_has_no_boundary(alg, rng):
    part = UPartition.grid((1, 1, 1))
    xs = alg.haar_sample(rng, 500)
    assert not part.in_boundary(xs, 0.01).any()


def test_boundary_measure_shrinks(alg, rng):
    part = UPartition.grid((1, 2, 4))
    big, _ = boundary_measure(alg, part, 0.05, 4000, rng)
    small, _ = boundary_measure(alg, part, 0.01, 4000, rng)
    assert 0 < small < big


def test_build_single_box(alg, rng):
    part = build_u_partition(alg, 100.0, alg.haar_sample(rng, 200))
    assert part.m == 1
    assert part.leftover == 0.0


def test_build_cell_count_scaling(alg, rng):
    seeds = alg.haar_sample(rng, 500)
    m1 = build_u_partition(alg, 1.0, seeds).m
    m2 = build_u_partition(alg, 0.5, seeds).m
    assert 1.5 <= math.log2(m2 / m1) <= 3.5


def test_build_rejects_uncovered(alg):
    seeds = np.array([iwasawa(0.0, 500.0, 0.0)] * 10)
    with pytest.raises(CoreNotCovered):
        build_u_partition(alg, 1.0, seeds)


def test_itinerary_shape_and_determinism(alg, rng):
    part = UPartition.grid((1, 2, 10))
    x = alg.haar_sample(rng)
    it = itinerary(alg, x, part, 10.0, 0.3)
    assert len(it) == math.ceil(10.0 / 0.3)
    assert it.labels[0] == part.label(x)
    assert np.array_equal(it.labels, itinerary(alg, x, part, 10.0, 0.3).labels)
    k = 7
    assert it.labels[k] == part.label(alg.h(x, k * 0.3))


def test_short_itinerary(alg, rng):
    part = UPartition.grid((1, 2, 10))
    x = alg.haar_sample(rng)
    it = itinerary(alg, x, part, 0.1, 0.5)
    assert len(it) == 1 and it.labels[0] == part.label(x)
    assert len(sample_times(0.1, 0.5)) == 1


def test_occupancy_matches_direct_count(alg, rng):
    part = UPartition.grid((1, 2, 10))
    xs = alg.haar_sample(rng, 5)
    R, dt, r = 5.0, 0.1, 0.05
    occ = boundary_occupancy(xs, part, R, dt, r)
    for x, o in zip(xs, occ):
        pts = np.array([alg.h(x, t) for t in sample_times(R, dt)])
        assert math.isclose(o, part.in_boundary(pts, r).sum() * dt)
    labs = itineraries(xs, part, R, dt)
    assert labs.shape == (5, len(sample_times(R, dt)))
