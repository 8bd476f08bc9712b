"""Pre-matching balls and the matching experiments on the algebraic model.

``PM(R, eps, y)`` is the chart box ``{g_u h_v k_w y : |u|, |v| < eps,
|w| < eps / R}``.  Its invariant volume is ``8 eps^3 / R``; the one-sided
box (all three coordinates in ``[0, eps)``) has volume ``eps^3 / R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..algebraic import chart_matrix
from ..errors import PreconditionViolated
from ..flows import solve_holonomy_batch
from . import fr
from .partition import (OUT, boundary_occupancy, itineraries, orbit_boundary,
                        orbit_labels, sample_times)


# -- pre-matching balls --------------------------------------------------------

def pm_volume(R, eps, one_sided=True):
    v = eps ** 3 / R
    return v if one_sided else 8.0 * v


def pm_coords(x, y, backend, R, eps):
    """Chart coordinates of x relative to y searched in the PM box, and a
    found flag (False if no decomposition lies in the box)."""
    x = np.asarray(x, dtype=float).reshape(-1, 2, 2)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    return backend.chart_search(x, y, (eps, eps, eps / R))[:2]


def pm_membership(backend, x, y, R, eps, one_sided=False):
    """``x in PM(R, eps, y)``; works on stacks of x.  Chart failure means
    False."""
    c, found = pm_coords(x, y, backend, R, eps)
    bound = np.array([eps, eps, eps / R])
    if one_sided:
        ok = np.all((c >= 0.0) & (c < bound), axis=1)
    else:
        ok = np.all(np.abs(c) < bound, axis=1)
    ok &= found
    return ok if np.ndim(x) == 3 else bool(ok[0])


def sample_pm(backend, y, R, eps, n, rng, one_sided=False):
    """Invariant-measure samples of ``PM(R, eps, y)`` and their coordinates."""
    lo = 0.0 if one_sided else -1.0
    c = rng.uniform(lo, 1.0, (n, 3)) * np.array([eps, eps, eps / R])
    return np.asarray(y) @ chart_matrix(c[:, 0], c[:, 1], c[:, 2]), c


def pm_volume_mc(backend, y, R, eps, n, rng, one_sided=False):
    """Monte Carlo invariant volume of the membership set.

    Points are drawn from the chart box of twice the size, whose chart
    measure is the invariant measure, and every point is classified by a
    fresh chart search.  Returns ``(estimate, standard error)``.
    """
    half = 2.0 * np.array([eps, eps, eps / R])
    c = rng.uniform(-1.0, 1.0, (n, 3)) * half
    pts = np.asarray(y) @ chart_matrix(c[:, 0], c[:, 1], c[:, 2])
    hit = pm_membership(backend, pts, y, R, eps, one_sided)
    vol = float(np.prod(2.0 * half))
    p = float(hit.mean())
    return vol * p, vol * math.sqrt(max(p * (1.0 - p), 1e-300) / n)


def pm_volume_scaling(backend, y, eps_grid, R_grid, n, rng, one_sided=False):
    """Log-log slopes of the measured volume in eps (at the first R) and in
    R (at the first eps)."""
    ve = [pm_volume_mc(backend, y, R_grid[0], e, n, rng, one_sided)[0] for e in eps_grid]
    vr = [pm_volume_mc(backend, y, R, eps_grid[0], n, rng, one_sided)[0] for R in R_grid]
    se = np.polyfit(np.log(eps_grid), np.log(ve), 1)[0]
    sr = np.polyfit(np.log(R_grid), np.log(vr), 1)[0]
    return float(se), float(sr), np.array(ve), np.array(vr)


# -- good set --------------------------------------------------------------------

def good_set_filter(backend, samples, R, eps, partition, dt):
    """Samples whose time in ``V_{eps^2}`` along ``[0, R]`` is at most
    ``eps R / 2``.  Returns ``(mask, occupancy)``."""
    occ = boundary_occupancy(samples, partition, R, dt, eps * eps)
    return occ <= 0.5 * eps * R, occ


def find_N_eps(backend, samples, eps, partition, dt, R0=5.0, R_max=1000.0):
    """Double R until the retained fraction reaches ``1 - 2 eps^2``.

    Returns ``(N_eps or None, [(R, retained fraction), ...])``.
    """
    hist = []
    R = R0
    while R <= R_max:
        mask, _ = good_set_filter(backend, samples, R, eps, partition, dt)
        frac = float(mask.mean())
        hist.append((R, frac))
        if frac >= 1.0 - 2.0 * eps * eps:
            return R, hist
        R *= 2.0
    return None, hist


# -- Claim A ---------------------------------------------------------------------

@dataclass
class ClaimAResult:
    map: fr.MatchingMap
    in_ball: bool
    matched_fraction: float
    max_slope_dev: float
    max_slope_dev_fd: float
    coords: tuple


def claimA_build_matching(backend, x, y, p, R, partition, eps, dt=None):
    """Explicit matching of the orbits of y and x.

    With ``h_p x = g_u h_v k_w y`` the holonomy at y gives
    ``h_{l(t)} x = g_{u + rho} k_tau h_t y`` for
    ``l(t) = p + e^u (sigma(y, t, w) - v)``, whose slope is ``e^{u + rho}``.
    Samples ``t`` of ``[0, R]`` count as matched when ``h_t y`` is outside
    ``V_{eps^2}``, ``l(t)`` lies in ``[0, R]`` and the labels agree.
    """
    dt = R / 2000.0 if dt is None else dt
    e5 = eps ** 5
    c, found = pm_coords(backend.h(x, p), y, backend, R, e5)
    u, v, w = c[0]
    if not found[0] or max(abs(u), abs(v)) >= e5 or abs(w) >= e5 / R:
        raise PreconditionViolated("h_p x is not in PM(R, eps^5, y)")
    ts = sample_times(R, dt)
    te = np.append(ts, ts[-1] + dt)
    hol = solve_holonomy_batch(backend, np.asarray(y, dtype=float), te, w)
    ell = p + math.exp(u) * (hol[:, 1] - v)
    slope = np.exp(u + hol[:, 0])
    slope_fd = np.diff(ell) / dt

    args = partition._args()
    yv = np.asarray(y, dtype=float)[None]
    xv = np.asarray(x, dtype=float)[None]
    lab_y = orbit_labels(yv, ts, *args)[0]
    lab_x = orbit_labels(xv, ell[:-1], *args)[0]
    bnd = orbit_boundary(yv, ts, eps * eps, *args)[0]
    inside = (ell[:-1] >= 0.0) & (ell[1:] <= R)
    ok = (~bnd) & inside & (lab_y == lab_x) & (lab_y != OUT)

    segs = np.column_stack([ts, ts + dt, ell[:-1], ell[1:]])[ok]
    mmap = fr.MatchingMap(segs, R, eps)
    frac = float(ok.sum() * dt / R)
    return ClaimAResult(mmap, frac >= 1.0 - eps, frac,
                        float(np.max(np.abs(slope - 1.0))),
                        float(np.max(np.abs(slope_fd - 1.0))), (u, v, w))


def draw_good_point(backend, partition, R, eps, dt, rng, batch=4, max_tries=10000):
    """Invariant samples of the core until one passes the good-set filter."""
    tries = 0
    while tries < max_tries:
        ys = backend.haar_sample(rng, batch)
        mask, _ = good_set_filter(backend, ys, R, eps, partition, dt)
        tries += batch
        if mask.any():
            return ys[np.argmax(mask)]
    raise PreconditionViolated("no good point found")


def claimA_experiment(backend, partition, eps, R, n_trials, rng, dt=None, p_steps=100):
    """Trials of the explicit construction; p is drawn from a grid of
    spacing ``eps^3 R / p_steps``.  Returns a list of ClaimAResult."""
    dt = R / 2000.0 if dt is None else dt
    e5 = eps ** 5
    out = []
    p_grid = np.linspace(0.0, eps ** 3 * R, p_steps + 1)
    for _ in range(n_trials):
        y = draw_good_point(backend, partition, R, eps, dt, rng)
        p = float(rng.choice(p_grid))
        z, _ = sample_pm(backend, y, R, e5, 1, rng)
        x = backend.h(z[0], -p)
        out.append(claimA_build_matching(backend, x, y, p, R, partition, eps, dt))
    return out


# -- Claim B ---------------------------------------------------------------------

@dataclass
class ClaimBResult:
    intersections: int
    samples: int
    sep_min: float
    sep_max: float

    @property
    def disjoint(self) -> bool:
        return self.intersections == 0


def claimB_disjointness(backend, y, R, eps, p, q, n_samples, rng):
    """Sample ``h_{-p} PM(R, eps^5, y)`` and test whether ``h_q`` of the
    sample lands in ``PM(R, eps^5, y)`` (which would put it in
    ``h_{-q} PM``).

    Also evaluates ``|e^{-t} (v - e^{-u} r)|`` at ``t = log(eps^-2 |r|)``,
    ``r = p - q``, for every sample.
    """
    if abs(p - q) < 1.0:
        raise PreconditionViolated("|p - q| must be at least 1")
    lim = eps ** 3 * R
    if not (0.0 <= p <= lim and 0.0 <= q <= lim):
        raise PreconditionViolated("p and q must lie in [0, eps^3 R]")
    e5 = eps ** 5
    z, c = sample_pm(backend, y, R, e5, n_samples, rng)
    # h_q h_{-p} z
    moved = backend.h_batch(z, np.full(n_samples, q - p))
    hit = pm_membership(backend, moved, y, R, e5)
    r = p - q
    t = math.log(abs(r) / eps ** 2)
    sep = np.abs(math.exp(-t) * (c[:, 1] - np.exp(-c[:, 0]) * r))
    return ClaimBResult(int(hit.sum()), n_samples, float(sep.min()), float(sep.max()))


def claimB_experiment(backend, y, R, eps, n_pairs, n_samples, rng):
    lim = eps ** 3 * R
    tot = 0
    smin, smax = math.inf, 0.0
    done = 0
    while done < n_pairs:
        p, q = rng.uniform(0.0, lim, 2)
        if abs(p - q) < 1.0:
            continue
        res = claimB_disjointness(backend, y, R, eps, p, q, n_samples, rng)
        tot += res.intersections
        smin = min(smin, res.sep_min)
        smax = max(smax, res.sep_max)
        done += 1
    return ClaimBResult(tot, n_pairs * n_samples, smin, smax)


def pm_union_mass(backend, y, R, eps, n_per_piece, rng):
    """Invariant mass of the union of ``h_{-p} PM(R, eps^5, y)`` over
    ``p = 0, 1, ..., floor(eps^3 R)`` (one-sided boxes).

    Each piece has the volume of PM; a sample of piece k counts only if it
    lies in no earlier piece.  Returns ``(mass, standard error, pieces)``.
    """
    e5 = eps ** 5
    ps = np.arange(0, int(math.floor(eps ** 3 * R)) + 1, dtype=float)
    vol = pm_volume(R, e5, one_sided=True)
    mass = 0.0
    var = 0.0
    for k, p in enumerate(ps):
        z, _ = sample_pm(backend, y, R, e5, n_per_piece, rng, one_sided=True)
        z = backend.h_batch(z, np.full(n_per_piece, -p))
        new = np.ones(n_per_piece, dtype=bool)
        for pj in ps[:k]:
            # z in h_{-pj} PM  <=>  h_pj z in PM; z is h_{-p} of the sample
            new &= ~pm_membership(backend, backend.h_batch(z, np.full(n_per_piece, pj - p)), y, R, e5,
                                  one_sided=True)
        f = new.mean()
        mass += vol * f
        var += vol ** 2 * f * (1 - f) / n_per_piece
    return mass, math.sqrt(var), len(ps)


# -- balls and covers -------------------------------------------------------------

def ball_measure_mc(backend, y, R, eps, partition, n_samples, rng, dt, samples=None):
    """Fraction of invariant samples x with a matching of x against y at
    eps.  Returns ``(fraction, standard error)``."""
    xs = backend.haar_sample(rng, n_samples) if samples is None else samples
    labs = itineraries(xs, partition, R, dt)
    ly = itineraries(np.asarray(y)[None], partition, R, dt)[0]
    n = labs.shape[1]
    hit = fr.feasible_against(ly, labs, fr.window(eps), fr.budget(eps, n))
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / len(hit))


def feasibility_matrix(samples, R, eps, partition, dt):
    labs = itineraries(samples, partition, R, dt)
    n = labs.shape[1]
    return fr.feasible_matrix(labs, fr.window(eps), fr.budget(eps, n), True)


def greedy_cover(F, eps):
    """Greedy cover of the rows of a boolean reachability matrix.

    Picks the sample covering the most uncovered samples (lowest index on
    ties) until at least ``(1 - eps) N`` are covered.
    """
    F = np.asarray(F, dtype=bool)
    N = F.shape[0]
    covered = np.zeros(N, dtype=bool)
    centers = []
    need = (1.0 - eps) * N
    while covered.sum() < need:
        gain = (F & ~covered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        centers.append(c)
        covered |= F[c]
    return len(centers), centers


def covering_number(backend, samples, R, eps, partition, dt):
    """Greedy count of f_R balls of radius eps covering ``1 - eps`` of the
    samples.  Returns ``(n, centers, F)``."""
    F = feasibility_matrix(samples, R, eps, partition, dt)
    n, centers = greedy_cover(F, eps)
    return n, centers, F
