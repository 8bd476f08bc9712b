"""Backend-independent interface for the geodesic flow g, the unstable
horocycle flow h, the stable horocycle flow k, and the holonomy functions
relating them.

A backend realizes phase points in its own way (a 2x2 matrix for the
algebraic model, an ``(x, y, theta)`` array for the variable-curvature
patch).  Everything here only talks to the backend through
:class:`FlowBackend`.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .errors import LocalityViolated, PreconditionViolated

PhasePoint = Any


class LocalCoords(NamedTuple):
    """Product-chart coordinates: ``x = g_u h_v k_w y``."""

    u: float
    v: float
    w: float

    def sup(self) -> float:
        return max(abs(self.u), abs(self.v), abs(self.w))


class HolonomyTriple(NamedTuple):
    """Times solving ``g_rho k_tau h_s x = h_sigma k_t x``."""

    rho: float
    sigma: float
    tau: float


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 100
    locality: float = 1e-2


class FlowBackend(ABC):
    """Three flows on one phase space plus a metric and a product chart.

    Subclasses must be immutable after construction; all methods are pure.
    """

    name: str = "abstract"
    entropy_u: float = 1.0
    entropy_s: float = -1.0
    #: residual tolerance used by the generic invariant suites
    tol: float = 1e-10
    solver: SolverConfig = SolverConfig()

    @abstractmethod
    def g(self, x: PhasePoint, s: float) -> PhasePoint: ...

    @abstractmethod
    def h(self, x: PhasePoint, t: float) -> PhasePoint: ...

    @abstractmethod
    def k(self, x: PhasePoint, t: float) -> PhasePoint: ...

    @abstractmethod
    def distance(self, x: PhasePoint, y: PhasePoint) -> float: ...

    @abstractmethod
    def local_coords(self, x: PhasePoint, y: PhasePoint) -> LocalCoords:
        """Return ``(u, v, w)`` with ``x = g_u h_v k_w y``."""

    def reconstruct(self, y: PhasePoint, c: LocalCoords) -> PhasePoint:
        return self.g(self.h(self.k(y, c.w), c.v), c.u)

    def flow(self, which: str, x: PhasePoint, t: float) -> PhasePoint:
        return getattr(self, which)(x, t)


def solve_holonomy(backend: FlowBackend, x: PhasePoint, s: float, t: float) -> HolonomyTriple:
    """Solve ``g_rho k_tau h_s x = h_sigma k_t x`` for ``(rho, sigma, tau)``.

    With ``a = h_s x`` and ``b = h_s k_t x`` (``sigma = s`` is the predictor)
    the chart coordinates ``b = g_u h_v k_w a`` give
    ``h_{s - e^u v} k_t x = g_u k_w a``, so ``rho = u``, ``tau = w`` and
    ``sigma = s - e^u v``.  The chart solve is the backend's root finder;
    the correction ``v`` stays small when ``|s t|`` is.
    """
    if abs(s * t) > backend.solver.locality:
        raise LocalityViolated(f"|s t| = {abs(s * t):.3g} exceeds {backend.solver.locality:g}")
    if s == 0.0 or t == 0.0:
        return HolonomyTriple(0.0, s, t)
    a = backend.h(x, s)
    b = backend.h(backend.k(x, t), s)
    c = backend.local_coords(b, a)
    return HolonomyTriple(c.u, s - math.exp(c.u) * c.v, c.w)


def solve_holonomy_batch(backend: FlowBackend, x: PhasePoint, s, t: float) -> np.ndarray:
    """Rows ``(rho, sigma, tau)`` for every entry of ``s`` at fixed ``t``.

    Uses the backend's batched flow and chart solve (``h_batch``,
    ``local_coords_batch``) when it has them.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(np.abs(s * t) > backend.solver.locality):
        raise LocalityViolated(f"max |s t| = {np.max(np.abs(s * t)):.3g}")
    if not (hasattr(backend, "local_coords_batch") and hasattr(backend, "h_batch")):
        return np.array([solve_holonomy(backend, x, si, t) for si in s]).reshape(-1, 3)
    a = backend.h_batch(x, s)
    b = backend.h_batch(backend.k(x, t), s)
    c, found = backend.local_coords_batch(b, a)
    if not np.all(found):
        raise LocalityViolated("chart solve failed for part of the batch")
    out = np.empty((len(s), 3))
    out[:, 0] = c[:, 0]
    out[:, 1] = s - np.exp(c[:, 0]) * c[:, 1]
    out[:, 2] = c[:, 2]
    out[s == 0.0] = np.column_stack([np.zeros(np.sum(s == 0.0)), s[s == 0.0],
                                     np.full(np.sum(s == 0.0), t)])
    if t == 0.0:
        out[:] = np.column_stack([np.zeros(len(s)), s, np.zeros(len(s))])
    return out


def holonomy_residual(backend: FlowBackend, x: PhasePoint, s: float, t: float,
                      hol: HolonomyTriple) -> float:
    lhs = backend.g(backend.k(backend.h(x, s), hol.tau), hol.rho)
    rhs = backend.h(backend.k(x, t), hol.sigma)
    return backend.distance(lhs, rhs)


def equivariance_residual(backend: FlowBackend, x: PhasePoint, s: float, t: float,
                          u: float) -> float:
    """Largest mismatch between the triple at ``g_u x`` and the rescaled
    triple at x: ``rho`` is unchanged, ``sigma`` scales by ``e^u`` and
    ``tau`` by ``e^-u`` when ``(s, t)`` becomes ``(e^-u s, e^u t)``."""
    a = solve_holonomy(backend, backend.g(x, u), s, t)
    b = solve_holonomy(backend, x, math.exp(-u) * s, math.exp(u) * t)
    return max(abs(a.rho - b.rho), abs(a.sigma - math.exp(u) * b.sigma),
               abs(a.tau - math.exp(-u) * b.tau))


def sigma_derivative_residual(backend: FlowBackend, x: PhasePoint, s: float, t: float,
                              delta: float) -> float:
    """|central difference of sigma in s  -  exp(rho)|."""
    hp = solve_holonomy(backend, x, s + delta, t)
    hm = solve_holonomy(backend, x, s - delta, t)
    h0 = solve_holonomy(backend, x, s, t)
    fd = (hp.sigma - hm.sigma) / (2.0 * delta)
    return abs(fd - math.exp(h0.rho))


def horocycle_tracking_distance(backend: FlowBackend, x: PhasePoint, y: PhasePoint,
                                s: float, alpha: float) -> float:
    """Distance between ``h_s x`` and ``h_{e^u sigma(x, s, w)} y``.

    ``y`` must be ``g_u h_v k_w x`` with all three below ``alpha`` and
    ``|s| < alpha^2 / (2|w|)``.
    """
    c = backend.local_coords(y, x)
    if max(abs(c.u), abs(c.v), abs(c.w)) >= alpha:
        raise PreconditionViolated(f"y is not in the alpha-box around x: {c}")
    if c.w != 0.0 and abs(s) >= alpha * alpha / (2.0 * abs(c.w)):
        raise PreconditionViolated("|s| must be below alpha^2 / (2|w|)")
    sigma = solve_holonomy(backend, x, s, c.w).sigma
    return backend.distance(backend.h(x, s), backend.h(y, math.exp(c.u) * sigma))


# -- invariant suites -------------------------------------------------------

def group_law_residual(backend: FlowBackend, which: str, x: PhasePoint,
                       a: float, b: float) -> float:
    f = getattr(backend, which)
    return backend.distance(f(f(x, a), b), f(x, a + b))


def renormalization_residuals(backend: FlowBackend, x: PhasePoint, s: float,
                              t: float) -> tuple[float, float]:
    """Residuals of ``g_s h_t = h_{e^s t} g_s`` and ``g_s k_t = k_{e^-s t} g_s``."""
    gx = backend.g(x, s)
    rh = backend.distance(backend.g(backend.h(x, t), s), backend.h(gx, math.exp(s) * t))
    rk = backend.distance(backend.g(backend.k(x, t), s), backend.k(gx, math.exp(-s) * t))
    return rh, rk


def chart_roundtrip_residual(backend: FlowBackend, x: PhasePoint, y: PhasePoint) -> float:
    return backend.distance(backend.reconstruct(y, backend.local_coords(x, y)), x)


def sigma_derivative_convergence_slope(backend: FlowBackend, x: PhasePoint, s: float,
                                       t: float, deltas=(4e-2, 2e-2, 1e-2, 5e-3)) -> float:
    """Log-log slope of the sigma-derivative residual under delta refinement."""
    res = np.array([sigma_derivative_residual(backend, x, s, t, d) for d in deltas])
    return float(np.polyfit(np.log(deltas), np.log(res), 1)[0])
