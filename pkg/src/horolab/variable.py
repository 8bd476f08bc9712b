"""Variable negative curvature on a patch of the upper half plane.

The metric is ``lambda |dz|`` with ``lambda = exp(a sin x sin y) / y``
(``a = 0`` is the hyperbolic plane).  Phase points are arrays
``(x, eta, theta)`` with ``eta = log y`` and ``theta`` the Euclidean angle
of the unit tangent vector.

The unstable horocycle through p has geodesic curvature ``u(p)``, the
attracting branch of the Riccati equation ``u' + u^2 + K = 0`` obtained by
integrating forward from far in the past.  The Margulis density along the
leaf (with respect to arclength) is

    rho(p) = lim_T exp(int_0^T (u(g_s p) - h) ds) / (normalizing constant)

and the horocycle flow is the leaf flow reparameterized by that density.
The stable side is the time reversal of all of the above.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import optimize

from . import _var_kernels as K
from .errors import ConfigError, HorizonExceeded, NoConvergence, StepUnderflow
from .flows import FlowBackend, LocalCoords, SolverConfig


class RiccatiSolution(NamedTuple):
    u: float
    seed: float
    warmup: float


class ArcMeasureEstimate(NamedTuple):
    value: float
    T: float
    convergence_gap: float


class StepControl(NamedTuple):
    rtol: float = 1e-11
    atol: float = 1e-12


@dataclass(frozen=True)
class ConformalMetric:
    """``lambda = exp(a sin x sin y) / y`` on ``|x| <= xmax``, ``ymin <= y <= ymax``.

    ``kbound`` is the largest curvature found on a 100x100 check grid over
    one period in x; construction fails unless it is negative.
    """

    a: float = 0.05
    xmax: float = 60.0
    ymin: float = 1e-12
    ymax: float = 3.0
    kind: str = "sinusoidal"

    def __post_init__(self):
        if self.kind not in ("sinusoidal", "hyperbolic"):
            raise ConfigError(f"unknown conformal factor {self.kind!r}")
        if self.kind == "hyperbolic" and self.a != 0.0:
            object.__setattr__(self, "a", 0.0)
        if not (0 < self.ymin < self.ymax):
            raise ConfigError("need 0 < ymin < ymax")
        if self.kbound >= 0.0:
            raise ConfigError(f"curvature is not negative on the patch (max K = {self.kbound:.3g})")

    @cached_property
    def kbound(self) -> float:
        xs = np.linspace(-math.pi, math.pi, 100)
        ys = np.exp(np.linspace(math.log(self.ymin), math.log(self.ymax), 100))
        X, Y = np.meshgrid(xs, ys)
        return float(np.max(curvature_grid(self.a, X, Y)))

    def log_lambda(self, x, y):
        return self.a * np.sin(x) * np.sin(y) - np.log(y)

    def curvature(self, x, y) -> float:
        if not (abs(x) <= self.xmax and self.ymin <= y <= self.ymax):
            raise HorizonExceeded(f"({x}, {y}) is outside the patch")
        return K.curvature(self.a, float(x), float(y))

    @property
    def eta_bounds(self):
        return math.log(self.ymin), math.log(self.ymax)


def curvature_grid(a, x, y):
    """Vectorized ``-Laplacian(log lambda) / lambda^2``."""
    s = np.sin(x) * np.sin(y)
    return -(1.0 - 2.0 * a * y * y * s) * np.exp(-2.0 * a * s)


def state(x, y, theta):
    """Phase point from position and direction angle."""
    return np.array([x, math.log(y), theta], dtype=float)


def _raise_status(status, what):
    if status == K.HORIZON:
        raise HorizonExceeded(f"{what} left the patch")
    if status == K.UNDERFLOW:
        raise StepUnderflow(f"{what}: step size underflow")


@dataclass(frozen=True)
class VariableBackend(FlowBackend):
    """Numerical flows for a :class:`ConformalMetric`.

    Parameters
    ----------
    warmup : float
        Backward time used to converge the Riccati equation onto its
        attracting branch.
    horizon : float
        Forward time ``T`` in the density limit.
    leaf_step : float
        RK4 step (in leaf measure) of the horocycle flows.
    ref : tuple
        Calibration point ``(x, y, theta)``; both leaf densities equal 1
        there.
    """

    metric: ConformalMetric = field(default_factory=ConformalMetric)
    warmup: float = 12.0
    horizon: float = 12.0
    seed: float = 1.0
    leaf_step: float = 0.005
    step: StepControl = field(default_factory=StepControl)
    ref: tuple = (0.0, 1.0, 0.0)
    entropy: float = 1.0
    tol: float = 1e-5
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-11, max_iter=100))
    name: str = "variable"

    @property
    def entropy_u(self) -> float:
        return self.entropy

    @property
    def entropy_s(self) -> float:
        return -self.entropy

    def _bounds(self):
        lo, hi = self.metric.eta_bounds
        return self.metric.xmax, lo, hi

    # -- geodesic flow ----------------------------------------------------
    def g(self, x, s):
        p = np.zeros(5)
        p[:3] = x
        out, status, _ = K.integrate(p, float(s), self.metric.a, False, 0.0,
                                     self.step.rtol, self.step.atol, *self._bounds())
        _raise_status(status, "geodesic")
        return out[:3].copy()

    def unit_speed_defect(self, x) -> float:
        """|metric norm of the tangent - 1|; zero by construction of the
        angle representation, recomputed from the RHS as a check."""
        out = np.empty(5)
        p = np.zeros(5)
        p[:3] = x
        K.rhs(p, out, self.metric.a, False, 0.0)
        y = math.exp(x[1])
        lam = math.exp(self.metric.a * math.sin(x[0]) * math.sin(y)) / y
        speed = lam * math.hypot(out[0], out[1] * y)
        return abs(speed - 1.0)

    # -- Riccati and densities -------------------------------------------
    def _data(self, x, stable, T=None):
        T = self.horizon if T is None else T
        u, i_half, i_full, status = K.horocycle_data(
            np.asarray(x, dtype=float), stable, self.metric.a, self.entropy, self.warmup, T,
            self.seed, self.step.rtol, self.step.atol, *self._bounds())
        _raise_status(status, "horocycle construction")
        return u, i_half, i_full

    def unstable_direction(self, x, warmup=None, seed=None, stable=False) -> RiccatiSolution:
        """Curvature of the unstable (or stable) horocycle through x."""
        w = self.warmup if warmup is None else warmup
        sd = self.seed if seed is None else seed
        u, _, _, status = K.horocycle_data(
            np.asarray(x, dtype=float), stable, self.metric.a, self.entropy, w, 0.0,
            sd, self.step.rtol, self.step.atol, *self._bounds())
        _raise_status(status, "Riccati warm-up")
        return RiccatiSolution(u, sd, w)

    @cached_property
    def _lognorm(self):
        r = state(*self.ref)
        return self._data(r, False)[2], self._data(r, True)[2]

    def density(self, x, stable=False) -> float:
        """Margulis density with respect to arclength along the leaf."""
        return math.exp(self._data(x, stable)[2] - self._lognorm[int(stable)])

    def margulis_arc_measure(self, x, length, stable=False, T=None) -> ArcMeasureEstimate:
        """Margulis measure of the leaf arc of arclength ``length`` starting
        at x.  The gap compares the ``T`` and ``T/2`` estimates."""
        T = self.horizon if T is None else T
        if length == 0.0:
            return ArcMeasureEstimate(0.0, T, 0.0)
        full = self._arc_mass(x, length, stable, T)
        half = self._arc_mass(x, length, stable, 0.5 * T)
        gap = abs(full - half) / abs(full)
        return ArcMeasureEstimate(full, T, gap)

    def _arc_mass(self, x, length, stable, T):
        ln = self._lognorm_at(T)[int(stable)]
        n = max(4, int(math.ceil(abs(length) / self.leaf_step)))
        _, mass, status = K.leaf_flow(
            np.asarray(x, dtype=float), float(length), n, stable, False, ln, self.metric.a,
            self.entropy, self.warmup, T, self.seed, self.step.rtol, self.step.atol,
            *self._bounds())
        _raise_status(status, "leaf integration")
        return mass

    def expansion_ratio(self, x, length, t):
        """``mu(g_t U) / (e^{h t} mu(U))`` for the unstable arc U of
        arclength ``length`` at x.

        The image arc length is found by a secant solve for the leaf point
        of ``g_t x`` that lands on ``g_t`` of the far end of U, so both
        measures come from the arc estimator.
        """
        m0 = self.margulis_arc_measure(x, length).value
        start = self.g(x, t)
        end = self.g(self.leaf_point(x, length), t)
        tangent = np.empty(3)
        K.leaf_direction(end, self.unstable_direction(end).u, self.metric.a, tangent)

        def miss(ell):
            return float(self._diff(self.leaf_point(start, ell), end) @ tangent)

        guess = length * math.exp(self.log_expansion(x, [t])[0])
        ell = optimize.newton(miss, guess, x1=1.01 * guess, tol=1e-12, maxiter=50)
        m1 = self.margulis_arc_measure(start, ell).value
        return m1 / (math.exp(self.entropy * t) * m0)

    def _lognorm_at(self, T):
        if T == self.horizon:
            return self._lognorm
        r = state(*self.ref)
        return self._data(r, False, T)[2], self._data(r, True, T)[2]

    def leaf_point(self, x, length, stable=False):
        """Point at signed arclength ``length`` along the leaf of x."""
        ln = self._lognorm[int(stable)]
        n = max(4, int(math.ceil(abs(length) / self.leaf_step)))
        p, _, status = K.leaf_flow(
            np.asarray(x, dtype=float), float(length), n, stable, False, ln, self.metric.a,
            self.entropy, self.warmup, self.horizon, self.seed, self.step.rtol, self.step.atol,
            *self._bounds())
        _raise_status(status, "leaf integration")
        return p

    def _leaf_measure_flow(self, x, t, stable):
        ln = self._lognorm[int(stable)]
        n = max(2, int(math.ceil(abs(t) / self.leaf_step)))
        p, _, status = K.leaf_flow(
            np.asarray(x, dtype=float), float(t), n, stable, True, ln, self.metric.a,
            self.entropy, self.warmup, self.horizon, self.seed, self.step.rtol, self.step.atol,
            *self._bounds())
        _raise_status(status, "horocycle flow")
        return p

    def h(self, x, t):
        return self._leaf_measure_flow(x, t, False)

    def k(self, x, t):
        return self._leaf_measure_flow(x, t, True)

    # -- entropy ----------------------------------------------------------
    def log_expansion(self, x, times, stable=False):
        """``log |J_T|`` of the unstable (or stable, backward) Jacobi field
        at each of the increasing ``times``."""
        u = self.unstable_direction(x, stable=stable).u
        sg = -1.0 if stable else 1.0
        p = np.zeros(5)
        p[:3] = x
        p[3] = u
        out = np.empty(len(times))
        t_prev = 0.0
        for i, T in enumerate(times):
            p, status, _ = K.integrate(p, sg * (T - t_prev), self.metric.a, True, 0.0,
                                       self.step.rtol, self.step.atol, *self._bounds())
            _raise_status(status, "Jacobi field")
            out[i] = sg * p[4]
            t_prev = T
        return out

    def entropy_estimate(self, samples, T, n_times=20, stable=False):
        """Least-squares growth rate of log arc length, averaged over samples.

        Returns ``(mean, standard error)``.  For the stable side the rate is
        reported with its (negative) contraction sign.
        """
        times = np.linspace(T / n_times, T, n_times)
        slopes = []
        for x in samples:
            le = self.log_expansion(x, times, stable)
            slopes.append(np.polyfit(times, le, 1)[0])
        slopes = np.array(slopes)
        if stable:
            slopes = -slopes
        se = slopes.std(ddof=1) / math.sqrt(len(slopes)) if len(slopes) > 1 else 0.0
        return float(slopes.mean()), float(se)

    # -- metric and chart -------------------------------------------------
    def distance(self, x, y) -> float:
        """Euclidean distance in ``(x, log y, theta)`` with theta mod 2 pi."""
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        d[2] = (d[2] + math.pi) % (2.0 * math.pi) - math.pi
        return float(np.sqrt(d @ d))

    def _diff(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        d[2] = (d[2] + math.pi) % (2.0 * math.pi) - math.pi
        return d

    def generators(self, x):
        """Columns: d/ds of g, h, k at x (in ``(x, eta, theta)``)."""
        out = np.empty((3, 3))
        p = np.zeros(5)
        p[:3] = x
        tmp = np.empty(5)
        K.rhs(p, tmp, self.metric.a, False, 0.0)
        out[:, 0] = tmp[:3]
        for col, stable in ((1, False), (2, True)):
            u, _, i_full = self._data(x, stable)
            dens = math.exp(i_full - self._lognorm[int(stable)])
            v = np.empty(3)
            K.leaf_direction(np.asarray(x, dtype=float), u, self.metric.a, v)
            out[:, col] = v / dens
        return out

    def local_coords(self, x, y) -> LocalCoords:
        """Solve ``x = g_u h_v k_w y`` by a Broyden-updated Newton iteration
        started from the generator frame at y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        J = self.generators(y)
        c = np.linalg.solve(J, self._diff(x, y))
        F = self._diff(self.reconstruct(y, LocalCoords(*c)), x)
        for _ in range(self.solver.max_iter):
            if np.max(np.abs(F)) < self.solver.tol:
                return LocalCoords(*map(float, c))
            dc = -np.linalg.solve(J, F)
            c_new = c + dc
            F_new = self._diff(self.reconstruct(y, LocalCoords(*c_new)), x)
            # Broyden rank-one update
            J = J + np.outer(F_new - F - J @ dc, dc) / (dc @ dc)
            c, F = c_new, F_new
        raise NoConvergence(f"chart solve residual {np.max(np.abs(F)):.3g}")
