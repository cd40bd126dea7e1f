"""Kepler orbits, central configurations and homographic solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import core
from .core import PhaseState, as_masses
from .errors import CollisionError, ConvergenceError

ANOMALY_TOL = 4 * np.finfo(float).eps


def _stumpff(z):
    """Stumpff functions C(z), S(z)."""
    # closed forms lose digits to cancellation for small |z|; the series is used there
    if z > 1.0:
        s = math.sqrt(z)
        return 2 * math.sin(0.5 * s) ** 2 / z, (s - math.sin(s)) / (s * z)
    if z < -1.0:
        s = math.sqrt(-z)
        return 2 * math.sinh(0.5 * s) ** 2 / -z, (math.sinh(s) - s) / (s * -z)
    # C = sum (-z)^k/(2k+2)!, S = sum (-z)^k/(2k+3)!
    C = S = 0.0
    term_c, term_s = 0.5, 1.0 / 6.0
    for k in range(14):
        C += term_c
        S += term_s
        term_c *= -z / ((2 * k + 3) * (2 * k + 4))
        term_s *= -z / ((2 * k + 4) * (2 * k + 5))
    return C, S


@dataclass(frozen=True)
class KeplerOrbit:
    """Solution of lambda'' = -c lambda / |lambda|^3 through (lam0, lamdot0) at t = 0."""

    lam0: complex
    lamdot0: complex
    c: float

    def __post_init__(self):
        if self.lam0 == 0:
            raise CollisionError("kepler", "lambda(0) = 0 is a collision")
        if not self.c > 0:
            raise ValueError("attraction constant c must be positive")
        object.__setattr__(self, "lam0", complex(self.lam0))
        object.__setattr__(self, "lamdot0", complex(self.lamdot0))

    @property
    def energy(self) -> float:
        return 0.5 * abs(self.lamdot0) ** 2 - self.c / abs(self.lam0)

    @property
    def angular_momentum(self) -> float:
        return core.wedge(self.lam0, self.lamdot0)

    @property
    def bounded(self) -> bool:
        return self.energy < 0

    @property
    def semi_major_axis(self) -> float:
        E = self.energy
        return math.inf if E == 0 else -self.c / (2 * E)

    @property
    def eccentricity_vector(self) -> complex:
        r, v = self.lam0, self.lamdot0
        rv = (np.conj(r) * v).real
        return ((abs(v) ** 2 - self.c / abs(r)) * r - rv * v) / self.c

    @property
    def eccentricity(self) -> float:
        return abs(self.eccentricity_vector)

    @property
    def periapsis_angle(self) -> float:
        return float(np.angle(self.eccentricity_vector))

    @property
    def period(self) -> float:
        if not self.bounded:
            return math.inf
        return 2 * math.pi * math.sqrt(self.semi_major_axis**3 / self.c)

    @property
    def is_radial(self) -> bool:
        scale = abs(self.lam0) * max(abs(self.lamdot0), math.sqrt(self.c / abs(self.lam0)))
        return abs(self.angular_momentum) <= 1e-14 * scale

    def collision_time(self) -> float:
        """First t > 0 with lambda(t) = 0 (inf unless the orbit is radial and falls in)."""
        if not self.is_radial:
            return math.inf
        c, r0 = self.c, abs(self.lam0)
        vr = (np.conj(self.lam0) * self.lamdot0).real / r0
        E = self.energy
        if E < 0:
            a = -c / (2 * E)
            eta = math.acos(min(1.0, max(-1.0, 1 - r0 / a)))
            if vr < 0:
                eta = 2 * math.pi - eta
            return math.sqrt(a**3 / c) * (2 * math.pi - (eta - math.sin(eta)))
        if vr >= 0:
            return math.inf
        if E == 0:
            return math.sqrt(2) * r0**1.5 / (3 * math.sqrt(c))
        a = c / (2 * E)
        H = math.acosh(1 + r0 / a)
        return math.sqrt(a**3 / c) * (math.sinh(H) - H)

    def _universal(self, t):
        c, lam0, v0 = self.c, self.lam0, self.lamdot0
        r0 = abs(lam0)
        sc = math.sqrt(c)
        vr0 = (np.conj(lam0) * v0).real / r0
        alpha = 2 / r0 - abs(v0) ** 2 / c
        if self.bounded and not self.is_radial:
            P = self.period
            t = t - P * math.floor(t / P + 0.5)

        def F(x):
            z = alpha * x * x
            C, S = _stumpff(z)
            val = r0 * vr0 / sc * x * x * C + (1 - alpha * r0) * x**3 * S + r0 * x - sc * t
            r = r0 * vr0 / sc * x * (1 - z * S) + (1 - alpha * r0) * x * x * C + r0
            return val, r

        if t == 0:
            return 0.0, alpha, r0, vr0
        sign = 1.0 if t > 0 else -1.0
        lo, hi = 0.0, sign * sc * abs(t) / r0
        for _ in range(200):
            if F(hi)[0] * sign >= 0:
                break
            lo, hi = hi, 2 * hi
        else:
            raise ConvergenceError("could not bracket the universal anomaly")
        a, b = (lo, hi) if sign > 0 else (hi, lo)
        x = 0.5 * (a + b)
        for _ in range(200):
            val, r = F(x)
            if val == 0:
                break
            if abs(val) <= ANOMALY_TOL * (sc * abs(t) + r0 * abs(x)) and r > 0:
                # at the roundoff floor of F: one last Newton step
                x = min(max(x - val / r, a), b)
                break
            if val > 0:
                b = x
            else:
                a = x
            step = val / r if r > 0 else math.inf
            x_new = x - step
            if not (a <= x_new <= b):
                x_new = 0.5 * (a + b)
            tol = ANOMALY_TOL * max(1.0, abs(x_new))
            if abs(x_new - x) <= tol or b - a <= tol:
                x = x_new
                break
            x = x_new
        else:
            raise ConvergenceError("universal Kepler equation did not converge", best=x)
        return x, alpha, r0, vr0

    def state(self, t: float):
        """(lambda(t), lambda'(t))."""
        t = float(t)
        if t >= self.collision_time():
            raise CollisionError("kepler", f"radial orbit collides at t = {self.collision_time():.17g}")
        x, alpha, r0, _ = self._universal(t)
        if self.bounded and not self.is_radial:
            P = self.period
            t = t - P * math.floor(t / P + 0.5)
        sc = math.sqrt(self.c)
        z = alpha * x * x
        C, S = _stumpff(z)
        f = 1 - x * x / r0 * C
        g = t - x**3 * S / sc
        lam = f * self.lam0 + g * self.lamdot0
        r = abs(lam)
        fdot = sc / (r * r0) * (z * S - 1) * x
        gdot = 1 - x * x / r * C
        return lam, fdot * self.lam0 + gdot * self.lamdot0


def kepler_solve(lam0, lamdot0, c, t):
    """Propagate the Kepler problem; returns lambda(t) (array for array t)."""
    orbit = KeplerOrbit(lam0, lamdot0, c)
    if np.ndim(t) == 0:
        return orbit.state(t)[0]
    return np.array([orbit.state(s)[0] for s in np.ravel(t)]).reshape(np.shape(t))


@dataclass(frozen=True, eq=False)
class CentralConfiguration:
    q0: np.ndarray
    multiplier: float
    kind: str
    masses: core.MassDistribution

    @property
    def shape(self) -> np.ndarray:
        from .projection import project
        return project(self.q0, self.masses)


def central_configuration_residual(q0, masses) -> float:
    """Mass-metric norm of grad V - (c/2) grad I with c = -V/I."""
    m = as_masses(masses)
    q0 = core.centered(q0, m)
    c = -core.potential_V(q0, m) / core.moment_of_inertia(q0, m)
    return float(core.mass_norm(core.grad_V(q0, m) - 0.5 * c * core.grad_I(q0), m))


def _normalize(q, m):
    q = core.centered(q, m)
    return q / np.sqrt(core.moment_of_inertia(q, m))


def _make_cc(q, m, kind):
    q = _normalize(q, m)
    c = -core.potential_V(q, m) / core.moment_of_inertia(q, m)
    return CentralConfiguration(q, float(c), kind, m)


def find_euler_configs(masses) -> list:
    """The three collinear central configurations, labeled by the middle body."""
    m = as_masses(masses)
    mass = m.masses
    out = []
    for k in range(3):
        a, b = [i for i in range(3) if i != k]

        def line(s):
            x = np.zeros(3)
            x[a], x[k], x[b] = 0.0, s, 1.0
            return x

        def f(s):
            x = line(s)
            acc = core.accelerations(x.astype(complex), m).real
            xcm = np.dot(mass, x) / m.M
            return acc[b] * (x[a] - xcm) - acc[a] * (x[b] - xcm)

        # f -> -inf as s -> 0 and +inf as s -> 1, root unique (Moulton)
        s = brentq(f, 1e-9, 1 - 1e-9, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        out.append(_make_cc(line(s).astype(complex), m, f"euler-{k + 1}"))
    return out


def lagrange_configs(masses) -> list:
    m = as_masses(masses)
    omega = np.exp(2j * np.pi / 3)
    q = np.array([1, omega, omega**2])
    return [_make_cc(q, m, "lagrange-+"), _make_cc(np.conj(q), m, "lagrange--")]


def central_configurations(masses) -> list:
    """All five central configurations (three Euler, two Lagrange), I = 1, centered."""
    return find_euler_configs(masses) + lagrange_configs(masses)


def homographic_solution(cc: CentralConfiguration, kepler: KeplerOrbit, t: float) -> PhaseState:
    """q(t) = lambda(t) q0 with lambda a Kepler orbit of attraction constant c_cc."""
    if not math.isclose(kepler.c, cc.multiplier, rel_tol=1e-12):
        raise ValueError(f"Kepler constant {kepler.c} does not match c_cc = {cc.multiplier}")
    lam, lamdot = kepler.state(t)
    return PhaseState(lam * cc.q0, lamdot * cc.q0)


def homographic_trajectory(cc, kepler, times):
    from .integrator import Trajectory
    states = [homographic_solution(cc, kepler, t).pack() for t in times]
    return Trajectory(times, states, "full", cc.masses)


def circular_kepler(cc: CentralConfiguration, radius: float = 1.0, sense: int = 1) -> KeplerOrbit:
    """Circular lambda(t) = radius * exp(i Omega t), Omega^2 radius^3 = c_cc."""
    omega = math.sqrt(cc.multiplier / radius**3)
    return KeplerOrbit(complex(radius), 1j * sense * omega * radius, cc.multiplier)


def lagrange_circular_state(masses=None, scale: float = None) -> PhaseState:
    """Rigidly rotating equilateral triangle at t = 0.

    With equal unit masses and no ``scale`` this is q = (1, w, w^2), w a cube
    root of unity, rotating at angular speed 3^(-1/4).
    """
    m = as_masses(masses)
    cc = lagrange_configs(m)[0]
    radius = scale if scale is not None else (math.sqrt(3.0) if m.is_equal and m.m1 == 1 else 1.0)
    return homographic_solution(cc, circular_kepler(cc, radius), 0.0)
