"""Planar three-body model with complex positions and G = 1.

A configuration is a complex array ``q`` of shape ``(3,)`` (vertex positions
q1, q2, q3).  Most functions also accept stacked arrays of shape ``(..., 3)``.
Inner products use the mass metric <v, w> = sum m_i conj(v_i) w_i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CollisionError

PAIRS = ("12", "23", "31")
PAIR_INDEX = {"12": (0, 1), "23": (1, 2), "31": (2, 0)}

# relative to the size sqrt(I/M) of the configuration
COLLISION_THRESHOLD = 1e-12


@dataclass(frozen=True)
class MassDistribution:
    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        for name in ("m1", "m2", "m3"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"mass {name} must be positive, got {value}")
            object.__setattr__(self, name, value)

    @property
    def masses(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3])

    @property
    def M(self) -> float:
        return self.m1 + self.m2 + self.m3

    @property
    def mu1(self) -> float:
        return 1.0 / np.sqrt(1.0 / self.m1 + 1.0 / self.m2)

    @property
    def mu2(self) -> float:
        return 1.0 / np.sqrt(1.0 / self.m3 + 1.0 / (self.m1 + self.m2))

    def pair_masses(self, pair: str) -> tuple[float, float]:
        i, j = PAIR_INDEX[pair]
        m = self.masses
        return m[i], m[j]

    @cached_property
    def mu_ij(self) -> dict:
        """Reduced masses m_i m_j / (m_i + m_j) keyed by pair label."""
        out = {}
        for pair in PAIRS:
            a, b = self.pair_masses(pair)
            out[pair] = a * b / (a + b)
        return out

    @cached_property
    def c_ij(self) -> dict:
        """Shape-potential coefficients m_i m_j sqrt(mu_ij)."""
        out = {}
        for pair in PAIRS:
            a, b = self.pair_masses(pair)
            out[pair] = a * b * np.sqrt(self.mu_ij[pair])
        return out

    @property
    def is_equal(self) -> bool:
        return self.m1 == self.m2 == self.m3

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m1, self.m2, self.m3)


EQUAL_MASSES = MassDistribution(1.0, 1.0, 1.0)


def as_masses(masses) -> MassDistribution:
    if isinstance(masses, MassDistribution):
        return masses
    if masses is None:
        return EQUAL_MASSES
    return MassDistribution(*masses)


def as_config(q) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    if q.shape[-1] != 3:
        raise ValueError(f"configuration needs 3 complex positions, got shape {q.shape}")
    return q


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Positions ``q`` and velocities ``v`` (each complex, shape (3,))."""

    q: np.ndarray
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        q = as_config(self.q).copy()
        v = np.zeros(3, dtype=complex) if self.v is None else as_config(self.v).copy()
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.v, other.v)

    def pack(self) -> np.ndarray:
        """Real vector (Re q, Im q, Re v, Im v) of length 12."""
        return np.concatenate([self.q.real, self.q.imag, self.v.real, self.v.imag])

    @classmethod
    def unpack(cls, y) -> "PhaseState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3] + 1j * y[3:6], y[6:9] + 1j * y[9:12])


def mass_inner(v, w, masses) -> complex:
    """Hermitian mass inner product sum m_i conj(v_i) w_i."""
    m = as_masses(masses).masses
    return np.sum(m * np.conj(v) * w, axis=-1)


def mass_norm(v, masses) -> float:
    return np.sqrt(np.real(mass_inner(v, v, masses)))


def wedge(z, w):
    """Planar cross product z ^ w = Im(conj(z) w)."""
    return np.imag(np.conj(z) * w)


def pairwise_separations(q) -> np.ndarray:
    """Side lengths (r12, r23, r31)."""
    q = as_config(q)
    return np.stack(
        [np.abs(q[..., 0] - q[..., 1]), np.abs(q[..., 1] - q[..., 2]), np.abs(q[..., 2] - q[..., 0])],
        axis=-1,
    )


def moment_of_inertia(q, masses) -> float:
    m = as_masses(masses).masses
    return np.sum(m * np.abs(as_config(q)) ** 2, axis=-1)


def center_of_mass(q, masses) -> complex:
    mass = as_masses(masses)
    return np.sum(mass.masses * as_config(q), axis=-1) / mass.M


def centered(q, masses) -> np.ndarray:
    q = as_config(q)
    return q - center_of_mass(q, masses)[..., None]


def _check_collision(q, masses, r):
    q = np.asarray(q)
    scale = np.sqrt(moment_of_inertia(centered(q, masses), masses) / as_masses(masses).M)
    bad = r <= COLLISION_THRESHOLD * scale
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise CollisionError(PAIRS[idx[-1]])


def potential_V(q, masses) -> float:
    """Signed (negative) potential V = -sum m_i m_j / r_ij."""
    mass = as_masses(masses)
    r = pairwise_separations(q)
    _check_collision(q, mass, r)
    m = mass.masses
    return -(m[0] * m[1] / r[..., 0] + m[1] * m[2] / r[..., 1] + m[2] * m[0] / r[..., 2])


def potential_U(q, masses) -> float:
    """Positive potential U = -V."""
    return -potential_V(q, masses)


def kinetic_energy(v, masses) -> float:
    m = as_masses(masses).masses
    return 0.5 * np.sum(m * np.abs(as_config(v)) ** 2, axis=-1)


def total_energy(state: PhaseState, masses) -> float:
    return kinetic_energy(state.v, masses) + potential_V(state.q, masses)


def accelerations(q, masses) -> np.ndarray:
    """Newtonian accelerations a_i = sum_j m_j (q_j - q_i) / r_ij^3."""
    mass = as_masses(masses)
    q = as_config(q)
    r = pairwise_separations(q)
    _check_collision(q, mass, r)
    m1, m2, m3 = mass.masses
    d12 = (q[..., 1] - q[..., 0]) / r[..., 0] ** 3
    d23 = (q[..., 2] - q[..., 1]) / r[..., 1] ** 3
    d31 = (q[..., 0] - q[..., 2]) / r[..., 2] ** 3
    return np.stack([m2 * d12 - m3 * d31, m3 * d23 - m1 * d12, m1 * d31 - m2 * d23], axis=-1)


def grad_V(q, masses) -> np.ndarray:
    """Mass-metric gradient of V (partial derivatives divided by m_i); equals -a."""
    return -accelerations(q, masses)


def grad_I(q) -> np.ndarray:
    return 2.0 * as_config(q)


def linear_momentum(state: PhaseState, masses) -> complex:
    return np.sum(as_masses(masses).masses * state.v)


def angular_momentum(state: PhaseState, masses) -> float:
    return float(np.sum(as_masses(masses).masses * wedge(state.q, state.v)))


def lagrange_jacobi_rhs(state: PhaseState, masses) -> float:
    """4H + 2U, the value of d^2 I/dt^2 predicted by the Lagrange-Jacobi identity."""
    H = total_energy(state, masses)
    return 4.0 * H + 2.0 * potential_U(state.q, masses)


def lagrange_jacobi_residual(trajectory, masses=None, samples: int = 2001) -> float:
    """Max |I'' - (4H + 2U)| along a full trajectory.

    I'' comes from second central differences of I(t) on a uniform grid
    sampled from the trajectory's interpolant.
    """
    if len(trajectory.times) < 3:
        raise ValueError("need at least 3 samples for second differences")
    masses = as_masses(masses if masses is not None else trajectory.masses)
    t = np.linspace(trajectory.times[0], trajectory.times[-1], samples)
    dt = t[1] - t[0]
    Y = trajectory.sample(t)
    I = np.array([moment_of_inertia(y[0:3] + 1j * y[3:6], masses) for y in Y])
    Idd = (I[2:] - 2 * I[1:-1] + I[:-2]) / dt**2
    rhs = np.array([lagrange_jacobi_rhs(PhaseState.unpack(y), masses) for y in Y[1:-1]])
    return float(np.max(np.abs(Idd - rhs)))


def full_rhs(masses):
    """Packed first-order vector field y' = f(t, y) for the Newton equations."""
    m1, m2, m3 = (float(x) for x in as_masses(masses).masses)
    nan = np.full(12, np.nan)

    def f(t, y):
        # plain floats: much cheaper than numpy scalars for 12 numbers
        x1, x2, x3, y1, y2, y3, u1, u2, u3, v1, v2, v3 = y.tolist()
        dx12, dy12 = x2 - x1, y2 - y1
        dx23, dy23 = x3 - x2, y3 - y2
        dx31, dy31 = x1 - x3, y1 - y3
        r12 = dx12 * dx12 + dy12 * dy12
        r23 = dx23 * dx23 + dy23 * dy23
        r31 = dx31 * dx31 + dy31 * dy31
        try:
            k12 = 1.0 / (r12 * math.sqrt(r12))
            k23 = 1.0 / (r23 * math.sqrt(r23))
            k31 = 1.0 / (r31 * math.sqrt(r31))
        except (ZeroDivisionError, ValueError):
            return nan.copy()
        return np.array([
            u1, u2, u3, v1, v2, v3,
            m2 * dx12 * k12 - m3 * dx31 * k31,
            m3 * dx23 * k23 - m1 * dx12 * k12,
            m1 * dx31 * k31 - m2 * dx23 * k23,
            m2 * dy12 * k12 - m3 * dy31 * k31,
            m3 * dy23 * k23 - m1 * dy12 * k12,
            m1 * dy31 * k31 - m2 * dy23 * k23,
        ])

    return f
