"""Quotient map from located triangles to shape space R^3.

pi = hopf_map o jacobi_from_config, using normalized Jacobi coordinates for
the partition {12;3}.  Shape vectors are float arrays (w1, w2, w3); the
Euclidean norm |w| equals I/2 for a centered configuration.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import PhaseState, as_config, as_masses, wedge


class JacobiCoordinates(NamedTuple):
    Z1: complex
    Z2: complex


def jacobi_from_config(q, masses) -> JacobiCoordinates:
    m = as_masses(masses)
    q = as_config(q)
    m1, m2 = m.m1, m.m2
    Z1 = m.mu1 * (q[..., 0] - q[..., 1])
    Z2 = m.mu2 * (q[..., 2] - (m1 * q[..., 0] + m2 * q[..., 1]) / (m1 + m2))
    return JacobiCoordinates(Z1, Z2)


def config_from_jacobi(Z: JacobiCoordinates, masses) -> np.ndarray:
    """Centered configuration with the given normalized Jacobi coordinates."""
    m = as_masses(masses)
    m12 = m.m1 + m.m2
    Z1, Z2 = np.asarray(Z[0], dtype=complex), np.asarray(Z[1], dtype=complex)
    Q12 = Z1 / m.mu1
    D = Z2 / m.mu2  # q3 - center of mass of {1,2}
    c12 = -m.m3 * D / m.M
    return np.stack([c12 + m.m2 / m12 * Q12, c12 - m.m1 / m12 * Q12, c12 + D], axis=-1)


def hopf_map(Z: JacobiCoordinates) -> np.ndarray:
    Z1, Z2 = np.asarray(Z[0]), np.asarray(Z[1])
    P = Z1 * np.conj(Z2)
    return np.stack([0.5 * (np.abs(Z1) ** 2 - np.abs(Z2) ** 2), P.real, P.imag], axis=-1)


def project(q, masses) -> np.ndarray:
    """Shape vector w of a configuration (vectorized over leading axes)."""
    return hopf_map(jacobi_from_config(q, masses))


def hermitian_matrix(w) -> np.ndarray:
    """2x2 Hermitian matrix [[w4 + w1, w2 + i w3], [w2 - i w3, w4 - w1]] with w4 = |w|."""
    w = np.asarray(w, dtype=float)
    w4 = np.linalg.norm(w)
    return np.array([[w4 + w[0], w[1] + 1j * w[2]], [w[1] - 1j * w[2], w4 - w[0]]])


def reflect(w) -> np.ndarray:
    """Image of w under complex conjugation of the triangle (w3 -> -w3)."""
    w = np.array(w, dtype=float)
    w[..., 2] *= -1
    return w


def signed_area(q) -> float:
    q = as_config(q)
    return 0.5 * wedge(q[..., 1] - q[..., 0], q[..., 2] - q[..., 0])


def signed_area_check(q, masses):
    """Return (area, w3, ratio) where ratio = w3 / (2 mu1 mu2 area), 1 when defined."""
    m = as_masses(masses)
    area = signed_area(q)
    w3 = project(q, m)[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = w3 / (2 * m.mu1 * m.mu2 * area)
    return area, w3, ratio


def jacobian_rot(Z: JacobiCoordinates) -> np.ndarray:
    """Real 3x4 Jacobian of the Hopf map in coordinates (x1, y1, x2, y2)."""
    x1, y1 = np.real(Z[0]), np.imag(Z[0])
    x2, y2 = np.real(Z[1]), np.imag(Z[1])
    return np.array([
        [x1, y1, -x2, -y2],
        [x2, y2, x1, y1],
        [-y2, x2, y1, -x1],
    ])


def pushforward_velocity(state: PhaseState, masses) -> np.ndarray:
    """Shape velocity d/dt pi(q(t)) for the phase state (q, v)."""
    m = as_masses(masses)
    Z = jacobi_from_config(state.q, m)
    Zd = jacobi_from_config(state.v, m)  # linear map, so it also sends q' to Z'
    A = Zd[0] * np.conj(Z[1]) + Z[0] * np.conj(Zd[1])
    return np.stack([
        np.real(Z[0] * np.conj(Zd[0])) - np.real(Z[1] * np.conj(Zd[1])),
        A.real,
        A.imag,
    ], axis=-1)


def gauge_jacobi(w) -> JacobiCoordinates:
    """Section of the Hopf map: Z1 real >= 0, and Z2 real >= 0 when Z1 = 0."""
    w = np.asarray(w, dtype=float)
    rho = np.linalg.norm(w)
    if rho == 0:
        return JacobiCoordinates(0j, 0j)
    off = complex(w[1], w[2])
    if w[0] >= 0:
        z1 = np.sqrt(rho + w[0])
        return JacobiCoordinates(complex(z1), np.conj(off) / z1)
    # rho + w1 suffers cancellation here; use (rho + w1)(rho - w1) = |off|^2
    mod2 = np.sqrt(rho - w[0])
    z1 = abs(off) / mod2
    phase = np.conj(off) / abs(off) if off != 0 else 1.0
    return JacobiCoordinates(complex(z1), complex(mod2 * phase))


def reconstruct_config(w, masses) -> np.ndarray:
    """Centered configuration q in the fixed gauge with project(q) == w."""
    return config_from_jacobi(gauge_jacobi(w), masses)


def horizontal_lift_velocity(q, wdot, masses) -> np.ndarray:
    """The velocity with P = 0, J = 0 at centered q whose pushforward is ``wdot``."""
    m = as_masses(masses)
    Z = jacobi_from_config(q, m)
    L = jacobian_rot(Z)
    I = abs(Z[0]) ** 2 + abs(Z[1]) ** 2
    zd = L.T @ (np.asarray(wdot, dtype=float) / I)
    return config_from_jacobi(JacobiCoordinates(complex(zd[0], zd[1]), complex(zd[2], zd[3])), m)
