"""Metric geometry of shape space.

The shape metric is ds^2 = |dw|^2 / (2 |w|), a cone over the shape sphere
with cone point at triple collision.  Binary collision rays lie in the
collinear plane w3 = 0; the potential is a sum of c_ij / d_ij where d_ij is
the metric distance to the ij ray.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core import PAIRS, PAIR_INDEX, MassDistribution, as_masses
from .errors import SingularityError, UnsupportedMassesError
from .projection import project, reflect

# d_ij below this fraction of sqrt(2|w|) counts as sitting on the ray
RAY_TOLERANCE = 1e-12


def _norm(w):
    return np.linalg.norm(np.asarray(w, dtype=float), axis=-1)


def metric_factor(w) -> float:
    """Conformal factor 1 / (2|w|) of the shape metric."""
    rho = _norm(w)
    if np.any(rho == 0):
        raise SingularityError("cone point", "metric is singular at triple collision w = 0")
    return 1.0 / (2.0 * rho)


def shape_speed(w, wdot) -> float:
    """ds/dt = |wdot| / sqrt(2|w|)."""
    return np.sqrt(np.sum(np.asarray(wdot) ** 2, axis=-1) * metric_factor(w))


def shape_distance(wa, wb) -> float:
    """Distance between two shapes, min over rotations of |q_a - e^{i t} q_b|.

    d^2 = 2|a| + 2|b| - 2c with c = sqrt(2(|a||b| + a.b)), evaluated as
    2|a - b|^2 / (|a| + |b| + c) to avoid cancellation when a ~ b.
    """
    wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
    ra, rb = _norm(wa), _norm(wb)
    dot = np.sum(wa * wb, axis=-1)
    cross = np.sqrt(np.maximum(2.0 * (ra * rb + dot), 0.0))
    diff2 = np.sum((wa - wb) ** 2, axis=-1)
    denom = ra + rb + cross
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, np.sqrt(2.0 * diff2 / np.where(denom > 0, denom, 1.0)), 0.0)[()]


@dataclass(frozen=True)
class BinaryRay:
    pair: str
    direction: np.ndarray


def _collision_config(pair):
    i, j = PAIR_INDEX[pair]
    q = np.zeros(3, dtype=complex)
    k = 3 - i - j
    q[k] = 1.0
    return q


@lru_cache(maxsize=64)
def _ray_directions(masses: MassDistribution) -> np.ndarray:
    out = []
    for pair in PAIRS:
        w = project(_collision_config(pair), masses)
        out.append(w / np.linalg.norm(w))
    return np.array(out)


def binary_ray(pair: str, masses) -> BinaryRay:
    if pair not in PAIR_INDEX:
        pair = {"21": "12", "32": "23", "13": "31"}.get(pair, pair)
    d = _ray_directions(as_masses(masses))[PAIRS.index(pair)].copy()
    return BinaryRay(pair, d)


def ray_directions(masses) -> np.ndarray:
    """Unit vectors (b12, b23, b31) as rows."""
    return _ray_directions(as_masses(masses)).copy()


def distance_to_binary_ray(w, pair: str, masses) -> float:
    b = binary_ray(pair, masses).direction
    w = np.asarray(w, dtype=float)
    return np.sqrt(np.maximum(_norm(w) - w @ b, 0.0))


def ray_distances(w, masses) -> np.ndarray:
    """(d12, d23, d31) for each shape in ``w``."""
    B = ray_directions(masses)
    w = np.asarray(w, dtype=float)
    return np.sqrt(np.maximum(_norm(w)[..., None] - w @ B.T, 0.0))


def side_lengths_from_shape(w, masses) -> np.ndarray:
    m = as_masses(masses)
    d = ray_distances(w, m)
    mu = np.array([m.mu_ij[p] for p in PAIRS])
    return d / np.sqrt(mu)


def _check_off_rays(w, d):
    scale = np.sqrt(2.0 * _norm(w))
    bad = d <= RAY_TOLERANCE * scale[..., None]
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise SingularityError(PAIRS[idx[-1]], f"shape lies on binary collision ray {PAIRS[idx[-1]]}")


def shape_potential(w, masses) -> float:
    """U(w) = sum c_ij / d_ij(w), equal to sum m_i m_j / r_ij of any lift."""
    m = as_masses(masses)
    d = ray_distances(w, m)
    _check_off_rays(w, d)
    c = np.array([m.c_ij[p] for p in PAIRS])
    return np.sum(c / d, axis=-1)


def shape_potential_grad(w, masses) -> np.ndarray:
    """Euclidean gradient dU/dw = -sum c_ij (w/|w| - b_ij) / (2 d_ij^3)."""
    m = as_masses(masses)
    w = np.asarray(w, dtype=float)
    B = ray_directions(m)
    d = ray_distances(w, m)
    _check_off_rays(w, d)
    c = np.array([m.c_ij[p] for p in PAIRS])
    what = w / _norm(w)[..., None]
    coef = -c / (2.0 * d**3)  # (..., 3 pairs)
    return coef.sum(axis=-1)[..., None] * what - coef @ B


def cone_circle_length(normal, r: float, samples: int = 256) -> float:
    """Shape-metric length of the circle of geodesic radius r about 0 in the
    plane through the origin with the given normal."""
    if not r > 0:
        raise ValueError("r must be positive")
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    e1 = np.cross(n, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-8:
        e1 = np.cross(n, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    rho = r * r / 2.0  # geodesic distance to the cone point is sqrt(2|w|)
    phi = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    w = rho * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    dw = rho * (-np.sin(phi)[:, None] * e1 + np.cos(phi)[:, None] * e2)
    speed = shape_speed(w, dw)
    # periodic integrand: the trapezoid rule is spectrally accurate
    return float(np.sum(speed) * 2 * np.pi / samples)


@dataclass(frozen=True)
class SpecialPoints:
    """Marked points of the shape sphere, all unit vectors.

    ``euler[i]`` has body i+1 in the middle; ``binary[i]`` is B_{i+1}, the
    collision of the two bodies other than i+1; ``isosc_normals[i]`` is the
    normal of the plane r_ij = r_ik with vertex i+1, or None when that locus
    is not a plane (m_j != m_k).
    """

    lagrange_plus: np.ndarray
    lagrange_minus: np.ndarray
    euler: np.ndarray
    binary: np.ndarray
    isosc_normals: Optional[np.ndarray]

    def all_points(self) -> np.ndarray:
        return np.vstack([self.lagrange_plus, self.lagrange_minus, self.euler, self.binary])


OPPOSITE_PAIR = ("23", "31", "12")  # pair not containing body 1, 2, 3


def special_points(masses) -> SpecialPoints:
    from .solutions import find_euler_configs

    m = as_masses(masses)
    omega = np.exp(2j * np.pi / 3)
    lp = project(np.array([1, omega, omega**2]), m)
    lp /= np.linalg.norm(lp)
    eul = []
    for cc in find_euler_configs(m):
        w = project(cc.q0, m)
        eul.append(w / np.linalg.norm(w))
    B = ray_directions(m)
    binary = np.array([B[PAIRS.index(p)] for p in OPPOSITE_PAIR])
    normals = []
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        if m.masses[j] != m.masses[k]:
            normals.append(None)
            continue
        n = np.cross(binary[i], [0.0, 0.0, 1.0])
        normals.append(n / np.linalg.norm(n))
    iso = np.array(normals) if all(n is not None for n in normals) else None
    return SpecialPoints(lp, reflect(lp), np.array(eul), binary, iso)


@dataclass(frozen=True)
class ShapeSymmetry:
    """Linear isometry of shape space induced by relabeling (and possibly
    reflecting) the triangle.  ``perm[i]`` is the index whose position moves to
    slot i, so q -> conj?(q[perm])."""

    name: str
    matrix: np.ndarray
    perm: tuple
    conjugate: bool

    def __call__(self, w):
        return np.asarray(w, dtype=float) @ self.matrix.T

    def act_on_config(self, q):
        q = np.asarray(q)[..., list(self.perm)]
        return np.conj(q) if self.conjugate else q


_SWAP = {0: (0, 2, 1), 1: (2, 1, 0), 2: (1, 0, 2)}  # sigma_i fixes body i


def equal_mass_symmetries(masses=None) -> list:
    """Half-twists sigma_i about the EUL_i / B_i line and reflections R_i
    across the ISOSC_i plane, for i = 1, 2, 3."""
    m = as_masses(masses)
    if not m.is_equal:
        raise UnsupportedMassesError("shape symmetries require equal masses")
    B = ray_directions(m)
    flip = np.diag([1.0, 1.0, -1.0])
    out = []
    for i in range(3):
        a = B[PAIRS.index(OPPOSITE_PAIR[i])]
        twist = 2.0 * np.outer(a, a) - np.eye(3)
        out.append(ShapeSymmetry(f"sigma{i + 1}", twist, _SWAP[i], False))
        out.append(ShapeSymmetry(f"R{i + 1}", flip @ twist, _SWAP[i], True))
    _verify_symmetries(out, m)
    return out


def _verify_symmetries(syms, m):
    rng = np.random.default_rng(12345)
    w = rng.normal(size=(8, 3))
    pts = special_points(m).all_points()
    for s in syms:
        M = s.matrix
        if not np.allclose(M @ M.T, np.eye(3), atol=1e-12):
            raise AssertionError(f"{s.name} is not orthogonal")
        if not np.allclose(metric_factor(s(w)), metric_factor(w), rtol=1e-12):
            raise AssertionError(f"{s.name} does not preserve the metric")
        if not np.allclose(shape_potential(s(w), m), shape_potential(w, m), rtol=1e-12):
            raise AssertionError(f"{s.name} does not preserve the potential")
        img = s(pts)
        dist = np.min(np.linalg.norm(img[:, None, :] - pts[None, :, :], axis=-1), axis=1)
        if np.max(dist) > 1e-10:
            raise AssertionError(f"{s.name} does not permute the special points")


def symmetry_by_name(name: str, masses=None) -> ShapeSymmetry:
    for s in equal_mass_symmetries(masses):
        if s.name == name:
            return s
    raise KeyError(name)
