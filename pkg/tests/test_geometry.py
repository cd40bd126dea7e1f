import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import quad
from hypothesis import strategies as st

from conftest import LAGRANGE, configs, masses_st, random_config, separated
from shapesphere import core
from shapesphere.core import EQUAL_MASSES, MassDistribution
from shapesphere.errors import SingularityError, UnsupportedMassesError
from shapesphere.geometry import (binary_ray, cone_circle_length, distance_to_binary_ray,
                                  equal_mass_symmetries, metric_factor, shape_distance, shape_potential,
                                  shape_potential_grad, shape_speed, side_lengths_from_shape, special_points,
                                  symmetry_by_name)
from shapesphere.projection import project, reconstruct_config

S3 = math.sqrt(3)
EUL = np.array([-0.5, S3 / 2, 0])
EQUI = np.array([0, 0, 1.5])


def test_metric_factor_and_speed():
    with pytest.raises(SingularityError):
        metric_factor([0, 0, 0])
    assert metric_factor([0, 0.5, 0]) == pytest.approx(1.0)
    w, wd = np.array([0.5, 0, 0]), np.array([0, 0.3, 0.4])
    assert shape_speed(w, wd) == pytest.approx(0.5)
    assert shape_speed(4 * w, 4 * wd) == pytest.approx(2 * shape_speed(w, wd))


def test_radial_length():
    # length of t -> t u from 0 to W is sqrt(2W)
    u = np.array([0.6, 0, 0.8])
    W = 3.0
    length, _ = quad(lambda t: shape_speed(t * u, u), 0, W, epsabs=1e-13)
    assert length == pytest.approx(math.sqrt(2 * W), rel=1e-10)
    assert shape_distance(np.zeros(3), W * u) == pytest.approx(math.sqrt(2 * W), rel=1e-14)


def test_shape_distance_examples():
    assert shape_distance(EQUI, EQUI) == pytest.approx(0, abs=1e-7)
    assert shape_distance(EQUI, -EQUI) == pytest.approx(math.sqrt(6))


def test_shape_distance_brute_force(rng):
    m = MassDistribution(1, 1.5, 0.7)
    theta = np.linspace(0, 2 * np.pi, 10000, endpoint=False)
    for _ in range(10):
        qa = core.centered(random_config(rng), m)
        qb = core.centered(random_config(rng), m)
        diffs = qa[None, :] - np.exp(1j * theta)[:, None] * qb[None, :]
        brute = np.sqrt(np.min(np.sum(m.masses * np.abs(diffs) ** 2, axis=1)))
        assert shape_distance(project(qa, m), project(qb, m)) == pytest.approx(brute, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(*[st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)] * 3)
def test_shape_distance_is_metric(a, b, c):
    dab, dba = shape_distance(a, b), shape_distance(b, a)
    assert dab == pytest.approx(dba, abs=1e-12)
    assert dab <= shape_distance(a, c) + shape_distance(c, b) + 1e-7


def test_binary_rays_equal_masses():
    np.testing.assert_allclose(binary_ray("12", EQUAL_MASSES).direction, [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(binary_ray("23", EQUAL_MASSES).direction, [0.5, -S3 / 2, 0], atol=1e-15)
    np.testing.assert_allclose(binary_ray("31", EQUAL_MASSES).direction, [0.5, S3 / 2, 0], atol=1e-15)


def test_binary_rays_general_masses(rng):
    m = MassDistribution(1, 2, 3)
    for pair in core.PAIRS:
        b = binary_ray(pair, m).direction
        assert np.linalg.norm(b) == pytest.approx(1) and b[2] == 0
        i, j = core.PAIR_INDEX[pair]
        q = rng.normal(size=3) + 1j * rng.normal(size=3)
        q[j] = q[i]
        w = project(q, m)
        np.testing.assert_allclose(w, np.linalg.norm(w) * b, atol=1e-12)


def test_ray_distance_examples():
    assert distance_to_binary_ray(EUL, "12", EQUAL_MASSES) == pytest.approx(math.sqrt(0.5))
    assert distance_to_binary_ray(EQUI, "12", EQUAL_MASSES) == pytest.approx(math.sqrt(1.5))
    assert distance_to_binary_ray(2.5 * binary_ray("12", EQUAL_MASSES).direction, "12", EQUAL_MASSES) == 0


@settings(max_examples=300, deadline=None)
@given(configs, masses_st)
def test_lemma_distance_equals_scaled_separation(q, m):
    w = project(q, m)
    r = core.pairwise_separations(q)
    mu = np.array([m.mu_ij[p] for p in core.PAIRS])
    d = np.array([distance_to_binary_ray(w, p, m) for p in core.PAIRS])
    scale = 1 + np.sqrt(np.linalg.norm(w))
    np.testing.assert_allclose(np.sqrt(mu) * r, d, atol=1e-7 * scale)
    np.testing.assert_allclose(side_lengths_from_shape(w, m), r, atol=1e-7 * scale / np.sqrt(mu.min()))


def test_side_lengths_examples():
    np.testing.assert_allclose(side_lengths_from_shape(EUL, EQUAL_MASSES), [1, 2, 1], rtol=1e-14)
    np.testing.assert_allclose(side_lengths_from_shape(EQUI, EQUAL_MASSES), [S3] * 3, rtol=1e-14)


def test_triangle_inequality_on_shapes(rng):
    for _ in range(100):
        w = rng.normal(size=3)
        r = np.sort(side_lengths_from_shape(w, EQUAL_MASSES))
        assert r[2] <= r[0] + r[1] + 1e-12
        w[2] = 0
        r = np.sort(side_lengths_from_shape(w, EQUAL_MASSES))
        assert r[2] == pytest.approx(r[0] + r[1], rel=1e-10)


def test_side_lengths_roundtrip(rng):
    m = MassDistribution(2, 1, 1)
    for _ in range(20):
        w = rng.normal(size=3)
        r = core.pairwise_separations(reconstruct_config(w, m))
        np.testing.assert_allclose(side_lengths_from_shape(w, m), r, rtol=1e-10)


def test_shape_potential_examples():
    assert shape_potential(EUL, EQUAL_MASSES) == pytest.approx(2.5, rel=1e-14)
    assert shape_potential(EQUI, EQUAL_MASSES) == pytest.approx(S3, rel=1e-14)
    assert shape_potential(4 * EQUI, EQUAL_MASSES) == pytest.approx(S3 / 2, rel=1e-14)
    with pytest.raises(SingularityError) as exc:
        shape_potential(binary_ray("31", EQUAL_MASSES).direction, EQUAL_MASSES)
    assert exc.value.where == "31"


@settings(max_examples=200, deadline=None)
@given(configs, masses_st)
def test_shape_potential_equals_lift_potential(q, m):
    if not separated(q, 0.05):
        return
    U = core.potential_U(q, m)
    assert shape_potential(project(q, m), m) == pytest.approx(U, rel=1e-10)


def test_shape_potential_gradient_fd(rng):
    m = MassDistribution(1, 2, 3)
    for _ in range(20):
        w = project(random_config(rng), m)
        g = shape_potential_grad(w, m)
        h = 1e-6 * np.linalg.norm(w)
        fd = np.array([(shape_potential(w + h * e, m) - shape_potential(w - h * e, m)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("normal", [[0, 0, 1], [1, 0, 0], [0.3, -0.5, 0.8]])
def test_cone_circumference(normal):
    assert cone_circle_length(normal, 1.0) == pytest.approx(math.pi, abs=1e-8)
    assert cone_circle_length(normal, 2.0) == pytest.approx(2 * math.pi, abs=1e-8)


def test_half_angle_law(rng):
    # shape-metric angle at the cone point is half the Euclidean angle
    for _ in range(10):
        w, b = rng.normal(size=3), rng.normal(size=3)
        ang = math.acos(np.dot(w, b) / np.linalg.norm(w) / np.linalg.norm(b))
        # geodesic triangle 0, w, b: law of cosines in the flattened cone
        ra, rb = math.sqrt(2 * np.linalg.norm(w)), math.sqrt(2 * np.linalg.norm(b))
        d = shape_distance(w, b)
        theta = math.acos((ra**2 + rb**2 - d**2) / (2 * ra * rb))
        assert theta == pytest.approx(ang / 2, abs=1e-7)


def test_special_points_equal_masses():
    sp = special_points(EQUAL_MASSES)
    np.testing.assert_allclose(sp.lagrange_plus, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(sp.lagrange_minus, [0, 0, -1], atol=1e-15)
    for i in range(3):
        np.testing.assert_allclose(sp.euler[i], -sp.binary[i], atol=1e-12)
        n = sp.isosc_normals[i]
        assert abs(n @ sp.lagrange_plus) < 1e-15 and abs(n @ sp.lagrange_minus) < 1e-15
    for i in range(3):
        for j in range(i):
            assert np.dot(sp.binary[i], sp.binary[j]) == pytest.approx(-0.5)
    assert special_points(MassDistribution(1, 2, 3)).isosc_normals is None


def test_symmetries():
    syms = equal_mass_symmetries()
    assert [s.name for s in syms] == ["sigma1", "R1", "sigma2", "R2", "sigma3", "R3"]
    rng = np.random.default_rng(0)
    w = rng.normal(size=(50, 3))
    for s in syms:
        np.testing.assert_allclose(s(s(w)), w, atol=1e-14)
        np.testing.assert_allclose(shape_potential(s(w), EQUAL_MASSES), shape_potential(w, EQUAL_MASSES), rtol=1e-12)
    with pytest.raises(UnsupportedMassesError):
        equal_mass_symmetries(MassDistribution(1, 1, 2))


def test_sigma2_permutes_rays_and_fixes_isosceles_plane():
    s = symmetry_by_name("sigma2")
    b12, b23 = binary_ray("12", EQUAL_MASSES).direction, binary_ray("23", EQUAL_MASSES).direction
    np.testing.assert_allclose(s(b12), b23, atol=1e-14)
    np.testing.assert_allclose(s(b23), b12, atol=1e-14)
    R2 = symmetry_by_name("R2")
    n = special_points(EQUAL_MASSES).isosc_normals[1]
    p = np.cross(n, [0.1, 0.7, 0.2])
    np.testing.assert_allclose(R2(p), p, atol=1e-14)


def test_symmetry_matches_relabeling(rng):
    for s in equal_mass_symmetries():
        q = random_config(rng)
        np.testing.assert_allclose(project(s.act_on_config(q), EQUAL_MASSES), s(project(q, EQUAL_MASSES)),
                                   atol=1e-12)


def test_plane_through_origin_totally_geodesic():
    from shapesphere.reduced import ReducedState, integrate_reduced
    from shapesphere.integrator import IntegratorConfig
    n = np.array([0.2, -0.4, 0.9])
    n /= np.linalg.norm(n)
    w0 = np.cross(n, [1.0, 0, 0])
    wd = np.cross(n, w0) + 0.3 * w0
    traj = integrate_reduced(ReducedState(w0, wd), EQUAL_MASSES, 2.0,
                             IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12), potential=False)
    assert np.max(np.abs(traj.w @ n)) < 1e-8
