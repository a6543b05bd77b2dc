import math

import numpy as np
import pytest

from deltamass.conformal import ConformalMetric, conformal_curvature, mass_of
from deltamass.errors import DomainError, SingularityError
from deltamass.sphere import (RADIUS, ROBIN_UNIT_AREA, ROBIN_UNIT_RADIUS, SphereQuadrature,
                              adm_identity_residual, green_zero_mean, robin_from_quadrature,
                              sphere_green, sphere_robin)


@pytest.fixture(scope="module")
def sq():
    return SphereQuadrature(48)


def test_weights_and_exact_harmonics(sq, rng):
    assert abs(sq.weights.sum() - 1.0) < 1e-12
    # random harmonics of degree <= n_theta - 1 integrate to zero
    a = np.zeros((sq.lmax + 1, sq.mmax + 1), dtype=complex)
    a[1:, :] = rng.standard_normal(a[1:, :].shape)
    a = np.tril(a)
    a[:, 0] = a[:, 0].real
    assert abs(sq.integral(sq.synthesize(a))) < 1e-10
    assert sq.integral(sq.unit_vectors()[:, 2] ** 2) == pytest.approx(1 / 3, abs=1e-14)


def test_transform_round_trip(sq, rng):
    f = sq.random_field(rng, 10)
    np.testing.assert_allclose(sq.project(f), f, atol=1e-12)


def test_laplacian_eigenvalues(sq):
    z = sq.unit_vectors()[:, 2]
    np.testing.assert_allclose(sq.laplacian(z), 8 * np.pi * z, atol=1e-9)
    xy = sq.unit_vectors()[:, 0] * sq.unit_vectors()[:, 1]
    np.testing.assert_allclose(sq.laplacian(xy), 24 * np.pi * xy, atol=1e-9)
    np.testing.assert_allclose(sq.inverse_laplacian(z), z / (8 * np.pi), atol=1e-14)
    assert np.max(np.abs(sq.inverse_laplacian(np.ones(sq.n_nodes)))) < 1e-14


def test_sphere_robin_closed_form():
    assert sphere_robin() == pytest.approx(-0.170672, abs=1e-6)
    assert abs(sphere_robin() - (-1 - math.log(math.pi)) / (4 * math.pi)) < 1e-10


def test_unit_radius_constant_follows_from_scaling():
    # area 4π means lengths scaled by sqrt(4π): m shifts by log(4π)/4π
    assert ROBIN_UNIT_AREA + math.log(4 * math.pi) / (4 * math.pi) == pytest.approx(
        ROBIN_UNIT_RADIUS, abs=1e-15)
    # direct expansion of the kernel at θ → 0 on the unit sphere (d = θ)
    th = 1e-5
    g = -(math.log(math.sin(th / 2) ** 2) + 1) / (4 * math.pi)
    assert g + math.log(th) / (2 * math.pi) == pytest.approx(ROBIN_UNIT_RADIUS, abs=1e-9)


def test_quadrature_finite_part():
    assert abs(robin_from_quadrature(64) - ROBIN_UNIT_AREA) < 1e-8


def test_sphere_green_properties(rng):
    p, q = rng.standard_normal((2, 3))
    assert sphere_green(p, q) == sphere_green(q, p)
    with pytest.raises(SingularityError):
        sphere_green(p, p)
    sq = SphereQuadrature(64)
    assert abs(green_zero_mean(sq)) < 1e-8


def test_sphere_green_solves_poisson(sq):
    # Δ⁻¹ z computed from the kernel: ∫ G(p,q) z(q) dA(q) = z(p)/8π at the north pole
    north = np.array([0.0, 0.0, 1.0])
    val = sq.zonal_integral(lambda t: -(np.log(t) + 1) / (4 * math.pi) * (1 - 2 * t))
    assert val == pytest.approx(north[2] / (8 * math.pi), abs=1e-12)


def test_unit_radius_kernel_gives_same_values(rng):
    # the Green's function is unchanged by constant rescaling of the metric:
    # the unit-radius kernel and the unit-area kernel coincide at every pair
    p, q = rng.standard_normal((2, 3))
    p, q = p / np.linalg.norm(p), q / np.linalg.norm(q)
    c = float(p @ q)
    unit_radius = -(math.log((1 - c) / 2) + 1) / (4 * math.pi)
    assert sphere_green(p, q) == pytest.approx(unit_radius, abs=1e-15)


def test_distance_is_geodesic(sq):
    d = sq.distance_from(0)
    assert d.max() <= math.pi * RADIUS + 1e-15
    assert d[0] == 0


def test_conformal_identity_residual_examples():
    sq = SphereQuadrature(96)
    assert np.max(np.abs(adm_identity_residual(sq, sq.constant(0.0)).values)) < 1e-12
    assert np.max(np.abs(adm_identity_residual(sq, sq.constant(math.log(3.0))).values)) < 1e-12
    phi = sq.field(sq.random_field(np.random.default_rng(4), 5, 0.8))
    assert np.max(np.abs(adm_identity_residual(sq, phi).values)) < 1e-4


def test_gauss_bonnet_for_conformal_spheres(sq, rng):
    for _ in range(5):
        phi = sq.random_field(rng, 6, 1.0)
        K = conformal_curvature(sq, phi)
        assert abs(sq.integral(K * np.exp(phi)) - 4 * math.pi) < 1e-6


def test_morpurgo_positivity(sq, rng):
    m = sq.constant(ROBIN_UNIT_AREA)
    for _ in range(5):
        phi = sq.field(sq.random_field(rng, 4, 0.7))
        assert mass_of(m, ConformalMetric(sq, phi)).mass > 0
    for c in (-1.0, 0.0, 2.0):
        assert abs(mass_of(m, ConformalMetric(sq, sq.constant(c))).mass) < 1e-8


def test_quadrature_sizes_validated():
    with pytest.raises(DomainError):
        SphereQuadrature(16, 10)
    with pytest.raises(DomainError):
        SphereQuadrature(1)
