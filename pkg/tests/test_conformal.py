import json
import math

import numpy as np
import pytest

from deltamass.conformal import (ConformalDiscretization, ConformalMetric, MassReport,
                                 delta_mass, dumps17, mass_of, robin_conformal,
                                 sphere_reference, trace_conformal)
from deltamass.errors import DomainError
from deltamass.sphere import ROBIN_UNIT_AREA, ROBIN_UNIT_RADIUS, SphereQuadrature
from deltamass.torus import (TorusGrid, TorusModulus, ewald_robin, local_poly_fit,
                             random_trig_field)


@pytest.fixture(scope="module")
def torus():
    mod = TorusModulus(0.0, 1.0)
    g = TorusGrid(mod, 64)
    return g, g.constant(ewald_robin(mod))


@pytest.fixture(scope="module")
def sphere():
    sq = SphereQuadrature(32)
    return sq, sq.constant(ROBIN_UNIT_AREA)


def _bases(torus, sphere):
    return [torus, sphere]


def _random_phi(disc, rng, amp=0.8):
    if isinstance(disc, TorusGrid):
        return disc.field(random_trig_field(disc, rng, 4, amp))
    return disc.field(disc.random_field(rng, 4, amp))


def test_zero_factor_changes_nothing(torus, sphere):
    for disc, m in _bases(torus, sphere):
        cm = ConformalMetric(disc, disc.constant(0.0))
        np.testing.assert_allclose(robin_conformal(m, cm).values, m.values, atol=1e-15)
        assert trace_conformal(m, cm) == pytest.approx(disc.integral(m.values), abs=1e-15)


def test_constant_factor_algebra(torus, sphere):
    c = 2.7
    for disc, m in _bases(torus, sphere):
        cm = ConformalMetric(disc, disc.constant(math.log(c)))
        np.testing.assert_allclose(robin_conformal(m, cm).values,
                                   m.values + math.log(c) / (4 * math.pi), atol=1e-14)
        expect = c * disc.integral(m.values) + c * disc.area * math.log(c) / (4 * math.pi)
        assert trace_conformal(m, cm) == pytest.approx(expect, abs=1e-13)


def test_robin_and_trace_are_consistent(torus, sphere, rng):
    for disc, m in _bases(torus, sphere):
        for _ in range(50):
            phi = _random_phi(disc, rng, rng.uniform(0.1, 1.5))
            cm = ConformalMetric(disc, phi)
            lhs = disc.integral(robin_conformal(m, cm).values * np.exp(phi.values))
            assert lhs == pytest.approx(trace_conformal(m, cm), abs=1e-9)


def test_composition_law(torus, sphere, rng):
    for disc, m in _bases(torus, sphere):
        phi1, phi2 = _random_phi(disc, rng, 0.6), _random_phi(disc, rng, 0.6)
        once = robin_conformal(m, ConformalMetric(disc, phi1 + phi2))
        step = robin_conformal(m, ConformalMetric(disc, phi1))
        rebased = ConformalDiscretization(disc, phi1.values)
        twice = robin_conformal(rebased.field(step.values),
                                ConformalMetric(rebased, rebased.field(phi2.values)))
        assert np.max(np.abs(twice.values - once.values)) < 1e-6


def test_robin_matches_direct_green_extraction(rng):
    # independent oracle: fit G_φ(p,q) + log d_φ(p,q)/2π near p on the grid carrying e^φ g
    mod = TorusModulus(0.0, 1.0)
    m_flat = ewald_robin(mod)
    ests = {}
    for n in (256, 512):
        g = TorusGrid(mod, n)
        xy = g.lattice_coords()
        phi = 0.4 * np.cos(2 * np.pi * xy[:, 0]) + 0.3 * np.sin(2 * np.pi * (xy[:, 0] + xy[:, 1]))
        cd = ConformalDiscretization(g, phi)
        m = robin_conformal(g.constant(m_flat), ConformalMetric(g, g.field(phi))).values
        for k, p in enumerate((g.node(0, 0), g.node(n // 4, n // 8), g.node(n // 2, 3 * n // 4),
                               g.node(3 * n // 4, n // 4), g.node(n // 8, n // 2))):
            delta = np.zeros(g.n_nodes)
            delta[p] = 1.0 / cd.weights[p]
            col = cd.inverse_laplacian(delta)
            r = g.displacement(p)
            d = np.hypot(r[:, 0], r[:, 1])
            h = g.spacing * (n / 256)
            sel = (d >= 8 * h) & (d <= 32 * h)
            # log d_φ = log d + φ(p)/2 + smooth terms absorbed by the polynomial fit
            y = col[sel] + np.log(d[sel]) / (2 * np.pi)
            coef, _ = local_poly_fit(r[sel], y, 6)
            ests.setdefault(k, []).append((coef[0] + phi[p] / (4 * np.pi), m[p]))
    for vals in ests.values():
        (c256, exact), (c512, _) = vals
        # Richardson in h² on a fixed physical window
        direct = (4 * c512 - c256) / 3
        assert abs(direct - exact) < 1e-4


def test_sphere_reference_examples():
    assert sphere_reference(1.0) == pytest.approx(ROBIN_UNIT_AREA, abs=1e-16)
    assert sphere_reference(4 * math.pi) == pytest.approx(4 * math.pi * ROBIN_UNIT_RADIUS,
                                                           abs=1e-14)
    assert sphere_reference(4 * math.pi) == pytest.approx(math.log(4) - 1, abs=1e-14)
    for A in (0.3, 1.0, 7.0):
        for c in (0.5, 2.0, 10.0):
            lhs = sphere_reference(c * A)
            rhs = c * sphere_reference(A) + c * A * math.log(c) / (4 * math.pi)
            assert lhs == pytest.approx(rhs, abs=1e-13)
    with pytest.raises(DomainError):
        sphere_reference(0.0)
    with pytest.raises(DomainError):
        delta_mass(1.0, -1.0)


def test_delta_mass_examples():
    assert delta_mass(ROBIN_UNIT_AREA, 1.0) == 0.0
    m = ewald_robin(TorusModulus(0.0, 1.0))
    assert delta_mass(m, 1.0) == pytest.approx(m - ROBIN_UNIT_AREA, abs=1e-16)
    t, A, c = -0.3, 1.7, 2.0
    scaled = delta_mass(c * t + c * A * math.log(c) / (4 * math.pi), c * A)
    assert scaled == pytest.approx(delta_mass(t, A), abs=1e-12)


def test_mass_report_invariant_and_json(torus):
    disc, m = torus
    rep = mass_of(m, ConformalMetric(disc, disc.constant(0.25)))
    assert rep.mass == pytest.approx((rep.trace - sphere_reference(rep.area)) / rep.area,
                                     abs=1e-15)
    data = json.loads(rep.to_json())
    assert set(data) >= {"trace", "area", "mass", "flags", "provenance"}
    assert data["mass"] == rep.mass


def test_dumps17_round_trips_floats():
    x = 0.1 + 0.2
    assert json.loads(dumps17({"x": x}))["x"] == x
    assert "0.30000000000000004" in dumps17({"x": x})


def test_conformal_metric_rejects_bad_area(torus):
    disc, _ = torus
    with pytest.raises(DomainError):
        ConformalMetric(disc, disc.constant(-800.0))


def test_report_from_trace():
    rep = MassReport.from_trace(ROBIN_UNIT_AREA, 1.0)
    assert rep.mass == 0.0
