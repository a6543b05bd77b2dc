import numpy as np
import pytest

from deltamass.errors import DomainError, DomainMismatchError
from deltamass.fields import Field, Quadrature, integrate, mean_zero, read_field_csv, write_field_csv
from deltamass.torus import TorusGrid, random_trig_field


def test_integrate_constant_on_unit_torus(grid64):
    assert integrate(grid64.constant(1.0), grid64.quadrature) == pytest.approx(1.0, abs=1e-14)


def test_integrate_constant_on_area_a():
    q = Quadrature(np.full(10, 0.3), "ten")
    assert integrate(Field(np.full(10, 2.5), "ten"), q) == pytest.approx(7.5, rel=1e-15)


def test_integrate_refinement_self_oracle(square):
    # a trigonometric polynomial of low degree is integrated exactly on both grids
    def f(g):
        xy = g.lattice_coords()
        return 0.7 + np.cos(2 * np.pi * (xy[:, 0] + 2 * xy[:, 1])) + np.sin(6 * np.pi * xy[:, 1])

    coarse, fine = TorusGrid(square, 64), TorusGrid(square, 256)
    a = integrate(coarse.field(f(coarse)), coarse.quadrature)
    b = integrate(fine.field(f(fine)), fine.quadrature)
    assert abs(a - b) < 1e-10
    assert a == pytest.approx(0.7, abs=1e-12)


def test_mismatched_domains_raise(grid64, square):
    other = TorusGrid(square, 32)
    with pytest.raises(DomainMismatchError):
        integrate(other.constant(1.0), grid64.quadrature)
    with pytest.raises(DomainMismatchError):
        mean_zero(other.constant(1.0), grid64.quadrature)
    with pytest.raises(DomainMismatchError):
        grid64.constant(1.0) + other.constant(1.0)


def test_mean_zero_examples(grid64, rng):
    q = grid64.quadrature
    assert np.all(mean_zero(grid64.constant(5.0), q).values == 0)
    f = grid64.field(random_trig_field(grid64, rng))
    f0 = mean_zero(f, q)
    assert abs(integrate(f0, q)) < 1e-12
    np.testing.assert_allclose(mean_zero(f0, q).values, f0.values, atol=1e-15)
    g = grid64.field(rng.standard_normal(grid64.n_nodes))
    g0 = mean_zero(g, q)
    assert abs(integrate(g0, q)) < 1e-12
    np.testing.assert_allclose(g0.values + integrate(g, q) / q.total_area, g.values, atol=1e-14)


def test_integrate_is_linear(grid64, rng):
    q = grid64.quadrature
    f = grid64.field(rng.standard_normal(grid64.n_nodes))
    g = grid64.field(rng.standard_normal(grid64.n_nodes))
    lhs = integrate(2.5 * f - 0.75 * g, q)
    rhs = 2.5 * integrate(f, q) - 0.75 * integrate(g, q)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_field_rejects_non_finite_values():
    with pytest.raises(DomainError):
        Field(np.array([1.0, np.nan]), "x")


def test_field_is_immutable(grid64):
    f = grid64.constant(1.0)
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_quadrature_requires_positive_weights():
    with pytest.raises(DomainError):
        Quadrature(np.array([1.0, 0.0]), "x")


def test_field_csv_round_trip(tmp_path, grid64, rng):
    f = grid64.field(rng.standard_normal(grid64.n_nodes))
    path = tmp_path / "f.csv"
    write_field_csv(path, f, {"note": "test"})
    first = path.read_text().splitlines()[0]
    assert first == f"# discretization={grid64.id} nodes={grid64.n_nodes}"
    g, header = read_field_csv(path)
    assert g.domain == f.domain and header["note"] == "test"
    np.testing.assert_array_equal(g.values, f.values)


def test_field_csv_rejects_missing_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# discretization=x nodes=3\nindex,value\n0,1.0\n1,2.0\n")
    with pytest.raises(DomainError):
        read_field_csv(path)
