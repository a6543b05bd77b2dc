import csv
import math

import numpy as np
import pytest

from deltamass.errors import DomainError
from deltamass.meanfield import (SPHERE_J_THRESHOLD, MeanFieldProblem, SolverOptions,
                                 bound_2_4_check, bound_2_4_threshold, certified,
                                 djlw_hypothesis, eq23_residual, functional_J, gradient_J,
                                 make_state, normalize, solve_mean_field, write_history)
from deltamass.sphere import SphereQuadrature
from deltamass.torus import TorusGrid, TorusModulus, ewald_robin, random_trig_field

from conftest import sphere_counterexample


@pytest.fixture(scope="module")
def flat():
    mod = TorusModulus(0.0, 1.0)
    g = TorusGrid(mod, 64)
    return MeanFieldProblem.from_robin(g, g.constant(ewald_robin(mod)))


@pytest.fixture(scope="module")
def bumpy():
    # non-constant weight with a comfortable existence margin
    mod = TorusModulus(0.2, 1.1)
    g = TorusGrid(mod, 64)
    logh = random_trig_field(g, np.random.default_rng(7), 1, 0.3)
    return MeanFieldProblem(g, g.field(np.exp(logh)), g.constant(ewald_robin(mod)))


def test_constant_solution_is_critical(flat):
    m = flat.m_g.values[0]
    u = np.full(flat.disc.n_nodes, 4 * math.pi * m)
    assert eq23_residual(flat, u) < 1e-12
    assert np.max(np.abs(gradient_J(flat, u).values)) < 1e-13
    # J at the flat metric is 4π times its trace
    assert functional_J(flat, u) == pytest.approx(4 * math.pi * m, abs=1e-13)
    np.testing.assert_allclose(normalize(flat, np.zeros(flat.disc.n_nodes)), u, atol=1e-13)


def test_J_is_shift_invariant(bumpy, rng):
    u = random_trig_field(bumpy.disc, rng, 3, 1.0)
    assert functional_J(bumpy, u + 3.7) == pytest.approx(functional_J(bumpy, u), abs=1e-12)


def test_gradient_matches_central_differences(bumpy, rng):
    u = random_trig_field(bumpy.disc, rng, 3, 1.0)
    g = gradient_J(bumpy, u).values
    eps = 1e-5
    for _ in range(5):
        v = random_trig_field(bumpy.disc, rng, 3, 1.0)
        fd = (functional_J(bumpy, u + eps * v) - functional_J(bumpy, u - eps * v)) / (2 * eps)
        an = bumpy.disc.inner(g, v)
        assert abs(fd - an) < 1e-6 * abs(an)


def test_J_overflow_guarded(bumpy):
    u = np.full(bumpy.disc.n_nodes, 800.0)
    assert math.isfinite(functional_J(bumpy, u))


def test_hypothesis_constant_weight_on_flat_torus(flat):
    rep = djlw_hypothesis(flat)
    assert rep.passed
    assert rep.margin == pytest.approx(8 * math.pi, abs=1e-9)
    # every node ties for the maximum of a constant function
    assert len(rep.nodes) == flat.disc.n_nodes


def test_hypothesis_manufactured_counterexample_fails():
    prob = sphere_counterexample()
    rep = djlw_hypothesis(prob)
    assert not rep.passed
    assert rep.margin == pytest.approx(-1.0, abs=1e-6)
    with pytest.raises(DomainError):
        solve_mean_field(prob)


def test_bound_threshold_for_constant_weight(flat):
    assert bound_2_4_threshold(flat) == pytest.approx(SPHERE_J_THRESHOLD, abs=1e-12)
    st = make_state(flat, normalize(flat, np.zeros(flat.disc.n_nodes)))
    ok, margin = bound_2_4_check(st, flat)
    assert ok and margin == pytest.approx(SPHERE_J_THRESHOLD - st.J_value, abs=1e-14)


def test_solver_converges_on_nonconstant_weight(bumpy):
    assert djlw_hypothesis(bumpy).passed
    best, states = solve_mean_field(bumpy, SolverOptions(tol=1e-9), return_all=True)
    assert best.residual_2_3 < 1e-9
    assert best.normalized
    assert all(best.J_value <= s.J_value for s in states)
    for st in states:
        J = [row[1] for row in st.history]
        # non-increasing up to rounding of J itself
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(J, J[1:]))


def test_solver_does_not_beat_constant_on_square_torus(flat):
    st = solve_mean_field(flat)
    J_const = functional_J(flat, normalize(flat, np.zeros(flat.disc.n_nodes)))
    assert st.J_value <= J_const + 1e-12 * abs(J_const)
    assert st.residual_2_3 < 1e-8


def test_minimizer_on_long_torus_is_not_constant(minimizer_3i):
    m = ewald_robin(TorusModulus(0.0, 3.0))
    st = minimizer_3i.state
    assert st.J_value < 4 * math.pi * m - 1e-6
    assert np.ptp(st.u.values) > 1e-3
    assert certified(minimizer_3i.report)
    # the Robin field of a critical metric is constant although φ is not
    assert np.ptp(minimizer_3i.robin.values) < 1e-4
    assert np.ptp(minimizer_3i.metric.phi.values) > 1e-2


def test_options_from_dict():
    o = SolverOptions.from_dict({"tol": 1e-6, "starts": ["constant"], "unknown": 1})
    assert o.tol == 1e-6 and o.starts == ("constant",)


def test_history_written_with_full_precision(tmp_path, flat):
    st = solve_mean_field(flat, SolverOptions(starts=("random:3",)))
    path = tmp_path / "h.csv"
    write_history(path, st.history, {"config_hash": "abc"})
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["iter", "J", "grad_norm", "residual"]
    assert float(rows[-1][1]) == st.history[-1][1]


def test_problem_rejects_nonpositive_weight(flat):
    with pytest.raises(DomainError):
        MeanFieldProblem(flat.disc, flat.disc.constant(0.0), flat.m_g)


def test_problem_requires_unit_area():
    sq = SphereQuadrature(16)
    from deltamass.conformal import ConformalDiscretization
    big = ConformalDiscretization(sq, np.full(sq.n_nodes, 1.0))
    with pytest.raises(DomainError):
        MeanFieldProblem(big, big.constant(1.0), big.constant(0.0))
