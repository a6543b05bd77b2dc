"""Invariant suites behind the ``verify`` command; each returns one pass/fail row."""

from __future__ import annotations

import math

import numpy as np

from .errors import DeltaMassError


def _row(name, checks: dict, tol: dict) -> dict:
    passed = all(abs(checks[k]) <= tol[k] if k in tol else bool(checks[k]) for k in checks)
    return {"suite": name, "passed": bool(passed), "details": checks}


def _guard(name, fn):
    try:
        return fn()
    except DeltaMassError as exc:
        return {"suite": name, "passed": False,
                "details": {"error": f"{type(exc).__name__}: {exc}"}}


def torus_suite(tau: complex, n: int = 128) -> dict:
    from .torus import (TorusGrid, TorusModulus, ewald_robin, green_column, green_residual,
                        grid_robin)
    mod = TorusModulus.from_complex(tau)
    o1 = ewald_robin(mod)
    o2 = grid_robin(mod)
    shift = ewald_robin(TorusModulus.from_complex(tau + 1))
    inv = ewald_robin(TorusModulus.from_complex(-1 / tau))
    grid = TorusGrid(mod, n)
    rng = np.random.default_rng(0)
    p, q = rng.integers(grid.n_nodes, size=2)
    gp, gq = green_column(grid, p).values, green_column(grid, q).values
    checks = {
        "ewald_vs_grid": o1 - o2.value,
        "shift_invariance": shift - o1,
        "inversion_invariance": inv - o1,
        "green_symmetry": gp[q] - gq[p],
        "green_mean": grid.integral(gp),
        "green_residual": green_residual(grid, int(p)),
    }
    tol = {"ewald_vs_grid": 1e-5, "shift_invariance": 1e-10, "inversion_invariance": 1e-10,
           "green_symmetry": 1e-9, "green_mean": 1e-10, "green_residual": 1e-8}
    return _row(f"torus:{tau.real:g}{tau.imag:+g}i", checks, tol)


def sphere_suite(n_theta: int = 64, seed: int = 0) -> dict:
    from .conformal import ConformalMetric, conformal_curvature, mass_of
    from .sphere import (ROBIN_UNIT_AREA, SphereQuadrature, adm_identity_residual,
                         green_zero_mean, robin_from_quadrature, sphere_robin)
    sq = SphereQuadrature(n_theta)
    rng = np.random.default_rng(seed)
    phi = sq.field(sq.random_field(rng, 4, 0.5))
    m = sq.constant(ROBIN_UNIT_AREA)
    K = conformal_curvature(sq, phi.values)
    checks = {
        "kernel_robin": sphere_robin() - ROBIN_UNIT_AREA,
        "quadrature_robin": robin_from_quadrature(n_theta) - ROBIN_UNIT_AREA,
        "green_mean": green_zero_mean(sq),
        "round_mass": mass_of(m, ConformalMetric(sq, sq.constant(0.0))).mass,
        "conformal_identity": float(np.max(np.abs(adm_identity_residual(sq, phi).values))),
        "gauss_bonnet": sq.integral(K * np.exp(phi.values)) - 4 * math.pi,
        "positive_mass": mass_of(m, ConformalMetric(sq, phi)).mass > 0,
    }
    tol = {"kernel_robin": 1e-8, "quadrature_robin": 1e-8, "green_mean": 1e-10,
           "round_mass": 1e-8, "conformal_identity": 1e-8, "gauss_bonnet": 1e-6}
    return _row("sphere", checks, tol)


def mesh_suite(name: str, mesh) -> dict:
    from .mesh import MeshDiscretization, mesh_green_column, mesh_green_residual
    disc = MeshDiscretization.from_mesh(mesh)
    chi = 2 - 2 * disc.mesh.genus
    p, q = 0, disc.n_nodes // 2
    gp = mesh_green_column(disc, p).values
    gq = mesh_green_column(disc, q).values
    checks = {
        "gauss_bonnet": disc.integral(disc.curvature()) - 2 * math.pi * chi,
        "green_symmetry": gp[q] - gq[p],
        "green_mean": disc.integral(gp),
        "green_residual": mesh_green_residual(disc, p),
    }
    tol = {"gauss_bonnet": 1e-9, "green_symmetry": 1e-9, "green_mean": 1e-10,
           "green_residual": 1e-6}
    return _row(f"mesh:{name}", checks, tol)


def mesh_file_suite(path) -> dict:
    from .mesh import read_off
    return mesh_suite(str(path), read_off(path))


def gradient_suite(n: int = 64, seed: int = 0) -> dict:
    from .meanfield import MeanFieldProblem, functional_J, gradient_J
    from .torus import TorusGrid, TorusModulus, flat_robin, random_trig_field
    mod = TorusModulus(0.0, 1.0)
    grid = TorusGrid(mod, n)
    prob = MeanFieldProblem.from_robin(grid, grid.constant(flat_robin(mod)))
    rng = np.random.default_rng(seed)
    u = random_trig_field(grid, rng, 3, 1.0)
    g = gradient_J(prob, u).values
    worst = 0.0
    eps = 1e-5
    for _ in range(10):
        v = random_trig_field(grid, rng, 3, 1.0)
        fd = (functional_J(prob, u + eps * v) - functional_J(prob, u - eps * v)) / (2 * eps)
        an = grid.inner(g, v)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
    return _row("meanfield:gradient", {"relative_error": worst}, {"relative_error": 1e-6})


def reproducibility_suite(seed: int = 0) -> dict:
    from .conformal import ConformalMetric, mass_of
    from .torus import TorusGrid, TorusModulus, flat_robin, random_trig_field

    def run():
        mod = TorusModulus(0.5, math.sqrt(3) / 2)
        grid = TorusGrid(mod, 64)
        phi = random_trig_field(grid, np.random.default_rng(seed), 3, 0.5)
        return mass_of(grid.constant(flat_robin(mod)), ConformalMetric(grid, grid.field(phi))).to_json()

    return _row("reproducibility", {"identical": run() == run()}, {})


DEFAULT_TAUS = (1j, complex(0.5, math.sqrt(3) / 2), 3j)


def run_suites(cfg) -> list:
    from .mesh import genus2_mesh, icosphere
    n = int(cfg.n1)
    rows = [_guard(f"torus:{t}", lambda t=t: torus_suite(t, n)) for t in DEFAULT_TAUS]
    rows.append(_guard("sphere", lambda: sphere_suite(64, int(cfg.seed))))
    rows.append(_guard("mesh:icosphere", lambda: mesh_suite("icosphere", icosphere(3))))
    rows.append(_guard("mesh:genus2", lambda: mesh_suite("genus2", genus2_mesh())))
    if cfg.options.get("file"):
        rows.append(_guard(f"mesh:{cfg.file}", lambda: mesh_file_suite(cfg.file)))
    rows.append(_guard("meanfield:gradient", lambda: gradient_suite(64, int(cfg.seed))))
    rows.append(_guard("reproducibility", lambda: reproducibility_suite(int(cfg.seed))))
    return rows
