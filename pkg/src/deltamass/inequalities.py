"""Logarithmic HLS and Moser–Trudinger–Onofri deficits at a conformal metric.

Both deficits are nonnegative for every ψ when the metric minimizes the mass
in its conformal class; elsewhere they are diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import ConformalMetric
from .errors import DomainError
from .fields import Discretization, Field

MAX_AMPLITUDE = 5.0


@dataclass(frozen=True)
class TestFunctionSpec:
    seed: int
    band: int = 3
    amplitude: float = 1.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 <= self.amplitude <= MAX_AMPLITUDE:
            raise DomainError(f"amplitude must lie in [0, {MAX_AMPLITUDE}]")
        if self.band < 1:
            raise DomainError("band must be at least 1")


def log_mean_exp(disc: Discretization, psi: np.ndarray) -> float:
    """log((1/A)∫e^ψ dA), with the maximum of ψ factored out."""
    c = float(np.max(psi))
    return math.log(disc.integral(np.exp(psi - c)) / disc.area) + c


def normalize_psi(disc: Discretization, psi: np.ndarray) -> np.ndarray:
    """Shift ψ so that ∫e^ψ dA = A."""
    return psi - log_mean_exp(disc, psi)


def _metric_values(metric: ConformalMetric, psi: Field):
    disc = metric.discretization()
    metric.base.check(psi)
    return disc, psi.values


def log_hls_deficit(metric: ConformalMetric, psi: Field) -> float:
    """(1/4π)∫ψe^ψ dA − (1/A)∫e^ψ Δ⁻¹e^ψ dA, for ψ with ∫e^ψ dA = A in the given metric."""
    disc, p = _metric_values(metric, psi)
    A = disc.area
    e = np.exp(p)
    if abs(disc.integral(e) - A) > 1e-10 * max(1.0, A):
        raise DomainError("log-HLS deficit needs ψ normalized to ∫e^ψ dA = A")
    return disc.integral(p * e) / (4 * math.pi) - disc.inner(e, disc.inverse_laplacian(e)) / A


def onofri_deficit(metric: ConformalMetric, psi: Field) -> float:
    """(1/16π)∫ψΔψ dA − log((1/A)∫e^ψ dA) + (1/A)∫ψ dA."""
    disc, p = _metric_values(metric, psi)
    A = disc.area
    return (disc.inner(p, disc.laplacian(p)) / (16 * math.pi) - log_mean_exp(disc, p)
            + disc.integral(p) / A)


def deficit_gap(metric: ConformalMetric, psi: Field) -> float:
    """The algebraic expression that onofri − log_hls must equal for normalized ψ."""
    disc, p = _metric_values(metric, psi)
    A = disc.area
    e = np.exp(p)
    return (disc.inner(p, disc.laplacian(p)) / (16 * math.pi)
            - disc.integral(p * e) / (4 * math.pi) + disc.integral(p) / A
            + disc.inner(e, disc.inverse_laplacian(e)) / A)


def random_psi(base: Discretization, spec: TestFunctionSpec) -> np.ndarray:
    """Smooth random test function with sup-norm ``spec.amplitude``.

    Grids use a low-band trigonometric polynomial; other discretizations use
    white noise passed three times through a heat-type smoother.
    """
    rng = np.random.default_rng(spec.seed)
    if hasattr(base, "lattice_coords"):
        from .torus import random_trig_field
        psi = random_trig_field(base, rng, band=spec.band, amplitude=1.0)
    elif hasattr(base, "random_field"):
        psi = base.random_field(rng, degree=spec.band, amplitude=1.0)
    else:
        smooth = base.preconditioner(1.0)
        psi = rng.standard_normal(base.n_nodes)
        for _ in range(3):
            psi = smooth(psi)
    psi = psi - base.integral(psi) / base.area
    return spec.amplitude * psi / max(float(np.max(np.abs(psi))), 1e-300)


def sample_deficits(metric: ConformalMetric, n: int, seed: int, band: int = 3,
                    amplitude: float = 1.0):
    """Rows (sample seed, log-HLS deficit, Onofri deficit) for n random ψ.

    Per-sample seeds come from a ``SeedSequence`` spawned off the master seed.
    """
    disc = metric.discretization()
    rows = []
    for child in np.random.SeedSequence(seed).spawn(n):
        s = int(child.generate_state(1)[0])
        psi = random_psi(metric.base, TestFunctionSpec(s, band, amplitude))
        psi = normalize_psi(disc, psi)
        f = metric.base.field(psi)
        rows.append((s, log_hls_deficit(metric, f), onofri_deficit(metric, f)))
    return rows


def summarize(rows, floor: float = -1e-8) -> dict:
    hls = np.array([r[1] for r in rows])
    ono = np.array([r[2] for r in rows])
    return {
        "samples": len(rows),
        "hls_min": float(hls.min()), "hls_mean": float(hls.mean()),
        "onofri_min": float(ono.min()), "onofri_mean": float(ono.mean()),
        "violations": int(np.sum(hls < floor) + np.sum(ono < floor)),
    }
