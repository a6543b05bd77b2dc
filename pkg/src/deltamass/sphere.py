"""Unit-area round sphere: Gauss–Legendre × uniform quadrature and spherical harmonics.

The unit-area sphere has radius r = 1/sqrt(4π), Gaussian curvature 4π and
Laplacian eigenvalues 4π l(l+1).  Its Green's function is the unit-sphere
kernel −(1/4π)[log((1 − cos θ)/2) + 1] (scaling the metric by a constant does
not change G), and the Robin constant is (−1 − log π)/(4π).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import sph_legendre_p_all

from .errors import AccuracyError, DomainError, SingularityError
from .fields import Discretization, Field

RADIUS = 1.0 / math.sqrt(4 * math.pi)
CURVATURE = 4 * math.pi
ROBIN_UNIT_AREA = (-1.0 - math.log(math.pi)) / (4 * math.pi)
ROBIN_UNIT_RADIUS = (math.log(4.0) - 1.0) / (4 * math.pi)


class SphereQuadrature(Discretization):
    """Tensor quadrature: Gauss–Legendre in cos θ, uniform in φ, total weight 1.

    Spherical harmonics up to degree ``n_theta − 1`` are resolved; ``n_phi``
    defaults to ``2 n_theta``.  Node index is ``i * n_phi + j``.
    """

    def __init__(self, n_theta: int, n_phi: int | None = None):
        n_phi = 2 * n_theta if n_phi is None else n_phi
        if n_theta < 2 or n_phi < 2 * n_theta - 1:
            raise DomainError(f"need n_theta >= 2 and n_phi >= 2 n_theta - 1 (got {n_theta}, {n_phi})")
        self.n_theta, self.n_phi = int(n_theta), int(n_phi)
        self.id = f"sphere[{self.n_theta}x{self.n_phi}]"
        x, wx = np.polynomial.legendre.leggauss(self.n_theta)
        order = np.argsort(-x)  # north to south
        self.cos_theta = x[order]
        self.theta = np.arccos(self.cos_theta)
        self.phi = 2 * math.pi * np.arange(self.n_phi) / self.n_phi
        self._wtheta = wx[order] * (2 * math.pi / self.n_phi)  # unit-sphere weights per ring node
        w = np.repeat(self._wtheta / (4 * math.pi), self.n_phi)
        w.setflags(write=False)
        self._w = w
        self.lmax = self.n_theta - 1
        self.mmax = min(self.lmax, self.n_phi // 2 - 1)
        P = sph_legendre_p_all(self.lmax, self.lmax, self.theta)[0]
        # P[l, m, i] for m >= 0
        self._P = np.ascontiguousarray(P[:, : self.mmax + 1, :])
        ell = np.arange(self.lmax + 1)
        self.eigenvalues = 4 * math.pi * ell * (ell + 1.0)

    @property
    def weights(self):
        return self._w

    # -- spherical harmonic transform ------------------------------------
    def analyze(self, values) -> np.ndarray:
        """Coefficients a[l, m] (m >= 0) w.r.t. unit-sphere orthonormal Y_lm."""
        f = np.asarray(values, dtype=float).reshape(self.n_theta, self.n_phi)
        F = np.fft.rfft(f, axis=1)[:, : self.mmax + 1] * (2 * math.pi / self.n_phi)
        return np.einsum("lmi,i,im->lm", self._P, self._wtheta * self.n_phi / (2 * math.pi), F)

    def synthesize(self, coef: np.ndarray) -> np.ndarray:
        c = np.einsum("lm,lmi->im", coef, self._P)
        X = np.zeros((self.n_theta, self.n_phi // 2 + 1), dtype=complex)
        X[:, : self.mmax + 1] = c * self.n_phi
        # irfft(X) = c_0 + 2 Re Σ_{m>0} c_m e^{imφ}
        return np.fft.irfft(X, n=self.n_phi, axis=1).ravel()

    def _apply(self, values, mult):
        a = self.analyze(values) * mult[:, None]
        return self.synthesize(a)

    def laplacian(self, values):
        return self._apply(values, self.eigenvalues)

    def inverse_laplacian(self, values):
        inv = np.zeros_like(self.eigenvalues)
        inv[1:] = 1.0 / self.eigenvalues[1:]
        return self._apply(values, inv)

    def preconditioner(self, delta):
        mult = 1.0 / (delta + self.eigenvalues / (8 * math.pi))
        return lambda r: self._apply(r, mult)

    def project(self, values):
        """Orthogonal projection onto the resolved spherical harmonics."""
        return self._apply(values, np.ones_like(self.eigenvalues))

    # -- geometry ---------------------------------------------------------
    def unit_vectors(self) -> np.ndarray:
        st = np.sin(self.theta)
        x = np.outer(st, np.cos(self.phi))
        y = np.outer(st, np.sin(self.phi))
        z = np.outer(self.cos_theta, np.ones(self.n_phi))
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def distance_from(self, node):
        v = self.unit_vectors()
        c = np.clip(v @ v[node], -1.0, 1.0)
        return RADIUS * np.arccos(c)

    def curvature(self):
        return np.full(self.n_nodes, CURVATURE)

    def random_field(self, rng: np.random.Generator, degree: int = 4,
                     amplitude: float = 1.0) -> np.ndarray:
        """Random real band-limited field (degrees 1..degree) with sup-norm ``amplitude``."""
        if degree > self.lmax:
            raise DomainError(f"degree {degree} exceeds resolved degree {self.lmax}")
        a = np.zeros((self.lmax + 1, self.mmax + 1), dtype=complex)
        for l in range(1, degree + 1):
            a[l, 0] = rng.standard_normal()
            for m in range(1, min(l, self.mmax) + 1):
                a[l, m] = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2)
        f = self.synthesize(a)
        return f * (amplitude / np.max(np.abs(f)))

    def zonal_integral(self, profile) -> float:
        """∫ profile(t) dA over the unit-area sphere for a function of t = (1 − cos θ)/2.

        θ is the angle from an arbitrary centre.  The rule substitutes t = s⁴
        and uses ``n_theta`` Gauss–Legendre nodes in s, which resolves
        logarithmic singularities at the centre.
        """
        s, ws = np.polynomial.legendre.leggauss(self.n_theta)
        s = 0.5 * (s + 1.0)
        ws = 0.5 * ws
        t = s ** 4
        # dA = 2π r² sinθ dθ = 4π r² dt = dt on the unit-area sphere
        return float(np.sum(ws * 4 * s ** 3 * profile(t)))


def _as_unit(p):
    p = np.asarray(p, dtype=float)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def sphere_green(p, q) -> float | np.ndarray:
    """Green's function of the unit-area round sphere between unit vectors p, q."""
    p, q = _as_unit(p), _as_unit(q)
    c = np.clip(np.sum(p * q, axis=-1), -1.0, 1.0)
    t = (1.0 - c) / 2.0
    # points closer than rounding of the normalized dot product count as equal
    if np.any(t <= 4 * np.finfo(float).eps):
        raise SingularityError("sphere_green evaluated at p = q")
    return -(np.log(t) + 1.0) / (4 * math.pi)


def sphere_robin(tol: float = 1e-10) -> float:
    """Finite part of the closed-form kernel: lim G(θ) + log(rθ)/2π on the unit-area sphere.

    Evaluated along a geometric sequence θ → 0 with Richardson extrapolation
    in θ² (the error term is even in θ), and checked against (−1 − log π)/4π.
    """
    north = np.array([0.0, 0.0, 1.0])
    thetas = 0.02 / 2.0 ** np.arange(5)
    vals = []
    for th in thetas:
        q = np.array([math.sin(th), 0.0, math.cos(th)])
        vals.append(sphere_green(north, q) + math.log(RADIUS * th) / (2 * math.pi))
    table = list(vals)
    for k in range(1, len(table)):
        f = 4.0 ** k
        table = [(f * b - a) / (f - 1) for a, b in zip(table, table[1:])]
    m = float(table[-1])
    if abs(m - ROBIN_UNIT_AREA) > tol:
        raise AccuracyError("kernel finite part disagrees with (-1 - log π)/4π",
                            {"kernel": m, "closed_form": ROBIN_UNIT_AREA})
    return m


def robin_from_quadrature(n_theta: int = 64) -> float:
    """Robin constant from the kernel shape and zero-mean normalization alone.

    Take G(θ) = −(1/4π) log t + C with t = (1 − cos θ)/2, fix C by requiring
    ∫G dA = 0 with the graded polar quadrature, then add the finite part of
    −(1/4π) log t + (1/2π) log d, which is (1/2π) log(2r).
    """
    sq = SphereQuadrature(n_theta)
    mean_log = sq.zonal_integral(lambda t: -np.log(t) / (4 * math.pi))
    c = -mean_log
    return c + math.log(2 * RADIUS) / (2 * math.pi)


def green_zero_mean(sq: SphereQuadrature) -> float:
    """∫ sphere_green(p, ·) dA computed with the sphere's graded polar rule."""
    return sq.zonal_integral(lambda t: -(np.log(t) + 1.0) / (4 * math.pi))


def adm_identity_residual(sq: SphereQuadrature, phi: Field) -> Field:
    """Pointwise m_g − (1/2π)Δ_g⁻¹K_g − trace Δ_g⁻¹/A_g for g = e^φ·(round).

    Vanishes (to discretization accuracy) for every conformal sphere metric.
    """
    from .conformal import (ConformalDiscretization, ConformalMetric, conformal_curvature,
                            robin_conformal, trace_conformal)

    sq.check(phi)
    base_m = sq.constant(ROBIN_UNIT_AREA)
    cm = ConformalMetric(sq, phi)
    m = robin_conformal(base_m, cm).values
    trace = trace_conformal(base_m, cm)
    g = ConformalDiscretization(sq, phi.values)
    K = conformal_curvature(sq, phi.values)
    res = m - g.inverse_laplacian(K) / (2 * math.pi) - trace / cm.area_phi
    return sq.field(res)
