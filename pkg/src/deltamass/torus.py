"""Flat unit-area torus C/(Z + τZ): spectral grid, Green's function, Robin constant.

Nodes sit at lattice coordinates (j/n1, k/n2) ∈ [0,1)²; the physical point is
z = (x + yτ)/sqrt(Im τ), so the metric in lattice coordinates is
((1, Re τ), (Re τ, |τ|²))/Im τ with unit determinant.  The mode
exp(2πi(mx + ny)) is an eigenfunction of the (positive) Laplacian with
eigenvalue 4π²|mτ − n|²/Im τ.

The Robin constant of the flat torus is computed two independent ways:

* :func:`ewald_robin`: Ewald splitting of the continuum lattice sum;
* :func:`grid_robin`: singularity subtraction on spectral grid Green
  columns, Richardson-extrapolated in the grid size and fitted locally.

:func:`eta_robin` is a Dedekind-eta closed form, used only as a third check.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .errors import AccuracyError, DomainError
from .fields import Discretization, Field

log = logging.getLogger(__name__)

EWALD_ALPHA = math.pi
_TAIL = 40.0  # exp(-40) ~ 4e-18


@dataclass(frozen=True)
class TorusModulus:
    re_tau: float
    im_tau: float

    def __post_init__(self):
        if not (math.isfinite(self.re_tau) and math.isfinite(self.im_tau)):
            raise DomainError("torus modulus must be finite")
        if self.im_tau <= 0:
            raise DomainError(f"Im τ must be positive, got {self.im_tau}")
        if self.im_tau > 20 or self.im_tau < 0.05:
            warnings.warn(f"thin torus (Im τ = {self.im_tau}): grids are ill-conditioned",
                          RuntimeWarning, stacklevel=2)

    @classmethod
    def from_complex(cls, tau: complex) -> "TorusModulus":
        return cls(float(tau.real), float(tau.imag))

    @property
    def tau(self) -> complex:
        return complex(self.re_tau, self.im_tau)

    def basis(self) -> np.ndarray:
        """Columns are the unit-area lattice generators 1/√Imτ and τ/√Imτ."""
        s = math.sqrt(self.im_tau)
        return np.array([[1.0, self.re_tau], [0.0, self.im_tau]]) / s

    def shortest_vector(self) -> float:
        B = self.basis()
        best = np.inf
        for a in range(-4, 5):
            for b in range(-4, 5):
                if a or b:
                    best = min(best, float(np.hypot(*(B @ (a, b)))))
        return best


def _lattice_points(basis: np.ndarray, rmax: float) -> np.ndarray:
    """All lattice vectors (columns of ``basis`` integer combos) with |v| <= rmax."""
    gram_inv = np.linalg.inv(basis.T @ basis)
    b1 = int(math.ceil(rmax * math.sqrt(gram_inv[0, 0]))) + 1
    b2 = int(math.ceil(rmax * math.sqrt(gram_inv[1, 1]))) + 1
    a, c = np.meshgrid(np.arange(-b1, b1 + 1), np.arange(-b2, b2 + 1), indexing="ij")
    v = a.reshape(-1, 1) * basis[:, 0] + c.reshape(-1, 1) * basis[:, 1]
    return v[np.einsum("ij,ij->i", v, v) <= rmax * rmax]


def ewald_green(modulus: TorusModulus, r, alpha: float = EWALD_ALPHA) -> np.ndarray:
    """Continuum zero-mean Green's function of the unit-area flat torus.

    ``r`` is an array of physical displacement vectors with shape (..., 2);
    none may be a lattice point.
    """
    r = np.asarray(r, dtype=float)
    shape = r.shape[:-1]
    r = r.reshape(-1, 2)
    B = modulus.basis()
    # reduce into the fundamental cell so a fixed real-space ball suffices
    coef = np.linalg.solve(B, r.T).T
    r = (coef - np.round(coef)) @ B.T
    rad = math.sqrt(_TAIL / alpha)
    R = _lattice_points(B, rad + float(np.max(np.hypot(r[:, 0], r[:, 1]), initial=0.0)))
    K = _lattice_points(2 * math.pi * np.linalg.inv(B).T, math.sqrt(4 * alpha * _TAIL))
    k2 = np.einsum("ij,ij->i", K, K)
    K, k2 = K[k2 > 0], k2[k2 > 0]
    out = np.empty(len(r))
    for i, ri in enumerate(r):
        d2 = np.einsum("ij,ij->i", ri + R, ri + R)
        if np.any(d2 == 0):
            raise DomainError("Green's function evaluated at a lattice point")
        out[i] = (exp1(alpha * d2).sum() / (4 * math.pi) - 1 / (4 * alpha)
                  + np.sum(np.exp(-k2 / (4 * alpha)) / k2 * np.cos(K @ ri)))
    return out.reshape(shape)


@functools.lru_cache(maxsize=256)
def _ewald_robin(re_tau: float, im_tau: float, alpha: float) -> float:
    mod = TorusModulus(re_tau, im_tau)
    B = mod.basis()
    R = _lattice_points(B, math.sqrt(_TAIL / alpha))
    r2 = np.einsum("ij,ij->i", R, R)
    r2 = np.sort(r2[r2 > 0])
    K = _lattice_points(2 * math.pi * np.linalg.inv(B).T, math.sqrt(4 * alpha * _TAIL))
    k2 = np.einsum("ij,ij->i", K, K)
    k2 = np.sort(k2[k2 > 0])
    # G(r) + log|r|/2π → -(γ + log α)/4π + lattice sums as r → 0
    return float(-(np.euler_gamma + math.log(alpha)) / (4 * math.pi)
                 + exp1(alpha * r2[::-1]).sum() / (4 * math.pi)
                 - 1 / (4 * alpha)
                 + np.sum((np.exp(-k2 / (4 * alpha)) / k2)[::-1]))


def ewald_robin(modulus: TorusModulus, alpha: float = EWALD_ALPHA) -> float:
    """Robin constant of the unit-area flat torus by Ewald summation.

    The result is independent of the splitting parameter ``alpha``; the
    absolute accuracy is at the 1e-15 level.
    """
    return _ewald_robin(modulus.re_tau, modulus.im_tau, float(alpha))


def dedekind_eta(tau: complex) -> complex:
    q = np.exp(2j * np.pi * tau)
    n = 1
    prod = 1.0 + 0j
    qn = q
    while abs(qn) > 1e-18 and n < 10_000:
        prod *= 1 - qn
        n += 1
        qn = q ** n
    return np.exp(1j * np.pi * tau / 12) * prod


def eta_robin(modulus: TorusModulus) -> float:
    """Closed form -(1/2π) log(2π √Im τ |η(τ)|²); agrees with :func:`ewald_robin`."""
    eta = dedekind_eta(modulus.tau)
    return -math.log(2 * math.pi * math.sqrt(modulus.im_tau) * abs(eta) ** 2) / (2 * math.pi)


def flat_robin(modulus: TorusModulus, verify: bool = False, tol: float = 1e-5) -> float:
    """Robin constant m_flat(τ) (constant in p) of the unit-area flat torus.

    Computed by Ewald summation.  With ``verify=True`` the grid extraction
    of :func:`grid_robin` is run as well, and an :class:`AccuracyError` carrying
    both estimates is raised if they differ by more than ``tol``.
    """
    m1 = ewald_robin(modulus)
    if verify:
        est = grid_robin(modulus)
        if abs(est.value - m1) > tol:
            raise AccuracyError(f"Ewald and grid Robin constants disagree for τ={modulus.tau}",
                                {"ewald": m1, "grid": est.value, "grid_error": est.error})
    return m1


class TorusGrid(Discretization):
    """Periodic n1 × n2 grid on the unit-area flat torus with spectral calculus."""

    def __init__(self, modulus: TorusModulus, n1: int, n2: int | None = None):
        n2 = n1 if n2 is None else n2
        for n in (n1, n2):
            if n < 8 or n % 2:
                raise DomainError(f"grid sizes must be even and >= 8, got {n1}x{n2}")
        self.modulus = modulus
        self.n1, self.n2 = int(n1), int(n2)
        self.id = f"torus[{modulus.re_tau!r},{modulus.im_tau!r};{self.n1}x{self.n2}]"
        t = modulus.tau
        self.metric_tensor = np.array([[1.0, t.real], [t.real, abs(t) ** 2]]) / t.imag
        m = np.fft.fftfreq(self.n1, 1.0 / self.n1)
        n = np.fft.fftfreq(self.n2, 1.0 / self.n2)
        M, N = np.meshgrid(m, n, indexing="ij")
        lam = 4 * math.pi ** 2 * np.abs(M * t - N) ** 2 / t.imag
        # Nyquist modes: symmetrize so the operator maps real fields to real fields
        lam = 0.5 * (lam + self._mirror(lam))
        self.eigenvalues = lam
        inv = np.zeros_like(lam)
        inv[lam > 0] = 1.0 / lam[lam > 0]
        self._inv = inv
        self._w = np.full(self.n1 * self.n2, 1.0 / (self.n1 * self.n2))
        self._w.setflags(write=False)
        self._green0 = None

    @staticmethod
    def _mirror(a):
        return np.roll(a[::-1, ::-1], 1, axis=(0, 1))

    @property
    def weights(self):
        return self._w

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def spacing(self) -> float:
        """Square root of the area per node."""
        return 1.0 / math.sqrt(self.n1 * self.n2)

    def _spec(self, values, mult):
        f = np.asarray(values, dtype=float).reshape(self.shape)
        return np.fft.ifft2(mult * np.fft.fft2(f)).real.ravel()

    def laplacian(self, values):
        return self._spec(values, self.eigenvalues)

    def inverse_laplacian(self, values):
        return self._spec(values, self._inv)

    def preconditioner(self, delta):
        mult = 1.0 / (delta + self.eigenvalues / (8 * math.pi))
        return lambda r: self._spec(r, mult)

    def lattice_coords(self) -> np.ndarray:
        j, k = np.meshgrid(np.arange(self.n1) / self.n1, np.arange(self.n2) / self.n2,
                           indexing="ij")
        return np.stack([j.ravel(), k.ravel()], axis=1)

    def physical_coords(self) -> np.ndarray:
        return self.lattice_coords() @ self.modulus.basis().T

    def displacement(self, p: int) -> np.ndarray:
        """Shortest physical displacement vector from node p to every node."""
        xy = self.lattice_coords() - self.lattice_coords()[p]
        xy -= np.round(xy)
        B = self.modulus.basis()
        best = None
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                z = (xy + (a, b)) @ B.T
                if best is None:
                    best = z
                else:
                    closer = np.einsum("ij,ij->i", z, z) < np.einsum("ij,ij->i", best, best)
                    best[closer] = z[closer]
        return best

    def distance_from(self, node):
        return np.hypot(*self.displacement(node).T)

    def curvature(self):
        return np.zeros(self.n_nodes)

    def node(self, j: int, k: int) -> int:
        return (j % self.n1) * self.n2 + (k % self.n2)

    def green_base(self) -> np.ndarray:
        """G(0, ·) on the grid, exactly even under q ↦ −q."""
        if self._green0 is None:
            g = np.fft.ifft2(self._inv).real * (self.n1 * self.n2)
            g = 0.5 * (g + self._mirror(g))
            g -= g.mean()
            g.setflags(write=False)
            self._green0 = g
        return self._green0

    def padded_apply(self, func, *fields, factor: float = 1.5) -> np.ndarray:
        """Evaluate a pointwise nonlinearity on a 3/2-padded grid and project back.

        Each input is spectrally interpolated to the padded grid, ``func`` is
        applied there, and the result is truncated to this grid's modes.
        """
        p1 = int(round(self.n1 * factor / 2)) * 2
        p2 = int(round(self.n2 * factor / 2)) * 2
        padded = [_resample(np.asarray(f, float).reshape(self.shape), (p1, p2)) for f in fields]
        return _resample(func(*padded), self.shape).ravel()


def _resample(a: np.ndarray, shape) -> np.ndarray:
    """Fourier interpolation/truncation of a periodic 2D array to ``shape``."""
    n1, n2 = a.shape
    m1, m2 = shape
    F = np.fft.fft2(a)
    out = np.zeros((m1, m2), dtype=complex)
    # modes 0..k-1 and -(k-1)..-1; the Nyquist mode of the smaller grid is dropped
    k1 = min(n1, m1) // 2
    k2 = min(n2, m2) // 2
    rows = ((slice(0, k1), slice(0, k1)), (slice(n1 - k1 + 1, n1), slice(m1 - k1 + 1, m1)))
    cols = ((slice(0, k2), slice(0, k2)), (slice(n2 - k2 + 1, n2), slice(m2 - k2 + 1, m2)))
    for s1, d1 in rows:
        for s2, d2 in cols:
            out[d1, d2] = F[s1, s2]
    return np.fft.ifft2(out).real * (m1 * m2) / (n1 * n2)


def laplacian_apply(grid: TorusGrid, f: Field) -> Field:
    grid.check(f)
    return grid.field(grid.laplacian(f.values))


def poisson_solve(grid: TorusGrid, f: Field) -> Field:
    """Mean-zero u with Δu = f − mean(f)."""
    grid.check(f)
    return grid.field(grid.inverse_laplacian(f.values))


def green_column(grid: TorusGrid, p: int) -> Field:
    """Discrete Green's function G(p, ·): Δ⁻¹ of a unit mass at node p."""
    j, k = divmod(int(p), grid.n2)
    g = np.roll(grid.green_base(), (j, k), axis=(0, 1))
    return grid.field(g.ravel())


@dataclass(frozen=True)
class RobinEstimate:
    value: float
    error: float
    n_points: int
    levels: tuple = ()


def local_poly_fit(xy: np.ndarray, y: np.ndarray, degree: int):
    """Least-squares fit of a bivariate polynomial; returns (coeffs, residuals)."""
    x0, x1 = xy[:, 0], xy[:, 1]
    scale = float(np.max(np.hypot(x0, x1)))
    x0, x1 = x0 / scale, x1 / scale
    cols = [np.ones_like(x0)]
    for p in range(1, degree + 1):
        for q in range(p + 1):
            cols.append(x0 ** (p - q) * x1 ** q)
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, y - A @ coef


def grid_robin(modulus: TorusModulus, sizes=(128, 256, 512), window=(8.0, 32.0),
               degree: int = 6, tol: float = 1e-5) -> RobinEstimate:
    """Robin constant by singularity subtraction on grid Green columns.

    G(0,q) + log d/2π is sampled at the coarse-grid nodes whose distance lies in
    ``window`` (in units of the coarsest grid's node spacing, capped below the
    injectivity radius), Richardson-extrapolated over ``sizes`` (O(h²)
    error), and fitted by a local polynomial whose constant term is m.
    The grid aspect ratio follows |τ| so cells stay close to square.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3 or any(b != 2 * a for a, b in zip(sizes, sizes[1:])):
        raise DomainError("grid_robin needs >= 3 successively doubled sizes")
    aspect = max(1, int(round(abs(modulus.tau))))
    coarse = TorusGrid(modulus, sizes[0], sizes[0] * aspect)
    h0 = coarse.spacing
    rmax = min(window[1] * h0, 0.45 * modulus.shortest_vector())
    rmin = rmax * window[0] / window[1]
    z = coarse.displacement(0)
    d = np.hypot(*z.T)
    sel = np.flatnonzero((d >= rmin) & (d <= rmax))
    j, k = np.divmod(sel, coarse.n2)
    vals = []
    for n in sizes:
        r = n // sizes[0]
        g = TorusGrid(modulus, n, n * aspect).green_base()
        vals.append(g[(j * r) % g.shape[0], (k * r) % g.shape[1]])
    extrap = [(4 * b - a) / 3 for a, b in zip(vals, vals[1:])]
    logd = np.log(d[sel]) / (2 * math.pi)
    levels = tuple(float(local_poly_fit(z[sel], e + logd, degree)[0][0]) for e in extrap)
    value = levels[-1]
    error = abs(levels[-1] - levels[-2])
    if error > tol:
        raise AccuracyError(f"grid Robin extrapolation not converged for τ={modulus.tau}",
                            {"grid": value, "previous": levels[-2], "ewald": ewald_robin(modulus)})
    return RobinEstimate(value, error, int(sel.size), levels)


def green_residual(grid: TorusGrid, p: int, exclude_cells: int = 2) -> float:
    """Sup over q outside a small neighbourhood of p of |Δ_q G(p,q) + 1/A|."""
    g = green_column(grid, p).values
    res = grid.laplacian(g) + 1.0 / grid.area
    j, k = divmod(p, grid.n2)
    jj, kk = np.meshgrid(np.arange(grid.n1), np.arange(grid.n2), indexing="ij")
    dj = np.minimum((jj - j) % grid.n1, (j - jj) % grid.n1)
    dk = np.minimum((kk - k) % grid.n2, (k - kk) % grid.n2)
    far = (np.maximum(dj, dk) > exclude_cells).ravel()
    return float(np.max(np.abs(res[far])))


def random_trig_field(grid: TorusGrid, rng: np.random.Generator, band: int = 4,
                      amplitude: float = 1.0) -> np.ndarray:
    """Random real trigonometric polynomial with modes |m|,|n| <= band, sup-norm ``amplitude``."""
    xy = grid.lattice_coords()
    out = np.zeros(grid.n_nodes)
    for m in range(-band, band + 1):
        for n in range(0, band + 1):
            if n == 0 and m <= 0:
                continue
            a, b = rng.standard_normal(2) / (1 + m * m + n * n)
            ph = 2 * math.pi * (m * xy[:, 0] + n * xy[:, 1])
            out += a * np.cos(ph) + b * np.sin(ph)
    peak = np.max(np.abs(out))
    return out * (amplitude / peak) if peak > 0 else out
