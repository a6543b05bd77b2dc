"""Conformal change of the Robin constant and of trace Δ⁻¹; the Δ-mass.

Conventions: the conformal metric is e^φ g (areas scale by e^φ), the
Laplacian is the geometer's one, and the Robin constant is the finite part
of G(p,q) + (1/2π) log d(p,q).  Under a constant rescaling g → c g the Robin
constant shifts by log(c)/4π, which fixes the round-sphere reference at any
area:

    trace Δ⁻¹_{S²,A} = A·trace Δ⁻¹_{S²,1} + A log(A)/4π.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .fields import Discretization, Field

SPHERE_TRACE_UNIT_AREA = (-1.0 - math.log(math.pi)) / (4 * math.pi)


def conformal_curvature(disc: Discretization, phi) -> np.ndarray:
    """Gaussian curvature of e^φ g: e^{−φ}(K_g + ½Δ_g φ)."""
    phi = np.asarray(phi, dtype=float)
    return np.exp(-phi) * (disc.curvature() + 0.5 * disc.laplacian(phi))


class ConformalDiscretization(Discretization):
    """The discretization of ``base`` carrying the metric e^φ g.

    Quadrature weights become w e^φ, Δ becomes e^{−φ}Δ_g, and Δ⁻¹ returns the
    solution with zero mean in the new area measure.  The area is A_φ, not 1.
    """

    def __init__(self, base: Discretization, phi):
        phi = np.asarray(phi, dtype=float).ravel()
        if phi.size != base.n_nodes or not np.all(np.isfinite(phi)):
            raise DomainError("conformal factor must be a finite field on the base")
        self.base = base
        self.phi = phi
        self.ephi = np.exp(phi)
        digest = hashlib.sha1(phi.tobytes()).hexdigest()[:12]
        self.id = f"{base.id}|e^phi:{digest}"
        w = base.weights * self.ephi
        w.setflags(write=False)
        self._w = w

    @property
    def weights(self):
        return self._w

    def laplacian(self, values):
        return self.base.laplacian(values) / self.ephi

    def inverse_laplacian(self, values):
        f = np.asarray(values, dtype=float)
        f = f - np.dot(self._w, f) / self.area
        x = self.base.inverse_laplacian(self.ephi * f)
        return x - np.dot(self._w, x) / self.area

    def preconditioner(self, delta):
        base_pre = self.base.preconditioner(delta * float(np.mean(self.ephi)))
        return lambda r: base_pre(self.ephi * np.asarray(r))

    def distance_from(self, node):
        return self.base.distance_from(node) * math.exp(0.5 * self.phi[node])

    def curvature(self):
        return conformal_curvature(self.base, self.phi)


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    base: Discretization
    phi: Field

    def __post_init__(self):
        self.base.check(self.phi)
        a = self.area_phi
        if not (math.isfinite(a) and a > 0):
            raise DomainError(f"conformal area must be positive and finite, got {a}")

    @property
    def area_phi(self) -> float:
        return self.base.integral(np.exp(self.phi.values))

    def discretization(self) -> ConformalDiscretization:
        return ConformalDiscretization(self.base, self.phi.values)


def _pieces(m_g: Field, cm: ConformalMetric):
    base = cm.base
    base.check(m_g)
    e = np.exp(cm.phi.values)
    a_phi = base.integral(e)
    inv_e = base.inverse_laplacian(e)
    energy = base.integral(e * inv_e)
    return e, a_phi, inv_e, energy


def robin_conformal(m_g: Field, cm: ConformalMetric) -> Field:
    """Robin constant of e^φ g at every node, from the base Robin field m_g:

    m_g + φ/4π − (2/A_φ) Δ_g⁻¹e^φ + (1/A_φ²) ∫ e^φ Δ_g⁻¹ e^φ dA.
    """
    e, a_phi, inv_e, energy = _pieces(m_g, cm)
    phi = cm.phi.values
    return m_g.with_values(m_g.values + phi / (4 * math.pi) - 2.0 * inv_e / a_phi
                           + energy / a_phi ** 2)


def trace_conformal(m_g: Field, cm: ConformalMetric) -> float:
    """trace Δ⁻¹ of e^φ g:  ∫ m_g e^φ + (1/4π)∫ φ e^φ − (1/A_φ)∫ e^φ Δ_g⁻¹ e^φ."""
    e, a_phi, _, energy = _pieces(m_g, cm)
    base = cm.base
    phi = cm.phi.values
    return (base.integral(m_g.values * e) + base.integral(phi * e) / (4 * math.pi)
            - energy / a_phi)


def sphere_reference(area: float) -> float:
    """trace Δ⁻¹ of the round sphere with the given area."""
    if not area > 0:
        raise DomainError(f"area must be positive, got {area}")
    return area * SPHERE_TRACE_UNIT_AREA + area * math.log(area) / (4 * math.pi)


def delta_mass(trace: float, area: float) -> float:
    """(trace Δ⁻¹ − trace Δ⁻¹_{S²,A}) / A."""
    if not area > 0:
        raise DomainError(f"area must be positive, got {area}")
    return (trace - sphere_reference(area)) / area


@dataclass
class MassReport:
    trace: float
    area: float
    mass: float
    flags: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_trace(cls, trace: float, area: float, **kw) -> "MassReport":
        return cls(float(trace), float(area), float(delta_mass(trace, area)), **kw)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps17(self.as_dict())


def mass_of(m_g: Field, cm: ConformalMetric, **kw) -> MassReport:
    """Δ-mass of e^φ g via the conformal trace formula."""
    return MassReport.from_trace(trace_conformal(m_g, cm), cm.area_phi, **kw)


def _fmt(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(_fmt(v, indent, level + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps17(obj, indent: int = 2) -> str:
    """JSON with every float printed to 17 significant digits."""
    return _fmt(obj, indent, 0) + "\n"
