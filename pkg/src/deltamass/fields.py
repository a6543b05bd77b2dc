"""Scalar fields, quadrature and the contract shared by every discretization.

A :class:`Field` is an opaque flat array of nodal values tagged with the id of
the discretization it lives on.  Every discretization (flat torus grid, round
sphere quadrature, triangle mesh, conformal rescaling of any of these)
implements :class:`Discretization`, which is all the conformal-mass and
mean-field code ever needs.
"""

from __future__ import annotations

import abc
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, DomainMismatchError

UNIT_AREA_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    domain: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).ravel()
        if not np.all(np.isfinite(v)):
            raise DomainError(f"field on {self.domain!r} has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def with_values(self, values) -> "Field":
        return Field(values, self.domain)

    def __add__(self, other):
        return self.with_values(self.values + _values_on(other, self.domain))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - _values_on(other, self.domain))

    def __rsub__(self, other):
        return self.with_values(_values_on(other, self.domain) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * _values_on(other, self.domain))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _values_on(other, domain):
    if isinstance(other, Field):
        if other.domain != domain:
            raise DomainMismatchError(f"field on {other.domain!r} combined with {domain!r}")
        return other.values
    return other


@dataclass(frozen=True, eq=False)
class Quadrature:
    weights: np.ndarray
    domain: str
    total_area: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True).ravel()
        if w.size == 0 or not np.all(w > 0):
            raise DomainError("quadrature weights must all be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_area", float(np.sum(w)))


def _check(f: Field, q: Quadrature):
    if f.domain != q.domain:
        raise DomainMismatchError(f"field on {f.domain!r} integrated with quadrature on {q.domain!r}")
    if f.values.size != q.weights.size:
        raise DomainMismatchError(
            f"field has {f.values.size} nodes, quadrature has {q.weights.size}")


def integrate(f: Field, q: Quadrature) -> float:
    """Return sum_i w_i f_i."""
    _check(f, q)
    return float(np.dot(q.weights, f.values))


def mean_zero(f: Field, q: Quadrature) -> Field:
    _check(f, q)
    return f.with_values(f.values - np.dot(q.weights, f.values) / q.total_area)


class Discretization(abc.ABC):
    """Common numeric surface of a unit-area (unless stated) discretized surface.

    Subclasses provide the quadrature, the geometer's Laplacian (positive
    semidefinite) and its inverse on mean-zero data.  ``Δ⁻¹`` always returns
    the mean-zero solution, so ``inverse_laplacian(constant) == 0``.
    """

    id: str

    @property
    @abc.abstractmethod
    def weights(self) -> np.ndarray: ...

    @abc.abstractmethod
    def laplacian(self, values: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def inverse_laplacian(self, values: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def preconditioner(self, delta: float):
        """Return a callable r -> x solving (delta + Δ/8π) x = r."""

    @abc.abstractmethod
    def distance_from(self, node: int) -> np.ndarray:
        """Approximate geodesic distance from ``node`` to every node."""

    @property
    def n_nodes(self) -> int:
        return self.weights.size

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def quadrature(self) -> Quadrature:
        q = getattr(self, "_quadrature", None)
        if q is None:
            q = Quadrature(self.weights, self.id)
            self._quadrature = q
        return q

    def field(self, values) -> Field:
        values = np.broadcast_to(np.asarray(values, dtype=float), (self.n_nodes,))
        return Field(values, self.id)

    def constant(self, c: float) -> Field:
        return self.field(np.full(self.n_nodes, float(c)))

    def integral(self, values) -> float:
        return float(np.dot(self.weights, values))

    def inner(self, a, b) -> float:
        return float(np.dot(self.weights, np.asarray(a) * np.asarray(b)))

    def dirichlet(self, values) -> float:
        """∫|∇u|² dA evaluated as <u, Δu>."""
        return self.inner(values, self.laplacian(values))

    def curvature(self) -> np.ndarray:
        """Gaussian curvature at the nodes."""
        raise NotImplementedError

    def check(self, f: Field):
        if f.domain != self.id or f.values.size != self.n_nodes:
            raise DomainMismatchError(f"field on {f.domain!r} used with {self.id!r}")


def write_field_csv(path, f: Field, extra_header: dict | None = None):
    """Write ``index,value`` rows preceded by ``# discretization=<id> nodes=<n>``."""
    buf = io.StringIO()
    buf.write(f"# discretization={f.domain} nodes={f.values.size}\n")
    for k, v in (extra_header or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for i, v in enumerate(f.values):
        w.writerow([i, f"{v:.17g}"])
    Path(path).write_text(buf.getvalue())


def read_field_csv(path) -> tuple[Field, dict]:
    """Read a field CSV; returns the field and every ``# key=value`` header."""
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    header[k] = v
            continue
        if not line.strip() or line.startswith("index"):
            continue
        i, v = line.split(",")
        rows.append((int(i), float(v)))
    if "discretization" not in header:
        raise DomainError(f"{path}: missing '# discretization=' header")
    n = int(header.get("nodes", len(rows)))
    if len(rows) != n:
        raise DomainError(f"{path}: header says {n} nodes, found {len(rows)} rows")
    values = np.empty(n)
    idx = np.array([r[0] for r in rows])
    if not np.array_equal(np.sort(idx), np.arange(n)):
        raise DomainError(f"{path}: indices are not a permutation of 0..{n - 1}")
    values[idx] = [r[1] for r in rows]
    return Field(values, header["discretization"]), header
