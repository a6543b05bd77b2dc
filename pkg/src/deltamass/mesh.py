"""Closed triangle meshes: cotangent Laplacian, Green columns, Robin constants, curvature.

A mesh is either embedded (3D vertex positions) or intrinsic (edge lengths
per face, e.g. a flat torus that has no isometric embedding).  Every
operator is built on the unit-area rescaling of the mesh.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import splu

from .errors import AccuracyError, LinearSolverError, MeshQualityError
from .fields import Discretization, Field
from .torus import RobinEstimate, TorusModulus, local_poly_fit

log = logging.getLogger(__name__)

MIN_ANGLE_DEG = 1.0
WARN_ANGLE_DEG = 10.0


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh.  ``lengths[f, i]`` is the length of the edge opposite corner i."""

    faces: np.ndarray
    vertices: np.ndarray | None = None
    lengths: np.ndarray | None = None

    def __post_init__(self):
        faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshQualityError("faces must be an (F, 3) integer array")
        object.__setattr__(self, "faces", faces)
        if self.vertices is None and self.lengths is None:
            raise MeshQualityError("a mesh needs vertex positions or edge lengths")
        if self.vertices is not None:
            object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        if self.lengths is not None:
            object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=float))

    @property
    def embedded(self) -> bool:
        return self.vertices is not None

    @cached_property
    def n_vertices(self) -> int:
        if self.vertices is not None:
            return len(self.vertices)
        return int(self.faces.max()) + 1

    @cached_property
    def id(self) -> str:
        h = hashlib.sha1(self.faces.tobytes())
        h.update((self.vertices if self.embedded else self.lengths).tobytes())
        return f"mesh[{self.n_vertices}v:{h.hexdigest()[:12]}]"

    def edge_lengths(self) -> np.ndarray:
        if self.lengths is not None:
            return self.lengths
        P = self.vertices[self.faces]
        return np.stack([np.linalg.norm(P[:, 2] - P[:, 1], axis=1),
                         np.linalg.norm(P[:, 0] - P[:, 2], axis=1),
                         np.linalg.norm(P[:, 1] - P[:, 0], axis=1)], axis=1)

    def face_areas(self) -> np.ndarray:
        l = np.sort(self.edge_lengths(), axis=1)[:, ::-1]
        a, b, c = l[:, 0], l[:, 1], l[:, 2]
        # Kahan's stable Heron formula (a >= b >= c)
        q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
        return 0.25 * np.sqrt(np.maximum(q, 0.0))

    def angles(self) -> np.ndarray:
        l = self.edge_lengths()
        out = np.empty_like(l)
        for i in range(3):
            a, b, c = l[:, i], l[:, (i + 1) % 3], l[:, (i + 2) % 3]
            out[:, i] = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1.0, 1.0))
        return out

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [1, 2]], self.faces[:, [2, 0]], self.faces[:, [0, 1]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def euler_characteristic(self) -> int:
        used = np.unique(self.faces).size
        return int(used - len(self.edges) + len(self.faces))

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    def scaled(self, s: float) -> "TriMesh":
        return TriMesh(self.faces,
                       None if self.vertices is None else self.vertices * s,
                       None if self.lengths is None else self.lengths * s)

    def normalized(self) -> tuple["TriMesh", float]:
        """Unit-area copy and the length scale factor applied."""
        area = float(self.face_areas().sum())
        s = 1.0 / math.sqrt(area)
        if abs(area - 1.0) < 1e-14:
            return self, 1.0
        log.info("mesh area %.17g normalized to 1 (length scale %.17g)", area, s)
        return self.scaled(s), s

    def validate(self):
        """Raise :class:`MeshQualityError` unless the mesh is closed, oriented and well shaped."""
        F = self.faces
        if F.min() < 0 or F.max() >= self.n_vertices:
            raise MeshQualityError("face references a missing vertex")
        if np.unique(F).size != self.n_vertices:
            raise MeshQualityError("mesh has unreferenced vertices")
        if np.any((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])):
            bad = int(np.flatnonzero((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2])
                                     | (F[:, 0] == F[:, 2]))[0])
            raise MeshQualityError(f"face {bad} repeats a vertex", face=bad)
        directed = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
        _, counts = np.unique(directed, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise MeshQualityError("inconsistent orientation or non-manifold edge")
        und, ucounts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
        if np.any(ucounts != 2):
            raise MeshQualityError("mesh is not closed: some edge is not shared by exactly 2 faces")
        n, _ = connected_components(self.adjacency(), directed=False)
        if n != 1:
            raise MeshQualityError(f"mesh has {n} connected components")
        l = self.edge_lengths()
        if not np.all(np.isfinite(l)) or np.any(l <= 0):
            raise MeshQualityError("non-positive edge length", face=int(np.flatnonzero(np.any(l <= 0, axis=1))[0]))
        s = np.sort(l, axis=1)
        strict = s[:, 0] + s[:, 1] > s[:, 2] * (1 + 1e-12)
        if not np.all(strict):
            bad = int(np.flatnonzero(~strict)[0])
            raise MeshQualityError(f"face {bad} violates the strict triangle inequality", face=bad)
        ang = np.degrees(self.angles())
        worst = np.minimum(ang.min(axis=1), 180.0 - ang.max(axis=1))
        if worst.min() < MIN_ANGLE_DEG:
            bad = int(np.argmin(worst))
            raise MeshQualityError(f"face {bad} has an angle within {worst[bad]:.3g}° of 0 or 180°",
                                   face=bad)
        if worst.min() < WARN_ANGLE_DEG:
            warnings.warn(f"mesh has angles down to {worst.min():.3g}° (< {WARN_ANGLE_DEG}°)",
                          RuntimeWarning, stacklevel=2)
        if self.euler_characteristic % 2:
            raise MeshQualityError("odd Euler characteristic for a closed orientable surface")

    def adjacency(self) -> sp.csr_matrix:
        e = self.edges
        n = self.n_vertices
        A = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return (A + A.T).tocsr()

    def weighted_graph(self) -> sp.csr_matrix:
        l = self.edge_lengths()
        F = self.faces
        rows = np.concatenate([F[:, 1], F[:, 2], F[:, 0]])
        cols = np.concatenate([F[:, 2], F[:, 0], F[:, 1]])
        vals = np.concatenate([l[:, 0], l[:, 1], l[:, 2]])
        G = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_vertices,) * 2).tocsr()
        G = G.maximum(G.T)
        return G


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Cotangent stiffness matrix and lumped (barycentric) mass of a unit-area mesh."""

    stiffness: sp.csr_matrix
    mass: np.ndarray
    mesh: TriMesh
    scale: float

    @cached_property
    def _lu(self):
        # pin vertex 0: the reduced stiffness matrix is nonsingular on a connected mesh
        return splu(self.stiffness[1:, 1:].tocsc())

    def solve(self, rhs: np.ndarray, scale: float | None = None) -> np.ndarray:
        """Mass-mean-zero x with L x = rhs, for rhs summing to zero.

        ``scale`` sets the size the residual is measured against (default
        max |rhs|); pass the size of the unprojected data when rhs is a small
        difference.
        """
        rhs = np.asarray(rhs, dtype=float)
        x = np.zeros(len(rhs))
        x[1:] = self._lu.solve(rhs[1:])
        x -= np.dot(self.mass, x) / self.mass.sum()
        res = self.stiffness @ x - rhs
        scale = max(np.abs(rhs).max() if scale is None else scale, 1e-300)
        if np.abs(res).max() > 1e-8 * scale:
            raise LinearSolverError("sparse solve lost accuracy", float(np.abs(res).max()))
        return x


def build_laplacian(mesh: TriMesh) -> DiscreteOperator:
    """Cotangent Laplacian of the unit-area rescaled mesh."""
    mesh.validate()
    mesh, s = mesh.normalized()
    l = mesh.edge_lengths()
    area = mesh.face_areas()
    F = mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for i in range(3):
        a, b, c = l[:, i], l[:, (i + 1) % 3], l[:, (i + 2) % 3]
        cot = (b * b + c * c - a * a) / (4 * area)
        j, k = F[:, (i + 1) % 3], F[:, (i + 2) % 3]
        w = 0.5 * cot
        rows += [j, k, j, k]
        cols += [k, j, j, k]
        vals += [-w, -w, w, w]
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    L = 0.5 * (L + L.T)
    mass = np.bincount(F.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n)
    mass *= 1.0 / mass.sum()
    return DiscreteOperator(L.tocsr(), mass, mesh, s)


class MeshDiscretization(Discretization):
    """:class:`Discretization` view of a :class:`DiscreteOperator` (Δ = M⁻¹L)."""

    def __init__(self, op: DiscreteOperator):
        self.op = op
        self.mesh = op.mesh
        self.id = op.mesh.id
        self._w = op.mass.copy()
        self._w.setflags(write=False)
        self._pre = {}

    @classmethod
    def from_mesh(cls, mesh: TriMesh) -> "MeshDiscretization":
        return cls(build_laplacian(mesh))

    @property
    def weights(self):
        return self._w

    def laplacian(self, values):
        return (self.op.stiffness @ np.asarray(values, dtype=float)) / self._w

    def inverse_laplacian(self, values):
        f = np.asarray(values, dtype=float)
        size = float(np.max(np.abs(self._w * f)))
        f = f - np.dot(self._w, f) / self.area
        return self.op.solve(self._w * f, scale=size)

    def preconditioner(self, delta):
        if delta not in self._pre:
            A = (delta * sp.diags(self._w) + self.op.stiffness / (8 * math.pi)).tocsc()
            self._pre[delta] = splu(A)
        lu = self._pre[delta]
        return lambda r: lu.solve(self._w * np.asarray(r, dtype=float))

    def distance_from(self, node):
        return dijkstra(self.mesh.weighted_graph(), indices=node)

    def curvature(self):
        return angle_defects(self.mesh) / self._w

    def mean_edge_length(self, node: int) -> float:
        G = self.mesh.weighted_graph()
        row = G.getrow(node)
        return float(row.data.mean())


def angle_defects(mesh: TriMesh) -> np.ndarray:
    """2π minus the sum of corner angles at each vertex."""
    ang = mesh.angles()
    total = np.bincount(mesh.faces.ravel(), weights=ang.ravel(), minlength=mesh.n_vertices)
    return 2 * math.pi - total


def gauss_curvature(disc: MeshDiscretization) -> Field:
    """Angle defect divided by the lumped vertex area."""
    return disc.field(disc.curvature())


def mesh_green_column(disc: MeshDiscretization, p: int) -> Field:
    """Discrete Green's function G(p, ·): L G = e_p − M·1/A, mass-mean zero."""
    rhs = -disc.weights / disc.area
    rhs = rhs.copy()
    rhs[p] += 1.0
    return disc.field(disc.op.solve(rhs))


def mesh_green_residual(disc: MeshDiscretization, p: int) -> float:
    """max over q != p of |Δ_q G(p,q) + 1/A|."""
    g = mesh_green_column(disc, p).values
    res = disc.laplacian(g) + 1.0 / disc.area
    res[p] = 0.0
    return float(np.abs(res).max())


def _unfold(mesh: TriMesh, p: int, radius: float) -> dict:
    """Develop the faces around p into the plane; returns {vertex: (x, y)}.

    Faces are laid out breadth-first, each copy placed from its neighbour's
    copy, so on flat regions the planar distance is the polyhedral geodesic
    distance.  A vertex keeps the first position it receives.
    """
    F = mesh.faces
    l = mesh.edge_lengths()
    edge_faces = {}
    for f, tri in enumerate(F):
        for i in range(3):
            u, v = tri[(i + 1) % 3], tri[(i + 2) % 3]
            edge_faces.setdefault((min(u, v), max(u, v)), []).append(f)

    def length(f, u, v):
        tri = list(F[f])
        w = ({0, 1, 2} - {tri.index(u), tri.index(v)}).pop()
        return l[f, w]

    def place(pu, pv, a, b, side_ref):
        c = math.dist(pu, pv)
        e = ((pv[0] - pu[0]) / c, (pv[1] - pu[1]) / c)
        x = (a * a - b * b + c * c) / (2 * c)
        y = math.sqrt(max(a * a - x * x, 0.0))
        nrm = (-e[1], e[0])
        side = (side_ref[0] - pu[0]) * nrm[0] + (side_ref[1] - pu[1]) * nrm[1]
        if side > 0:
            y = -y
        return (pu[0] + x * e[0] + y * nrm[0], pu[1] + x * e[1] + y * nrm[1])

    start = int(np.flatnonzero(np.any(F == p, axis=1))[0])
    tri = list(F[start])
    i = tri.index(p)
    a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
    copy = {p: (0.0, 0.0), a: (length(start, p, a), 0.0)}
    copy[b] = place(copy[p], copy[a], length(start, p, b), length(start, a, b), (0.0, -1.0))
    pos = dict(copy)
    seen = {start}
    queue = deque([(start, copy)])
    while queue:
        f, cp = queue.popleft()
        tri = list(F[f])
        for k in range(3):
            u, v, w = tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]
            for g in edge_faces[(min(u, v), max(u, v))]:
                if g in seen:
                    continue
                gt = list(F[g])
                x = ({0, 1, 2} - {gt.index(u), gt.index(v)}).pop()
                nw = gt[x]
                pn = place(cp[u], cp[v], length(g, u, nw), length(g, v, nw), cp[w])
                ncp = {u: cp[u], v: cp[v], nw: pn}
                seen.add(g)
                pos.setdefault(nw, pn)
                if min(math.hypot(*cp[u]), math.hypot(*cp[v]), math.hypot(*pn)) < radius:
                    queue.append((g, ncp))
    return pos


def local_chart(mesh: TriMesh, p: int, radius: float):
    """Vertices within ``radius`` of p with planar coordinates and distances."""
    if mesh.embedded:
        d3 = mesh.vertices - mesh.vertices[p]
        dist = np.linalg.norm(d3, axis=1)
        idx = np.flatnonzero(dist <= radius)
        # tangent plane from area-weighted normals of the incident faces
        F = mesh.faces[np.any(mesh.faces == p, axis=1)]
        P = mesh.vertices[F]
        nrm = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]).sum(axis=0)
        nrm /= np.linalg.norm(nrm)
        t1 = np.cross(nrm, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 0.5:
            t1 = np.cross(nrm, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nrm, t1)
        xy = np.stack([d3[idx] @ t1, d3[idx] @ t2], axis=1)
        return idx, xy, dist[idx]
    pos = _unfold(mesh, p, radius * 1.05)
    idx = np.array(sorted(pos), dtype=np.int64)
    xy = np.array([pos[i] for i in idx])
    dist = np.hypot(xy[:, 0], xy[:, 1])
    keep = dist <= radius
    return idx[keep], xy[keep], dist[keep]


def mesh_robin(disc: MeshDiscretization, p: int, window=None, degree: int = 4,
               green: np.ndarray | None = None) -> RobinEstimate:
    """Robin constant at vertex p from G(p,q) + log d/2π fitted over a ring of vertices.

    ``window`` is (r_min, r_max) in unit-area lengths; by default it is
    [2h̄, 8h̄] with h̄ the mean length of the edges at p.  The error bar is the
    largest fit residual plus twice the standard error of the constant term.
    """
    mesh = disc.mesh
    if window is None:
        hbar = disc.mean_edge_length(p)
        window = (2 * hbar, 8 * hbar)
    rmin, rmax = window
    idx, xy, dist = local_chart(mesh, p, rmax)
    sel = dist >= rmin
    idx, xy, dist = idx[sel], xy[sel], dist[sel]
    n_coef = (degree + 1) * (degree + 2) // 2
    if len(idx) < max(12, 2 * n_coef):
        raise AccuracyError(f"only {len(idx)} vertices in the Robin window at vertex {p}",
                            {"points": len(idx)})
    if green is None:
        green = mesh_green_column(disc, p).values
    y = green[idx] + np.log(dist) / (2 * math.pi)
    coef, res = local_poly_fit(xy, y, degree)
    x0 = xy / np.max(dist)
    cols = [np.ones(len(x0))]
    for k in range(1, degree + 1):
        for q in range(k + 1):
            cols.append(x0[:, 0] ** (k - q) * x0[:, 1] ** q)
    A = np.stack(cols, axis=1)
    dof = max(len(y) - A.shape[1], 1)
    sigma2 = float(res @ res) / dof
    cov00 = float(np.linalg.pinv(A.T @ A)[0, 0])
    err = float(np.abs(res).max() + 2 * math.sqrt(sigma2 * cov00))
    return RobinEstimate(float(coef[0]), err, int(len(idx)))


def mesh_robin_field(disc: MeshDiscretization, window=None, degree: int = 2):
    """Robin estimates at every vertex: returns (values, error bars)."""
    n = disc.n_nodes
    vals = np.empty(n)
    errs = np.empty(n)
    for p in range(n):
        est = mesh_robin(disc, p, window=window, degree=degree)
        vals[p], errs[p] = est.value, est.error
    return disc.field(vals), errs


def smooth_field(disc: MeshDiscretization, values, length: float | None = None,
                 steps: int = 3) -> np.ndarray:
    """Implicit heat smoothing (M + t L)⁻¹M applied ``steps`` times, t = length².

    The default length is the median edge length.  Integrals are preserved
    exactly, since 1ᵀL = 0.
    """
    if length is None:
        length = float(np.median(disc.mesh.edge_lengths()))
    lu = splu((sp.diags(disc.weights) + length ** 2 * disc.op.stiffness).tocsc())
    v = np.asarray(values, dtype=float)
    for _ in range(steps):
        v = lu.solve(disc.weights * v)
    return v


def canonical_residual(disc: Discretization, m: Field, genus: int) -> Field:
    """Δm − (2H − 2 + K/2π): zero when m is the Robin field of a canonical metric."""
    disc.check(m)
    K = disc.curvature()
    return disc.field(disc.laplacian(m.values) - (2 * genus - 2 + K / (2 * math.pi)))


# -- mesh generators and I/O ---------------------------------------------------

def flat_torus_mesh(modulus: TorusModulus, n1: int, n2: int | None = None) -> TriMesh:
    """Intrinsic n1 × n2 lattice triangulation of the unit-area flat torus.

    Each cell is split along its shorter diagonal (the longer one when tied is
    never used, so τ = i gives the (0,0)-(1,1) diagonal everywhere).
    """
    n2 = n1 if n2 is None else n2
    G = np.array([[1.0, modulus.re_tau], [modulus.re_tau, abs(modulus.tau) ** 2]]) / modulus.im_tau

    def elen(dx, dy):
        v = np.array([dx / n1, dy / n2])
        return math.sqrt(v @ G @ v)

    d_main, d_anti = elen(1, 1), elen(1, -1)
    j, k = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    j, k = j.ravel(), k.ravel()

    def vid(a, b):
        return (a % n1) * n2 + (b % n2)

    if d_main <= d_anti * (1 + 1e-12):
        cells = [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]]
    else:
        cells = [[(0, 0), (1, 0), (0, 1)], [(1, 0), (1, 1), (0, 1)]]
    faces, lengths = [], []
    for tri in cells:
        faces.append(np.stack([vid(j + a, k + b) for a, b in tri], axis=1))
        # edge opposite corner i joins corners i+1 and i+2
        l = [elen(tri[(i + 2) % 3][0] - tri[(i + 1) % 3][0],
                  tri[(i + 2) % 3][1] - tri[(i + 1) % 3][1]) for i in range(3)]
        lengths.append(np.tile(l, (n1 * n2, 1)))
    faces = np.concatenate(faces)
    lengths = np.concatenate(lengths)
    return TriMesh(faces, lengths=lengths)


def icosphere(level: int = 3) -> TriMesh:
    t = (1 + math.sqrt(5)) / 2
    V = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    F = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(level):
        V, F = _subdivide(V, F)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    return TriMesh(F, V)


def _subdivide(V, F):
    """Split every triangle into four at edge midpoints."""
    e = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])
    m = inv.reshape(3, -1).T + len(V)
    a, b, c = F[:, 0], F[:, 1], F[:, 2]
    ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
    F2 = np.concatenate([np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
                         np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
    return np.vstack([V, mids]), F2


def torus_of_revolution(n_u: int = 48, n_v: int = 24, R: float = 1.0, r: float = 0.4) -> TriMesh:
    u, v = np.meshgrid(2 * np.pi * np.arange(n_u) / n_u, 2 * np.pi * np.arange(n_v) / n_v,
                       indexing="ij")
    V = np.stack([(R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u),
                  r * np.sin(v)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_u), np.arange(n_v), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(a, b):
        return (a % n_u) * n_v + (b % n_v)

    F = np.concatenate([np.stack([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)], 1),
                        np.stack([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)], 1)])
    return TriMesh(F, V)


def genus2_mesh(subdivisions: int = 2, smoothing: int = 20) -> TriMesh:
    """Smoothed boundary of a 5×3×1 voxel slab with two square holes (genus 2)."""
    solid = {(x, y, 0) for x in range(5) for y in range(3)} - {(1, 1, 0), (3, 1, 0)}
    quads = []
    dirs = [((1, 0, 0), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
            ((-1, 0, 0), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
            ((0, 1, 0), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
            ((0, -1, 0), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
            ((0, 0, 1), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
            ((0, 0, -1), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)])]
    for c in sorted(solid):
        for d, corners in dirs:
            if (c[0] + d[0], c[1] + d[1], c[2] + d[2]) not in solid:
                quads.append([(c[0] + a, c[1] + b, c[2] + e) for a, b, e in corners])
    index = {}
    for q in quads:
        for v in q:
            index.setdefault(v, len(index))
    V = np.array(sorted(index, key=index.get), dtype=float)
    F = []
    for q in quads:
        a, b, c, d = (index[v] for v in q)
        F += [[a, b, c], [a, c, d]]
    F = np.array(F)
    for _ in range(subdivisions):
        V, F = _subdivide(V, F)
    mesh = TriMesh(F, V)
    A = mesh.adjacency()
    deg = np.asarray(A.sum(axis=1)).ravel()
    for _ in range(smoothing):
        # Taubin λ|μ smoothing keeps the volume from shrinking
        for lam in (0.5, -0.53):
            V = V + lam * ((A @ V) / deg[:, None] - V)
    V -= V.mean(axis=0)
    return TriMesh(F, V)


def read_off(path) -> TriMesh:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshQualityError(f"{path}: not an OFF file")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        V = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        F = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise MeshQualityError(f"{path}: only triangles are supported (found {k}-gon)")
            F.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += k + 1
    except (IndexError, ValueError) as exc:
        raise MeshQualityError(f"{path}: malformed OFF data ({exc})") from None
    return TriMesh(np.array(F, dtype=np.int64).reshape(-1, 3), V)


def write_off(path, mesh: TriMesh):
    if not mesh.embedded:
        raise MeshQualityError("OFF output needs vertex positions")
    lines = ["OFF", f"{mesh.n_vertices} {len(mesh.faces)} {len(mesh.edges)}"]
    lines += [" ".join(format(x, ".17g") for x in v) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")
