"""Lagrange reference elements, quadrature and degree-of-freedom maps."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import Mesh, _edge_table

MAX_DEGREE = 4
MAX_EXACTNESS = 40


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def edge_rule(exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    if exactness > MAX_EXACTNESS:
        raise ValueError(f"no rule with exactness {exactness} (max {MAX_EXACTNESS})")
    n = exactness // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, exactness)


@lru_cache(maxsize=None)
def triangle_rule(exactness: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule on the reference triangle.

    The reference triangle has vertices (0,0), (1,0), (0,1).  Through
    ``x = s``, ``y = t (1 - s)`` a degree-``k`` integrand becomes a degree-``k``
    polynomial in ``s`` against the weight ``(1 - s)``, integrated exactly
    by Gauss-Jacobi(1, 0), times a degree-``k`` polynomial in ``t``.
    """
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    if exactness > MAX_EXACTNESS:
        raise ValueError(f"no rule with exactness {exactness} (max {MAX_EXACTNESS})")
    n = exactness // 2 + 1
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = ws / 4.0  # (1-x)dx on [-1,1] -> 4 (1-s) ds on [0,1]
    t = edge_rule(exactness)
    S, T = np.meshgrid(s, t.points, indexing="ij")
    W = np.outer(ws, t.weights)
    pts = np.stack([S.ravel(), (T * (1.0 - S)).ravel()], axis=1)
    return QuadratureRule(pts, W.ravel(), exactness)


class ReferenceElement:
    """Equispaced Lagrange element of a given degree on the reference triangle.

    Nodes are ordered vertices first (in the order (0,0), (1,0), (0,1)),
    then nodes interior to edge 0, 1, 2 (edge ``k`` opposite vertex ``k``),
    then interior nodes.  ``bary`` holds integer barycentric coordinates
    ``(l0, l1, l2)`` with ``l0 + l1 + l2 = degree``.
    """

    def __init__(self, degree: int):
        if not 1 <= degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}")
        self.degree = p = degree
        bary = [(p - i - j, i, j) for j in range(p + 1) for i in range(p + 1 - j)]

        def rank(b):
            zeros = [k for k in range(3) if b[k] == 0]
            if len(zeros) == 2:
                return (0, b.index(p), 0)
            if len(zeros) == 1:
                k = zeros[0]
                return (1, k, b[(k + 2) % 3])
            return (2, b[2], b[1])

        bary.sort(key=rank)
        self.bary = np.array(bary, dtype=np.int64)
        self.nodes = self.bary[:, 1:] / p
        self.n_basis = len(bary)
        self.exponents = np.array(
            [(i, j) for i in range(p + 1) for j in range(p + 1 - i)], dtype=np.int64
        )
        V = self._monomials(self.nodes)
        self.coeffs = np.linalg.solve(V, np.eye(self.n_basis))

    def _monomials(self, x):
        x = np.asarray(x, float)
        e = self.exponents
        return x[..., 0, None] ** e[:, 0] * x[..., 1, None] ** e[:, 1]

    def _monomial_grads(self, x):
        x = np.asarray(x, float)
        e = self.exponents
        X, Y = x[..., 0, None], x[..., 1, None]
        ex, ey = e[:, 0], e[:, 1]
        dx = ex * X ** np.maximum(ex - 1, 0) * Y**ey
        dy = ey * X**ex * Y ** np.maximum(ey - 1, 0)
        return np.stack([dx, dy], axis=-1)

    def eval(self, x) -> np.ndarray:
        """Basis values at reference points ``x[..., 2]``; shape (..., n_basis)."""
        return self._monomials(x) @ self.coeffs

    def grad(self, x) -> np.ndarray:
        """Reference gradients; shape (..., n_basis, 2)."""
        g = self._monomial_grads(x)
        return np.einsum("...mk,mb->...bk", g, self.coeffs)


@lru_cache(maxsize=None)
def reference_element(degree: int) -> ReferenceElement:
    return ReferenceElement(degree)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Element-to-global index table of a Lagrange space.

    ``cell_dofs[t, i]`` is the global index of local basis function ``i``
    (ordered as in :class:`ReferenceElement`) on triangle ``t``.
    """

    mesh: Mesh
    degree: int
    continuous: bool
    cell_dofs: np.ndarray
    n_dofs: int
    boundary_dofs: np.ndarray | None = None

    @property
    def element(self) -> ReferenceElement:
        return reference_element(self.degree)


def build_space(mesh: Mesh, degree: int, continuous: bool) -> DofMap:
    """Continuous (conforming) or broken Lagrange space of the given degree."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    ref = reference_element(degree)
    nt, nb = mesh.n_triangles, ref.n_basis
    if not continuous:
        dofs = np.arange(nt * nb, dtype=np.int64).reshape(nt, nb)
        return DofMap(mesh, degree, False, dofs, nt * nb)

    p = degree
    edges, t2e = _edge_table(mesh.triangles)
    nv, ne = mesh.n_vertices, len(edges)
    n_int = (p - 1) * (p - 2) // 2
    tri = mesh.triangles
    dofs = np.empty((nt, nb), dtype=np.int64)
    interior_count = 0
    for i, b in enumerate(ref.bary):
        zeros = np.flatnonzero(b == 0)
        if len(zeros) == 2:
            dofs[:, i] = tri[:, int(np.argmax(b))]
        elif len(zeros) == 1:
            k = zeros[0]
            va, vb = tri[:, (k + 1) % 3], tri[:, (k + 2) % 3]
            # position counted from the endpoint with smaller global index
            pos = np.where(va > vb, b[(k + 1) % 3], b[(k + 2) % 3]) - 1
            dofs[:, i] = nv + t2e[:, k] * (p - 1) + pos
        else:
            dofs[:, i] = nv + ne * (p - 1) + np.arange(nt) * n_int + interior_count
            interior_count += 1
    n = nv + ne * (p - 1) + nt * n_int
    count = np.bincount(t2e.ravel(), minlength=ne)
    bedges = np.flatnonzero(count == 1)
    bverts = np.unique(edges[bedges])
    bedge_dofs = (nv + bedges[:, None] * (p - 1) + np.arange(p - 1)).ravel()
    boundary = np.union1d(bverts, bedge_dofs)
    return DofMap(mesh, degree, True, dofs, n, boundary)


def embedding_matrix(cg: DofMap, dg: DofMap) -> sp.csr_matrix:
    """Sparse ``C`` (n_V x n_U) mapping continuous coefficients to broken ones.

    Row block of triangle ``t`` holds the continuous basis of ``t`` evaluated
    at the broken element's nodes, which is exact since P^p is contained in
    P^{p_t}.
    """
    if cg.mesh is not dg.mesh and not (
        cg.mesh.n_triangles == dg.mesh.n_triangles
        and np.array_equal(cg.mesh.triangles, dg.mesh.triangles)
        and np.array_equal(cg.mesh.vertices, dg.mesh.vertices)
    ):
        raise ValueError("spaces live on different meshes")
    if cg.degree > dg.degree:
        raise ValueError("continuous degree must not exceed broken degree")
    if not cg.continuous or dg.continuous:
        raise ValueError("expected a continuous and a broken space")
    E = cg.element.eval(dg.element.nodes)  # (nb_dg, nb_cg)
    if cg.degree == dg.degree:
        E = np.eye(dg.element.n_basis)
    E[np.abs(E) < 1e-14] = 0.0
    nt = dg.mesh.n_triangles
    rows = np.repeat(dg.cell_dofs[:, :, None], E.shape[1], axis=2)
    cols = np.repeat(cg.cell_dofs[:, None, :], E.shape[0], axis=1)
    vals = np.broadcast_to(E, (nt,) + E.shape)
    nz = vals != 0.0
    return sp.csr_matrix(
        (vals[nz], (rows[nz], cols[nz])), shape=(dg.n_dofs, cg.n_dofs)
    )


def interpolate(dofmap: DofMap, fn) -> np.ndarray:
    """Nodal interpolant of ``fn(x)`` (x of shape (..., 2)) in the given space."""
    mesh = dofmap.mesh
    ref = dofmap.element
    p = mesh.corners()
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt, 2, 2)
    x = p[:, None, 0, :] + np.einsum("tij,nj->tni", J, ref.nodes)
    vals = np.asarray(fn(x), float)
    out = np.zeros(dofmap.n_dofs)
    out[dofmap.cell_dofs.ravel()] = vals.ravel()
    return out
