"""Assembly of the interior-penalty/upwind dG operator and the V_h inner product.

Matrices follow the convention ``B[i, j] = b_h(phi_j, phi_i)``: column index
is the trial function, row index the test function.  On boundary edges the
jump and average of a function both equal its trace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem_basis import DofMap, edge_rule, triangle_rule
from .mesh import Mesh, Skeleton, _inside_rect, eta_e

Field = Callable[[np.ndarray], np.ndarray]


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class ProblemDef:
    """Advection-diffusion-reaction data ``-div(kappa grad u) + b.grad u + gamma u = f``.

    Callables take points of shape ``(..., 2)``; ``velocity`` returns
    ``(..., 2)``, the scalar fields return ``(...)``.  ``beta`` is the sup
    of ``|b|``; when ``None`` it is measured on the quadrature points of the
    mesh being assembled.  ``length_scale`` is the diameter of the largest
    disc inscribed in the domain.
    """

    kappa: float = 1.0
    gamma: float = 0.0
    velocity: Field | None = None
    source: Field = _zero
    dirichlet: Field = _zero
    epsilon: int = -1
    omega0: tuple | None = None
    beta: float | None = None
    length_scale: float = 1.0
    exact_solution: Field | None = None
    exact_qoi: float | None = None

    def __post_init__(self):
        if self.epsilon not in (-1, 1):
            raise ValueError("epsilon must be -1 (SIP) or +1 (NIP)")
        if self.kappa < 0 or self.gamma < 0:
            raise ValueError("kappa and gamma must be nonnegative")
        if self.length_scale <= 0:
            raise ValueError("length scale must be positive")
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def beta_l(self) -> float:
        return 1.0 / self.beta if self.beta else 0.0

    def b(self, x):
        if self.velocity is None:
            return np.zeros(np.shape(x))
        return np.broadcast_to(np.asarray(self.velocity(x), float), np.shape(x))

    def with_beta(self, x) -> "ProblemDef":
        """Copy with ``beta`` measured as max |b(x)| over the given points."""
        if self.beta is not None:
            return self
        beta = float(np.max(np.linalg.norm(self.b(x), axis=-1), initial=0.0))
        return _replace(self, beta=beta)


def _replace(prob, **kw):
    from dataclasses import replace

    return replace(prob, **kw)


class FormData:
    """Geometry, quadrature and basis tables shared by all assembly routines."""

    def __init__(self, mesh: Mesh, skel: Skeleton, dg: DofMap, prob: ProblemDef):
        if dg.continuous:
            raise ValueError("dG forms need a broken space")
        self.mesh, self.skel, self.dg = mesh, skel, dg
        ref = dg.element
        pt = dg.degree
        self.nb = nb = ref.n_basis
        qt = triangle_rule(2 * pt + 2)
        qe = edge_rule(2 * pt + 2)

        corners = mesh.corners()
        J = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("degenerate or clockwise triangle")
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1] / det
        invJ[:, 1, 1] = J[:, 0, 0] / det
        invJ[:, 0, 1] = -J[:, 0, 1] / det
        invJ[:, 1, 0] = -J[:, 1, 0] / det
        self.origin, self.invJ = corners[:, 0], invJ

        # volume tables
        self.phi = ref.eval(qt.points)  # (nq, nb)
        gref = ref.grad(qt.points)  # (nq, nb, 2)
        self.gphi = np.einsum("qbk,tkj->tqbj", gref, invJ)
        self.xq = self.origin[:, None, :] + np.einsum("tij,qj->tqi", J, qt.points)
        self.wq = det[:, None] * qt.weights[None, :]
        self.h = mesh.diameters()

        # edge tables
        ne = skel.n_edges
        e = np.arange(ne)
        tl = mesh.triangles[skel.left]
        a = mesh.vertices[tl[e, (skel.left_local + 1) % 3]]
        b = mesh.vertices[tl[e, (skel.left_local + 2) % 3]]
        t = qe.points
        self.xe = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        self.we = skel.length[:, None] * qe.weights[None, :]
        self.normal = skel.normal
        self.eta = eta_e(mesh, skel, e, pt)
        self.interior = skel.interior
        self.left, self.right = skel.left, skel.right
        self.phiL, self.gphiL = self._trace(skel.left)
        right = np.where(self.interior, skel.right, skel.left)
        self.phiR, self.gphiR = self._trace(right)
        self.phiR[~self.interior] = 0.0
        self.gphiR[~self.interior] = 0.0

        self.prob = prob.with_beta(np.concatenate([self.xq.reshape(-1, 2), self.xe.reshape(-1, 2)]))
        self.bq = self.prob.b(self.xq)  # (nt, nq, 2)
        self.bn = np.einsum("eqi,ei->eq", self.prob.b(self.xe), self.normal)

    def _trace(self, tri):
        ref = self.dg.element
        xi = np.einsum("eij,eqj->eqi", self.invJ[tri], self.xe - self.origin[tri][:, None, :])
        phi = ref.eval(xi)
        g = np.einsum("eqbk,ekj->eqbj", ref.grad(xi), self.invJ[tri])
        return phi, g

    # -- element blocks -------------------------------------------------
    def stiffness(self):
        return np.einsum("tq,tqik,tqjk->tij", self.wq, self.gphi, self.gphi)

    def mass(self):
        return np.einsum("tq,qi,qj->tij", self.wq, self.phi, self.phi)

    def advection(self):
        """``A[t, i, j] = int_T (b . grad phi_j) phi_i``."""
        bg = np.einsum("tqk,tqjk->tqj", self.bq, self.gphi)
        return np.einsum("tq,qi,tqj->tij", self.wq, self.phi, bg)

    def streamline(self):
        bg = np.einsum("tqk,tqjk->tqj", self.bq, self.gphi)
        return np.einsum("tq,tqi,tqj->tij", self.wq, bg, bg)

    # -- edge tables over the 2*nb local dofs [left, right] ------------------
    def jumps(self):
        return np.concatenate([self.phiL, -self.phiR], axis=2)

    def averages(self):
        w = np.where(self.interior, 0.5, 1.0)[:, None, None]
        return w * np.concatenate([self.phiL, self.phiR], axis=2)

    def flux_averages(self):
        """``{kappa grad phi} . n_e`` on each edge."""
        kap = self.prob.kappa
        w = np.where(self.interior, 0.5, 1.0)[:, None, None]
        gL = np.einsum("eqbk,ek->eqb", self.gphiL, self.normal)
        gR = np.einsum("eqbk,ek->eqb", self.gphiR, self.normal)
        return kap * w * np.concatenate([gL, gR], axis=2)

    def edge_dofs(self):
        d = self.dg.cell_dofs
        right = np.where(self.interior, self.right, self.left)
        return np.concatenate([d[self.left], d[right]], axis=1)

    def edge_gram(self):
        """Per-edge blocks of ``int_e (kappa eta + |b.n|/2) [w][v]``."""
        wt = self.we * (self.prob.kappa * self.eta[:, None] + 0.5 * np.abs(self.bn))
        jmp = self.jumps()
        return np.einsum("eq,eqi,eqj->eij", wt, jmp, jmp)

    def element_gram(self):
        pr = self.prob
        blocks = pr.kappa * self.stiffness() + (pr.gamma + pr.beta / pr.length_scale) * self.mass()
        if pr.beta_l:
            blocks += pr.beta_l * self.h[:, None, None] * self.streamline()
        return blocks


def _scatter(rows_dofs, cols_dofs, blocks, shape):
    nb_r, nb_c = blocks.shape[1], blocks.shape[2]
    rows = np.repeat(rows_dofs[:, :, None], nb_c, axis=2)
    cols = np.repeat(cols_dofs[:, None, :], nb_r, axis=1)
    return sp.coo_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _forms(mesh, skel, dg, prob, data):
    return data if data is not None else FormData(mesh, skel, dg, prob)


def assemble_bh(mesh, skel, dg, prob, data: FormData | None = None) -> sp.csr_matrix:
    """dG operator ``B[i, j] = b_h(phi_j, phi_i)``."""
    fd = _forms(mesh, skel, dg, prob, data)
    pr = fd.prob
    n = dg.n_dofs
    vol = pr.kappa * fd.stiffness() + fd.advection() + pr.gamma * fd.mass()
    B = _scatter(dg.cell_dofs, dg.cell_dofs, vol, (n, n))

    jmp, avg, flx = fd.jumps(), fd.averages(), fd.flux_averages()
    we = fd.we
    pen = we * pr.kappa * fd.eta[:, None]
    blocks = np.einsum("eq,eqi,eqj->eij", pen, jmp, jmp)
    blocks -= np.einsum("eq,eqi,eqj->eij", we, jmp, flx)
    blocks += pr.epsilon * np.einsum("eq,eqi,eqj->eij", we, flx, jmp)
    # upwind: interior -(b.n)[w]{v} + |b.n|/2 [w][v]; boundary (b.n)^- w v
    inner = fd.interior[:, None]
    up_jj = we * np.where(inner, 0.5 * np.abs(fd.bn), np.maximum(-fd.bn, 0.0))
    up_ja = we * np.where(inner, -fd.bn, 0.0)
    blocks += np.einsum("eq,eqi,eqj->eij", up_jj, jmp, jmp)
    blocks += np.einsum("eq,eqi,eqj->eij", up_ja, avg, jmp)
    ed = fd.edge_dofs()
    return B + _scatter(ed, ed, blocks, (n, n))


def assemble_gram(mesh, skel, dg, prob, data: FormData | None = None) -> sp.csr_matrix:
    """Gram matrix of the V_h inner product (symmetrized to round-off)."""
    fd = _forms(mesh, skel, dg, prob, data)
    pr = fd.prob
    if pr.kappa == 0 and pr.gamma == 0 and not pr.beta:
        raise ValueError("degenerate norm: kappa, gamma and beta all vanish")
    n = dg.n_dofs
    G = _scatter(dg.cell_dofs, dg.cell_dofs, fd.element_gram(), (n, n))
    ed = fd.edge_dofs()
    G = G + _scatter(ed, ed, fd.edge_gram(), (n, n))
    return ((G + G.T) * 0.5).tocsr()


def assemble_lh(mesh, skel, dg, prob, data: FormData | None = None) -> np.ndarray:
    """Load vector ``L[i] = l_h(phi_i)``."""
    fd = _forms(mesh, skel, dg, prob, data)
    pr = fd.prob
    n = dg.n_dofs
    f = pr.source(fd.xq)
    vol = np.einsum("tq,tq,qi->ti", fd.wq, f, fd.phi)
    L = np.bincount(dg.cell_dofs.ravel(), vol.ravel(), minlength=n)

    bd = ~fd.interior
    if bd.any():
        g = pr.dirichlet(fd.xe[bd])
        we = fd.we[bd]
        phi = fd.phiL[bd]
        gn = np.einsum("eqbk,ek->eqb", fd.gphiL[bd], fd.normal[bd])
        coef = np.maximum(-fd.bn[bd], 0.0) + pr.kappa * fd.eta[bd][:, None]
        loc = pr.epsilon * pr.kappa * np.einsum("eq,eq,eqb->eb", we, g, gn)
        loc += np.einsum("eq,eq,eq,eqb->eb", we, coef, g, phi)
        L += np.bincount(dg.cell_dofs[fd.left[bd]].ravel(), loc.ravel(), minlength=n)
    return L


def goal_triangles(mesh: Mesh, omega0) -> np.ndarray:
    """Boolean mask of triangles inside ``omega0``; checks that they tile it."""
    inside = np.all(_inside_rect(mesh.corners(), omega0), axis=1)
    (x0, x1), (y0, y1) = omega0
    area = (x1 - x0) * (y1 - y0)
    covered = mesh.areas()[inside].sum()
    if abs(covered - area) > 1e-10 * area:
        raise ValueError("mesh is not conforming to the goal region")
    return inside


def assemble_qoi(mesh: Mesh, dofmap: DofMap, omega0) -> np.ndarray:
    """``q[i]`` = mean of basis function ``i`` over ``omega0``."""
    inside = goal_triangles(mesh, omega0)
    (x0, x1), (y0, y1) = omega0
    area = (x1 - x0) * (y1 - y0)
    rule = triangle_rule(dofmap.degree)
    ref_int = dofmap.element.eval(rule.points).T @ rule.weights  # int over reference
    det = 2.0 * mesh.areas()[inside]
    vals = det[:, None] * ref_int[None, :] / area
    return np.bincount(
        dofmap.cell_dofs[inside].ravel(), vals.ravel(), minlength=dofmap.n_dofs
    )


def local_pairings(mesh, skel, dg, prob, w, v, data: FormData | None = None) -> np.ndarray:
    """Element-local pairings ``(w, v)_T`` for every triangle.

    Volume and boundary-edge terms belong wholly to their triangle; each
    interior-edge jump term is split evenly between its two neighbours.
    """
    fd = _forms(mesh, skel, dg, prob, data)
    d = dg.cell_dofs
    out = np.einsum("ti,tij,tj->t", w[d], fd.element_gram(), v[d])
    ed = fd.edge_dofs()
    s = np.einsum("ei,eij,ej->e", w[ed], fd.edge_gram(), v[ed])
    share = np.where(fd.interior, 0.5, 1.0) * s
    nt = mesh.n_triangles
    out += np.bincount(fd.left, share, minlength=nt)
    out += np.bincount(fd.right[fd.interior], share[fd.interior], minlength=nt)
    return out


def local_pairing(mesh, skel, dg, prob, w, v, T: int, data: FormData | None = None) -> float:
    if not 0 <= T < mesh.n_triangles:
        raise IndexError("element index out of range")
    return float(local_pairings(mesh, skel, dg, prob, w, v, data)[T])
