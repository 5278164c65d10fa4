"""Sparse direct solves: saddle-point systems, dG systems and Gram solves.

The primal and adjoint saddle-point problems share the block matrix

    K = [[G, B C], [(B C)^T, 0]]

so a :class:`SaddleSystem` factorizes once and solves both right-hand sides.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    """Raised when a sparse factorization fails or breaks down."""


class NotSPDError(SingularSystemError):
    pass


def _rel_residual(A, x, b):
    r = A @ x - b
    scale = abs(A) @ np.abs(x) + np.abs(b)
    denom = np.max(scale, initial=0.0)
    return float(np.max(np.abs(r), initial=0.0) / denom) if denom > 0 else 0.0


class Factorization:
    """Sparse LU of a square matrix with one step of iterative refinement."""

    def __init__(self, A, spd: bool = False):
        self.A = sp.csc_matrix(A)
        t0 = time.perf_counter()
        try:
            if spd:
                lu = spla.splu(
                    self.A,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            else:
                lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc
        self.seconds = time.perf_counter() - t0
        udiag = lu.U.diagonal()
        if spd and (
            np.any(udiag <= 0.0) or not np.array_equal(lu.perm_r, lu.perm_c)
        ):
            raise NotSPDError("matrix is not symmetric positive definite")
        if not np.all(np.isfinite(udiag)) or np.any(udiag == 0.0):
            raise SingularSystemError("singular factor")
        self.lu = lu

    def solve(self, b, trans: str = "N", refine: int = 2):
        A = self.A if trans == "N" else self.A.T
        x = self.lu.solve(b, trans=trans)
        for _ in range(refine):
            r = b - A @ x
            x = x + self.lu.solve(r, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite solution")
        return x


@dataclass
class SolveReport:
    """Block residuals recomputed from the original matrices."""

    name: str
    residuals: tuple
    status: str = "ok"
    seconds: float = 0.0


@dataclass(eq=False)
class SaddleSystem:
    G: sp.spmatrix
    B: sp.spmatrix
    C: sp.spmatrix
    factorizations: int = 0
    reports: list = field(default_factory=list)

    def __post_init__(self):
        self.G = sp.csr_matrix(self.G)
        self.B = sp.csr_matrix(self.B)
        self.C = sp.csr_matrix(self.C)
        nV, nU = self.C.shape
        if self.G.shape != (nV, nV) or self.B.shape != (nV, nV):
            raise ValueError("block shapes do not match")
        if nU >= nV:
            raise ValueError("trial space must be strictly smaller than test space")
        self.n_V, self.n_U = nV, nU
        self.BC = (self.B @ self.C).tocsr()
        self.K = sp.bmat([[self.G, self.BC], [self.BC.T, None]], format="csc")
        self._fact = None

    def factorize(self) -> Factorization:
        if self._fact is None:
            self._fact = Factorization(self.K)
            self.factorizations += 1
        return self._fact

    def solve(self, top, bottom, name="saddle"):
        t0 = time.perf_counter()
        rhs = np.concatenate([top, bottom])
        x = self.factorize().solve(rhs)
        v, w = x[: self.n_V], x[self.n_V :]
        res = (
            _rel_residual(sp.hstack([self.G, self.BC]).tocsr(), x, top),
            _rel_residual(self.BC.T.tocsr(), v, bottom),
        )
        self.reports.append(SolveReport(name, res, "ok", time.perf_counter() - t0))
        return v, w


def solve_primal(system: SaddleSystem, L):
    """Residual minimization: ``G eps + B C u = L``, ``(B C)^T eps = 0``."""
    return system.solve(np.asarray(L, float), np.zeros(system.n_U), "primal")


def solve_adjoint(system: SaddleSystem, q_U):
    """Adjoint saddle point: ``G v + B C w = 0``, ``(B C)^T v = q_U``."""
    return system.solve(np.zeros(system.n_V), np.asarray(q_U, float), "adjoint")


def _factor(A, spd=False):
    return A if isinstance(A, Factorization) else Factorization(A, spd=spd)


def solve_dg_primal(B, L):
    """Solve ``B u = L``; ``B`` may be a matrix or a :class:`Factorization`."""
    return _factor(B).solve(np.asarray(L, float))


def solve_dg_adjoint(B, q_V):
    """Solve ``B^T v = q_V`` (reusing the factorization of ``B``)."""
    return _factor(B).solve(np.asarray(q_V, float), trans="T")


def solve_gram(G, r):
    """Solve ``G x = r`` for symmetric positive definite ``G``."""
    return _factor(G, spd=True).solve(np.asarray(r, float))


def residual_summary(A, x, b) -> float:
    return _rel_residual(sp.csr_matrix(A), x, b)
