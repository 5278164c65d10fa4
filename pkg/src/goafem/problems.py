"""Catalog of benchmark problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import ProblemDef
from .mesh import CROSS_GOAL, Mesh, build_cross_mesh, build_square_mesh

CROSS_REFERENCE_QOI = 0.407617863684
SQUARE_GOAL = ((0.7, 0.8), (0.3, 0.5))
ADVECTION = np.array([3.0, 1.0])


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    make_problem: Callable[..., ProblemDef]
    initial_mesh: Callable[[], Mesh]
    reference_qoi: Callable[..., float | None]
    regime: Callable[..., float]  # r in the optimal QoI rate NDOFs^(-2(p+r)/d)
    default_levels: int

    def problem(self, **kw) -> ProblemDef:
        return self.make_problem(**kw)


def _const(value):
    def fn(x):
        return np.full(np.shape(x)[:-1], float(value))

    return fn


def cross_diffusion(epsilon: int = -1, **_) -> ProblemDef:
    return ProblemDef(
        kappa=1.0,
        gamma=0.0,
        velocity=None,
        source=_const(1.0),
        dirichlet=_const(0.0),
        epsilon=epsilon,
        omega0=CROSS_GOAL,
        beta=0.0,
        length_scale=2.0 * np.sqrt(2.0),
        exact_qoi=CROSS_REFERENCE_QOI,
    )


def tanh_layers(x):
    """Exact solution with a mild layer at y - x/3 = 1/4 and a sharp one at 3/4."""
    s = x[..., 1] - x[..., 0] / 3.0
    return 2.0 + np.tanh(10.0 * (s - 0.25)) + np.tanh(1000.0 * (s - 0.75))


def composite_gauss_mean(fn, rect, order: int = 20, tol: float = 1e-10, max_level: int = 12):
    """Mean of ``fn`` over a rectangle by composite tensor Gauss-Legendre.

    The number of subintervals per side doubles until two successive
    values agree to ``tol``.  Returns ``(value, difference)``.
    """
    (x0, x1), (y0, y1) = rect
    g, w = np.polynomial.legendre.leggauss(order)
    g, w = 0.5 * (g + 1.0), 0.5 * w

    def rule(m):
        hx, hy = (x1 - x0) / m, (y1 - y0) / m
        xs = (x0 + hx * (np.arange(m)[:, None] + g[None, :])).ravel()
        ys = (y0 + hy * (np.arange(m)[:, None] + g[None, :])).ravel()
        wx = np.tile(w, m) / m
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        vals = fn(np.stack([X, Y], axis=-1))
        return float(wx @ vals @ wx)

    prev = rule(1)
    m = 2
    for _ in range(max_level):
        cur = rule(m)
        if abs(cur - prev) <= tol:
            return cur, abs(cur - prev)
        prev, m = cur, 2 * m
    raise RuntimeError("composite Gauss oracle did not converge")


_ADV_QOI = None


def advection_reference_qoi() -> float:
    global _ADV_QOI
    if _ADV_QOI is None:
        _ADV_QOI = composite_gauss_mean(tanh_layers, SQUARE_GOAL)[0]
    return _ADV_QOI


def advection_reaction(gamma: float = 0.0, epsilon: int = -1, **_) -> ProblemDef:
    def velocity(x):
        return np.broadcast_to(ADVECTION, np.shape(x))

    return ProblemDef(
        kappa=0.0,
        gamma=float(gamma),
        velocity=velocity,
        source=lambda x: gamma * tanh_layers(x),
        dirichlet=tanh_layers,
        epsilon=epsilon,
        omega0=SQUARE_GOAL,
        beta=float(np.linalg.norm(ADVECTION)),
        length_scale=1.0,
        exact_solution=tanh_layers,
        exact_qoi=advection_reference_qoi(),
    )


def adr_generic(
    kappa: float = 1.0,
    velocity=(0.0, 0.0),
    gamma: float = 0.0,
    source: float = 1.0,
    dirichlet: float = 0.0,
    epsilon: int = -1,
    omega0=SQUARE_GOAL,
    **_,
) -> ProblemDef:
    """Constant-coefficient problem on the unit square."""
    b = np.asarray(velocity, float)
    return ProblemDef(
        kappa=float(kappa),
        gamma=float(gamma),
        velocity=(lambda x: np.broadcast_to(b, np.shape(x))) if b.any() else None,
        source=_const(source),
        dirichlet=_const(dirichlet),
        epsilon=epsilon,
        omega0=omega0,
        beta=float(np.linalg.norm(b)),
        length_scale=1.0,
    )


def catalog() -> dict[str, CatalogEntry]:
    """Problems by name; keyword arguments of ``problem()`` select variants."""
    entries = [
        CatalogEntry(
            "cross_diffusion",
            cross_diffusion,
            build_cross_mesh,
            lambda **kw: CROSS_REFERENCE_QOI,
            lambda **kw: 0.0,
            14,
        ),
        CatalogEntry(
            "advection_reaction",
            advection_reaction,
            lambda: build_square_mesh(1, SQUARE_GOAL),
            lambda **kw: advection_reference_qoi(),
            lambda gamma=0.0, **kw: 0.5 if gamma == 0 else 1.0,
            18,
        ),
        CatalogEntry(
            "adr_generic",
            adr_generic,
            lambda: build_square_mesh(1, SQUARE_GOAL),
            lambda **kw: None,
            lambda **kw: 0.0,
            10,
        ),
    ]
    return {e.name: e for e in entries}
