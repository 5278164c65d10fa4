"""Residual representatives, global estimates and element indicators."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .assembly import local_pairings
from .linear_solve import solve_gram


class EstimatorKind(enum.Enum):
    ENERGY = "energy"
    GOA_DG = "goa-dg"
    GOA_RESIDUAL = "goa-residual"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower().replace("_", "-"))
        except ValueError:
            raise ValueError(
                f"unknown estimator {name!r}; choose from {[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True)
class IndicatorField:
    values: np.ndarray
    estimate: float
    kind: EstimatorKind


def adjoint_residual(G, B, v_star, q_V):
    """Riesz representative of ``q(.) - b_h(., v*)``: ``G^{-1}(q_V - B^T v*)``."""
    r = np.asarray(q_V, float) - B.T @ v_star
    return solve_gram(G, r)


def global_estimate(kind, G, eps_h, aux=None) -> float:
    kind = EstimatorKind.parse(kind)
    if kind is EstimatorKind.ENERGY:
        return float(eps_h @ (G @ eps_h))
    if aux is None:
        raise ValueError(f"{kind.value} needs an auxiliary vector")
    return float(abs(eps_h @ (G @ aux)))


def element_indicators(
    kind, mesh, skel, dg, prob, eps_h, aux=None, data=None, square_goal=False
) -> IndicatorField:
    """Per-element indicators.

    Energy: ``(eps, eps)_T``.  Goal-oriented kinds: ``||eps||_T ||aux||_T``
    with ``aux = v_dg* - v*`` or ``aux = eps*``; ``square_goal`` squares
    these products before marking.
    """
    kind = EstimatorKind.parse(kind)
    ee = np.maximum(local_pairings(mesh, skel, dg, prob, eps_h, eps_h, data), 0.0)
    if kind is EstimatorKind.ENERGY:
        eta = ee
        est = float(ee.sum())
    else:
        if aux is None:
            raise ValueError(f"{kind.value} needs an auxiliary vector")
        aa = np.maximum(local_pairings(mesh, skel, dg, prob, aux, aux, data), 0.0)
        eta = np.sqrt(ee) * np.sqrt(aa)
        if square_goal:
            eta = eta**2
        ea = local_pairings(mesh, skel, dg, prob, eps_h, aux, data).sum()
        est = float(abs(ea))
    return IndicatorField(eta, est, kind)
