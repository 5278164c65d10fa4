"""Dörfler marking and the SOLVE -> ESTIMATE -> MARK -> REFINE loop."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .assembly import FormData, assemble_bh, assemble_gram, assemble_lh, assemble_qoi
from .estimators import EstimatorKind, IndicatorField, adjoint_residual, element_indicators
from .fem_basis import build_space, embedding_matrix
from .linear_solve import Factorization, SaddleSystem, solve_adjoint, solve_primal
from .mesh import Mesh, bisect, skeleton, write_mesh

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "level",
    "ndofs",
    "nelems",
    "estimate",
    "qoi_uh",
    "qoi_udg",
    "rel_err",
    "ortho_a",
    "ortho_b",
    "ortho_c",
    "ortho_d",
    "wall_ms",
)


@dataclass(frozen=True)
class MarkSet:
    elements: np.ndarray
    theta: float
    covered: float


def dorfler_mark(indicators, theta: float) -> MarkSet:
    """Smallest set of largest indicators whose sum reaches ``theta`` of the total.

    Ties are broken by ascending element index; the element whose value
    pushes the cumulative sum past the threshold is included.
    """
    eta = np.asarray(getattr(indicators, "values", indicators), float)
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    if np.any(eta < 0):
        raise ValueError("indicators must be nonnegative")
    total = eta.sum()
    if not total > 0.0:
        raise ValueError("nothing to mark: all indicators vanish")
    order = np.lexsort((np.arange(len(eta)), -eta))
    csum = np.cumsum(eta[order])
    # guard the threshold against round-off in the cumulative sum
    k = int(np.searchsorted(csum, theta * total * (1.0 - 1e-14))) + 1
    k = min(k, int(np.count_nonzero(eta)))
    chosen = np.sort(order[:k])
    return MarkSet(chosen, theta, float(csum[k - 1] / total))


@dataclass
class ConvergenceRecord:
    level: int
    ndofs: int
    nelems: int
    estimate: float
    qoi_uh: float
    qoi_udg: float
    rel_err: float
    ortho_a: float
    ortho_b: float
    ortho_c: float
    ortho_d: float
    wall_ms: float
    n_V: int = 0
    n_U: int = 0
    extras: dict = field(default_factory=dict)

    def csv_row(self):
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.15g}"


@dataclass
class ConvergenceHistory:
    records: list = field(default_factory=list)
    status: str = "running"
    meshes: list = field(default_factory=list)
    indicators: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array(
            [getattr(r, name) if name in _RECORD_FIELDS else r.extras.get(name, np.nan)
             for r in self.records],
            float,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow(r.csv_row())


_RECORD_FIELDS = {f.name for f in fields(ConvergenceRecord)}


def read_csv(path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    out = []
    for row in rows[1:]:
        vals = {}
        for name, s in zip(CSV_COLUMNS, row):
            vals[name] = int(s) if name in ("level", "ndofs", "nelems") else float(s)
        out.append(ConvergenceRecord(**vals))
    return out


def rate_fit(ndofs, errors, last: int = 6) -> float:
    """Least-squares slope of log(error) against log(sqrt(NDOFs)) over the last levels."""
    n = np.asarray(ndofs, float)[-last:]
    e = np.abs(np.asarray(errors, float))[-last:]
    ok = (e > 0) & np.isfinite(e)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(0.5 * np.log(n[ok]), np.log(e[ok]), 1)[0])


def optimal_slope(p: int, r: float, d: int = 2) -> float:
    """Target slope against sqrt(NDOFs) of the rate NDOFs^(-2(p+r)/d)."""
    return -4.0 * (p + r) / d


def _rel(x, y):
    """|x - y| relative to the larger of the two magnitudes."""
    scale = max(abs(x), abs(y))
    return abs(x - y) / scale if scale > 0 else 0.0


def identity_residuals(G, B, C, L, q_U, q_V, eps, u, v_star, v_dg, u_dg):
    """Relative residuals of the discrete orthogonality relations and the QoI chain."""
    BCu = B @ (C @ u)
    d = v_dg - v_star
    Ge = G @ eps
    out = {
        "ortho_a": _rel(v_dg @ BCu, v_star @ BCu),
        "ortho_b": abs(v_star @ Ge) / max(math.sqrt(abs(v_star @ (G @ v_star)) * abs(eps @ Ge)), 1e-300),
        "ortho_c": _rel(q_U @ u, L @ v_star),
        "ortho_d": _rel(v_star @ (B @ u_dg), v_star @ BCu),
    }
    chain = [
        q_V @ u_dg - q_U @ u,
        d @ (B @ u_dg) - d @ BCu,
        Ge @ d,
        L @ d,
    ]
    scale = max(
        abs(q_V @ u_dg), abs(q_U @ u), abs(Ge @ v_dg), abs(Ge @ v_star), abs(L @ v_dg), abs(L @ v_star)
    )
    out["chain"] = max(abs(a - b) for a in chain for b in chain) / scale if scale else 0.0
    out["qoi_gap"] = chain[0]
    Gv = G @ v_star
    nv, nd = math.sqrt(max(v_star @ Gv, 0.0)), math.sqrt(max(d @ (G @ d), 0.0))
    out["c_min"] = abs(Gv @ d) / (nv * nd) if nv * nd > 0 else 0.0
    return out


def _norm(G, x):
    return math.sqrt(max(float(x @ (G @ x)), 0.0))


def solve_level(mesh: Mesh, prob, kind, p: int, delta_p: int, diagnostics: bool = True,
                square_goal: bool = False):
    """SOLVE and ESTIMATE on one mesh; returns ``(record_fields, indicators, state)``."""
    kind = EstimatorKind.parse(kind)
    skel = skeleton(mesh)
    cg = build_space(mesh, p, True)
    dg = build_space(mesh, p + delta_p, False)
    fd = FormData(mesh, skel, dg, prob)
    B = assemble_bh(mesh, skel, dg, prob, fd)
    G = assemble_gram(mesh, skel, dg, prob, fd)
    L = assemble_lh(mesh, skel, dg, prob, fd)
    C = embedding_matrix(cg, dg)
    q_V = assemble_qoi(mesh, dg, prob.omega0)
    q_U = assemble_qoi(mesh, cg, prob.omega0)

    system = SaddleSystem(G, B, C)
    eps, u = solve_primal(system, L)
    v_star, w_star = solve_adjoint(system, q_U)

    need_dg = diagnostics or kind is EstimatorKind.GOA_DG
    need_res = diagnostics or kind is EstimatorKind.GOA_RESIDUAL
    state = dict(mesh=mesh, skel=skel, cg=cg, dg=dg, B=B, G=G, L=L, C=C, q_U=q_U, q_V=q_V,
                 eps=eps, u=u, v_star=v_star, w_star=w_star, system=system, forms=fd)
    u_dg = v_dg = eps_star = None
    if need_dg:
        Bf = Factorization(B)
        u_dg = Bf.solve(L)
        v_dg = Bf.solve(q_V, trans="T")
        state.update(u_dg=u_dg, v_dg=v_dg)
    if need_res:
        eps_star = adjoint_residual(G, B, v_star, q_V)
        state["eps_star"] = eps_star

    aux = {EstimatorKind.ENERGY: None,
           EstimatorKind.GOA_DG: None if v_dg is None else v_dg - v_star,
           EstimatorKind.GOA_RESIDUAL: eps_star}[kind]
    ind = element_indicators(kind, mesh, skel, dg, prob, eps, aux, fd, square_goal=square_goal)

    qoi_uh = float(q_U @ u)
    qoi_udg = float(q_V @ u_dg) if u_dg is not None else math.nan
    extras = {"est_energy": float(eps @ (G @ eps))}
    ortho = dict.fromkeys(("ortho_a", "ortho_b", "ortho_c", "ortho_d"), math.nan)
    if u_dg is not None:
        ids = identity_residuals(G, B, C, L, q_U, q_V, eps, u, v_star, v_dg, u_dg)
        ortho = {k: ids[k] for k in ortho}
        extras.update(chain=ids["chain"], c_min=ids["c_min"], qoi_gap=ids["qoi_gap"])
        extras["est_goa_dg"] = abs(float(eps @ (G @ (v_dg - v_star))))
        du = u_dg - C @ u
        extras["efficiency_ratio"] = _norm(G, eps) / max(_norm(G, du), 1e-300)
        extras["energy_identity"] = _rel(extras["est_energy"], float(eps @ L))
    if eps_star is not None:
        extras["est_goa_res"] = abs(float(eps @ (G @ eps_star)))
        if v_dg is not None:
            extras["adjoint_ratio"] = _norm(G, eps_star) / max(_norm(G, v_dg - v_star), 1e-300)
    extras["max_solve_residual"] = max(max(r.residuals) for r in system.reports)
    rec = dict(
        ndofs=system.n_V + system.n_U,
        nelems=mesh.n_triangles,
        estimate=ind.estimate,
        qoi_uh=qoi_uh,
        qoi_udg=qoi_udg,
        n_V=system.n_V,
        n_U=system.n_U,
        extras=extras,
        **ortho,
    )
    return rec, ind, state


def run_adaptive(
    prob,
    kind,
    p: int = 1,
    delta_p: int = 0,
    theta: float = 0.2,
    max_levels: int = 14,
    initial_mesh: Mesh | None = None,
    ndof_cap: int | None = None,
    diagnostics_cap: float | None = 50_000,
    square_goal: bool = False,
    keep_meshes: bool = False,
    mesh_dir=None,
    exhaustion_tol: float = 1e-15,
    all_edges: bool = True,
    history: ConvergenceHistory | None = None,
) -> ConvergenceHistory:
    """Adaptive loop; stops after ``max_levels`` solves, at the NDOF cap or on exhaustion.

    Levels are appended to ``history`` when given, so a caller keeps the
    completed levels if a solve raises.
    """
    kind = EstimatorKind.parse(kind)
    if p < 1 or delta_p not in (0, 1):
        raise ValueError("need p >= 1 and delta_p in {0, 1}")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    if initial_mesh is None:
        raise ValueError("an initial mesh is required")
    hist = ConvergenceHistory() if history is None else history
    mesh = initial_mesh
    exact = prob.exact_qoi
    for level in range(max_levels):
        t0 = time.perf_counter()
        nV_est = mesh.n_triangles * (p + delta_p + 1) * (p + delta_p + 2) // 2
        if ndof_cap is not None and nV_est > ndof_cap:
            hist.status = "ndof cap"
            break
        diagnostics = diagnostics_cap is None or nV_est <= diagnostics_cap
        try:
            rec, ind, _ = solve_level(mesh, prob, kind, p, delta_p, diagnostics, square_goal)
        except Exception:
            hist.status = "solver failure"
            raise
        rel = abs(exact - rec["qoi_uh"]) / abs(exact) if exact else math.nan
        record = ConvergenceRecord(level=level, rel_err=rel, wall_ms=0.0, **rec)
        if exact and not math.isnan(record.qoi_udg):
            record.extras["rel_err_dg"] = abs(exact - record.qoi_udg) / abs(exact)
        hist.indicators.append(ind.values)
        if keep_meshes:
            hist.meshes.append(mesh)
        if mesh_dir is not None:
            write_mesh(Path(mesh_dir) / f"mesh_{level}.txt", mesh, ind.values)
        scale = abs(record.qoi_uh) if kind is not EstimatorKind.ENERGY else abs(record.extras["est_energy"]) + 1.0
        exhausted = ind.values.sum() <= 0 or ind.estimate <= exhaustion_tol * max(scale, 1e-300)
        if not exhausted and level + 1 < max_levels:
            marks = dorfler_mark(ind, theta)
            mesh = bisect(mesh, marks.elements, all_edges=all_edges)
        record.wall_ms = 1e3 * (time.perf_counter() - t0)
        hist.records.append(record)
        log.info(
            "level %d ndofs %d est %.3e rel_err %.3e", level, record.ndofs, record.estimate, rel
        )
        if exhausted:
            hist.status = "estimator exhausted"
            break
    else:
        hist.status = "completed"
    return hist
