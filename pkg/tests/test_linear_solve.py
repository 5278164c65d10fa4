import numpy as np
import pytest
import scipy.sparse as sp

from goafem.assembly import ProblemDef, assemble_bh, assemble_gram, assemble_lh, assemble_qoi
from goafem.fem_basis import build_space, embedding_matrix, interpolate
from goafem.linear_solve import (
    Factorization,
    NotSPDError,
    SaddleSystem,
    SingularSystemError,
    residual_summary,
    solve_adjoint,
    solve_dg_adjoint,
    solve_dg_primal,
    solve_gram,
    solve_primal,
)
from goafem.mesh import build_cross_mesh, build_square_mesh, skeleton
from goafem.problems import SQUARE_GOAL, catalog


def setup(prob, mesh, p=1, dp=0):
    skel = skeleton(mesh)
    cg, dg = build_space(mesh, p, True), build_space(mesh, p + dp, False)
    B = assemble_bh(mesh, skel, dg, prob)
    G = assemble_gram(mesh, skel, dg, prob)
    L = assemble_lh(mesh, skel, dg, prob)
    C = embedding_matrix(cg, dg)
    qU = assemble_qoi(mesh, cg, prob.omega0)
    qV = assemble_qoi(mesh, dg, prob.omega0)
    return dict(B=B, G=G, L=L, C=C, qU=qU, qV=qV, cg=cg, dg=dg, sys=SaddleSystem(G, B, C))


@pytest.fixture(scope="module")
def cross():
    return setup(catalog()["cross_diffusion"].problem(), build_cross_mesh())


def test_homogeneous_solves(cross):
    s = cross["sys"]
    eps, u = solve_primal(s, np.zeros(s.n_V))
    assert not eps.any() and not u.any()
    v, w = solve_adjoint(s, np.zeros(s.n_U))
    assert not v.any() and not w.any()
    assert not solve_dg_primal(cross["B"], np.zeros(s.n_V)).any()
    assert not solve_dg_adjoint(cross["B"], np.zeros(s.n_V)).any()
    assert not solve_gram(cross["G"], np.zeros(s.n_V)).any()


def test_primal_block_equations(cross):
    s, G, BC, L = cross["sys"], cross["G"], cross["sys"].BC, cross["L"]
    eps, u = solve_primal(s, L)
    assert np.max(np.abs(G @ eps + BC @ u - L)) <= 1e-10 * np.max(np.abs(L))
    assert np.max(np.abs(BC.T @ eps)) <= 1e-10 * np.max(np.abs(L))
    assert max(s.reports[-1].residuals) <= 1e-10
    # energy identity
    e = eps @ G @ eps
    assert abs(e - eps @ L) <= 1e-10 * e


def test_adjoint_block_equations(cross):
    s, G, BC, qU = cross["sys"], cross["G"], cross["sys"].BC, cross["qU"]
    v, w = solve_adjoint(s, qU)
    scale = abs(v) @ (abs(G) @ abs(v)) + abs(v) @ (abs(BC) @ abs(w))
    assert abs(v @ G @ v + v @ BC @ w) <= 1e-10 * scale
    assert np.max(np.abs(BC.T @ v - qU)) <= 1e-10 * np.max(np.abs(qU))


def test_one_factorization_for_both_solves():
    d = setup(catalog()["cross_diffusion"].problem(), build_cross_mesh(0.5))
    s = d["sys"]
    solve_primal(s, d["L"])
    solve_adjoint(s, d["qU"])
    solve_primal(s, 2 * d["L"])
    assert s.factorizations == 1
    assert [r.name for r in s.reports] == ["primal", "adjoint", "primal"]


def test_c_min_on_cross(cross):
    v, _ = solve_adjoint(cross["sys"], cross["qU"])
    vdg = solve_dg_adjoint(cross["B"], cross["qV"])
    G = cross["G"]
    assert abs((v @ G @ vdg) / (v @ G @ v) - 1.0) <= 1e-8


def test_manufactured_solution_reproduced():
    # u = 1 + x - 2y lies in U_h for p = 1, so the residual minimum is zero
    def u(x):
        return 1 + x[..., 0] - 2 * x[..., 1]

    b = np.array([1.0, 0.5])
    prob = ProblemDef(kappa=1.0, gamma=2.0, velocity=lambda x: np.broadcast_to(b, np.shape(x)),
                      source=lambda x: b[0] - 2 * b[1] + 2.0 * u(x), dirichlet=u, omega0=SQUARE_GOAL)
    d = setup(prob, build_square_mesh(1, SQUARE_GOAL))
    eps, uh = solve_primal(d["sys"], d["L"])
    assert np.max(np.abs(eps)) <= 1e-9
    assert np.max(np.abs(uh - interpolate(d["cg"], u))) <= 1e-9
    udg = solve_dg_primal(d["B"], d["L"])
    assert np.max(np.abs(udg - interpolate(d["dg"], u))) <= 1e-8


def test_dg_solves(cross, rng):
    B, L, qV = cross["B"], cross["L"], cross["qV"]
    udg = solve_dg_primal(B, L)
    assert residual_summary(B, udg, L) <= 1e-10
    assert abs(L @ np.ones(len(L)) - 12.0) <= 1e-9
    assert abs(B - B.T).max() <= 1e-12 * abs(B).max()
    vdg = solve_dg_adjoint(B, qV)
    assert np.allclose(vdg, solve_dg_primal(B, qV), rtol=0, atol=1e-10 * np.abs(vdg).max())
    for _ in range(20):
        vh = rng.standard_normal(len(L))
        lhs, rhs = vdg @ (B @ vh), qV @ vh
        assert abs(lhs - rhs) <= 1e-10 * (abs(vdg) @ abs(B) @ abs(vh) + abs(qV) @ abs(vh))


def test_dg_adjoint_transposed_nonsymmetric(rng):
    d = setup(catalog()["advection_reaction"].problem(gamma=0.0), build_square_mesh(1, SQUARE_GOAL))
    B, qV = d["B"], d["qV"]
    assert abs(B - B.T).max() > 1e-3 * abs(B).max()
    f = Factorization(B)
    v = solve_dg_adjoint(f, qV)
    assert residual_summary(B.T, v, qV) <= 1e-10


def test_gram_solves(cross, rng):
    G = cross["G"]
    f = Factorization(G, spd=True)
    y = rng.standard_normal(G.shape[0])
    x = solve_gram(f, G @ y)
    assert np.max(np.abs(x - y)) <= 1e-10 * np.max(np.abs(y))
    r = rng.standard_normal(G.shape[0])
    x = solve_gram(f, r)
    assert residual_summary(G, x, r) <= 1e-11
    for _ in range(5):
        v = rng.standard_normal(G.shape[0])
        assert abs(x @ G @ v - r @ v) <= 1e-10 * (abs(x) @ abs(G) @ abs(v))


def test_errors():
    with pytest.raises(NotSPDError):
        Factorization(sp.diags([1.0, -1.0, 2.0]), spd=True)
    with pytest.raises(SingularSystemError):
        Factorization(sp.csr_matrix((3, 3)))
    G = sp.identity(4)
    with pytest.raises(ValueError):
        SaddleSystem(G, G, sp.identity(4))


@pytest.mark.parametrize("name", ["cross_diffusion", "advection_reaction", "adr_generic"])
def test_a_priori_bound(name):
    entry = catalog()[name]
    d = setup(entry.problem(), entry.initial_mesh())
    eps, _ = solve_primal(d["sys"], d["L"])
    G = d["G"]
    dual = d["L"] @ solve_gram(G, d["L"])
    assert eps @ G @ eps <= dual * (1 + 1e-12)
