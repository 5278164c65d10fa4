import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import two_triangles
from goafem.assembly import (
    FormData,
    ProblemDef,
    assemble_bh,
    assemble_gram,
    assemble_lh,
    assemble_qoi,
    local_pairing,
    local_pairings,
)
from goafem.fem_basis import build_space, embedding_matrix, interpolate
from goafem.linear_solve import Factorization
from goafem.mesh import CROSS_GOAL, build_cross_mesh, build_square_mesh, refine_uniform, skeleton
from goafem.problems import SQUARE_GOAL, catalog, tanh_layers


def const(c):
    return lambda x: np.full(np.shape(x)[:-1], float(c))


def forms(mesh, p_t, prob):
    skel = skeleton(mesh)
    dg = build_space(mesh, p_t, False)
    return skel, dg, FormData(mesh, skel, dg, prob)


DIFFUSION = ProblemDef(kappa=1.0)


def test_problem_validation():
    with pytest.raises(ValueError):
        ProblemDef(epsilon=0)
    with pytest.raises(ValueError):
        ProblemDef(kappa=-1.0)
    with pytest.raises(ValueError):
        ProblemDef(gamma=-1.0)
    assert ProblemDef(beta=0.0).beta_l == 0.0
    assert ProblemDef(beta=4.0).beta_l == 0.25


def test_bh_constant_pure_diffusion():
    # unit square, two right triangles: every edge has eta = 3 (4 + 2 sqrt 2),
    # boundary length 4
    m = two_triangles()
    skel, dg, fd = forms(m, 1, DIFFUSION)
    one = np.ones(dg.n_dofs)
    expected = 4 * 3 * (4 + 2 * np.sqrt(2))
    B = assemble_bh(m, skel, dg, DIFFUSION, fd)
    G = assemble_gram(m, skel, dg, DIFFUSION, fd)
    assert abs(one @ B @ one - expected) <= 1e-12 * expected
    assert abs(one @ G @ one - expected) <= 1e-12 * expected


def test_bh_constant_pure_advection():
    m = two_triangles()
    prob = ProblemDef(kappa=0.0, velocity=lambda x: np.broadcast_to([1.0, 0.0], np.shape(x)), beta=1.0)
    skel, dg, fd = forms(m, 1, prob)
    one = np.ones(dg.n_dofs)
    assert abs(one @ assemble_bh(m, skel, dg, prob, fd) @ one - 1.0) <= 1e-13


@pytest.mark.parametrize("eps", [-1, 1])
@pytest.mark.parametrize("p_t", [1, 2, 3])
def test_manufactured_consistency(eps, p_t):
    # polynomial exact solution of degree p_t with variable advection
    def u(x):
        X, Y = x[..., 0], x[..., 1]
        return 1 + X - 2 * Y + X * Y * (p_t >= 2) + X**3 * (p_t >= 3)

    def grad_u(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([1 + Y * (p_t >= 2) + 3 * X**2 * (p_t >= 3), -2 + X * (p_t >= 2)], axis=-1)

    def lap_u(x):
        return 6 * x[..., 0] * (p_t >= 3)

    def b(x):
        return np.stack([1 + x[..., 1], 0.5 - x[..., 0]], axis=-1)

    kappa, gamma = 0.7, 1.3

    def f(x):
        return -kappa * lap_u(x) + np.einsum("...k,...k->...", b(x), grad_u(x)) + gamma * u(x)

    prob = ProblemDef(kappa=kappa, gamma=gamma, velocity=b, source=f, dirichlet=u, epsilon=eps)
    m = refine_uniform(build_cross_mesh(0.5), 1)
    skel, dg, fd = forms(m, p_t, prob)
    uI = interpolate(dg, u)
    r = assemble_bh(m, skel, dg, prob, fd) @ uI - assemble_lh(m, skel, dg, prob, fd)
    L = assemble_lh(m, skel, dg, prob, fd)
    assert np.max(np.abs(r)) <= 1e-9 * np.max(np.abs(L))


def test_lh_examples(cross_mesh):
    prob = catalog()["cross_diffusion"].problem()
    skel, dg, fd = forms(cross_mesh, 1, prob)
    L = assemble_lh(cross_mesh, skel, dg, prob, fd)
    assert abs(L.sum() - 12.0) <= 1e-10
    zero = ProblemDef(kappa=1.0)
    assert not np.any(assemble_lh(cross_mesh, skel, dg, zero))


def test_lh_inflow_support(square_mesh):
    b = np.array([3.0, 1.0])
    prob = ProblemDef(kappa=0.0, velocity=lambda x: np.broadcast_to(b, np.shape(x)),
                      dirichlet=tanh_layers, beta=np.linalg.norm(b))
    skel, dg, fd = forms(square_mesh, 1, prob)
    L = assemble_lh(square_mesh, skel, dg, prob, fd)
    bd = skel.boundary
    inflow = bd & (skel.normal @ b < 0)
    tris = skel.left[inflow]
    allowed = np.zeros(dg.n_dofs, bool)
    allowed[dg.cell_dofs[tris]] = True
    assert np.any(L != 0)
    assert not np.any(L[~allowed])
    mid = square_mesh.vertices[skel.edges[inflow]].mean(axis=1)
    assert np.all((np.abs(mid[:, 0]) < 1e-12) | (np.abs(mid[:, 1]) < 1e-12))


def test_qoi_vector(cross_mesh):
    for p in (1, 2):
        for continuous in (True, False):
            space = build_space(cross_mesh, p, continuous)
            q = assemble_qoi(cross_mesh, space, CROSS_GOAL)
            assert abs(q @ np.ones(space.n_dofs) - 1.0) <= 1e-12
            assert q @ np.zeros(space.n_dofs) == 0.0
            x = interpolate(space, lambda z: z[..., 0])
            assert abs(q @ x - 1.3) <= 1e-12


def test_qoi_requires_goal_conforming_mesh(cross_mesh):
    space = build_space(cross_mesh, 1, True)
    with pytest.raises(ValueError):
        assemble_qoi(cross_mesh, space, ((1.25, 1.4), (0.2, 0.4)))


def catalog_problems():
    cat = catalog()
    return [
        ("cross", cat["cross_diffusion"].problem(), build_cross_mesh(0.5)),
        ("cross-nip", cat["cross_diffusion"].problem(epsilon=1), build_cross_mesh(0.5)),
        ("adv", cat["advection_reaction"].problem(gamma=0.0), build_square_mesh(1, SQUARE_GOAL)),
        ("react", cat["advection_reaction"].problem(gamma=1000.0), build_square_mesh(1, SQUARE_GOAL)),
        ("adr", cat["adr_generic"].problem(velocity=(1.0, -2.0), gamma=2.0), build_square_mesh(1, SQUARE_GOAL)),
    ]


@pytest.mark.parametrize("name,prob,mesh", catalog_problems())
@pytest.mark.parametrize("p_t", [1, 2])
def test_gram_symmetric_positive_definite(name, prob, mesh, p_t):
    skel, dg, fd = forms(mesh, p_t, prob)
    G = assemble_gram(mesh, skel, dg, prob, fd)
    assert abs(G - G.T).max() <= 1e-12 * abs(G).max()
    Factorization(G, spd=True)


def test_gram_degenerate_norm():
    m = two_triangles()
    skel, dg, fd = forms(m, 1, ProblemDef(kappa=0.0))
    with pytest.raises(ValueError, match="degenerate norm"):
        assemble_gram(m, skel, dg, ProblemDef(kappa=0.0), fd)


def test_no_streamline_term_without_velocity(cross_mesh):
    skel, dg, fd = forms(cross_mesh, 1, DIFFUSION)
    assert DIFFUSION.beta_l == 0.0
    assert not np.any(fd.streamline())


def diffusion_operators(eps, p_t=2):
    m = refine_uniform(build_cross_mesh(0.5), 1)
    prob = ProblemDef(kappa=1.0, epsilon=eps)
    skel, dg, fd = forms(m, p_t, prob)
    return assemble_bh(m, skel, dg, prob, fd), assemble_gram(m, skel, dg, prob, fd)


def test_sip_coercivity(rng):
    B, G = diffusion_operators(-1)
    for _ in range(100):
        v = rng.standard_normal(B.shape[0])
        assert v @ B @ v >= 0.5 * (v @ G @ v)


def test_nip_energy_identity(rng):
    B, G = diffusion_operators(1)
    for _ in range(20):
        v = rng.standard_normal(B.shape[0])
        e = v @ G @ v
        assert abs(v @ B @ v - e) <= 1e-11 * e


def test_sip_symmetric():
    B, _ = diffusion_operators(-1)
    assert abs(B - B.T).max() <= 1e-12 * abs(B).max()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_upwind_form_positive_semidefinite(seed, bx, by):
    b = np.array([bx, by])
    if np.linalg.norm(b) < 1e-3:
        b = np.array([1.0, 0.0])
    prob = ProblemDef(kappa=0.0, velocity=lambda x: np.broadcast_to(b, np.shape(x)),
                      beta=float(np.linalg.norm(b)))
    m = build_square_mesh(1, SQUARE_GOAL)
    skel, dg, fd = forms(m, 1, prob)
    B = assemble_bh(m, skel, dg, prob, fd)
    v = np.random.default_rng(seed).standard_normal(dg.n_dofs)
    assert v @ B @ v >= -1e-12 * abs(B).max() * (v @ v)


@pytest.mark.parametrize("name,prob,mesh", catalog_problems()[::2])
def test_localization_identity(name, prob, mesh, rng):
    skel, dg, fd = forms(mesh, 2, prob)
    G = assemble_gram(mesh, skel, dg, prob, fd)
    for _ in range(10):
        w, v = rng.standard_normal((2, dg.n_dofs))
        loc = local_pairings(mesh, skel, dg, prob, w, v, fd)
        assert abs(loc.sum() - w @ G @ v) <= 1e-11 * abs(w) @ abs(G) @ abs(v)
        assert np.all(local_pairings(mesh, skel, dg, prob, w, w, fd) >= 0)
    T = 3
    assert local_pairing(mesh, skel, dg, prob, w, v, T, fd) == pytest.approx(loc[T], rel=1e-14)
    with pytest.raises(IndexError):
        local_pairing(mesh, skel, dg, prob, w, v, mesh.n_triangles, fd)


def test_local_pairing_continuous_function_has_no_jump_terms(rng):
    m = two_triangles()
    prob = ProblemDef(kappa=1.0, gamma=1.0, velocity=lambda x: np.broadcast_to([1.0, 2.0], np.shape(x)))
    skel, dg, fd = forms(m, 2, prob)
    cg = build_space(m, 2, True)
    w = embedding_matrix(cg, dg) @ rng.standard_normal(cg.n_dofs)
    v = rng.standard_normal(dg.n_dofs)
    got = local_pairings(m, skel, dg, prob, w, v, fd)
    # volume terms plus boundary-edge terms only, assembled by hand per triangle
    d = dg.cell_dofs
    vol = np.einsum("ti,tij,tj->t", w[d], fd.element_gram(), v[d])
    ed, eg = fd.edge_dofs(), fd.edge_gram()
    bd = np.flatnonzero(skel.boundary)
    edge = np.einsum("ei,eij,ej->e", w[ed[bd]], eg[bd], v[ed[bd]])
    want = vol + np.bincount(skel.left[bd], edge, minlength=2)
    assert np.allclose(got, want, rtol=1e-13, atol=1e-13 * np.abs(want).max())
