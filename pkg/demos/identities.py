"""
Discrete identities behind the estimators
==========================================

One SOLVE/ESTIMATE round on the initial cross mesh, printing the quantities
the goal-oriented estimates are built from.  The gap q(u_dg) - q(u_h)
equals (eps_h, v_dg* - v*) in the V_h inner product up to round-off, and the
adjoint residual estimate tracks it closely.
"""
from goafem import catalog
from goafem.adaptivity import identity_residuals, solve_level

entry = catalog()["cross_diffusion"]
prob = entry.problem()
rec, ind, s = solve_level(entry.initial_mesh(), prob, "goa-residual", p=1, delta_p=0)

G, eps = s["G"], s["eps"]
d = s["v_dg"] - s["v_star"]
gap = s["q_V"] @ s["u_dg"] - s["q_U"] @ s["u"]
print(f"NDOFs                     {rec['ndofs']}")
print(f"q(u) reference            {prob.exact_qoi:.12f}")
print(f"q(u_h)                    {rec['qoi_uh']:.12f}")
print(f"q(u_dg)                   {rec['qoi_udg']:.12f}")
print(f"q(u_dg) - q(u_h)          {gap:+.6e}")
print(f"(eps, v_dg* - v*)         {eps @ G @ d:+.6e}")
print(f"l_h(v_dg* - v*)           {s['L'] @ d:+.6e}")
print(f"|(eps, eps*)|             {rec['extras']['est_goa_res']:.6e}")
print(f"energy estimate |eps|^2   {rec['extras']['est_energy']:.6e}")

ids = identity_residuals(G, s["B"], s["C"], s["L"], s["q_U"], s["q_V"], eps, s["u"],
                         s["v_star"], s["v_dg"], s["u_dg"])
for k, v in ids.items():
    if k != "qoi_gap":
        print(f"  {k:8s} {v:.2e}")

# indicators are products of local norms; their sum bounds the global value
print(f"sum of indicators {ind.values.sum():.3e} >= estimate {ind.estimate:.3e}")
