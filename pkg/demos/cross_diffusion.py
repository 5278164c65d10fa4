"""
Goal-oriented adaptivity on the cross-shaped domain
====================================================

Poisson problem with f = 1 on a cross with four re-entrant corners.  The
quantity of interest is the mean of u over a small square near one of the
corners.  We compare three ways of steering refinement and print the
relative QoI error per level.

Usage: ``python demos/cross_diffusion.py [p] [levels]``
"""
import sys

from goafem import catalog, rate_fit, run_adaptive

p = int(sys.argv[1]) if len(sys.argv) > 1 else 1
levels = int(sys.argv[2]) if len(sys.argv) > 2 else 10
entry = catalog()["cross_diffusion"]

histories = {}
for kind in ("energy", "goa-dg", "goa-residual"):
    histories[kind] = run_adaptive(
        entry.problem(), kind, p=p, max_levels=levels, initial_mesh=entry.initial_mesh()
    )

# the goal-oriented runs concentrate elements near the goal region and the
# corner closest to it, so they reach a given accuracy with fewer unknowns
print(f"{'level':>5} " + " ".join(f"{k:>22}" for k in histories))
for lvl in range(levels):
    cells = []
    for h in histories.values():
        r = h.records[lvl]
        cells.append(f"{r.ndofs:8d} {r.rel_err:13.3e}")
    print(f"{lvl:5d} " + " ".join(cells))

target = -2 * p
for kind, h in histories.items():
    s = rate_fit(h.column("ndofs"), h.column("rel_err"))
    print(f"{kind:>13}: slope vs sqrt(NDOFs) over the last 6 levels {s:6.2f} (optimal {target})")
