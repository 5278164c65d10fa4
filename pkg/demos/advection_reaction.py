"""
Layers in pure advection and reaction-dominated transport
==========================================================

The exact solution has a mild and a sharp internal layer along the
direction b = (3, 1).  The goal region sits below the sharp layer, so an
energy-driven run spends most of its elements on a layer that barely
affects the quantity of interest.

The last column checks the saturation property: the dG solution should
have a smaller QoI error than the conforming one.
"""
import numpy as np

from goafem import catalog, run_adaptive

entry = catalog()["advection_reaction"]
print(f"reference QoI {entry.reference_qoi():.12f}")

for gamma in (0.0, 1000.0):
    print(f"\ngamma = {gamma:g}")
    for kind in ("energy", "goa-residual"):
        h = run_adaptive(entry.problem(gamma=gamma), kind, p=1, max_levels=18,
                         initial_mesh=entry.initial_mesh(), diagnostics_cap=None)
        err, err_dg = h.column("rel_err"), h.column("rel_err_dg")
        sat = np.mean(err_dg <= err)
        last = h.records[-1]
        print(f"  {kind:>13}: {last.ndofs:6d} NDOFs, rel err {last.rel_err:.2e}, "
              f"saturation on {sat:.0%} of levels")
