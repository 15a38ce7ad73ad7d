"""Spectral densities of prescribed pointwise rank from Rademacher functions.

For n = 2 and p = 1 the density Phi(lam) is a rank-one projection scaled by
1/(2 pi) on every refined cell, and sigma(x_nu) = x_nu / (2 pi) at the
breakpoints.  For p = 2 the Hankel block of Rademacher functions is singular
on some cells, so the rank drops there; the construction still yields an
admissible measure.
"""

import numpy as np

from glinverse import (AdmissibleBreakpoints, BaseSystem, BlockSignature, inverse_solve,
                       multiplicity_measure)

nu = np.arange(-10, 11)
x = nu + 0.3 * np.sin(nu) / (1 + nu**2)

for n, p in [(2, 1), (2, 2), (3, 2)]:
    sig = BlockSignature.dirac(n)
    mm = multiplicity_measure(sig, p, AdmissibleBreakpoints(x, p))
    d = mm.diagnostics
    ranks = np.bincount(mm.cell_ranks(), minlength=n + 1)
    print(f"n={n} p={p}: cells by rank {dict(enumerate(ranks.tolist()))}, PSD {d['psd']}, "
          f"breakpoint error {d['breakpoint_error']:.1e}, tail bound holds {d['tail_ok']}")

sig = BlockSignature.dirac(2)
mm = multiplicity_measure(sig, 1, AdmissibleBreakpoints(x, 1))
res = inverse_solve(BaseSystem.free(sig), mm.measure, 2.0, 0.02)
print(f"\ninverse solve for n=2, p=1: max |Q| = {np.abs(res.potential.values).max():.3e}, "
      f"condition {res.diagnostics['gl']['max_condition']:.2f}")
