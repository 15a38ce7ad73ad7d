"""Plancherel for the free Dirac operator.

The transform of the indicator of [0, 1] is (1 - exp(-i lam)) / (i lam).  Its
norm in L2(d sigma0) approaches 1 = ||f||^2 as the lambda window grows; the
tail decays like 1 / Lambda.
"""

from glinverse import BlockSignature, SystemSpec, TestFunction, parseval_residual
from glinverse.sigma import sigma_free

sig = BlockSignature.dirac(1)
system = SystemSpec.free(sig)
f = TestFunction.indicator(1, 0, 0.0, 1.0, 1e-3)
for Lam in (50, 100, 200, 400):
    r = parseval_residual(system, sigma_free(sig), f, f, Lam, 0.01)
    print(f"Lambda={Lam:<4} (F,F)={r.spectral.real:.6f}  residual {r.residual:.2e}")
