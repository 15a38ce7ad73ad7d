"""Inverse spectral problems for first-order systems on the half line.

Direct side: solutions ``Y(x, lam)``, the generalized Fourier transform and
the Parseval identity.  Inverse side: the transition kernel ``F``, the
Gelfand-Levitan solve for the transformation kernel ``K`` and extraction of
the potential ``Q``.  Closed forms for step-function measures and
constructors for spectral measures are included for testing and inputs.
"""

__version__ = "0.1.0"

from .linalg import (  # noqa: E402
    BlockSignature, BoundaryMatrix, NumericalError, PotentialSpec, SystemSpec,
    ValidationError, block_assemble, block_decompose, validate_bc,
)
from .direct import (  # noqa: E402
    MatrixSolution, ParsevalResult, TestFunction, TransformedFunction, fourier_transform,
    free_solution, parseval_residual, solve_ivp, solve_matrix_batch,
)
from .transform import (  # noqa: E402
    FullKernelGrid, KernelGrid, apply_kernel, compose_residual, goursat_kernel,
    kernel_F_from_R, volterra_compose, volterra_invert,
)
from .glsolve import (  # noqa: E402
    BaseSystem, Density, InverseResult, SpectralMeasure, build_F, extract_Q, gl_residual,
    gl_solve, inverse_solve,
)
from .oracle import (  # noqa: E402
    JumpPotential, RankJumpParams, StepPotential, add_jump, add_jumps, closed_form_K,
    closed_form_Q, closed_form_S, parseval_spot_check, step_potential,
)
from .sigma import (  # noqa: E402
    AdmissibleBreakpoints, MultiplicityMeasure, multiplicity_measure, rademacher, sigma_free,
    step_measure, windowed_perturbation,
)

__all__ = [name for name in dir() if not name.startswith("_")]
