"""Inverse spectral side: transition kernel, Gelfand-Levitan solve, potential.

Given a base system ``L1`` with spectral measure ``sigma1`` and an increment
``Sigma``, the transition kernel is

    F(x, t) = int Y1(x, lam) dSigma(lam) Y1(t, lam)^*,

and the kernel ``K`` of the transformation operator solves

    F(x, t) + K(x, t) + int_0^x K(x, s) F(s, t) ds = 0,   0 <= t <= x.

The new potential is ``Q = Q1 + i (B K(x, x) - K(x, x) B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .direct import free_solution, solve_matrix_batch, trapezoid_weights, uniform_grid
from .linalg import (
    BlockSignature, NumericalError, PotentialSpec, SystemSpec, ValidationError,
    as_matrix, hermitian_part, hermitian_residual, is_psd,
)
from .transform import FullKernelGrid, KernelGrid, _from_block, _to_block

COND_MAX = 1e12
SOLVER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Density:
    """Sampled density ``dSigma_ac = Phi(lam) dlam`` with quadrature weights."""

    lam: np.ndarray
    Phi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        Phi = np.asarray(self.Phi, dtype=complex)
        w = np.asarray(self.weights, dtype=float)
        if lam.ndim != 1 or lam.size == 0 or Phi.shape[0] != lam.size or w.shape != lam.shape:
            raise ValidationError("density nodes, values and weights must have matching length")
        if Phi.ndim != 3 or Phi.shape[1] != Phi.shape[2]:
            raise ValidationError("density values must be n x n matrices")
        if hermitian_residual(Phi) > 1e-10 * max(1.0, np.abs(Phi).max()):
            raise ValidationError("density values are not Hermitian",
                                  residual=hermitian_residual(Phi))
        for name, arr in (("lam", lam), ("Phi", hermitian_part(Phi)), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def trapezoid(cls, lam, Phi):
        """Density on a uniform grid with composite trapezoid weights."""
        lam = np.asarray(lam, dtype=float)
        if lam.size > 1:
            steps = np.diff(lam)
            if np.any(steps <= 0):
                raise ValidationError("density grid must be strictly increasing")
            w = np.zeros(lam.size)
            w[:-1] += 0.5 * steps
            w[1:] += 0.5 * steps
        else:
            w = np.zeros(1)
        return cls(lam, Phi, w)


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """``sigma = sigma0 + Sigma`` with slope ``B1^{-1}/(2 pi)``.

    ``jumps`` is a tuple of ``(a, A)`` with ``A`` Hermitian PSD and strictly
    increasing ``a``; ``density`` is an optional :class:`Density` relative to
    ``sigma0``.  A signed density is accepted as long as
    ``B1^{-1}/(2 pi) + Phi(lam)`` stays PSD.
    """

    signature: BlockSignature
    jumps: tuple = ()
    density: Density | None = None

    def __post_init__(self):
        n = self.signature.n
        clean = []
        last = -np.inf
        for a, A in self.jumps:
            a = float(a)
            A = as_matrix(A, "A")
            if A.shape != (n, n):
                raise ValidationError("jump matrix has the wrong size", a=a, shape=list(A.shape))
            if hermitian_residual(A) > 1e-10 * max(1.0, np.abs(A).max()):
                raise ValidationError("jump matrix is not Hermitian", a=a)
            if not is_psd(A):
                raise ValidationError("jump matrix is not positive semidefinite", a=a,
                                      min_eigenvalue=float(np.linalg.eigvalsh(hermitian_part(A)).min()))
            if a <= last:
                raise ValidationError("jump abscissas must be strictly increasing", a=a)
            last = a
            A = hermitian_part(A)
            A.setflags(write=False)
            clean.append((a, A))
        object.__setattr__(self, "jumps", tuple(clean))
        if self.density is not None:
            d = self.density
            if d.Phi.shape[1] != n:
                raise ValidationError("density has the wrong matrix size")
            total = self.slope[None] + d.Phi
            w = np.linalg.eigvalsh(total)
            if np.any(w < -1e-12 * max(1.0, np.abs(w).max())):
                k = int(np.argmin(w.min(axis=1)))
                raise ValidationError("sigma is not increasing: B1^{-1}/(2 pi) + Phi is not PSD",
                                      lam=float(d.lam[k]), min_eigenvalue=float(w.min()))

    @property
    def n(self):
        return self.signature.n

    @property
    def slope(self):
        return self.signature.B1_inv / (2 * np.pi)

    def is_free(self):
        return not self.jumps and self.density is None

    def with_jump(self, a, A):
        """Add ``A 1_[a, inf)``; equal abscissas are merged."""
        jumps = dict((float(x), np.array(B)) for x, B in self.jumps)
        a = float(a)
        jumps[a] = jumps.get(a, 0) + np.asarray(A, dtype=complex)
        return SpectralMeasure(self.signature, tuple(sorted(jumps.items(), key=lambda p: p[0])),
                               self.density)

    def increment_over(self, other):
        """Jumps of ``self`` not present in ``other`` (densities must agree)."""
        base = {float(a): A for a, A in other.jumps}
        out = []
        for a, A in self.jumps:
            D = A - base.get(a, 0)
            if np.abs(D).max() > 0:
                out.append((a, D))
        return SpectralMeasure(self.signature, tuple(out), None)


@dataclass(frozen=True, eq=False)
class BaseSystem:
    """Reference system ``(L1, sigma1)`` for the inverse problem.

    The free base has ``Q1 = 0`` and ``sigma1 = sigma0``.  A non-free base
    carries the grid ``0, h, ..., x_max`` on which its solutions ``Y1`` are
    computed.
    """

    system: SystemSpec
    sigma: SpectralMeasure
    x_max: float = np.inf
    h: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def free(cls, signature, H=None):
        system = SystemSpec.free(signature, H)
        return cls(system, SpectralMeasure(signature))

    def is_free(self):
        return self.system.potential.is_zero()

    @property
    def signature(self):
        return self.system.signature

    @property
    def n(self):
        return self.system.n

    def solution(self, lams, grid):
        """``Y1(x, lam)`` on ``grid`` for each lambda, shape ``(N, L, 2n, n)``."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        if self.is_free():
            return free_solution(self.signature, self.system.boundary,
                                 grid[:, None], lams[None, :])
        if grid[-1] > self.x_max * (1 + 1e-12):
            raise ValidationError("base system is only known on [0, x_max]",
                                  x_max=self.x_max, required=float(grid[-1]))
        return solve_matrix_batch(self.system, lams, grid)


def phase_sampling_ok(lam, x_max, signature, points=20):
    """Whether a lambda grid resolves ``exp(i lam x_max / b)`` with ``points`` per period."""
    lam = np.sort(np.asarray(lam, dtype=float))
    if lam.size < 2:
        return True, 0.0
    dl = float(np.max(np.diff(lam)))
    period = 2 * np.pi * signature.min_speed() / x_max
    return dl <= period / points, dl


def build_F(base, Sigma, x_max, h):
    """Transition kernel ``F`` on the square ``[0, x_max]^2``.

    ``F(x, t) = sum_j Y1(x, a_j) A_j Y1(t, a_j)^* + sum_q w_q Y1(x, l_q) Phi_q Y1(t, l_q)^*``
    where the second sum is the quadrature over the density nodes.

    Returns
    -------
    FullKernelGrid
        ``diagnostics`` holds the symmetry residual and, when the density
        grid under-resolves the phase, a ``warnings`` list.
    """
    grid = uniform_grid(x_max, h)
    N, n = grid.size, Sigma.n
    m = 2 * n
    if Sigma.signature is not base.signature and (
            np.abs(Sigma.signature.B1 - base.signature.B1).max() > 0
            or np.abs(Sigma.signature.B2 - base.signature.B2).max() > 0):
        raise ValidationError("measure and base system use different signatures")
    lams, weights = [], []
    for a, A in Sigma.jumps:
        lams.append(a)
        weights.append(A)
    diagnostics = {"warnings": []}
    if Sigma.density is not None:
        d = Sigma.density
        lams.extend(d.lam)
        weights.extend(d.weights[:, None, None] * d.Phi)
        ok, dl = phase_sampling_ok(d.lam, x_max, base.signature)
        if not ok:
            diagnostics["warnings"].append(
                f"density grid step {dl:.3g} under-resolves the phase on [0, {x_max}]")
    F = np.zeros((N, N, m, m), dtype=complex)
    if lams:
        lams = np.asarray(lams, dtype=float)
        W = np.asarray(weights, dtype=complex)
        # chunk over lambda to bound memory: E is (N m, chunk n)
        chunk = max(1, 4_000_000 // max(1, N * m * n))
        Fb = np.zeros((N * m, N * m), dtype=complex)
        for s in range(0, lams.size, chunk):
            Y = base.solution(lams[s:s + chunk], grid)  # (N, L, m, n)
            L = Y.shape[1]
            E = Y.transpose(0, 2, 1, 3).reshape(N * m, L * n)
            Wb = np.zeros((L * n, L * n), dtype=complex)
            for q in range(L):
                Wb[q * n:(q + 1) * n, q * n:(q + 1) * n] = W[s + q]
            Fb += E @ (Wb @ E.conj().T)
        F = _from_block(Fb, m)
        del Fb
    out = FullKernelGrid(h, F, diagnostics)
    diagnostics["symmetry_residual"] = out.symmetry_residual()
    return out


def _section_sample(N, count=8):
    return sorted(set(np.linspace(1, N - 1, count).round().astype(int).tolist()) | {N - 1})


def gl_solve(F, cond_max=COND_MAX):
    """Solve the discrete Gelfand-Levitan equation for every grid ``x_i``.

    For each ``i`` the Nystrom system on ``[0, x_i]`` with trapezoid weights
    ``w^(i)`` is

        K(x_i, t_k) + sum_m w_m K(x_i, s_m) F(s_m, t_k) = -F(x_i, t_k),  k <= i.

    After the substitution ``K = kappa W^{-1/2}`` its matrix is the leading
    section of ``A = I + W^{1/2} F W^{1/2}`` (global weights ``h/2, h, ...``)
    except for the last weight, which is ``h/2`` instead of ``h``.  All
    sections are handled by one Cholesky factorization ``A = L L^*`` and the
    inverse ``G = L^{-1}``: the last block row of the section inverse is
    ``G_ii^* G[i, :i+1]``, and the half weight is a rank-``2n`` update
    corrected with the Woodbury identity.

    Raises
    ------
    NumericalError
        If ``A`` is not positive definite, or its condition number (1-norm,
        LAPACK estimate) exceeds ``cond_max`` for the full grid or a sampled
        section.  The error names the grid ``x`` where it happens.
    """
    h, N, m = F.h, F.N, F.m
    idx = np.arange(N)
    K = np.zeros((N, N, m, m), dtype=complex)
    K[0, 0] = -F.values[0, 0]
    if N == 1:
        return KernelGrid(h, K, {"condition": {}})
    w = np.full(N, h)
    w[0] = 0.5 * h
    sw = np.sqrt(w)
    p = N * m
    A = np.empty((p, p), dtype=complex)
    A4 = A.reshape(N, m, N, m)
    np.multiply(F.values.transpose(0, 2, 1, 3),
                (sw[:, None, None, None] * sw[None, None, :, None]), out=A4)
    A[np.diag_indices(p)] += 1.0
    sections = _section_sample(N)
    absA = np.abs(A)
    col = np.cumsum(absA, axis=0)
    norms = {i: float(col[m * (i + 1) - 1, : m * (i + 1)].max()) for i in sections}
    del absA, col

    c, info = lapack.zpotrf(A, lower=1, clean=1, overwrite_a=1)
    del A
    if info > 0:
        i_bad = (info - 1) // m
        raise NumericalError("Gelfand-Levitan operator is not positive definite",
                             x=float(i_bad * h), index=int(i_bad))
    if info < 0:
        raise NumericalError("Cholesky factorization failed", info=int(info))

    cond = {}
    for i in sections:
        q = m * (i + 1)
        rc, _ = lapack.zpocon(c[:q, :q], norms[i], uplo="L")
        cond[float(i * h)] = float(np.inf if rc == 0 else 1.0 / rc)
    worst = max(cond, key=cond.get)
    if cond[worst] > cond_max:
        raise NumericalError("Gelfand-Levitan system is near singular",
                             x=worst, condition=cond[worst], threshold=cond_max)

    G, info = lapack.ztrtri(c, lower=1, overwrite_c=1)
    del c
    if info != 0:
        raise NumericalError("triangular inversion failed", info=int(info))
    G4 = G.T.reshape(N, m, N, m).transpose(2, 0, 3, 1)  # G4[i, j] = block (i, j) of G
    Gd = np.ascontiguousarray(G4[idx, idx])
    Gh = Gd.conj().transpose(0, 2, 1)
    C = np.sqrt(2.0) * np.linalg.solve(np.eye(m) + Gh @ Gd, Gh)
    E = C[:, None] @ G4
    del G, G4
    E[idx, idx] *= np.sqrt(2.0)
    E[idx, idx] -= np.eye(m)
    scale = np.sqrt(2.0 / h) / np.sqrt(h)
    E *= scale
    E[:, 0] *= np.sqrt(2.0)
    E[idx, idx] *= np.sqrt(2.0)
    E[0, 0] = -F.values[0, 0]
    asym = hermitian_residual(E[idx, idx])
    E[idx, idx] = hermitian_part(E[idx, idx])
    return KernelGrid(h, E, {"condition": cond, "max_condition": cond[worst],
                             "diag_asymmetry": asym})


def gl_residual(K, F):
    """Max entry of the discrete GL residual over ``0 <= t_k <= x_i``."""
    h, N, m = K.h, K.N, K.m
    P = h * _from_block(_to_block(K.values) @ _to_block(F.values), m)
    P -= 0.5 * h * (K.values[:, 0][:, None] @ F.values[0][None, :])
    idx = np.arange(N)
    P -= 0.5 * h * (K.values[idx, idx][:, None] @ F.values)
    res = K.values + F.values + P
    res[~np.tri(N, dtype=bool)] = 0.0
    return float(np.abs(res).max())


def extract_Q(K, signature, base=None, solver_tol=SOLVER_TOL):
    """Potential ``Q(x_i) = Q1(x_i) + i (B K(x_i, x_i) - K(x_i, x_i) B)``.

    The result is symmetrized and its diagonal blocks are zeroed; both
    defects are measured first and must stay below ``100 * solver_tol``
    (relative to ``max(1, |Q|)``).
    """
    D = K.diagonal()
    B = signature.B
    Q = 1j * (B @ D - D @ B)
    if base is not None and not base.is_free():
        Q = Q + base.system.potential.evaluate(K.grid)
    n = signature.n
    scale = max(1.0, float(np.abs(Q).max(initial=0.0)))
    asym = hermitian_residual(Q)
    diag = float(max(np.abs(Q[:, :n, :n]).max(), np.abs(Q[:, n:, n:]).max()))
    limit = 100 * solver_tol * scale
    if asym > limit or diag > limit:
        raise NumericalError("reconstructed potential fails the structural checks",
                             asymmetry=asym, diagonal_blocks=diag, limit=limit)
    Q = hermitian_part(Q)
    Q[:, :n, :n] = 0.0
    Q[:, n:, n:] = 0.0
    pot = PotentialSpec.sampled(K.grid, Q)
    return PotentialSpec("sampled", n, x=pot.x, values=pot.values, smoothness="C0",
                         asymmetry=asym, diagonal_magnitude=diag)


@dataclass(frozen=True, eq=False)
class InverseResult:
    potential: PotentialSpec
    kernel: KernelGrid
    diagnostics: dict
    system: SystemSpec


def inverse_solve(base, Sigma, x_max, h, cond_max=COND_MAX):
    """build_F, gl_solve and extract_Q in sequence.

    Returns
    -------
    InverseResult
        ``system`` is the reconstructed system ``(B, H, Q)``.  ``diagnostics``
        gathers condition estimates, symmetry residuals and the boundary
        residual ``max ||K(x, 0) B (I over H)||``.
    """
    F = build_F(base, Sigma, x_max, h)
    diag = {"F": dict(F.diagnostics)}
    K = gl_solve(F, cond_max=cond_max)
    del F
    diag["gl"] = dict(K.diagnostics)
    sig = base.signature
    bnd = K.values[:, 0] @ sig.B @ base.system.boundary.stacked()
    diag["boundary_residual"] = float(np.abs(bnd).max())
    Q = extract_Q(K, sig, base)
    diag["Q_asymmetry"] = Q.asymmetry
    diag["Q_diagonal_blocks"] = Q.diagonal_magnitude
    return InverseResult(Q, K, diag, base.system.with_potential(Q))
