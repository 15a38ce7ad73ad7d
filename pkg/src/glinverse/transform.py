"""Transformation-operator kernels on a uniform triangular grid.

A kernel ``K(x, t)``, ``0 <= t <= x``, is stored as an array of shape
``(N, N, m, m)`` with ``m = 2n`` and ``values[i, j] = K(x_i, t_j)``; entries
with ``j > i`` are zero.  Integrals over ``[t_j, x_i]`` use the composite
trapezoid rule on the same grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.linalg import blas, solve_triangular

from .direct import uniform_grid
from .linalg import NumericalError, ValidationError, hermitian_part, hermitian_residual

PICARD_MAX_ITER = 200
PICARD_TOL = 1e-12


def _to_block(values):
    N, _, m, _ = values.shape
    return values.transpose(0, 2, 1, 3).reshape(N * m, N * m)


def _from_block(M, m):
    N = M.shape[0] // m
    return np.ascontiguousarray(M.reshape(N, m, N, m).transpose(0, 2, 1, 3))


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Lower-triangular samples ``K(x_i, t_j)``, ``0 <= j <= i < N``."""

    h: float
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        v = self.values
        if v.ndim != 4 or v.shape[0] != v.shape[1] or v.shape[2] != v.shape[3]:
            raise ValidationError("kernel values must have shape (N, N, m, m)",
                                  shape=list(v.shape))

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[2]

    @property
    def n(self):
        return self.m // 2

    @property
    def grid(self):
        return self.h * np.arange(self.N)

    def diagonal(self):
        idx = np.arange(self.N)
        return self.values[idx, idx]

    def block_matrix(self):
        return _to_block(self.values)

    def max_abs(self):
        return float(np.abs(self.values).max(initial=0.0))


@dataclass(frozen=True, eq=False)
class FullKernelGrid:
    """Samples ``F(x_i, t_j)`` on the full square."""

    h: float
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[2]

    @property
    def n(self):
        return self.m // 2

    @property
    def grid(self):
        return self.h * np.arange(self.N)

    def block_matrix(self):
        return _to_block(self.values)

    def symmetry_residual(self):
        """``max ||F[i, j] - F[j, i]^*||`` (entrywise)."""
        return float(np.max(np.abs(self.values - self.values.transpose(1, 0, 3, 2).conj())))


def lower_mask(N):
    return np.tri(N, dtype=bool)


# ---------------------------------------------------------------------------
# Goursat problem
# ---------------------------------------------------------------------------

def _lagrange_weights(theta):
    """4-point Lagrange weights on nodes -1, 0, 1, 2 at fractional position theta."""
    t = theta
    return np.array([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                     -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6])


class _Shift:
    """Evaluate a row ``V[0..i-1]`` at positions ``j + r`` for ``j = 0..J-1``.

    ``r`` is fixed, so the interpolation weights are the same for every ``j``;
    cubic where the 4-point stencil fits, linear next to the ends.
    """

    def __init__(self, r):
        self.k = int(math.floor(r + 1e-12))
        self.theta = r - self.k
        if self.theta < 1e-12:
            self.theta = 0.0
        self.w = _lagrange_weights(self.theta)

    def __call__(self, V, J):
        k, th = self.k, self.theta
        if J <= 0:
            return V[:0]
        if th == 0.0:
            return V[k:k + J]
        out = (1 - th) * V[k:k + J] + th * V[k + 1:k + 1 + J]
        # cubic on j with k + j - 1 >= 0 and k + j + 2 <= len(V) - 1
        lo = max(0, 1 - k)
        hi = min(J, V.shape[0] - 2 - k)
        if hi > lo:
            w = self.w
            out[lo:hi] = (w[0] * V[k + lo - 1:k + hi - 1] + w[1] * V[k + lo:k + hi]
                          + w[2] * V[k + lo + 1:k + hi + 1] + w[3] * V[k + lo + 2:k + hi + 2])
        return out


def goursat_kernel(system, x_max, h, max_iter=PICARD_MAX_ITER, tol=PICARD_TOL):
    """Transformation kernel ``K`` with ``Y = (I + K) e0`` for ``B = diag(b1 I, -b2 I)``.

    An auxiliary kernel ``Rh`` is found first.  Its off-diagonal blocks start
    on the diagonal with ``Rh12(x, x) = -i Q12(x)/(b1 + b2)`` and
    ``Rh21(x, x) = i Q21(x)/(b1 + b2)`` and are integrated along the
    characteristics ``b2 x + b1 t = c`` and ``b1 x + b2 t = c``.  Its diagonal
    blocks vanish on ``t = 0`` and are integrated along ``x - t = c``.  The
    integral equations are solved by successive approximation, sweeping the
    rows in increasing ``x`` and reusing values already updated in the sweep.

    The boundary relation ``K(x, 0) B (I over H) = 0`` is then restored with a
    block-diagonal convolution kernel ``Phi``::

        Psi(x) + int_0^x Rh(x, s) Psi(s) ds = -Rh(x, 0) B (I over H),
        Psi = Phi B (I over H),
        K(x, t) = Rh(x, t) + Phi(x - t) + int_t^x Rh(x, s) Phi(s - t) ds.

    Parameters
    ----------
    system : SystemSpec
        ``B1`` and ``B2`` must be multiples of the identity.
    x_max, h : float
        Grid ``0, h, ..., x_max``.
    max_iter : int
    tol : float
        Sweeps stop once the max-norm change of the iterate is below ``tol``.

    Returns
    -------
    KernelGrid
        ``diagnostics`` records the sweep count, the last change, the
        diagonal asymmetry before symmetrization and residuals of the
        diagonal and boundary relations.
    """
    sig = system.signature
    blocks = sig.scalar_blocks()
    if blocks is None:
        raise ValidationError("goursat_kernel needs B1 = b1 I and B2 = b2 I (two eigenvalue blocks)")
    b1, b2 = blocks
    n = sig.n
    m = 2 * n
    grid = uniform_grid(x_max, h)
    N = grid.size
    pot = system.potential
    pot.check_domain(grid[-1])
    H = system.boundary.H
    I_n = np.eye(n)

    if pot.is_zero():
        K = np.zeros((N, N, m, m), dtype=complex)
        return KernelGrid(h, K, {"sweeps": 0, "last_change": 0.0, "diag_asymmetry": 0.0,
                                 "boundary_residual": 0.0, "diagonal_residual": 0.0})

    Qg = pot.evaluate(grid)
    Q12, Q21 = Qg[:, :n, n:], Qg[:, n:, :n]
    c11, c22 = -1j / b1, 1j / b2
    c12, c21 = -1j / b1, 1j / b2
    r12, r21 = b2 / b1, b1 / b2
    sh12, sh21 = _Shift(r12), _Shift(r21)

    R11 = np.zeros((N, N, n, n), dtype=complex)
    R22 = np.zeros_like(R11)
    R12 = np.zeros_like(R11)
    R21 = np.zeros_like(R11)
    idx = np.arange(N)
    R12[idx, idx] = -1j * Q12 / (b1 + b2)
    R21[idx, idx] = 1j * Q21 / (b1 + b2)

    # Characteristics that leave the diagonal between rows i-1 and i.  For
    # each row: the column indices, the start points xi and Q there.
    starts12, starts21 = [None], [None]
    for i in range(1, N):
        for r, fac, starts in ((r12, (b2, b1), starts12), (r21, (b1, b2), starts21)):
            js = np.arange(i)
            js = js[js + r > i - 1 + 1e-9]
            xi = (fac[0] * grid[i] + fac[1] * grid[js]) / (b1 + b2)
            Qx = pot.evaluate(xi) if js.size else np.zeros((0, m, m))
            starts.append((js, xi, Qx[:, :n, n:], Qx[:, n:, :n]))

    change = np.inf
    sweeps = 0
    while change > tol:
        if sweeps >= max_iter:
            raise NumericalError("Picard iteration did not converge within the iteration budget",
                                 max_iter=max_iter, last_change=float(change))
        sweeps += 1
        change = 0.0
        for i in range(1, N):
            x = grid[i]
            q12, q21 = Q12[i], Q21[i]
            qp12, qp21 = Q12[i - 1], Q21[i - 1]
            # diagonal blocks along x - t = const, zero on t = 0
            new11 = np.zeros((i + 1, n, n), dtype=complex)
            new22 = np.zeros_like(new11)
            new11[1:] = R11[i - 1, :i] + 0.5 * h * (
                c11 * (qp12 @ R21[i - 1, :i]) + c11 * (q12 @ R21[i, 1:i + 1]))
            new22[1:] = R22[i - 1, :i] + 0.5 * h * (
                c22 * (qp21 @ R12[i - 1, :i]) + c22 * (q21 @ R12[i, 1:i + 1]))
            d = max(np.abs(new11 - R11[i, :i + 1]).max(), np.abs(new22 - R22[i, :i + 1]).max())
            R11[i, :i + 1] = new11
            R22[i, :i + 1] = new22

            # off-diagonal blocks along the tilted characteristics
            for (Rt, Rs, sh, starts, cf, q, qp, sgn) in (
                    (R12, R22, sh12, starts12[i], c12, q12, qp12, -1j),
                    (R21, R11, sh21, starts21[i], c21, q21, qp21, 1j)):
                js, xi, Q12x, Q21x = starts
                qx = Q12x if Rt is R12 else Q21x
                J = i - js.size  # columns j < J come from row i - 1
                new = np.empty((i, n, n), dtype=complex)
                if J > 0:
                    prev = sh(Rt[i - 1, :i], J)
                    prevS = sh(Rs[i - 1, :i], J)
                    new[:J] = prev + 0.5 * h * cf * (qp @ prevS + q @ Rs[i, :J])
                if js.size:
                    theta = ((xi - grid[i - 1]) / h)[:, None, None]
                    S_xi = (1 - theta) * Rs[i - 1, i - 1] + theta * Rs[i, i]
                    start = sgn * qx / (b1 + b2)
                    seg = (x - xi)[:, None, None]
                    new[js] = start + 0.5 * seg * cf * (qx @ S_xi + q @ Rs[i, js])
                d = max(d, np.abs(new - Rt[i, :i]).max())
                Rt[i, :i] = new
            change = max(change, d)

    Rh = np.empty((N, N, m, m), dtype=complex)
    Rh[:, :, :n, :n] = R11
    Rh[:, :, :n, n:] = R12
    Rh[:, :, n:, :n] = R21
    Rh[:, :, n:, n:] = R22
    del R11, R12, R21, R22

    # correction: Psi(x) + int_0^x Rh(x, s) Psi(s) ds = -Rh(x, 0) BA
    BA = np.vstack([b1 * I_n, -b2 * H])
    Psi = np.zeros((N, m, n), dtype=complex)
    Psi[0] = -Rh[0, 0] @ BA
    Im = np.eye(m)
    for i in range(1, N):
        rhs = -Rh[i, 0] @ BA - 0.5 * h * (Rh[i, 0] @ Psi[0])
        if i > 1:
            rhs -= h * np.einsum("sab,sbc->ac", Rh[i, 1:i], Psi[1:i])
        Psi[i] = np.linalg.solve(Im + 0.5 * h * Rh[i, i], rhs)
    Phi1 = Psi[:, :n, :] / b1
    Phi2 = -(Psi[:, n:, :] @ np.linalg.inv(H)) / b2
    Phi = np.zeros((N, m, m), dtype=complex)
    Phi[:, :n, :n] = Phi1
    Phi[:, n:, n:] = Phi2

    K = Rh
    _add_convolution(K, Phi, h)

    diag = K[idx, idx]
    asym = hermitian_residual(diag)
    K[idx, idx] = hermitian_part(diag)
    diag = K[idx, idx]
    B = sig.B
    q_rec = 1j * (B @ diag - diag @ B)
    diag_res = float(np.abs(q_rec - Qg).max())
    bnd = float(np.abs(K[:, 0] @ B @ system.boundary.stacked()).max())
    return KernelGrid(h, K, {"sweeps": sweeps, "last_change": float(change),
                             "diag_asymmetry": asym, "diagonal_residual": diag_res,
                             "boundary_residual": bnd})


def _add_convolution(K, Phi, h, chunk=128):
    """In place: ``K += Phi(x - t) + int_t^x K(x, s) Phi(s - t) ds`` (trapezoid).

    ``K`` enters as ``Rh``.  The full-step sums ``h sum_{m >= j} Rh[i, m] Phi[m - j]``
    are row-wise correlations, done by FFT; endpoint half weights are fixed
    afterwards.
    """
    N, _, m, _ = K.shape
    L = sfft.next_fast_len(2 * N)
    # spectrum of the reversed Phi: sum_k Phi[k] exp(+2 pi i q k / L)
    Phi_hat = L * sfft.ifft(Phi, n=L, axis=0)
    idx = np.arange(N)
    Kdiag = K[idx, idx].copy()
    for s in range(0, N, chunk):
        rows = slice(s, min(N, s + chunk))
        R = K[rows]
        Rf = sfft.fft(R, n=L, axis=1)
        S = sfft.ifft(Rf @ Phi_hat[None], axis=1)[:, :N]
        S *= h
        ii = np.arange(rows.start, rows.stop)
        jj = np.arange(N)
        lag = ii[:, None] - jj[None, :]
        valid = lag >= 0
        lagc = np.where(valid, lag, 0)
        # endpoint corrections: m = j and m = i carry weight h/2
        S -= 0.5 * h * (R @ Phi[0])
        S -= 0.5 * h * (Kdiag[ii][:, None] @ Phi[lagc])
        S += Phi[lagc]
        S[~valid] = 0.0
        # on the diagonal the integral vanishes: corrections above cancel it
        R += S


# ---------------------------------------------------------------------------
# Volterra algebra
# ---------------------------------------------------------------------------

def apply_kernel(K, base):
    """``(I + K) base`` with trapezoid quadrature over ``[0, x_i]``.

    Parameters
    ----------
    K : KernelGrid
    base : array, shape (N, m, k)
        A matrix function sampled on the kernel grid.
    """
    base = np.asarray(base)
    if base.shape[0] != K.N or base.shape[1] != K.m:
        raise ValidationError("base function does not match the kernel grid",
                              kernel=[K.N, K.m], base=list(base.shape))
    h = K.h
    Kb = base + h * np.einsum("ijab,jbc->iac", K.values, base)
    idx = np.arange(K.N)
    Kb -= 0.5 * h * (K.values[:, 0] @ base[0])
    Kb -= 0.5 * h * (K.values[idx, idx] @ base)
    return Kb


def volterra_compose(A, B):
    """Trapezoid samples of ``int_{t_j}^{x_i} A(x_i, s) B(s, t_j) ds``.

    With ``A~``, ``B~`` the kernels with halved diagonal blocks this is
    ``h A~ B~`` minus ``(h/4) A_ii B_ii`` on the diagonal, which vanishes there.
    """
    h = A.h
    N, m = A.N, A.m
    At = A.values.copy()
    Bt = B.values.copy()
    idx = np.arange(N)
    At[idx, idx] *= 0.5
    Bt[idx, idx] *= 0.5
    C = h * _from_block(_to_block(At) @ _to_block(Bt), m)
    C[idx, idx] = 0.0
    return KernelGrid(h, C)


def compose_residual(R, K):
    """Max entry of ``R + K + int R K`` over the triangle."""
    C = volterra_compose(R, K)
    return float(np.abs(R.values + K.values + C.values).max())


def volterra_invert(K):
    """Kernel ``R`` of ``(I + K)^{-1} - I`` on the grid.

    Solves the trapezoid discretization of ``R + K + R K = 0`` exactly.  In
    block-matrix form, with ``K~`` the kernel with halved diagonal blocks and
    ``D`` its block diagonal,

        R (I + h K~) = -K - (h/2) D K~ - (h/4) D^2,

    a block lower-triangular system solved by one triangular solve.
    """
    h, N, m = K.h, K.N, K.m
    idx = np.arange(N)
    Kd = K.values[idx, idx]
    # right-hand side
    rhs = -K.values.copy()
    rhs -= 0.5 * h * (Kd[:, None] @ K.values)
    rhs[idx, idx] = -Kd - 0.5 * h * (Kd @ Kd)
    rhs_b = _to_block(rhs)
    del rhs
    DU = np.eye(m) + 0.5 * h * Kd
    DU_inv = np.linalg.inv(DU)
    V = h * (DU_inv[:, None] @ K.values)
    V[idx, idx] = np.eye(m)
    Vb = _to_block(V)
    del V
    Xt = solve_triangular(Vb, rhs_b.T, trans="T", lower=True, unit_diagonal=True,
                          overwrite_b=True, check_finite=False)
    del Vb, rhs_b
    X = _from_block(Xt.T, m)
    del Xt
    R = X @ DU_inv[None, :]
    R[~lower_mask(N)] = 0.0
    return KernelGrid(h, R)


def kernel_F_from_R(R):
    """``F = R + R^* + R R^*`` as a kernel on the full square.

    For ``x_i >= t_j``: ``F = R(x_i, t_j) + int_0^{t_j} R(x_i, s) R(t_j, s)^* ds``;
    the upper half is the Hermitian reflection.  On the diagonal ``R`` is
    replaced by its Hermitian part so both halves meet.
    """
    h, N, m = R.h, R.N, R.m
    idx = np.arange(N)
    Rb = _to_block(R.values)
    w = np.ones(N * m)
    w[:m] = np.sqrt(0.5)
    Rb *= w[None, :]
    P = blas.zherk(h, Rb, lower=1)
    del Rb
    P = np.tril(P)
    P += np.tril(P, -1).conj().T
    F = _from_block(P, m)
    del P
    Rd = R.values[idx, idx]
    F -= 0.5 * h * (R.values @ Rd.conj().transpose(0, 2, 1)[None, :])
    F += R.values
    F[idx, idx] = hermitian_part(F[idx, idx] - Rd + hermitian_part(Rd))
    up = ~lower_mask(N)
    F[up] = F.transpose(1, 0, 3, 2).conj()[up]
    return FullKernelGrid(h, F)
