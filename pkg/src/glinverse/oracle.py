"""Closed-form solutions of the degenerate Gelfand-Levitan equation.

For a step increment ``Sigma = A 1_[a, inf)`` on a base system with solution
``Y1`` the kernel ``F = Y1(x, a) A Y1(t, a)^*`` has rank ``n`` and

    T(x) = int_0^x Y1(s, a)^* Y1(s, a) ds,
    S(x) = A^{1/2} (I + A^{1/2} T(x) A^{1/2})^{-1} A^{1/2},
    K(x, t) = -Y1(x, a) S(x) Y1(t, a)^*,
    Q(x) = Q1(x) + i (Y1 S Y1^* B - B Y1 S Y1^*)(x).

The same algebra applies to any finite set of jumps on the free base, with
``Y1`` replaced by the block row ``[e0(x, a_1), ..., e0(x, a_r)]``; that
form is used for oracle potentials carrying several jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .direct import (TestFunction, parseval_residual, solve_matrix_batch,
                     free_solution, uniform_grid)
from .glsolve import BaseSystem
from .linalg import (BoundaryMatrix, NumericalError, PotentialSpec, ValidationError, as_matrix,
                     hermitian_part, is_psd, psd_sqrt)


@dataclass(frozen=True, eq=False)
class RankJumpParams:
    """A jump ``A 1_[a, inf)`` added to a base system."""

    base: BaseSystem
    a: float
    A: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape != (self.base.n, self.base.n):
            raise ValidationError("jump matrix has the wrong size", shape=list(A.shape))
        if not is_psd(A):
            raise ValidationError("jump matrix is not positive semidefinite")
        object.__setattr__(self, "A", hermitian_part(A))
        object.__setattr__(self, "a", float(self.a))


def _phi1(z):
    """``(exp(z) - 1) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2, np.expm1(zs) / zs)


# ---------------------------------------------------------------------------
# Y1 and T for a base system
# ---------------------------------------------------------------------------

def _base_tables(base, a):
    """Grid values of ``Y1(., a)``, its derivative and ``T`` (non-free base)."""
    key = ("tables", float(a))
    if key in base._cache:
        return base._cache[key]
    if base.h is None or not np.isfinite(base.x_max):
        raise ValidationError("non-free base system needs a grid (x_max, h)")
    grid = uniform_grid(base.x_max, base.h)
    Y = solve_matrix_batch(base.system, [a], grid)[:, 0]
    sys = base.system
    D = 1j * sys.signature.B_inv
    Q = sys.potential.evaluate(grid)
    dY = D @ ((a * np.eye(2 * sys.n)) - Q) @ Y
    g = Y.conj().transpose(0, 2, 1) @ Y
    dg = dY.conj().transpose(0, 2, 1) @ Y
    dg = dg + dg.conj().transpose(0, 2, 1)
    h = base.h
    # trapezoid with the Euler-Maclaurin end correction, fourth order
    inc = 0.5 * h * (g[1:] + g[:-1]) + (h * h / 12) * (dg[:-1] - dg[1:])
    T = np.concatenate([np.zeros((1,) + g.shape[1:], dtype=complex), np.cumsum(inc, axis=0)])
    out = (grid, Y, dY, T, g)
    base._cache[key] = out
    return out


def _hermite(grid, f, df, x):
    """Cubic Hermite interpolation of tabulated values and derivatives."""
    h = grid[1] - grid[0]
    x = np.asarray(x, dtype=float)
    k = np.clip(np.floor(x / h).astype(int), 0, grid.size - 2)
    s = ((x - grid[k]) / h)[:, None, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * f[k] + h10 * h * df[k] + h01 * f[k + 1] + h11 * h * df[k + 1]


def base_solution(base, a, x):
    """``Y1(x, a)`` for an array of ``x``, shape ``(len(x), 2n, n)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if base.is_free():
        return free_solution(base.signature, base.system.boundary, x, a)
    grid, Y, dY, _, _ = _base_tables(base, a)
    if x.size and (x.min() < 0 or x.max() > grid[-1] * (1 + 1e-12)):
        raise ValidationError("point outside the base grid", x_max=float(grid[-1]))
    return _hermite(grid, Y, dY, x)


def gram_T(base, a, x):
    """``T(x) = int_0^x Y1(s, a)^* Y1(s, a) ds`` for an array of ``x``.

    Free base: ``x (I + H^* H)``.  Otherwise the tabulated integral is
    interpolated with its known derivative ``Y1^* Y1``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValidationError("gram_T needs x >= 0")
    if base.is_free():
        H = base.system.boundary.H
        G = np.eye(base.n) + H.conj().T @ H
        return x[:, None, None] * G[None]
    grid, _, _, T, g = _base_tables(base, a)
    return _hermite(grid, T, g, x)


def s_matrix(A, T):
    """``S = A^{1/2} (I + A^{1/2} T A^{1/2})^{-1} A^{1/2}`` for stacked ``T``."""
    As = psd_sqrt(A)
    n = As.shape[0]
    M = np.eye(n) + As @ T @ As
    return As @ np.linalg.solve(M, np.broadcast_to(As, M.shape))


def closed_form_S(params, x):
    return s_matrix(params.A, gram_T(params.base, params.a, x))


def closed_form_K(params, x, t):
    """``K(x, t) = -Y1(x, a) S(x) Y1(t, a)^*`` for broadcastable ``x``, ``t``."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    shape = x.shape
    x, t = x.ravel(), t.ravel()
    if np.any(t > x + 1e-14):
        raise ValidationError("closed_form_K needs t <= x")
    Yx = base_solution(params.base, params.a, x)
    Yt = base_solution(params.base, params.a, t)
    S = closed_form_S(params, x)
    K = -Yx @ S @ Yt.conj().transpose(0, 2, 1)
    m = 2 * params.base.n
    return K.reshape(shape + (m, m))


def closed_form_Q(params, x):
    """``Q(x) = Q1(x) + i (Y1 S Y1^* B - B Y1 S Y1^*)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = params.base
    Y = base_solution(base, params.a, x)
    S = closed_form_S(params, x)
    P = Y @ S @ Y.conj().transpose(0, 2, 1)
    B = base.signature.B
    Q = 1j * (P @ B - B @ P)
    if not base.is_free():
        Q = Q + base.system.potential.evaluate(x)
    return _clean(Q, base.n)


def _clean(Q, n):
    Q = hermitian_part(Q)
    Q[:, :n, :n] = 0.0
    Q[:, n:, n:] = 0.0
    return Q


# ---------------------------------------------------------------------------
# lazily evaluated oracle potentials
# ---------------------------------------------------------------------------

class JumpPotential:
    """Closed-form potential of one jump on an arbitrary base system."""

    def __init__(self, params):
        self.params = params
        base = params.base
        self.domain = (0.0, float(base.x_max)) if not base.is_free() else (0.0, np.inf)

    def evaluate(self, x):
        return closed_form_Q(self.params, x)


class StepPotential:
    """Closed-form potential of finitely many jumps on the free base.

    ``T`` has the blocks ``int_0^x e0(s, a_j)^* e0(s, a_k) ds``, computed in
    the eigenbases of ``B1`` and ``B2``.
    """

    domain = (0.0, np.inf)

    def __init__(self, signature, H, jumps):
        self.signature = signature
        self.bc = BoundaryMatrix(H)
        self.H = self.bc.H
        self.jumps = tuple((float(a), hermitian_part(as_matrix(A, "A"))) for a, A in jumps)
        for a, A in self.jumps:
            if not is_psd(A):
                raise ValidationError("jump matrix is not positive semidefinite", a=a)

    def _parts(self, x):
        sig, H = self.signature, self.H
        n = sig.n
        a = np.array([j[0] for j in self.jumps])
        r = a.size
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w1, u1 = sig.eig1
        w2, u2 = sig.eig2
        V = u2.conj().T @ H  # H in the eigenbasis of B2
        T = np.zeros((x.size, r * n, r * n), dtype=complex)
        for j in range(r):
            for k in range(r):
                d = a[k] - a[j]
                p1 = x[:, None] * _phi1(1j * d * x[:, None] / w1[None])  # (X, n)
                p2 = x[:, None] * _phi1(-1j * d * x[:, None] / w2[None])
                blk = (u1 * p1[:, None, :]) @ u1.conj().T + V.conj().T @ (p2[:, :, None] * V)
                T[:, j * n:(j + 1) * n, k * n:(k + 1) * n] = blk
        E = np.concatenate([free_solution(sig, self.bc, x, aj) for aj in a], axis=-1)
        Ablk = np.zeros((r * n, r * n), dtype=complex)
        for j, (_, A) in enumerate(self.jumps):
            Ablk[j * n:(j + 1) * n, j * n:(j + 1) * n] = A
        return E, s_matrix(Ablk, T)

    def kernel(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        shape = x.shape
        Ex, S = self._parts(x.ravel())
        Et, _ = self._parts(t.ravel())
        K = -Ex @ S @ Et.conj().transpose(0, 2, 1)
        return K.reshape(shape + K.shape[-2:])

    def evaluate(self, x):
        E, S = self._parts(x)
        P = E @ S @ E.conj().transpose(0, 2, 1)
        B = self.signature.B
        return _clean(1j * (P @ B - B @ P), self.signature.n)


# ---------------------------------------------------------------------------
# adding jumps
# ---------------------------------------------------------------------------

SPOT_LAMBDA = 60.0
SPOT_STEP = 0.02
SPOT_BUDGET = 2e-3


def parseval_spot_check(base, b=None, h=None):
    """Parseval residuals of ``(base.system, base.sigma)`` for hat functions.

    Uses one hat in the first and one in the last coordinate on ``[0, b]`` and
    checks ``(f, f)``, ``(g, g)`` and ``(f, g)``.  Returns the largest residual.
    """
    n = base.n
    b = min(1.0, base.x_max) if b is None else b
    h = (base.h or 1e-3) if h is None else h
    f = TestFunction.hat(n, 0, 0.0, b, h)
    g = TestFunction.hat(n, 2 * n - 1, 0.0, b, h)
    worst = 0.0
    for u, v in ((f, f), (g, g), (f, g)):
        r = parseval_residual(base.system, base.sigma, u, v, SPOT_LAMBDA, SPOT_STEP)
        worst = max(worst, r.residual)
    return worst


def add_jump(base, a, A, x_max=None, h=None, verify=True, budget=SPOT_BUDGET):
    """Base system for ``sigma + A 1_[a, inf)``.

    The new potential is evaluated lazily from the closed form, with ``Y1``
    from RK4 on the grid ``0, h, ..., x_max`` when the base is not free.

    Parameters
    ----------
    x_max, h : float, optional
        Grid of the returned system (inherited from ``base`` when omitted).
    verify : bool
        Run :func:`parseval_spot_check` on the result and raise when it
        exceeds ``budget``.
    """
    A = np.asarray(A, dtype=complex)
    if np.abs(A).max(initial=0.0) == 0.0:
        return base
    x_max = base.x_max if x_max is None else float(x_max)
    h = base.h if h is None else float(h)
    if not np.isfinite(x_max) or h is None:
        raise ValidationError("add_jump needs a grid (x_max, h) for the new system")
    params = RankJumpParams(base, a, A)
    pot = PotentialSpec.oracle(JumpPotential(params), base.n)
    system = base.system.with_potential(pot)
    new = BaseSystem(system, base.sigma.with_jump(a, A), x_max, h)
    if verify:
        worst = parseval_spot_check(new, b=min(1.0, x_max), h=h)
        if worst > budget:
            raise NumericalError("Parseval spot check failed after adding a jump",
                                 residual=worst, budget=budget, a=float(a))
        new._cache["spot_check"] = worst
    return new


def add_jumps(base, jumps, x_max=None, h=None, verify=True):
    """Add several jumps one at a time, always in increasing ``a``."""
    for a, A in sorted(jumps, key=lambda p: float(p[0])):
        base = add_jump(base, a, A, x_max=x_max, h=h, verify=verify)
    return base


def step_potential(signature, H, jumps):
    """PotentialSpec for finitely many jumps on the free base."""
    return PotentialSpec.oracle(StepPotential(signature, H, jumps), signature.n)
