"""Direct spectral side: matrix solutions, the generalized Fourier transform
and the Parseval identity.

``Y(x, lam)`` solves ``B (1/i) Y' + Q Y = lam Y`` with ``Y(0) = (I over H)``.
The transform of a compactly supported ``f`` is ``F(lam) = int Y^* f dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .linalg import ValidationError

# lambda values processed per batch in the RK4 sweeps
_LAM_CHUNK = 20000


def uniform_grid(x_max, h):
    """Grid ``0, h, ..., x_max``; ``x_max`` must be a multiple of ``h``."""
    if not (h > 0 and x_max > 0):
        raise ValidationError("h and x_max must be positive", h=h, x_max=x_max)
    N = int(round(x_max / h))
    if N < 1 or abs(N * h - x_max) > 1e-9 * x_max:
        raise ValidationError("x_max must be an integer multiple of h", h=h, x_max=x_max)
    return h * np.arange(N + 1)


def trapezoid_weights(npts, h):
    w = np.full(npts, float(h))
    w[0] = w[-1] = 0.5 * h
    if npts == 1:
        w[0] = 0.0
    return w


@dataclass(frozen=True, eq=False)
class MatrixSolution:
    """Samples of ``Y(x, lam)``, shape ``(N, 2n, n)``."""

    lam: float
    grid: np.ndarray
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class TransformedFunction:
    lambda_grid: np.ndarray
    values: np.ndarray  # (len(lambda_grid), n)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("transform has non-finite entries")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A 2n-component function sampled on ``0, step, ..., b``."""

    __test__ = False  # not a pytest class

    b: float
    step: float
    values: np.ndarray  # (N, 2n)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        npts = int(round(self.b / self.step)) + 1
        if vals.ndim != 2 or vals.shape[0] != npts or vals.shape[1] % 2:
            raise ValidationError("test function samples do not match [0, b]",
                                  expected_points=npts, shape=list(vals.shape))
        object.__setattr__(self, "values", vals)

    @property
    def grid(self):
        return self.step * np.arange(self.values.shape[0])

    @property
    def n(self):
        return self.values.shape[1] // 2

    @classmethod
    def indicator(cls, n, component, lo, hi, step, b=None):
        """Indicator of ``[lo, hi]`` in one coordinate.

        Samples sitting exactly on an interior jump get the value 1/2 so that
        the trapezoid rule integrates the indicator exactly.
        """
        b = hi if b is None else b
        x = step * np.arange(int(round(b / step)) + 1)
        v = ((x > lo) & (x < hi)).astype(float)
        tol = 1e-9 * step
        for edge in (lo, hi):
            on = np.abs(x - edge) < tol
            inside = (edge > tol) and (edge < b - tol)
            v[on] = 0.5 if inside else 1.0
        vals = np.zeros((x.size, 2 * n), dtype=complex)
        vals[:, component] = v
        return cls(float(b), float(step), vals)

    @classmethod
    def hat(cls, n, component, lo, hi, step, b=None, coef=1.0):
        """Piecewise-linear tent with peak at the midpoint of ``[lo, hi]``."""
        b = hi if b is None else b
        x = step * np.arange(int(round(b / step)) + 1)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        v = np.clip(1.0 - np.abs(x - mid) / half, 0.0, None)
        vals = np.zeros((x.size, 2 * n), dtype=complex)
        vals[:, component] = coef * v
        return cls(float(b), float(step), vals)

    def padded(self, b):
        """Extend by zero to ``[0, b]``."""
        npts = int(round(b / self.step)) + 1
        if npts < self.values.shape[0]:
            raise ValueError("cannot shrink a test function")
        vals = np.zeros((npts, self.values.shape[1]), dtype=complex)
        vals[: self.values.shape[0]] = self.values
        return TestFunction(float(b), self.step, vals)

    def __add__(self, other):
        b = max(self.b, other.b)
        return TestFunction(b, self.step, self.padded(b).values + other.padded(b).values)

    def scale(self, c):
        return TestFunction(self.b, self.step, c * self.values)


def free_solution(sig, bc, x, lam):
    """Free solution ``e0(x, lam) = exp(i lam B^{-1} x) (I over H)``.

    ``x`` and ``lam`` broadcast against each other; the result has shape
    ``broadcast(x, lam).shape + (2n, n)``.

    Examples
    --------
    >>> from glinverse.linalg import BlockSignature, BoundaryMatrix
    >>> e = free_solution(BlockSignature.dirac(), BoundaryMatrix([[1]]), 1.0, np.pi)
    >>> np.round(e.real, 12).ravel()
    array([-1., -1.])
    """
    x, lam = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(lam, dtype=float))
    phase = (x * lam)[..., None]
    w1, u1 = sig.eig1
    w2, u2 = sig.eig2
    top = (u1 * np.exp(1j * phase / w1)[..., None, :]) @ u1.conj().T
    bottom = (u2 * np.exp(-1j * phase / w2)[..., None, :]) @ u2.conj().T @ bc.H
    return np.concatenate([top, bottom], axis=-2)


def _rk4_sweep(system, lams, grid):
    """Yield ``Y(x_k, lam)`` for all ``lams`` at each grid point.

    Arrays are laid out as ``(2n, n, len(lams))`` so that each stage is a
    pair of small BLAS products over the whole lambda batch.
    """
    sig, n = system.signature, system.n
    lams = np.asarray(lams, dtype=float)
    h = grid[1] - grid[0]
    system.potential.check_domain(grid[-1])
    D = 1j * sig.B_inv
    Y0 = system.boundary.stacked()
    Y = np.repeat(Y0[:, :, None], lams.size, axis=2).reshape(2 * n, -1).astype(complex)
    lam_row = np.tile(lams, n)
    yield Y.reshape(2 * n, n, lams.size)
    if system.potential.is_zero():
        def rhs(Y, M):
            return (D @ Y) * lam_row
        Mg = Mm = [None] * grid.size
    else:
        Mg = -D @ system.potential.evaluate(grid)
        Mm = -D @ system.potential.evaluate(grid[:-1] + 0.5 * h)

        def rhs(Y, M):
            return (D @ Y) * lam_row + M @ Y
    for k in range(grid.size - 1):
        k1 = rhs(Y, Mg[k])
        k2 = rhs(Y + 0.5 * h * k1, Mm[k])
        k3 = rhs(Y + 0.5 * h * k2, Mm[k])
        k4 = rhs(Y + h * k3, Mg[k + 1])
        Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        yield Y.reshape(2 * n, n, lams.size)


def solve_matrix_batch(system, lams, grid):
    """RK4 solutions for several lambdas, shape ``(len(grid), len(lams), 2n, n)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    out = np.empty((grid.size, lams.size, 2 * system.n, system.n), dtype=complex)
    for k, Y in enumerate(_rk4_sweep(system, lams, grid)):
        out[k] = np.moveaxis(Y, 2, 0)
    out[0] = system.boundary.stacked()
    return out


def solve_ivp(system, lam, x_max, h):
    """Integrate ``Y' = i B^{-1} (lam - Q(x)) Y`` by classical RK4.

    Parameters
    ----------
    system : SystemSpec
    lam : float
    x_max, h : float
        Uniform grid ``0, h, ..., x_max``.

    Returns
    -------
    MatrixSolution
    """
    grid = uniform_grid(x_max, h)
    Y = solve_matrix_batch(system, [lam], grid)[:, 0]
    return MatrixSolution(float(lam), grid, Y)


def fourier_transform(system, f, lambda_grid):
    """Generalized Fourier transform ``F(lam) = int_0^b Y(x, lam)^* f(x) dx``.

    Composite trapezoid on the grid of ``f``.  The free case uses the
    closed form of ``e0`` (evaluated as a polynomial in ``exp(-i lam h / b)``),
    otherwise ``Y`` comes from RK4 on the same grid.
    """
    lam = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if lam.size == 0:
        raise ValidationError("lambda grid is empty")
    n = system.n
    if f.n != n:
        raise ValidationError("test function has the wrong number of components")
    w = trapezoid_weights(f.values.shape[0], f.step)
    wf = w[:, None] * f.values
    if f.values.shape[0] == 1:
        return TransformedFunction(lam, np.zeros((lam.size, n), dtype=complex))
    if system.potential.is_zero():
        return TransformedFunction(lam, _free_transform(system, wf, f.step, lam))
    out = np.zeros((lam.size, n), dtype=complex)
    for s in range(0, lam.size, _LAM_CHUNK):
        chunk = lam[s:s + _LAM_CHUNK]
        acc = np.zeros((n, chunk.size), dtype=complex)
        for k, Y in enumerate(_rk4_sweep(system, chunk, f.grid)):
            acc += np.einsum("aip,a->ip", Y.conj(), wf[k])
        out[s:s + _LAM_CHUNK] = acc.T
    return TransformedFunction(lam, out)


def _free_transform(system, wf, step, lam):
    # e0^* f = U1 diag(exp(-i lam x / w1)) U1^* f1 + H^* U2 diag(exp(i lam x / w2)) U2^* f2
    sig, n = system.signature, system.n
    w1, u1 = sig.eig1
    w2, u2 = sig.eig2
    c1 = wf[:, :n] @ u1.conj()  # (N, n): component j is (U1^* f1)_j
    c2 = wf[:, n:] @ u2.conj()
    s1 = np.empty((lam.size, n), dtype=complex)
    s2 = np.empty((lam.size, n), dtype=complex)
    for j in range(n):
        s1[:, j] = npoly.polyval(np.exp(-1j * lam * step / w1[j]), c1[:, j])
        s2[:, j] = npoly.polyval(np.exp(1j * lam * step / w2[j]), c2[:, j])
    return s1 @ u1.T + s2 @ (system.boundary.H.conj().T @ u2).T


@dataclass(frozen=True)
class ParsevalResult:
    space: complex
    spectral: complex
    residual: float
    tail: float
    parts: dict = field(default_factory=dict)


def parseval_residual(system, sigma, f, g, lambda_truncation, lambda_step):
    """Compare ``(f, g)`` with ``(F, G)_sigma``.

    The spectral side is the trapezoid of ``F^* B1^{-1}/(2 pi) G`` over
    ``[-Lambda, Lambda]``, plus ``sum_j F(a_j)^* A_j G(a_j)`` over the jumps,
    plus the trapezoid of ``F^* Phi G`` over the density nodes.

    Returns
    -------
    ParsevalResult
        ``tail`` is ``max(|F(+-Lambda)|, |G(+-Lambda)|)``; the truncation
        error itself is not estimated.
    """
    Lam = float(lambda_truncation)
    if Lam <= 0 or lambda_step <= 0:
        raise ValidationError("truncation and lambda step must be positive")
    m = int(round(2 * Lam / lambda_step))
    slope_grid = np.linspace(-Lam, Lam, m + 1)
    jump_a = np.array([a for a, _ in sigma.jumps], dtype=float)
    dens = sigma.density
    dens_lam = dens.lam if dens is not None else np.zeros(0)
    lam_all = np.concatenate([slope_grid, jump_a, dens_lam])

    b = max(f.b, g.b)
    fp, gp = f.padded(b), g.padded(b)
    if fp.values.shape != gp.values.shape:
        raise ValidationError("test functions must share a grid step")
    wx = trapezoid_weights(fp.values.shape[0], fp.step)
    space = complex(np.sum(wx * np.einsum("ka,ka->k", fp.values.conj(), gp.values)))

    F = fourier_transform(system, f, lam_all).values
    G = fourier_transform(system, g, lam_all).values
    k0, k1 = m + 1, m + 1 + jump_a.size
    slope = sigma.slope
    wl = trapezoid_weights(m + 1, slope_grid[1] - slope_grid[0])
    part_slope = complex(np.sum(wl * np.einsum("li,ij,lj->l", F[:k0].conj(), slope, G[:k0])))
    part_jump = 0j
    for (a, A), Fa, Ga in zip(sigma.jumps, F[k0:k1], G[k0:k1]):
        part_jump += complex(Fa.conj() @ A @ Ga)
    part_dens = 0j
    if dens is not None:
        part_dens = complex(np.sum(dens.weights * np.einsum(
            "li,lij,lj->l", F[k1:].conj(), dens.Phi, G[k1:])))
    spectral = part_slope + part_jump + part_dens
    tail = float(max(np.abs(F[[0, m]]).max(), np.abs(G[[0, m]]).max()))
    return ParsevalResult(space, spectral, float(abs(space - spectral)), tail,
                          {"slope": part_slope, "jumps": part_jump, "density": part_dens})
