"""Constructors for spectral-measure inputs.

Covers the free measure, step measures, densities prescribed on a finite
window and the Rademacher construction that produces a density of prescribed
pointwise rank ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .glsolve import Density, SpectralMeasure
from .linalg import BlockSignature, ValidationError, as_matrix

RANK_TOL = 1e-12


def sigma_free(sig):
    """Free spectral function ``B1^{-1} lam / (2 pi)`` (no jumps, no density)."""
    return SpectralMeasure(sig)


def step_measure(sig, jumps):
    """``sigma0`` plus point masses ``A_j`` at ``a_j``; ``jumps`` is any iterable of pairs."""
    pairs = sorted(((float(a), as_matrix(A, "A")) for a, A in jumps), key=lambda p: p[0])
    return SpectralMeasure(sig, tuple(pairs))


def rademacher(j, x):
    """Rademacher function ``psi_j``.

    ``psi_1`` has period one and equals ``+1`` on ``(0, 1/2]`` and ``-1`` on
    ``(1/2, 1]``; higher indices are ``psi_j(x) = psi_1(2^(j-1) x)`` so that
    ``psi_1`` is the base function itself.

    Parameters
    ----------
    j : int
        Index, at least 1.
    x : float or array_like

    Returns
    -------
    int or ndarray of int
    """
    if int(j) != j or j < 1:
        raise ValidationError("Rademacher index must be a positive integer", j=j)
    x = np.asarray(x, dtype=float)
    y = np.ldexp(x, int(j) - 1)
    frac = y - np.ceil(y) + 1.0  # in (0, 1], so integers map to 1
    out = np.where(frac <= 0.5, 1, -1)
    return int(out) if out.ndim == 0 else out


def rademacher_block(n, p, u):
    """Hankel block ``psi0(u)[r, c] = psi_{r+c+1}(u)``, shape ``u.shape + (p, n)``."""
    u = np.asarray(u, dtype=float)
    idx = np.arange(p)[:, None] + np.arange(n)[None, :] + 1
    out = np.empty(u.shape + (p, n))
    for j in range(1, n + p):
        out[..., idx == j] = rademacher(j, u)[..., None]
    return out


@dataclass(frozen=True, eq=False)
class AdmissibleBreakpoints:
    """Breakpoints ``x_nu`` on a finite window together with ``mu`` at refined abscissas.

    Parameters
    ----------
    x : array_like
        Strictly increasing breakpoints, one of which is exactly 0.
    p : int
        Target rank.
    mu : array_like, optional
        Values ``mu(a_{nu j})`` on the refined abscissas in increasing order,
        ``(len(x) - 1) * 2^(n+p) + 1`` of them.  Omitted means ``mu`` is the
        identity, which is always admissible.
    """

    x: np.ndarray
    p: int = 1
    mu: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if x.size < 2:
            raise ValidationError("need at least two breakpoints", clause="window")
        if not np.all(np.isfinite(x)):
            raise ValidationError("breakpoints must be finite", clause="window")
        if np.any(np.diff(x) <= 0):
            k = int(np.argmin(np.diff(x)))
            raise ValidationError("breakpoints must be strictly increasing",
                                  clause="strictly increasing", index=k)
        if not np.any(x == 0.0):
            raise ValidationError("x_0 = 0 must be one of the breakpoints", clause="x_0 = 0")
        if int(self.p) != self.p or self.p < 1:
            raise ValidationError("p must be a positive integer", clause="p", p=self.p)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", int(self.p))
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float).ravel()
            mu.setflags(write=False)
            object.__setattr__(self, "mu", mu)

    @property
    def origin(self):
        """Position of ``x_0 = 0`` in ``x``."""
        return int(np.flatnonzero(self.x == 0.0)[0])

    @property
    def gap_square_sum(self):
        return float(np.sum(np.diff(self.x) ** 2))

    def refined(self, n):
        """Refined abscissas ``a_{nu j}`` for every window interval, plus the right end."""
        r = 2 ** (n + self.p)
        x = self.x
        j = np.arange(r) / r
        a = (x[:-1, None] + j[None, :] * np.diff(x)[:, None]).ravel()
        return np.append(a, x[-1])

    def check(self, n):
        """Validate ``mu`` against the refinement for dimension ``n``; return ``mu`` values."""
        a = self.refined(n)
        if self.mu is None:
            return a
        if self.mu.size != a.size:
            raise ValidationError("mu must be given at every refined abscissa",
                                  clause="mu count", expected=int(a.size), got=int(self.mu.size))
        d = np.diff(self.mu)
        if np.any(d <= 0):
            k = int(np.argmin(d))
            raise ValidationError("mu must increase strictly between refined abscissas",
                                  clause="mu strictly increasing", abscissa=float(a[k]))
        return self.mu


@dataclass(frozen=True, eq=False)
class MultiplicityMeasure:
    """Output of :func:`multiplicity_measure`.

    ``cells`` holds the refined cell edges, ``cell_Phi`` the constant density on
    each cell and ``cell_mass`` its ``rho`` weight (the cell length).
    """

    measure: SpectralMeasure
    breakpoints: AdmissibleBreakpoints
    cells: np.ndarray
    cell_Phi: np.ndarray
    cell_mass: np.ndarray
    cell_rho_density: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.breakpoints.p

    def singular_values(self):
        return np.linalg.svd(self.cell_Phi, compute_uv=False)

    def cell_ranks(self, tol=RANK_TOL):
        s = self.singular_values()
        return np.sum(s > tol, axis=1)

    def sigma_at_breakpoints(self):
        """``sigma(x_nu)`` with ``sigma(0) = 0`` from cumulative cell masses."""
        bp = self.breakpoints
        r = self.cells.size - 1
        per = r // (bp.x.size - 1)
        mass = self.cell_Phi * self.cell_mass[:, None, None]
        cum = np.concatenate([np.zeros((1,) + mass.shape[1:]), np.cumsum(mass, axis=0)])
        cum = cum - cum[bp.origin * per]
        return cum[::per]

    def tail_integrals(self, samples=16):
        """Per-interval ``int ||sigma - sigma0||`` and the bound ``C (x_{nu+1}-x_nu)^2``."""
        bp = self.breakpoints
        sig = self.measure.signature
        slope = sig.B1_inv / (2 * np.pi)
        sb = self.sigma_at_breakpoints()
        per = (self.cells.size - 1) // (bp.x.size - 1)
        n = sig.n
        C = (n + 1) * np.linalg.norm(sig.B1_inv, 2) / (2 * np.pi)
        vals = np.empty(bp.x.size - 1)
        g, gw = np.polynomial.legendre.leggauss(samples)
        for v in range(bp.x.size - 1):
            s = sb[v].copy()
            total = 0.0
            for c in range(v * per, (v + 1) * per):
                lo, hi = self.cells[c], self.cells[c + 1]
                t = 0.5 * (hi - lo) * (g + 1)
                lam = lo + t
                # sigma is linear on the cell under the uniform rho surrogate
                d = (s[None] + t[:, None, None] * self.cell_Phi[c] * self.cell_rho_density[c]
                     - lam[:, None, None] * slope[None])
                total += 0.5 * (hi - lo) * np.sum(gw * np.linalg.norm(d, 2, axis=(1, 2)))
                s = s + self.cell_Phi[c] * self.cell_mass[c]
            vals[v] = total
        return vals, C * np.diff(bp.x) ** 2, C


def multiplicity_measure(sig, p, bp, nodes_per_cell=4):
    """Spectral measure with density ``Phi`` of rank ``p`` on every refined cell.

    On ``[x_nu, x_{nu+1})`` the density is
    ``Phi = (2 pi p)^{-1} B1^{-1/2} psi^* psi B1^{-1/2}`` with ``psi`` the
    ``p x n`` Rademacher block rescaled to the interval.  The time change
    ``rho`` gives each refined cell mass equal to its length, so
    ``sigma(x_nu) = B1^{-1} x_nu / (2 pi)``.  Outside the window the measure
    coincides with ``sigma0``.

    Parameters
    ----------
    sig : BlockSignature
    p : int
        Rank, ``1 <= p <= n``.
    bp : AdmissibleBreakpoints or array_like
        Breakpoint data; a plain array is taken as ``x`` with identity ``mu``.
    nodes_per_cell : int
        Gauss-Legendre nodes used to hand each cell to the quadrature of
        ``build_F``.

    Returns
    -------
    MultiplicityMeasure

    Notes
    -----
    For ``p >= 2`` the Hankel block can lose rank on some cells (for
    ``n = p = 2`` its determinant is ``psi_1 psi_3 - 1``).  Ranks are reported
    in ``diagnostics`` rather than enforced.
    """
    if not isinstance(bp, AdmissibleBreakpoints):
        bp = AdmissibleBreakpoints(bp, p=p)
    if bp.p != p:
        raise ValidationError("breakpoint data was built for a different p", clause="p",
                              expected=p, got=bp.p)
    n = sig.n
    if int(p) != p or not 1 <= p <= n:
        raise ValidationError("p must satisfy 1 <= p <= n", clause="p", p=p, n=n)
    mu = bp.check(n)
    edges = bp.refined(n)
    r = 2 ** (n + p)
    lengths = np.diff(edges)
    # ``rho`` mass f * dmu of a cell equals its length by construction
    f = lengths / np.diff(mu) if bp.mu is not None else np.ones_like(lengths)
    mass = f * np.diff(mu)
    # midpoints of the unit cells avoid the dyadic jumps of psi
    u = (np.arange(r) + 0.5) / r
    psi = rademacher_block(n, p, u)                       # (r, p, n)
    S = sig.B1_inv_sqrt
    core = np.einsum("kpi,kpj->kij", psi, psi) / (p * 2 * np.pi)
    cellPhi = S[None] @ core.astype(complex) @ S[None]
    cell_Phi = np.tile(cellPhi, (bp.x.size - 1, 1, 1))
    cell_Phi = 0.5 * (cell_Phi + np.conj(np.swapaxes(cell_Phi, 1, 2)))

    g, gw = np.polynomial.legendre.leggauss(int(nodes_per_cell))
    lam = (edges[:-1, None] + 0.5 * lengths[:, None] * (g[None] + 1)).ravel()
    # uniform rho inside a cell: weight (mass / length) * Gauss weight
    w = (0.5 * mass[:, None] * gw[None]).ravel()
    slope = sig.B1_inv / (2 * np.pi)
    Phi_rel = np.repeat(cell_Phi, int(nodes_per_cell), axis=0) * (
        np.repeat(mass / lengths, int(nodes_per_cell))[:, None, None]) - slope[None]
    measure = SpectralMeasure(sig, (), Density(lam, Phi_rel, w))

    out = MultiplicityMeasure(measure, bp, edges, cell_Phi, mass, mass / lengths)
    svals = out.singular_values()
    ranks = np.sum(svals > RANK_TOL, axis=1)
    eig_min = float(np.linalg.eigvalsh(cell_Phi).min())
    sb = out.sigma_at_breakpoints()
    bp_err = float(np.abs(sb - bp.x[:, None, None] * slope[None]).max())
    tails, bounds, C = out.tail_integrals()
    out.diagnostics.update(
        rank_ok=bool(np.all(ranks == p)),
        rank_deficient_cells=int(np.sum(ranks != p)),
        second_singular_value=float(svals[:, 1].max()) if n > 1 and p == 1 else None,
        min_eigenvalue=eig_min,
        psd=eig_min >= -RANK_TOL,
        breakpoint_error=bp_err,
        gap_square_sum=bp.gap_square_sum,
        tail_constant=float(C),
        tail_ok=bool(np.all(tails <= bounds * (1 + 1e-12))),
    )
    return out


def windowed_perturbation(sig, window, lam, Phi):
    """``sigma0`` plus a density supported on ``[alpha, beta]``.

    Parameters
    ----------
    sig : BlockSignature
    window : (float, float)
        ``alpha < beta``.
    lam : array_like
        Strictly increasing sample points inside the window.
    Phi : array_like
        ``n x n`` Hermitian samples; a signed density is accepted when
        ``B1^{-1}/(2 pi) + Phi`` stays PSD.

    Returns
    -------
    SpectralMeasure
    """
    alpha, beta = (float(v) for v in window)
    if not alpha < beta:
        raise ValidationError("degenerate window: need alpha < beta", alpha=alpha, beta=beta)
    lam = np.asarray(lam, dtype=float).ravel()
    Phi = np.asarray(Phi, dtype=complex)
    if Phi.ndim == 2:
        Phi = np.broadcast_to(Phi, (lam.size,) + Phi.shape).copy()
    if lam.size == 0 or lam.min() < alpha or lam.max() > beta:
        raise ValidationError("density samples must lie inside the window",
                              alpha=alpha, beta=beta)
    if not np.any(Phi):
        return sigma_free(sig)
    return SpectralMeasure(sig, (), Density.trapezoid(lam, Phi))
