"""Domain types and small dense complex linear algebra.

The operator is ``L = B (1/i) d/dx + Q(x)`` on the half line with
``B = diag(B1, -B2)``, boundary condition ``f2(0) = H f1(0)`` and a Hermitian
potential ``Q`` whose two diagonal ``n x n`` blocks vanish.  Everything here is
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_BC = 1e-10
EPS_HERM = 1e-10


class ValidationError(ValueError):
    """Input violates a structural hypothesis.

    ``report`` is a JSON-serializable dict describing the failure.
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.report = {"error": "validation", "message": message, **details}


class NumericalError(RuntimeError):
    """A numerical stage failed (conditioning, iteration budget, ...)."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.report = {"error": "numerical", "message": message, **details}


def as_matrix(a, name="matrix"):
    """Return ``a`` as a square 2-D complex array, raising on bad shapes."""
    m = np.atleast_2d(np.asarray(a, dtype=complex))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}", matrix=name)
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries", matrix=name)
    return m


def hermitian_residual(m):
    """Largest entry of ``|M - M^*|`` (over the last two axes)."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2).conj())))


def hermitian_part(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2).conj())


def psd_sqrt(a, floor=1e-12):
    """Square root of a Hermitian PSD matrix by eigendecomposition.

    Eigenvalues in ``[-floor, 0)`` are treated as roundoff and clipped to 0.
    """
    w, u = np.linalg.eigh(hermitian_part(np.asarray(a, dtype=complex)))
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.any(w < -floor * scale):
        raise ValidationError("matrix is not positive semidefinite", min_eigenvalue=float(w.min()))
    w = np.clip(w, 0.0, None)
    return (u * np.sqrt(w)) @ u.conj().T


def is_psd(a, tol=1e-12):
    a = np.asarray(a, dtype=complex)
    w = np.linalg.eigvalsh(hermitian_part(a))
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    return bool(np.all(w >= -tol * scale))


def block_decompose(m):
    """Split a ``2n x 2n`` matrix into its four ``n x n`` blocks.

    Examples
    --------
    >>> block_decompose(np.eye(2))
    (array([[1.]]), array([[0.]]), array([[0.]]), array([[1.]]))
    """
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2] or m.shape[-1] % 2:
        raise ValueError(f"expected a 2n x 2n matrix, got shape {m.shape}")
    n = m.shape[-1] // 2
    return m[..., :n, :n], m[..., :n, n:], m[..., n:, :n], m[..., n:, n:]


def block_assemble(m11, m12, m21, m22):
    """Inverse of :func:`block_decompose`."""
    top = np.concatenate([m11, m12], axis=-1)
    bottom = np.concatenate([m21, m22], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def validate_bc(B1, B2, H):
    """Check the self-adjointness condition ``B1 = H^* B2 H``.

    Returns
    -------
    ok : bool
        True iff ``H`` is invertible and the relative residual is at most
        ``EPS_BC``.
    residual : float
        ``||B1 - H^* B2 H|| / ||B1||`` in the spectral norm.
    """
    B1 = as_matrix(B1, "B1")
    B2 = as_matrix(B2, "B2")
    H = as_matrix(H, "H")
    if not (B1.shape == B2.shape == H.shape):
        raise ValidationError(
            "B1, B2 and H must share the dimension n",
            shapes={"B1": list(B1.shape), "B2": list(B2.shape), "H": list(H.shape)},
        )
    for name, m in (("B1", B1), ("B2", B2)):
        if hermitian_residual(m) > EPS_HERM * max(1.0, np.abs(m).max()):
            raise ValidationError(f"{name} is not Hermitian", matrix=name,
                                  residual=hermitian_residual(m))
    residual = float(np.linalg.norm(B1 - H.conj().T @ B2 @ H, 2) / np.linalg.norm(B1, 2))
    invertible = np.isfinite(np.linalg.cond(H)) and np.linalg.cond(H) < 1e14
    return bool(invertible and residual <= EPS_BC), residual


@dataclass(frozen=True, eq=False)
class BlockSignature:
    """The pair ``(B1, B2)`` with ``B = diag(B1, -B2)``.

    Eigendecompositions of ``B1`` and ``B2`` are computed once and reused for
    every matrix exponential ``exp(i lam B_k^{-1} x)``.
    """

    B1: np.ndarray
    B2: np.ndarray
    _eig: tuple = field(init=False, repr=False)

    def __post_init__(self):
        B1 = as_matrix(self.B1, "B1")
        B2 = as_matrix(self.B2, "B2")
        if B1.shape != B2.shape:
            raise ValidationError("B1 and B2 must have the same size",
                                  shapes=[list(B1.shape), list(B2.shape)])
        eig = []
        for name, m in (("B1", B1), ("B2", B2)):
            if hermitian_residual(m) > EPS_HERM * max(1.0, np.abs(m).max()):
                raise ValidationError(f"{name} is not Hermitian", matrix=name,
                                      residual=hermitian_residual(m))
            m = hermitian_part(m)
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise ValidationError(f"{name} is not positive definite", matrix=name) from None
            eig.append(np.linalg.eigh(m))
        object.__setattr__(self, "B1", hermitian_part(B1))
        object.__setattr__(self, "B2", hermitian_part(B2))
        object.__setattr__(self, "_eig", tuple(eig))
        for arr in (self.B1, self.B2):
            arr.setflags(write=False)

    @classmethod
    def dirac(cls, n=1, b1=1.0, b2=None):
        b2 = b1 if b2 is None else b2
        return cls(b1 * np.eye(n), b2 * np.eye(n))

    @property
    def n(self):
        return self.B1.shape[0]

    @property
    def B(self):
        z = np.zeros_like(self.B1)
        return block_assemble(self.B1, z, z, -self.B2)

    @property
    def B_inv(self):
        z = np.zeros_like(self.B1)
        return block_assemble(np.linalg.inv(self.B1), z, z, -np.linalg.inv(self.B2))

    @property
    def eig1(self):
        return self._eig[0]

    @property
    def eig2(self):
        return self._eig[1]

    @property
    def B1_inv(self):
        w, u = self.eig1
        return (u / w) @ u.conj().T

    @property
    def B1_inv_sqrt(self):
        w, u = self.eig1
        return (u / np.sqrt(w)) @ u.conj().T

    def min_speed(self):
        """Smallest eigenvalue over ``B1`` and ``B2``."""
        return float(min(self.eig1[0].min(), self.eig2[0].min()))

    def scalar_blocks(self, rtol=1e-12):
        """Return ``(b1, b2)`` if ``B1 = b1 I`` and ``B2 = b2 I``, else None."""
        out = []
        for m in (self.B1, self.B2):
            b = float(np.real(m[0, 0]))
            if np.max(np.abs(m - b * np.eye(self.n))) > rtol * b:
                return None
            out.append(b)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class BoundaryMatrix:
    """Invertible ``H`` in the boundary condition ``f2(0) = H f1(0)``."""

    H: np.ndarray

    def __post_init__(self):
        H = as_matrix(self.H, "H")
        c = np.linalg.cond(H)
        if not np.isfinite(c) or c > 1e14:
            raise ValidationError("H is not invertible", condition=float(c))
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def n(self):
        return self.H.shape[0]

    def stacked(self):
        """The ``2n x n`` matrix ``(I over H)``."""
        return np.vstack([np.eye(self.n), self.H])


def _validate_samples(values, n, tol):
    """Check Hermiticity and vanishing diagonal blocks; return cleaned copy."""
    values = np.asarray(values, dtype=complex)
    if values.ndim != 3 or values.shape[1:] != (2 * n, 2 * n):
        raise ValidationError(f"potential samples must have shape (M, {2*n}, {2*n})",
                              shape=list(values.shape))
    if not np.all(np.isfinite(values)):
        raise ValidationError("potential samples contain non-finite values")
    asym = hermitian_residual(values)
    if asym > tol:
        raise ValidationError("potential is not Hermitian", residual=asym, tolerance=tol)
    q11, _, _, q22 = block_decompose(values)
    diag = float(max(np.abs(q11).max(initial=0.0), np.abs(q22).max(initial=0.0)))
    if diag > tol:
        raise ValidationError("potential has non-zero diagonal blocks", magnitude=diag,
                              tolerance=tol)
    values = hermitian_part(values)
    values[:, :n, :n] = 0.0
    values[:, n:, n:] = 0.0
    return values, asym, diag


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Hermitian off-diagonal potential ``Q(x)``.

    Three kinds exist.  ``zero`` is the free case.  ``sampled`` holds values on
    an increasing grid and interpolates linearly in between.  ``oracle`` wraps
    an object with an ``evaluate(x)`` method (closed-form potentials) that is
    called lazily.

    Use the classmethods :meth:`zero`, :meth:`sampled` and :meth:`oracle`.
    """

    kind: str
    n: int
    x: np.ndarray | None = None
    values: np.ndarray | None = None
    source: object = None
    smoothness: str = "C0"
    asymmetry: float = 0.0
    diagonal_magnitude: float = 0.0

    @classmethod
    def zero(cls, n):
        return cls("zero", int(n), smoothness="Cinf")

    @classmethod
    def sampled(cls, x, values, tol=EPS_HERM, smoothness="C0"):
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=complex)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValidationError("sample grid must be strictly increasing with >= 2 points")
        if values.shape[0] != x.size or values.shape[-1] % 2:
            raise ValidationError("sample count does not match the grid",
                                  grid=int(x.size), samples=int(values.shape[0]))
        n = values.shape[-1] // 2
        values, asym, diag = _validate_samples(values, n, tol)
        x.setflags(write=False)
        values.setflags(write=False)
        return cls("sampled", n, x=x, values=values, smoothness=smoothness,
                   asymmetry=asym, diagonal_magnitude=diag)

    @classmethod
    def oracle(cls, source, n):
        """Wrap a lazily evaluated closed-form potential.

        ``source.evaluate(x)`` must return an array of shape ``(len(x), 2n, 2n)``.
        """
        if not hasattr(source, "evaluate"):
            raise ValidationError("oracle potential needs an evaluate(x) method")
        return cls("oracle", int(n), source=source, smoothness="Cinf")

    @property
    def domain(self):
        if self.kind == "sampled":
            return float(self.x[0]), float(self.x[-1])
        if self.kind == "oracle":
            return getattr(self.source, "domain", (0.0, np.inf))
        return 0.0, np.inf

    def check_domain(self, x_max):
        lo, hi = self.domain
        if lo > 1e-12 or x_max > hi * (1 + 1e-12) + 1e-12:
            raise ValidationError(
                f"potential is defined on [{lo}, {hi}] but [0, {x_max}] is required; "
                "extend the sampled range",
                domain=[lo, hi], required=[0.0, float(x_max)])

    def evaluate(self, x):
        """Potential at the points ``x``; returns shape ``(len(x), 2n, 2n)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = 2 * self.n
        if self.kind == "zero":
            return np.zeros((x.size, m, m), dtype=complex)
        if self.kind == "sampled":
            lo, hi = self.domain
            tol = 1e-12 * max(1.0, abs(hi))
            if np.any(x < lo - tol) or np.any(x > hi + tol):
                raise ValidationError("potential evaluated outside its sampled range",
                                      domain=[lo, hi],
                                      requested=[float(x.min()), float(x.max())])
            xs = np.clip(x, lo, hi)
            k = np.clip(np.searchsorted(self.x, xs, side="right") - 1, 0, self.x.size - 2)
            theta = ((xs - self.x[k]) / (self.x[k + 1] - self.x[k]))[:, None, None]
            return (1 - theta) * self.values[k] + theta * self.values[k + 1]
        q = np.asarray(self.source.evaluate(x), dtype=complex)
        return q.reshape(x.size, m, m)

    def is_zero(self):
        return self.kind == "zero"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """The triple ``(B, H, Q)`` defining the boundary value problem."""

    signature: BlockSignature
    boundary: BoundaryMatrix
    potential: PotentialSpec

    def __post_init__(self):
        n = self.signature.n
        if self.boundary.n != n or self.potential.n != n:
            raise ValidationError("signature, boundary matrix and potential disagree on n",
                                  n=[n, self.boundary.n, self.potential.n])
        ok, residual = validate_bc(self.signature.B1, self.signature.B2, self.boundary.H)
        if not ok:
            raise ValidationError("boundary condition is not self-adjoint: B1 != H^* B2 H",
                                  residual=residual, tolerance=EPS_BC)

    @classmethod
    def free(cls, signature, H=None):
        H = np.eye(signature.n) if H is None else H
        return cls(signature, BoundaryMatrix(H), PotentialSpec.zero(signature.n))

    @property
    def n(self):
        return self.signature.n

    def with_potential(self, potential):
        return SystemSpec(self.signature, self.boundary, potential)
