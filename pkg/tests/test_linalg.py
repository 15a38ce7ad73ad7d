import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from glinverse import (BlockSignature, BoundaryMatrix, PotentialSpec, SystemSpec,
                       ValidationError, block_assemble, block_decompose, validate_bc)
from glinverse.linalg import hermitian_residual, is_psd, psd_sqrt

from conftest import random_bc, random_hermitian_pd


def test_identity_boundary_condition():
    ok, res = validate_bc(np.eye(2), np.eye(2), np.eye(2))
    assert ok and res == 0.0


def test_scaled_dirac_boundary_condition():
    # B1 = 4, B2 = 1, H = 2
    ok, res = validate_bc([[4.0]], [[1.0]], [[2.0]])
    assert ok and res < 1e-15
    ok, res = validate_bc([[4.0]], [[1.0]], [[1.0]])
    assert not ok and res == pytest.approx(0.75)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_validate_bc_accepts_constructed_pairs(seed, n):
    rng = np.random.default_rng(seed)
    B1, B2, H = random_bc(rng, n)
    ok, res = validate_bc(B1, B2, H)
    assert ok, res
    # a relative perturbation of 1e-6 is detected
    ok2, res2 = validate_bc(B1 + 1e-6 * np.linalg.norm(B1, 2) * np.eye(n), B2, H)
    assert not ok2 and res2 > 1e-7


def test_validate_bc_rejects_singular_H():
    ok, _ = validate_bc(np.zeros((2, 2)) + np.eye(2), np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert not ok


@pytest.mark.parametrize("args", [
    (np.eye(2), np.eye(3), np.eye(2)),
    (np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2), np.eye(2)),
    (np.ones((2, 3)), np.eye(2), np.eye(2)),
])
def test_validate_bc_structural_errors(args):
    with pytest.raises(ValidationError) as exc:
        validate_bc(*args)
    assert exc.value.report["error"] == "validation"


@given(st.integers(1, 3), st.integers(1, 4),
       st.integers(0, 2**32 - 1))
def test_block_round_trip(batch, n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(batch, 2 * n, 2 * n)) + 1j * rng.normal(size=(batch, 2 * n, 2 * n))
    assert np.array_equal(block_assemble(*block_decompose(m)), m)


@given(hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)).filter(
    lambda s: s[0] != s[1] or s[0] % 2 == 1)))
def test_block_decompose_rejects_odd_or_rectangular(m):
    with pytest.raises(ValueError):
        block_decompose(m)


def test_signature_requires_positive_definite():
    with pytest.raises(ValidationError, match="positive definite"):
        BlockSignature(np.eye(2), -np.eye(2))
    with pytest.raises(ValidationError, match="Hermitian"):
        BlockSignature(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2))


def test_signature_derived_quantities():
    rng = np.random.default_rng(3)
    B1 = random_hermitian_pd(rng, 3)
    sig = BlockSignature(B1, 2 * np.eye(3))
    assert np.allclose(sig.B1_inv @ B1, np.eye(3))
    assert np.allclose(sig.B1_inv_sqrt @ sig.B1_inv_sqrt, sig.B1_inv)
    assert np.allclose(sig.B @ sig.B_inv, np.eye(6))
    assert sig.scalar_blocks() is None
    assert BlockSignature.dirac(2, 1.5, 0.5).scalar_blocks() == (1.5, 0.5)


def test_boundary_matrix_rejects_singular():
    with pytest.raises(ValidationError, match="invertible"):
        BoundaryMatrix(np.zeros((2, 2)))
    assert np.array_equal(BoundaryMatrix(2 * np.eye(1)).stacked(), [[1.0], [2.0]])


def test_system_rejects_non_selfadjoint_condition():
    sig = BlockSignature.dirac(1)
    with pytest.raises(ValidationError, match="self-adjoint") as exc:
        SystemSpec(sig, BoundaryMatrix([[2.0]]), PotentialSpec.zero(1))
    assert exc.value.report["residual"] == pytest.approx(3.0)


def _off_diagonal_samples(rng, M, n):
    q12 = rng.normal(size=(M, n, n)) + 1j * rng.normal(size=(M, n, n))
    z = np.zeros_like(q12)
    return block_assemble(z, q12, q12.conj().transpose(0, 2, 1), z)


def test_sampled_potential_validation():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 5)
    Q = _off_diagonal_samples(rng, 5, 2)
    pot = PotentialSpec.sampled(x, Q)
    assert pot.n == 2 and hermitian_residual(pot.values) == 0.0
    # linear interpolation between samples
    mid = pot.evaluate([0.125])[0]
    assert np.allclose(mid, 0.5 * (Q[0] + Q[1]))
    bad = Q.copy()
    bad[:, 0, 0] = 1.0
    with pytest.raises(ValidationError, match="diagonal blocks"):
        PotentialSpec.sampled(x, bad)
    bad = Q.copy()
    bad[:, 0, 2] += 1.0
    with pytest.raises(ValidationError, match="Hermitian"):
        PotentialSpec.sampled(x, bad)
    with pytest.raises(ValidationError, match="outside"):
        pot.evaluate([1.5])
    with pytest.raises(ValidationError, match="extend"):
        pot.check_domain(2.0)


def test_sampled_potential_roundoff_is_symmetrized():
    rng = np.random.default_rng(1)
    Q = _off_diagonal_samples(rng, 3, 1)
    Q[:, 0, 1] += 1e-13
    pot = PotentialSpec.sampled([0.0, 0.5, 1.0], Q)
    assert hermitian_residual(pot.values) == 0.0
    assert 0 < pot.asymmetry < 1e-12


def test_psd_helpers():
    assert is_psd(np.diag([1.0, 0.0]))
    assert not is_psd(np.diag([1.0, -1e-3]))
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = psd_sqrt(A)
    assert np.allclose(r @ r, A)
    with pytest.raises(ValidationError):
        psd_sqrt(-np.eye(2))
