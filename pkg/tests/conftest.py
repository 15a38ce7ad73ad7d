import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glinverse import BaseSystem, BlockSignature, SystemSpec

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_hermitian_pd(rng, n, shift=0.5):
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return G @ G.conj().T / n + shift * np.eye(n)


def random_bc(rng, n):
    """``(B1, B2, H)`` with ``B1 = H^* B2 H``."""
    B2 = random_hermitian_pd(rng, n)
    H = np.eye(n) + 0.3 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    B1 = H.conj().T @ B2 @ H
    return 0.5 * (B1 + B1.conj().T), B2, H


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    G = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return scale * G @ G.conj().T / max(rank, 1)


@pytest.fixture
def dirac():
    return BlockSignature.dirac(1)


@pytest.fixture
def free_base(dirac):
    return BaseSystem.free(dirac)


@pytest.fixture
def free_system(dirac):
    return SystemSpec.free(dirac)


def random_scalar_bc(rng, n):
    """``B1 = b1 I``, ``B2 = b2 I`` and ``H = sqrt(b1/b2) U`` with ``U`` unitary."""
    b1, b2 = rng.uniform(0.5, 2.0, 2)
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U, _ = np.linalg.qr(G)
    return b1 * np.eye(n), b2 * np.eye(n), np.sqrt(b1 / b2) * U
