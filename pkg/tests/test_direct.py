import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glinverse import (BlockSignature, BoundaryMatrix, PotentialSpec, SpectralMeasure, SystemSpec,
                       TestFunction, ValidationError, fourier_transform, free_solution,
                       parseval_residual, solve_ivp, solve_matrix_batch)
from glinverse.direct import uniform_grid
from glinverse.linalg import block_assemble
from glinverse.sigma import sigma_free

from conftest import random_bc


def _smooth_potential(n, x, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, n, n)) + 1j * rng.normal(size=(3, n, n))
    q12 = (c[0] + np.cos(2 * x)[:, None, None] * c[1] + np.sin(3 * x)[:, None, None] * c[2])
    z = np.zeros_like(q12)
    return block_assemble(z, q12, q12.conj().transpose(0, 2, 1), z)


def _sampled_system(sig, H, x_max=2.0, seed=0, fine=1e-3):
    x = uniform_grid(x_max, fine)
    return SystemSpec(sig, BoundaryMatrix(H), PotentialSpec.sampled(x, _smooth_potential(sig.n, x, seed)))


def test_free_solution_scalar_dirac(dirac):
    x = np.linspace(0, 2, 7)
    e = free_solution(dirac, BoundaryMatrix([[1.0]]), x, 3.0)
    assert e.shape == (7, 2, 1)
    assert np.allclose(e[:, 0, 0], np.exp(3j * x))
    assert np.allclose(e[:, 1, 0], np.exp(-3j * x))


def test_free_solution_broadcasts():
    sig = BlockSignature.dirac(2, 2.0, 0.5)
    e = free_solution(sig, BoundaryMatrix(2 * np.eye(2)), np.linspace(0, 1, 4)[:, None],
                      np.array([0.0, 1.0, -2.0])[None, :])
    assert e.shape == (4, 3, 4, 2)
    assert np.allclose(e[:, :, 0, 0], np.exp(1j * np.outer(np.linspace(0, 1, 4), [0, 1, -2]) / 2))
    assert np.allclose(e[:, :, 2, 0], 2 * np.exp(-1j * np.outer(np.linspace(0, 1, 4), [0, 1, -2]) / 0.5))


def test_initial_condition(free_system):
    sol = solve_ivp(free_system, 0.0, 2.0, 1e-3)
    assert np.array_equal(sol.values[0], [[1.0], [1.0]])
    # Q = 0, lam = 0: Y is constant
    assert np.abs(sol.values - sol.values[0]).max() == 0.0


@pytest.mark.parametrize("lam", [-5.0, 1.0, 7.5])
def test_rk4_free_matches_exponential(lam):
    rng = np.random.default_rng(1)
    B1, B2, H = random_bc(rng, 2)
    system = SystemSpec.free(BlockSignature(B1, B2), H)
    sol = solve_ivp(system, lam, 1.0, 1e-3)
    exact = free_solution(system.signature, system.boundary, sol.grid, lam)
    assert np.abs(sol.values - exact).max() < 1e-9


def test_rk4_order_on_potential():
    system = _sampled_system(BlockSignature.dirac(1), [[1.0]], fine=1e-3)
    # the potential is piecewise linear between samples at 1e-3; use multiples of it
    ref = solve_ivp(system, 3.0, 1.0, 1e-3).values[-1]
    errs = [np.abs(solve_ivp(system, 3.0, 1.0, h).values[-1] - ref).max() for h in (0.04, 0.02)]
    # coarse steps straddle the linear pieces, so only demand clear convergence
    assert errs[1] < errs[0] / 3


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 10), st.integers(1, 2))
def test_wronskian_invariant(seed, lam, n):
    """``Y^* B Y`` vanishes identically for real lambda (it is B1 - H^* B2 H at 0).

    RK4 does not conserve it exactly; the drift must shrink at fourth order.
    """
    rng = np.random.default_rng(seed)
    B1, B2, H = random_bc(rng, n)
    sig = BlockSignature(B1, B2)
    system = _sampled_system(sig, H, x_max=1.0, seed=seed % 1000, fine=0.01)
    drift = []
    for h in (0.01, 0.005):
        Y = solve_matrix_batch(system, [lam], uniform_grid(1.0, h))[:, 0]
        W = Y.conj().transpose(0, 2, 1) @ sig.B @ Y
        scale = np.abs(Y).max() ** 2 * np.abs(sig.B).max()
        drift.append(np.abs(W).max() / scale)
    assert drift[0] < 1e-4
    assert drift[1] <= max(drift[0] / 10, 1e-13)


def test_batch_matches_single(free_system):
    system = _sampled_system(free_system.signature, [[1.0]], fine=0.01)
    grid = uniform_grid(1.0, 0.01)
    batch = solve_matrix_batch(system, [-2.0, 0.5, 4.0], grid)
    for k, lam in enumerate([-2.0, 0.5, 4.0]):
        assert np.array_equal(batch[:, k], solve_ivp(system, lam, 1.0, 0.01).values)


def test_indicator_transform_closed_form(free_system):
    f = TestFunction.indicator(1, 0, 0.0, 1.0, 1e-3)
    lam = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    F = fourier_transform(free_system, f, lam).values[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = np.where(lam == 0, 1.0, (1 - np.exp(-1j * lam)) / (1j * lam))
    assert np.abs(F - exact).max() < 1e-6


def test_indicator_half_values():
    f = TestFunction.indicator(1, 1, 0.25, 0.5, 0.05, b=1.0)
    v = f.values[:, 1].real
    assert v[5] == 0.5 and v[10] == 0.5 and v[7] == 1.0 and v[4] == 0.0
    assert np.all(f.values[:, 0] == 0)
    g = f + TestFunction.hat(1, 0, 0.0, 0.5, 0.05)
    assert g.b == 1.0 and g.values.shape == (21, 2)
    with pytest.raises(ValidationError):
        TestFunction(1.0, 0.1, np.zeros((5, 2)))


def test_free_transform_matches_rk4_path():
    rng = np.random.default_rng(2)
    B1, B2, H = random_bc(rng, 2)
    sig = BlockSignature(B1, B2)
    free = SystemSpec.free(sig, H)
    x = uniform_grid(1.0, 0.0025)
    zero_sampled = SystemSpec(sig, BoundaryMatrix(H),
                              PotentialSpec.sampled(x, np.zeros((x.size, 4, 4))))
    # RK4 error ~ (lam h / b)^4, so the grid is fine enough for 1e-8
    f = TestFunction.hat(2, 0, 0.0, 1.0, 0.0025) + TestFunction.hat(2, 3, 0.2, 0.8, 0.0025, coef=1j)
    lam = np.linspace(-10, 10, 41)
    F1 = fourier_transform(free, f, lam).values
    F2 = fourier_transform(zero_sampled, f, lam).values
    assert np.abs(F1 - F2).max() < 1e-8


def test_parseval_free_hat_functions(free_system):
    f = TestFunction.hat(1, 0, 0.0, 1.0, 1e-3)
    g = TestFunction.hat(1, 1, 0.2, 0.9, 1e-3, coef=2 - 1j)
    sigma = sigma_free(free_system.signature)
    for u, v in ((f, f), (f, g), (g, g)):
        r = parseval_residual(free_system, sigma, u, v, 200.0, 0.01)
        assert r.residual < 1e-4, r


def test_parseval_validates_inputs(free_system):
    f = TestFunction.hat(1, 0, 0.0, 1.0, 0.01)
    with pytest.raises(ValidationError):
        parseval_residual(free_system, SpectralMeasure(free_system.signature), f, f, -1.0, 0.1)
    with pytest.raises(ValidationError):
        fourier_transform(free_system, TestFunction.hat(2, 0, 0, 1, 0.01), [0.0])


def test_uniform_grid_requires_multiple():
    assert uniform_grid(2.0, 1e-3).size == 2001
    with pytest.raises(ValidationError):
        uniform_grid(1.0, 0.3)
