import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scottsemi.coherent import (
    CoherentParams,
    DensityMatrix,
    LinearSymbol,
    QuadraticSymbol,
    classical_state,
    coherent_representation,
    completeness_deviation,
    density_of,
    g_kernel,
    g_operator,
    linear_symbol_kernel,
    moment_identities,
    phase_grid,
    resolved_grid,
    trace_identity_check,
    trial_density_matrix,
)
from scottsemi.errors import AccuracyError, ContractError, ParameterError, ResolutionError
from scottsemi.numerics import GridOperator, symmetric_eigen


@pytest.fixture(scope="module")
def p01():
    return CoherentParams.from_exponent(0.1)


@pytest.fixture(scope="module")
def grid01(p01):
    return resolved_grid(p01, 5.0, 5.0)


def test_params_validation():
    p = CoherentParams.from_exponent(0.1)
    assert abs(p.a - 0.1**-0.8) < 1e-12
    assert p.a <= p.b <= 2 * p.a
    assert p.in_estimate_regime
    with pytest.raises(ParameterError):
        CoherentParams(0.1, 20.0)
    with pytest.raises(ParameterError):
        CoherentParams(-0.1, 2.0)


def test_symbol_derivatives_consistent():
    for sym in (QuadraticSymbol.harmonic(), QuadraticSymbol.cosine(), QuadraticSymbol.well(2.0)):
        assert sym.derivative_consistency() < 1e-5


def test_classical_state_moments(p01):
    u, q = 0.3, -0.7
    grid = phase_grid(p01.h, 5.0, 200.0)
    psi = classical_state(p01, u, q, grid)
    w = grid.weights
    x = grid.nodes
    assert abs(np.sum(w * np.abs(psi) ** 2) - 1.0) < 1e-8
    assert abs(np.sum(w * x * np.abs(psi) ** 2) - u) < 1e-8
    dpsi = np.gradient(psi, x)
    mom = np.sum(w * np.conj(psi) * (-1j * p01.h) * dpsi).real
    assert abs(mom - q) < 1e-4


def test_classical_state_unresolved(p01):
    with pytest.raises(ResolutionError):
        classical_state(p01, 0.0, 0.0, phase_grid(0.1, 5.0, 0.5))


def test_g_kernel_classical_limit():
    h = 0.1
    p = CoherentParams(h, 1.0 / h)
    grid = phase_grid(h, 4.0, 6.0)
    u, q = 0.2, 0.5
    psi = classical_state(p, u, q, grid)
    i, j = 60, 75
    x, y = grid.nodes[i], grid.nodes[j]
    k = g_kernel(p, u, q, x, y)
    assert abs(k - psi[i] * np.conj(psi[j])) < 1e-10


def test_g_kernel_diagonal_value():
    h = 0.1
    p = CoherentParams(h, 1.0 / h)
    assert abs(g_kernel(p, 0.4, 1.3, 0.4, 0.4) - (math.pi * h) ** -0.5) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_g_kernel_hermitian(x, y, u, q):
    p = CoherentParams.from_exponent(0.1)
    assert g_kernel(p, u, q, x, y) == pytest.approx(np.conj(g_kernel(p, u, q, y, x)), abs=1e-14)


def test_g_operator_trace_and_positivity(p01, grid01):
    G = g_operator(p01, 0.2, -0.3, grid01)
    m = G.matrix
    assert np.abs(m - m.conj().T).max() < 1e-10
    assert abs(np.trace(m @ m) - 1.0) < 1e-6
    assert symmetric_eigen(G)[0] > -1e-8


def test_completeness(p01):
    assert completeness_deviation(p01, resolved_grid(p01, 6.0, 5.0)) < 1e-5


def test_moments(p01, grid01):
    mom = moment_identities(p01, 0.2, grid01)
    assert mom["zeroth"] < 1e-5 and mom["first"] < 1e-5


def test_first_moment_vanishes_at_classical_limit():
    h = 0.1
    p = CoherentParams(h, 1.0 / h)
    mom = moment_identities(p, 0.0, resolved_grid(p, 4.0, 6.0))
    assert abs(mom["factor"]) < 1e-12
    assert mom["first"] < 1e-6


def test_linear_kernel_gaussian(p01):
    h = p01.h
    x, y = 0.1, -0.05
    d = x - y
    exact = np.exp(-1j * 0.3 * d / h) * np.exp(-d * d / (4 * h * h)) / (2 * math.sqrt(math.pi) * h)
    k = linear_symbol_kernel(lambda s: np.exp(-s * s), LinearSymbol(0.3, 0.0, 1.0), p01, x, y)
    assert abs(k - exact) < 1e-6


def test_linear_kernel_zero_and_contracts(p01):
    assert linear_symbol_kernel(lambda s: 0.0 * s, LinearSymbol(0.0, 0.0, 1.0), p01, 0.1, 0.0) == 0
    with pytest.raises(ContractError):
        linear_symbol_kernel(lambda s: np.ones_like(s), LinearSymbol(0.0, 0.0, 1.0), p01, 0.1, 0.0)
    with pytest.raises(ContractError):
        linear_symbol_kernel(lambda s: np.exp(-s * s), LinearSymbol(0.3, 1.0, 0.0), p01, 0.1, 0.0)


def test_trace_identity_constant_symbol(p01):
    f = lambda s: np.exp(-s * s)
    lhs, rhs, dev = trace_identity_check(f, LinearSymbol(0.7, 0.0, 0.0), lambda x: np.ones_like(x), p01, 0.1, 0.2)
    assert abs(lhs - math.exp(-0.49)) < 1e-6 and abs(rhs - math.exp(-0.49)) < 1e-6


def test_trace_identity_unit(p01):
    lhs, rhs, _ = trace_identity_check(
        lambda s: np.ones_like(s), LinearSymbol(0.0, 0.0, 0.0), lambda x: np.ones_like(x), p01, 0.0, 0.0
    )
    assert abs(lhs - 1) < 1e-6 and abs(rhs - 1) < 1e-6


def test_trace_identity_generic(p01):
    lhs, rhs, dev = trace_identity_check(
        lambda s: np.exp(-s * s), LinearSymbol(0.3, 0.5, 1.2), np.cos, p01, 0.2, -0.1
    )
    assert dev < 1e-5


def test_trace_identity_quadrature_nonconvergence(p01):
    with pytest.raises(AccuracyError):
        trace_identity_check(
            lambda s: np.cos(40 * s) * np.exp(-s * s),
            LinearSymbol(0.3, 0.5, 1.2),
            lambda x: np.cos(25 * x),
            p01,
            0.0,
            0.0,
            nodes=4,
        )


def test_representation_constant():
    p = CoherentParams.from_exponent(0.1)
    res = coherent_representation(QuadraticSymbol.constant(2.5), p)
    assert res.error_norm < 1e-8
    op = res.operator()
    assert op.asymmetry() < 1e-10


def test_representation_factorized_matches_dense():
    p = CoherentParams.from_exponent(0.2)
    fast = coherent_representation(QuadraticSymbol.harmonic(), p)
    dense = coherent_representation(QuadraticSymbol.harmonic(), p, fast.grid, method="dense")
    assert abs(fast.error_norm - dense.error_norm) < 1e-10 * max(1.0, dense.error_norm)


def test_representation_harmonic_scales_with_h2b():
    ratios = []
    for h in (0.2, 0.1):
        p = CoherentParams.from_exponent(h)
        ratios.append(coherent_representation(QuadraticSymbol.harmonic(), p).error_norm / (h * h * p.b))
    assert 0.5 < ratios[0] / ratios[1] < 2.0


def test_density_matrix_rank_one():
    grid = phase_grid(0.1, 4.0, 6.0)
    p = CoherentParams.from_exponent(0.1)
    psi = classical_state(p, 0.1, 0.3, grid)
    w = grid.weights
    m = np.outer(psi, np.conj(psi) * w)
    gamma = DensityMatrix(GridOperator(grid, m))
    rho = density_of(gamma)
    assert np.abs(rho - np.abs(psi) ** 2).max() < 1e-10
    assert abs(np.sum(w * rho) - gamma.trace()) < 1e-8
    with pytest.raises(AccuracyError):
        DensityMatrix(GridOperator(grid, 2.0 * m))


def test_trial_density_matrix_bounds():
    p = CoherentParams.from_exponent(0.2)
    gamma = trial_density_matrix(QuadraticSymbol.well(), p)
    spec = gamma.spectrum()
    assert spec[0] >= -1e-6 and spec[-1] <= 1 + 1e-6
    m = gamma.operator.matrix
    s = np.sqrt(gamma.grid.weights)
    sym = s[:, None] * m / s[None, :]
    assert np.abs(sym - sym.conj().T).max() < 1e-10
    rho = density_of(gamma)
    assert abs(np.sum(gamma.grid.weights * rho) - gamma.trace()) < 1e-8
