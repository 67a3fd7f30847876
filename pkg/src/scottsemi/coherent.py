"""Gaussian-averaged coherent states in one dimension.

The operator G_{u,q} has the integral kernel

    (pi h)^(-1/2) exp(-a ((x+y)/2 - u)^2 + i q (x-y)/h - (x-y)^2 / (4 h^2 a))

with 1 < a <= 1/h. Its square integrates over phase space to the identity
and it reduces to the rank-one coherent projection when a = 1/h. The
related parameter b = 2a / (1 + h^2 a^2) is the inverse variance of the
Gaussian G_b(x) = (b/pi)^(1/2) exp(-b x^2) that appears after integrating
out the momentum.

Operators live on a periodic grid x_j = -L + j dx. Momenta are the dual
lattice q_k = 2 pi h k / (N dx). Functions of the momentum operator are
applied by FFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erfc, expit

from .errors import (
    AccuracyError,
    ContractError,
    ParameterError,
    ResolutionError,
    TruncationError,
)
from .numerics import Grid, GridOperator, make_periodic_grid, symmetric_eigen

__all__ = [
    "CoherentParams",
    "LinearSymbol",
    "QuadraticSymbol",
    "DensityMatrix",
    "RepresentationResult",
    "phase_grid",
    "resolved_grid",
    "momenta",
    "momentum_function",
    "gaussian_b",
    "classical_state",
    "g_kernel",
    "g_operator",
    "completeness_deviation",
    "moment_identities",
    "linear_symbol_kernel",
    "trace_identity_check",
    "coherent_representation",
    "trial_density_matrix",
    "density_of",
]


@dataclass(frozen=True)
class CoherentParams:
    """Semiclassical parameter h and localization scale a (dimension n)."""

    h: float
    a: float
    n: int = 1

    def __post_init__(self):
        if not (self.h > 0 and self.a > 0):
            raise ParameterError("h and a must be positive")
        if self.h * self.a > 1.0 + 1e-12:
            raise ParameterError(f"a={self.a} exceeds 1/h={1.0 / self.h}")
        if self.n < 1:
            raise ParameterError("dimension must be >= 1")

    @classmethod
    def from_exponent(cls, h: float, exponent: float = 0.8, n: int = 1) -> "CoherentParams":
        """a = h^(-exponent); exponent 0.8 is the default rule."""
        if not 0 < h < 1:
            raise ParameterError("h must lie in (0, 1)")
        return cls(h, h**-exponent, n)

    @property
    def b(self) -> float:
        return 2.0 * self.a / (1.0 + (self.h * self.a) ** 2)

    @property
    def in_estimate_regime(self) -> bool:
        return 1.0 < self.a < 1.0 / self.h


@dataclass(frozen=True)
class LinearSymbol:
    """Symbol B0 + B1 x + B2 p of a first-order operator (n = 1)."""

    B0: float
    B1: float
    B2: float

    def __post_init__(self):
        if not all(np.isfinite([self.B0, self.B1, self.B2])):
            raise ParameterError("linear symbol entries must be finite")

    def __call__(self, x, p):
        return self.B0 + self.B1 * x + self.B2 * p


@dataclass(frozen=True, eq=False)
class QuadraticSymbol:
    """sigma(u, q) = F(q) + V(u) with derivative evaluators."""

    F: Callable
    dF: Callable
    d2F: Callable
    V: Callable
    dV: Callable
    d2V: Callable
    d3F: Optional[Callable] = None
    d3V: Optional[Callable] = None
    name: str = "custom"

    def sigma(self, u, q):
        return self.F(q) + self.V(u)

    def laplacian(self, u, q):
        return self.d2F(q) + self.d2V(u)

    def derivative_consistency(self, samples=None, step: float = 1e-4) -> float:
        """Max deviation of the derivative evaluators from central differences."""
        s = np.linspace(-2.0, 2.0, 9) if samples is None else np.asarray(samples, float)
        pairs = [(self.F, self.dF), (self.dF, self.d2F), (self.V, self.dV), (self.dV, self.d2V)]
        if self.d3F is not None:
            pairs.append((self.d2F, self.d3F))
        if self.d3V is not None:
            pairs.append((self.d2V, self.d3V))
        worst = 0.0
        for f, df in pairs:
            fd = (np.asarray(f(s + step), float) - np.asarray(f(s - step), float)) / (2 * step)
            exact = np.asarray(df(s), float) * np.ones_like(s)
            worst = max(worst, float(np.max(np.abs(fd - exact) / (1.0 + np.abs(exact)))))
        return worst

    @classmethod
    def harmonic(cls) -> "QuadraticSymbol":
        sq = lambda t: np.asarray(t, float) ** 2
        d1 = lambda t: 2.0 * np.asarray(t, float)
        d2 = lambda t: 2.0 + 0.0 * np.asarray(t, float)
        d3 = lambda t: 0.0 * np.asarray(t, float)
        return cls(sq, d1, d2, sq, d1, d2, d3, d3, "q^2+u^2")

    @classmethod
    def cosine(cls) -> "QuadraticSymbol":
        sq = lambda t: np.asarray(t, float) ** 2
        d1 = lambda t: 2.0 * np.asarray(t, float)
        d2 = lambda t: 2.0 + 0.0 * np.asarray(t, float)
        d3 = lambda t: 0.0 * np.asarray(t, float)
        return cls(sq, d1, d2, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t), d3, np.sin, "q^2+cos(u)")

    @classmethod
    def well(cls, depth: float = 1.0) -> "QuadraticSymbol":
        """q^2 + u^2 - depth."""
        sq = lambda t: np.asarray(t, float) ** 2
        d1 = lambda t: 2.0 * np.asarray(t, float)
        d2 = lambda t: 2.0 + 0.0 * np.asarray(t, float)
        d3 = lambda t: 0.0 * np.asarray(t, float)
        return cls(sq, d1, d2, lambda t: sq(t) - depth, d1, d2, d3, d3, f"q^2+u^2-{depth!r}")

    @classmethod
    def constant(cls, c: float) -> "QuadraticSymbol":
        zero = lambda t: 0.0 * np.asarray(t, float)
        return cls(zero, zero, zero, lambda t: c + zero(t), zero, zero, zero, zero, f"const({c!r})")


# ------------------------------------------------------------------ grids


def phase_grid(h: float, half_width: float, q_max: float) -> Grid:
    """Periodic grid on [-L, L) whose Nyquist momentum is at least q_max."""
    if h <= 0 or half_width <= 0 or q_max <= 0:
        raise ParameterError("h, L and q_max must be positive")
    dx = math.pi * h / q_max
    count = int(math.ceil(2.0 * half_width / dx))
    count += count % 2
    return make_periodic_grid(half_width, max(count, 4))


def momenta(grid: Grid, h: float) -> np.ndarray:
    """Dual-lattice momenta in FFT order."""
    return 2.0 * math.pi * h * np.fft.fftfreq(grid.size, grid.spacing)


def momentum_function(grid: Grid, h: float, func: Callable) -> np.ndarray:
    """Dense matrix of func(P) with P = -i h d/dx (spectral)."""
    p = momenta(grid, h)
    eye_hat = np.fft.fft(np.eye(grid.size), axis=0)
    m = np.fft.ifft(np.asarray(func(p))[:, None] * eye_hat, axis=0)
    return 0.5 * (m + m.conj().T)


def _apply_momentum(values_fft_order: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.fft.ifft(values_fft_order[:, None] * np.fft.fft(vectors, axis=0), axis=0)


def resolved_grid(params: CoherentParams, half_width: float, q_max: float) -> Grid:
    """phase_grid refined until it passes the resolution check."""
    width = min(math.sqrt(params.h), 1.0 / math.sqrt(params.a))
    q_res = 8.0 * math.pi * params.h / width * (1.0 + 1e-9)
    return phase_grid(params.h, half_width, max(q_max, q_res))


def _check_resolution(params: CoherentParams, grid: Grid, nodes: int = 8):
    if grid.kind != "periodic":
        raise ParameterError("coherent-state operators need a periodic grid")
    width = min(math.sqrt(params.h), 1.0 / math.sqrt(params.a))
    if grid.spacing > width / nodes:
        raise ResolutionError(
            f"dx={grid.spacing:.3g} does not resolve width {width:.3g} with {nodes} nodes"
        )


def gaussian_b(b: float, x):
    """G_b(x) = (b/pi)^(1/2) exp(-b x^2)."""
    x = np.asarray(x, float)
    return math.sqrt(b / math.pi) * np.exp(-b * x * x)


# ---------------------------------------------------------------- states


def classical_state(params: CoherentParams, u: float, q: float, grid: Grid) -> np.ndarray:
    """Standard coherent state (pi h)^(-1/4) exp(-(x-u)^2/2h + i q x / h)."""
    if params.n != 1:
        raise ParameterError("grid states are one-dimensional")
    h = params.h
    x = grid.nodes
    psi = (math.pi * h) ** -0.25 * np.exp(-((x - u) ** 2) / (2.0 * h) + 1j * q * x / h)
    norm = float(np.sum(np.abs(psi) ** 2 * grid.weights))
    if abs(norm - 1.0) > 1e-4:
        raise ResolutionError(f"coherent state norm {norm:.6f} on this grid")
    return psi


def g_kernel(params: CoherentParams, u, q, x, y):
    """Integral kernel of G_{u,q} at (x, y)."""
    h, a = params.h, params.a
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    m = 0.5 * (x + y) - u
    d = x - y
    return (math.pi * h) ** (-params.n / 2.0) * np.exp(
        -a * m * m - d * d / (4.0 * h * h * a) + 1j * q * d / h
    )


def _a_matrix(params: CoherentParams, u: float, grid: Grid) -> np.ndarray:
    """Real operator matrix of G_{u,0} (kernel times dx)."""
    x = grid.nodes
    return g_kernel(params, u, 0.0, x[:, None], x[None, :]).real * grid.spacing


def g_operator(params: CoherentParams, u: float, q: float, grid: Grid) -> GridOperator:
    """G_{u,q} as a Hermitian grid operator."""
    _check_resolution(params, grid)
    x = grid.nodes
    m = g_kernel(params, u, q, x[:, None], x[None, :]) * grid.spacing
    return GridOperator(grid, m, sym_tol=1e-10)


def _lattice_phase_sum(grid: Grid, h: float, coeff: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_k dq/(2 pi h) c(q_k) exp(i q_k (x_i - x_j)/h) over the dual lattice."""
    x = grid.nodes
    p = momenta(grid, h)
    dq = 2.0 * math.pi * h / (grid.size * grid.spacing)
    c = np.ones(p.size) if coeff is None else np.asarray(coeff)
    waves = np.exp(1j * np.outer(x, p) / h)
    return (waves * c) @ waves.conj().T * (dq / (2.0 * math.pi * h))


def completeness_deviation(params: CoherentParams, grid: Grid, margin: Optional[float] = None) -> float:
    """Max-entry deviation of the phase-space integral of G^2 from the identity.

    The u-integral runs over lattice nodes (trapezoid) and the q-integral
    over the dual lattice; the deviation is measured on nodes at distance
    ``margin`` from the u-range ends.
    """
    _check_resolution(params, grid)
    b = params.b
    margin = 6.0 / math.sqrt(b) if margin is None else margin
    x = grid.nodes
    L = -x[0]
    u_nodes = x[np.abs(x) <= L - 6.0 / math.sqrt(params.a)]
    phase = _lattice_phase_sum(grid, params.h)
    total = np.zeros((x.size, x.size), complex)
    for u in u_nodes:
        A = _a_matrix(params, u, grid)
        total += grid.spacing * (A @ A) * phase
    inner = np.abs(x) <= u_nodes.max() - margin
    if not np.any(inner):
        raise TruncationError("grid too small to measure completeness")
    blk = total[np.ix_(inner, inner)]
    return float(np.abs(blk - np.eye(blk.shape[0])).max())


def moment_identities(params: CoherentParams, u: float, grid: Grid) -> dict:
    """Zeroth and first momentum-averaged moments against their closed forms.

    Returns the max entrywise deviations of the q-lattice sums of
    G^2 and G (x - u) G from G_b(x - u) and (1 - h^2 a b)(x - u) G_b(x - u).
    """
    _check_resolution(params, grid)
    h, b = params.h, params.b
    x = grid.nodes
    A = _a_matrix(params, u, grid)
    phase = _lattice_phase_sum(grid, h)
    zeroth = (A @ A) * phase
    first = (A @ ((x - u)[:, None] * A)) * phase
    g = gaussian_b(b, x - u)
    factor = 1.0 - h * h * params.a * b
    dev0 = float(np.abs(zeroth - np.diag(g)).max())
    dev1 = float(np.abs(first - np.diag(factor * (x - u) * g)).max())
    return {"zeroth": dev0, "first": dev1, "factor": factor}


# ---------------------------------------------------------- linear symbols


def _decay_window(f: Callable, rel: float = 1e-14, start: float = 1.0, limit: float = 1e6) -> float:
    """Half-width S such that |f(s)| < rel * max|f| for |s| > S."""
    s = start
    while s <= limit:
        grid = np.linspace(-4 * s, 4 * s, 4001)
        vals = np.abs(np.asarray(f(grid), float))
        peak = vals.max()
        if peak == 0.0:
            return 0.0
        outside = vals[np.abs(grid) > s]
        if outside.max() < rel * peak:
            return s
        s *= 2.0
    raise ContractError("f does not decay; supply a mollifier")


def linear_symbol_kernel(
    f: Callable,
    sym: LinearSymbol,
    params: CoherentParams,
    x: float,
    y: float,
    *,
    mollifier: float = 0.0,
    nodes: int = 4001,
) -> complex:
    """Kernel of f(B0 + B1 x + B2 p) as an oscillatory momentum integral.

    Evaluates the integral over p of f(B0 + B1 (x+y)/2 + B2 p)
    exp(i p (x-y)/h) exp(-mollifier p^2) dp / (2 pi h) by the trapezoid
    rule on a truncated window. Without ``mollifier`` the function f must
    decay along the p direction.
    """
    h = params.h
    s0 = sym.B0 + sym.B1 * 0.5 * (x + y)
    d = x - y
    if np.all(np.asarray(f(np.linspace(-10, 10, 201))) == 0):
        return 0.0 + 0.0j
    if sym.B2 == 0.0:
        if mollifier <= 0:
            raise ContractError("B2 = 0 gives a distributional kernel; supply a mollifier")
        p_half = math.sqrt(40.0 / mollifier)
        lo, hi = -p_half, p_half
    else:
        S = _decay_window(f)
        ends = sorted(((-S - s0) / sym.B2, (S - s0) / sym.B2))
        lo, hi = ends
        if mollifier > 0:
            p_half = math.sqrt(40.0 / mollifier)
            lo, hi = max(lo, -p_half), min(hi, p_half)
    count = max(nodes, int(math.ceil((hi - lo) * abs(d) / h * 8.0)) + 1)
    p = np.linspace(lo, hi, count)
    vals = np.asarray(f(s0 + sym.B2 * p), float) * np.exp(1j * p * d / h)
    if mollifier > 0:
        vals = vals * np.exp(-mollifier * p * p)
    return complex(np.trapezoid(vals, p) / (2.0 * math.pi * h))


def _hermite_rule(nodes: int):
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return t, w / math.sqrt(math.pi)


def _trace_identity_rhs(f, sym, V, params, u, q, nodes):
    h, a, b = params.h, params.a, params.b
    t, w = _hermite_rule(nodes)
    v = u + t / math.sqrt(b)
    p = q + t / math.sqrt(b)
    z = t * h * math.sqrt(b)
    vv, pp, zz = np.meshgrid(v, p, z, indexing="ij")
    weight = w[:, None, None] * w[None, :, None] * w[None, None, :]
    vals = np.asarray(f(sym(vv, pp)), float) * np.asarray(V(vv + h * h * a * b * (u - vv) + zz), float)
    return float(np.sum(weight * vals))


def trace_identity_check(
    f: Callable,
    sym: LinearSymbol,
    V: Callable,
    params: CoherentParams,
    u: float,
    q: float,
    *,
    grid: Optional[Grid] = None,
    nodes: int = 60,
    epsilon: float = 0.0,
    tol: float = 1e-10,
):
    """Compare Tr[G f(A) G V(x)] with its phase-space integral form.

    The left side is a dense-matrix trace with f(A) from an eigensolve of
    A = B0 + B1 x + B2 P on the periodic grid. The right side integrates
    f(B0 + B1 v + B2 p) V(v + h^2 a b (u - v) + z) against the Gaussians
    G_b(v - u) G_b(p - q) G_{1/(b h^2)}(z) by tensor Gauss-Hermite
    quadrature; ``nodes`` and ``2 * nodes`` points must agree to ``tol``.
    Returns (lhs, rhs, relative deviation).
    """
    fe = f if epsilon <= 0 else (lambda s: np.asarray(f(s), float) * np.exp(-epsilon * s * s))
    h, a, b = params.h, params.a, params.b
    if grid is None:
        L = abs(u) + max(5.0, 12.0 / math.sqrt(a))
        q_max = abs(q) + max(4.0, 12.0 / math.sqrt(b))
        grid = resolved_grid(params, L, q_max)
    _check_resolution(params, grid)
    x = grid.nodes
    P = momentum_function(grid, h, lambda p: p)
    A_op = sym.B0 * np.eye(x.size) + sym.B1 * np.diag(x) + sym.B2 * P
    w, vec = np.linalg.eigh(0.5 * (A_op + A_op.conj().T))
    fA = (vec * np.asarray(fe(w), float)) @ vec.conj().T
    G = g_kernel(params, u, q, x[:, None], x[None, :]) * grid.spacing
    lhs_c = np.trace(G @ fA @ G @ np.diag(np.asarray(V(x), float) + 0.0 * x))
    if abs(lhs_c.imag) > 1e-8 * max(1.0, abs(lhs_c.real)):
        raise AccuracyError(f"trace has imaginary residue {lhs_c.imag:.3e}")
    lhs = float(lhs_c.real)
    rhs1 = _trace_identity_rhs(fe, sym, V, params, u, q, nodes)
    rhs2 = _trace_identity_rhs(fe, sym, V, params, u, q, 2 * nodes)
    if abs(rhs1 - rhs2) > tol * max(abs(rhs2), 1e-300) + 1e-15:
        raise AccuracyError(f"phase-space quadrature not converged ({rhs1} vs {rhs2})")
    dev = abs(lhs - rhs2) / max(abs(rhs2), 1e-300)
    return lhs, rhs2, dev


# ------------------------------------------------------- representation


@dataclass(eq=False)
class RepresentationResult:
    """Outcome of assembling the coherent-state representation.

    ``error_norm`` is the largest |eigenvalue| of F(P) + V(x) - assembled
    compressed to the window spanned by the lowest oscillator states
    (phase-space radius ``window_radius``).
    """

    grid: Grid
    params: CoherentParams
    error_norm: float
    window_size: int
    window_radius: float
    leakage: float
    position_part: Optional[np.ndarray] = field(default=None, repr=False)
    momentum_part: Optional[np.ndarray] = field(default=None, repr=False)
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def operator(self) -> GridOperator:
        """Assembled operator as a dense grid operator."""
        if self.matrix is not None:
            return GridOperator(self.grid, self.matrix, sym_tol=1e-10)
        n = self.grid.size
        m = np.diag(self.position_part).astype(complex)
        m += np.fft.ifft(self.momentum_part[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
        return GridOperator(self.grid, 0.5 * (m + m.conj().T), sym_tol=1e-10)


def oscillator_window(grid: Grid, h: float, radius: float) -> np.ndarray:
    """Orthonormal (plain dot product) columns spanning the oscillator states
    of -h^2 d^2/dx^2 + x^2 with energy (2k+1) h <= radius^2."""
    count = max(1, int(math.floor((radius * radius / h - 1.0) / 2.0)) + 1)
    x = grid.nodes
    psi = np.empty((x.size, count))
    psi[:, 0] = (math.pi * h) ** -0.25 * np.exp(-x * x / (2.0 * h))
    if count > 1:
        psi[:, 1] = math.sqrt(2.0 / h) * x * psi[:, 0]
    for k in range(1, count - 1):
        psi[:, k + 1] = math.sqrt(2.0 / (h * (k + 1))) * x * psi[:, k] - math.sqrt(k / (k + 1)) * psi[:, k - 1]
    qmat, _ = np.linalg.qr(psi * math.sqrt(grid.spacing))
    return qmat


def _diag_moments(params: CoherentParams, spacing: float, offsets: np.ndarray):
    """Diagonal kernels of G_{0,0}^2 and G_{0,0} x G_{0,0} at given offsets.

    Sums over the lattice partner y = t + s with |s| below the kernel's
    numerical support.
    """
    h, a = params.h, params.a
    band = int(math.ceil(14.0 * h * math.sqrt(a) / spacing)) + 1
    s = spacing * np.arange(-band, band + 1)
    t = offsets[:, None]
    y = t + s[None, :]
    k2 = np.exp(-2.0 * a * (0.5 * (t + y)) ** 2 - (s * s)[None, :] / (2.0 * h * h * a)) / (math.pi * h)
    d0 = spacing * k2.sum(axis=1)
    d1 = spacing * (k2 * y).sum(axis=1)
    return d0, d1


def _lattice_convolve(coeff_nodes, weights, node_index, kernel_by_offset, n):
    """out[i] = sum_j w_j c_j K[i - idx_j] for i in range(n)."""
    out = np.zeros(n)
    i = np.arange(n)
    for c, w, j in zip(coeff_nodes, weights, node_index):
        out += w * c * kernel_by_offset(i - j)
    return out


def _representation_grid(params: CoherentParams, radius: float) -> Grid:
    h, a, b = params.h, params.a, params.b
    reach = radius + 6.0 * math.sqrt(h) + 8.0 / math.sqrt(b) + 1.0
    return resolved_grid(params, reach, reach)


def coherent_representation(
    sigma: QuadraticSymbol,
    params: CoherentParams,
    grid: Optional[Grid] = None,
    *,
    window_radius: float = 1.0,
    method: str = "factorized",
) -> RepresentationResult:
    """Assemble the phase-space integral of G H_{u,q} G and its error.

    H_{u,q} = sigma + (1/4b) Laplacian(sigma) + d_u sigma (x - u) +
    d_q sigma (P - q). The (u, q) quadrature uses the position lattice
    for u and the dual lattice for q (trapezoid, equal weights).

    ``method="factorized"`` exploits that the V part, summed over the q
    lattice, is a multiplication operator, and the F part, summed over the
    u lattice, is a Fourier multiplier; both are then lattice convolutions.
    The momentum-side convolution kernels use the Fourier-dual form of
    G_{u,q}, which has the same Gaussian shape with x and p exchanged.
    ``method="dense"`` sums full matrices per u and is meant for small grids.
    """
    if params.n != 1:
        raise ParameterError("representation assembly is one-dimensional")
    h, a, b = params.h, params.a, params.b
    grid = _representation_grid(params, window_radius) if grid is None else grid
    _check_resolution(params, grid)
    x = grid.nodes
    n = x.size
    dx = grid.spacing
    L = -x[0]
    p = momenta(grid, h)
    dq = 2.0 * math.pi * h / (n * dx)
    p_nyq = math.pi * h / dx

    spread = 6.0 * math.sqrt(h)
    x_reach = window_radius + spread
    u_max = L
    q_max = p_nyq
    leak_u = 0.5 * float(erfc(math.sqrt(b) * (u_max - x_reach))) if u_max > x_reach else 1.0
    leak_q = 0.5 * float(erfc(math.sqrt(b) * (q_max - x_reach))) if q_max > x_reach else 1.0
    leakage = max(leak_u, leak_q)
    if leakage > 1e-6:
        raise TruncationError(f"phase-space truncation leaks {leakage:.2e} of the Gaussian mass")

    u_idx = np.nonzero(np.abs(x) <= u_max)[0]
    u_nodes = x[u_idx]
    window = oscillator_window(grid, h, window_radius)

    if method == "factorized":
        offsets = dx * np.arange(-(n - 1), n)
        d0, d1 = _diag_moments(params, dx, offsets)
        pos = lambda k: d0[k + n - 1]
        pos1 = lambda k: d1[k + n - 1]
        cV = np.asarray(sigma.V(u_nodes), float) + np.asarray(sigma.d2V(u_nodes), float) / (4.0 * b)
        dV = np.asarray(sigma.dV(u_nodes), float) * np.ones_like(u_nodes)
        w_u = np.full(u_nodes.size, dx)
        m_v = _lattice_convolve(cV, w_u, u_idx, pos, n) + _lattice_convolve(dV, w_u, u_idx, pos1, n)

        # momentum lattice sorted ascending, same construction with x <-> p
        order = np.argsort(p)
        ps = p[order]
        q_idx = np.nonzero(np.abs(ps) <= q_max)[0]
        q_nodes = ps[q_idx]
        offs_p = dq * np.arange(-(n - 1), n)
        e0, e1 = _diag_moments(params, dq, offs_p)
        mom = lambda k: e0[k + n - 1]
        mom1 = lambda k: e1[k + n - 1]
        cF = np.asarray(sigma.F(q_nodes), float) + np.asarray(sigma.d2F(q_nodes), float) / (4.0 * b)
        dF = np.asarray(sigma.dF(q_nodes), float) * np.ones_like(q_nodes)
        w_q = np.full(q_nodes.size, dq)
        m_f_sorted = _lattice_convolve(cF, w_q, q_idx, mom, n) + _lattice_convolve(dF, w_q, q_idx, mom1, n)
        m_f = np.empty(n)
        m_f[order] = m_f_sorted

        e_pos = np.asarray(sigma.V(x), float) * np.ones(n) - m_v
        e_mom = np.asarray(sigma.F(p), float) * np.ones(n) - m_f
        ew = e_pos[:, None] * window + _apply_momentum(e_mom, window)
        small = window.T @ ew
        err = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (small + small.conj().T)))))
        return RepresentationResult(grid, params, err, window.shape[1], window_radius, leakage, m_v, m_f)

    if method != "dense":
        raise ParameterError(f"unknown method {method!r}")
    FP = momentum_function(grid, h, sigma.F)
    cFP = momentum_function(grid, h, lambda t: np.asarray(sigma.F(t), float) + np.asarray(sigma.d2F(t), float) / (4.0 * b))
    dFP = momentum_function(grid, h, lambda t: np.asarray(sigma.dF(t), float) * np.ones_like(t))
    P = momentum_function(grid, h, lambda t: t)
    total = np.zeros((n, n), complex)
    eye = np.eye(n)
    # nodes farther out do not reach the window
    for u in u_nodes[np.abs(u_nodes) <= x_reach + 8.0 / math.sqrt(b)]:
        A = _a_matrix(params, u, grid)
        A2 = A @ A
        cv = float(sigma.V(u)) + float(sigma.d2V(u)) / (4.0 * b)
        term = A2 * (cv * eye + cFP) / dx
        term += float(sigma.dV(u)) * (A @ ((x - u)[:, None] * A)) * eye / dx
        term += (A @ P @ A) * dFP / dx
        total += dx * term
    total = 0.5 * (total + total.conj().T)
    E = FP + np.diag(np.asarray(sigma.V(x), float) * np.ones(n)) - total
    small = window.T @ E @ window
    err = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (small + small.conj().T)))))
    return RepresentationResult(grid, params, err, window.shape[1], window_radius, leakage, matrix=total)


# ------------------------------------------------------- density matrices


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Self-adjoint operator with 0 <= gamma <= 1 on a grid."""

    operator: GridOperator
    spectrum_tol: float = 1e-3

    def __post_init__(self):
        vals = self.spectrum()
        if vals[0] < -self.spectrum_tol or vals[-1] > 1.0 + self.spectrum_tol:
            raise AccuracyError(
                f"density matrix spectrum [{vals[0]:.3e}, {vals[-1]:.6f}] leaves [0, 1]; "
                "regularization too coarse"
            )

    @property
    def grid(self) -> Grid:
        return self.operator.grid

    def spectrum(self) -> np.ndarray:
        return symmetric_eigen(self.operator)

    def trace(self) -> float:
        t = self.operator.trace()
        return float(np.real(t))

    def expectation(self, matrix: np.ndarray) -> float:
        """Tr[H gamma] for an operator matrix H on the same grid."""
        val = np.sum(np.asarray(matrix).T * self.operator.matrix)
        return float(np.real(val))


def density_of(gamma: DensityMatrix) -> np.ndarray:
    """Diagonal of the kernel: rho(x_i) = gamma_ii / w_i."""
    m = gamma.operator.matrix
    return np.real(np.diag(m)) / gamma.grid.weights


def _trial_grid(params: CoherentParams, u_cutoff: float, q_reach: float) -> Grid:
    # G_{u,q} has Gaussian reach 1/sqrt(2a) around (u, q) in both variables
    h, a = params.h, params.a
    width = min(math.sqrt(h), 1.0 / math.sqrt(a))
    L = u_cutoff + 6.0 / math.sqrt(a)
    q_max = max(q_reach + 6.0 / math.sqrt(a), 4.0 * math.pi * h / width * (1.0 + 1e-9))
    return phase_grid(h, L, q_max)


def trial_density_matrix(
    sigma: QuadraticSymbol,
    params: CoherentParams,
    grid: Optional[Grid] = None,
    epsilon: Optional[float] = None,
    *,
    u_cutoff: float = 2.0,
    step: float = 0.5,
) -> DensityMatrix:
    """Trial density matrix: phase-space average of G chi(h_{u,q}) G.

    h_{u,q} = sigma + Laplacian(sigma)/4b + d_u sigma (x - u) +
    d_q sigma (P - q) is linear in x and P; chi is the logistic step
    expit(-s / epsilon) (default epsilon = h^2) applied through an
    eigendecomposition. Points with |u| > u_cutoff are left out, as are
    (u, q) where h_{u,q} is positive across the Gaussian's reach. The
    (u, q) quadrature is a trapezoid rule with spacing step / sqrt(b).
    """
    if params.n != 1:
        raise ParameterError("trial density matrices are one-dimensional")
    h, b = params.h, params.b
    eps = h * h if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ParameterError("epsilon must be positive")
    delta = step / math.sqrt(b)
    us = np.arange(-u_cutoff, u_cutoff + 0.5 * delta, delta)
    us = us[np.abs(us) <= u_cutoff + 1e-12]
    wu = np.full(us.size, delta)
    wu[0] *= 0.5
    wu[-1] *= 0.5
    vmin = float(np.min(np.asarray(sigma.V(np.linspace(-u_cutoff, u_cutoff, 401)), float)))
    q_reach = math.sqrt(max(0.0, -vmin)) + 4.0 / math.sqrt(b)
    if grid is None:
        grid = _trial_grid(params, u_cutoff, q_reach)
    _check_resolution(params, grid, nodes=4)
    x = grid.nodes
    n = x.size
    P = momentum_function(grid, h, lambda t: t)
    X = np.diag(x)
    eye = np.eye(n)
    k_max = int(math.ceil(q_reach / delta))
    qs = delta * np.arange(-k_max, k_max + 1)
    gamma = np.zeros((n, n), complex)
    for u, w_u in zip(us, wu):
        A = _a_matrix(params, u, grid)
        Vu = float(sigma.V(u))
        dVu = float(sigma.dV(u))
        d2Vu = float(sigma.d2V(u))
        for q in qs:
            dFq = float(sigma.dF(q))
            c0 = float(sigma.F(q)) + Vu + (float(sigma.d2F(q)) + d2Vu) / (4.0 * b)
            if c0 - 6.0 * math.hypot(dVu, dFq) / math.sqrt(b) > 0:
                continue
            hmat = c0 * eye + dVu * (X - u * eye) + dFq * P
            w, vec = np.linalg.eigh(hmat)
            chi = expit(-w / eps)
            inner = A @ ((vec * chi) @ vec.conj().T) @ A
            phase = np.exp(1j * q * x / h)
            gamma += (w_u * delta / (2.0 * math.pi * h)) * (phase[:, None] * inner * phase.conj()[None, :])
    gamma = 0.5 * (gamma + gamma.conj().T)
    return DensityMatrix(GridOperator(grid, gamma, sym_tol=1e-10))
