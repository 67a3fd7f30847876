"""Grids, quadrature, eigensolvers and a shooting ODE solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, eigh_tridiagonal, eigvalsh

from .errors import BracketError, ContractError, ParameterError, StiffnessError

__all__ = [
    "Grid",
    "GridOperator",
    "ShootingResult",
    "make_grid",
    "make_periodic_grid",
    "integrate",
    "symmetric_eigen",
    "tridiagonal_eigenvalues",
    "solve_ode_shooting",
]

GRID_KINDS = ("uniform", "log", "periodic")


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature grid: ascending nodes with positive weights.

    ``kind`` is ``"uniform"`` (trapezoid), ``"log"`` (trapezoid in log x)
    or ``"periodic"`` (equispaced torus, right endpoint excluded).
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ParameterError("grid needs at least two nodes")
        if weights.shape != nodes.shape:
            raise ParameterError("nodes and weights differ in length")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("grid nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ParameterError("grid weights must be positive")
        if self.kind not in GRID_KINDS:
            raise ParameterError(f"unknown grid kind {self.kind!r}")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        """Node spacing of a uniform or periodic grid."""
        if self.kind == "log":
            raise ParameterError("log grid has no constant spacing")
        return float(self.nodes[1] - self.nodes[0])

    def interior(self) -> "Grid":
        """Interior nodes of a uniform grid, each carrying weight dx.

        This is the natural grid for Dirichlet problems where the boundary
        values are pinned to zero.
        """
        if self.kind != "uniform" or self.size < 3:
            raise ParameterError("interior() needs a uniform grid with >= 3 nodes")
        dx = self.spacing
        inner = self.nodes[1:-1]
        return Grid(inner, np.full(inner.size, dx), "uniform")


def make_grid(xmin: float, xmax: float, count: int, kind: str = "uniform") -> Grid:
    """Build a uniform or log-spaced grid including both endpoints.

    Uniform grids carry composite trapezoid weights. Log grids use the
    trapezoid rule in ``t = log x`` so that weights are ``x_i * dt``.
    """
    count = int(count)
    if not (np.isfinite(xmin) and np.isfinite(xmax)) or xmin >= xmax:
        raise ParameterError(f"invalid bounds ({xmin}, {xmax})")
    if count < 2:
        raise ParameterError("count must be at least 2")
    if kind == "uniform":
        nodes = np.linspace(xmin, xmax, count)
        dx = (xmax - xmin) / (count - 1)
        weights = np.full(count, dx)
        weights[0] = weights[-1] = 0.5 * dx
    elif kind == "log":
        if xmin <= 0:
            raise ParameterError("log-spaced grid needs xmin > 0")
        t = np.linspace(math.log(xmin), math.log(xmax), count)
        dt = t[1] - t[0]
        nodes = np.exp(t)
        nodes[0], nodes[-1] = xmin, xmax
        weights = nodes * dt
        weights[0] *= 0.5
        weights[-1] *= 0.5
    else:
        raise ParameterError(f"unknown grid kind {kind!r}")
    return Grid(nodes, weights, kind)


def make_periodic_grid(half_width: float, count: int) -> Grid:
    """Equispaced grid on [-L, L) with ``count`` (even) nodes, x=0 included."""
    count = int(count)
    if half_width <= 0 or count < 4 or count % 2:
        raise ParameterError("periodic grid needs L > 0 and an even count >= 4")
    dx = 2.0 * half_width / count
    nodes = -half_width + dx * np.arange(count)
    return Grid(nodes, np.full(count, dx), "periodic")


def integrate(values, grid: Grid) -> float:
    """Weighted sum of ``values`` on ``grid`` with compensated summation."""
    values = np.asarray(values)
    if values.shape != grid.nodes.shape:
        raise ParameterError(
            f"values have shape {values.shape}, grid has {grid.nodes.shape}"
        )
    terms = values * grid.weights
    if np.iscomplexobj(terms):
        return complex(math.fsum(terms.real), math.fsum(terms.imag))
    return math.fsum(terms)


@dataclass(frozen=True, eq=False)
class GridOperator:
    """Dense matrix acting on nodal values of ``grid``.

    The matrix is self-adjoint in the weighted inner product
    ``<f, g> = sum_i w_i conj(f_i) g_i``, i.e. ``W @ matrix`` is Hermitian.
    """

    grid: Grid
    matrix: np.ndarray
    sym_tol: float = 1e-12

    def __post_init__(self):
        m = np.asarray(self.matrix)
        n = self.grid.size
        if m.shape != (n, n):
            raise ContractError(f"matrix shape {m.shape} does not match grid size {n}")
        object.__setattr__(self, "matrix", m)
        if self.asymmetry() > self.sym_tol:
            raise ContractError(
                f"operator not self-adjoint: relative asymmetry {self.asymmetry():.3e}"
            )

    @property
    def dim(self) -> int:
        return self.grid.size

    def _sandwich(self) -> np.ndarray:
        s = np.sqrt(self.grid.weights)
        return s[:, None] * self.matrix / s[None, :]

    def asymmetry(self) -> float:
        a = self._sandwich()
        scale = max(np.abs(a).max(), 1e-300)
        return float(np.abs(a - a.conj().T).max() / scale)

    def trace(self):
        t = np.trace(self.matrix)
        return complex(t) if np.iscomplexobj(t) else float(t)

    def symmetric_matrix(self) -> np.ndarray:
        """Symmetrized ``W^{1/2} M W^{-1/2}`` used for eigensolves."""
        a = self._sandwich()
        return 0.5 * (a + a.conj().T)


def symmetric_eigen(op: GridOperator, want="all", vectors: bool = False):
    """Eigenvalues (ascending) of a self-adjoint grid operator.

    ``want`` is ``"all"`` or an integer k for the lowest k eigenvalues.
    With ``vectors=True`` returns ``(values, vectors)`` where the columns
    are orthonormal in the weighted inner product of the grid.
    """
    if op.asymmetry() > op.sym_tol:
        raise ContractError("symmetric_eigen needs a self-adjoint operator")
    a = op.symmetric_matrix()
    n = op.dim
    if want == "all":
        k = n
    else:
        k = int(want)
        if not 1 <= k <= n:
            raise ParameterError(f"want must be in [1, {n}]")
    subset = None if k == n else [0, k - 1]
    if vectors:
        vals, vecs = eigh(a, subset_by_index=subset)
        vecs = vecs / np.sqrt(op.grid.weights)[:, None]
        return vals, vecs
    return eigvalsh(a, subset_by_index=subset)


def tridiagonal_eigenvalues(diag, off, upper: float = 0.0) -> np.ndarray:
    """Eigenvalues below ``upper`` of a real symmetric tridiagonal matrix."""
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    # Gershgorin lower bound
    pad = np.zeros(diag.size)
    pad[:-1] += np.abs(off)
    pad[1:] += np.abs(off)
    lower = float(np.min(diag - pad)) - 1.0
    if lower >= upper:
        return np.empty(0)
    return eigh_tridiagonal(
        diag, off, eigvals_only=True, select="v", select_range=(lower, upper)
    )


@dataclass
class ShootingResult:
    """Converged shooting run: slope, trajectory and diagnostics."""

    slope: float
    x: np.ndarray
    y: np.ndarray
    mismatch: float
    iterations: int
    bracket: tuple
    solution: object = field(default=None, repr=False)


def _integrate(rhs, y0, slope, x_span, method, rtol, atol, events, dense):
    sol = solve_ivp(
        rhs,
        x_span,
        [y0, slope],
        method=method,
        rtol=rtol,
        atol=atol,
        events=events,
        dense_output=dense,
    )
    if sol.status == -1:
        raise StiffnessError(f"integration failed at slope {slope!r}: {sol.message}")
    return sol


def solve_ode_shooting(
    rhs: Callable,
    y0: float,
    slope_bracket: Sequence[float],
    boundary_target: float,
    tol: float,
    *,
    x_span: Sequence[float] = (0.0, 1.0),
    mismatch: Optional[Callable] = None,
    events=None,
    method: str = "DOP853",
    rtol: float = 1e-12,
    atol: float = 1e-14,
    max_iter: int = 200,
    slope_tol: float = 0.0,
) -> ShootingResult:
    """Solve a second-order two-point problem by bisection on y'(x0).

    ``rhs(x, [y, y'])`` is the first-order system. The default mismatch is
    ``y(x1) - boundary_target``; a custom ``mismatch(sol)`` receiving the
    ``solve_ivp`` result (with ``events`` attached) may be supplied, e.g.
    a sign classification for problems on a half line.

    Iteration stops when ``|mismatch| < tol``, when the bracket is narrower
    than ``slope_tol``, or when it has shrunk to a few ulps.
    """
    lo, hi = (float(s) for s in slope_bracket)
    if not lo < hi:
        raise BracketError(f"degenerate slope bracket [{lo}, {hi}]")
    if tol <= 0:
        raise ParameterError("tol must be positive")

    def evaluate(s):
        sol = _integrate(rhs, y0, s, x_span, method, rtol, atol, events, False)
        if mismatch is None:
            return float(sol.y[0, -1] - boundary_target)
        return float(mismatch(sol))

    f_lo, f_hi = evaluate(lo), evaluate(hi)
    if f_lo == 0.0 or f_hi == 0.0:
        best, f_best, it = (lo, f_lo, 0) if f_lo == 0.0 else (hi, f_hi, 0)
    elif np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"no sign change of the mismatch on [{lo}, {hi}] ({f_lo:.3e}, {f_hi:.3e})"
        )
    else:
        best, f_best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
        it = 0
        while it < max_iter:
            it += 1
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            f_mid = evaluate(mid)
            if abs(f_mid) <= abs(f_best):
                best, f_best = mid, f_mid
            if abs(f_mid) < tol:
                best, f_best = mid, f_mid
                break
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid, f_mid
            else:
                hi, f_hi = mid, f_mid
            if hi - lo <= max(slope_tol, 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0)):
                best = 0.5 * (lo + hi)
                f_best = evaluate(best)
                break
    sol = _integrate(rhs, y0, best, x_span, method, rtol, atol, events, True)
    return ShootingResult(
        slope=best,
        x=sol.t,
        y=sol.y,
        mismatch=f_best,
        iterations=it,
        bracket=(lo, hi),
        solution=sol,
    )
