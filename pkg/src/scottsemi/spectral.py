"""Quantum and semiclassical traces of Schroedinger operators.

Conventions: ``RadialPotential.func`` is the potential V and the radial
Hamiltonian is -h^2 Delta - V when ``attractive`` is set, -h^2 Delta + V
otherwise. Traces are spinless unless a ``spin`` factor is given.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal
from scipy.special import gamma as gamma_fn

from .errors import DomainError, LMaxError, ParameterError
from .numerics import Grid, GridOperator, make_grid, symmetric_eigen, tridiagonal_eigenvalues

__all__ = [
    "RadialPotential",
    "RadialGridConfig",
    "ChannelSpectrum",
    "NegativeSpectrumSummary",
    "HydrogenSum",
    "build_hamiltonian_1d",
    "localized_trace_neg",
    "rescaled_trace_check",
    "channel_eigenvalues",
    "radial_negative_sum",
    "hydrogen_negative_sum_exact",
    "negative_projection_density",
    "unit_ball_volume",
    "momentum_neg_integral",
    "phase_space_neg_integral",
    "semiclassical_density",
]

ZERO_CUTOFF = 1e-10


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / gamma_fn(n / 2.0 + 1.0)


def _sphere_area(n: int) -> float:
    return n * unit_ball_volume(n)


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Central potential V(r) with an explicit sign convention."""

    func: Callable
    attractive: bool = True
    potential_id: str = "custom"
    charge: float = 0.0  # Coulomb strength lim r V(r) at the origin

    def term(self, r):
        """Potential term entering the Hamiltonian -h^2 Delta + term(r)."""
        v = np.asarray(self.func(np.asarray(r, float)), float)
        return -v if self.attractive else v

    @classmethod
    def hydrogen(cls, z: float, shift: float = 1.0) -> "RadialPotential":
        """V = z/r - shift, i.e. H = -h^2 Delta - z/r + shift."""
        if z <= 0:
            raise ParameterError("z must be positive")
        return cls(
            lambda r: z / r - shift,
            True,
            f"hydrogen(z={z!r},shift={shift!r})",
            float(z),
        )

    @classmethod
    def thomas_fermi(cls, atom) -> "RadialPotential":
        return cls(atom.potential, True, f"thomas-fermi(z={atom.z!r})", atom.z)

    @classmethod
    def gaussian_well(cls, depth: float = 2.0) -> "RadialPotential":
        """V = -depth exp(-r^2) entering with a plus sign."""
        return cls(lambda r: -depth * np.exp(-r * r), False, f"gaussian(depth={depth!r})", 0.0)


@dataclass(frozen=True)
class RadialGridConfig:
    """Uniform radial grid controls.

    ``points_per_scale`` nodes per natural length (the Bohr radius 2h^2/z
    for Coulomb-class potentials). ``nodes`` overrides the automatic
    count. With ``richardson`` each channel is solved on n and 2n nodes
    and the index-matched eigenvalues are extrapolated in dr^2.
    """

    r_max: Optional[float] = None
    points_per_scale: float = 30.0
    nodes: Optional[int] = None
    min_nodes: int = 400
    richardson: bool = True
    l_max_cap: int = 2000
    boundary_mass_tol: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if self.points_per_scale <= 0 or self.min_nodes < 64 or self.l_max_cap < 0:
            raise ParameterError("invalid radial grid configuration")
        if self.nodes is not None and self.nodes < 64:
            raise ParameterError("radial grids need at least 64 nodes")
        if self.r_max is not None and self.r_max <= 0:
            raise ParameterError("r_max must be positive")


@dataclass(frozen=True)
class ChannelSpectrum:
    l: int
    eigenvalues: tuple


@dataclass(frozen=True)
class NegativeSpectrumSummary:
    """Negative eigenvalues per angular channel and their weighted sum."""

    h: float
    potential_id: str
    l_max: int
    channels: tuple
    weighted_sum: float
    grid: dict = field(default_factory=dict)

    @property
    def counts(self) -> dict:
        return {c.l: len(c.eigenvalues) for c in self.channels}

    @property
    def total_count(self) -> int:
        return sum((2 * c.l + 1) * len(c.eigenvalues) for c in self.channels)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "potential_id": self.potential_id,
            "l_max": self.l_max,
            "channels": [{"l": c.l, "eigenvalues": list(c.eigenvalues)} for c in self.channels],
            "weighted_sum": self.weighted_sum,
            "grid": dict(self.grid),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NegativeSpectrumSummary":
        d = json.loads(text)
        channels = tuple(ChannelSpectrum(int(c["l"]), tuple(c["eigenvalues"])) for c in d["channels"])
        return cls(d["h"], d["potential_id"], int(d["l_max"]), channels, d["weighted_sum"], d.get("grid", {}))


class HydrogenSum(NamedTuple):
    exact: float
    asymptotic: float


# ---------------------------------------------------------------- 1-D operators


def _uniform_check(grid: Grid):
    if grid.kind != "uniform":
        raise ParameterError("a uniform grid is required")
    if grid.size < 5:
        raise ParameterError("grid too small")


def build_hamiltonian_1d(V: Callable, h: float, grid: Grid, boundary: str = "dirichlet", stencil: int = 3) -> GridOperator:
    """Finite-difference -h^2 d^2/dx^2 + V on the interior nodes of ``grid``."""
    _uniform_check(grid)
    if boundary != "dirichlet":
        raise ParameterError("only Dirichlet boundaries are supported")
    inner = grid.interior()
    x = inner.nodes
    n = x.size
    dx = grid.spacing
    if stencil == 3:
        coeffs = [2.0, -1.0]
    elif stencil == 5:
        coeffs = [30.0 / 12.0, -16.0 / 12.0, 1.0 / 12.0]
    else:
        raise ParameterError("stencil must be 3 or 5")
    m = np.diag(np.asarray(V(x), float) + h * h * coeffs[0] / dx**2)
    for k, c in enumerate(coeffs[1:], start=1):
        off = np.full(n - k, h * h * c / dx**2)
        m += np.diag(off, k) + np.diag(off, -k)
    return GridOperator(inner, m)


def _neg_sum(values) -> float:
    values = np.asarray(values)
    return math.fsum(values[values < -ZERO_CUTOFF])


def localized_trace_neg(phi: Callable, V: Callable, h: float, grid: Grid, stencil: int = 3) -> float:
    """Tr[phi H phi]_- for H = -h^2 d^2/dx^2 + V with Dirichlet ends."""
    _uniform_check(grid)
    ends = np.abs(np.asarray(phi(grid.nodes[[0, -1]]), float))
    if np.any(ends > 1e-12):
        raise DomainError("localization function does not vanish at the grid boundary")
    x = grid.nodes[1:-1]
    f = np.asarray(phi(x), float)
    if stencil == 3:
        dx = grid.spacing
        kin = h * h / dx**2
        d = f * f * (2.0 * kin + np.asarray(V(x), float))
        off = -kin * f[:-1] * f[1:]
        return _neg_sum(tridiagonal_eigenvalues(d, off, upper=0.0))
    op = build_hamiltonian_1d(V, h, grid, stencil=stencil)
    m = f[:, None] * op.matrix * f[None, :]
    return _neg_sum(symmetric_eigen(GridOperator(op.grid, m)))


def rescaled_trace_check(phi: Callable, V: Callable, h: float, grid: Grid, f: float, ell: float):
    """Compare Tr[phi H phi]_- with its dilated form.

    With y = x / ell the operator equals f^2 [-(h/(f ell))^2 d^2/dy^2 +
    f^-2 V(ell y)] localized by phi(ell y). Returns (direct, rescaled,
    relative deviation).
    """
    if f <= 0 or ell <= 0:
        raise ParameterError("f and ell must be positive")
    direct = localized_trace_neg(phi, V, h, grid)
    nodes = grid.nodes / ell
    scaled_grid = make_grid(nodes[0], nodes[-1], nodes.size)
    h2 = h / (f * ell)
    rescaled = f * f * localized_trace_neg(
        lambda y: phi(ell * y), lambda y: V(ell * y) / f**2, h2, scaled_grid
    )
    dev = abs(direct - rescaled) / max(abs(direct), 1e-300)
    return direct, rescaled, dev


# ------------------------------------------------------------- radial operators


def _radial_rmax(potential: RadialPotential, h: float, config: RadialGridConfig) -> float:
    if config.r_max is not None:
        return float(config.r_max)
    if potential.charge > 0:
        lowest = potential.charge**2 / (4.0 * h * h)
        return max(40.0, 6.0 * potential.charge / math.sqrt(lowest))
    return 40.0


def _radial_nodes(potential: RadialPotential, h: float, r_max: float, config: RadialGridConfig) -> int:
    if config.nodes is not None:
        return int(config.nodes)
    if potential.charge > 0:
        scale = 2.0 * h * h / potential.charge
    else:
        r = np.linspace(r_max * 1e-3, r_max, 2000)
        depth = max(float(np.max(-potential.term(r))), 1e-12)
        scale = h / math.sqrt(depth)
    return max(config.min_nodes, int(math.ceil(r_max * config.points_per_scale / scale)))


class _RadialProblem:
    """Cached potential samples for one (potential, h, grid) combination."""

    def __init__(self, potential, h, r_max, n, weight=None):
        self.h = h
        self.r_max = r_max
        self.levels = {}
        for m in (n, 2 * n):
            dr = r_max / m
            r = dr * np.arange(1, m)
            w = None if weight is None else np.asarray(weight(r), float)
            self.levels[m] = (r, dr, potential.term(r), w)
        self.n = n

    def tridiagonal(self, m, l):
        r, dr, term, w = self.levels[m]
        kin = self.h * self.h / dr**2
        d = 2.0 * kin + self.h * self.h * l * (l + 1) / r**2 + term
        off = np.full(m - 2, -kin)
        if w is not None:
            d = w * w * d
            off = off * w[:-1] * w[1:]
        return d, off

    def eigenvalues(self, m, l):
        d, off = self.tridiagonal(m, l)
        return tridiagonal_eigenvalues(d, off, upper=0.0)

    def lowest_vector(self, l=0):
        d, off = self.tridiagonal(self.n, l)
        vals, vecs = eigh_tridiagonal(d, off, select="i", select_range=(0, 0))
        return vals[0], vecs[:, 0]


def _richardson(coarse, fine) -> np.ndarray:
    k = min(coarse.size, fine.size)
    ext = (4.0 * fine[:k] - coarse[:k]) / 3.0
    return np.concatenate([ext, fine[k:]])


def _channel(problem: _RadialProblem, l: int, richardson: bool) -> np.ndarray:
    n = problem.n
    if richardson:
        vals = _richardson(problem.eigenvalues(n, l), problem.eigenvalues(2 * n, l))
    else:
        vals = problem.eigenvalues(n, l)
    vals = np.sort(vals)
    return vals[vals < -ZERO_CUTOFF]


def channel_eigenvalues(potential: RadialPotential, h: float, l: int, config: RadialGridConfig = RadialGridConfig()) -> np.ndarray:
    """Negative eigenvalues of a single angular channel, ascending."""
    r_max = _radial_rmax(potential, h, config)
    n = _radial_nodes(potential, h, r_max, config)
    return _channel(_RadialProblem(potential, h, r_max, n), int(l), config.richardson)


def radial_negative_sum(
    potential: RadialPotential,
    h: float,
    config: RadialGridConfig = RadialGridConfig(),
    localization: Optional[Callable] = None,
) -> NegativeSpectrumSummary:
    """Sum of negative eigenvalues of a central Schroedinger operator in 3-D.

    Each channel l contributes (2l+1) times its negative eigenvalues. The
    loop stops at the first channel without negative spectrum. With
    ``localization`` phi(r) the operator phi H phi is used instead of H.
    """
    if not 0 < h < 1e3:
        raise ParameterError("h must be positive")
    r_max = _radial_rmax(potential, h, config)
    n = _radial_nodes(potential, h, r_max, config)
    problem = _RadialProblem(potential, h, r_max, n, localization)

    if localization is None:
        e0, vec = problem.lowest_vector(0)
        if e0 < 0:
            tail = vec[int(0.95 * vec.size):]
            mass = float(np.sum(tail**2) / np.sum(vec**2))
            if mass > config.boundary_mass_tol:
                raise DomainError(f"r_max={r_max} too small: boundary mass {mass:.2e}")

    channels = []
    l_max = None
    threads = max(1, int(config.threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        l0 = 0
        while l_max is None:
            if l0 > config.l_max_cap:
                raise LMaxError(f"channels still bind at l_max cap {config.l_max_cap}")
            batch = list(range(l0, min(l0 + threads, config.l_max_cap + 1)))
            results = list(pool.map(lambda l: _channel(problem, l, config.richardson), batch))
            for l, vals in zip(batch, results):
                if vals.size == 0:
                    l_max = l
                    break
                channels.append(ChannelSpectrum(l, tuple(float(v) for v in vals)))
            l0 = batch[-1] + 1
    terms = []
    for c in channels:
        terms.extend((2 * c.l + 1) * np.asarray(c.eigenvalues))
    weighted = math.fsum(terms)
    meta = {"r_max": r_max, "nodes": n, "richardson": config.richardson}
    return NegativeSpectrumSummary(float(h), potential.potential_id, int(l_max), tuple(channels), weighted, meta)


def negative_projection_density(
    potential: RadialPotential,
    h: float,
    config: RadialGridConfig = RadialGridConfig(),
):
    """Density of the spectral projection onto negative energies (spinless).

    Returns (r, rho) on the radial solver grid, rho(r) = sum_l (2l+1)
    sum_k u_lk(r)^2 / (4 pi r^2) with u_lk normalized reduced radial
    eigenfunctions. No Richardson step is applied.
    """
    if not 0 < h < 1e3:
        raise ParameterError("h must be positive")
    r_max = _radial_rmax(potential, h, config)
    n = _radial_nodes(potential, h, r_max, config)
    problem = _RadialProblem(potential, h, r_max, n)
    r, dr = problem.levels[n][0], problem.levels[n][1]
    rho = np.zeros_like(r)
    for l in range(config.l_max_cap + 1):
        d, off = problem.tridiagonal(n, l)
        vals = tridiagonal_eigenvalues(d, off, upper=0.0)
        vals = vals[vals < -ZERO_CUTOFF]
        if vals.size == 0:
            return r, rho
        _, vecs = eigh_tridiagonal(d, off, select="i", select_range=(0, vals.size - 1))
        vecs = vecs / math.sqrt(dr)
        rho += (2 * l + 1) * np.sum(vecs**2, axis=1) / (4.0 * math.pi * r * r)
    raise LMaxError(f"channels still bind at l_max cap {config.l_max_cap}")


def hydrogen_negative_sum_exact(z: float, h: float) -> HydrogenSum:
    """Negative-eigenvalue sum of the shifted hydrogen operator.

    The spectrum of -h^2 Delta - z/r + 1 is 1 - z^2/(4 h^2 n^2) with
    multiplicity n^2, so the negative part sums to sum_n (n^2 - z^2/4h^2).
    """
    if z <= 0 or h <= 0:
        raise ParameterError("z and h must be positive")
    kmax = int(math.floor(z / (2.0 * h) + 1e-12))
    c = z * z / (4.0 * h * h)
    exact = math.fsum(n * n - c for n in range(1, kmax + 1))
    asymptotic = -(z**3) / (12.0 * h**3) + z * z / (8.0 * h * h)
    return HydrogenSum(exact, asymptotic)


# ------------------------------------------------------------- phase space


def momentum_neg_integral(s: float, n: int) -> float:
    """Integral over R^n of (p^2 + s)_- dp in closed form."""
    if s >= 0:
        return 0.0
    return -(2.0 / (n + 2.0)) * unit_ball_volume(n) * abs(s) ** (n / 2.0 + 1.0)


def phase_space_neg_integral(
    V,
    h: float,
    n: int = 3,
    weight: Optional[Callable] = None,
    *,
    spin: int = 1,
    domain: Optional[Sequence[float]] = None,
) -> float:
    """(2 pi h)^-n times the integral of phi^2 (p^2 + V)_- over phase space.

    ``V`` is either a :class:`RadialPotential` (radial integration in
    dimension n, to ``domain[1]`` or infinity) or, for n = 1, a callable
    integrated over ``domain``. The momentum integral is done in closed
    form.
    """
    if h <= 0:
        raise ParameterError("h must be positive")
    if spin not in (1, 2):
        raise ParameterError("spin must be 1 or 2")
    coeff = -(2.0 / (n + 2.0)) * unit_ball_volume(n) * (2.0 * math.pi * h) ** -n * spin
    power = n / 2.0 + 1.0
    w2 = (lambda r: 1.0) if weight is None else (lambda r: float(np.ravel(weight(np.array([r])))[0]) ** 2)

    if isinstance(V, RadialPotential):
        area = _sphere_area(n)

        def integrand(s):
            r = s * s
            t = float(V.term(np.array([r]))[0])
            if t >= 0:
                return 0.0
            return w2(r) * (-t) ** power * area * r ** (n - 1) * 2.0 * s

        upper = math.inf if domain is None else math.sqrt(domain[1])
        lower = 0.0 if domain is None else math.sqrt(max(domain[0], 0.0))
        val, err = quad(integrand, lower, upper, limit=500, epsabs=0.0, epsrel=1e-12)
    else:
        if n != 1 or domain is None:
            raise ParameterError("plain callables need n = 1 and a finite domain")

        def integrand(x):
            t = float(V(x))
            return 0.0 if t >= 0 else w2(x) * (-t) ** power

        a, b = domain
        val, err = quad(integrand, a, b, limit=500, epsabs=0.0, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300) + 1e-14:
        raise DomainError(f"phase-space integral did not converge (value {val}, error {err})")
    return coeff * val


def semiclassical_density(V, h: float, n: int, x=None, spin: int = 1):
    """(2 pi h)^-n omega_n |V_-|^(n/2), times 2 for spin 2.

    ``V`` is a :class:`RadialPotential` or callable evaluated at ``x``, or
    an array of potential values.
    """
    if isinstance(V, RadialPotential):
        V = V.term
    vals = np.asarray(V(x) if callable(V) else V, float)
    out = spin * (2.0 * math.pi * h) ** -n * unit_ball_volume(n) * np.maximum(-vals, 0.0) ** (n / 2.0)
    return float(out) if out.ndim == 0 else out
