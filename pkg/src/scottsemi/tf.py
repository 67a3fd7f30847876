"""Thomas-Fermi theory for neutral atoms and simple molecular geometry.

The atomic potential is written V(r) = z * phi(r / mu) / r with the
universal screening function phi solving

    phi''(x) = phi(x)**1.5 / sqrt(x),   phi(0) = 1,   phi(inf) = 0,

and mu = (9 pi^2 / 128)^(1/3) z^(-1/3). Density and potential are tied by
V = 0.5 (3 pi^2)^(2/3) rho^(2/3).

Numerically the equation is integrated in t = sqrt(x), where it reads
phi_t = 2 t psi, psi_t = 2 phi^(3/2) with psi = dphi/dx, which removes the
x^(-1/2) singularity at the origin.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import AccuracyError, BracketError, DomainError, ParameterError
from .numerics import Grid, integrate, make_grid, solve_ode_shooting

__all__ = [
    "TF_CONSTANT",
    "TFUniversal",
    "TFAtom",
    "MolecularGeometry",
    "solve_tf_universal",
    "tf_potential",
    "tf_density",
    "tf_energy",
    "tf_energy_functional",
    "coulomb_energy_radial",
    "geometry_d",
    "geometry_f",
    "geometry_ell",
    "geometry_ell_gradient",
    "molecular_potential_bounds",
    "w_k",
    "scaling_check",
    "sandwich_constants",
]

TF_CONSTANT = 0.5 * (3.0 * math.pi**2) ** (2.0 / 3.0)
MU_CONSTANT = (9.0 * math.pi**2 / 128.0) ** (1.0 / 3.0)

# decaying solutions behave like 144/x^3 (1 + F x^-c) at large x
TAIL_EXPONENT = 0.5 * (math.sqrt(73.0) - 7.0)


def _rhs(t, y):
    phi = y[0] if y[0] > 0.0 else 0.0
    return [2.0 * t * y[1], 2.0 * phi**1.5]


def _event_phi(t, y):
    return y[0]


def _event_dphi(t, y):
    return y[1]


_event_phi.terminal = True
_event_dphi.terminal = True


def _classify(sol) -> float:
    # -1: phi crossed zero (slope too steep); +1: phi turned up (too shallow)
    if sol.t_events[0].size:
        return -1.0
    return 1.0


def _inward_tail(x_start: float, f_guess: float = -13.27):
    """Decaying solution integrated inward from the asymptotic regime."""
    c = TAIL_EXPONENT
    phi = 144.0 / x_start**3 * (1.0 + f_guess * x_start**-c)
    dphi = -432.0 / x_start**4 * (1.0 + f_guess * x_start**-c) - 144.0 * c * f_guess * x_start ** (
        -4.0 - c
    )
    sol = solve_ivp(
        _rhs,
        [math.sqrt(x_start), 0.0],
        [phi, dphi],
        method="DOP853",
        rtol=1e-13,
        atol=1e-300,
        dense_output=True,
    )
    if sol.status != 0:
        raise AccuracyError(f"inward tail integration failed: {sol.message}")
    return sol


@dataclass(frozen=True, eq=False)
class TFUniversal:
    """Tabulated universal screening function phi(x).

    Between tabulated nodes a cubic Hermite interpolant in log x is used.
    Below the first node the small-x expansion 1 + B x + (4/3) x^(3/2) is
    used, beyond the last node the fitted power-law tail.
    """

    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    initial_slope: float
    tail_exponent_check: float
    tail_coefficients: tuple = (144.0, 0.0)
    _spline: object = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, float)
        phi = np.asarray(self.phi, float)
        dphi = np.asarray(self.dphi, float)
        if not (x.ndim == 1 and x.shape == phi.shape == dphi.shape and x.size >= 2):
            raise ParameterError("inconsistent TF table shapes")
        if np.any(phi <= 0) or np.any(np.diff(phi) >= 0):
            raise AccuracyError("TF table must be positive and strictly decreasing")
        for name, arr in (("x", x), ("phi", phi), ("dphi", dphi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        spline = CubicHermiteSpline(np.log(x), phi, dphi * x)
        object.__setattr__(self, "_spline", spline)

    def _tail(self, x):
        a, af = self.tail_coefficients
        c = TAIL_EXPONENT
        val = a * x**-3.0 + af * x ** (-3.0 - c)
        der = -3.0 * a * x**-4.0 - (3.0 + c) * af * x ** (-4.0 - c)
        return val, der

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.empty_like(x)
        lo = x < self.x[0]
        hi = x > self.x[-1]
        mid = ~(lo | hi)
        xl = x[lo]
        out[lo] = 1.0 + self.initial_slope * xl + (4.0 / 3.0) * xl**1.5
        out[mid] = self._spline(np.log(x[mid]))
        out[hi] = self._tail(x[hi])[0]
        return out

    def derivative(self, x):
        x = np.asarray(x, float)
        out = np.empty_like(x)
        lo = x < self.x[0]
        hi = x > self.x[-1]
        mid = ~(lo | hi)
        out[lo] = self.initial_slope + 2.0 * np.sqrt(x[lo])
        out[mid] = self._spline(np.log(x[mid]), 1) / x[mid]
        out[hi] = self._tail(x[hi])[1]
        return out

    def to_csv(self) -> str:
        """Table as CSV text with columns x, phi, phi'."""
        buf = io.StringIO()
        buf.write("x,phi,phi'\n")
        for row in zip(self.x, self.phi, self.dphi):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def solve_tf_universal(
    tol: float = 1e-10,
    *,
    horizon: float = 60.0,
    x_min: float = 1e-9,
    x_max: float = 10.0**4.5,
    count: int = 6000,
    match_point: float = 1.0,
) -> TFUniversal:
    """Solve the universal TF equation by shooting on phi'(0).

    The slope is bisected until the bracket is narrower than ``tol``; a
    trial slope is too steep when phi reaches zero before ``horizon`` and
    too shallow when phi' reaches zero. The tabulated function uses the
    converged forward trajectory up to ``match_point``; beyond it the
    decaying solution obtained by inward integration from the power-law
    regime, rescaled (phi -> s^3 phi(s x)) to continue the forward value.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    return _solve_tf_universal_cached(
        float(tol), float(horizon), float(x_min), float(x_max), int(count), float(match_point)
    )


@functools.lru_cache(maxsize=8)
def _solve_tf_universal_cached(tol, horizon, x_min, x_max, count, match_point):
    try:
        shot = solve_ode_shooting(
            _rhs,
            1.0,
            (-1.7, -1.5),
            0.0,
            tol=0.5,  # classification mismatch is +-1; stop on slope_tol only
            x_span=(0.0, math.sqrt(horizon)),
            mismatch=_classify,
            events=[_event_phi, _event_dphi],
            rtol=1e-13,
            atol=1e-15,
            slope_tol=tol,
        )
    except BracketError as exc:
        raise BracketError(f"TF shooting failed: {exc}") from exc
    slope = shot.slope
    forward = shot.solution.sol
    t_end = shot.solution.t[-1]
    if t_end**2 < 2.0 * match_point:
        raise AccuracyError("forward TF trajectory terminated before the match point")

    tail_start = 1e5 if x_max < 1e5 else 10.0 * x_max
    inward = _inward_tail(tail_start)
    phi_match = float(forward(math.sqrt(match_point))[0])

    def family(s, x):
        return s**3 * inward.sol(math.sqrt(s * x))[0]

    s0 = inward.y[0, -1] ** (-1.0 / 3.0)
    scale = brentq(lambda s: family(s, match_point) - phi_match, 0.8 * s0, 1.25 * s0, xtol=1e-15)

    x = np.logspace(math.log10(x_min), math.log10(x_max), count)
    phi = np.empty(count)
    dphi = np.empty(count)
    inner = x <= match_point
    yf = forward(np.sqrt(x[inner]))
    phi[inner], dphi[inner] = yf[0], yf[1]
    yt = inward.sol(np.sqrt(scale * x[~inner]))
    phi[~inner] = scale**3 * yt[0]
    dphi[~inner] = scale**4 * yt[1]

    # tail fit phi = a x^-3 + af x^(-3-c) matching value and slope at the last node
    xe, pe, de = x[-1], phi[-1], dphi[-1]
    c = TAIL_EXPONENT
    mat = np.array([[xe**-3.0, xe ** (-3.0 - c)], [-3.0 * xe**-4.0, -(3.0 + c) * xe ** (-4.0 - c)]])
    a, af = np.linalg.solve(mat, [pe, de])

    probe = min(1e4, x[-1])
    idx = int(np.searchsorted(x, probe)) - 1
    tail_slope = float(x[idx] * dphi[idx] / phi[idx])
    return TFUniversal(
        x=x,
        phi=phi,
        dphi=dphi,
        initial_slope=float(slope),
        tail_exponent_check=tail_slope,
        tail_coefficients=(float(a), float(af)),
    )


@dataclass(frozen=True, eq=False)
class TFAtom:
    """Neutral Thomas-Fermi atom of nuclear charge z."""

    z: float
    universal: TFUniversal
    length_scale: float = field(default=0.0)

    def __post_init__(self):
        if not (np.isfinite(self.z) and self.z > 0):
            raise ParameterError(f"nuclear charge must be positive, got {self.z}")
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "length_scale", MU_CONSTANT * self.z ** (-1.0 / 3.0))

    @classmethod
    def build(cls, z: float, tol: float = 1e-10) -> "TFAtom":
        return cls(z, solve_tf_universal(tol))

    def potential(self, r):
        r = np.asarray(r, float)
        return self.z * self.universal(r / self.length_scale) / r

    def potential_derivative(self, r):
        r = np.asarray(r, float)
        mu = self.length_scale
        return self.z * (self.universal.derivative(r / mu) / (mu * r) - self.universal(r / mu) / r**2)

    def density(self, r):
        v = np.maximum(self.potential(r), 0.0)
        return (2.0 * v) ** 1.5 / (3.0 * math.pi**2)

    def to_json_dict(self, table: str = "tf_universal.csv") -> dict:
        return {"z": self.z, "length_scale": self.length_scale, "table": table}


def _check_radius(r):
    r = np.asarray(r, float)
    if np.any(~(r > 0)):
        raise DomainError("radius must be positive")
    return r


def tf_potential(atom: TFAtom, r):
    """V^TF(r) = z phi(r/mu) / r for r > 0."""
    r = _check_radius(r)
    out = atom.potential(r)
    return float(out) if out.ndim == 0 else out


def tf_density(atom: TFAtom, r):
    """rho^TF(r) = (2 V^TF(r))^(3/2) / (3 pi^2)."""
    r = _check_radius(r)
    out = atom.density(r)
    return float(out) if out.ndim == 0 else out


def coulomb_energy_radial(density, grid: Grid) -> float:
    """D(rho, rho) for a radial density sampled on ``grid`` (radii).

    Uses Newton's theorem: the potential at r is the enclosed charge over r
    plus the outer shells' contribution, both by cumulative trapezoid.
    """
    rho = np.asarray(density, float)
    if rho.shape != grid.nodes.shape:
        raise ParameterError("density and grid differ in length")
    if np.any(rho < -1e-12):
        raise DomainError("density has negative entries")
    rho = np.maximum(rho, 0.0)
    r = grid.nodes
    if r[0] < 0:
        raise DomainError("radial grid must be nonnegative")
    shell = 4.0 * math.pi * r**2 * rho
    head = 4.0 * math.pi * r[0] ** 3 * rho[0] / 3.0
    enclosed = head + cumulative_trapezoid(shell, r, initial=0.0)
    outer_integrand = 4.0 * math.pi * r * rho
    outer_cum = cumulative_trapezoid(outer_integrand, r, initial=0.0)
    outer = outer_cum[-1] - outer_cum
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(r > 0, enclosed / np.where(r > 0, r, 1.0), 0.0)
    potential = inner + outer
    return 0.5 * float(np.trapezoid(shell * potential, r))


def _radial_integral(values, grid: Grid) -> float:
    f = 4.0 * math.pi * grid.nodes**2 * np.asarray(values, float)
    total = integrate(f, grid)
    # the Coulomb-singular integrands behave like r^p near the origin; add the
    # missing [0, r_0] piece from the local power law of the first two nodes
    r0, r1 = grid.nodes[0], grid.nodes[1]
    if r0 > 0 and f[0] > 0 and f[1] > 0:
        p = math.log(f[1] / f[0]) / math.log(r1 / r0)
        if p > -1.0:
            total += f[0] * r0 / (p + 1.0)
    return total


def tf_energy_functional(rho, grid: Grid, z: float) -> float:
    """TF functional of a radial density for a single nucleus of charge z."""
    rho = np.asarray(rho, float)
    r = grid.nodes
    kinetic = 0.3 * (3.0 * math.pi**2) ** (2.0 / 3.0) * _radial_integral(rho ** (5.0 / 3.0), grid)
    attraction = _radial_integral(z / r * rho, grid)
    return kinetic - attraction + coulomb_energy_radial(rho, grid)


def atom_radial_grid(atom: TFAtom, count: int = 6000) -> Grid:
    """Log-spaced radial grid covering the atom's support."""
    mu = atom.length_scale
    return make_grid(mu * 1e-12, mu * atom.universal.x[-1], count, "log")


def tf_energy(atom: TFAtom, count: int = 6000, grid: Optional[Grid] = None) -> float:
    """E^TF of the neutral atom by radial quadrature on a log grid."""
    if grid is None:
        grid = atom_radial_grid(atom, count)
    rho = atom.density(grid.nodes)
    mass = _radial_integral(rho, grid)
    if abs(mass - atom.z) > 1e-2 * atom.z:
        raise AccuracyError(f"density mass {mass} deviates from z={atom.z} by more than 1%")
    return tf_energy_functional(rho, grid, atom.z)


def tf_charge(atom: TFAtom, count: int = 6000) -> float:
    """Integral of rho^TF over space."""
    grid = atom_radial_grid(atom, count)
    return _radial_integral(atom.density(grid.nodes), grid)


def poisson_residual(atom: TFAtom, r, rel_step: float = 1e-3):
    """Relative residual of (1/r)(r V)'' = 4 pi rho by central differences."""
    r = _check_radius(r)
    d = rel_step * r
    rv = lambda s: s * atom.potential(s)
    lap = (rv(r + d) - 2.0 * rv(r) + rv(r - d)) / (d * d) / r
    rho = atom.density(r)
    return np.abs(lap - 4.0 * math.pi * rho) / (4.0 * math.pi * rho)


def scaling_check(atom: TFAtom, h: float, r: Optional[Sequence[float]] = None) -> float:
    """Max relative deviation of V(z, x) from h^-4 V(h^3 z, x / h)."""
    if h <= 0:
        raise ParameterError("h must be positive")
    r = np.geomspace(0.1, 10.0, 41) if r is None else _check_radius(r)
    scaled = TFAtom(h**3 * atom.z, atom.universal)
    lhs = atom.potential(r)
    rhs = h**-4 * scaled.potential(r / h)
    return float(np.max(np.abs(lhs - rhs) / lhs))


def sandwich_constants(atom: TFAtom, r) -> tuple:
    """Empirical (C_-, C_+) with C_- g <= V^TF <= C_+ g, g = min(z/r, r^-4)."""
    r = _check_radius(r)
    ratio = atom.potential(r) / np.minimum(atom.z / r, r**-4.0)
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True, eq=False)
class MolecularGeometry:
    """Nuclear positions r_k, charges z_k and the scale parameter ell0."""

    centers: np.ndarray
    charges: np.ndarray
    ell0: float = 0.5

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, float))
        charges = np.atleast_1d(np.asarray(self.charges, float))
        if centers.shape[1] != 3 or centers.shape[0] != charges.size:
            raise ParameterError("need one 3-vector per charge")
        if np.any(charges <= 0):
            raise ParameterError("charges must be positive")
        if not 0 < self.ell0 < 1:
            raise ParameterError("ell0 must lie in (0, 1)")
        m = centers.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                if np.linalg.norm(centers[i] - centers[j]) <= 0:
                    raise ParameterError("centers must be distinct")
        centers.setflags(write=False)
        charges.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "charges", charges)

    @property
    def m(self) -> int:
        return self.charges.size

    def distances(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        diff = x[..., None, :] - self.centers
        return np.sqrt(np.sum(diff**2, axis=-1))


def geometry_d(geom: MolecularGeometry, x):
    """Distance to the nearest nucleus."""
    out = geom.distances(x).min(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def geometry_f(geom: MolecularGeometry, x):
    """min(d^-1/2, d^-2)."""
    d = np.asarray(geometry_d(geom, x), float)
    if np.any(d == 0):
        raise DomainError("f is singular at a nucleus")
    out = np.minimum(d**-0.5, d**-2.0)
    return float(out) if out.ndim == 0 else out


def geometry_ell(geom: MolecularGeometry, x):
    """Scale function 0.5 (1 + sum_k (|x - r_k|^2 + ell0^2)^-1/2)^-1."""
    dist = geom.distances(x)
    s = np.sum((dist**2 + geom.ell0**2) ** -0.5, axis=-1)
    out = 0.5 / (1.0 + s)
    return float(out) if np.ndim(out) == 0 else out


def geometry_ell_gradient(geom: MolecularGeometry, x) -> np.ndarray:
    """Analytic gradient of :func:`geometry_ell`."""
    x = np.asarray(x, float)
    diff = x[..., None, :] - geom.centers
    q = np.sum(diff**2, axis=-1) + geom.ell0**2
    s = np.sum(q**-0.5, axis=-1)
    ds = -np.sum(diff * q[..., None] ** -1.5, axis=-2)
    return (-0.5 / (1.0 + s) ** 2)[..., None] * ds


def molecular_potential_bounds(geom: MolecularGeometry, universal: TFUniversal, x):
    """Bracket (max_k V_k, sum_k V_k) for the molecular TF potential.

    V_k is the neutral atomic TF potential of charge z_k centred at r_k.
    """
    dist = geom.distances(x)
    atoms = [TFAtom(z, universal) for z in geom.charges]
    vals = np.stack([atoms[k].potential(dist[..., k]) for k in range(geom.m)], axis=-1)
    return vals.max(axis=-1), vals.sum(axis=-1)


def w_k(geom: MolecularGeometry, universal: TFUniversal, k: int, x):
    """W_k = V_mol - z_k / |x - r_k| with V_mol the superposition bound.

    The Coulomb singularity cancels, so W_k extends continuously to
    x = r_k where it equals z_k phi'(0) / mu_k plus the other centres'
    potentials.
    """
    if not 0 <= k < geom.m:
        raise ParameterError(f"centre index {k} out of range")
    x = np.asarray(x, float)
    dist = geom.distances(x)
    total = np.zeros(dist.shape[:-1])
    for j, z in enumerate(geom.charges):
        atom = TFAtom(z, universal)
        dj = dist[..., j]
        if j != k:
            total = total + atom.potential(dj)
            continue
        mu = atom.length_scale
        with np.errstate(divide="ignore", invalid="ignore"):
            screened = z * (universal(dj / mu) - 1.0) / dj
        total = total + np.where(dj > 1e-10 * mu, screened, z * universal.initial_slope / mu)
    return float(total) if total.ndim == 0 else total
