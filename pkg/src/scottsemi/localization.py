"""Continuous partitions of unity with variable scale and radial cutoffs.

A base bump phi on the unit ball (with integral of phi^2 equal to one) and
a scale function l with |grad l| < 1 generate the family

    phi_u(x) = phi((x - u) / l(u)) sqrt(J(x, u)) l(u)^(n/2),

where J is the Jacobian of u -> (x - u) / l(u). These satisfy
int phi_u(x)^2 l(u)^-n du = 1 for every x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ContractError, DomainError, ParameterError
from .numerics import Grid
from .spectral import build_hamiltonian_1d
from .tf import MolecularGeometry, geometry_ell, geometry_ell_gradient

__all__ = [
    "BaseBump",
    "PartitionSpec",
    "CutoffPair",
    "CompletenessQuadrature",
    "make_base_bump",
    "jacobian_J",
    "phi_u",
    "invert_map",
    "partition_completeness",
    "phi_u_derivative",
    "derivative_profile",
    "smooth_step",
    "make_cutoff_pair",
    "ims_check",
]


def _raw_bump(r2):
    r2 = np.asarray(r2, float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _sphere_measure(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class BaseBump:
    """exp(-1/(1-|x|^2)) on the unit ball in R^n, scaled to unit L2 norm."""

    n: int
    scale: float

    def radial(self, r):
        r = np.asarray(r, float)
        return self.scale * _raw_bump(r * r)

    def __call__(self, x):
        """Evaluate at points x of shape (..., n); n = 1 also takes plain arrays."""
        x = np.asarray(x, float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return self.scale * _raw_bump(x * x)
        return self.scale * _raw_bump(np.sum(x * x, axis=-1))


def make_base_bump(n: int) -> BaseBump:
    if int(n) != n or n < 1:
        raise ParameterError("dimension must be a positive integer")
    n = int(n)
    integral, _ = quad(
        lambda r: math.exp(-2.0 / (1.0 - r * r)) * r ** (n - 1), 0.0, 1.0, epsabs=0.0, epsrel=1e-13
    )
    return BaseBump(n, 1.0 / math.sqrt(_sphere_measure(n) * integral))


def _fd_gradient(f: Callable, u: np.ndarray, step: float = 1e-6) -> np.ndarray:
    u = np.asarray(u, float)
    g = np.empty(u.shape)
    for i in range(u.shape[-1]):
        e = np.zeros(u.shape[-1])
        e[i] = step
        g[..., i] = (np.asarray(f(u + e)) - np.asarray(f(u - e))) / (2.0 * step)
    return g


@dataclass(frozen=True, eq=False)
class PartitionSpec:
    """Base bump plus scale function l(u) (u has shape (..., n))."""

    bump: BaseBump
    ell: Callable
    ell_gradient: Optional[Callable] = None
    check_box: float = 3.0
    check_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        n = self.bump.n
        rng = np.random.default_rng(self.seed)
        u = rng.uniform(-self.check_box, self.check_box, size=(self.check_samples, n))
        ell = np.asarray(self.ell(u), float)
        if np.any(~np.isfinite(ell)) or np.any(ell <= 0):
            raise ContractError("scale function must be positive and finite")
        grad = _fd_gradient(self.ell, u)
        worst = float(np.max(np.linalg.norm(grad, axis=-1)))
        if worst >= 1.0:
            raise ContractError(f"scale function gradient reaches {worst:.3f} >= 1")

    @property
    def n(self) -> int:
        return self.bump.n

    def grad(self, u):
        u = np.asarray(u, float)
        if self.ell_gradient is not None:
            return np.asarray(self.ell_gradient(u), float)
        return _fd_gradient(self.ell, u)

    @classmethod
    def constant(cls, ell: float, n: int = 1) -> "PartitionSpec":
        if ell <= 0:
            raise ParameterError("scale must be positive")
        return cls(
            make_base_bump(n),
            lambda u: np.full(np.shape(u)[:-1], float(ell)),
            lambda u: np.zeros(np.shape(u)),
        )

    @classmethod
    def from_geometry(cls, geom: MolecularGeometry) -> "PartitionSpec":
        """Scale function 0.5 (1 + sum_k (|x - r_k|^2 + l0^2)^-1/2)^-1 in 3-D."""
        return cls(
            make_base_bump(geom.centers.shape[1]),
            lambda u: geometry_ell(geom, u),
            lambda u: geometry_ell_gradient(geom, u),
        )


def _as_points(spec: PartitionSpec, x):
    x = np.asarray(x, float)
    if spec.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != spec.n:
        raise ParameterError(f"points must have trailing dimension {spec.n}")
    return x


def jacobian_J(spec: PartitionSpec, x, u):
    """l(u)^-n |det(I + (x - u) grad l(u)^T / l(u))| (a rank-one update)."""
    x = _as_points(spec, x)
    u = _as_points(spec, u)
    ell = np.asarray(spec.ell(u), float)
    g = spec.grad(u)
    det = 1.0 + np.sum((x - u) * g, axis=-1) / ell
    out = ell ** (-spec.n) * np.abs(det)
    return float(out) if np.ndim(out) == 0 else out


def phi_u(spec: PartitionSpec, u, x):
    """Localization function centred at u, supported in |x - u| < l(u)."""
    x = _as_points(spec, x)
    u = _as_points(spec, u)
    ell = np.asarray(spec.ell(u), float)
    w = (x - u) / ell[..., None]
    val = spec.bump(w) * np.sqrt(jacobian_J(spec, x, u)) * ell ** (spec.n / 2.0)
    return float(val) if np.ndim(val) == 0 else val


def invert_map(spec: PartitionSpec, x, w, tol: float = 1e-13, max_iter: int = 500):
    """Solve (x - u) / l(u) = w for u by the contraction u = x - l(u) w."""
    x = _as_points(spec, x)
    w = _as_points(spec, w)
    if np.any(np.linalg.norm(w, axis=-1) > 1.0):
        raise DomainError("target must lie in the closed unit ball")
    u = x.copy() * np.ones_like(w)
    for _ in range(max_iter):
        nxt = x - np.asarray(spec.ell(u), float)[..., None] * w
        if np.max(np.abs(nxt - u)) < tol:
            return nxt
        u = nxt
    raise DomainError("map inversion did not converge")


@dataclass(frozen=True)
class CompletenessQuadrature:
    """Node counts for the completeness integral.

    ``u_range`` (n = 1 only) restricts the u-integral; it must cover the
    support of u -> phi_u(x), otherwise a domain error is raised.
    """

    radial_nodes: int = 64
    polar_nodes: int = 48
    azimuth_nodes: int = 32
    u_range: Optional[Sequence[float]] = None


def _support_radius(spec: PartitionSpec, x, directions):
    """Largest s with s < l(x + s omega) along each unit direction."""
    s = np.asarray(spec.ell(x + 0.0 * directions), float)
    for _ in range(200):
        nxt = np.asarray(spec.ell(x + s[..., None] * directions), float)
        if np.max(np.abs(nxt - s)) < 1e-15 * max(1.0, float(np.max(s))):
            return nxt
        s = nxt
    return s


def partition_completeness(spec: PartitionSpec, x, quadrature: CompletenessQuadrature = CompletenessQuadrature()) -> float:
    """Evaluate int phi_u(x)^2 l(u)^-n du; equals 1 for a valid partition.

    n = 1 uses adaptive quadrature over the exact support interval. n >= 2
    uses spherical coordinates centred at x: Gauss-Legendre in the radius
    up to the support boundary along each direction, Gauss-Legendre in
    cos(theta), and the periodic trapezoid rule in the azimuth (n = 3).
    """
    x = _as_points(spec, x)
    if x.ndim != 1:
        raise ParameterError("completeness takes a single point")
    n = spec.n
    integrand = lambda u: phi_u(spec, u, x) ** 2 / np.asarray(spec.ell(u), float) ** n

    if n == 1:
        x0 = float(x[0])
        ell = lambda t: float(spec.ell(np.array([t])))
        hi = x0 + ell(x0)
        lo = x0 - ell(x0)
        upper = brentq(lambda t: t - x0 - ell(t), x0, hi + 2.0 * ell(hi) + 1.0, xtol=1e-15)
        lower = brentq(lambda t: x0 - t - ell(t), lo - 2.0 * ell(lo) - 1.0, x0, xtol=1e-15)
        if quadrature.u_range is not None:
            a, b = quadrature.u_range
            if a > lower or b < upper:
                raise DomainError("u-quadrature does not cover the support of phi_u(x)")
        f = lambda t: float(integrand(np.array([t])))
        val, err = quad(f, lower, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(val)

    if n != 3:
        raise ParameterError("completeness quadrature implemented for n = 1 and n = 3")
    tc, wc = np.polynomial.legendre.leggauss(quadrature.polar_nodes)
    m = quadrature.azimuth_nodes
    ph = 2.0 * math.pi * np.arange(m) / m
    ct, pp = np.meshgrid(tc, ph, indexing="ij")
    st = np.sqrt(1.0 - ct * ct)
    omega = np.stack([st * np.cos(pp), st * np.sin(pp), ct], axis=-1)
    w_ang = (wc[:, None] * np.full(m, 2.0 * math.pi / m)[None, :])
    smax = _support_radius(spec, x, omega)
    ts, ws = np.polynomial.legendre.leggauss(quadrature.radial_nodes)
    s = 0.5 * smax[..., None] * (ts + 1.0)
    ws_full = 0.5 * smax[..., None] * ws
    u = x + s[..., None] * omega[..., None, :]
    vals = integrand(u) * s * s
    return float(np.sum(w_ang[..., None] * ws_full * vals))


def phi_u_derivative(spec: PartitionSpec, u, x, alpha: Sequence[int]):
    """Mixed partial derivative d^alpha phi_u(x) in x by nested central differences.

    The step is l(u) * 1e-3.
    """
    x = _as_points(spec, x)
    u = _as_points(spec, u)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != spec.n or any(a < 0 for a in alpha):
        raise ParameterError("alpha must be a multi-index of length n")
    step = float(np.asarray(spec.ell(u), float)) * 1e-3

    def nested(point, remaining):
        if not any(remaining):
            return phi_u(spec, u, point)
        i = next(k for k, a in enumerate(remaining) if a > 0)
        rest = list(remaining)
        rest[i] -= 1
        e = np.zeros(spec.n)
        e[i] = step
        return (nested(point + e, rest) - nested(point - e, rest)) / (2.0 * step)

    return nested(x, alpha)


def derivative_profile(spec: PartitionSpec, us, order: int, samples: int = 201, seed: int = 0) -> np.ndarray:
    """l(u)^|alpha| max_x |d^alpha phi_u(x)| for each u, maximized over |alpha| = order.

    n = 1 samples x on a uniform grid across the support; n >= 2 draws
    seeded random points in the support ball.
    """
    rng = np.random.default_rng(seed)
    n = spec.n
    alphas = [a for a in np.ndindex(*([order + 1] * n)) if sum(a) == order]
    out = []
    for u in np.atleast_1d(np.asarray(us, float)).reshape(-1, n):
        ell = float(np.asarray(spec.ell(u), float))
        if n == 1:
            xs = u[0] + ell * np.linspace(-1.0, 1.0, samples)[:, None]
        else:
            d = rng.normal(size=(samples, n))
            d /= np.linalg.norm(d, axis=1)[:, None]
            xs = u + ell * rng.uniform(0, 1, samples)[:, None] ** (1.0 / n) * d
        best = 0.0
        for a in alphas:
            vals = np.abs(np.asarray(phi_u_derivative(spec, u, xs, a), float))
            best = max(best, float(vals.max()))
        out.append(ell**order * best)
    return np.asarray(out)


# ------------------------------------------------------------- cutoffs


def _psi(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    a = _psi(s)
    b = _psi(1.0 - np.asarray(s, float))
    return a / (a + b)


def _smooth_step_derivative(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    m = (s > 0) & (s < 1)
    a = np.exp(-1.0 / s[m])
    b = np.exp(-1.0 / (1.0 - s[m]))
    da = a / s[m] ** 2
    db = b / (1.0 - s[m]) ** 2
    out[m] = (da * b + a * db) / (a + b) ** 2
    return out


@dataclass(frozen=True)
class CutoffPair:
    """theta_-(t) = cos(pi S(t - 1) / 2), theta_+(t) = sin(pi S(t - 1) / 2).

    S is :func:`smooth_step`, so theta_- = 1 for t <= 1, 0 for t >= 2, and
    theta_-^2 + theta_+^2 = 1 identically. ``radius`` R sets the physical
    cutoffs Phi_+-(x) = theta_+-(d(x) / R).
    """

    radius: float

    def theta_minus(self, t):
        # sin of the complementary angle so both ends are exactly 0 and 1
        return np.sin(0.5 * math.pi * (1.0 - smooth_step(np.asarray(t, float) - 1.0)))

    def theta_plus(self, t):
        return np.sin(0.5 * math.pi * smooth_step(np.asarray(t, float) - 1.0))

    def dtheta_minus(self, t):
        s = np.asarray(t, float) - 1.0
        return -0.5 * math.pi * np.cos(0.5 * math.pi * (1.0 - smooth_step(s))) * _smooth_step_derivative(s)

    def dtheta_plus(self, t):
        s = np.asarray(t, float) - 1.0
        return 0.5 * math.pi * np.cos(0.5 * math.pi * smooth_step(s)) * _smooth_step_derivative(s)

    def phi_minus(self, distance):
        return self.theta_minus(np.asarray(distance, float) / self.radius)

    def phi_plus(self, distance):
        return self.theta_plus(np.asarray(distance, float) / self.radius)


def make_cutoff_pair(R: float) -> CutoffPair:
    if not R > 0:
        raise ParameterError("cutoff radius must be positive")
    return CutoffPair(float(R))


def _random_smooth_state(x, rng, lo, hi):
    span = hi - lo
    psi = np.zeros_like(x)
    for _ in range(3):
        c = rng.uniform(lo + 0.3 * span, hi - 0.3 * span)
        w = rng.uniform(0.05, 0.15) * span
        psi += rng.normal() * np.exp(-((x - c) / w) ** 2)
    return psi


def ims_check(
    thetas: Sequence[Callable],
    V: Callable,
    h: float,
    grid: Grid,
    derivatives: Optional[Sequence[Callable]] = None,
    *,
    samples: int = 10,
    seed: int = 0,
    stencil: int = 5,
) -> float:
    """Max relative deviation in the localization formula for quadratic forms.

    Compares <psi, H psi> with sum_k <theta_k psi, H theta_k psi> -
    h^2 <psi, theta_k'^2 psi> for seeded random Gaussian-sum states psi,
    H = -h^2 d^2/dx^2 + V with Dirichlet ends on ``grid`` (five-point
    stencil by default, so the deviation falls off with dx^4). Derivatives
    of the theta_k default to central differences.
    """
    if not thetas:
        raise ParameterError("need at least one cutoff function")
    H = build_hamiltonian_1d(V, h, grid, stencil=stencil)
    inner = H.grid
    x = inner.nodes
    w = inner.weights
    th = [np.asarray(t(x), float) * np.ones_like(x) for t in thetas]
    defect = float(np.max(np.abs(sum(t * t for t in th) - 1.0)))
    if defect > 1e-8:
        raise ContractError(f"cutoff squares sum to 1 only within {defect:.2e}")
    if derivatives is None:
        step = 1e-5
        dth = [(np.asarray(t(x + step), float) - np.asarray(t(x - step), float)) / (2 * step) for t in thetas]
    else:
        dth = [np.asarray(d(x), float) * np.ones_like(x) for d in derivatives]
    rng = np.random.default_rng(seed)
    M = H.matrix
    worst = 0.0
    for _ in range(samples):
        psi = _random_smooth_state(x, rng, float(grid.nodes[0]), float(grid.nodes[-1]))
        lhs = float(np.sum(w * psi * (M @ psi)))
        rhs = 0.0
        for t, dt in zip(th, dth):
            f = t * psi
            rhs += float(np.sum(w * f * (M @ f))) - h * h * float(np.sum(w * dt * dt * psi * psi))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst
