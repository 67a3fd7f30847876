"""Property suites shared by the test-suite and the ``verify`` command.

Each check yields a record {check, params, lhs, rhs, deviation,
tolerance, passed}. Random draws come from a seeded generator so the
records are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .coherent import (
    CoherentParams,
    LinearSymbol,
    QuadraticSymbol,
    coherent_representation,
    completeness_deviation,
    g_operator,
    linear_symbol_kernel,
    moment_identities,
    resolved_grid,
    trace_identity_check,
    trial_density_matrix,
)
from .errors import ParameterError
from .localization import (
    PartitionSpec,
    invert_map,
    jacobian_J,
    make_base_bump,
    make_cutoff_pair,
    ims_check,
    partition_completeness,
)
from .numerics import make_grid, symmetric_eigen
from .spectral import (
    RadialGridConfig,
    RadialPotential,
    build_hamiltonian_1d,
    hydrogen_negative_sum_exact,
    localized_trace_neg,
    phase_space_neg_integral,
    radial_negative_sum,
    rescaled_trace_check,
)
from .tf import MolecularGeometry

__all__ = ["CheckRecord", "SUITES", "run_suite", "random_trace_draws"]


@dataclass(frozen=True)
class CheckRecord:
    check: str
    params: dict
    lhs: float
    rhs: float
    deviation: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


class _Recorder:
    def __init__(self, tolerance: Optional[float]):
        self.override = tolerance
        self.records = []

    def add(self, check, params, lhs, rhs, tolerance, relative=False):
        lhs, rhs = float(lhs), float(rhs)
        dev = abs(lhs - rhs)
        if relative:
            dev /= max(abs(rhs), 1e-300)
        tol = float(self.override if self.override is not None else tolerance)
        self.records.append(CheckRecord(check, dict(params), lhs, rhs, dev, tol, bool(dev <= tol)))


def random_trace_draws(rng: np.random.Generator, count: int = 20):
    """Randomized (f, B, V, u, q) inputs for the trace identity."""
    draws = []
    for _ in range(count):
        B = (float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-1.0, 1.0)), float(rng.uniform(0.5, 1.5)))
        width = float(rng.uniform(0.5, 2.0))
        k = float(rng.uniform(0.5, 2.0))
        phase = float(rng.uniform(0, math.pi))
        u = float(rng.uniform(-0.5, 0.5))
        q = float(rng.uniform(-0.5, 0.5))
        draws.append({"B": B, "width": width, "k": k, "phase": phase, "u": u, "q": q})
    return draws


def _coherent_suite(rec: _Recorder, rng: np.random.Generator, exponent: float, draws: int):
    h = 0.1
    p = CoherentParams.from_exponent(h, exponent)
    prm = {"h": h, "a": p.a}
    grid = resolved_grid(p, 5.0, 5.0)
    G = g_operator(p, 0.2, -0.3, grid)
    rec.add("trace_G_squared", prm, np.trace(G.matrix @ G.matrix).real, 1.0, 1e-6)
    rec.add("G_nonnegative", prm, min(0.0, float(symmetric_eigen(G)[0])), 0.0, 1e-8)
    big = resolved_grid(p, 6.0, 5.0)
    rec.add("completeness", prm, completeness_deviation(p, big), 0.0, 1e-5)
    mom = moment_identities(p, 0.2, grid)
    rec.add("moment_zeroth", prm, mom["zeroth"], 0.0, 1e-5)
    rec.add("moment_first", prm, mom["first"], 0.0, 1e-5)
    d = 0.15
    exact = np.exp(-1j * 0.3 * d / h) * np.exp(-d * d / (4 * h * h)) / (2 * math.sqrt(math.pi) * h)
    k = linear_symbol_kernel(lambda s: np.exp(-s * s), LinearSymbol(0.3, 0.0, 1.0), p, 0.1, -0.05)
    rec.add("linear_kernel_gaussian", prm, abs(k - exact), 0.0, 1e-6)
    for i, dr in enumerate(random_trace_draws(rng, draws)):
        f = lambda s, w=dr["width"]: np.exp(-(s * s) / w)
        V = lambda x, kk=dr["k"], ph=dr["phase"]: 1.5 + np.cos(kk * x + ph)
        lhs, rhs, _ = trace_identity_check(f, LinearSymbol(*dr["B"]), V, p, dr["u"], dr["q"])
        rec.add("trace_identity", {**prm, "draw": i, **{k_: v for k_, v in dr.items() if k_ != "B"}, "B": list(dr["B"])}, lhs, rhs, 1e-5, relative=True)
    rep = coherent_representation(QuadraticSymbol.constant(2.5), p)
    rec.add("representation_constant", prm, rep.error_norm, 0.0, 1e-8)
    p2 = CoherentParams.from_exponent(0.2, exponent)
    gam = trial_density_matrix(QuadraticSymbol.well(), p2)
    spec = gam.spectrum()
    rec.add("trial_gamma_min", {"h": 0.2}, min(0.0, spec[0]), 0.0, 1e-6)
    rec.add("trial_gamma_max", {"h": 0.2}, max(1.0, spec[-1]), 1.0, 1e-6)


def _localization_suite(rec: _Recorder, rng: np.random.Generator):
    geom = MolecularGeometry(np.zeros((1, 3)), np.array([1.0]))
    spec = PartitionSpec.from_geometry(geom)
    pts = [np.zeros(3)]
    pts += [rng.normal(size=3) * s for s in (0.05, 0.2, 0.5, 1.0, 3.0) for _ in range(4)]
    pts += [rng.normal(size=3) * 10.0 for _ in range(4)]
    for i, x in enumerate(pts):
        rec.add("partition_completeness", {"point": i, "r": float(np.linalg.norm(x))}, partition_completeness(spec, x), 1.0, 1e-5)
    spec1 = PartitionSpec(make_base_bump(1), lambda u: 0.5 + 0.3 * np.tanh(u[..., 0]))
    for x in (-2.0, 0.0, 0.4, 3.0):
        rec.add("partition_completeness_1d", {"x": x}, partition_completeness(spec1, x), 1.0, 1e-8)
    worst_inv = 0.0
    worst_j = math.inf
    for _ in range(100):
        x = rng.normal(size=3)
        w = rng.normal(size=3)
        w *= rng.uniform(0, 1) / np.linalg.norm(w)
        u = invert_map(spec, x, w)
        worst_inv = max(worst_inv, float(np.max(np.abs((x - u) / spec.ell(u) - w))))
        worst_j = min(worst_j, float(jacobian_J(spec, x, u)))
    rec.add("map_inversion", {"samples": 100}, worst_inv, 0.0, 1e-8)
    rec.add("jacobian_positive", {"samples": 100}, min(worst_j, 0.0), 0.0, 0.0)
    pair = make_cutoff_pair(1.0)
    t = np.linspace(0, 3, 3001)
    rec.add("cutoff_partition", {"R": 1.0}, float(np.max(np.abs(pair.theta_minus(t) ** 2 + pair.theta_plus(t) ** 2 - 1))), 0.0, 1e-10)
    grid = make_grid(-8.0, 8.0, 4001)
    dev = ims_check(
        [lambda x: pair.phi_minus(np.abs(x)), lambda x: pair.phi_plus(np.abs(x))],
        lambda x: 0.0 * x,
        0.5,
        grid,
        [lambda x: pair.dtheta_minus(np.abs(x)) * np.sign(x), lambda x: pair.dtheta_plus(np.abs(x)) * np.sign(x)],
        seed=int(rng.integers(2**31)),
    )
    rec.add("ims_formula", {"nodes": 4001, "R": 1.0, "h": 0.5}, dev, 0.0, 1e-6)


def _spectral_suite(rec: _Recorder):
    for z, h in ((1.0, 0.4), (1.0, 0.2), (2.0, 0.4)):
        got = radial_negative_sum(RadialPotential.hydrogen(z), h).weighted_sum
        rec.add("hydrogen_sum", {"z": z, "h": h}, got, hydrogen_negative_sum_exact(z, h).exact, 1e-4, relative=True)
    for z, h in ((1.0, 0.1), (2.0, 0.2)):
        got = phase_space_neg_integral(RadialPotential.hydrogen(z), h, 3)
        rec.add("hydrogen_phase_space", {"z": z, "h": h}, got, -(z**3) / (12 * h**3), 1e-4, relative=True)
    grid = make_grid(-6.0, 6.0, 2401)
    vals = symmetric_eigen(build_hamiltonian_1d(lambda x: x * x, 0.1, grid), 3)
    for k, v in enumerate(vals):
        rec.add("oscillator_level", {"k": k, "h": 0.1}, v, 0.1 * (2 * k + 1), 1e-4)
    bump = make_base_bump(1)
    phi = lambda x: bump(np.asarray(x) / 2.0) * math.sqrt(2.0)
    V = lambda x: np.asarray(x) ** 2 - 1.0
    g = make_grid(-2.5, 2.5, 3001)
    tr = localized_trace_neg(phi, V, 0.1, g)
    sc = phase_space_neg_integral(V, 0.1, 1, weight=phi, domain=(-2.0, 2.0))
    rec.add("localized_trace_1d", {"h": 0.1}, tr, sc, 0.05, relative=True)
    _, _, dev = rescaled_trace_check(phi, V, 0.1, g, 1.7, 0.6)
    rec.add("rescaled_trace", {"f": 1.7, "ell": 0.6}, dev, 0.0, 1e-6)


SUITES = ("coherent", "localization", "spectral")


def run_suite(
    suite: str = "all",
    seed: int = 0,
    tolerance: Optional[float] = None,
    *,
    exponent: float = 0.8,
    trace_draws: int = 20,
) -> list:
    """Run one named suite (or ``all``) and return its check records."""
    names = SUITES if suite == "all" else (suite,)
    if any(n not in SUITES for n in names):
        raise ParameterError(f"unknown suite {suite!r}")
    if tolerance is not None and not tolerance > 0:
        raise ParameterError("tolerance must be positive")
    rec = _Recorder(tolerance)
    rng = np.random.default_rng(seed)
    runners: dict[str, Callable] = {
        "coherent": lambda: _coherent_suite(rec, rng, exponent, trace_draws),
        "localization": lambda: _localization_suite(rec, rng),
        "spectral": lambda: _spectral_suite(rec),
    }
    for n in names:
        runners[n]()
    return rec.records
