"""Scott-corrected semiclassics at desk scale.

For the Thomas-Fermi potential of a neutral atom the deficit

    Delta(h) = Tr[-h^2 Delta - V^TF]_- - (2 pi h)^-3 int (p^2 - V^TF)_- du dp

behaves like z^2 / (8 h^2) as h -> 0. This module computes Delta(h) along
a sweep, extrapolates h^2 Delta(h), compares with the shifted hydrogen
problem and runs the related convergence studies (localized traces in
3-D and a 1-D trial density matrix).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .coherent import CoherentParams, QuadraticSymbol, density_of, momentum_function, trial_density_matrix
from .errors import DomainError, ParameterError
from .localization import make_base_bump
from .numerics import make_grid
from .spectral import (
    RadialGridConfig,
    RadialPotential,
    hydrogen_negative_sum_exact,
    negative_projection_density,
    phase_space_neg_integral,
    radial_negative_sum,
    semiclassical_density,
)
from .tf import TFAtom, coulomb_energy_radial

__all__ = [
    "ScottPoint",
    "ScottReport",
    "HydrogenComparison",
    "ConvergenceStudy",
    "TrialDensityPoint",
    "scott_deficit",
    "scott_fit",
    "richardson_limit",
    "hydrogen_comparison",
    "local_sc_study",
    "trial_density_study",
    "density_d_check",
    "emit_report",
    "MIN_H",
    "DEFAULT_SWEEP",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

MIN_H = 0.04
DEFAULT_SWEEP = (0.2, 0.14, 0.1, 0.07, 0.05)
CSV_COLUMNS = ("h", "quantum_trace", "sc_integral", "deficit", "h2_deficit")


@dataclass(frozen=True)
class ScottPoint:
    h: float
    quantum_trace: float
    sc_integral: float
    deficit: float
    h2_deficit: float
    l_max: int = 0


@dataclass
class ScottReport:
    """Deficits along an h sweep and the extrapolated Scott coefficient."""

    z: float
    points: list
    fitted: Optional[float]
    order: float = 1.0
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        hs = [p.h for p in self.points]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ParameterError("report h values must be strictly decreasing")

    @property
    def target(self) -> float:
        return self.z * self.z / 8.0

    @property
    def h_list(self) -> list:
        return [p.h for p in self.points]

    @property
    def rel_error(self) -> Optional[float]:
        if self.fitted is None:
            return None
        return abs(self.fitted - self.target) / self.target

    def summary(self) -> dict:
        return {
            "z": self.z,
            "target": self.target,
            "fitted": self.fitted,
            "rel_error": self.rel_error,
            "order": self.order,
            "h_list": self.h_list,
            "warnings": list(self.warnings),
            "points": [asdict(p) for p in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScottReport":
        d = json.loads(text)
        points = [ScottPoint(**p) for p in d["points"]]
        return cls(d["z"], points, d["fitted"], d.get("order", 1.0), list(d["warnings"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([repr(float(getattr(p, c))) for c in CSV_COLUMNS])
        return buf.getvalue()


def _check_h(h: float, guard: float = MIN_H):
    if not 0 < h < 1:
        raise ParameterError(f"h={h} must lie in (0, 1)")
    if h < guard:
        raise ParameterError(f"h={h} below the tractability guard {guard}")


def scott_deficit(
    z: float,
    h: float,
    atom: Optional[TFAtom] = None,
    config: RadialGridConfig = RadialGridConfig(),
    *,
    guard: float = MIN_H,
) -> ScottPoint:
    """Quantum trace, phase-space integral and their difference at one h."""
    if z <= 0:
        raise ParameterError("z must be positive")
    _check_h(h, guard)
    atom = TFAtom.build(z) if atom is None else atom
    pot = RadialPotential.thomas_fermi(atom)
    summary = radial_negative_sum(pot, h, config)
    sc = phase_space_neg_integral(pot, h, 3)
    trace = float(summary.weighted_sum)
    deficit = trace - float(sc)
    return ScottPoint(float(h), trace, float(sc), deficit, h * h * deficit, int(summary.l_max))


def richardson_limit(hs: Sequence[float], values: Sequence[float], order: float = 1.0) -> float:
    """Limit of g(h) = s + c h^order from the two smallest h."""
    if order <= 0:
        raise ParameterError("order must be positive")
    pairs = sorted(zip(hs, values))
    (h2, g2), (h1, g1) = pairs[0], pairs[1]
    w1, w2 = h1**order, h2**order
    return (w1 * g2 - w2 * g1) / (w1 - w2)


def _monotone(values, noise: float) -> bool:
    diffs = np.diff(np.asarray(values, float))
    return bool(np.all(diffs >= -noise) or np.all(diffs <= noise))


def scott_fit(
    z: float,
    h_list: Sequence[float] = DEFAULT_SWEEP,
    *,
    deficit: Optional[Callable[[float], float]] = None,
    order: float = 1.0,
    noise_floor: float = 1e-5,
    threads: int = 1,
    config: RadialGridConfig = RadialGridConfig(),
    atom: Optional[TFAtom] = None,
) -> ScottReport:
    """Deficits over an h sweep and the Richardson-extrapolated h^2 Delta.

    ``deficit`` replaces the pipeline by a callable h -> Delta(h) (used for
    synthetic checks). A fit needs at least three h values spanning a
    factor of three and a monotone h^2 Delta sequence (up to
    ``noise_floor``); otherwise ``fitted`` is None and a warning is
    recorded.
    """
    hs = sorted({float(h) for h in h_list}, reverse=True)
    if not hs:
        raise ParameterError("empty h list")
    if len(hs) != len(h_list):
        raise ParameterError("h values must be distinct")
    for h in hs:
        if not 0 < h < 1:
            raise ParameterError(f"h={h} must lie in (0, 1)")
    if deficit is None:
        atom = TFAtom.build(z) if atom is None else atom
        worker = lambda h: scott_deficit(z, h, atom, config)
    else:
        def worker(h):
            d = float(deficit(h))
            return ScottPoint(h, float("nan"), float("nan"), d, h * h * d)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        points = list(pool.map(worker, hs))

    warnings = []
    fitted = None
    if len(hs) < 3 or hs[0] / hs[-1] < 3.0:
        warnings.append("fit refused: need >= 3 h values spanning a factor >= 3")
    elif not _monotone([p.h2_deficit for p in points], noise_floor):
        warnings.append("fit refused: h^2 Delta(h) is not monotone beyond the noise floor")
    else:
        fitted = richardson_limit([p.h for p in points], [p.h2_deficit for p in points], order)
    for w in warnings:
        log.warning(w)
    return ScottReport(float(z), points, fitted, float(order), warnings)


@dataclass(frozen=True)
class HydrogenComparison:
    """TF deficit minus the shifted-hydrogen deficit at one h."""

    h: float
    tf_deficit: float
    hydrogen_deficit: float
    combination: float
    scaled: float
    hydrogen_exact_trace: float
    hydrogen_sc: float


def hydrogen_comparison(
    z: float,
    h: float,
    atom: Optional[TFAtom] = None,
    config: RadialGridConfig = RadialGridConfig(),
    *,
    hydrogen_solver: bool = False,
    point: Optional[ScottPoint] = None,
) -> HydrogenComparison:
    """[TF trace - TF phase space] - [hydrogen trace - hydrogen phase space].

    The hydrogen side uses -h^2 Delta - z/r + 1, whose trace is known in
    closed form (``hydrogen_solver`` switches to the radial solver).
    ``scaled`` is h^2 times the combination; both deficits carry the same
    z^2 / 8h^2 leading term, so it tends to zero.
    """
    point = scott_deficit(z, h, atom, config) if point is None else point
    exact = hydrogen_negative_sum_exact(z, h).exact
    hyd = RadialPotential.hydrogen(z)
    trace = radial_negative_sum(hyd, h, config).weighted_sum if hydrogen_solver else exact
    sc = phase_space_neg_integral(hyd, h, 3)
    hyd_def = trace - sc
    comb = point.deficit - hyd_def
    return HydrogenComparison(float(h), point.deficit, hyd_def, comb, h * h * comb, exact, sc)


def _loglog_slopes(hs, es):
    hs = np.asarray(hs, float)
    es = np.asarray(es, float)
    if np.any(es <= 0):
        return [], None
    lh, le = np.log(hs), np.log(es)
    pair = list(np.diff(le) / np.diff(lh))
    fit = float(np.polyfit(lh, le, 1)[0])
    return [float(s) for s in pair], fit


@dataclass
class ConvergenceStudy:
    """e(h) = h^n |Tr - SC| over an h sweep with log-log slopes."""

    potential_id: str
    phi_id: str
    dimension: int
    h_list: list
    traces: list
    sc_integrals: list
    errors: list
    pair_slopes: list
    fitted_slope: Optional[float]

    def __post_init__(self):
        if len(self.h_list) < 3:
            raise ParameterError("a convergence study needs at least three h values")
        if any(e < 0 for e in self.errors):
            raise ParameterError("errors must be nonnegative")

    @property
    def decreasing(self) -> bool:
        order = np.argsort(self.h_list)[::-1]
        e = np.asarray(self.errors)[order]
        return bool(np.all(np.diff(e) < 0))

    def to_dict(self) -> dict:
        return asdict(self)


def local_sc_study(
    V: Optional[RadialPotential] = None,
    h_list: Sequence[float] = (0.2, 0.1, 0.05),
    *,
    nodes: int = 2000,
    threads: int = 1,
) -> ConvergenceStudy:
    """Localized trace Tr[phi H phi]_- against its phase-space value in 3-D.

    H = -h^2 Delta + V with V radial (default -2 exp(-r^2)) and phi the
    normalized radial bump on the unit ball. The localized operator is
    block diagonal over angular momenta; each block is solved on (0, 1].
    """
    V = RadialPotential.gaussian_well() if V is None else V
    hs = sorted({float(h) for h in h_list}, reverse=True)
    if len(hs) < 3:
        raise ParameterError("a convergence study needs at least three distinct h values")
    bump = make_base_bump(3)
    cfg = RadialGridConfig(r_max=1.0, nodes=nodes, richardson=True, threads=1)

    def run(h):
        tr = radial_negative_sum(V, h, cfg, localization=bump.radial).weighted_sum
        sc = phase_space_neg_integral(V, h, 3, weight=bump.radial, domain=(0.0, 1.0))
        return tr, sc

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        res = list(pool.map(run, hs))
    traces = [float(r[0]) for r in res]
    scs = [float(r[1]) for r in res]
    errors = [float(h**3 * abs(t - s)) for h, t, s in zip(hs, traces, scs)]
    pair, fit = _loglog_slopes(hs, errors)
    return ConvergenceStudy(V.potential_id, "bump3", 3, hs, traces, scs, errors, pair, fit)


@dataclass(frozen=True)
class TrialDensityPoint:
    """1-D trial density matrix for H = -h^2 d^2/dx^2 + V at one h."""

    h: float
    energy: float
    trace_neg: float
    gap: float
    spectrum_min: float
    spectrum_max: float
    particle_number: float
    sc_particle_number: float
    density_l2_deviation: float


def trial_density_study(
    h_list: Sequence[float] = (0.2, 0.1, 0.05),
    sigma: Optional[QuadraticSymbol] = None,
    *,
    exponent: float = 0.8,
    threads: int = 1,
) -> list:
    """Variational gap and density closeness of the trial density matrix.

    For each h the trial gamma (a = h^-exponent) is compared with the
    exact negative part: gap = Tr[H gamma] - Tr[H]_- (nonnegative), and
    the density with (2 pi h)^-1 omega_1 |V_-|^(1/2) in relative L^2 norm.
    """
    sigma = QuadraticSymbol.well() if sigma is None else sigma

    def run(h):
        params = CoherentParams.from_exponent(h, exponent)
        gamma = trial_density_matrix(sigma, params)
        grid = gamma.grid
        x = grid.nodes
        H = momentum_function(grid, h, sigma.F).real + np.diag(np.asarray(sigma.V(x), float) * np.ones_like(x))
        H = 0.5 * (H + H.T)
        ev = np.linalg.eigvalsh(H)
        neg = math.fsum(ev[ev < 0])
        energy = gamma.expectation(H)
        spec = gamma.spectrum()
        rho = density_of(gamma)
        rho_sc = semiclassical_density(sigma.V, h, 1, x)
        w = grid.weights
        dev = math.sqrt(np.sum(w * (rho - rho_sc) ** 2) / np.sum(w * rho_sc**2))
        return TrialDensityPoint(
            float(h), energy, neg, energy - neg, float(spec[0]), float(spec[-1]),
            gamma.trace(), float(np.sum(w * rho_sc)), dev,
        )

    hs = sorted({float(h) for h in h_list}, reverse=True)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        return list(pool.map(run, hs))


def _coulomb_signed(f_pos, g_pos, grid) -> float:
    """D(f - g, f - g) for nonnegative f, g by polarization."""
    return 2.0 * coulomb_energy_radial(f_pos, grid) + 2.0 * coulomb_energy_radial(g_pos, grid) - coulomb_energy_radial(
        f_pos + g_pos, grid
    )


def density_d_check(
    z: float,
    h: float,
    atom: Optional[TFAtom] = None,
    config: RadialGridConfig = RadialGridConfig(),
) -> dict:
    """Coulomb norm of the quantum minus semiclassical density in 3-D.

    The quantum density is that of the negative spectral projection of
    -h^2 Delta - V^TF; the semiclassical one is (2 pi h)^-3 omega_3
    (V^TF)^(3/2). Returns D(diff), D(rho_sc) and their ratio.
    """
    _check_h(h)
    atom = TFAtom.build(z) if atom is None else atom
    pot = RadialPotential.thomas_fermi(atom)
    r, rho_q = negative_projection_density(pot, h, config)
    rho_sc = semiclassical_density(-atom.potential(r), h, 3)
    dr = r[1] - r[0]
    grid = make_grid(float(r[0]), float(r[-1]), r.size)
    if abs(grid.spacing - dr) > 1e-9 * dr:
        raise DomainError("radial grid mismatch")
    d_diff = _coulomb_signed(rho_q, rho_sc, grid)
    d_sc = coulomb_energy_radial(rho_sc, grid)
    return {"h": float(h), "D_diff": d_diff, "D_sc": d_sc, "ratio": d_diff / d_sc}


def emit_report(report: ScottReport, out_dir, stem: str = "scott") -> tuple:
    """Write <stem>.csv (one row per h) and <stem>.json; returns both paths."""
    if not report.points:
        raise ParameterError("cannot emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    return csv_path, json_path
