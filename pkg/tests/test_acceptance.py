"""Acceptance criteria 1-9.

Every test prints one line ``ACCEPTANCE <n> PASS|FAIL <details>`` and then
asserts the same condition, so the printed verdict and the pytest outcome
always agree. Tolerances are the contract values and are not tunable.
"""

import math
import time

import numpy as np
import pytest

from scottsemi.coherent import (
    CoherentParams,
    LinearSymbol,
    QuadraticSymbol,
    coherent_representation,
    completeness_deviation,
    g_operator,
    resolved_grid,
    trace_identity_check,
)
from scottsemi.localization import PartitionSpec, ims_check, make_cutoff_pair, partition_completeness
from scottsemi.numerics import make_grid
from scottsemi.scott import local_sc_study, trial_density_study
from scottsemi.spectral import (
    RadialPotential,
    hydrogen_negative_sum_exact,
    phase_space_neg_integral,
    radial_negative_sum,
)
from scottsemi.tf import TF_CONSTANT, MolecularGeometry, TFAtom, solve_tf_universal, tf_density, tf_energy
from scottsemi.tf import poisson_residual, tf_charge, tf_potential
from scottsemi.verify import random_trace_draws


def _verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_1_hydrogen_closed_form(capsys):
    start = time.perf_counter()
    worst = 0.0
    for z in (1.0, 2.0):
        for h in (0.4, 0.2, 0.1):
            got = radial_negative_sum(RadialPotential.hydrogen(z), h).weighted_sum
            # closed form sum_{1 <= n <= z/2h} (n^2 - z^2/4h^2), written out independently
            exact = math.fsum(n * n - z * z / (4 * h * h) for n in range(1, int(z / (2 * h)) + 1))
            assert exact == pytest.approx(hydrogen_negative_sum_exact(z, h).exact, rel=1e-14)
            worst = max(worst, abs(got - exact) / abs(exact))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 60.0
    _verdict(capsys, 1, ok, f"max rel dev {worst:.2e} (tol 1e-4), {elapsed:.1f} s (limit 60 s)")


def test_criterion_2_hydrogenic_phase_space(capsys):
    start = time.perf_counter()
    worst = 0.0
    for z in (1.0, 2.0):
        for h in (0.4, 0.2, 0.1):
            got = phase_space_neg_integral(RadialPotential.hydrogen(z), h, 3)
            exact = -(z**3) / (12 * h**3)
            worst = max(worst, abs(got - exact) / abs(exact))
    elapsed = (time.perf_counter() - start) / 6
    ok = worst <= 1e-4 and elapsed < 1.0
    _verdict(capsys, 2, ok, f"max rel dev {worst:.2e} (tol 1e-4), {elapsed:.3f} s per integral (limit 1 s)")


@pytest.mark.slow
def test_criterion_3_scott_coefficient(capsys, scott_z1):
    report, elapsed = scott_z1
    target = 0.125
    per_h = [abs(p.h2_deficit - target) / target for p in report.points]
    fitted_ok = report.fitted is not None and abs(report.fitted - target) / target <= 0.10
    ok = fitted_ok and max(per_h) <= 0.25 and elapsed < 900.0
    vals = ", ".join(f"{p.h:g}:{p.h2_deficit:.5f}" for p in report.points)
    _verdict(
        capsys,
        3,
        ok,
        f"fitted {report.fitted} vs 0.125 (tol 10%), h2*Delta [{vals}] max dev {max(per_h):.3f} (tol 25%), {elapsed:.0f} s",
    )


def test_criterion_4_coherent_identities(capsys):
    start = time.perf_counter()
    p = CoherentParams.from_exponent(0.1)
    grid = resolved_grid(p, 5.0, 5.0)
    rng = np.random.default_rng(2024)
    tr_dev = 0.0
    for u, q in rng.uniform(-1, 1, size=(5, 2)):
        m = g_operator(p, u, q, grid).matrix
        tr_dev = max(tr_dev, abs(np.trace(m @ m).real - 1.0))
    comp = completeness_deviation(p, resolved_grid(p, 6.0, 5.0))
    worst = 0.0
    for dr in random_trace_draws(rng, 20):
        f = lambda s, w=dr["width"]: np.exp(-(s * s) / w)
        V = lambda x, k=dr["k"], ph=dr["phase"]: 1.5 + np.cos(k * x + ph)
        _, _, dev = trace_identity_check(f, LinearSymbol(*dr["B"]), V, p, dr["u"], dr["q"])
        worst = max(worst, dev)
    elapsed = time.perf_counter() - start
    ok = tr_dev <= 1e-6 and comp <= 1e-5 and worst <= 1e-5 and elapsed < 300.0
    _verdict(
        capsys,
        4,
        ok,
        f"|Tr G^2 - 1| {tr_dev:.1e} (tol 1e-6), completeness {comp:.1e} (tol 1e-5), "
        f"trace identity {worst:.1e} over 20 draws (tol 1e-5), {elapsed:.1f} s",
    )


def test_criterion_5_representation_trend(capsys):
    ratios = []
    for h in (0.2, 0.1, 0.05):
        p = CoherentParams(h, h**-0.8)
        res = coherent_representation(QuadraticSymbol.harmonic(), p)
        ratios.append(res.error_norm / (h * h * p.b))
    spread = max(ratios) / min(ratios)
    h = 0.005
    errs = []
    for b in (4.0, 8.0, 16.0):
        a = (1.0 - math.sqrt(1.0 - h * h * b * b)) / (h * h * b)
        errs.append(coherent_representation(QuadraticSymbol.cosine(), CoherentParams(h, a)).error_norm)
    decreasing = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    ok = spread <= 2.0 and decreasing
    _verdict(
        capsys,
        5,
        ok,
        f"harmonic error/(h^2 b) {[round(r, 4) for r in ratios]} spread {spread:.3f} (limit 2); "
        f"cos at h=0.005, b=4,8,16: {[f'{e:.2e}' for e in errs]} decreasing={decreasing}",
    )


def test_criterion_6_trial_density_matrix(capsys):
    pts = trial_density_study((0.2, 0.1, 0.05))
    bounds = all(p.spectrum_min >= -1e-6 and p.spectrum_max <= 1 + 1e-6 for p in pts)
    variational = all(p.energy >= p.trace_neg for p in pts)
    gaps = [p.gap for p in pts]
    monotone = all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    ok = bounds and variational and monotone
    spec = [(round(p.spectrum_min, 8), round(p.spectrum_max, 8)) for p in pts]
    _verdict(
        capsys,
        6,
        ok,
        f"spectra {spec} within [-1e-6, 1+1e-6]={bounds}, Tr[H gamma] >= Tr[H]_-={variational}, "
        f"gaps h=0.2,0.1,0.05 {[round(g, 5) for g in gaps]} decreasing={monotone}",
    )


def test_criterion_7_partition_of_unity(capsys):
    start = time.perf_counter()
    spec = PartitionSpec.from_geometry(MolecularGeometry(np.zeros((1, 3)), [1.0]))
    rng = np.random.default_rng(7)
    pts = [np.zeros(3)]
    pts += [rng.normal(size=3) * s for s in (0.05, 0.2, 0.5, 1.0, 3.0) for _ in range(4)]
    pts += [rng.normal(size=3) * 10.0 for _ in range(4)]
    comp = max(abs(partition_completeness(spec, x) - 1.0) for x in pts)
    pair = make_cutoff_pair(1.0)
    ims = ims_check(
        [lambda x: pair.phi_minus(np.abs(x)), lambda x: pair.phi_plus(np.abs(x))],
        lambda x: 0.0 * x,
        0.5,
        make_grid(-8.0, 8.0, 4001),
        [lambda x: pair.dtheta_minus(np.abs(x)) * np.sign(x), lambda x: pair.dtheta_plus(np.abs(x)) * np.sign(x)],
    )
    elapsed = time.perf_counter() - start
    ok = len(pts) == 25 and comp <= 1e-5 and ims <= 1e-6 and elapsed < 120.0
    _verdict(
        capsys,
        7,
        ok,
        f"completeness max dev {comp:.1e} at 25 points (tol 1e-5), IMS {ims:.1e} (tol 1e-6), {elapsed:.1f} s",
    )


def test_criterion_8_tf_solver(capsys):
    start = time.perf_counter()
    uni = solve_tf_universal()
    ratios, charges, poisson, identity = [], [], 0.0, 0.0
    for z in (1.0, 2.0, 5.0):
        atom = TFAtom(z, uni)
        ratios.append(tf_energy(atom) / z ** (7.0 / 3.0))
        charges.append(abs(tf_charge(atom) - z) / z)
        r = np.geomspace(0.01, 20.0, 40) * atom.length_scale
        poisson = max(poisson, float(np.max(poisson_residual(atom, r))))
        v = tf_potential(atom, r)
        identity = max(identity, float(np.max(np.abs(v - TF_CONSTANT * tf_density(atom, r) ** (2 / 3)) / v)))
    spread = (max(ratios) - min(ratios)) / abs(ratios[0])
    elapsed = time.perf_counter() - start
    ok = spread <= 1e-4 and max(charges) <= 1e-3 and poisson <= 1e-3 and identity <= 1e-12 and elapsed < 60.0
    _verdict(
        capsys,
        8,
        ok,
        f"E/z^(7/3) {[f'{x:.10f}' for x in ratios]} spread {spread:.1e} (tol 1e-4), charge dev {max(charges):.1e} "
        f"(tol 1e-3), Poisson {poisson:.1e} (tol 1e-3), TF identity {identity:.1e}, {elapsed:.1f} s",
    )


def test_criterion_9_local_semiclassics(capsys):
    study = local_sc_study(RadialPotential.gaussian_well(2.0), (0.2, 0.1, 0.05))
    e = study.errors
    decreasing = all(e2 < e1 for e1, e2 in zip(e, e[1:]))
    ok = decreasing and study.fitted_slope is not None and study.fitted_slope >= 1.0
    _verdict(
        capsys,
        9,
        ok,
        f"e(h) at h=0.2,0.1,0.05 {[f'{x:.3e}' for x in e]} decreasing={decreasing}, "
        f"log-log slope {study.fitted_slope:.3f} (floor 1.0), pair slopes {[round(s, 3) for s in study.pair_slopes]}",
    )
