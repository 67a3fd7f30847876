import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scottsemi.errors import DomainError, LMaxError, ParameterError
from scottsemi.localization import make_base_bump
from scottsemi.numerics import make_grid, symmetric_eigen
from scottsemi.spectral import (
    RadialGridConfig,
    RadialPotential,
    build_hamiltonian_1d,
    channel_eigenvalues,
    hydrogen_negative_sum_exact,
    localized_trace_neg,
    momentum_neg_integral,
    negative_projection_density,
    phase_space_neg_integral,
    radial_negative_sum,
    rescaled_trace_check,
    semiclassical_density,
    unit_ball_volume,
)
from scottsemi.tf import tf_density


def _bump_weight(half_width):
    bump = make_base_bump(1)
    return lambda x: bump(np.asarray(x) / half_width) / math.sqrt(half_width)


def test_particle_in_box():
    vals = symmetric_eigen(build_hamiltonian_1d(lambda x: 0 * x, 1.0, make_grid(0.0, math.pi, 2000)), 1)
    assert abs(vals[0] - 1.0) < 1e-4


def test_harmonic_levels():
    grid = make_grid(-6.0, 6.0, 2401)
    vals = symmetric_eigen(build_hamiltonian_1d(lambda x: x * x, 0.1, grid), 3)
    assert np.allclose(vals, [0.1, 0.3, 0.5], atol=1e-4)


def test_five_point_stencil_more_accurate():
    grid = make_grid(-6.0, 6.0, 601)
    e3 = symmetric_eigen(build_hamiltonian_1d(lambda x: x * x, 0.1, grid), 1)[0]
    e5 = symmetric_eigen(build_hamiltonian_1d(lambda x: x * x, 0.1, grid, stencil=5), 1)[0]
    assert abs(e5 - 0.1) < abs(e3 - 0.1)
    with pytest.raises(ParameterError):
        build_hamiltonian_1d(lambda x: x, 0.1, grid, stencil=7)


def test_localized_trace_trivial_cases():
    grid = make_grid(-3.0, 3.0, 601)
    V = lambda x: np.asarray(x) ** 2 - 1.0
    assert localized_trace_neg(lambda x: 0.0 * np.asarray(x), V, 0.1, grid) == 0.0
    assert localized_trace_neg(_bump_weight(2.0), lambda x: np.asarray(x) ** 2, 0.1, grid) == 0.0
    with pytest.raises(DomainError):
        localized_trace_neg(lambda x: np.ones_like(np.asarray(x)), V, 0.1, grid)


def test_localized_trace_matches_phase_space():
    phi = _bump_weight(2.0)
    V = lambda x: np.asarray(x) ** 2 - 1.0
    errs = []
    for h in (0.1, 0.05):
        tr = localized_trace_neg(phi, V, h, make_grid(-2.5, 2.5, 3001))
        sc = phase_space_neg_integral(V, h, 1, weight=phi, domain=(-2.0, 2.0))
        errs.append(abs(tr - sc) / abs(sc))
    assert errs[0] < 0.05
    assert errs[1] < errs[0]


def test_rescaled_trace():
    phi = _bump_weight(2.0)
    _, _, dev = rescaled_trace_check(phi, lambda x: np.asarray(x) ** 2 - 1.0, 0.1, make_grid(-2.5, 2.5, 3001), 1.7, 0.6)
    assert dev < 1e-6


def test_hydrogen_closed_form_values():
    assert hydrogen_negative_sum_exact(1.0, 0.4).exact == pytest.approx(-0.5625, abs=1e-15)
    assert hydrogen_negative_sum_exact(1.0, 1.0).exact == 0.0
    hs = hydrogen_negative_sum_exact(1.0, 0.1)
    assert hs.exact == pytest.approx(-70.0, abs=1e-12)
    assert hs.asymptotic == pytest.approx(-1000.0 / 12.0 + 12.5, abs=1e-12)
    assert abs(hs.exact - hs.asymptotic) < 1.0 / 0.1


def test_hydrogen_ground_state():
    for h in (0.2, 0.1):
        e = channel_eigenvalues(RadialPotential.hydrogen(1.0), h, 0)[0]
        exact = 1.0 - 1.0 / (4 * h * h)
        assert abs(e - exact) / abs(exact) < 1e-6


def test_hydrogen_sum_h01():
    got = radial_negative_sum(RadialPotential.hydrogen(1.0), 0.1).weighted_sum
    assert abs(got + 70.0) / 70.0 < 1e-4


def test_radial_errors():
    with pytest.raises(DomainError):
        radial_negative_sum(RadialPotential.hydrogen(1.0), 0.4, RadialGridConfig(r_max=1.0))
    with pytest.raises(LMaxError):
        radial_negative_sum(RadialPotential.hydrogen(1.0), 0.1, RadialGridConfig(l_max_cap=2))


def test_repulsive_potential_has_no_negative_sum():
    rep = RadialPotential(lambda r: np.exp(-r), attractive=False, potential_id="repulsive")
    assert radial_negative_sum(rep, 0.2).weighted_sum == 0.0
    assert phase_space_neg_integral(rep, 0.2, 3) == 0.0


def test_phase_space_hydrogen():
    got = phase_space_neg_integral(RadialPotential.hydrogen(1.0), 0.1, 3)
    assert abs(got + 1000.0 / 12.0) / (1000.0 / 12.0) < 1e-4


def test_momentum_integral_and_ball():
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert momentum_neg_integral(-1.0, 1) == pytest.approx(-4.0 / 3.0)
    assert momentum_neg_integral(0.5, 3) == 0.0


def test_semiclassical_density_is_tf_density(atom1):
    r = np.geomspace(0.01, 10.0, 25)
    V = RadialPotential.thomas_fermi(atom1)
    got = semiclassical_density(V, 2 ** -0.5, 3, r, spin=2)
    assert np.max(np.abs(got - tf_density(atom1, r)) / tf_density(atom1, r)) < 1e-10


def test_negative_projection_density_mass():
    r, rho = negative_projection_density(RadialPotential.hydrogen(1.0), 0.2)
    # bound states n <= 2 with multiplicities 1 + 4
    mass = np.sum(4 * math.pi * r**2 * rho) * (r[1] - r[0])
    assert abs(mass - 5.0) < 1e-6


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.25, 0.6))
def test_hydrogen_sum_property(z, h):
    got = radial_negative_sum(RadialPotential.hydrogen(z), h).weighted_sum
    exact = hydrogen_negative_sum_exact(z, h).exact
    assert abs(got - exact) <= 1e-4 * max(abs(exact), 1e-3)
