import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_lab.dynamics import (
    Component,
    PropagatorConfig,
    QuasiPeriodicPotential,
    evolve,
    free_evolve,
    poschl_teller,
    potential_at,
    preset,
    quasi_periodic_5d,
    spectral_propagator,
    step_sizes,
    trajectory,
    zero_potential,
)
from dispersive_lab.errors import ConfigurationError
from dispersive_lab.grid import WaveFunction, gaussian_packet, make_grid


def _exact_gaussian(x, t):
    return np.exp(-(x**2) / (2 * (1 + 2j * t))) / np.pi**0.25 / np.sqrt(1 + 2j * t)


def test_free_flow_matches_closed_form():
    g = make_grid("cartesian", 1, 80.0, 1024)
    psi = WaveFunction(g, _exact_gaussian(g.axis, 0.0))
    for t in (0.5, 2.0, 5.0):
        assert np.max(np.abs(free_evolve(psi, t).amplitudes - _exact_gaussian(g.axis, t))) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_free_flow_group_law(s, t):
    g = make_grid("radial", 3, 40.0, 256)
    psi = gaussian_packet(g, 10.0, 2.0, 1.0)
    lhs = free_evolve(free_evolve(psi, s), t)
    assert (lhs - free_evolve(psi, s + t)).norm() < 1e-12


def test_free_flow_unitary_radial_n5():
    g = make_grid("radial", 5, 40.0, 256)
    psi = gaussian_packet(g, 10.0, 2.0, 1.0)
    assert math.isclose(free_evolve(psi, 3.7).norm(), 1.0, rel_tol=1e-12)


def test_step_sizes_sum_and_sign():
    steps = step_sizes(0.0, 1.05, 0.1)
    assert math.isclose(sum(steps), 1.05)
    assert all(s > 0 for s in steps)
    back = step_sizes(1.0, 0.0, 0.3)
    assert math.isclose(sum(back), -1.0) and all(s < 0 for s in back)


def test_strang_zero_potential_is_free_flow():
    g = make_grid("cartesian", 1, 40.0, 256)
    psi = gaussian_packet(g, 0.0, 1.0, 1.0)
    out = evolve(psi, 0.0, 1.0, zero_potential(g), PropagatorConfig(1e-2))
    assert (out - free_evolve(psi, 1.0)).norm() < 1e-12


def test_strang_second_order():
    g = make_grid("cartesian", 1, 40.0, 256)
    V = poschl_teller(g)
    psi = gaussian_packet(g, -3.0, 1.0, 1.0)
    ref = spectral_propagator(V).evolve(psi.amplitudes, 1.0)
    errs = [g.norm(evolve(psi, 0.0, 1.0, V, PropagatorConfig(dt)).amplitudes - ref) for dt in (2e-2, 1e-2)]
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_poschl_teller_bound_state_is_stationary():
    g = make_grid("cartesian", 1, 40.0, 512)
    V = poschl_teller(g)
    phi = WaveFunction(g, 1 / np.cosh(g.axis)).normalized()
    out = spectral_propagator(V).evolve(phi.amplitudes, 2.0)
    # E = -1: exp(-i t H) phi = exp(2i) phi
    assert g.norm(out - np.exp(2j) * phi.amplitudes) < 1e-8


def test_trajectory_matches_evolve():
    g = make_grid("radial", 5, 30.0, 128)
    V = quasi_periodic_5d(g)
    psi = gaussian_packet(g, 6.0, 1.5, 0.0)
    cfg = PropagatorConfig(1e-2)
    last = list(trajectory(psi, [0.5, 1.0], V, cfg))[-1][1]
    assert (last - evolve(psi, 0.0, 1.0, V, cfg)).norm() < 1e-12


def test_time_dependent_evolution_is_unitary():
    g = make_grid("radial", 5, 30.0, 128)
    V = quasi_periodic_5d(g)
    psi = gaussian_packet(g, 6.0, 1.5, 0.0)
    assert math.isclose(evolve(psi, 0.0, 3.0, V, PropagatorConfig(1e-2)).norm(), 1.0, rel_tol=1e-12)


def test_potential_at_uses_phase_and_offset():
    g = make_grid("cartesian", 1, 20.0, 64)
    f = np.exp(-g.axis**2)
    V = QuasiPeriodicPotential(g, 0 * f, (Component(f, 2.0, "cos", 0.5),))
    assert np.allclose(potential_at(V, 1.0), f * math.cos(2.0 * 1.5))
    shifted = V.shifted([0.25])
    assert np.allclose(potential_at(shifted, 1.0), f * math.cos(2.0 * 1.75))


def test_potential_validation():
    g = make_grid("cartesian", 1, 20.0, 64)
    f = np.exp(-g.axis**2)
    with pytest.raises(ConfigurationError):
        QuasiPeriodicPotential(g, f, (Component(f, 1.0), Component(f, 1.0)))
    with pytest.raises(ConfigurationError):
        QuasiPeriodicPotential(g, f, (Component(f, 0.0),))
    with pytest.raises(ConfigurationError):
        QuasiPeriodicPotential(g, np.ones(3))


def test_localization_rejects_slow_decay():
    g = make_grid("cartesian", 1, 20.0, 128)
    V = QuasiPeriodicPotential(g, 1.0 / (1.0 + g.axis**2), (), 8.0)
    with pytest.raises(ConfigurationError):
        V.check_localization()
    assert preset("poschl_teller", g).check_localization() > 0


def test_dt_guard():
    g = make_grid("cartesian", 1, 20.0, 1024)
    with pytest.raises(ConfigurationError):
        PropagatorConfig(1.0).check(g)
    with pytest.raises(ConfigurationError):
        PropagatorConfig(-1e-3)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset("nope", make_grid("cartesian", 1, 20.0, 64))
