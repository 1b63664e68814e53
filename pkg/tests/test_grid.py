import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_lab.errors import ConfigurationError, UnresolvedCutoffWarning
from dispersive_lab.grid import (
    CutoffProfile,
    WaveFunction,
    cutoff_apply,
    gaussian_packet,
    japanese,
    make_grid,
    smooth_step,
    weight_apply,
)


def test_cartesian_axis_and_spacing():
    g = make_grid("cartesian", 1, 40.0, 256)
    assert g.shape == (256,)
    assert np.isclose(g.h, 2 * 40.0 / 256)  # box is [-L, L)
    assert np.isclose(g.axis[1] - g.axis[0], g.h)


def test_radial_axis_excludes_origin():
    g = make_grid("radial", 3, 50.0, 128)
    assert g.axis[0] > 0 and g.axis[-1] < 50.0


@pytest.mark.parametrize("mode,n", [("cartesian", 1), ("radial", 3), ("radial", 5)])
def test_free_basis_round_trip(mode, n):
    g = make_grid(mode, n, 30.0, 64)
    rng = np.random.default_rng(1)
    a = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    assert np.allclose(g.from_free(g.to_free(a)), a, atol=1e-12)


def test_to_free_is_unitary():
    g = make_grid("radial", 3, 30.0, 64)
    a = gaussian_packet(g, 10.0, 2.0, 1.0).amplitudes
    assert np.isclose(g.spectral_norm(g.to_free(a)), g.norm(a), rtol=1e-12)


@given(st.floats(-50, 50, allow_nan=False))
def test_japanese_bracket_bounds(x):
    j = japanese(np.array([x]))[0]
    assert j >= 1.0 and j >= abs(x)


@given(st.floats(-2, 3, allow_nan=False))
def test_smooth_step_range(s):
    v = float(smooth_step(np.array([s]))[0])
    assert 0.0 <= v <= 1.0
    if s <= 0:
        assert v == 0.0
    if s >= 1:
        assert v == 1.0


def test_smooth_step_monotone():
    s = np.linspace(-0.5, 1.5, 2001)
    assert np.all(np.diff(smooth_step(s)) >= 0)


@settings(max_examples=50)
@given(st.floats(0.1, 20.0), st.floats(0.0, 60.0))
def test_cutoff_partition_of_unity(m, k):
    p = CutoffProfile("F_geq", m)
    assert np.isclose(p(np.array([k]))[0] + p.complement()(np.array([k]))[0], 1.0, atol=1e-15)


def test_cutoff_rejects_bad_threshold():
    with pytest.raises(ConfigurationError):
        CutoffProfile("F_c", 0.0)
    with pytest.raises(ConfigurationError):
        CutoffProfile("bogus", 1.0)


def test_unresolved_cutoff_warns():
    g = make_grid("cartesian", 1, 40.0, 128)
    psi = gaussian_packet(g)
    with pytest.warns(UnresolvedCutoffWarning):
        cutoff_apply(psi, CutoffProfile("F_leq", g.h), "space")


def test_weight_apply_inverse():
    g = make_grid("cartesian", 1, 40.0, 128)
    psi = gaussian_packet(g, 3.0, 1.5, 0.7)
    back = weight_apply(weight_apply(psi, 2.0), -2.0)
    assert (back - psi).norm() < 1e-13


def test_gaussian_packet_normalized():
    for g in (make_grid("cartesian", 1, 40.0, 256), make_grid("radial", 5, 40.0, 256), make_grid("cartesian", 2, 20.0, 32)):
        assert np.isclose(gaussian_packet(g, 4.0 if g.mode == "radial" else 0.0, 1.5).norm(), 1.0)


def test_wavefunction_grid_mismatch():
    g = make_grid("cartesian", 1, 40.0, 128)
    with pytest.raises(ConfigurationError):
        WaveFunction(g, np.zeros(64))


def test_make_grid_rejects_bad_sizes():
    with pytest.raises(ConfigurationError):
        make_grid("cartesian", 1, -1.0, 128)
    with pytest.raises(ConfigurationError):
        make_grid("spherical", 1, 10.0, 128)
