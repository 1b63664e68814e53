import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_lab.errors import ConfigurationError, DomainOverflowError
from dispersive_lab.grid import CutoffProfile, WaveFunction, gaussian_packet, make_grid
from dispersive_lab.microlocal import (
    OutgoingProjector,
    apply_projector,
    dilate,
    log_gaussian_packet,
    mellin_projector_oracle,
    phase_space_cutoff,
    projector_matrix,
    verify_tanh_identity,
)
from dispersive_lab.verify import probe_battery


def test_tanh_quadrature_identity():
    assert verify_tanh_identity(10.0) < 1e-8


def test_projector_parameter_validation():
    with pytest.raises(ConfigurationError):
        OutgoingProjector(R=1.0)
    with pytest.raises(ConfigurationError):
        OutgoingProjector(W=10.0)
    with pytest.raises(ConfigurationError):
        OutgoingProjector(hw=0.5)


@pytest.fixture(scope="module")
def radial_setup():
    g = make_grid("radial", 3, 60.0, 256)
    proj = OutgoingProjector.for_band(g)
    return g, proj, projector_matrix(g, proj)


def test_partition_and_contraction(radial_setup):
    g, proj, P = radial_setup
    F = probe_battery(g, count=30, seed=3)
    plus = P @ F
    minus = F - plus
    assert np.max(np.abs(plus + minus - F)) < 1e-15
    assert np.max(g.norm(plus)) <= 1 + 1e-6
    assert np.max(g.norm(minus)) <= 1 + 1e-6


def test_projector_selfadjoint_on_band_limited_inputs(radial_setup):
    # the box truncates dilations, so symmetry only holds well inside the band
    g, _, P = radial_setup
    F = probe_battery(g, count=30, seed=3, k_cap=0.3 * g.xi_max)
    G = F.conj().T @ (P @ F) * g.weight
    assert np.max(np.abs(G - G.conj().T)) < 1e-6


@pytest.mark.parametrize("a0", [-20.0, -8.0, 0.0, 8.0, 20.0])
def test_mellin_oracle_agreement(a0):
    g = make_grid("radial", 3, 100.0, 1024)
    proj = OutgoingProjector.for_band(g)
    psi = log_gaussian_packet(g, 2.0, 0.25, a0)
    gap = (apply_projector(proj, psi, "+", guard_tol=1e-4) - mellin_projector_oracle(psi, proj, "+")).norm()
    assert gap < 0.05


def test_outgoing_packet_is_kept_and_incoming_removed():
    g = make_grid("radial", 3, 100.0, 1024)
    proj = OutgoingProjector.for_band(g)
    hi = log_gaussian_packet(g, 2.0, 0.25, 20.0)
    lo = log_gaussian_packet(g, 2.0, 0.25, -20.0)
    assert (apply_projector(proj, hi, "+", guard_tol=1e-4) - hi).norm() < 0.05
    assert apply_projector(proj, lo, "+", guard_tol=1e-4).norm() < 0.05


def test_log_gaussian_needs_radial_grid():
    with pytest.raises(ConfigurationError):
        log_gaussian_packet(make_grid("cartesian", 1, 10.0, 64), 0.0, 1.0, 0.0)


def test_dilation_is_isometric_and_invertible():
    g = make_grid("cartesian", 1, 40.0, 512)
    psi = gaussian_packet(g, 0.0, 1.0, 0.0)
    d = dilate(psi, 0.3)
    assert math.isclose(d.norm(), 1.0, rel_tol=1e-10)
    assert (dilate(d, -0.3) - psi).norm() < 1e-10
    # exp(i tau A) psi(x) = exp(tau/2) psi(exp(tau) x)
    x = g.axis
    exact = math.exp(0.15) * np.exp(-((math.exp(0.3) * x) ** 2) / 2) / np.pi**0.25
    assert np.max(np.abs(d.amplitudes - exact)) < 1e-10


def test_dilation_guard_rejects_overflow():
    g = make_grid("cartesian", 1, 10.0, 128)
    psi = gaussian_packet(g, 0.0, 2.0, 0.0)
    with pytest.raises(DomainOverflowError):
        dilate(psi, -2.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 4.0]))
def test_phase_space_partition(seed, t):
    g = make_grid("cartesian", 1, 40.0, 256)
    rng = np.random.default_rng(seed)
    psi = WaveFunction(g, rng.standard_normal(g.N) + 1j * rng.standard_normal(g.N)).normalized()
    prof = CutoffProfile("F_c", 1.0)
    total = phase_space_cutoff(psi, t, 0.5, prof) + phase_space_cutoff(psi, t, 0.5, prof.complement())
    assert (total - psi).norm() < 1e-12


def test_phase_space_cutoff_validation():
    psi = gaussian_packet(make_grid("cartesian", 1, 20.0, 64))
    with pytest.raises(ConfigurationError):
        phase_space_cutoff(psi, 0.0, 0.5)
    with pytest.raises(ConfigurationError):
        phase_space_cutoff(psi, 1.0, 1.5)


@pytest.mark.parametrize("mode,n", [("radial", 3), ("cartesian", 1)])
def test_nufft_node_sum_matches_dense_sum(mode, n):
    from dispersive_lab.microlocal import _node_sum_1d, _node_sum_fast

    g = make_grid(mode, n, 40.0 if mode == "radial" else 20.0, 128)
    p = OutgoingProjector.for_band(g)
    w, c = p.nodes()
    A = _node_sum_1d(g, w / p.R, c)
    B = _node_sum_fast(g, w / p.R, c)
    assert np.max(np.abs(A - B)) < 1e-11 * np.max(np.abs(A))
