import math

import numpy as np
import pytest

from dispersive_lab.dynamics import PropagatorConfig, gaussian_well_3d, poschl_teller, poschl_teller_radial
from dispersive_lab.errors import ConfigurationError, HorizonTooShortError, RankDeficiencyError
from dispersive_lab.grid import WaveFunction, gaussian_packet, make_grid
from dispersive_lab.scattering import (
    OperatorMatrix,
    adjoint_wave_operator,
    born_inverse,
    bound_states,
    cook_wave_operator,
    default_dt,
    free_resolvent,
    apply_free_hamiltonian,
    harmonic_basis,
    read_opmx,
    representation_residual,
    split_C,
    write_opmx,
)


def test_poschl_teller_bound_state():
    g = make_grid("cartesian", 1, 40.0, 512)
    spec = bound_states(poschl_teller(g))
    assert spec.count == 1
    assert abs(spec.eigenvalues[0] + 1.0) < 1e-6
    phi = WaveFunction(g, 1 / np.cosh(g.axis)).normalized()
    assert abs(abs(phi.inner(spec.eigenvectors[0])) - 1) < 1e-8


def test_radial_poschl_teller_bound_state():
    g = make_grid("radial", 3, 40.0, 512)
    spec = bound_states(poschl_teller_radial(g))
    assert spec.count == 1 and abs(spec.eigenvalues[0] + 1.0) < 1e-6


def test_continuum_projection_is_idempotent():
    g = make_grid("radial", 3, 40.0, 512)
    spec = bound_states(gaussian_well_3d(g))
    a = gaussian_packet(g, 3.0, 1.0, 0.0).amplitudes
    c = spec.project_continuum(a)
    assert g.norm(spec.project_continuum(c) - c) < 1e-12
    assert g.norm(spec.project_bound(c)) < 1e-12


def test_bound_states_need_static_potential():
    from dispersive_lab.dynamics import quasi_periodic_5d

    with pytest.raises(ConfigurationError):
        bound_states(quasi_periodic_5d(make_grid("radial", 5, 30.0, 128)))


def test_default_dt_guard():
    g = make_grid("cartesian", 1, 40.0, 512)
    dt = default_dt(g)
    assert dt * g.max_free_energy <= 1.0
    PropagatorConfig(dt).check(g)


def test_cook_tail_guard():
    g = make_grid("radial", 3, 100.0, 512)
    V = gaussian_well_3d(g)
    slow = gaussian_packet(g, 5.0, 2.0, 0.0)
    with pytest.raises(HorizonTooShortError):
        cook_wave_operator(V, slow, 2.0, +1)


def test_adjoint_wave_operator_isometric_on_continuum():
    g = make_grid("cartesian", 1, 128.0, 1024)
    V = poschl_teller(g)
    psi = gaussian_packet(g, -10.0, 2.0, 2.0)
    spec = bound_states(V)
    out = adjoint_wave_operator(V, psi, 20.0, +1, spec, engine="spectral", monitor=False).state
    assert math.isclose(out.norm(), g.norm(spec.project_continuum(psi.amplitudes)), rel_tol=1e-10)


def test_free_resolvent_inverts_h0():
    g = make_grid("radial", 3, 40.0, 256)
    psi = gaussian_packet(g, 8.0, 1.5, 1.0)
    assert (apply_free_hamiltonian(free_resolvent(psi)) - psi).norm() < 1e-10


def test_born_inverse_methods_agree():
    g = make_grid("radial", 3, 40.0, 256)
    V = poschl_teller_radial(g).__class__(g, 0.2 * poschl_teller_radial(g).V0)
    psi = gaussian_packet(g, 8.0, 1.5, 0.0)
    a = born_inverse(V, psi, "solve")
    b = born_inverse(V, psi, "neumann")
    assert (a - b).norm() < 1e-10


def test_representation_residual_needs_radial_grid():
    g = make_grid("cartesian", 1, 40.0, 256)
    with pytest.raises(ConfigurationError):
        representation_residual(poschl_teller(g), gaussian_packet(g), 10.0)


def test_harmonic_basis_orthonormal():
    g = make_grid("radial", 3, 60.0, 256)
    B = harmonic_basis(g, 16, 3.0)
    assert np.allclose(B.T @ B * g.weight, np.eye(16), atol=1e-10)


def test_split_c_threshold():
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    s = 0.5 ** np.arange(20)
    C = OperatorMatrix(None, (U * s) @ U.T)
    Cr, Cm = split_C(C, 0.01)
    assert np.linalg.norm(Cr.entries, 2) < 0.01
    assert np.allclose(Cr.entries + Cm.entries, C.entries)
    with pytest.raises(RankDeficiencyError):
        split_C(OperatorMatrix(None, np.eye(4)), 0.01)


def test_opmx_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    C = OperatorMatrix(None, rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3)), "C:test")
    write_opmx(tmp_path / "c.opmx", C)
    back = read_opmx(tmp_path / "c.opmx")
    assert back.label == "C:test"
    assert np.allclose(back.entries, C.entries.astype(np.complex64))
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ConfigurationError):
        read_opmx(tmp_path / "bad")
