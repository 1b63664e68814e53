import math

import numpy as np
import pytest

from dispersive_lab.dynamics import quasi_periodic_5d
from dispersive_lab.errors import ConfigurationError
from dispersive_lab.floquet import (
    FloquetSystem,
    assemble_K,
    embed,
    floquet_bound_states,
    floquet_identity_check,
    read_flsp,
    write_flsp,
)
from dispersive_lab.grid import make_grid


@pytest.fixture(scope="module")
def small():
    g = make_grid("radial", 5, 30.0, 128)
    V = quasi_periodic_5d(g)
    sys = FloquetSystem(g, (1.0, math.sqrt(2.0)), 4)
    return g, V, sys


def test_system_validation():
    g = make_grid("radial", 5, 30.0, 64)
    with pytest.raises(ConfigurationError):
        FloquetSystem(g, (), 4)
    with pytest.raises(ConfigurationError):
        FloquetSystem(g, (1.0, 0.0), 4)
    with pytest.raises(ConfigurationError):
        FloquetSystem(g, (1.0,), 0)
    with pytest.raises(ConfigurationError):
        FloquetSystem(g, (1.0, 2.0), 200, memory_budget=10_000)


def test_lattice_shape(small):
    _, _, sys = small
    assert sys.M == 9 and sys.lattice_shape == (9, 9)


def test_K_is_hermitian(small):
    _, V, sys = small
    assert assemble_K(V, sys).hermiticity_defect() < 1e-10


def test_off_lattice_frequency_rejected(small):
    g, V, _ = small
    with pytest.raises(ConfigurationError):
        assemble_K(V, FloquetSystem(g, (1.0, 1.5), 3))


def test_identity_improves_with_NF():
    g = make_grid("radial", 5, 30.0, 128)
    V = quasi_periodic_5d(g)
    d6 = floquet_identity_check(V, FloquetSystem(g, V.frequencies, 6), 1.0)
    d8 = floquet_identity_check(V, FloquetSystem(g, V.frequencies, 8), 1.0)
    assert d6 < 1e-4 and d8 < d6


def test_bound_state_count_and_flsp_round_trip(small, tmp_path):
    _, V, sys = small
    spec = floquet_bound_states(sys, assemble_K(V, sys))
    assert spec.count == 1
    # the static well has E ~ -7.40; the drive shifts it only slightly
    assert abs(spec.quasi_energies[0] + 7.4) < 0.5
    write_flsp(tmp_path / "s.flsp", spec)
    back = read_flsp(tmp_path / "s.flsp")
    assert back.classes == spec.classes
    assert np.allclose(back.eigenvectors, spec.eigenvectors)
    assert np.allclose(back.folded, spec.folded)


def test_embed_preserves_samples():
    src = make_grid("radial", 5, 30.0, 128)
    dst = make_grid("radial", 5, 60.0, 256)
    a = np.arange(src.shape[0], dtype=float)
    out = embed(a, src, dst)
    assert np.array_equal(out[: a.size], a) and not out[a.size :].any()
    with pytest.raises(ConfigurationError):
        embed(a, src, make_grid("radial", 5, 60.0, 128))


def test_embed_cartesian_centres_box():
    src = make_grid("cartesian", 1, 10.0, 64)
    dst = make_grid("cartesian", 1, 20.0, 128)
    a = np.exp(-src.axis**2)
    out = embed(a, src, dst)
    assert np.allclose(out, np.exp(-dst.axis**2) * (np.abs(dst.axis + 1e-12) < 10.0), atol=1e-12)
