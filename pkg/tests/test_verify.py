import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_lab.dynamics import poschl_teller
from dispersive_lab.errors import AdmissibilityError, ConfigurationError, DomainOverflowError
from dispersive_lab.grid import japanese, make_grid
from dispersive_lab.verify import (
    ESTIMATES,
    EstimateReport,
    admissibility_defect,
    check_admissible,
    decay_verdict,
    estimate_high_energy,
    estimate_microlocal_decay,
    fit_exponent,
    lr_norm,
    operator_norm_probe,
    probe_battery,
    strichartz_norm,
)


@settings(max_examples=50)
@given(st.floats(0.5, 4.0), st.floats(0.1, 10.0))
def test_fit_recovers_power_law(p, C):
    t = np.linspace(1.0, 50.0, 40)
    y = C * japanese(t) ** (-p)
    slope, icpt = fit_exponent(t, y, (4.0, 40.0))
    assert abs(slope + p) < 1e-9 and abs(math.exp(icpt) - C) < 1e-6 * C


def test_decay_verdict_two_sided_and_one_sided():
    t = np.linspace(1.0, 50.0, 40)
    y = japanese(t) ** -3.0
    assert decay_verdict(t, y, -3.0, 0.25, (4, 40))[3] == "pass"
    assert decay_verdict(t, y, -2.0, 0.25, (4, 40))[3] == "fail"
    assert decay_verdict(t, y, -2.0, 0.25, (4, 40), one_sided=True)[3] == "pass"
    assert decay_verdict(t, y, -3.0, 0.25, (60, 80))[3] == "inconclusive"


def test_decay_verdict_catches_late_bump():
    t = np.linspace(1.0, 50.0, 40)
    y = japanese(t) ** -2.0
    y[-1] *= 5
    assert decay_verdict(t, y, -2.0, 0.5, (4, 50))[3] == "fail"


@settings(max_examples=100)
@given(st.integers(3, 7), st.floats(2.0, 1e6))
def test_admissible_pairs_have_zero_defect(n, q):
    r = n / (n / 2 - 2 / q)
    assert abs(admissibility_defect(q, r, n)) <= 1e-12
    check_admissible(q, r, n)


def test_admissibility_rejections():
    with pytest.raises(AdmissibilityError) as exc:
        check_admissible(2.0, math.inf, 2)
    assert exc.value.data["defect"] == 0.0
    with pytest.raises(AdmissibilityError):
        check_admissible(2.0, 3.0, 3)
    with pytest.raises(AdmissibilityError):
        check_admissible(1.5, 10.0, 5)
    assert check_admissible(2.0, 10 / 3, 5) == pytest.approx(0.0, abs=1e-12)
    assert check_admissible(math.inf, 2.0, 3) == 0.0


@pytest.mark.parametrize("r", [2.0, 3.0, 10 / 3, 6.0])
def test_radial_lr_norm_of_gaussian(r):
    g = make_grid("radial", 3, 30.0, 2048)
    rr = g.radius
    u = math.sqrt(4 * math.pi) * rr * np.exp(-(rr**2) / 2)
    exact = (2 * math.pi / r) ** (3 / (2 * r))
    assert lr_norm(g, u, r) == pytest.approx(exact, rel=1e-8)


def test_lr_norm_cartesian_l2_is_grid_norm():
    g = make_grid("cartesian", 1, 20.0, 256)
    a = np.exp(-g.axis**2)
    assert lr_norm(g, a, 2.0) == pytest.approx(g.norm(a), rel=1e-12)


def test_strichartz_norm_constant_trajectory():
    g = make_grid("radial", 3, 30.0, 512)
    rr = g.radius
    u = math.sqrt(4 * math.pi) * rr * np.exp(-(rr**2) / 2)
    t = np.linspace(0.0, 2.0, 21)
    traj = np.repeat(u[:, None], t.size, axis=1)
    q, r = 4.0, 3.0
    assert strichartz_norm(g, t, traj, q, r) == pytest.approx(2 ** 0.25 * lr_norm(g, u, r), rel=1e-10)


def test_battery_is_deterministic_and_normalized():
    g = make_grid("cartesian", 1, 100.0, 512)
    a = probe_battery(g, seed=5)
    b = probe_battery(g, seed=5)
    assert np.array_equal(a, b)
    assert a.shape[1] == 20
    assert np.allclose(g.norm(a), 1.0, atol=1e-12)
    assert not np.array_equal(a, probe_battery(g, seed=6))


def test_operator_norm_probe_on_diagonal_operator():
    g = make_grid("cartesian", 1, 50.0, 256)
    w = japanese(g.axis) ** -1.0
    op = lambda X: w[:, None] * X
    est = operator_norm_probe(g, op, op, probe_battery(g, seed=0))
    # lower bound on the true norm 1 that a localized battery gets close to
    assert 0.9 < est <= 1.0 + 1e-12


def test_high_energy_rejects_small_delta_and_overflow():
    g = make_grid("cartesian", 1, 100.0, 512)
    with pytest.raises(ConfigurationError):
        estimate_high_energy(g, 1.0, 1.0, [1.0, 2.0])
    with pytest.raises(DomainOverflowError):
        estimate_high_energy(g, 2.0, 1.0, [1.0, 200.0])


def test_microlocal_below_range_is_never_a_pass():
    g = make_grid("radial", 3, 200.0, 512)
    rep = estimate_microlocal_decay(g, 0.5, 5.0)
    assert rep.verdict != "pass" and rep.params["in_range"] is False


def test_report_csv_and_sidecar(tmp_path):
    rep = EstimateReport("x", {"a": np.float64(1.0)}, np.array([0.0, 1.5]), np.array([1.0, 0.1]),
                         np.array([1.0, float("nan")]), -2.0, float("inf"), "pass")
    body = rep.csv_bytes()
    assert body.startswith(b"t,lhs,envelope\r\n") and body.endswith(b"\r\n")
    assert b"1.5,0.1,nan" in body
    c, j = rep.write(tmp_path)
    meta = json.loads(j.read_text())
    assert meta["bound_constant"] is None and meta["params"] == {"a": 1.0}
    assert c.read_bytes() == body


def test_estimate_ids_are_unique():
    assert len(set(ESTIMATES)) == len(ESTIMATES) == 10
