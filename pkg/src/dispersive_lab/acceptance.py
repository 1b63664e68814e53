"""The acceptance suite: one function per criterion, each returning a Row."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import PropagatorConfig, evolve, free_evolve, gaussian_well_3d, poschl_teller, poschl_teller_radial
from .dynamics import quasi_periodic_5d
from .errors import AdmissibilityError, NonScatteringInputError
from .grid import CutoffProfile, WaveFunction, gaussian_packet, make_grid
from .microlocal import (
    OutgoingProjector,
    apply_projector,
    log_gaussian_packet,
    mellin_projector_oracle,
    phase_space_cutoff,
    projector_matrix,
)
from .verify import (
    EstimateReport,
    admissibility_defect,
    check_admissible,
    compactness_report,
    estimate_high_energy,
    estimate_microlocal_decay,
    estimate_near_threshold,
    estimate_strichartz,
    floquet_identity_report,
    local_decay,
    probe_battery,
    representation_report,
    small_box_floquet_spectrum,
)


@dataclass
class Row:
    criterion: int
    name: str
    verdict: str
    metrics: dict
    runtime: float = 0.0
    limit: float = math.inf
    reports: list = field(default_factory=list)

    @property
    def within_limit(self) -> bool:
        return self.runtime <= self.limit


def _table(estimate_id: str, params: dict, rows: dict, verdict: str) -> EstimateReport:
    keys = list(rows)
    t = np.arange(len(keys), dtype=float)
    y = np.array([float(rows[k]) for k in keys])
    return EstimateReport(estimate_id, params, t, y, np.full_like(t, np.nan), float("nan"), float("nan"), verdict,
                          extra={"rows": keys})


# 1 -------------------------------------------------------------------------------
def crit_free_flow(seed: int) -> Row:
    g = make_grid("cartesian", 1, 80.0, 1024)
    x = g.axis
    psi = WaveFunction(g, np.exp(-(x**2) / 2) / np.pi**0.25)
    ts = np.linspace(0.0, 5.0, 11)
    err = []
    for t in ts:
        exact = np.exp(-(x**2) / (2 * (1 + 2j * t))) / np.pi**0.25 / np.sqrt(1 + 2j * t)
        err.append(float(np.max(np.abs(free_evolve(psi, t).amplitudes - exact))))
    worst = max(err)
    rep = EstimateReport("free_flow", {"L": g.L, "N": g.N}, ts, np.array(err), np.full_like(ts, 1e-10),
                         float("nan"), 1e-10, "pass" if worst < 1e-10 else "fail")
    return Row(1, "free-flow exactness", rep.verdict, {"max_error": worst}, limit=1.0, reports=[rep])


# 2 -------------------------------------------------------------------------------
def crit_projection(seed: int) -> Row:
    g = make_grid("radial", 3, 100.0, 1024)
    proj = OutgoingProjector.for_band(g)
    P = projector_matrix(g, proj)
    F = probe_battery(g, count=100, seed=seed)
    plus = P @ F
    minus = F - plus
    partition = float(np.max(np.abs(plus + minus - F)))
    ratio = float(max(np.max(g.norm(plus)), np.max(g.norm(minus))))  # battery columns are unit
    a0s = (-20.0, -8.0, -2.0, 0.0, 2.0, 8.0, 20.0)
    agree, rows = [], {}
    for a0 in a0s:
        psi = log_gaussian_packet(g, 2.0, 0.25, a0)
        p = apply_projector(proj, psi, "+", guard_tol=1e-4)
        o = mellin_projector_oracle(psi, proj, "+")
        agree.append(float((p - o).norm()))
        rows[f"oracle_gap_a{a0:+g}"] = agree[-1]
    hi = log_gaussian_packet(g, 2.0, 0.25, 20.0)
    lo = log_gaussian_packet(g, 2.0, 0.25, -20.0)
    out_gap = float((apply_projector(proj, hi, "+", guard_tol=1e-4) - hi).norm())
    in_mass = float(apply_projector(proj, lo, "+", guard_tol=1e-4).norm())
    ok = partition <= 1e-14 and ratio <= 1 + 1e-6 and max(agree) <= 0.05 and out_gap <= 0.05 and in_mass <= 0.05
    rows.update(partition=partition, max_norm_ratio=ratio, outgoing_gap=out_gap, incoming_mass=in_mass)
    rep = _table("projection", {"L": g.L, "N": g.N, "hw": proj.hw, "seed": seed}, rows, "pass" if ok else "fail")
    return Row(2, "projection partition and contraction", rep.verdict,
               {"partition": partition, "max_norm_ratio": ratio, "oracle_gap": max(agree),
                "outgoing_gap": out_gap, "incoming_mass": in_mass}, limit=30.0, reports=[rep])


# 3 -------------------------------------------------------------------------------
HIGH_ENERGY_TIMES = np.concatenate([[4.0, 8.0, 16.0, 24.0], np.linspace(32.0, 100.0, 10)])


def crit_high_energy(seed: int) -> Row:
    reps, metrics = [], {}
    for mode, n in (("cartesian", 1), ("radial", 3)):
        g = make_grid(mode, n, 1000.0, 2048)
        for delta in (2.0, 3.0):
            r = estimate_high_energy(g, delta, 1.0, HIGH_ENERGY_TIMES, seed=seed, window=(40.0, 80.0))
            reps.append(r)
            metrics[f"{mode}_delta{delta:g}_exponent"] = r.fitted_exponent
    ok = all(r.passed for r in reps)
    return Row(3, "high-energy estimate", "pass" if ok else "fail", metrics, limit=120.0, reports=reps)


# 4 -------------------------------------------------------------------------------
def crit_near_threshold(seed: int) -> Row:
    g = make_grid("radial", 5, 400.0, 1024)
    r = estimate_near_threshold(g, 3.0, 0.1, np.geomspace(1.0, 50.0, 12), seed=seed)
    return Row(4, "near-threshold estimate", r.verdict,
               {"exponent": r.fitted_exponent, "bound": r.params["target"] + r.params["tolerance"]},
               limit=120.0, reports=[r])


# 5 -------------------------------------------------------------------------------
def crit_microlocal(seed: int) -> Row:
    g = make_grid("radial", 3, 640.0, 2048)
    r = estimate_microlocal_decay(g, 1.1, 40.0, seed=seed)
    return Row(5, "microlocal decay", r.verdict,
               {"kappa_40": r.extra["kappa_T"], "kappa_80": r.extra["kappa_2T"], "drift": r.extra["drift"]},
               limit=120.0, reports=[r])


# 6 -------------------------------------------------------------------------------
def crit_phase_space_cutoff(seed: int) -> Row:
    g = make_grid("cartesian", 1, 40.0, 512)
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((g.N, 20)) + 1j * rng.standard_normal((g.N, 20))
    F /= g.norm(F)
    prof = CutoffProfile("F_c", 1.0)
    rows = {}
    for t in (1.0, 4.0):
        psi = WaveFunction(g, F)
        s = phase_space_cutoff(psi, t, 0.5, prof) + phase_space_cutoff(psi, t, 0.5, prof.complement())
        rows[f"t{t:g}"] = float(np.max(g.norm((s - psi).amplitudes)))
    worst = max(rows.values())
    verdict = "pass" if worst <= 1e-12 else "fail"
    rep = _table("phase_space_cutoff", {"alpha": 0.5, "seed": seed, "L": g.L, "N": g.N}, rows, verdict)
    return Row(6, "phase-space cutoff conjugation", verdict, {"max_error": worst}, limit=10.0, reports=[rep])


# 7 -------------------------------------------------------------------------------
def crit_intertwining(seed: int) -> Row:
    from .scattering import adjoint_wave_operator, bound_states, default_dt

    g = make_grid("cartesian", 1, 512.0, 4096)
    V = poschl_teller(g)
    spec = bound_states(V)
    cfg = PropagatorConfig(default_dt(g))
    psi = gaussian_packet(g, -10.0, 2.0, 2.0)
    e = psi.like(evolve(spec.project_continuum(psi.amplitudes), 0.0, 2.0, V, cfg, grid=g))
    rows = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for T in (40.0, 80.0):
            lhs = adjoint_wave_operator(V, e, T, +1, spec, cfg, monitor=False).state
            rhs = free_evolve(adjoint_wave_operator(V, psi, T, +1, spec, cfg, monitor=False).state, 2.0)
            rows[f"T{T:g}"] = float((lhs - rhs).norm() / psi.norm())
    ok = rows["T40"] < 5e-4 and rows["T80"] < rows["T40"]
    rep = _table("intertwining", {"L": g.L, "N": g.N, "dt": cfg.dt, "t": 2.0}, rows, "pass" if ok else "fail")
    return Row(7, "wave-operator intertwining", rep.verdict, rows, limit=60.0, reports=[rep])


# 8 -------------------------------------------------------------------------------
def crit_compactness(seed: int) -> Row:
    g = make_grid("radial", 3, 400.0, 2048)
    r = compactness_report(poschl_teller_radial(g), T=40.0, ell=3.0)
    keys = ("sv_stability", "rank", "remainder_norm", "resolvent_small", "resolvent_large", "resolvent_drift")
    return Row(8, "compactness and split", r.verdict, {k: r.extra[k] for k in keys}, limit=300.0, reports=[r])


# 9 -------------------------------------------------------------------------------
def crit_representation(seed: int) -> Row:
    g = make_grid("radial", 3, 512.0, 2048)
    r = representation_report(poschl_teller_radial(g), gaussian_packet(g, 15.0, 2.0, -2.0))
    return Row(9, "representation formula", r.verdict, {k: r.extra[k] for k in r.extra["rows"]},
               limit=120.0, reports=[r])


# 10 ------------------------------------------------------------------------------
def crit_local_decay_static(seed: int) -> Row:
    from .scattering import bound_states

    g = make_grid("radial", 3, 1024.0, 2048)
    V = gaussian_well_3d(g)
    r = local_decay(V, gaussian_packet(g, 10.0, 2.0, 0.0), 1.5, 80.0)
    phi = bound_states(V).eigenvectors[0]
    rb = local_decay(V, phi, 1.5, 80.0)
    ok = r.passed and rb.extra["I_2T"] < 1e-8
    return Row(10, "local decay, static", "pass" if ok else "fail",
               {"tail_ratio": r.extra["tail_ratio"], "I_80": r.extra["I_T"], "bound_state_I": rb.extra["I_2T"],
                "quadrature_drift": r.extra["quadrature_drift"]},
               limit=300.0, reports=[r, rb])


# 11 ------------------------------------------------------------------------------
def crit_floquet(seed: int) -> Row:
    from .floquet import FloquetSystem, assemble_K, floquet_bound_states

    g = make_grid("radial", 5, 30.0, 128)
    r = floquet_identity_report(quasi_periodic_5d(g), 1.0, (6, 8))
    counts = {}
    for NF in (6, 7):
        for N in (128, 256):
            gg = make_grid("radial", 5, 30.0, N)
            sys = FloquetSystem(gg, (1.0, math.sqrt(2.0)), NF)
            counts[f"count_NF{NF}_N{N}"] = floquet_bound_states(sys, assemble_K(quasi_periodic_5d(gg), sys)).count
    stable = len(set(counts.values())) == 1
    rc = _table("floquet_bound_count", {"L": 30.0}, counts, "pass" if stable else "fail")
    ok = r.passed and stable
    return Row(11, "Floquet identity and bound-state count", "pass" if ok else "fail",
               {**{k: r.extra[k] for k in r.extra["rows"]}, **counts}, limit=600.0, reports=[r, rc])


# 12, 13 share one quasi-periodic trajectory ----------------------------------------------
@functools.lru_cache(maxsize=1)
def _quasi_periodic_run():
    from .scattering import cook_wave_operator

    # L = 480 keeps the fastest components (|k| <= 2) off the wall until t ~ 230 > 2T
    g = make_grid("radial", 5, 480.0, 2048)
    V = quasi_periodic_5d(g)
    f = gaussian_packet(g, 20.0, 3.0, 1.5)
    # dt = 1e-2 keeps dt * xi_max^2 < pi; halving it moves the states by ~1e-12
    cfg = PropagatorConfig(1e-2)
    psi0 = cook_wave_operator(V, f, 40.0, +1, cfg=cfg).state
    fspec = small_box_floquet_spectrum(V)
    rep = local_decay(V, psi0, 2.6, 80.0, dt=cfg.dt, floquet_spectrum=fspec)
    return g, V, psi0, fspec, rep


def crit_local_decay_quasi(seed: int) -> Row:
    from .floquet import embed

    g, V, psi0, fspec, rep = _quasi_periodic_run()
    bound = WaveFunction(g, embed(fspec.torus_state(fspec.classes[0], 0.0), fspec.sys.base, g))
    try:
        local_decay(V, bound, 2.6, 1.0, floquet_spectrum=fspec)
        rejected, overlap = False, float("nan")
    except NonScatteringInputError as exc:
        rejected, overlap = True, float(exc.data["overlap"])
    ok = rep.passed and rejected
    return Row(12, "local decay, quasi-periodic", "pass" if ok else "fail",
               {"tail_ratio": rep.extra["tail_ratio"], "input_overlap": rep.extra["bound_overlap"],
                "rejected_overlap": overlap, "quadrature_drift": rep.extra["quadrature_drift"]},
               limit=900.0, reports=[rep])


def crit_strichartz(seed: int) -> Row:
    cases = [(2.0, 10 / 3, 5), (math.inf, 2.0, 3), (4.0, math.inf, 1), (2.0, 6.0, 3), (8 / 3, 4.0, 2), (3.0, 10 / 3, 5)]
    exact = max(abs(admissibility_defect(q, r, n) - (n / r + (0 if math.isinf(q) else 2 / q) - n / 2)) for q, r, n in cases)
    verdicts = {}
    for q, r, n in cases:
        try:
            check_admissible(q, r, n)
            verdicts[(q, r, n)] = True
        except AdmissibilityError:
            verdicts[(q, r, n)] = False
    expected = {(q, r, n): abs(n / r + (0 if math.isinf(q) else 2 / q) - n / 2) <= 1e-12 for q, r, n in cases}
    try:
        check_admissible(2.0, math.inf, 2)
        endpoint_rejected = False
    except AdmissibilityError:
        endpoint_rejected = True
    g, V, psi0, fspec, ld = _quasi_periodic_run()
    rep = estimate_strichartz(V, psi0, 2.0, 10 / 3, 80.0, trajectory=ld._trajectory)
    ok = rep.passed and endpoint_rejected and verdicts == expected and exact <= 1e-12
    return Row(13, "Strichartz", "pass" if ok else "fail",
               {"norm_80": rep.extra["norm_T"], "norm_160": rep.extra["norm_2T"], "drift": rep.extra["drift"],
                "endpoint_rejected": endpoint_rejected, "validator_matches": verdicts == expected},
               limit=300.0, reports=[rep])


# 14 ------------------------------------------------------------------------------
DETERMINISM_TAGS = ("projection", "cutoff", "threshold")


def crit_determinism(seed: int) -> Row:
    digests = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as d:
            reproduce_all(Path(d), seed=seed, only=DETERMINISM_TAGS, include_determinism=False)
            digests.append({p.name: p.read_bytes() for p in sorted(Path(d).rglob("*.csv"))})
    same = digests[0] == digests[1] and len(digests[0]) > 0
    return Row(14, "determinism", "pass" if same else "fail", {"csv_files": len(digests[0]), "identical": same})


# registry -------------------------------------------------------------------------------
CRITERIA: list[tuple[int, tuple[str, ...], Callable[[int], Row]]] = [
    (1, ("free", "dynamics"), crit_free_flow),
    (2, ("projection", "microlocal"), crit_projection),
    (3, ("estimates", "high_energy"), crit_high_energy),
    (4, ("estimates", "threshold"), crit_near_threshold),
    (5, ("estimates", "microlocal"), crit_microlocal),
    (6, ("cutoff", "microlocal"), crit_phase_space_cutoff),
    (7, ("scattering", "intertwining"), crit_intertwining),
    (8, ("scattering", "compactness"), crit_compactness),
    (9, ("scattering", "representation"), crit_representation),
    (10, ("local_decay", "static"), crit_local_decay_static),
    (11, ("floquet",), crit_floquet),
    (12, ("floquet", "local_decay"), crit_local_decay_quasi),
    (13, ("floquet", "strichartz"), crit_strichartz),
    (14, ("determinism",), crit_determinism),
]


def run_criterion(number: int, seed: int = 0) -> Row:
    for k, _, fn in CRITERIA:
        if k == number:
            t0 = time.perf_counter()
            row = fn(seed)
            row.runtime = time.perf_counter() - t0
            return row
    raise KeyError(number)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def summary_csv(rows: list[Row]) -> bytes:
    """criterion, name, verdict, metric, value: one line per metric (no timings, so reruns match)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["criterion", "name", "verdict", "metric", "value"])
    for r in rows:
        for k, v in r.metrics.items():
            w.writerow([r.criterion, r.name, r.verdict, k, _fmt(v)])
    return buf.getvalue().encode("utf-8")


def reproduce_all(out: Path, seed: int = 0, only=None, jobs: int = 1, include_determinism: bool = True,
                  log: Callable[[str], None] | None = None) -> list[Row]:
    """Run the selected criteria, write their reports and a summary; returns the rows."""
    from concurrent.futures import ProcessPoolExecutor

    from .scattering import _atomic_write

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tags = set(only) if only else None
    chosen = [k for k, tg, _ in CRITERIA
              if (tags is None or tags & set(tg) or str(k) in tags) and (include_determinism or k != 14)]
    if jobs > 1 and len(chosen) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_criterion, chosen, [seed] * len(chosen)))
    else:
        rows = []
        for k in chosen:
            rows.append(run_criterion(k, seed))
            if log:
                r = rows[-1]
                log(f"criterion {r.criterion:2d} {r.verdict.upper():4s} {r.runtime:8.1f}s  {r.name}")
    for r in rows:
        for j, rep in enumerate(r.reports):
            rep.write(out / f"criterion_{r.criterion:02d}", f"{rep.estimate_id}_{j}")
    _atomic_write(out / "summary.csv", summary_csv(rows))
    timing = {str(r.criterion): {"runtime": round(r.runtime, 2), "limit": r.limit, "within_limit": r.within_limit,
                                 "verdict": r.verdict} for r in rows}
    _atomic_write(out / "summary.json", (json.dumps(timing, indent=2, sort_keys=True) + "\n").encode())
    return rows
