"""Estimate harness: operator-norm probes, decay fits and EstimateReports."""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.special import gamma

from .dynamics import PropagatorConfig, QuasiPeriodicPotential, _strang, preset, spectral_propagator
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    DomainOverflowError,
    NonScatteringInputError,
    UnresolvedCutoffWarning,
)
from .grid import CutoffProfile, Grid, WaveFunction, gaussian_packet, japanese, make_grid, smooth_step
from .microlocal import OutgoingProjector, projector_matrix

BATTERY_SIZE = 20
POWER_ITERATIONS = 12
ADMISSIBILITY_TOL = 1e-12


# reports ------------------------------------------------------------------
@dataclass
class EstimateReport:
    estimate_id: str
    params: dict
    t: np.ndarray
    lhs: np.ndarray
    envelope: np.ndarray
    fitted_exponent: float
    bound_constant: float
    verdict: str  # pass | fail | inconclusive
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["t", "lhs", "envelope"])
        for row in zip(self.t, self.lhs, self.envelope):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue().encode("utf-8")

    def sidecar(self) -> dict:
        return {
            "estimate_id": self.estimate_id,
            "params": _jsonable(self.params),
            "fitted_exponent": _jsonable(self.fitted_exponent),
            "bound_constant": _jsonable(self.bound_constant),
            "verdict": self.verdict,
            "runtime": round(self.runtime, 3),
            "extra": _jsonable(self.extra),
            "build": _git_describe(),
        }

    def write(self, directory, stem: str | None = None) -> tuple[Path, Path]:
        from .scattering import _atomic_write

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.estimate_id
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        _atomic_write(csv_path, self.csv_bytes())
        _atomic_write(json_path, (json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n").encode())
        return csv_path, json_path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# fits and verdicts ----------------------------------------------------------
def fit_exponent(t, y, window: tuple[float, float]) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log <t> on the window."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (t >= window[0]) & (t <= window[1]) & (y > 0)
    if m.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(japanese(t[m])), np.log(y[m]), 1)
    return float(slope), float(icpt)


def decay_verdict(t, y, target: float, tol: float, window, one_sided: bool = False):
    """Exponent tolerance plus envelope domination on the fit window.

    The envelope is K <t>^target with K fixed on the first third of the
    window; every later sample must stay below it up to the slack
    (<t>/<t_first>)^tol that the exponent tolerance allows.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, _ = fit_exponent(t, y, window)
    m = (t >= window[0]) & (t <= window[1])
    env_shape = japanese(t) ** target
    if m.sum() < 2 or not math.isfinite(slope):
        return slope, float("nan"), np.full_like(t, np.nan), "inconclusive"
    tw = t[m]
    first = tw <= tw[0] + (tw[-1] - tw[0]) / 3
    K = float(np.max(y[m][first] / env_shape[m][first]))
    slack = (japanese(tw) / japanese(tw[0])) ** tol
    dominated = bool(np.all(y[m] <= K * env_shape[m] * slack * (1 + 1e-12)))
    ok = slope <= target + tol if one_sided else abs(slope - target) <= tol
    return slope, K, K * env_shape, "pass" if ok and dominated else "fail"


def default_window(t_samples) -> tuple[float, float]:
    t = np.asarray(t_samples, dtype=float)
    return 4.0, 0.8 * float(t.max())


# batteries and norm probes ------------------------------------------------------
def _orthonormal(grid: Grid, X: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(X * math.sqrt(grid.weight))
    d = np.abs(np.diag(R))
    keep = d > 1e-12 * float(np.max(d, initial=0.0))
    if not keep.any():
        keep[:1] = True
    return Q[:, keep] / math.sqrt(grid.weight)


def _cap_symbol(grid: Grid, k_cap: float | None) -> np.ndarray:
    """Smooth frequency cap: 1 below 0.75 k_cap, 0 above k_cap (no sinc tails)."""
    k = np.sqrt(np.maximum(grid.free_energies, 0.0))
    return np.ones_like(k) if k_cap is None else smooth_step((k_cap - k) / (0.25 * k_cap))


def probe_battery(grid: Grid, count: int = BATTERY_SIZE, seed: int = 0, k_cap: float | None = None) -> np.ndarray:
    """Deterministic unit packets (columns) restricted to |xi| <= k_cap."""
    if grid.ndim != 1:
        raise ConfigurationError("probe batteries are built on one-dimensional grids")
    rng = np.random.default_rng(seed)
    R = float(np.max(grid.radius))
    kmax = (k_cap if k_cap is not None else grid.xi_max) * 0.8
    cols = []
    for _ in range(count):
        c = rng.uniform(0.02, 0.5) * R
        if grid.mode == "cartesian":
            c *= rng.choice([-1.0, 1.0])
        w = rng.uniform(0.7, 4.0)
        k = rng.uniform(-kmax, kmax)
        a = gaussian_packet(grid, c, w, k).amplitudes * np.exp(2j * np.pi * rng.uniform())
        cols.append(a)
    X = grid.free_multiplier(np.stack(cols, axis=1), _cap_symbol(grid, k_cap))
    return X / grid.norm(X)


def operator_norm_probe(
    grid: Grid,
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    battery: np.ndarray,
    iters: int = POWER_ITERATIONS,
) -> float:
    """Lower bound for ||forward|| by block power iteration from the battery."""
    X = _orthonormal(grid, battery)
    best = 0.0
    for it in range(iters + 1):
        Y = forward(X)
        s = float(np.linalg.norm(Y * math.sqrt(grid.weight), 2))
        best = max(best, s)
        if it == iters:
            break
        X = _orthonormal(grid, adjoint(Y))
    return best


class _FreeProbe:
    """A_t = P^sign F(|P| > c) |P|^l exp(sign i t H0) <x>^-delta, compressed to |xi| <= k_cap."""

    def __init__(self, grid: Grid, delta: float, c: float | None, l: float, sign: str, k_cap: float | None,
                 R: float = 4.0):
        if grid.ndim != 1:
            raise ConfigurationError("free probes run on one-dimensional grids")
        if sign not in ("+", "-"):
            raise ConfigurationError("sign must be '+' or '-'")
        self.grid = grid
        self.s = 1 if sign == "+" else -1
        self.w = japanese(grid.radius) ** (-delta)
        self.k = np.sqrt(np.maximum(grid.free_energies, 0.0))
        self.cap = _cap_symbol(grid, k_cap)
        filt = np.ones_like(self.k) if c is None else CutoffProfile("F_geq", c)(self.k)
        self.sym = filt * self.k**l
        P = projector_matrix(grid, OutgoingProjector.for_band(grid, R=R))
        self.P = P if sign == "+" else np.eye(P.shape[0]) - P

    def forward(self, t: float, sym=None):
        # the cap sits on both sides of the weight: a compression, so still a lower bound
        ph = np.exp(1j * self.s * t * self.grid.free_energies) * (self.sym if sym is None else sym) * self.cap

        def f(X):
            Z = self.grid.free_multiplier(self.grid.free_multiplier(X, self.cap) * self.w[:, None], ph)
            return self.P @ Z

        def fa(Y):
            Z = self.grid.free_multiplier(self.P.conj().T @ Y, np.conj(ph)) * self.w[:, None]
            return self.grid.free_multiplier(Z, self.cap)

        return f, fa

    def norm(self, t: float, battery: np.ndarray, iters: int, sym=None) -> float:
        f, fa = self.forward(t, sym)
        return operator_norm_probe(self.grid, f, fa, battery, iters)


def _auto_cap(grid: Grid, t_max: float, c: float | None) -> float:
    """Frequency cap keeping every probed wave inside the box up to t_max."""
    cap = min(float(np.max(grid.radius)) / (4 * max(t_max, 1e-12)), 0.7 * grid.xi_max)
    if c is not None and cap < 2 * c:
        raise DomainOverflowError(
            "box too small for the requested horizon: waves above the cutoff would wrap",
            k_cap=cap,
            c=c,
            t_max=t_max,
        )
    return cap


def _wrap_guard(grid: Grid, k_cap: float, t_max: float) -> None:
    if 2 * k_cap * t_max > 0.5 * float(np.max(grid.radius)) * (1 + 1e-9):
        raise DomainOverflowError("probe horizon exceeds the wrap-free time", k_cap=k_cap, t_max=t_max)


def _free_decay_report(estimate_id, grid, delta, c, l, t_samples, sign, seed, window, tol, k_cap, iters, params):
    t0 = time.perf_counter()
    t = np.asarray(sorted(float(x) for x in t_samples))
    k_cap = _auto_cap(grid, float(t.max()), c) if k_cap is None else k_cap
    _wrap_guard(grid, k_cap, float(t.max()))
    probe = _FreeProbe(grid, delta, c, l, sign, k_cap)
    bat = probe_battery(grid, seed=seed, k_cap=k_cap)
    y = np.array([probe.norm(tt, bat, iters) for tt in t])
    window = window or default_window(t)
    slope, K, env, verdict = decay_verdict(t, y, -delta, tol, window)
    params = dict(params, k_cap=k_cap, window=list(window), tolerance=tol, target=-delta, seed=seed, sign=sign)
    return EstimateReport(estimate_id, params, t, y, env, slope, K, verdict, time.perf_counter() - t0)


def estimate_high_energy(
    grid: Grid,
    delta: float,
    c: float,
    t_samples: Sequence[float],
    sign: str = "+",
    seed: int = 0,
    window=None,
    tol: float = 0.25,
    k_cap: float | None = None,
    iters: int = POWER_ITERATIONS,
) -> EstimateReport:
    """||P^+- F(|P| > c) exp(+-itH0) <x>^-delta|| against <t>^-delta."""
    if not delta > 1:
        raise ConfigurationError("high-energy estimate needs delta > 1", delta=delta)
    if not c > 0:
        raise ConfigurationError("cutoff c must be positive", c=c)
    if min(t_samples) < 0:
        raise ConfigurationError("time samples must be non-negative")
    params = {"delta": delta, "c": c, "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    return _free_decay_report("high_energy", grid, delta, c, 0.0, t_samples, sign, seed, window, tol, k_cap, iters, params)


def estimate_pointwise_smoothing(
    grid: Grid,
    delta: float,
    c: float,
    l: float,
    v: float,
    t_samples: Sequence[float],
    sign: str = "+",
    seed: int = 0,
    window=None,
    tol: float = 0.3,
    k_cap: float | None = None,
    iters: int = POWER_ITERATIONS,
) -> EstimateReport:
    """As the high-energy probe with the extra multiplier |P|^l, for t >= v."""
    if not 0 <= l < delta:
        raise ConfigurationError("pointwise smoothing needs 0 <= l < delta", l=l, delta=delta)
    if not v > 0 or min(t_samples) < v:
        raise ConfigurationError("pointwise smoothing needs t >= v > 0", v=v)
    params = {"delta": delta, "c": c, "l": l, "v": v, "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    return _free_decay_report(
        "pointwise_smoothing", grid, delta, c, l, t_samples, sign, seed, window, tol, k_cap, iters, params
    )


def estimate_time_smoothing(
    grid: Grid,
    delta: float,
    c: float,
    intervals: int = 16,
    sign: str = "+",
    seed: int = 0,
    k_cap: float | None = None,
    iters: int = POWER_ITERATIONS,
    drift_tol: float = 0.02,
) -> EstimateReport:
    """int_0^1 t^2 ||P^+- F(|P|>c) exp(+-itH0) |P|^2 <x>^-delta|| dt, Simpson with step halving."""
    if not delta > 2:
        raise ConfigurationError("time smoothing needs delta > 2", delta=delta)
    t0 = time.perf_counter()
    k_cap = 0.5 * grid.xi_max if k_cap is None else k_cap
    probe = _FreeProbe(grid, delta, c, 2.0, sign, k_cap)
    bat = probe_battery(grid, seed=seed, k_cap=k_cap)
    n2 = 2 * intervals
    t = np.linspace(0.0, 1.0, n2 + 1)
    g = np.array([tt**2 * probe.norm(tt, bat, iters) if tt > 0 else 0.0 for tt in t])
    coarse = simpson(g[::2], x=t[::2])
    fine = simpson(g, x=t)
    rich = fine + (fine - coarse) / 15
    drift = abs(fine - coarse) / max(abs(fine), 1e-300)
    finite = bool(np.all(np.isfinite(g)))
    verdict = "pass" if finite and drift < drift_tol else "fail"
    params = {"delta": delta, "c": c, "intervals": intervals, "k_cap": k_cap, "seed": seed, "sign": sign,
              "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    extra = {"integral": fine, "coarse": coarse, "richardson": rich, "drift": drift}
    return EstimateReport("time_smoothing", params, t, g, np.full_like(t, rich), float("nan"), rich, verdict,
                          time.perf_counter() - t0, extra)


def estimate_microlocal_decay(
    grid: Grid,
    delta: float,
    T: float,
    sign: str = "+",
    seed: int = 0,
    step: float = 0.25,
    k_cap: float | None = None,
    drift_tol: float = 0.05,
) -> EstimateReport:
    """kappa(T) = max over the battery of int_0^T ||<x>^-delta P^+- exp(+-itH0) f||^2 dt / ||f||^2.

    Verdict: kappa stable under T -> 2T.
    """
    if grid.ndim != 1:
        raise ConfigurationError("microlocal decay runs on one-dimensional grids")
    if not delta > 0:
        raise ConfigurationError("delta must be positive", delta=delta)
    # nothing is claimed for delta <= 1 or n < 3; such runs are exploratory and never pass.
    # For n > 3 the admissible delta(n) > 1 is unknown; see microlocal_delta_scan.
    in_range = delta > 1 and grid.n >= 3
    t0 = time.perf_counter()
    T2 = 2 * T
    k_cap = _auto_cap(grid, T2, None) if k_cap is None else k_cap
    _wrap_guard(grid, k_cap, T2)
    s = 1 if sign == "+" else -1
    P = projector_matrix(grid, OutgoingProjector.for_band(grid))
    if sign == "-":
        P = np.eye(P.shape[0]) - P
    w = japanese(grid.radius) ** (-delta)
    F = probe_battery(grid, seed=seed, k_cap=k_cap)
    nsteps = int(round(T2 / step))
    nsteps += nsteps % 2
    t = np.linspace(0.0, T2, nsteps + 1)
    dens = np.empty((t.size, F.shape[1]))
    E = grid.free_energies
    for i, tt in enumerate(t):
        Z = P @ grid.free_multiplier(F, np.exp(1j * s * tt * E))
        dens[i] = grid.norm(w[:, None] * Z) ** 2
    cum = cumulative_simpson(dens, x=t, axis=0, initial=0.0)
    fn2 = grid.norm(F) ** 2
    kappa_curve = np.max(cum / fn2, axis=1)
    iT = int(np.argmin(np.abs(t - T)))
    kT, k2T = float(kappa_curve[iT]), float(kappa_curve[-1])
    drift = (k2T - kT) / max(kT, 1e-300)
    half = float(np.max(simpson(dens[::2], x=t[::2], axis=0) / fn2))
    verdict = "fail" if drift >= drift_tol else ("pass" if in_range else "inconclusive")
    slope, _ = fit_exponent(t[1:], np.max(dens[1:], axis=1), (4.0, 0.8 * T2))
    params = {"delta": delta, "T": T, "step": step, "in_range": in_range, "k_cap": k_cap, "seed": seed, "sign": sign,
              "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    extra = {"kappa_T": kT, "kappa_2T": k2T, "drift": drift, "kappa_half_step": half}
    return EstimateReport("microlocal", params, t, kappa_curve, np.full_like(t, k2T), slope, k2T, verdict,
                          time.perf_counter() - t0, extra)


def microlocal_delta_scan(grid: Grid, deltas: Sequence[float], T: float, seed: int = 0, **kw):
    """Run the microlocal probe on a delta grid; returns (smallest passing delta or None, reports)."""
    reports = [estimate_microlocal_decay(grid, d, T, seed=seed, **kw) for d in sorted(deltas)]
    passing = [r.params["delta"] for r in reports if r.passed]
    return (min(passing) if passing else None), reports


def estimate_near_threshold(
    grid: Grid,
    delta: float,
    eps: float,
    t_samples: Sequence[float],
    filtered: bool | None = None,
    sign: str = "+",
    seed: int = 0,
    window=None,
    tol: float = 0.2,
    k_cap: float | None = None,
    iters: int = POWER_ITERATIONS,
) -> EstimateReport:
    """Low-energy decay.

    Filtered: F(|P| > <t>^-(1/2-eps)) in front, target -(1/2-eps) delta.
    Unfiltered (default on n >= 5 radial grids): target -(n/4 - eps),
    checked one-sided since faster decay is consistent with the bound.
    """
    if not 0 < eps < 0.5:
        raise ConfigurationError("eps must lie in (0, 1/2)", eps=eps)
    if min(t_samples) < 1:
        raise ConfigurationError("near-threshold samples need t >= 1")
    t0 = time.perf_counter()
    if filtered is None:
        filtered = not (grid.mode == "radial" and grid.n >= 5)
    t = np.asarray(sorted(float(x) for x in t_samples))
    k_cap = _auto_cap(grid, float(t.max()), None) if k_cap is None else k_cap
    _wrap_guard(grid, k_cap, float(t.max()))
    probe = _FreeProbe(grid, delta, None, 0.0, sign, k_cap)
    bat = probe_battery(grid, seed=seed, k_cap=k_cap)
    if filtered:
        target = -(0.5 - eps) * delta
        thresholds = japanese(t) ** (-(0.5 - eps))
        ok = thresholds >= grid.frequency_spacing
        if not np.all(ok):
            warnings.warn(
                f"cutoff below the frequency spacing beyond t = {t[ok][-1] if ok.any() else t[0]:.3g}; samples truncated",
                UnresolvedCutoffWarning,
                stacklevel=2,
            )
            t, thresholds = t[ok], thresholds[ok]
        y = np.array([
            probe.norm(tt, bat, iters, sym=CutoffProfile("F_geq", th)(probe.k))
            for tt, th in zip(t, thresholds)
        ])
        one_sided = False
    else:
        target = -(grid.n / 4 - eps)
        y = np.array([probe.norm(tt, bat, iters) for tt in t])
        one_sided = True
    window = window or (1.0, float(t.max()))
    slope, K, env, verdict = decay_verdict(t, y, target, tol, window, one_sided=one_sided)
    params = {"delta": delta, "eps": eps, "filtered": filtered, "k_cap": k_cap, "window": list(window), "tolerance": tol,
              "target": target, "seed": seed, "sign": sign, "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    return EstimateReport("near_threshold", params, t, y, env, slope, K, verdict, time.perf_counter() - t0)


# local decay -------------------------------------------------------------------
def _time_mesh(T2: float, step: float) -> np.ndarray:
    n = int(round(T2 / step))
    n += n % 2
    return np.linspace(0.0, T2, n + 1)


def _trajectory(V: QuasiPeriodicPotential, a: np.ndarray, t: np.ndarray, dt: float | None) -> np.ndarray:
    """Samples U(t_i, 0) a as columns (static 1D potentials use the spectral engine)."""
    grid = V.grid
    out = np.empty(a.shape + (t.size,), dtype=complex)
    if V.is_static and grid.ndim == 1 and dt is None:
        prop = spectral_propagator(V)
        c = prop.evolve(a, 0.0)
        out[..., 0] = c
        for i in range(1, t.size):
            c = prop.evolve(c, t[i] - t[i - 1])
            out[..., i] = c
        return out
    if dt is None:
        from .scattering import default_dt

        dt = default_dt(grid)
    PropagatorConfig(dt=dt).check(grid)
    c = np.array(a, dtype=complex)
    out[..., 0] = c
    for i in range(1, t.size):
        c = _strang(grid, c, t[i - 1], t[i], V, dt)
        out[..., i] = c
    return out


def small_box_floquet_spectrum(V: QuasiPeriodicPotential, L_small: float = 30.0, NF: int = 6, modes: int = 64):
    """Floquet bound states of a preset potential on a small box with the same spacing."""
    from .floquet import FloquetSystem, assemble_K, floquet_bound_states

    g = V.grid
    N_small = int(round(g.N * L_small / g.L))
    if abs(N_small * g.L / g.N - L_small) > 1e-9 * L_small:
        raise ConfigurationError("small box does not share the grid spacing", L_small=L_small)
    gs = make_grid(g.mode, g.n, L_small, N_small)
    Vs = preset(V.name, gs)
    sys = FloquetSystem(gs, V.frequencies, NF)
    return floquet_bound_states(sys, assemble_K(Vs, sys), modes=modes)


def scattering_overlap(spec, psi: WaveFunction, s=0.0) -> float:
    """||P_Fb(s) psi|| / ||psi|| for a Floquet spectrum computed on a (possibly smaller) box."""
    from .floquet import apply_PFb

    return float(apply_PFb(spec, psi, s).norm() / psi.norm())


def local_decay(
    V: QuasiPeriodicPotential,
    psi0: WaveFunction,
    eta: float,
    T: float,
    step: float = 0.5,
    dt: float | None = None,
    floquet_spectrum=None,
    overlap_tol: float = 1e-3,
    tail_tol: float = 0.05,
) -> EstimateReport:
    """I(T) = int_0^T ||<x>^-eta U(t, 0) psi_c||^2 dt and its Cauchy tail I(2T) - I(T).

    Static potentials: psi_c = P_c psi0.  Quasi-periodic potentials: psi0
    must be a scattering state; its overlap with the Floquet bound states
    at s = 0 is measured and inputs above ``overlap_tol`` are rejected.
    """
    t0 = time.perf_counter()
    grid = V.grid
    extra: dict = {}
    if V.is_static:
        if not eta > 1:
            raise ConfigurationError("static local decay needs eta > 1", eta=eta)
        from .scattering import bound_states

        spec = bound_states(V)
        a = spec.project_continuum(psi0.amplitudes)
        extra["bound_count"] = spec.count
    else:
        if not eta > 2.5:
            raise ConfigurationError("quasi-periodic local decay needs eta > 5/2", eta=eta)
        fspec = floquet_spectrum if floquet_spectrum is not None else small_box_floquet_spectrum(V)
        ov = scattering_overlap(fspec, psi0)
        extra["bound_overlap"] = ov
        if ov > overlap_tol:
            raise NonScatteringInputError("input overlaps the Floquet bound states", overlap=ov, tolerance=overlap_tol)
        a = psi0.amplitudes
    t = _time_mesh(2 * T, step)
    traj = _trajectory(V, a, t, dt)
    w = japanese(grid.radius) ** (-eta)
    dens = grid.norm(grid.expand(w, traj) * traj) ** 2
    I = cumulative_simpson(dens, x=t, initial=0.0)
    iT = int(np.argmin(np.abs(t - T)))
    IT, I2T = float(I[iT]), float(I[-1])
    ratio = (I2T - IT) / IT if IT > 1e-300 else 0.0
    half = float(simpson(dens[::2], x=t[::2]))
    extra.update(I_T=IT, I_2T=I2T, tail_ratio=ratio, I_2T_half_step=half,
                 quadrature_drift=abs(half - I2T) / max(I2T, 1e-300), input_norm=float(grid.norm(a)))
    verdict = "pass" if ratio < tail_tol else "fail"
    slope, _ = fit_exponent(t[1:], dens[1:], (4.0, 0.8 * 2 * T))
    params = {"eta": eta, "T": T, "step": step, "dt": dt, "potential": V.name, "static": V.is_static,
              "mode": grid.mode, "n": grid.n, "L": grid.L, "N": grid.N}
    rep = EstimateReport("local_decay", params, t, I, np.full_like(t, I2T), slope, I2T, verdict,
                         time.perf_counter() - t0, extra)
    rep._trajectory = (t, traj)  # reused by the Strichartz check on the same run
    return rep


# Strichartz ---------------------------------------------------------------------
def admissibility_defect(q: float, r: float, n: int) -> float:
    """n/r + 2/q - n/2 (infinite exponents contribute zero)."""
    inv = lambda p: 0.0 if math.isinf(p) else 1.0 / p
    return n * inv(r) + 2 * inv(q) - n / 2


def check_admissible(q: float, r: float, n: int) -> float:
    d = admissibility_defect(q, r, n)
    if q == 2 and math.isinf(r) and n == 2:
        raise AdmissibilityError("(q, r, n) = (2, inf, 2) is excluded", q=q, r="inf", n=n, defect=d)
    if not q >= 2 or not r >= 2:
        raise AdmissibilityError("Strichartz exponents need q, r >= 2", q=q, r=r if math.isfinite(r) else "inf", n=n, defect=d)
    if abs(d) > ADMISSIBILITY_TOL:
        raise AdmissibilityError("pair is not admissible", q=q, r=r if math.isfinite(r) else "inf", n=n, defect=d)
    return d


def lr_norm(grid: Grid, a: np.ndarray, r: float) -> np.ndarray:
    """||psi||_{L^r(R^n)} of grid samples; radial grids hold u = r^{(n-1)/2} psi (s-wave)."""
    a = np.asarray(a)
    axes = tuple(range(grid.ndim))
    if grid.mode == "cartesian":
        if math.isinf(r):
            return np.max(np.abs(a), axis=axes)
        return (grid.weight * np.sum(np.abs(a) ** r, axis=axes)) ** (1 / r)
    n = grid.n
    area = 2 * math.pi ** (n / 2) / gamma(n / 2)
    rad = grid.expand(grid.radius, a)
    if math.isinf(r):
        return np.max(np.abs(a) * rad ** (-(n - 1) / 2), axis=0) / math.sqrt(area)
    s = grid.h * np.sum(np.abs(a) ** r * rad ** ((n - 1) * (1 - r / 2)), axis=0)
    return (area ** (1 - r / 2) * s) ** (1 / r)


def strichartz_norm(grid: Grid, t: np.ndarray, traj: np.ndarray, q: float, r: float) -> float:
    """||.||_{L^q_t L^r_x} of a trajectory sampled on a uniform mesh (samples on the last axis)."""
    check_admissible(q, r, grid.n)
    vals = lr_norm(grid, traj, r)
    if math.isinf(q):
        return float(np.max(vals))
    return float(simpson(vals**q, x=t) ** (1 / q))


def estimate_strichartz(
    V: QuasiPeriodicPotential,
    psi0: WaveFunction,
    q: float,
    r: float,
    T: float,
    step: float = 0.5,
    dt: float | None = None,
    trajectory=None,
    drift_tol: float = 0.05,
) -> EstimateReport:
    """Mixed norm on [0, T] and [0, 2T]; pass when finite with drift below drift_tol."""
    grid = V.grid
    check_admissible(q, r, grid.n)
    t0 = time.perf_counter()
    if trajectory is None:
        a = psi0.amplitudes
        if V.is_static:
            from .scattering import bound_states

            a = bound_states(V).project_continuum(a)
        t = _time_mesh(2 * T, step)
        traj = _trajectory(V, a, t, dt)
    else:
        t, traj = trajectory
    iT = int(np.argmin(np.abs(t - T)))
    vals = lr_norm(grid, traj, r)
    nT = strichartz_norm(grid, t[: iT + 1], traj[..., : iT + 1], q, r)
    n2T = strichartz_norm(grid, t, traj, q, r)
    drift = abs(n2T - nT) / max(nT, 1e-300)
    half = strichartz_norm(grid, t[::2], traj[..., ::2], q, r)
    finite = math.isfinite(n2T)
    verdict = "pass" if finite and drift < drift_tol else "fail"
    params = {"q": q, "r": r if math.isfinite(r) else "inf", "n": grid.n, "T": T, "step": step, "potential": V.name,
              "mode": grid.mode, "L": grid.L, "N": grid.N}
    extra = {"norm_T": nT, "norm_2T": n2T, "drift": drift, "norm_half_step": half,
             "defect": admissibility_defect(q, r, grid.n)}
    return EstimateReport("strichartz", params, t, vals, np.full_like(t, n2T), float("nan"), n2T, verdict,
                          time.perf_counter() - t0, extra)


# wrappers for the remaining checks ----------------------------------------------------
def _scalar_report(estimate_id, params, values: dict, verdict: str, t0: float) -> EstimateReport:
    keys = list(values)
    t = np.arange(len(keys), dtype=float)
    y = np.array([float(values[k]) for k in keys])
    return EstimateReport(estimate_id, params, t, y, np.full_like(t, np.nan), float("nan"), float("nan"), verdict,
                          time.perf_counter() - t0, {"rows": keys, **values})


def compactness_report(V: QuasiPeriodicPotential, T: float = 40.0, ell: float = 3.0, sizes=(64, 128), k_max: int = 10,
                       stability_tol: float = 1e-3, rank_max: int = 32, drift_tol: float = 0.05,
                       eta: float = 1.5, sigma: float = 1.5) -> EstimateReport:
    """Singular-value stability of C under basis doubling, its split and the weighted resolvent."""
    from .scattering import assemble_C, bound_states, harmonic_basis, split_C, weighted_resolvent_check

    t0 = time.perf_counter()
    spec = bound_states(V)
    big = harmonic_basis(V.grid, max(sizes), ell)
    sv, res, ranks, rnorm = {}, {}, {}, {}
    for m in sizes:
        C = assemble_C(V, big[:, :m], T, spectral=spec)
        sv[m] = C.singular_values()
        Cr, Cm = split_C(C, 0.01)
        rnorm[m] = float(np.linalg.norm(Cr.entries, 2))
        ranks[m] = int(np.sum(sv[m] >= 0.01))
        res[m] = weighted_resolvent_check(Cr, Cm, eta, sigma, V.grid).weighted_norm
    m0, m1 = sizes[0], sizes[-1]
    k = min(k_max + 1, sv[m0].size)
    stab = float(np.max(np.abs(sv[m0][:k] - sv[m1][:k])))
    drift = abs(res[m1] - res[m0]) / max(res[m0], 1e-300)
    ok = stab <= stability_tol and ranks[m0] <= rank_max and rnorm[m0] < 0.01 and math.isfinite(res[m1]) and drift < drift_tol
    values = {"sv_stability": stab, "rank": ranks[m0], "rank_large": ranks[m1], "remainder_norm": rnorm[m0],
              "resolvent_small": res[m0], "resolvent_large": res[m1], "resolvent_drift": drift}
    for j in range(k):
        values[f"sigma_{j}"] = float(sv[m1][j])
    params = {"potential": V.name, "T": T, "ell": ell, "sizes": list(sizes), "k_max": k_max, "eta": eta, "sigma": sigma,
              "mode": V.grid.mode, "n": V.grid.n, "L": V.grid.L, "N": V.grid.N}
    return _scalar_report("compactness", params, values, "pass" if ok else "fail", t0)


def floquet_identity_report(V: QuasiPeriodicPotential, t: float = 1.0, NFs=(6, 8), dt: float = 1e-2,
                            tolerance: float = 1e-4) -> EstimateReport:
    from .floquet import FloquetSystem, floquet_identity_check

    t0 = time.perf_counter()
    devs = {}
    for NF in NFs:
        sys = FloquetSystem(V.grid, V.frequencies, NF)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            devs[NF] = floquet_identity_check(V, sys, t, dt, tolerance=tolerance)
    d = [devs[NF] for NF in NFs]
    ok = d[0] < tolerance and all(b <= a for a, b in zip(d, d[1:]))
    params = {"potential": V.name, "t": t, "NF": list(NFs), "dt": dt, "tolerance": tolerance,
              "mode": V.grid.mode, "n": V.grid.n, "L": V.grid.L, "N": V.grid.N}
    return _scalar_report("floquet_identity", params, {f"deviation_NF{NF}": devs[NF] for NF in NFs},
                          "pass" if ok else "fail", t0)


def representation_report(V: QuasiPeriodicPotential, g: WaveFunction, horizons=(40.0, 80.0),
                          tolerance: float = 1e-2, engine: str = "spectral") -> EstimateReport:
    from .scattering import bound_states, representation_residual

    t0 = time.perf_counter()
    spec = bound_states(V)
    res = {T: representation_residual(V, g, T, spectral=spec, engine=engine).residual for T in horizons}
    r = [res[T] for T in horizons]
    ok = r[0] < tolerance and all(b < a for a, b in zip(r, r[1:]))
    params = {"potential": V.name, "horizons": list(horizons), "tolerance": tolerance, "engine": engine,
              "mode": V.grid.mode, "n": V.grid.n, "L": V.grid.L, "N": V.grid.N}
    return _scalar_report("representation", params, {f"residual_T{T:g}": res[T] for T in horizons},
                          "pass" if ok else "fail", t0)


ESTIMATES = (
    "high_energy",
    "pointwise_smoothing",
    "time_smoothing",
    "microlocal",
    "near_threshold",
    "local_decay",
    "strichartz",
    "compactness",
    "floquet_identity",
    "representation",
)
