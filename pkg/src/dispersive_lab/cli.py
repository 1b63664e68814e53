"""Command-line entry point: dispersive-lab <evolve|verify|reproduce-all>."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import errors
from .dynamics import Component, QuasiPeriodicPotential, preset
from .grid import Grid, WaveFunction, gaussian_packet, japanese, make_grid

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 2, 3, 4
USAGE_ERRORS = (
    errors.ConfigurationError,
    errors.ScenarioError,
    errors.AdmissibilityError,
    errors.DomainOverflowError,
    errors.HorizonTooShortError,
    errors.TruncationError,
)
VERDICT_EXIT = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


# scenarios ------------------------------------------------------------------------
def schema() -> dict:
    text = resources.files("dispersive_lab").joinpath("scenarios/scenario.schema.json").read_text()
    return json.loads(text)


def shipped_scenario(name: str) -> Path:
    return Path(str(resources.files("dispersive_lab").joinpath(f"scenarios/{name}.json")))


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        parts += missing[:1]
    elif err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        parts += extra[:1]
    return ".".join(parts) or "<root>"


def load_scenario(path) -> dict:
    """Parse and validate a scenario file; raises ScenarioError naming the offending path."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise errors.ScenarioError("scenario file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise errors.ScenarioError("scenario is not valid JSON", path=str(path), detail=str(exc)) from None
    validator = jsonschema.Draft202012Validator(schema())
    errs = sorted(validator.iter_errors(data), key=lambda e: (len(list(e.absolute_path)), _error_path(e)))
    if errs:
        e = errs[0]
        raise errors.ScenarioError(f"scenario violates the schema: {e.message}", path=_error_path(e))
    return data


def build_grid(sc: dict) -> Grid:
    g = sc["grid"]
    return make_grid(g["mode"], g["n"], float(g["L"]), g["N"])


def build_potential(sc: dict, grid: Grid) -> QuasiPeriodicPotential:
    p = sc["potential"]
    if "preset" in p:
        V = preset(p["preset"], grid)
        if "delta" in p:
            V = QuasiPeriodicPotential(grid, V.V0, V.components, float(p["delta"]), V.name)
    else:
        inl = p["inline"]
        shape = grid.shape

        def field_(vals, where):
            arr = np.asarray(vals, dtype=float)
            if arr.size != int(np.prod(shape)):
                raise errors.ScenarioError("inline table does not match the grid", path=where, size=arr.size)
            return arr.reshape(shape)

        comps = tuple(
            Component(field_(c["V"], f"potential.inline.components.{i}.V"), float(c["omega"]),
                      c.get("phase", "sin"), float(c.get("offset", 0.0)))
            for i, c in enumerate(inl.get("components", []))
        )
        V = QuasiPeriodicPotential(grid, field_(inl["V0"], "potential.inline.V0"), comps,
                                   float(p.get("delta", 8.0)), "inline")
    V.check_localization()
    return V


def build_initial(spec: dict | None, V: QuasiPeriodicPotential) -> WaveFunction:
    grid = V.grid
    spec = spec or {"kind": "packet"}
    kind = spec["kind"]
    if kind == "packet":
        centre = spec.get("center", 10.0 if grid.mode == "radial" else 0.0)
        psi = gaussian_packet(grid, centre, spec.get("width", 2.0), spec.get("momentum", 0.0)).normalized()
    elif kind == "log_gaussian":
        from .microlocal import log_gaussian_packet

        psi = log_gaussian_packet(grid, spec.get("center", 2.0), spec.get("width", 0.25), spec.get("momentum", 0.0))
    else:
        from .scattering import bound_states

        spec_b = bound_states(V.static_part())
        idx = spec.get("index", 0)
        if idx >= spec_b.count:
            raise errors.ScenarioError("no bound state with that index", path="run.initial.index", count=spec_b.count)
        psi = spec_b.eigenvectors[idx]
    if "cook_horizon" in spec:
        from .scattering import cook_wave_operator

        psi = cook_wave_operator(V, psi, float(spec["cook_horizon"]), +1).state
    return psi


# evolve ---------------------------------------------------------------------------
def trajectory_csv(times, norms, weighted) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["t", "norm", "weighted_norm"])
    for row in zip(times, norms, weighted):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue().encode("utf-8")


def cmd_evolve(sc: dict, out: Path, seed: int) -> int:
    from .scattering import _atomic_write, default_dt
    from .verify import _trajectory

    grid = build_grid(sc)
    V = build_potential(sc, grid)
    run = sc["run"]
    psi = build_initial(run.get("initial"), V)
    times = np.array(sorted(set(float(t) for t in run.get("times", [0.0, 1.0, 2.0]))))
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    eta = float(run.get("eta", 1.5))
    engine = run.get("engine", "spectral" if V.is_static and grid.ndim == 1 else "split")
    dt = None if engine == "spectral" else float(run.get("dt", default_dt(grid)))
    traj = _trajectory(V, psi.amplitudes, times, dt)
    norms = grid.norm(traj)
    w = japanese(grid.radius) ** (-eta)
    weighted = grid.norm(grid.expand(w, traj) * traj)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "trajectory.csv", trajectory_csv(times, norms, weighted))
    formats = sc.get("output", {}).get("formats", ["csv"])
    if run.get("snapshots") or "npz" in formats:
        buf = io.BytesIO()
        np.savez(buf, t=times, amplitudes=traj)
        _atomic_write(out / "snapshots.npz", buf.getvalue())
    meta = {"command": "evolve", "engine": engine, "dt": dt, "eta": eta, "samples": int(times.size),
            "potential": V.name, "seed": seed}
    _atomic_write(out / "trajectory.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    return EXIT_PASS


# verify ---------------------------------------------------------------------------
def _exponent(x) -> float:
    if isinstance(x, str):
        if x.lower() in ("inf", "infinity"):
            return math.inf
        raise errors.ScenarioError("exponents are numbers or 'inf'", path="run.params", value=x)
    return float(x)


def run_estimate(estimate: str, sc: dict, seed: int):
    from . import verify as vf

    grid = build_grid(sc)
    run = sc["run"]
    p = dict(run.get("params", {}))
    win = tuple(p["window"]) if "window" in p else None
    if estimate in ("high_energy", "pointwise_smoothing", "near_threshold", "time_smoothing", "microlocal"):
        if estimate == "high_energy":
            return vf.estimate_high_energy(grid, p.get("delta", 2.0), p.get("c", 1.0), p["t_samples"],
                                           p.get("sign", "+"), seed, win, p.get("tolerance", 0.25))
        if estimate == "pointwise_smoothing":
            return vf.estimate_pointwise_smoothing(grid, p.get("delta", 2.0), p.get("c", 1.0), p.get("l", 1.0),
                                                   p.get("v", 0.5), p["t_samples"], p.get("sign", "+"), seed, win,
                                                   p.get("tolerance", 0.3))
        if estimate == "near_threshold":
            return vf.estimate_near_threshold(grid, p.get("delta", 3.0), p.get("eps", 0.1), p["t_samples"],
                                              p.get("filtered"), p.get("sign", "+"), seed, win, p.get("tolerance", 0.2))
        if estimate == "time_smoothing":
            return vf.estimate_time_smoothing(grid, p.get("delta", 3.0), p.get("c", 1.0), p.get("intervals", 16),
                                              p.get("sign", "+"), seed)
        return vf.estimate_microlocal_decay(grid, p.get("delta", 1.1), p.get("T", 40.0), p.get("sign", "+"), seed,
                                            p.get("step", 0.25))
    V = build_potential(sc, grid)
    if estimate == "strichartz":
        q, r = _exponent(p.get("q", 2.0)), _exponent(p.get("r", 6.0))
        vf.check_admissible(q, r, grid.n)
        psi = build_initial(run.get("initial"), V)
        return vf.estimate_strichartz(V, psi, q, r, p.get("T", 40.0), p.get("step", 0.5), p.get("dt"))
    if estimate == "local_decay":
        psi = build_initial(run.get("initial"), V)
        return vf.local_decay(V, psi, p.get("eta", 1.5), p.get("T", 80.0), p.get("step", 0.5), p.get("dt"))
    if estimate == "compactness":
        return vf.compactness_report(V, p.get("T", 40.0), p.get("ell", 3.0), tuple(p.get("sizes", (64, 128))))
    if estimate == "floquet_identity":
        return vf.floquet_identity_report(V, p.get("t", 1.0), tuple(p.get("NF", (6, 8))), p.get("dt", 1e-2))
    if estimate == "representation":
        psi = build_initial(run.get("initial"), V)
        return vf.representation_report(V, psi, tuple(p.get("horizons", (40.0, 80.0))), p.get("tolerance", 1e-2))
    raise errors.ScenarioError(f"unknown estimate {estimate!r}", path="estimate", known=list(vf.ESTIMATES))


def cmd_verify(sc: dict, estimate: str, out: Path, seed: int) -> int:
    rep = run_estimate(estimate, sc, seed)
    rep.write(out, estimate)
    print(json.dumps({"estimate": estimate, "verdict": rep.verdict, "fitted_exponent": _finite(rep.fitted_exponent),
                      "bound_constant": _finite(rep.bound_constant)}))
    return VERDICT_EXIT[rep.verdict]


def _finite(x):
    return float(x) if x is not None and math.isfinite(x) else None


# reproduce-all ----------------------------------------------------------------------
def cmd_reproduce_all(out: Path, seed: int, only, jobs: int) -> int:
    from .acceptance import reproduce_all

    t0 = time.perf_counter()
    rows = reproduce_all(out, seed=seed, only=only, jobs=jobs, log=lambda s: print(s, flush=True))
    wall = time.perf_counter() - t0
    for r in rows:
        if jobs > 1:
            print(f"criterion {r.criterion:2d} {r.verdict.upper():4s} {r.runtime:8.1f}s  {r.name}")
    print(f"wall clock {wall:.1f}s, {sum(r.verdict == 'pass' for r in rows)}/{len(rows)} passed")
    return EXIT_PASS if all(r.verdict == "pass" for r in rows) else EXIT_FAIL


# main -------------------------------------------------------------------------------
def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dispersive-lab", description="Dispersive-estimate laboratory")
    ap.add_argument("command", choices=["evolve", "verify", "reproduce-all"])
    ap.add_argument("estimate", nargs="?", help="estimate id for verify")
    ap.add_argument("--scenario", type=Path)
    ap.add_argument("--estimate", dest="estimate_opt")
    ap.add_argument("--only", action="append", help="tag filter for reproduce-all (repeatable)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    return ap


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    from .verify import ESTIMATES

    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            _emit({"code": "usage", "message": "invalid command line"})
        return EXIT_USAGE if exc.code else EXIT_PASS
    if not 0 <= args.seed < 2**64:
        _emit({"code": "usage", "message": "seed must be an unsigned 64-bit integer", "seed": args.seed})
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "reproduce-all":
                return cmd_reproduce_all(args.out or Path("reproduce-out"), args.seed, args.only, max(1, args.jobs))
            if args.command == "verify":
                estimate = args.estimate_opt or args.estimate
                sc_path = args.scenario
                if estimate is None and sc_path is not None:
                    estimate = load_scenario(sc_path)["run"].get("estimate")
                if estimate not in ESTIMATES:
                    raise errors.ScenarioError(f"unknown estimate {estimate!r}", path="estimate",
                                               known=list(ESTIMATES))
                sc = load_scenario(sc_path or shipped_scenario(estimate))
                return cmd_verify(sc, estimate, args.out or Path("verify-out"), args.seed)
            if args.scenario is None:
                raise errors.ScenarioError("evolve needs --scenario", path="--scenario")
            sc = load_scenario(args.scenario)
            if sc["run"]["kind"] != "evolve":
                raise errors.ScenarioError("scenario run.kind must be 'evolve'", path="run.kind")
            out = args.out or Path(sc.get("output", {}).get("directory", "evolve-out"))
            return cmd_evolve(sc, out, args.seed)
    except USAGE_ERRORS as exc:
        _emit(exc.to_payload())
        return EXIT_USAGE
    except errors.LabError as exc:
        _emit(exc.to_payload())
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
