"""Bound states, wave operators, the operator C and the representation formula."""

from __future__ import annotations

import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .dynamics import (
    PropagatorConfig,
    QuasiPeriodicPotential,
    _strang,
    free_evolve,
    potential_at,
    spectral_propagator,
)
from .errors import (
    ConfigurationError,
    DivergenceWarning,
    EigenSolverError,
    HorizonTooShortError,
    RankDeficiencyError,
    ThresholdEigenvalueError,
    ZeroModeError,
)
from .grid import Grid, WaveFunction, as_array
from .microlocal import OutgoingProjector, projector_array

EPS_GAP = 1e-6
DEFAULT_HORIZON = 40.0
TAIL_TOLERANCE = 1e-4


# bound states ----------------------------------------------------------------
@dataclass
class SpectralData:
    grid: Grid
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)  # columns, grid-normalized
    residuals: np.ndarray = field(repr=False, default=None)
    continuum_threshold: float = 0.0

    @property
    def eigenvectors(self) -> list[WaveFunction]:
        return [WaveFunction(self.grid, self.vectors[..., j]) for j in range(self.count)]

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    def project_bound(self, a: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(a, dtype=complex)
        g = self.grid
        V = self.vectors.reshape(-1, self.count)
        flat = np.asarray(a, dtype=complex).reshape(V.shape[0], -1)
        coef = g.weight * (V.conj().T @ flat)
        return (V @ coef).reshape(np.shape(a))

    def project_continuum(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        return a - self.project_bound(a)


def _hamiltonian_operator(V: QuasiPeriodicPotential):
    grid = V.grid
    shape = grid.shape
    size = int(np.prod(shape))

    def mv(x):
        a = x.reshape(shape)
        out = grid.free_multiplier(a, grid.free_energies).real + V.V0 * a
        return out.reshape(size)

    return spla.LinearOperator((size, size), matvec=mv, dtype=float)


def bound_states(V: QuasiPeriodicPotential, eps_gap: float = EPS_GAP) -> SpectralData:
    """Discrete spectrum of H0 + V0 below -eps_gap.

    One-dimensional grids use dense diagonalization.  Multi-dimensional
    cartesian grids use Lanczos on the lowest eigenvalues, widening the
    search until a non-negative eigenvalue is reached.
    """
    if not V.is_static:
        raise ConfigurationError("bound_states needs a static potential")
    grid = V.grid
    if grid.ndim == 1:
        H = grid.dense_free_hamiltonian() + np.diag(V.V0)
        E, Q = np.linalg.eigh(0.5 * (H + H.T))
        keep = E < 0
        E, Q = E[keep], Q[:, keep]
        res = np.linalg.norm(H @ Q - Q * E, axis=0)
    else:
        op = _hamiltonian_operator(V)
        k = 4
        while True:
            try:
                E, Q = spla.eigsh(op, k=k, which="SA", tol=1e-12, maxiter=20000)
            except spla.ArpackNoConvergence as exc:
                raise EigenSolverError("Lanczos did not converge", converged=len(exc.eigenvalues)) from exc
            if E.max() >= 0 or k >= 64:
                break
            k *= 2
        order = np.argsort(E)
        E, Q = E[order], Q[:, order]
        keep = E < 0
        E, Q = E[keep], Q[:, keep]
        res = np.array([np.linalg.norm(op.matvec(Q[:, j]) - E[j] * Q[:, j]) for j in range(E.size)])
    near = (E >= -eps_gap) & (E < 0)
    if np.any(near):
        raise ThresholdEigenvalueError(
            "discrete eigenvalue inside the threshold gap; potential rejected",
            eigenvalues=E[near].tolist(),
            eps_gap=eps_gap,
        )
    if np.any(res > 1e-8 * max(1.0, float(np.max(np.abs(E), initial=1.0)))):
        raise EigenSolverError("eigenpair residuals above tolerance", residuals=res.tolist())
    # grid normalization and a deterministic sign convention
    Q = Q / math.sqrt(grid.weight)
    for j in range(Q.shape[1]):
        i = np.argmax(np.abs(Q[:, j]))
        if Q[i, j] < 0:
            Q[:, j] = -Q[:, j]
    vectors = Q.reshape(grid.shape + (E.size,))
    return SpectralData(grid, E, vectors, res)


def project_continuum(spec: SpectralData, psi):
    out = spec.project_continuum(as_array(psi))
    return psi.like(out) if isinstance(psi, WaveFunction) else out


# engines -----------------------------------------------------------------------
class _Engine:
    """Evolution and Duhamel integrals on raw arrays for one potential."""

    def __init__(self, V: QuasiPeriodicPotential, cfg: PropagatorConfig | None, engine: str):
        self.V = V
        self.grid = V.grid
        self.cfg = cfg or PropagatorConfig(dt=default_dt(V.grid))
        if engine not in ("split", "spectral"):
            raise ConfigurationError(f"unknown engine {engine!r}")
        if engine == "spectral" and not (V.is_static and V.grid.ndim == 1):
            engine = "split"
        self.kind = engine
        if engine == "split":
            self.cfg.check(self.grid)
        else:
            self.prop = spectral_propagator(V)

    def evolve(self, a: np.ndarray, t0: float, t1: float) -> np.ndarray:
        if self.kind == "spectral":
            return self.prop.evolve(a, t1 - t0)
        return _strang(self.grid, a, t0, t1, self.V, self.cfg.dt)

    def duhamel(self, f: np.ndarray, T: float) -> np.ndarray:
        """int_0^T U(0, u) V(u) exp(-iuH0) f du, with U(0, u) the full propagator."""
        if self.kind == "spectral":
            return self.prop.duhamel(f, T)
        return _duhamel_split(self.grid, self.V, f, T, self.cfg.dt)


def default_dt(grid: Grid) -> float:
    """Largest step of the form 10^-k / {1, 2, 5} with dt * xi_max^2 <= 1."""
    lim = 1.0 / grid.max_free_energy
    for dt in (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4):
        if dt <= lim:
            return dt
    return lim


def _duhamel_split(grid: Grid, V: QuasiPeriodicPotential, f: np.ndarray, T: float, dt: float) -> np.ndarray:
    """Trapezoid rule in u with Horner accumulation of Strang steps.

    Nodes u_k = k * D, D = T / K.  Working in H0 coefficients, each step
    costs one batched inverse and one batched forward transform.
    """
    if T == 0:
        return np.zeros_like(f, dtype=complex)
    K = max(1, int(math.ceil(abs(T) / dt - 1e-9)))
    D = T / K
    lam = grid.free_energies
    fh = grid.to_free(np.asarray(f, dtype=complex))
    B = fh.reshape(fh.shape[: grid.ndim] + (-1,)).shape[-1]
    fh = fh.reshape(grid.shape + (B,))
    half = grid.expand(np.exp(1j * (D / 2) * lam), fh)  # K(-D/2)
    static = V.is_static

    def free_at(u):
        return fh * grid.expand(np.exp(-1j * u * lam), fh)

    def pot(u):
        return V.V0 if static else potential_at(V, u)

    y = grid.from_free(free_at(K * D))
    c = grid.to_free(grid.expand(pot(K * D), y) * y) * (D / 2)
    for k in range(K - 1, -1, -1):
        u = k * D
        c *= half
        X = grid.from_free(np.concatenate([c, free_at(u)], axis=-1))
        mid = (k + 0.5) * D
        w = D / 2 if k == 0 else D
        X[..., :B] *= grid.expand(np.exp(1j * D * pot(mid)), X[..., :B])
        X[..., B:] *= grid.expand(w * pot(u), X[..., B:])
        Xh = grid.to_free(X)
        c = Xh[..., :B] * half + Xh[..., B:]
    out = grid.from_free(c)
    return out.reshape(np.shape(f))


def _tail_estimate(grid: Grid, V: QuasiPeriodicPotential, f: np.ndarray, T: float, samples: int = 65) -> np.ndarray:
    """int_T^{2T} ||V(u) exp(-iuH0) f|| du per column (trapezoid)."""
    us = np.linspace(abs(T), 2 * abs(T), samples)
    sgn = 1.0 if T >= 0 else -1.0
    vals = []
    for u in us:
        a = free_evolve(f, sgn * u, grid)
        Vu = V.V0 if V.is_static else potential_at(V, sgn * u)
        vals.append(grid.norm(grid.expand(Vu, a) * a))
    return np.trapezoid(np.array(vals), us, axis=0)


# wave operators --------------------------------------------------------------------
@dataclass
class CookResult:
    state: WaveFunction
    tail: float
    horizon: float
    direction: int


def _direction(direction) -> int:
    if direction in (1, "+", "plus"):
        return 1
    if direction in (-1, "-", "minus"):
        return -1
    raise ConfigurationError(f"direction must be + or -, got {direction!r}")


def cook_wave_operator(
    V: QuasiPeriodicPotential,
    f: WaveFunction,
    T: float = DEFAULT_HORIZON,
    direction=+1,
    cfg: PropagatorConfig | None = None,
    engine: str = "split",
    tail_tolerance: float | None = TAIL_TOLERANCE,
) -> CookResult:
    """Omega_+- f ~ f + i int_0^{+-T} U(0,u) V(u) exp(-iuH0) f du."""
    if not T > 0:
        raise ConfigurationError("horizon must be positive", T=T)
    d = _direction(direction)
    grid = f.grid
    a = f.amplitudes
    nrm = float(np.max(grid.norm(a)))
    tail = float(np.max(_tail_estimate(grid, V, a, d * T))) / max(nrm, 1e-300)
    if tail_tolerance is not None and tail > tail_tolerance:
        raise HorizonTooShortError("Cook tail above tolerance", tail=tail, tolerance=tail_tolerance, T=T)
    eng = _Engine(V, cfg, engine)
    out = a + 1j * eng.duhamel(a, d * T)
    return CookResult(f.like(out), tail, T, d)


@dataclass
class AdjointResult:
    state: WaveFunction
    gaps: tuple[float, float]  # ||out(T/2) - out(T/4)||, ||out(T) - out(T/2)||
    horizon: float
    direction: int


def _adjoint_array(eng: _Engine, spec: SpectralData, a: np.ndarray, T: float, d: int) -> np.ndarray:
    b = spec.project_continuum(a)
    b = eng.evolve(b, 0.0, d * T)
    return free_evolve(b, -d * T, eng.grid)


def adjoint_wave_operator(
    V: QuasiPeriodicPotential,
    psi: WaveFunction,
    T: float = DEFAULT_HORIZON,
    direction=+1,
    spectral: SpectralData | None = None,
    cfg: PropagatorConfig | None = None,
    engine: str = "split",
    monitor: bool = True,
) -> AdjointResult:
    """Omega*_{+-,T} psi = exp(+-iTH0) exp(-+iTH) P_c psi."""
    if not V.is_static:
        raise ConfigurationError("adjoint_wave_operator needs a static potential; see floquet.dynamic_adjoint")
    d = _direction(direction)
    spec = spectral if spectral is not None else bound_states(V)
    eng = _Engine(V, cfg, engine)
    grid = psi.grid
    b = spec.project_continuum(psi.amplitudes)
    if not monitor:
        out = free_evolve(eng.evolve(b, 0.0, d * T), -d * T, grid)
        return AdjointResult(psi.like(out), (float("nan"), float("nan")), T, d)
    outs = []
    t_prev = 0.0
    for frac in (0.25, 0.5, 1.0):
        t = d * T * frac
        b = eng.evolve(b, t_prev, t)
        t_prev = t
        outs.append(free_evolve(b, -t, grid))
    g1 = float(np.max(grid.norm(outs[1] - outs[0])))
    g2 = float(np.max(grid.norm(outs[2] - outs[1])))
    if g2 > g1:
        warnings.warn(
            f"adjoint wave operator not Cauchy at T={T}: gaps {g1:.3e} -> {g2:.3e}",
            DivergenceWarning,
            stacklevel=2,
        )
    return AdjointResult(psi.like(outs[2]), (g1, g2), T, d)


# resolvent and Born series ------------------------------------------------------------
def free_resolvent(psi):
    """H0^{-1} psi (cartesian: zero mode must be negligible and is removed)."""
    grid = psi.grid if isinstance(psi, WaveFunction) else None
    a = as_array(psi)
    out = _free_resolvent_array(grid, a)
    return psi.like(out)


def _free_resolvent_array(grid: Grid, a: np.ndarray) -> np.ndarray:
    lam = grid.free_energies
    c = grid.to_free(np.asarray(a, dtype=complex))
    zero = lam <= 1e-14 * max(1.0, float(np.max(lam)))
    if np.any(zero):
        cz = c[zero] if c.ndim == lam.ndim else c[zero, ...]
        total = np.sqrt(np.sum(np.abs(c) ** 2))
        if np.sqrt(np.sum(np.abs(cz) ** 2)) > 1e-8 * max(total, 1e-300):
            raise ZeroModeError("input has non-negligible zero-frequency mass", ratio=float(np.sqrt(np.sum(np.abs(cz) ** 2)) / total))
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, lam))
    c *= grid.expand(inv, c)
    return grid.from_free(c)


def apply_free_hamiltonian(psi):
    grid = psi.grid
    return psi.like(grid.free_multiplier(psi.amplitudes, grid.free_energies))


def dense_free_resolvent(grid: Grid) -> np.ndarray:
    if grid.ndim != 1:
        raise ConfigurationError("dense resolvent needs a one-dimensional grid")
    lam = grid.free_energies
    inv = np.where(lam > 1e-14, 1.0 / np.where(lam > 1e-14, lam, 1.0), 0.0)
    if grid.mode == "radial":
        Q = grid.free_basis()
        return (Q * inv) @ Q.T
    F = np.fft.fft(np.eye(grid.N), axis=0)
    return np.fft.ifft(inv[:, None] * F, axis=0).real


def born_inverse(V: QuasiPeriodicPotential, g, method: str = "solve", tol: float = 1e-14, max_terms: int = 2000):
    """(1 + V H0^{-1})^{-1} g by direct solve or truncated Neumann series."""
    grid = V.grid
    a = as_array(g)
    if method == "solve":
        Rm = dense_free_resolvent(grid)
        Mx = np.eye(Rm.shape[0]) + V.V0[:, None] * Rm
        out = np.linalg.solve(Mx, a.reshape(a.shape[0], -1)).reshape(a.shape)
    elif method == "neumann":
        term = np.asarray(a, dtype=complex)
        out = term.copy()
        ref = float(np.max(grid.norm(term)))
        for _ in range(max_terms):
            term = -grid.expand(V.V0, term) * _free_resolvent_array(grid, term)
            out += term
            size = float(np.max(grid.norm(term)))
            if size <= tol * ref:
                break
            if not np.isfinite(size) or size > 1e6 * ref:
                raise ConfigurationError("Neumann series diverges; ||V H0^-1|| too large")
        else:
            raise ConfigurationError("Neumann series did not converge", terms=max_terms)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return g.like(out) if isinstance(g, WaveFunction) else out


@dataclass
class RepresentationResult:
    residual: float
    lhs: WaveFunction
    rhs: WaveFunction
    horizon: float


def representation_residual(
    V: QuasiPeriodicPotential,
    g: WaveFunction,
    T: float = DEFAULT_HORIZON,
    direction=+1,
    spectral: SpectralData | None = None,
    cfg: PropagatorConfig | None = None,
    engine: str = "split",
) -> RepresentationResult:
    """||Omega* g - [f - i H0 Omega* int_0^T U(0,u) V exp(-iuH0) H0^{-1} f du]|| / ||g||.

    f = (1 + V H0^{-1})^{-1} g.  Both sides are evaluated on P_c g (the
    adjoint wave operator already factors through P_c), at horizon T.
    """
    if V.grid.mode != "radial":
        raise ConfigurationError("representation_residual runs on radial grids")
    d = _direction(direction)
    spec = spectral if spectral is not None else bound_states(V)
    grid = g.grid
    eng = _Engine(V, cfg, engine)
    gc = spec.project_continuum(g.amplitudes)
    lhs = _adjoint_array(eng, spec, gc, T, d)
    f = born_inverse(V, gc)
    h = _free_resolvent_array(grid, f)
    J = eng.duhamel(h, d * T)
    OJ = _adjoint_array(eng, spec, J, T, d)
    rhs = f - 1j * grid.free_multiplier(OJ, grid.free_energies)
    res = float(grid.norm(lhs - rhs) / max(grid.norm(g.amplitudes), 1e-300))
    return RepresentationResult(res, g.like(lhs), g.like(rhs), T)


# the operator C -----------------------------------------------------------------------
@dataclass
class OperatorMatrix:
    basis: np.ndarray = field(repr=False)  # columns, grid-orthonormal (may be None after I/O)
    entries: np.ndarray
    label: str = ""

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)


def harmonic_basis(grid: Grid, m: int, ell: float) -> np.ndarray:
    """Lowest m eigenvectors of H0 + |x|^2 / ell^4 (grid-orthonormal columns)."""
    if grid.ndim != 1:
        raise ConfigurationError("harmonic basis is built on one-dimensional grids")
    H = grid.dense_free_hamiltonian() + np.diag(grid.radius**2 / ell**4)
    E, Q = sla.eigh(0.5 * (H + H.T), subset_by_index=[0, m - 1])
    for j in range(m):
        i = np.argmax(np.abs(Q[:, j]))
        if Q[i, j] < 0:
            Q[:, j] = -Q[:, j]
    return Q / math.sqrt(grid.weight)


def basis_ell(m_max: int, band: float) -> float:
    """Oscillator length so that the m_max-th mode has momentum about ``band``."""
    return math.sqrt(2 * m_max + 1) / band


def assemble_C(
    V: QuasiPeriodicPotential,
    basis: np.ndarray,
    T: float = DEFAULT_HORIZON,
    proj: OutgoingProjector | None = None,
    spectral: SpectralData | None = None,
    cfg: PropagatorConfig | None = None,
    engine: str = "spectral",
) -> OperatorMatrix:
    """Matrix of C = P+ (1 - Omega+*) + P- (1 - Omega-*) on an orthonormal basis.

    Uses 1 - Omega* = Omega* (Omega - 1) on the scattering subspace, i.e.
    C_1 b = P+ Omega*_{+,T} (i int_0^T U(0,u) V exp(-iuH0) b du), and the
    mirror expression for C_2.
    """
    grid = V.grid
    if grid.ndim != 1:
        raise ConfigurationError("assemble_C needs a one-dimensional grid")
    if not V.is_static:
        raise ConfigurationError("assemble_C needs a static potential")
    spec = spectral if spectral is not None else bound_states(V)
    eng = _Engine(V, cfg, engine)
    B = np.asarray(basis, dtype=complex)
    Z = {}
    for d in (1, -1):
        Y = 1j * eng.duhamel(B, d * T)
        Z[d] = _adjoint_array(eng, spec, Y, T, d)
    if proj is None:
        proj = projector_for_inputs(grid, np.concatenate([Z[1], Z[-1], B], axis=1))
    CB = projector_array(grid, proj, Z[1], "+") + projector_array(grid, proj, Z[-1], "-")
    entries = grid.weight * (B.conj().T @ CB)
    return OperatorMatrix(basis, entries, f"C:{V.name}:m={B.shape[1]}:T={T}")


def projector_for_inputs(grid: Grid, a: np.ndarray, tail: float = 1e-10, M: float = 0.0, R: float = 4.0) -> OutgoingProjector:
    """Projector whose node spacing resolves the phase-space extent of ``a``."""
    from .microlocal import _mass_profiles, _quantile_radius

    space, freq = _mass_profiles(grid, a)
    A = 1.25 * _quantile_radius(space, tail) * _quantile_radius(freq, tail) + abs(M)
    hw = min(0.1, math.pi * R / max(A, 1e-12))
    hw = math.floor(hw * 1e4) / 1e4
    return OutgoingProjector(M=M, R=R, hw=hw)


def _basis_band(grid: Grid, basis: np.ndarray) -> float:
    """Frequency radius holding all but 1e-14 of the basis mass."""
    c = np.abs(grid.to_free(np.asarray(basis, dtype=complex))) ** 2
    mass = c.sum(axis=1)
    k = np.sqrt(np.maximum(grid.free_energies, 0))
    order = np.argsort(k)
    tail = np.cumsum(mass[order][::-1])[::-1] / mass.sum()
    idx = np.searchsorted(-tail, -1e-14)
    return float(max(k[order][min(idx, k.size - 1)], grid.frequency_spacing))


def compactness_probe(V: QuasiPeriodicPotential, sizes=(64, 128), T: float = DEFAULT_HORIZON, band: float = 1.5, **kw):
    """Leading singular values of C on nested harmonic bases of growing size."""
    ell = basis_ell(max(sizes), band)
    big = harmonic_basis(V.grid, max(sizes), ell)
    out = {}
    for m in sizes:
        out[m] = assemble_C(V, big[:, :m], T, **kw).singular_values()
    return out


def split_C(Cmat: OperatorMatrix, threshold: float = 0.01):
    """C = C_r + C_m with C_m the SVD truncation keeping sigma >= threshold."""
    U, s, Vh = np.linalg.svd(Cmat.entries)
    r = int(np.sum(s >= threshold))
    if r == s.size and s.size > 0 and s[-1] >= threshold:
        raise RankDeficiencyError("no truncation rank reaches the threshold; enlarge the basis", threshold=threshold, smallest=float(s[-1]))
    Cm = (U[:, :r] * s[:r]) @ Vh[:r]
    Cr = Cmat.entries - Cm
    return (
        OperatorMatrix(Cmat.basis, Cr, Cmat.label + ":r"),
        OperatorMatrix(Cmat.basis, Cm, Cmat.label + ":m"),
    )


@dataclass
class ResolventReport:
    weighted_norm: float
    inverse_norm: float
    neumann_defect: float
    eta: float
    sigma: float
    rank: int


def weighted_resolvent_check(C_r: OperatorMatrix, C_m: OperatorMatrix, eta: float, sigma: float, grid: Grid | None = None) -> ResolventReport:
    """|| <x>^-eta (1 - C_r)^-1 C_r <x>^sigma || restricted to the basis window."""
    Cr = C_r.entries
    m = Cr.shape[0]
    nr = np.linalg.norm(Cr, 2) if m else 0.0
    if nr >= 1:
        raise ConfigurationError("weighted_resolvent_check needs ||C_r|| < 1", norm=float(nr))
    eye = np.eye(m)
    X = np.linalg.solve(eye - Cr, eye)
    defect = float(np.max(np.abs(X - (eye + X @ Cr)), initial=0.0))
    if C_r.basis is not None and grid is not None:
        B = np.asarray(C_r.basis)
        wgt = np.sqrt(1 + grid.radius**2)
        Wm = grid.weight * (B.conj().T @ (wgt[:, None] ** (-eta) * B))
        Wp = grid.weight * (B.conj().T @ (wgt[:, None] ** sigma * B))
    else:
        Wm = Wp = eye
    val = float(np.linalg.norm(Wm @ X @ Cr @ Wp, 2)) if m else 0.0
    rank = int(np.linalg.matrix_rank(C_m.entries, tol=1e-12)) if m else 0
    return ResolventReport(val, float(np.linalg.norm(X, 2)) if m else 0.0, defect, eta, sigma, rank)


# OPMX1 container ----------------------------------------------------------------------
OPMX_MAGIC = b"OPMX1"


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_opmx(path, op: OperatorMatrix) -> None:
    """Magic, <u4 rows, <u4 cols, <u4 label bytes, label, row-major <c8 entries."""
    rows, cols = op.entries.shape
    label = op.label.encode("utf-8")
    head = OPMX_MAGIC + struct.pack("<III", rows, cols, len(label)) + label
    body = np.ascontiguousarray(op.entries, dtype="<c8").tobytes(order="C")
    _atomic_write(Path(path), head + body)


def read_opmx(path) -> OperatorMatrix:
    raw = Path(path).read_bytes()
    if raw[:5] != OPMX_MAGIC:
        raise ConfigurationError("not an OPMX1 container", path=str(path))
    rows, cols, nlab = struct.unpack_from("<III", raw, 5)
    off = 5 + 12
    label = raw[off : off + nlab].decode("utf-8")
    off += nlab
    data = np.frombuffer(raw, dtype="<c8", count=rows * cols, offset=off).reshape(rows, cols)
    return OperatorMatrix(None, data.astype(complex), label)
