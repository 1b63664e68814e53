"""Floquet lift of quasi-periodic dynamics on a truncated frequency lattice.

A function of (x, s) with s on the torus is stored by its Fourier modes
psi_n(x), n in {-N_F..N_F}^N, as an array of shape ``base.shape +
lattice_shape`` (optionally with trailing batch axes).  Mode n carries the
torus factor exp(i sum_j n_j omega_j s_j).
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import PropagatorConfig, QuasiPeriodicPotential, _strang, free_evolve, step_sizes
from .errors import ConfigurationError, DivergenceWarning, EigenSolverError, TruncationError, TruncationWarning
from .grid import CutoffProfile, Grid, WaveFunction, gaussian_packet, japanese
from .microlocal import phase_space_cutoff

MEMORY_BUDGET = 2**26  # complex entries in one lattice state
LATTICE_TAIL = 1e-6
LATTICE_TAIL_FATAL = 1e-3
SPATIAL_TAIL = 1e-2  # weighted mass beyond half the box; multi-photon channels carry ~1e-3
FOLD_TOL = 1e-6


@dataclass(frozen=True)
class FloquetSystem:
    base: Grid
    frequencies: tuple[float, ...] = (1.0, math.sqrt(2.0))
    NF: int = 6
    memory_budget: int = MEMORY_BUDGET

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if not freqs:
            raise ConfigurationError("a Floquet system needs at least one frequency")
        if any(w == 0 or not math.isfinite(w) for w in freqs):
            raise ConfigurationError("frequencies must be finite and nonzero", frequencies=freqs)
        if int(self.NF) != self.NF or self.NF < 1:
            raise ConfigurationError("N_F must be a positive integer", NF=self.NF)
        if self.size > self.memory_budget:
            raise ConfigurationError(
                "lattice times grid exceeds the memory budget",
                size=self.size,
                budget=self.memory_budget,
            )

    @property
    def M(self) -> int:
        return 2 * self.NF + 1

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        return (self.M,) * len(self.frequencies)

    @property
    def lattice(self) -> np.ndarray:
        """All index vectors n, shape (M^N, N), in C order of lattice_shape."""
        ax = np.arange(-self.NF, self.NF + 1)
        mesh = np.meshgrid(*([ax] * len(self.frequencies)), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def lattice_energy(self) -> np.ndarray:
        """sum_j n_j omega_j over the lattice, shape lattice_shape."""
        return (self.lattice @ np.asarray(self.frequencies)).reshape(self.lattice_shape)

    @property
    def boundary(self) -> np.ndarray:
        """Mask of lattice points with some |n_j| = N_F."""
        return (np.abs(self.lattice).max(axis=1) == self.NF).reshape(self.lattice_shape)

    @property
    def origin(self) -> tuple[int, ...]:
        return (self.NF,) * len(self.frequencies)

    @property
    def size(self) -> int:
        return int(np.prod(self.base.shape)) * self.M ** len(self.frequencies)

    def with_NF(self, NF: int) -> "FloquetSystem":
        return replace(self, NF=NF)

    def with_base(self, base: Grid) -> "FloquetSystem":
        return replace(self, base=base)


def _coupling_matrix(M: int, cplus: complex) -> np.ndarray:
    """(T psi)_n = cplus psi_{n-1} + conj(cplus) psi_{n+1} on modes -N_F..N_F."""
    T = np.zeros((M, M), dtype=complex)
    idx = np.arange(M - 1)
    T[idx + 1, idx] = cplus
    T[idx, idx + 1] = np.conj(cplus)
    return T


def _along(A: np.ndarray, a: np.ndarray, axis: int) -> np.ndarray:
    """Apply the matrix A along one axis of a."""
    out = np.tensordot(A, a, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


class FloquetOperator:
    """K = H0 + sum_j n_j omega_j + V0 + sum_j V_j (x) T_j on the truncated lattice."""

    def __init__(self, V: QuasiPeriodicPotential, sys: FloquetSystem):
        if V.grid != sys.base:
            raise ConfigurationError("potential and Floquet system live on different grids")
        freqs = np.asarray(sys.frequencies)
        comps = []
        for c in V.components:
            hit = np.flatnonzero(np.abs(freqs - c.omega) <= 1e-12 * max(1.0, abs(c.omega)))
            if hit.size != 1:
                raise ConfigurationError(
                    "component frequency not on the Floquet lattice",
                    omega=c.omega,
                    frequencies=list(sys.frequencies),
                )
            j = int(hit[0])
            rot = np.exp(1j * c.omega * c.offset)
            cplus = rot / 2j if c.phase == "sin" else rot / 2
            comps.append((j, c.V, cplus))
        if len({j for j, _, _ in comps}) != len(comps):
            raise ConfigurationError("two components share a lattice frequency")
        self.V = V
        self.sys = sys
        self.grid = sys.base
        self.couplings = comps
        M = sys.M
        self.T = [_coupling_matrix(M, cp) for _, _, cp in comps]
        self._eig = [np.linalg.eigh(T) for T in self.T]

    # structure -------------------------------------------------------------
    def _lattice_axis(self, j: int) -> int:
        return self.grid.ndim + j

    def _lat(self, f: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Broadcast a lattice-shaped field against a state array."""
        bd = self.grid.ndim
        nl = len(self.sys.frequencies)
        return f.reshape((1,) * bd + f.shape + (1,) * (a.ndim - bd - nl))

    def _space(self, f: np.ndarray, a: np.ndarray) -> np.ndarray:
        return f.reshape(f.shape + (1,) * (a.ndim - f.ndim))

    def matvec(self, a: np.ndarray) -> np.ndarray:
        g = self.grid
        a = np.asarray(a, dtype=complex)
        out = g.free_multiplier(a, g.free_energies)
        out += self._lat(self.sys.lattice_energy, a) * a
        out += self._space(self.V.V0, a) * a
        for (j, Vj, _), T in zip(self.couplings, self.T):
            out += self._space(Vj, a) * _along(T, a, self._lattice_axis(j))
        return out

    def hermiticity_defect(self) -> float:
        """max |K - K^H| over entries, from the tensor structure of K.

        K is a sum of H0 (x) 1, diagonal terms and real fields tensored with
        the T_j, so the entrywise defect is the largest defect among the
        factors.
        """
        defect = 0.0
        if self.grid.ndim == 1:
            H = self.grid.dense_free_hamiltonian()
            defect = float(np.max(np.abs(H - H.T)))
        for (_, Vj, _), T in zip(self.couplings, self.T):
            defect = max(defect, float(np.max(np.abs(Vj))) * float(np.max(np.abs(T - T.conj().T))))
        return defect

    def _lattice_kron(self, j: int, T: np.ndarray) -> sp.csr_matrix:
        mats = [sp.identity(self.sys.M, format="csr", dtype=complex) for _ in self.sys.frequencies]
        mats[j] = sp.csr_matrix(T)
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out

    def sparse(self) -> sp.csr_matrix:
        """K as a sparse matrix, index = x * lattice_size + lattice (1D base grids)."""
        g = self.grid
        if g.ndim != 1:
            raise ConfigurationError("sparse K needs a one-dimensional base grid")
        P = self.sys.M ** len(self.sys.frequencies)
        Ix = sp.identity(g.shape[0], format="csr")
        K = sp.kron(sp.csr_matrix(g.dense_free_hamiltonian()), sp.identity(P), format="csr")
        K = K + sp.kron(Ix, sp.diags(self.sys.lattice_energy.ravel()), format="csr")
        K = K + sp.kron(sp.diags(self.V.V0), sp.identity(P), format="csr")
        for (j, Vj, _), T in zip(self.couplings, self.T):
            K = K + sp.kron(sp.diags(Vj), self._lattice_kron(j, T), format="csr")
        return K.tocsr()

    def in_static_basis(self, E: np.ndarray, Q: np.ndarray) -> sp.csr_matrix:
        """K in the basis (static eigenvector a) x (lattice mode), a major."""
        P = self.sys.M ** len(self.sys.frequencies)
        K = sp.kron(sp.diags(E), sp.identity(P), format="csr")
        K = K + sp.kron(sp.identity(E.size), sp.diags(self.sys.lattice_energy.ravel()), format="csr")
        for (j, Vj, _), T in zip(self.couplings, self.T):
            W = Q.T @ (Vj[:, None] * Q)
            W[np.abs(W) < 1e-15 * np.max(np.abs(W))] = 0.0
            K = K + sp.kron(sp.csr_matrix(W), self._lattice_kron(j, T), format="csr")
        return K.tocsr()

    # propagation ---------------------------------------------------------
    def _potential_step(self, a: np.ndarray, tau: float) -> np.ndarray:
        a = a * self._space(np.exp(-1j * tau * self.V.V0), a)
        for (j, Vj, _), (mu, U) in zip(self.couplings, self._eig):
            ax = self._lattice_axis(j)
            b = _along(U.conj().T, a, ax)
            ph = np.exp(-1j * tau * Vj[..., None] * mu)  # base.shape + (M,)
            bd = self.grid.ndim
            b *= ph.reshape(self.grid.shape + (1,) * (ax - bd) + (self.sys.M,) + (1,) * (b.ndim - ax - 1))
            a = _along(U, b, ax)
        return a

    def propagate(self, a: np.ndarray, t: float, dt: float) -> np.ndarray:
        """exp(-itK) by Strang splitting with step dt."""
        g = self.grid
        lam = g.free_energies
        lat = self.sys.lattice_energy
        steps = step_sizes(0.0, t, dt)
        a = np.array(a, dtype=complex, copy=True)
        if not steps:
            return a
        cache: dict[float, np.ndarray] = {}

        def kinetic(c, tau):
            ph = cache.get(tau)
            if ph is None:
                ph = self._space(np.exp(-1j * tau * lam), c) * self._lat(np.exp(-1j * tau * lat), c)
                cache[tau] = ph
            return c * ph

        c = kinetic(g.to_free(a), steps[0] / 2)
        for k, tau in enumerate(steps):
            a = self._potential_step(g.from_free(c), tau)
            nxt = steps[k + 1] if k + 1 < len(steps) else 0.0
            c = kinetic(g.to_free(a), (tau + nxt) / 2)
        return g.from_free(c)

    def free_lift(self, a: np.ndarray, t: float) -> np.ndarray:
        """exp(-itK0)."""
        g = self.grid
        c = g.to_free(np.asarray(a, dtype=complex))
        c *= self._space(np.exp(-1j * t * g.free_energies), c)
        c *= self._lat(np.exp(-1j * t * self.sys.lattice_energy), c)
        return g.from_free(c)

    def embed_mode0(self, f: np.ndarray) -> np.ndarray:
        """f (base.shape + batch) placed on lattice mode 0."""
        f = np.asarray(f, dtype=complex)
        bd = self.grid.ndim
        out = np.zeros(f.shape[:bd] + self.sys.lattice_shape + f.shape[bd:], dtype=complex)
        out[(slice(None),) * bd + self.sys.origin] = f
        return out

    def evaluate(self, a: np.ndarray, s: Sequence[float] | float) -> np.ndarray:
        """sum_n a_n exp(i n.omega s), the torus function at the point s."""
        return evaluate_on_torus(self.sys, a, s)


def _torus_point(sys: FloquetSystem, s) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.size == 1:
        s = np.full(len(sys.frequencies), float(s[0]))
    if s.size != len(sys.frequencies):
        raise ConfigurationError("torus point has the wrong length", expected=len(sys.frequencies))
    return s


def evaluate_on_torus(sys: FloquetSystem, a: np.ndarray, s) -> np.ndarray:
    s = _torus_point(sys, s)
    phase = np.exp(1j * (sys.lattice @ (np.asarray(sys.frequencies) * s))).reshape(sys.lattice_shape)
    bd = sys.base.ndim
    nl = len(sys.frequencies)
    w = phase.reshape((1,) * bd + phase.shape + (1,) * (a.ndim - bd - nl))
    return np.sum(a * w, axis=tuple(range(bd, bd + nl)))


def assemble_K(V: QuasiPeriodicPotential, sys: FloquetSystem, check: bool = True) -> FloquetOperator:
    K = FloquetOperator(V, sys)
    if check:
        defect = K.hermiticity_defect()
        if defect > 1e-10:
            raise EigenSolverError("assembled Floquet operator is not hermitian", defect=defect)
    return K


# identity -------------------------------------------------------------------
def default_battery(grid: Grid) -> np.ndarray:
    """Four unit packets (columns) spread over the inner part of the box."""
    if grid.ndim != 1:
        raise ConfigurationError("the default battery needs a one-dimensional grid")
    r = float(np.max(grid.radius))
    specs = [(0.15 * r, 1.0, 0.0), (0.25 * r, 1.5, 1.0), (0.1 * r, 0.8, -1.5), (0.2 * r, 2.0, 0.5)]
    cols = []
    for c, w, k in specs:
        if grid.mode == "cartesian":
            c = -c
        cols.append(gaussian_packet(grid, c, w, k).normalized().amplitudes)
    return np.stack(cols, axis=-1)


def floquet_identity_profile(
    V: QuasiPeriodicPotential,
    sys: FloquetSystem,
    times: Sequence[float],
    dt: float = 1e-2,
    battery: np.ndarray | None = None,
) -> np.ndarray:
    """Relative deviation of exp(itH0) U(t, 0) f from exp(itK0) exp(-itK) f at each time.

    f runs over the battery embedded as lattice mode 0; the deviation is the
    largest relative error over the battery, read off at the torus point 0.
    """
    K = assemble_K(V, sys)
    g = sys.base
    F = default_battery(g) if battery is None else np.asarray(battery, dtype=complex)
    times = [float(t) for t in times]
    for t in times:
        if abs(t / dt - round(t / dt)) > 1e-9:
            raise ConfigurationError("identity times must be multiples of dt", t=t, dt=dt)
    PropagatorConfig(dt=dt).check(g)
    fn = g.norm(F)
    a = np.array(F, dtype=complex)
    A = K.embed_mode0(F)
    out = []
    prev = 0.0
    for t in times:
        if t == 0:
            out.append(0.0)
            continue
        a = _strang(g, a, prev, t, V, dt)
        A = K.propagate(A, t - prev, dt)
        prev = t
        lhs = free_evolve(a, -t, g)
        rhs = evaluate_on_torus(sys, K.free_lift(A, -t), 0.0)
        out.append(float(np.max(g.norm(lhs - rhs) / fn)))
    return np.array(out)


def floquet_identity_check(
    V: QuasiPeriodicPotential,
    sys: FloquetSystem,
    t: float,
    dt: float = 1e-2,
    battery: np.ndarray | None = None,
    tolerance: float = 1e-4,
) -> float:
    """Deviation at time t; warns when it grows faster than linearly above tolerance."""
    if t == 0:
        return 0.0
    half = dt * round(t / (2 * dt))
    times = [half, t] if 0 < half < t else [t]
    dev = floquet_identity_profile(V, sys, times, dt, battery)
    if dev.size == 2 and dev[1] > tolerance and dev[1] > 2.5 * max(dev[0], 1e-300):
        warnings.warn(
            f"lattice truncation dominates the Floquet identity (deviation {dev[1]:.2e}); increase N_F beyond {sys.NF}",
            TruncationWarning,
            stacklevel=2,
        )
    return float(dev[-1])


# bound states ------------------------------------------------------------------
@dataclass
class FloquetSpectrum:
    sys: FloquetSystem
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)  # base.shape + lattice_shape + (k,)
    bound_flags: np.ndarray = field(default=None)
    lattice_tails: np.ndarray = field(default=None, repr=False)
    spatial_tails: np.ndarray = field(default=None, repr=False)
    folded: np.ndarray = field(default=None, repr=False)
    classes: tuple[int, ...] = ()

    @property
    def count(self) -> int:
        """Number of bound classes (one per quasi-energy modulo the lattice)."""
        return len(self.classes)

    @property
    def quasi_energies(self) -> np.ndarray:
        return np.sort(self.folded[list(self.classes)]) if self.classes else np.zeros(0)

    def state(self, j: int) -> np.ndarray:
        return self.eigenvectors[..., j]

    def torus_state(self, j: int, s) -> np.ndarray:
        """phi_j(., s) on the base grid."""
        return evaluate_on_torus(self.sys, self.eigenvectors[..., j], s)


def _static_eigenbasis(V: QuasiPeriodicPotential, modes: int):
    g = V.grid
    if g.ndim != 1:
        raise ConfigurationError("Floquet bound states need a one-dimensional base grid")
    H = g.dense_free_hamiltonian() + np.diag(V.V0)
    E, Q = np.linalg.eigh(0.5 * (H + H.T))
    modes = min(int(modes), E.size)
    return E[:modes], Q[:, :modes]


def _spatial_tail(grid: Grid, phi: np.ndarray, eta: float) -> float:
    """Fraction of the <x>^eta-weighted mass beyond half the box."""
    w = japanese(grid.radius) ** (2 * eta)
    axes = tuple(range(grid.ndim, phi.ndim))
    dens = w * np.sum(np.abs(phi) ** 2, axis=axes) if axes else w * np.abs(phi) ** 2
    outer = grid.radius > 0.5 * float(np.max(grid.radius))
    tot = float(np.sum(dens))
    return float(np.sum(dens[outer]) / tot) if tot > 0 else 0.0


def floquet_bound_states(
    sys: FloquetSystem,
    K: FloquetOperator,
    modes: int = 64,
    nev: int = 6,
    eta: float = 3.0,
    eps_gap: float = 1e-6,
) -> FloquetSpectrum:
    """Floquet bound states continued from the static bound states.

    K is diagonalized by shift-invert in the basis of the lowest ``modes``
    eigenvectors of H0 + V0 times the lattice, around every static bound
    energy.  An eigenvector is flagged bound when its lattice mass at the
    boundary shell and its weighted spatial mass beyond half the box are
    both below tolerance.  Flagged quasi-energies are folded to the lattice
    mode carrying the most mass and deduplicated.
    """
    g = sys.base
    V = K.V
    E, Q = _static_eigenbasis(V, modes)
    targets = E[E < -eps_gap]
    P = sys.M ** len(sys.frequencies)
    lat_shape = sys.lattice_shape
    if targets.size == 0:
        empty = np.zeros(g.shape + lat_shape + (0,), dtype=complex)
        z = np.zeros(0)
        return FloquetSpectrum(sys, z, empty, z.astype(bool), z, z, z, ())
    Kb = K.in_static_basis(E, Q)
    n = Kb.shape[0]
    k = min(nev, n - 2)
    vals, vecs = [], []
    for sigma in targets:
        lu = spla.splu((Kb - (sigma - 1e-9) * sp.identity(n, format="csc")).tocsc())
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
        try:
            mu, X = spla.eigs(op, k=k, which="LM", tol=1e-12, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise EigenSolverError("shift-invert did not converge", sigma=float(sigma)) from exc
        lam = (sigma - 1e-9) + 1.0 / mu
        for j in range(k):
            x = X[:, j] / np.linalg.norm(X[:, j])
            rq = np.vdot(x, Kb @ x).real
            res = np.linalg.norm(Kb @ x - rq * x)
            if res > 1e-6 * max(1.0, abs(rq)):
                raise EigenSolverError("Floquet eigenpair residual above tolerance", residual=float(res))
            vals.append(rq)
            vecs.append(x)
    del lam
    C = np.stack(vecs, axis=1).reshape(E.size, P, -1)
    lat_mass = np.sum(np.abs(C) ** 2, axis=0)  # (P, k)
    bmask = sys.boundary.ravel()
    tails = lat_mass[bmask].sum(axis=0)
    peak = np.argmax(lat_mass, axis=0)
    folded = np.asarray(vals) - sys.lattice_energy.ravel()[peak]
    phis = np.einsum("xa,apk->xpk", Q, C) / math.sqrt(g.weight)
    spatial = np.array([_spatial_tail(g, phis[..., j], eta) for j in range(phis.shape[-1])])
    flags = (tails < LATTICE_TAIL) & (spatial < SPATIAL_TAIL)
    # the eigenvector continuing each static bound state
    origin = int(np.ravel_multi_index(sys.origin, lat_shape))
    for b in range(targets.size):
        j = int(np.argmax(np.abs(C[b, origin, :]) ** 2))
        if tails[j] > LATTICE_TAIL_FATAL:
            raise TruncationError(
                "Floquet bound state reaches the lattice boundary; increase N_F",
                tail=float(tails[j]),
                NF=sys.NF,
            )
    classes: list[int] = []
    for j in np.argsort(folded):
        if flags[j] and all(abs(folded[j] - folded[c]) > FOLD_TOL for c in classes):
            classes.append(int(j))
    vectors = phis.reshape(g.shape + lat_shape + (phis.shape[-1],))
    return FloquetSpectrum(sys, np.asarray(vals), vectors, flags, tails, spatial, folded, tuple(classes))


# projections ---------------------------------------------------------------
def embed(a: np.ndarray, src: Grid, dst: Grid) -> np.ndarray:
    """Zero-pad a field from a small box into a larger one with the same spacing."""
    if src == dst:
        return np.asarray(a)
    if src.mode != dst.mode or src.n != dst.n or abs(src.h - dst.h) > 1e-12 * src.h or dst.N < src.N:
        raise ConfigurationError("grids are not nested with a common spacing", src=repr(src), dst=repr(dst))
    if src.ndim != 1:
        raise ConfigurationError("embedding is implemented for one-dimensional grids")
    a = np.asarray(a)
    out = np.zeros(dst.shape + a.shape[1:], dtype=a.dtype)
    if src.mode == "radial":
        out[: src.shape[0]] = a
    else:
        off = int(round((dst.L - src.L) / dst.h))
        out[off : off + src.N] = a
    return out


def _bound_frame(spec: FloquetSpectrum, s, grid: Grid) -> np.ndarray:
    """Orthonormal (grid inner product) columns spanning the phi_b(., s)."""
    cols = [embed(spec.torus_state(j, s), spec.sys.base, grid) for j in spec.classes]
    Phi = np.stack(cols, axis=-1) * math.sqrt(grid.weight)
    Qm, _ = np.linalg.qr(Phi.reshape(-1, Phi.shape[-1]))
    return Qm / math.sqrt(grid.weight)


def apply_PFb(spec: FloquetSpectrum, f: WaveFunction, s) -> WaveFunction:
    """Projection onto the bound Floquet states evaluated at the torus point s."""
    a = f.amplitudes
    if spec.count == 0:
        return f.like(np.zeros_like(a, dtype=complex))
    B = _bound_frame(spec, s, f.grid)
    coef = f.grid.weight * (B.conj().T @ a.reshape(B.shape[0], -1))
    return f.like((B @ coef).reshape(a.shape))


def torus_sample(sys: FloquetSystem, per_axis: int = 4) -> np.ndarray:
    """Uniform sample of the torus, per_axis points along each period."""
    axes = [2 * math.pi / abs(w) * np.arange(per_axis) / per_axis for w in sys.frequencies]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def weighted_bound_constants(spec: FloquetSpectrum, grid: Grid | None = None, etas=(0, 1, 2, 3), per_axis: int = 4) -> dict:
    """kappa_eta = max over a torus sample of ||P_Fb(s) <x>^eta|| (exact for a finite rank)."""
    grid = grid or spec.sys.base
    out = {}
    samples = torus_sample(spec.sys, per_axis)
    for eta in etas:
        if spec.count == 0:
            out[float(eta)] = 0.0
            continue
        w = japanese(grid.radius) ** eta
        best = 0.0
        for s in samples:
            B = _bound_frame(spec, s, grid)
            M = (w[:, None] * B) * math.sqrt(grid.weight)
            best = max(best, float(np.linalg.norm(M, 2)))
        out[float(eta)] = best
    return out


def dynamic_projector(
    V: QuasiPeriodicPotential,
    psi: WaveFunction,
    t: float,
    v_horizon: float,
    alpha: float,
    cfg: PropagatorConfig | None = None,
    monitor: bool = True,
) -> WaveFunction:
    """P_c(t) psi ~ U(t, t+v) F_c(|x - 2vP| / v^alpha <= 1) U(t+v, t) psi at v = v_horizon.

    With ``monitor`` the value is also computed at v/4 and v/2 and a
    DivergenceWarning is issued if successive differences do not shrink.
    """
    grid = psi.grid
    n = grid.n
    if not v_horizon > 0:
        raise ConfigurationError("v_horizon must be positive", v_horizon=v_horizon)
    if not 0 < alpha < 1 - 2 / n:
        raise ConfigurationError("alpha must lie in (0, 1 - 2/n)", alpha=alpha, n=n)
    if cfg is None:
        from .scattering import default_dt

        cfg = PropagatorConfig(dt=default_dt(grid))
    cfg.check(grid)
    profile = CutoffProfile("F_c", 1.0)

    def at(v):
        a = _strang(grid, psi.amplitudes, t, t + v, V, cfg.dt)
        a = phase_space_cutoff(psi.like(a), v, alpha, profile).amplitudes
        return _strang(grid, a, t + v, t, V, cfg.dt)

    out = at(v_horizon)
    if monitor:
        q, h = at(v_horizon / 4), at(v_horizon / 2)
        gap1 = float(grid.norm(h - q))
        gap2 = float(grid.norm(out - h))
        if gap2 > gap1 and gap2 > 1e-10 * float(psi.norm()):
            warnings.warn(
                f"P_c(t) not Cauchy in the horizon: {gap1:.3e} -> {gap2:.3e}",
                DivergenceWarning,
                stacklevel=2,
            )
    return psi.like(out)


# FLSP1 container -----------------------------------------------------------------
FLSP_MAGIC = b"FLSP1"


def write_flsp(path, spec: FloquetSpectrum) -> None:
    """Magic, <u4 header bytes, UTF-8 JSON header, <c16 eigenvectors (C order)."""
    from .scattering import _atomic_write

    g = spec.sys.base
    head = {
        "grid": {"mode": g.mode, "n": g.n, "L": g.L, "N": g.N},
        "frequencies": list(spec.sys.frequencies),
        "NF": spec.sys.NF,
        "shape": list(spec.eigenvectors.shape),
        "eigenvalues": [float(x) for x in spec.eigenvalues],
        "bound_flags": [bool(x) for x in spec.bound_flags],
        "lattice_tails": [float(x) for x in spec.lattice_tails],
        "spatial_tails": [float(x) for x in spec.spatial_tails],
        "folded": [float(x) for x in spec.folded],
        "classes": list(spec.classes),
    }
    hb = json.dumps(head, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(spec.eigenvectors, dtype="<c16").tobytes(order="C")
    _atomic_write(Path(path), FLSP_MAGIC + struct.pack("<I", len(hb)) + hb + body)


def read_flsp(path) -> FloquetSpectrum:
    from .grid import make_grid

    raw = Path(path).read_bytes()
    if raw[:5] != FLSP_MAGIC:
        raise ConfigurationError("not an FLSP1 container", path=str(path))
    (nh,) = struct.unpack_from("<I", raw, 5)
    head = json.loads(raw[9 : 9 + nh].decode("utf-8"))
    gd = head["grid"]
    sys = FloquetSystem(make_grid(gd["mode"], gd["n"], gd["L"], gd["N"]), tuple(head["frequencies"]), head["NF"])
    shape = tuple(head["shape"])
    vec = np.frombuffer(raw, dtype="<c16", count=int(np.prod(shape)), offset=9 + nh).reshape(shape).astype(complex)
    return FloquetSpectrum(
        sys,
        np.asarray(head["eigenvalues"]),
        vec,
        np.asarray(head["bound_flags"], dtype=bool),
        np.asarray(head["lattice_tails"]),
        np.asarray(head["spatial_tails"]),
        np.asarray(head["folded"]),
        tuple(head["classes"]),
    )
