"""Dilations, the outgoing/incoming projections P+- and phase-space cutoffs.

P+ = 1/2 + (1/2) tanh((A - M)/R) with A the dilation generator.  The tanh
is written as a principal-value Fourier integral against csch(pi w / 2),
so P+ becomes a weighted sum of dilations exp(i tau A), tau = w / R.  On a
grid the dilations are evaluated exactly on the trigonometric interpolant
of the samples, and the node sum is assembled once into a dense matrix.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft as sfft

from . import cache
from .errors import ConfigurationError, DomainOverflowError, NumericalIntegrityError
from .grid import CutoffProfile, Grid, WaveFunction

R_MIN = 2.0
GUARD_TOL = 1e-6


# scalar kernel -----------------------------------------------------------
def quadrature_nodes(W: float, hw: float, R: float, M: float):
    """Symmetric open nodes w_k = +-(k - 1/2) hw and the P+ node weights."""
    K = int(round(W / hw))
    w = (np.arange(1, K + 1) - 0.5) * hw
    w = np.concatenate([-w[::-1], w])
    c = hw / np.sinh(np.pi * w / 2) * np.exp(-1j * w * M / R)
    return w, c


def tanh_quadrature(a: np.ndarray, W: float = 20.0, hw: float = 0.1) -> np.ndarray:
    """(1/2i) PV int exp(iwa) csch(pi w/2) dw on the projector nodes."""
    w, _ = quadrature_nodes(W, hw, 1.0, 0.0)
    a = np.asarray(a, dtype=float)
    pos = w > 0
    ker = hw / np.sinh(np.pi * w[pos] / 2)
    return np.sin(np.multiply.outer(a, w[pos])) @ ker


def verify_tanh_identity(a_max: float = 10.0, W: float = 20.0, hw: float = 0.1, samples: int = 4001) -> float:
    """Max deviation of the quadrature from tanh on [-a_max, a_max]."""
    a = np.linspace(-a_max, a_max, samples)
    return float(np.max(np.abs(tanh_quadrature(a, W, hw) - np.tanh(a))))


# projector parameters -----------------------------------------------------
@dataclass(frozen=True)
class OutgoingProjector:
    M: float = 0.0
    R: float = 4.0
    W: float = 20.0
    hw: float = 0.1

    def __post_init__(self):
        if self.R < R_MIN:
            raise ConfigurationError(f"R must be at least {R_MIN}", R=self.R)
        if self.W < 20:
            raise ConfigurationError("quadrature half-width W must be at least 20", W=self.W)
        if not 0 < self.hw <= 0.1:
            raise ConfigurationError("quadrature step hw must lie in (0, 0.1]", hw=self.hw)

    @property
    def resolved_A(self) -> float:
        """Largest |A - M| the node spacing resolves without aliasing."""
        return math.pi * self.R / self.hw

    def nodes(self):
        return quadrature_nodes(self.W, self.hw, self.R, self.M)

    @classmethod
    def for_band(cls, grid: Grid, band: float | None = None, M: float = 0.0, R: float = 4.0, W: float = 20.0):
        """Projector whose node spacing resolves inputs with |xi| <= band.

        ``band`` defaults to the grid Nyquist frequency.  The dilation
        generator of such inputs is bounded by (box radius) * band.
        """
        band = grid.xi_max if band is None else band
        A_max = phase_space_radius(grid) * band + abs(M)
        hw = min(0.1, math.pi * R / A_max)
        # round the step down to a value with a short repr for stable cache keys
        hw = math.floor(hw * 1e4) / 1e4
        return cls(M=M, R=R, W=W, hw=hw)


def phase_space_radius(grid: Grid) -> float:
    return grid.L * (math.sqrt(grid.n) if grid.mode == "cartesian" else 1.0)


# dilations ----------------------------------------------------------------
def _dilation_rows_1d(grid: Grid, tau: float) -> np.ndarray:
    """Matrix mapping samples to samples of exp(tau/2) f(exp(tau) x) (1D part).

    The evaluation is exact on the trigonometric interpolant; points mapped
    outside the box are set to zero.
    """
    N = grid.N
    s = math.exp(tau)
    if grid.mode == "radial":
        j = np.arange(1, N)
        E = np.sin(np.pi * s * np.outer(j, j) / N)
        E *= (s * j < N)[:, None]
        return math.exp(tau / 2) * math.sqrt(2.0 / N) * sfft.dst(E, type=1, norm="ortho", axis=1)
    jp = np.arange(N) - N // 2
    mp = np.rint(np.fft.fftfreq(N) * N).astype(int)
    E = np.exp(2j * np.pi * s * np.outer(jp, mp) / N)
    nyq = mp == -N // 2
    E[:, nyq] = E[:, nyq].real
    E *= (np.abs(s * jp) <= N // 2)[:, None]
    sign = np.where(mp % 2 == 0, 1.0, -1.0)
    return math.exp(tau / 2) * np.fft.fft(E * sign, axis=1) / N


def dilation_matrix(grid: Grid, tau: float) -> np.ndarray:
    if grid.ndim != 1:
        raise ConfigurationError("dense dilation matrices exist for one-dimensional grids")
    return _dilation_rows_1d(grid, tau)


def _apply_dilation(grid: Grid, a: np.ndarray, tau: float) -> np.ndarray:
    D = _dilation_rows_1d(grid, tau)
    out = np.asarray(a, dtype=complex)
    for ax in range(grid.ndim):
        out = np.moveaxis(np.tensordot(D, out, axes=([1], [ax])), 0, ax)
    return out


def _mass_profiles(grid: Grid, a: np.ndarray):
    """Sorted space radii / frequency radii with cumulative mass beyond them."""
    flat = np.abs(a.reshape(grid.shape + (-1,))) ** 2
    flat = flat.sum(axis=tuple(range(grid.ndim, flat.ndim))) if flat.ndim > grid.ndim else flat
    total = flat.sum()
    if grid.mode == "cartesian" and grid.n > 1:
        mesh = np.meshgrid(*([np.abs(grid.axis)] * grid.n), indexing="ij")
        rad = np.maximum.reduce(mesh)
        fmesh = np.meshgrid(*([np.abs(grid.frequencies)] * grid.n), indexing="ij")
        frad = np.maximum.reduce(fmesh)
    else:
        rad = grid.radius
        frad = np.sqrt(np.maximum(grid.free_energies, 0.0))
    c = grid.to_free(np.asarray(a, dtype=complex).reshape(grid.shape + (-1,)))
    fmass = (np.abs(c) ** 2).sum(axis=-1)
    out = []
    for r, m in ((rad, flat), (frad, fmass)):
        order = np.argsort(r.ravel())
        rs = r.ravel()[order]
        ms = m.ravel()[order]
        beyond = np.concatenate([np.cumsum(ms[::-1])[::-1], [0.0]]) / max(total, 1e-300)
        out.append((rs, beyond))
    return out


def _lost_fraction(profile, limit: float) -> float:
    rs, beyond = profile
    idx = np.searchsorted(rs, limit, side="right")
    return float(beyond[idx])


def dilation_guard(grid: Grid, a: np.ndarray, tau: float) -> float:
    """Fraction of the squared norm that a dilation by tau pushes out of range."""
    space, freq = _mass_profiles(grid, a)
    s = math.exp(tau)
    lost = 0.0
    if s < 1:
        lost += _lost_fraction(space, s * phase_space_radius(grid) / math.sqrt(grid.n if grid.mode == "cartesian" else 1))
    else:
        lost += _lost_fraction(freq, grid.xi_max / s)
    return lost


def dilate(psi: WaveFunction, tau: float, tol: float = 1e-18) -> WaveFunction:
    """exp(i tau A) psi = exp(n tau/2) psi(exp(tau) x) (radial: on u)."""
    if tau == 0:
        return psi.copy()
    lost = dilation_guard(psi.grid, psi.amplitudes, tau)
    if lost > tol:
        raise DomainOverflowError("dilation leaves the resolvable box", tau=tau, lost_fraction=lost)
    return psi.like(_apply_dilation(psi.grid, psi.amplitudes, tau))


# dense projector -----------------------------------------------------------
def _node_sum_1d(grid: Grid, taus: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """G[j, m] = sum_k coef_k * exp(tau_k/2) * mask_k(j) * E_{tau_k}[j, m].

    E is sin(pi m j s/N) (radial) or exp(2 pi i m' j' s / N) (cartesian).
    Rows are generated by a phase recurrence in j, reseeded exactly every
    ``block`` rows to keep rounding drift at the 1e-14 level.
    """
    N = grid.N
    s = np.exp(taus)
    cw = coef * np.exp(taus / 2)
    if grid.mode == "radial":
        rows = np.arange(1, N)
        cols = np.arange(1, N).astype(float)
    else:
        rows = np.arange(N) - N // 2
        cols = np.rint(np.fft.fftfreq(N) * N)
    base = (np.pi if grid.mode == "radial" else 2 * np.pi) / N
    step = np.exp(1j * base * np.outer(s, cols))  # (K, ncols)
    G = np.empty((rows.size, cols.size), dtype=complex)
    block = 32
    Z = None
    for i, j in enumerate(rows):
        if i % block == 0:
            Z = np.exp(1j * base * j * np.outer(s, cols))
        else:
            Z *= step
        if grid.mode == "radial":
            live = s * j < N
            G[i] = cw[live] @ Z[live].imag
        else:
            live = np.abs(s * j) <= N // 2
            G[i] = cw[live] @ Z[live]
    if grid.mode == "cartesian":
        nyq = cols == -N // 2
        # Nyquist column uses cos, i.e. the real part of the phase factor
        G[:, nyq] = _node_sum_nyquist(rows, s, cw, N)[:, None]
    return G


def _node_sum_fast(grid: Grid, taus: np.ndarray, coef: np.ndarray, eps: float = 1e-14) -> np.ndarray:
    """Same sums as ``_node_sum_1d``, one type-1 NUFFT per row.

    For a fixed row the live nodes form a prefix (s_k increases with k),
    and the row is a trigonometric sum over the points theta_k = c s_k j.
    """
    import finufft

    N = grid.N
    order = np.argsort(taus)
    s = np.exp(taus[order])
    cw = (coef[order] * np.exp(taus[order] / 2)).astype(complex)
    if grid.mode == "radial":
        G = np.zeros((N - 1, N - 1), dtype=complex)
        plan = finufft.Plan(1, (2 * N,), eps=eps, isign=1)
        for j in range(1, N):
            live = int(np.searchsorted(s, N / j, side="left"))
            if live == 0:
                break
            th = np.mod(np.pi * s[:live] * j / N + np.pi, 2 * np.pi) - np.pi
            plan.setpts(th)
            f = plan.execute(cw[:live])  # modes -N..N-1
            pos = f[N + 1 : 2 * N]
            neg = f[N - 1 : 0 : -1]
            G[j - 1] = (pos - neg) / 2j
        return G
    rows = np.arange(N) - N // 2
    cols = np.rint(np.fft.fftfreq(N) * N).astype(int)
    G = np.zeros((N, N), dtype=complex)
    plan = finufft.Plan(1, (N,), eps=eps, isign=1)
    for i, jp in enumerate(rows):
        live = int(np.searchsorted(s, (N // 2) / abs(jp), side="right")) if jp else s.size
        if live == 0:
            continue
        th = np.mod(2 * np.pi * s[:live] * jp / N + np.pi, 2 * np.pi) - np.pi
        plan.setpts(th)
        f = plan.execute(cw[:live])  # modes -N/2..N/2-1
        G[i] = f[cols + N // 2]
    nyq = cols == -N // 2
    G[:, nyq] = _node_sum_nyquist(rows, s, cw, N)[:, None]
    return G


def _node_sum_nyquist(rows, s, cw, N):
    ph = np.cos(np.pi * np.outer(rows, s))
    live = np.abs(np.outer(rows, s)) <= N // 2
    return (ph * live) @ cw


def _projector_key(grid: Grid, proj: OutgoingProjector) -> str:
    raw = repr((grid.mode, grid.n, grid.L, grid.N, proj.M, proj.R, proj.W, proj.hw, "v1"))
    return hashlib.sha1(raw.encode()).hexdigest()[:20]


@functools.lru_cache(maxsize=6)
def projector_matrix(grid: Grid, proj: OutgoingProjector) -> np.ndarray:
    """Dense matrix of P+ on a one-dimensional grid (cached in memory and on disk)."""
    if grid.ndim != 1:
        raise ConfigurationError("dense projector matrices exist for one-dimensional grids")
    key = "pplus-" + _projector_key(grid, proj)
    hit = cache.load(key)
    if hit is not None:
        hit.setflags(write=False)
        return hit
    w, c = proj.nodes()
    G = _node_sum_fast(grid, w / proj.R, c)
    N = grid.N
    if grid.mode == "radial":
        D = math.sqrt(2.0 / N) * sfft.dst(G, type=1, norm="ortho", axis=1)
    else:
        mp = np.rint(np.fft.fftfreq(N) * N).astype(int)
        sign = np.where(mp % 2 == 0, 1.0, -1.0)
        D = np.fft.fft(G * sign, axis=1) / N
    P = D / 4j
    P[np.diag_indices_from(P)] += 0.5
    cache.store(key, P)
    P.setflags(write=False)
    return P


def _apply_projector_tensor(grid: Grid, a: np.ndarray, proj: OutgoingProjector) -> np.ndarray:
    w, c = proj.nodes()
    acc = np.zeros_like(a, dtype=complex)
    for wk, ck in zip(w, c):
        if abs(ck) < 1e-18:
            continue
        acc += ck * _apply_dilation(grid, a, wk / proj.R)
    return 0.5 * a + acc / 4j


def quadrature_guard(grid: Grid, a: np.ndarray, proj: OutgoingProjector) -> dict:
    """Error budget of the node sum for this input.

    Two effects are measured: mass that individual dilations push out of
    the box or beyond the Nyquist frequency (weighted by the node weights),
    and phase-space extent beyond what the node spacing resolves.
    """
    space, freq = _mass_profiles(grid, a)
    w, c = proj.nodes()
    budget = 0.0
    rad = phase_space_radius(grid) / (math.sqrt(grid.n) if grid.mode == "cartesian" else 1.0)
    for wk, ck in zip(w, c):
        s = math.exp(wk / proj.R)
        lost = _lost_fraction(space, s * rad) if s < 1 else _lost_fraction(freq, grid.xi_max / s)
        budget += abs(ck) / 4 * math.sqrt(lost)
    # phase-space: |A| <= r * |xi| on the bulk of the mass
    r99 = _quantile_radius(space, 1e-12)
    k99 = _quantile_radius(freq, 1e-12)
    A_extent = r99 * k99 * (math.sqrt(grid.n) if grid.mode == "cartesian" else 1.0)
    return {"budget": budget, "A_extent": A_extent, "A_resolved": proj.resolved_A}


def _quantile_radius(profile, tail: float) -> float:
    rs, beyond = profile
    idx = np.searchsorted(-beyond[1:], -tail, side="left")
    return float(rs[min(idx, rs.size - 1)])


def apply_projector(proj: OutgoingProjector, psi: WaveFunction, sign: Literal["+", "-"] = "+", guard_tol: float = GUARD_TOL) -> WaveFunction:
    """P+ psi or P- psi = psi - P+ psi."""
    if sign not in ("+", "-"):
        raise ConfigurationError(f"sign must be '+' or '-', got {sign!r}")
    grid = psi.grid
    a = psi.amplitudes
    if guard_tol is not None:
        g = quadrature_guard(grid, a, proj)
        if g["budget"] > guard_tol or g["A_extent"] - abs(proj.M) > g["A_resolved"]:
            raise DomainOverflowError("projector quadrature leaves the resolvable range", **g)
    if grid.ndim == 1:
        P = projector_matrix(grid, proj)
        plus = P @ a.reshape(a.shape[0], -1)
        plus = plus.reshape(a.shape)
    else:
        plus = _apply_projector_tensor(grid, a, proj)
    nrm_in = grid.norm(a)
    nrm_out = grid.norm(plus)
    if np.any(nrm_out > nrm_in * (1 + 1e-6) + 1e-300):
        raise NumericalIntegrityError(
            "projector failed to contract", ratio=float(np.max(nrm_out / np.maximum(nrm_in, 1e-300)))
        )
    out = plus if sign == "+" else a - plus
    return psi.like(out)


def projector_array(grid: Grid, proj: OutgoingProjector, a: np.ndarray, sign: str = "+") -> np.ndarray:
    """Unguarded batched application on raw arrays (spatial axis first)."""
    P = projector_matrix(grid, proj)
    plus = (P @ a.reshape(a.shape[0], -1)).reshape(a.shape)
    return plus if sign == "+" else a - plus


# phase-space cutoff ---------------------------------------------------------
def phase_space_cutoff(psi: WaveFunction, t: float, alpha: float, profile: CutoffProfile | None = None) -> WaveFunction:
    """F(|x - 2tP| / t^alpha) = exp(-itH0) F(|x| / t^alpha) exp(itH0).

    ``profile`` is the spatial cutoff applied to |x|/t^alpha; the default
    is F_c with threshold 1; pass ``profile.complement()`` for the other
    half of the partition.
    """
    from .dynamics import free_evolve

    if not t > 0:
        raise ConfigurationError("phase-space cutoff needs t > 0", t=t)
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)", alpha=alpha)
    profile = profile or CutoffProfile("F_c", 1.0)
    grid = psi.grid
    a = free_evolve(psi.amplitudes, -t, grid)
    a *= grid.expand(profile(grid.radius / t**alpha), a)
    return psi.like(free_evolve(a, t, grid))


# Mellin oracle ----------------------------------------------------------------
def log_gaussian_packet(grid: Grid, rho0: float, sigma: float, a0: float) -> WaveFunction:
    """u(r) = r^{-1/2} g(ln r) with g a Gaussian of width sigma at rho0 and A-momentum a0.

    On the half-line A = -i d/drho in rho = ln r, so the packet is a
    Gaussian in the A-spectral variable centred at a0 with width 1/sigma.
    """
    if grid.mode != "radial":
        raise ConfigurationError("log-Gaussian packets live on radial grids")
    r = grid.radius
    rho = np.log(r)
    g = np.exp(-((rho - rho0) ** 2) / (4 * sigma**2) + 1j * a0 * rho)
    a = g / np.sqrt(r)
    return WaveFunction(grid, a / grid.norm(a))


def mellin_projector_oracle(psi: WaveFunction, proj: OutgoingProjector, sign: str = "+", n_a: int = 4096) -> WaveFunction:
    """P+- applied by diagonalising A in the Mellin variable.

    The samples are read as u(r) = r^{-1/2} g(ln r); g is sampled on a
    uniform rho mesh by cubic interpolation, multiplied by
    (1 +- tanh((a - M)/R)) / 2 in the rho-Fourier variable and mapped back.
    """
    from scipy.interpolate import CubicSpline

    grid = psi.grid
    if grid.mode != "radial":
        raise ConfigurationError("the Mellin oracle runs on radial grids")
    r = grid.radius
    g = psi.amplitudes * np.sqrt(r)
    rho = np.log(r)
    lo, hi = rho[0], rho[-1]
    span = hi - lo
    mesh = np.linspace(lo - span, hi + span, n_a, endpoint=False)
    inside = (mesh >= lo) & (mesh <= hi)
    gm = np.zeros(n_a, complex)
    gm[inside] = CubicSpline(rho, g.real)(mesh[inside]) + 1j * CubicSpline(rho, g.imag)(mesh[inside])
    a = 2 * np.pi * np.fft.fftfreq(n_a, d=mesh[1] - mesh[0])
    mult = 0.5 * (1 + (1 if sign == "+" else -1) * np.tanh((a - proj.M) / proj.R))
    out = np.fft.ifft(np.fft.fft(gm) * mult)
    back = CubicSpline(mesh, out.real)(rho) + 1j * CubicSpline(mesh, out.imag)(rho)
    return psi.like(back / np.sqrt(r))
