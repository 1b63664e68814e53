"""Grids, wavefunctions, weights and smooth cutoffs.

Two geometries are supported:

* ``cartesian``: periodic box [-L, L)^n, n <= 3, FFT spectrum.
* ``radial``: the l=0 sector on the half line (0, L) with Dirichlet values
  at both ends.  Amplitudes are u(r) = r^{(n-1)/2} psi(r), the free
  Hamiltonian becomes -d^2/dr^2 + angular_term / r^2, and the sine
  transform diagonalizes the kinetic part.

Array convention: spatial axes come first, any trailing axes are batch
axes.  Most operators accept either a ``WaveFunction`` or a raw array of
that layout.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, UnresolvedCutoffWarning

Mode = Literal["cartesian", "radial"]


@functools.lru_cache(maxsize=8)
def _radial_free_eigh(N: int, L: float, angular_term: float):
    """Eigen-decomposition of the radial free Hamiltonian.

    Kinetic part is the spectral sine Laplacian, the centrifugal part is a
    diagonal multiplication.  Returned Q is orthogonal (Euclidean).
    """
    h = L / N
    m = np.arange(1, N)
    r = m * h
    S = sfft.dst(np.eye(N - 1), type=1, norm="ortho", axis=0)
    T = (S * (m * np.pi / L) ** 2) @ S
    T[np.diag_indices_from(T)] += angular_term / r**2
    T = 0.5 * (T + T.T)
    lam, Q = np.linalg.eigh(T)
    lam.setflags(write=False)
    Q.setflags(write=False)
    return lam, Q


@functools.lru_cache(maxsize=8)
def _radial_free_basis_T(N: int, L: float, angular_term: float) -> np.ndarray:
    # contiguous transpose: BLAS on a transposed view runs about twice slower
    QT = np.ascontiguousarray(_radial_free_eigh(N, L, angular_term)[1].T)
    QT.setflags(write=False)
    return QT


@dataclass(frozen=True)
class Grid:
    mode: Mode
    n: int
    L: float
    N: int

    # derived -------------------------------------------------------------
    @property
    def h(self) -> float:
        return 2 * self.L / self.N if self.mode == "cartesian" else self.L / self.N

    @property
    def angular_term(self) -> float:
        if self.mode != "radial":
            return 0.0
        return (self.n - 1) * (self.n - 3) / 4.0

    @property
    def shape(self) -> tuple[int, ...]:
        if self.mode == "cartesian":
            return (self.N,) * self.n
        return (self.N - 1,)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def weight(self) -> float:
        """Quadrature weight of a single grid point."""
        return self.h**self.n if self.mode == "cartesian" else self.h

    @functools.cached_property
    def axis(self) -> np.ndarray:
        """1D coordinate array (x for cartesian, r for radial)."""
        if self.mode == "cartesian":
            return -self.L + self.h * np.arange(self.N)
        return self.h * np.arange(1, self.N)

    @functools.cached_property
    def radius(self) -> np.ndarray:
        """|x| on the grid (shape ``self.shape``)."""
        if self.mode == "radial" or self.n == 1:
            return np.abs(self.axis)
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.sqrt(sum(c**2 for c in mesh))

    @functools.cached_property
    def frequencies(self) -> np.ndarray:
        """1D dual grid: FFT frequencies or the sine spectrum m*pi/L."""
        if self.mode == "cartesian":
            return 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        return np.pi * np.arange(1, self.N) / self.L

    @property
    def xi_max(self) -> float:
        return np.pi / self.h

    @property
    def frequency_spacing(self) -> float:
        return 2 * np.pi / (self.N * self.h) if self.mode == "cartesian" else np.pi / self.L

    @functools.cached_property
    def free_energies(self) -> np.ndarray:
        """Eigenvalues of H0 in the order used by ``to_free``."""
        if self.mode == "cartesian":
            xi2 = self.frequencies**2
            if self.n == 1:
                return xi2
            grids = np.meshgrid(*([xi2] * self.n), indexing="ij")
            return sum(grids)
        if self.angular_term == 0.0:
            return self.frequencies**2
        return _radial_free_eigh(self.N, float(self.L), self.angular_term)[0]

    @property
    def max_free_energy(self) -> float:
        return float(np.max(self.free_energies))

    @property
    def _dense_free(self) -> bool:
        return self.mode == "radial" and self.angular_term != 0.0

    def free_basis(self) -> np.ndarray:
        """Orthogonal matrix whose columns are H0 eigenvectors (1D grids)."""
        if self._dense_free:
            return _radial_free_eigh(self.N, float(self.L), self.angular_term)[1]
        if self.mode == "radial":
            return sfft.dst(np.eye(self.N - 1), type=1, norm="ortho", axis=0)
        raise ConfigurationError("dense free basis only exists for radial grids")

    # transforms ----------------------------------------------------------
    def to_free(self, a: np.ndarray) -> np.ndarray:
        """Coefficients of ``a`` in the (unitary) H0 eigenbasis."""
        if self.mode == "cartesian":
            return sfft.fftn(a, axes=tuple(range(self.n)), norm="ortho")
        if self._dense_free:
            return _real_matmul(_radial_free_basis_T(self.N, float(self.L), self.angular_term), a)
        return sfft.dst(a, type=1, norm="ortho", axis=0)

    def from_free(self, c: np.ndarray) -> np.ndarray:
        if self.mode == "cartesian":
            return sfft.ifftn(c, axes=tuple(range(self.n)), norm="ortho")
        if self._dense_free:
            return _real_matmul(self.free_basis(), c)
        return sfft.dst(c, type=1, norm="ortho", axis=0)

    def free_multiplier(self, a: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a function of H0 given by its values on ``free_energies``."""
        c = self.to_free(np.asarray(a, dtype=complex))
        c *= symbol.reshape(symbol.shape + (1,) * (c.ndim - symbol.ndim))
        return self.from_free(c)

    def dense_free_hamiltonian(self) -> np.ndarray:
        """H0 as a dense real symmetric matrix (1D grids only)."""
        if self.ndim != 1:
            raise ConfigurationError("dense H0 requires a one-dimensional grid")
        if self.mode == "radial":
            lam, Q = self.free_energies, self.free_basis()
            return (Q * lam) @ Q.T
        eye = np.eye(self.N)
        H = sfft.ifft(self.free_energies[:, None] * sfft.fft(eye, axis=0), axis=0).real
        return 0.5 * (H + H.T)

    # quadrature ----------------------------------------------------------
    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        axes = tuple(range(self.ndim))
        return self.weight * np.sum(np.conj(a) * b, axis=axes)

    def norm(self, a: np.ndarray) -> np.ndarray:
        axes = tuple(range(self.ndim))
        return np.sqrt(self.weight * np.sum(np.abs(a) ** 2, axis=axes))

    def spectral_norm(self, a: np.ndarray) -> np.ndarray:
        """Norm computed from the frequency side (Parseval check)."""
        c = self.to_free(np.asarray(a, dtype=complex))
        axes = tuple(range(self.ndim))
        return np.sqrt(self.weight * np.sum(np.abs(c) ** 2, axis=axes))

    def expand(self, f: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Reshape a field over the grid so it broadcasts against ``a``."""
        return f.reshape(f.shape + (1,) * (a.ndim - f.ndim))


def _real_matmul(Q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Q @ a for real Q and complex a, without promoting Q to complex."""
    a = np.asarray(a)
    flat = a.reshape(a.shape[0], -1)
    if np.iscomplexobj(flat):
        both = np.concatenate([flat.real, flat.imag], axis=1)
        out = Q @ both
        k = flat.shape[1]
        res = out[:, :k] + 1j * out[:, k:]
    else:
        res = Q @ flat
    return res.reshape((Q.shape[0],) + a.shape[1:])


def make_grid(mode: Mode, n: int, L: float, N: int) -> Grid:
    if mode not in ("cartesian", "radial"):
        raise ConfigurationError(f"unknown grid mode {mode!r}")
    if int(n) != n or n < 1:
        raise ConfigurationError("dimension must be a positive integer")
    if mode == "cartesian" and n > 3:
        raise ConfigurationError("cartesian grids are limited to n <= 3; use radial mode", n=n)
    if mode == "radial" and n < 2:
        raise ConfigurationError("radial mode needs n >= 2")
    if int(N) != N or N % 2:
        raise ConfigurationError("N must be even", N=N)
    if N < 16 or (N & (N - 1)):
        raise ConfigurationError("N must be a power of two and at least 16", N=N)
    if not (L > 0 and np.isfinite(L)):
        raise ConfigurationError("L must be positive", L=L)
    return Grid(mode, int(n), float(L), int(N))


@dataclass
class WaveFunction:
    grid: Grid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape[: self.grid.ndim] != self.grid.shape:
            raise ConfigurationError(
                f"amplitude shape {a.shape} does not match grid {self.grid.shape}"
            )
        self.amplitudes = a

    def norm(self):
        return self.grid.norm(self.amplitudes)

    def inner(self, other: "WaveFunction"):
        return self.grid.inner(self.amplitudes, other.amplitudes)

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.amplitudes.copy())

    def like(self, amplitudes: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.grid, amplitudes)

    def normalized(self) -> "WaveFunction":
        return self.like(self.amplitudes / self.norm())

    def __add__(self, other):
        return self.like(self.amplitudes + _amp(other))

    def __sub__(self, other):
        return self.like(self.amplitudes - _amp(other))

    def __mul__(self, scalar):
        return self.like(self.amplitudes * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.amplitudes)


def _amp(x):
    return x.amplitudes if isinstance(x, WaveFunction) else x


def as_array(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, WaveFunction) else np.asarray(psi)


def japanese(x: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + np.abs(x) ** 2)


# cutoffs -----------------------------------------------------------------
def _rho(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    pos = s > 0
    with np.errstate(over="ignore"):  # subnormal s: exp(-inf) = 0 is the right answer
        out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, monotone in between."""
    s = np.asarray(s, dtype=float)
    a, b = _rho(s), _rho(1.0 - s)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth characteristic function of {k >= m} (F_geq) or {k <= m}.

    The transition runs linearly in k/m over [1/2, 2].  ``F_c`` is the
    same shape as ``F_leq``; it is kept as a separate kind so call sites
    can state which role the cutoff plays.
    """

    kind: Literal["F_geq", "F_leq", "F_c"]
    threshold: float

    def __post_init__(self):
        if self.kind not in ("F_geq", "F_leq", "F_c"):
            raise ConfigurationError(f"unknown cutoff kind {self.kind!r}")
        if not self.threshold > 0:
            raise ConfigurationError("cutoff threshold must be positive")

    def __call__(self, k: np.ndarray) -> np.ndarray:
        up = smooth_step((np.asarray(k, dtype=float) / self.threshold - 0.5) / 1.5)
        return up if self.kind == "F_geq" else 1.0 - up

    def complement(self) -> "CutoffProfile":
        return CutoffProfile("F_leq" if self.kind == "F_geq" else "F_geq", self.threshold)


def weight_apply(psi, sigma: float):
    """Multiply by <x>^sigma."""
    a = as_array(psi)
    grid = psi.grid if isinstance(psi, WaveFunction) else None
    if grid is None:
        raise ConfigurationError("weight_apply needs a WaveFunction")
    w = japanese(grid.radius) ** sigma
    return psi.like(a * grid.expand(w, a))


def cutoff_apply(psi: WaveFunction, profile: CutoffProfile, domain: Literal["space", "frequency"]):
    grid = psi.grid
    a = psi.amplitudes
    if domain == "space":
        if profile.threshold < 2 * grid.h:
            warnings.warn(
                f"cutoff threshold {profile.threshold} below twice the grid spacing",
                UnresolvedCutoffWarning,
                stacklevel=2,
            )
        return psi.like(a * grid.expand(profile(grid.radius), a))
    if domain == "frequency":
        if profile.threshold < 2 * grid.frequency_spacing:
            warnings.warn(
                f"cutoff threshold {profile.threshold} below twice the frequency spacing",
                UnresolvedCutoffWarning,
                stacklevel=2,
            )
        symbol = profile(np.sqrt(np.maximum(grid.free_energies, 0.0)))
        return psi.like(grid.free_multiplier(a, symbol))
    raise ConfigurationError(f"unknown domain {domain!r}")


# packets -----------------------------------------------------------------
def gaussian_packet(grid: Grid, center: float = 0.0, width: float = 1.0, momentum: float = 0.0) -> WaveFunction:
    """Normalized Gaussian packet exp(-(x-c)^2/(2 w^2) + i k x).

    On a cartesian grid in n > 1 dimensions the packet is centered at
    (center, 0, ...) and moves along the first axis.  On a radial grid it
    is an amplitude u(r), which must vanish near r = 0 to be smooth.
    """
    if grid.mode == "cartesian" and grid.n > 1:
        mesh = np.meshgrid(*([grid.axis] * grid.n), indexing="ij")
        r2 = (mesh[0] - center) ** 2 + sum(c**2 for c in mesh[1:])
        a = np.exp(-r2 / (2 * width**2) + 1j * momentum * mesh[0])
    else:
        x = grid.axis
        a = np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * momentum * x)
    psi = WaveFunction(grid, a)
    return psi.normalized()
