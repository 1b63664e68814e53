"""Free and full Schrodinger evolution with quasi-periodic potentials."""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, WaveFunction, as_array, japanese

Phase = Literal["sin", "cos"]


@dataclass(frozen=True)
class Component:
    V: np.ndarray = field(repr=False)
    omega: float
    phase: Phase = "sin"
    offset: float = 0.0  # time shift s_j: the factor is trig(omega * (t + s_j))

    def factor(self, t: float) -> float:
        arg = self.omega * (t + self.offset)
        return math.sin(arg) if self.phase == "sin" else math.cos(arg)


@dataclass(frozen=True)
class QuasiPeriodicPotential:
    """V(x, t) = V0(x) + sum_j V_j(x) sin|cos(omega_j t)."""

    grid: Grid
    V0: np.ndarray = field(repr=False)
    components: tuple[Component, ...] = ()
    delta: float = 8.0
    name: str = "custom"

    def __post_init__(self):
        V0 = np.asarray(self.V0, dtype=float)
        if V0.shape != self.grid.shape:
            raise ConfigurationError("V0 does not match the grid shape")
        object.__setattr__(self, "V0", V0)
        comps = []
        for c in self.components:
            if not isinstance(c, Component):
                c = Component(*c)
            V = np.asarray(c.V, dtype=float)
            if V.shape != self.grid.shape:
                raise ConfigurationError("component field does not match the grid shape")
            if c.omega == 0 or not np.isfinite(c.omega):
                raise ConfigurationError("component frequencies must be nonzero", omega=c.omega)
            if c.phase not in ("sin", "cos"):
                raise ConfigurationError(f"unknown phase {c.phase!r}")
            comps.append(Component(V, float(c.omega), c.phase, float(c.offset)))
        omegas = [c.omega for c in comps]
        if len(set(omegas)) != len(omegas):
            raise ConfigurationError("component frequencies must be pairwise distinct", omegas=omegas)
        object.__setattr__(self, "components", tuple(comps))

    @property
    def is_static(self) -> bool:
        return not self.components

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(c.omega for c in self.components)

    def static_part(self) -> "QuasiPeriodicPotential":
        return QuasiPeriodicPotential(self.grid, self.V0, (), self.delta, self.name + ":static")

    def shifted(self, s: Sequence[float]) -> "QuasiPeriodicPotential":
        """Potential with every component evaluated at t + s_j."""
        if len(s) != len(self.components):
            raise ConfigurationError("shift vector length must match the number of components")
        comps = tuple(
            Component(c.V, c.omega, c.phase, c.offset + float(sj)) for c, sj in zip(self.components, s)
        )
        return QuasiPeriodicPotential(self.grid, self.V0, comps, self.delta, self.name)

    def scaled_drive(self, factor: float) -> "QuasiPeriodicPotential":
        comps = tuple(Component(c.V * factor, c.omega, c.phase, c.offset) for c in self.components)
        return QuasiPeriodicPotential(self.grid, self.V0, comps, self.delta, self.name)

    def localization_constant(self) -> float:
        w = japanese(self.grid.radius) ** self.delta
        fields = [self.V0] + [c.V for c in self.components]
        return float(max(np.max(w * np.abs(f)) for f in fields))

    def check_localization(self) -> float:
        """Check that <x>^delta |V_j| is bounded and not growing at the box edge.

        Returns the localization constant.  A field whose weighted size near
        the box edge is comparable to its maximum does not decay at the
        declared rate.
        """
        if not self.delta > 0:
            raise ConfigurationError("delta must be positive", delta=self.delta)
        r = self.grid.radius
        outer = r >= 0.9 * np.max(r)
        w = japanese(r) ** self.delta
        const = 0.0
        for f in [self.V0] + [c.V for c in self.components]:
            wf = w * np.abs(f)
            top = float(np.max(wf))
            if not np.isfinite(top):
                raise ConfigurationError("potential is not finite on the grid")
            if top > 0 and np.max(wf[outer]) > 1e-2 * top:
                raise ConfigurationError(
                    "potential does not decay like <x>^-delta inside the box",
                    delta=self.delta,
                    edge_ratio=float(np.max(wf[outer]) / top),
                )
            const = max(const, top)
        return const

    def digest(self) -> str:
        hsh = hashlib.sha1()
        hsh.update(repr(self.grid).encode())
        hsh.update(np.ascontiguousarray(self.V0).tobytes())
        for c in self.components:
            hsh.update(np.ascontiguousarray(c.V).tobytes())
            hsh.update(repr((c.omega, c.phase, c.offset)).encode())
        return hsh.hexdigest()


def potential_at(V: QuasiPeriodicPotential, t: float) -> np.ndarray:
    out = V.V0.copy()
    for c in V.components:
        out += c.V * c.factor(t)
    return out


def zero_potential(grid: Grid) -> QuasiPeriodicPotential:
    return QuasiPeriodicPotential(grid, np.zeros(grid.shape), (), 8.0, "free")


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 1e-3
    splitting_order: int = 2
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive", dt=self.dt)
        if self.splitting_order != 2:
            raise ConfigurationError("only Strang splitting (order 2) is implemented")

    def check(self, grid: Grid) -> None:
        if self.dt * grid.max_free_energy >= math.pi:
            raise ConfigurationError(
                "time step violates the free-phase resolution guard dt * xi_max^2 < pi",
                dt=self.dt,
                xi_max_sq=grid.max_free_energy,
                dt_max=math.pi / grid.max_free_energy,
            )


def free_evolve(psi, t: float, grid: Grid | None = None):
    """exp(-i t H0) applied exactly as a multiplier in the H0 eigenbasis."""
    grid = psi.grid if isinstance(psi, WaveFunction) else grid
    a = as_array(psi)
    if t == 0:
        out = np.array(a, dtype=complex, copy=True)
    else:
        out = grid.free_multiplier(a, np.exp(-1j * t * grid.free_energies))
    return psi.like(out) if isinstance(psi, WaveFunction) else out


def step_sizes(t0: float, t1: float, dt: float) -> list[float]:
    """Signed steps from t0 to t1: full dt steps then one shorter remainder."""
    span = t1 - t0
    if span == 0:
        return []
    sgn = 1.0 if span > 0 else -1.0
    n_full = int(math.floor(abs(span) / dt + 1e-9))
    rem = abs(span) - n_full * dt
    steps = [sgn * dt] * n_full
    if rem > 1e-9 * dt:
        steps.append(sgn * rem)
    return steps


def _strang(grid: Grid, a: np.ndarray, t0: float, t1: float, V: QuasiPeriodicPotential, dt: float) -> np.ndarray:
    steps = step_sizes(t0, t1, dt)
    a = np.array(a, dtype=complex, copy=True)
    if not steps:
        return a
    lam = grid.free_energies
    kin_cache: dict[float, np.ndarray] = {}

    def kinetic(c: np.ndarray, tau: float) -> np.ndarray:
        ph = kin_cache.get(tau)
        if ph is None:
            ph = grid.expand(np.exp(-1j * tau * lam), c)
            kin_cache[tau] = ph
        c *= ph
        return c

    pot_cache: dict[float, np.ndarray] = {}
    static = V.is_static
    c = kinetic(grid.to_free(a), steps[0] / 2)
    t = t0
    for k, tau in enumerate(steps):
        a = grid.from_free(c)
        if static:
            ph = pot_cache.get(tau)
            if ph is None:
                ph = grid.expand(np.exp(-1j * tau * V.V0), a)
                pot_cache[tau] = ph
        else:
            ph = grid.expand(np.exp(-1j * tau * potential_at(V, t + tau / 2)), a)
        a *= ph
        t += tau
        c = grid.to_free(a)
        nxt = steps[k + 1] if k + 1 < len(steps) else 0.0
        c = kinetic(c, (tau + nxt) / 2)
    return grid.from_free(c)


def evolve(psi, t0: float, t1: float, V: QuasiPeriodicPotential, cfg: PropagatorConfig, grid: Grid | None = None):
    """U(t1, t0) psi by Strang splitting with the potential at midpoint times."""
    grid = psi.grid if isinstance(psi, WaveFunction) else grid
    cfg.check(grid)
    out = _strang(grid, as_array(psi), t0, t1, V, cfg.dt)
    return psi.like(out) if isinstance(psi, WaveFunction) else out


def trajectory(psi, times: Iterable[float], V: QuasiPeriodicPotential, cfg: PropagatorConfig, t0: float = 0.0, grid: Grid | None = None):
    """Yield (t, state) at increasing sample times, evolving segment by segment."""
    grid = psi.grid if isinstance(psi, WaveFunction) else grid
    cfg.check(grid)
    a = np.array(as_array(psi), dtype=complex)
    t = t0
    for ts in times:
        a = _strang(grid, a, t, ts, V, cfg.dt)
        t = ts
        yield ts, (psi.like(a) if isinstance(psi, WaveFunction) else a)


# exact static propagation --------------------------------------------------
class SpectralPropagator:
    """Exact propagator of a static H = H0 + V0 on a one-dimensional grid.

    Dense diagonalization is done once.  Besides exp(-itH) this provides
    the Duhamel integral int_0^T exp(iuH) V exp(-iuH0) du in closed form,
    which is what makes batched wave-operator columns affordable.
    """

    def __init__(self, V: QuasiPeriodicPotential):
        if not V.is_static:
            raise ConfigurationError("SpectralPropagator needs a static potential")
        grid = V.grid
        if grid.ndim != 1:
            raise ConfigurationError("SpectralPropagator needs a one-dimensional grid")
        self.grid = grid
        self.V = V
        H = grid.dense_free_hamiltonian() + np.diag(V.V0)
        self.E, self.Q = np.linalg.eigh(0.5 * (H + H.T))

    @functools.cached_property
    def _coupling(self) -> np.ndarray:
        """<a| V |free mode>, H eigenvectors against H0 eigenvectors."""
        g = self.grid
        if g.mode == "radial":
            B = g.free_basis()
            return self.Q.T @ (self.V.V0[:, None] * B)
        B = np.fft.ifft(np.eye(g.N), axis=0, norm="ortho")  # columns: free modes
        return _rmat(self.Q.T, self.V.V0[:, None] * B)

    def evolve(self, a: np.ndarray, t: float) -> np.ndarray:
        c = _rmat(self.Q.T, np.asarray(a, dtype=complex))
        c *= self.grid.expand(np.exp(-1j * t * self.E), c)
        return _rmat(self.Q, c)

    def duhamel(self, a: np.ndarray, T: float) -> np.ndarray:
        """int_0^T exp(iuH) V exp(-iuH0) a du (T may be negative)."""
        g = self.grid
        d = self.E[:, None] - g.free_energies[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(np.abs(d) * abs(T) > 1e-8, (np.exp(1j * T * d) - 1.0) / (1j * d), T + 0.5j * T * T * d)
        c = g.to_free(np.asarray(a, dtype=complex))
        y = (self._coupling * phi) @ c.reshape(c.shape[0], -1)
        return _rmat(self.Q, y).reshape(np.shape(a))


def _rmat(Q: np.ndarray, a: np.ndarray) -> np.ndarray:
    from .grid import _real_matmul

    return _real_matmul(Q, a)


_SPECTRAL: dict[str, SpectralPropagator] = {}


def spectral_propagator(V: QuasiPeriodicPotential) -> SpectralPropagator:
    key = V.digest()
    prop = _SPECTRAL.get(key)
    if prop is None:
        if len(_SPECTRAL) >= 4:
            _SPECTRAL.pop(next(iter(_SPECTRAL)))
        prop = SpectralPropagator(V)
        _SPECTRAL[key] = prop
    return prop


# presets -----------------------------------------------------------------
def sech2(x: np.ndarray) -> np.ndarray:
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def poschl_teller(grid: Grid, lam: int = 1) -> QuasiPeriodicPotential:
    """-lam (lam + 1) sech^2 |x|.

    lam = 1 is the 1D preset: bound state sech x at E = -1, reflectionless.
    """
    name = "poschl_teller" if lam == 1 else f"poschl_teller_{lam}"
    return QuasiPeriodicPotential(grid, -lam * (lam + 1) * sech2(grid.radius), (), 8.0, name)


def poschl_teller_radial(grid: Grid) -> QuasiPeriodicPotential:
    """-6 sech^2 r for the radial n = 3 sector.

    The l = 0 sector keeps only the odd 1D states.  For depth 2 the odd
    zero-energy solution tanh r is a threshold resonance; depth 6 leaves a
    single bound state sech r tanh r at E = -1 and a regular threshold.
    """
    if grid.mode != "radial":
        raise ConfigurationError("poschl_teller_radial is a radial preset")
    return poschl_teller(grid, 2)


def gaussian_well(grid: Grid, depth: float, name: str = "gaussian_well") -> QuasiPeriodicPotential:
    return QuasiPeriodicPotential(grid, -depth * np.exp(-grid.radius**2), (), 8.0, name)


def gaussian_well_3d(grid: Grid) -> QuasiPeriodicPotential:
    # depth 8 sits between the couplings (~2.7 and ~18.6) where a bound
    # state enters at threshold; single bound state near E = -1.57
    return gaussian_well(grid, 8.0, "gaussian_well_3d")


def gaussian_well_5d(grid: Grid) -> QuasiPeriodicPotential:
    # one bound state near E = -7.40 in the n = 5 l = 0 sector
    return gaussian_well(grid, 30.0, "gaussian_well_5d")


def quasi_periodic_5d(grid: Grid, amplitude: float = 0.5) -> QuasiPeriodicPotential:
    """Static 5D well plus two sin drives at frequencies 1 and sqrt(2)."""
    base = gaussian_well_5d(grid)
    shape = np.exp(-grid.radius**2)
    comps = (
        Component(amplitude * shape, 1.0, "sin"),
        Component(amplitude * shape, math.sqrt(2.0), "sin"),
    )
    return QuasiPeriodicPotential(grid, base.V0, comps, 8.0, "quasi_periodic_5d")


PRESETS: dict[str, Callable[[Grid], QuasiPeriodicPotential]] = {
    "free": zero_potential,
    "poschl_teller": poschl_teller,
    "poschl_teller_radial": poschl_teller_radial,
    "gaussian_well_3d": gaussian_well_3d,
    "gaussian_well_5d": gaussian_well_5d,
    "quasi_periodic_5d": quasi_periodic_5d,
}


def preset(name: str, grid: Grid) -> QuasiPeriodicPotential:
    try:
        return PRESETS[name](grid)
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}", known=sorted(PRESETS)) from None
