"""Strang-split integration of the Hartree equation and its mean-field kernels."""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import HartreeInstabilityError
from .lattice import PairPotential, WaveFunction, mean_field

log = logging.getLogger(__name__)


def energy(phi: WaveFunction, v: PairPotential) -> float:
    """``int |grad phi|^2 + 1/2 int int v(x-y) |phi(x)|^2 |phi(y)|^2``."""
    lat = phi.lattice
    kinetic = lat.inner(phi.values, -lat.laplacian(phi.values)).real
    rho = np.abs(phi.values) ** 2
    return float(kinetic + 0.5 * np.sum(mean_field(v, phi) * rho) * lat.weight)


def sobolev_norm(phi: WaveFunction, order=4) -> float:
    """``||(1 - Laplacian)^{order/2} phi||``, logged as a regularity diagnostic."""
    lat = phi.lattice
    fk = np.fft.fftn(phi.values) * (1 + lat.k2) ** (order / 2)
    return float(np.sqrt(np.vdot(fk, fk).real / lat.n_sites * lat.weight))


def strang_step(values, v: PairPotential, dt: float) -> np.ndarray:
    """One kinetic-half / potential-full / kinetic-half step (``dt`` may be negative)."""
    lat = v.lattice
    half = np.exp(-0.5j * dt * lat.k2)
    psi = np.fft.ifftn(half * np.fft.fftn(values))
    pot = lat.convolve(v.values, np.abs(psi) ** 2).real
    psi = np.exp(-1j * dt * pot) * psi
    return np.fft.ifftn(half * np.fft.fftn(psi))


@dataclass(frozen=True)
class HartreeFrame:
    """Condensate at one instant with the kernels that enter the fluctuation equation.

    Kernels act on fields with the quadrature weight folded in, e.g.
    ``(K1 f)(x) = sum_y v(x-y) phi(x) conj(phi(y)) f(y) (L/M)^d``.
    """

    phi: WaveFunction
    v: PairPotential
    time: float = 0.0

    @cached_property
    def potential(self) -> np.ndarray:
        return mean_field(self.v, self.phi)

    @cached_property
    def mu(self) -> float:
        """Half the direct interaction energy, ``1/2 int int v |phi|^2 |phi|^2``."""
        return float(0.5 * np.sum(self.potential * np.abs(self.phi.values) ** 2) * self.phi.lattice.weight)

    def h_hartree(self, f) -> np.ndarray:
        return -self.phi.lattice.laplacian(f) + self.potential * f

    def k1(self, f) -> np.ndarray:
        lat = self.phi.lattice
        return self.phi.values * lat.convolve(self.v.values, self.phi.values.conj() * f)

    def k2(self, f) -> np.ndarray:
        lat = self.phi.lattice
        return self.phi.values * lat.convolve(self.v.values, self.phi.values * f)

    def k1_matrix(self) -> np.ndarray:
        p = self.phi.values.reshape(-1)
        return self.v.site_matrix() * np.outer(p, p.conj()) * self.phi.lattice.weight

    def k2_matrix(self) -> np.ndarray:
        p = self.phi.values.reshape(-1)
        return self.v.site_matrix() * np.outer(p, p) * self.phi.lattice.weight


@dataclass(frozen=True)
class HartreeTrajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    v: PairPotential = field(repr=False)
    dt: float = 0.0
    norms: np.ndarray = field(default=None, repr=False)
    energies: np.ndarray = field(default=None, repr=False)
    h4_norms: np.ndarray = field(default=None, repr=False)

    @property
    def lattice(self):
        return self.v.lattice

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> WaveFunction:
        return WaveFunction(self.lattice, self.states[k])

    def index_of(self, s: float) -> int:
        """Nearest stored instant; no interpolation."""
        t0, t1 = self.times[0], self.times[-1]
        tol = 1e-9 * max(1.0, abs(t1))
        if s < t0 - tol or s > t1 + tol:
            raise ValueError(f"time {s} outside trajectory range [{t0}, {t1}]")
        return int(np.argmin(np.abs(self.times - s)))

    def frame(self, k: int) -> HartreeFrame:
        return HartreeFrame(self.state(k), self.v, float(self.times[k]))

    def truncated(self, k: int) -> "HartreeTrajectory":
        """Trajectory restricted to the first ``k + 1`` instants."""
        sl = slice(0, k + 1)
        pick = lambda a: None if a is None else a[sl]
        return HartreeTrajectory(self.times[sl], self.states[sl], self.v, self.dt,
                                 pick(self.norms), pick(self.energies), pick(self.h4_norms))

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - 1.0)))

    @property
    def max_energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))


def frame_at(traj: HartreeTrajectory, s: float) -> HartreeFrame:
    return traj.frame(traj.index_of(s))


def evolve(phi0: WaveFunction, v: PairPotential, t: float, dt: float,
           diagnostics=True) -> HartreeTrajectory:
    """Integrate the Hartree equation from 0 to ``t``, storing every step.

    The step is shrunk to ``t / ceil(t / dt)`` so the grid lands on ``t``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if abs(phi0.norm - 1) > 1e-10:
        raise ValueError(f"initial state must be normalized (norm {phi0.norm!r})")
    phi0.lattice.check_same(v.lattice)
    n_steps = int(np.ceil(t / dt - 1e-12)) if t > 0 else 0
    step = t / n_steps if n_steps else dt
    lat = phi0.lattice
    states = np.empty((n_steps + 1,) + lat.shape, complex)
    states[0] = phi0.values
    times = step * np.arange(n_steps + 1)
    for k in range(n_steps):
        nxt = strang_step(states[k], v, step)
        if not np.all(np.isfinite(nxt)):
            raise HartreeInstabilityError(
                f"non-finite field at step {k + 1}; last stable time {times[k]:.6g}",
                last_stable_time=float(times[k]))
        states[k + 1] = nxt
    norms = energies = h4 = None
    if diagnostics:
        norms = np.array([lat.norm(s) for s in states])
        energies = np.array([energy(WaveFunction(lat, s), v) for s in states])
        h4 = np.array([sobolev_norm(WaveFunction(lat, s)) for s in states])
        log.info("hartree: %d steps, norm drift %.2e, energy drift %.2e, max H4 norm %.4g",
                 n_steps, np.max(np.abs(norms - 1)), np.max(np.abs(energies - energies[0])), h4.max())
    return HartreeTrajectory(times, states, v, step, norms, energies, h4)
