"""Backward solver for the linearized (Bogoliubov) fluctuation field.

The generator ``f -> h_H(s) f + K1(s) f - K2(s) conj(f)`` contains the
complex conjugation and is only real-linear.  Fields are kept as complex
arrays and the conjugation is applied inside the right-hand side.  The
stepper combines real stage weights with the complex-linear kinetic flow, so
every step is a real-linear map: the doubled ``(Re f, Im f)`` system.

The pairing enters with a minus sign and acts on ``conj(f)``: this is the
Heisenberg flow of ``phi+(f)`` under the quadratic generator whose pairing
part is ``+1/2 int K2 a*a* + h.c.``, and it is the convention for which
``||f_{0;t}||^2`` matches the exact many-body variance as ``N`` grows.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FluctuationInstabilityError
from .hartree import HartreeFrame, HartreeTrajectory, strang_step
from .lattice import Lattice, Observable, WaveFunction

log = logging.getLogger(__name__)

NORM_GUARD = 1e6


@dataclass(frozen=True)
class FluctuationField:
    lattice: Lattice
    s: float
    t: float
    f: np.ndarray = field(repr=False)

    @property
    def norm(self) -> float:
        return self.lattice.norm(self.f)


@dataclass(frozen=True)
class FluctuationSolution:
    """``f_{s;t}`` on the trajectory grid ``0 = s_0 < ... < s_K = t``."""

    lattice: Lattice
    times: np.ndarray
    fields: np.ndarray = field(repr=False)
    drift: np.ndarray = field(repr=False)

    @property
    def norms(self) -> np.ndarray:
        return np.array([self.lattice.norm(f) for f in self.fields])

    def at(self, k: int) -> FluctuationField:
        return FluctuationField(self.lattice, float(self.times[k]), float(self.times[-1]), self.fields[k])

    @property
    def initial(self) -> FluctuationField:
        return self.at(0)

    @property
    def final(self) -> FluctuationField:
        return self.at(-1)


def terminal_condition(O: Observable, frame_t: HartreeFrame) -> FluctuationField:
    """``q_t O phi_t = O phi_t - <phi_t, O phi_t> phi_t``."""
    phi = frame_t.phi
    of = O.apply(phi.values)
    f = of - phi.lattice.inner(phi.values, of) * phi.values
    return FluctuationField(phi.lattice, frame_t.time, frame_t.time, f)


def _coupling(frame: HartreeFrame, f, projected=True, include_k2=True) -> np.ndarray:
    """Everything in the generator except ``-Laplacian``."""
    pair = frame.k1(f)
    if include_k2:
        pair = pair - frame.k2(np.conj(f))
    if projected:
        phi = frame.phi
        pair = pair - phi.lattice.inner(phi.values, pair) * phi.values
    return frame.potential * f + pair


def apply_generator(frame: HartreeFrame, f, projected=True, include_k2=True) -> np.ndarray:
    """``h_H f + K1 f - K2 conj(f)``, with the kernel part projected by ``q_s`` if requested."""
    return -frame.phi.lattice.laplacian(f) + _coupling(frame, f, projected, include_k2)


def _free(lat, f, tau):
    """``exp(i tau Laplacian) f``, the exact kinetic flow over signed time ``tau``."""
    return np.fft.ifftn(np.exp(-1j * tau * lat.k2) * np.fft.fftn(f))


def _rk4(frames, f, h, **gen):
    """One integrating-factor RK4 step of ``df/ds = -i G(s) f`` with signed step ``h``.

    The kinetic part is propagated exactly and RK4 handles the bounded
    remainder, so the step size is not limited by ``|k|^2_max``.
    ``frames`` = (start, mid, end).
    """
    lat = frames[0].phi.lattice
    rhs = lambda fr, y: -1j * _coupling(fr, y, **gen)
    E = lambda y, tau: _free(lat, y, tau)
    half = 0.5 * h
    fh = E(f, half)
    k1 = rhs(frames[0], f)
    k2 = rhs(frames[1], fh + half * E(k1, half))
    k3 = rhs(frames[1], fh + half * k2)
    k4 = rhs(frames[2], E(f, h) + h * E(k3, half))
    return E(f, h) + h / 6 * (E(k1, h) + 2 * E(k2 + k3, half) + k4)


def _integrate(f_start, traj: HartreeTrajectory, backward: bool, projected=True,
               include_k2=True, reproject=True) -> FluctuationSolution:
    lat = traj.lattice
    K = len(traj) - 1
    fields = np.empty((K + 1,) + lat.shape, complex)
    drift = np.zeros(K + 1)
    start = K if backward else 0
    fields[start] = f_start
    norm0 = lat.norm(f_start)
    order = range(K, 0, -1) if backward else range(0, K)
    for k in order:
        j = k - 1 if backward else k + 1
        h = traj.times[j] - traj.times[k]
        mid = WaveFunction(lat, strang_step(traj.states[k], traj.v, 0.5 * h))
        frames = (traj.frame(k), HartreeFrame(mid, traj.v, traj.times[k] + 0.5 * h), traj.frame(j))
        f = _rk4(frames, fields[k], h, projected=projected, include_k2=include_k2)
        phi_j = traj.states[j]
        overlap = lat.inner(phi_j, f)
        nf = lat.norm(f)
        drift[j] = abs(overlap) / nf if nf > 0 else 0.0
        if reproject:
            f = f - overlap * phi_j
        if not np.all(np.isfinite(f)) or (norm0 > 0 and lat.norm(f) > NORM_GUARD * norm0):
            raise FluctuationInstabilityError(
                f"fluctuation norm blew up at s = {traj.times[j]:.6g} "
                f"(|f| = {lat.norm(f):.3e}, terminal {norm0:.3e})")
        fields[j] = f
    log.debug("fluctuation solve: max pre-projection drift %.3e", drift.max())
    return FluctuationSolution(lat, traj.times.copy(), fields, drift)


def solve_backward(fT: FluctuationField, traj: HartreeTrajectory, **options) -> FluctuationSolution:
    """Integrate ``i d_s f = h_H(s) f + K1(s) f - K2(s) conj(f)`` from ``s = t`` down to 0.

    ``traj`` must end at ``t``.  Options: ``projected`` (apply ``q_s`` to the
    kernel terms, default True), ``include_k2`` (drop the pairing term when
    False), ``reproject`` (enforce ``f ⊥ phi_s`` after every step).
    """
    if abs(traj.times[-1] - fT.t) > 1e-9 * max(1.0, fT.t):
        raise ValueError(f"trajectory ends at {traj.times[-1]}, terminal time is {fT.t}")
    return _integrate(fT.f, traj, backward=True, **options)


def solve_forward(f0: np.ndarray, traj: HartreeTrajectory, **options) -> FluctuationSolution:
    """Same equation integrated upward from ``s = 0`` (used for reversibility checks)."""
    return _integrate(np.asarray(f0, complex), traj, backward=False, **options)


def solve_for_observable(O: Observable, traj: HartreeTrajectory, t=None, **options) -> FluctuationSolution:
    if t is not None:
        traj = traj.truncated(traj.index_of(t))
    fT = terminal_condition(O, traj.frame(len(traj) - 1))
    return solve_backward(fT, traj, **options)


def variance(O: Observable, traj: HartreeTrajectory, t=None, **options) -> float:
    """Limiting CLT variance ``alpha_t^2 = ||f_{0;t}||^2``."""
    sol = solve_for_observable(O, traj, t, **options)
    return sol.lattice.norm(sol.fields[0]) ** 2
