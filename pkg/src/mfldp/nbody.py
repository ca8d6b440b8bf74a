"""Exact N-boson dynamics on a small lattice in the occupation-number basis.

Single-particle modes are the orthonormal site functions ``e_p = 1_{x_p} /
sqrt(w)``, so one-particle operators enter as their matrices on site values
(the quadrature weight is a scalar and drops out).  Statistics of
``dGamma(O)`` are computed exactly by rotating the state into the eigenmode
basis of ``O``, where ``dGamma(O)`` is diagonal.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln, logsumexp

from ._occupation import OccupationBasis, basis_dimension
from .errors import DimensionCapError, KrylovBreakdownError
from .fock import FockSpace, orthonormal_complement
from .lattice import Lattice, Observable, PairPotential, WaveFunction

log = logging.getLogger(__name__)

NBODY_DIM_CAP = 200_000
DENSE_DIM_CAP = 4000


class NBodySpace:
    """Symmetric ``N``-boson space over the sites of ``lattice``."""

    def __init__(self, lattice: Lattice, N: int, dim_cap: int = NBODY_DIM_CAP):
        if N < 1:
            raise ValueError("need N >= 1")
        dim = basis_dimension(lattice.n_sites, N)
        if dim > dim_cap:
            raise DimensionCapError(f"N-body dimension {dim} exceeds cap {dim_cap}")
        self.lattice = lattice
        self.N = N
        self.n_sites = lattice.n_sites
        self.basis = OccupationBasis(self.n_sites, N)
        self.dim = self.basis.dim

    def __repr__(self):
        return f"NBodySpace(sites={self.n_sites}, N={self.N}, dim={self.dim})"

    @property
    def occupations(self) -> np.ndarray:
        return self.basis.occ

    def one_body(self, A) -> sp.csr_matrix:
        """``dGamma(A)`` for a matrix ``A`` on the orthonormal site basis."""
        A = np.asarray(A)
        if A.shape != (self.n_sites, self.n_sites):
            raise ValueError(f"one-body matrix must be {self.n_sites}x{self.n_sites}")
        return self.basis.one_body(A)

    @cached_property
    def _lower(self) -> OccupationBasis:
        return OccupationBasis(self.n_sites, self.N - 1)

    def annihilate(self, coeffs, p: int) -> np.ndarray:
        """``a_p psi`` as a vector in the ``(N - 1)``-particle basis."""
        occ = self.basis.occ
        rows = np.nonzero(occ[:, p] > 0)[0]
        lowered = occ[rows].copy()
        lowered[:, p] -= 1
        out = np.zeros(self._lower.dim, complex)
        out[self._lower.rank(lowered)] = np.sqrt(occ[rows, p]) * coeffs[rows]
        return out


@dataclass(frozen=True)
class NBodyState:
    space: NBodySpace
    coeffs: np.ndarray = field(repr=False)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def inner(self, other: "NBodyState") -> complex:
        return complex(np.vdot(self.coeffs, other.coeffs))

    def expectation(self, op) -> float:
        return float(np.vdot(self.coeffs, op @ self.coeffs).real)


def hamiltonian(space: NBodySpace, v: PairPotential) -> sp.csr_matrix:
    """``sum T_pq a*_p a_q + (1/2N) sum v(x_p - x_q) a*_p a*_q a_q a_p``.

    The pair term is diagonal: ``(n.V.n - sum_p v(0) n_p) / 2N``.
    """
    space.lattice.check_same(v.lattice)
    kin = space.one_body(space.lattice.kinetic_matrix())
    n = space.occupations.astype(float)
    V = v.site_matrix()
    pair = (np.einsum("ip,pq,iq->i", n, V, n) - n @ np.diag(V)) / (2 * space.N)
    H = (kin + sp.diags(pair)).tocsr()
    return ((H + H.conj().T) / 2).tocsr()


def product_state(space: NBodySpace, phi: WaveFunction) -> NBodyState:
    """``phi^{(x) N}``: coefficient ``sqrt(N! / prod n_p!) prod c_p^{n_p}``."""
    if abs(phi.norm - 1) > 1e-10:
        raise ValueError(f"condensate must be normalized (norm {phi.norm!r})")
    space.lattice.check_same(phi.lattice)
    return NBodyState(space, _product_coeffs(space.basis, phi.site_amplitudes()))


def _product_coeffs(basis: OccupationBasis, c) -> np.ndarray:
    occ = basis.occ
    log_multinomial = 0.5 * (gammaln(basis.n_particles + 1) - gammaln(occ + 1).sum(axis=1))
    return np.exp(log_multinomial) * np.prod(np.asarray(c)[None, :] ** occ, axis=1)


# -- time evolution --------------------------------------------------------------------


def _lanczos_step(H, v, h, m):
    """``exp(-i h H) v`` from an ``m``-step Lanczos basis; returns (result, error estimate)."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy(), 0.0
    V = np.zeros((m + 1, v.size), complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / beta0
    k = m
    for j in range(m):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j else 0)
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13 * max(1.0, abs(alpha[j])):
            k = j + 1
            break
        V[j + 1] = w / beta[j]
    e, Q = sla.eigh_tridiagonal(alpha[:k], beta[: k - 1])
    y = Q @ (np.exp(-1j * h * e) * Q[0].conj())
    err = beta0 * beta[k - 1] * abs(y[-1]) if k == m else 0.0
    return beta0 * (V[:k].T @ y), err


def _krylov_evolve(H, v, t, dt, m, tol, max_halvings=12):
    n_steps = max(1, int(np.ceil(abs(t) / dt - 1e-12)))
    h0 = t / n_steps
    out = v
    for _ in range(n_steps):
        pending = [h0]
        while pending:
            h = pending.pop()
            cand, err = _lanczos_step(H, out, h, m)
            if err > tol:
                if abs(h) < abs(h0) / 2**max_halvings:
                    raise KrylovBreakdownError(f"Krylov error {err:.2e} persists at step {h:.2e}")
                pending += [h / 2, h / 2]
                continue
            out = cand
    return out


class Propagator:
    """``exp(-i t H)`` by dense eigendecomposition (small ``dim``) or Lanczos."""

    def __init__(self, H, method="auto", krylov_dim=30, dt=0.05, tol=1e-12,
                 dense_cap=DENSE_DIM_CAP):
        if method == "auto":
            method = "dense" if H.shape[0] <= dense_cap else "krylov"
        if method not in ("dense", "krylov"):
            raise ValueError(f"unknown propagation method {method!r}")
        if method == "dense" and H.shape[0] > dense_cap:
            raise DimensionCapError(f"dense propagation limited to dim {dense_cap}")
        self.H, self.method = H, method
        self.krylov_dim, self.dt, self.tol = krylov_dim, dt, tol
        if method == "dense":
            dense = H.toarray() if sp.issparse(H) else np.asarray(H)
            self._eig = np.linalg.eigh(dense)

    def apply(self, coeffs, t: float) -> np.ndarray:
        if t == 0:
            return np.array(coeffs, complex)
        if self.method == "dense":
            e, V = self._eig
            return V @ (np.exp(-1j * t * e) * (V.conj().T @ coeffs))
        return _krylov_evolve(self.H, np.asarray(coeffs, complex), t, self.dt,
                              self.krylov_dim, self.tol)


def evolve(psi0: NBodyState, H, t: float, dt: float = 0.05, method="auto", **options) -> NBodyState:
    """``psi_t = exp(-i t H_N) psi_0``."""
    prop = Propagator(H, method=method, dt=dt, **options)
    out = prop.apply(psi0.coeffs, t)
    drift = abs(np.linalg.norm(out) - psi0.norm)
    log.debug("nbody evolve (%s, dim %d): norm drift %.2e", prop.method, H.shape[0], drift)
    return NBodyState(psi0.space, out)


def evolve_many(psi0: NBodyState, H, times, dt: float = 0.05, method="auto", **options) -> list:
    """States at the sorted ``times``, stepping from one to the next."""
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be sorted and non-negative")
    prop = Propagator(H, method=method, dt=dt, **options)
    out, coeffs, last = [], psi0.coeffs, 0.0
    for s in times:
        coeffs = prop.apply(coeffs, s - last)
        last = s
        out.append(NBodyState(psi0.space, coeffs))
    return out


# -- change of single-particle basis ---------------------------------------------------


def rotate_modes(space: NBodySpace, coeffs, U) -> np.ndarray:
    """Coefficients of a state in the occupation basis of the modes ``U[:, k]``.

    With ``U = exp(iK)`` the second-quantized unitary is ``exp(i dGamma(K))``,
    so the new coefficients are ``exp(-i dGamma(K)) psi``.
    """
    U = np.asarray(U, complex)
    T, Z = sla.schur(U, output="complex")
    K = (Z * np.angle(np.diag(T))) @ Z.conj().T
    K = (K + K.conj().T) / 2
    return expm_multiply(-1j * space.one_body(K), np.asarray(coeffs, complex))


def unrotate_modes(space: NBodySpace, coeffs, U) -> np.ndarray:
    """Inverse of :func:`rotate_modes`."""
    return rotate_modes(space, coeffs, np.asarray(U, complex).conj().T)


# -- statistics of dGamma(O) ----------------------------------------------------------


@dataclass(frozen=True)
class SumDistribution:
    """Exact law of ``S = sum_j (O^(j) - center)`` in the state ``psi``."""

    N: int
    values: np.ndarray
    weights: np.ndarray

    def mgf(self, lam):
        lam = np.asarray(lam, float)
        return np.exp(self.log_mgf(lam))

    def log_mgf(self, lam):
        lam = np.asarray(lam, float)
        out = logsumexp(np.multiply.outer(lam, self.values), b=self.weights, axis=-1)
        return out

    def tail(self, x):
        """``P(S / N > x)``."""
        x = np.asarray(x, float)
        above = np.greater.outer(self.values / self.N, x)
        return np.tensordot(self.weights, above, axes=(0, 0))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.values)

    @property
    def variance(self) -> float:
        return float(self.weights @ (self.values - self.mean) ** 2)


def sum_distribution(psi: NBodyState, O: Observable, center: float = 0.0) -> SumDistribution:
    psi.space.lattice.check_same(O.lattice)
    o, W = np.linalg.eigh(O.matrix)
    rotated = rotate_modes(psi.space, psi.coeffs, W)
    weights = np.abs(rotated) ** 2
    weights = weights / weights.sum()
    values = psi.space.occupations @ o - psi.space.N * center
    return SumDistribution(psi.space.N, values, weights)


def mgf(psi: NBodyState, O: Observable, lam, center: float):
    """``<psi, exp(lam (dGamma(O) - N center)) psi>``."""
    out = sum_distribution(psi, O, center).mgf(lam)
    return float(out) if np.ndim(out) == 0 else out


def tail_probability(psi: NBodyState, O: Observable, x, center: float):
    """Spectral mass of ``(dGamma(O) - N center) / N`` strictly above ``x``."""
    out = sum_distribution(psi, O, center).tail(x)
    return float(out) if np.ndim(out) == 0 else out


def variance(psi: NBodyState, O: Observable) -> float:
    """``Var_psi(dGamma(O))``."""
    return sum_distribution(psi, O).variance


def reduced_density(psi: NBodyState) -> np.ndarray:
    """One-particle density matrix on the orthonormal site basis, trace one.

    ``gamma[x, y] = <psi, a*_y a_x psi> / N``.
    """
    space = psi.space
    A = np.column_stack([space.annihilate(psi.coeffs, p) for p in range(space.n_sites)])
    gamma = A.T @ A.conj() / space.N
    return (gamma + gamma.conj().T) / 2


# -- excision of the condensate --------------------------------------------------------


@dataclass(frozen=True)
class Excision:
    """Layers of ``psi`` relative to ``phi``.

    ``modes[:, 0]`` is ``phi``; ``fock_vector`` holds the coefficients in the
    rotated occupation basis, which coincides entry-by-entry with the basis
    of ``FockSpace(n_sites - 1, N)`` (the occupation of ``phi`` plays the
    role of the slack ``N - N+``).
    """

    space: NBodySpace
    modes: np.ndarray = field(repr=False)
    fock_vector: np.ndarray = field(repr=False)

    @cached_property
    def layers(self) -> list:
        """``eta_j`` as coefficient vectors over ``j`` excitations in the complement modes."""
        N = self.space.N
        n0 = self.space.occupations[:, 0]
        return [self.fock_vector[n0 == N - j] for j in range(N + 1)]

    def layer_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(e) for e in self.layers])

    def one_excitation_field(self) -> np.ndarray:
        """``eta_1`` as site amplitudes ``sum_k eta_1[k] u_k``."""
        return self.modes[:, 1:] @ self.layers[1]

    def reconstruct(self) -> NBodyState:
        """``sum_j eta_j (x)_s phi^{(x)(N - j)}`` back on the site basis."""
        return NBodyState(self.space, unrotate_modes(self.space, self.fock_vector, self.modes))


def excision(psi: NBodyState, phi: WaveFunction, fields=None) -> Excision:
    if abs(phi.norm - 1) > 1e-10:
        raise ValueError(f"condensate must be normalized (norm {phi.norm!r})")
    U = orthonormal_complement(phi.site_amplitudes(), fields)
    return Excision(psi.space, U, rotate_modes(psi.space, psi.coeffs, U))


def mgf_via_excision(psi: NBodyState, phi: WaveFunction, O: Observable, lam,
                     fock_cap: int = 5000):
    """MGF through the excitation picture.

    Evaluates ``<xi, exp(lam dGamma(q O~ q) + lam sqrt(N) phi+(q O phi)) xi>``
    on ``FockSpace(n_sites - 1, N, N)`` with ``xi`` the excised state and
    ``O~ = O - <phi, O phi>``.
    """
    exc = excision(psi, phi)
    U = exc.modes
    Or = U.conj().T @ O.matrix @ U
    center = Or[0, 0].real
    N = psi.space.N
    fs = FockSpace(psi.space.n_sites - 1, N, N, dim_cap=fock_cap)
    G = fs.dGamma(Or[1:, 1:] - center * np.eye(fs.M)) + np.sqrt(N) * fs.phi_plus(Or[1:, 0])
    G = (G + G.conj().T) / 2
    xi = exc.fock_vector
    w, V = np.linalg.eigh(G)
    amp = np.abs(V.conj().T @ xi) ** 2
    lam = np.asarray(lam, float)
    out = np.exp(np.multiply.outer(lam, w)) @ amp
    return float(out) if out.ndim == 0 else out
