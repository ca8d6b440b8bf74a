"""Truncated bosonic Fock space over modes orthogonal to the condensate.

States live on ``⊕_{n <= n_cut}`` symmetric tensors over ``M`` abstract modes.
With ``n_cut = N`` this is exactly the excitation space of an ``N``-boson
system, and every ``b``-operator identity below holds as an exact matrix
equality: ``b*`` annihilates the top sector through its ``sqrt(1 - N+/N)``
factor, so nothing is lost to truncation.  For ``n_cut < N`` the identities
are compared on the interior block ``N+ <= n_cut - 2``.

Mode vectors are coefficient arrays; ``<g, h> = sum conj(g) h``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from ._occupation import OccupationBasis, basis_dimension
from .errors import DimensionCapError

FOCK_DIM_CAP = 5000


def _ip(g, h):
    return np.sum(np.conj(g) * h)


def _nrm(h):
    return np.sqrt(_ip(h, h).real)


def sinh_ratio(r):
    """``sinh(r) / r``."""
    return 1.0 if r < 1e-8 else np.sinh(r) / r


def cosh_ratio(r):
    """``(cosh(r) - 1) / r^2``, written to avoid cancellation."""
    return 0.5 if r < 1e-8 else 2 * (np.sinh(r / 2) / r) ** 2


def sinh_excess_ratio(r):
    """``(sinh(r) - r) / r^3``."""
    if r < 1e-3:
        return 1 / 6 + r**2 / 120 + r**4 / 5040
    return (np.sinh(r) - r) / r**3


def expm_hermitian(A, scale=1.0):
    """``exp(scale * A)`` for Hermitian ``A`` via eigendecomposition."""
    w, V = np.linalg.eigh(A)
    return (V * np.exp(scale * w)) @ V.conj().T


class FockSpace:
    """Truncated Fock space ``F^{<= n_cut}`` over ``M`` modes with particle parameter ``N``."""

    def __init__(self, M: int, N: int, n_cut: int = None, dim_cap: int = FOCK_DIM_CAP,
                 dtype=np.complex128):
        n_cut = N if n_cut is None else n_cut
        if n_cut > N:
            raise ValueError(f"n_cut = {n_cut} exceeds N = {N}: sqrt(1 - N+/N) would be imaginary")
        if M < 1 or N < 1 or n_cut < 0:
            raise ValueError("need M >= 1, N >= 1, n_cut >= 0")
        dim = basis_dimension(M + 1, n_cut)
        if dim > dim_cap:
            raise DimensionCapError(f"Fock dimension {dim} exceeds cap {dim_cap}")
        self.M, self.N, self.n_cut = M, N, n_cut
        self._basis = OccupationBasis(M + 1, n_cut)
        self.occupations = self._basis.occ[:, 1:]
        self.totals = self.occupations.sum(axis=1)
        self.dim = self._basis.dim
        self.dtype = np.dtype(dtype)
        self._real = np.finfo(self.dtype).dtype.type

    def __repr__(self):
        return f"FockSpace(M={self.M}, N={self.N}, n_cut={self.n_cut}, dim={self.dim})"

    @property
    def sqrtN(self):
        return np.sqrt(self._real(self.N))

    @property
    def expected_dim(self) -> int:
        return sum(basis_dimension(self.M, n) for n in range(self.n_cut + 1))

    @property
    def exact(self) -> bool:
        """True when the truncation coincides with the physical space (``n_cut = N``)."""
        return self.n_cut == self.N

    def interior(self, reach=2) -> np.ndarray:
        return self.totals <= self.n_cut - reach

    def index(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int64)
        full = np.concatenate([[self.n_cut - occ.sum()], occ])
        return int(self._basis.rank(full)[0])

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, self.dtype)
        v[self.index([0] * self.M)] = 1
        return v

    @cached_property
    def _creators(self):
        ops = []
        for j in range(self.M):
            cols, rows, _, n_dst = self._basis.shift(0, j + 1)
            ops.append((rows, cols, np.sqrt((n_dst + 1).astype(self._real))))
        return ops

    @cached_property
    def number(self) -> np.ndarray:
        return np.diag(self.totals.astype(self.dtype))

    @cached_property
    def sqrt_factor(self) -> np.ndarray:
        """``sqrt(1 - N+/N)``, diagonal."""
        n = self.totals.astype(self._real)
        return np.diag(np.sqrt(1 - n / self._real(self.N)).astype(self.dtype))

    @cached_property
    def depletion(self) -> np.ndarray:
        """``1 - N+/N``, diagonal."""
        n = self.totals.astype(self._real)
        return np.diag((1 - n / self._real(self.N)).astype(self.dtype))

    def _check_mode(self, f):
        f = np.asarray(f, dtype=self.dtype)
        if f.shape != (self.M,):
            raise ValueError(f"mode vector must have length {self.M}, got shape {f.shape}")
        return f

    def a_dag(self, f) -> np.ndarray:
        f = self._check_mode(f)
        out = np.zeros((self.dim, self.dim), self.dtype)
        for fj, (rows, cols, vals) in zip(f, self._creators):
            if fj != 0:
                np.add.at(out, (rows, cols), fj * vals)
        return out

    def a(self, f) -> np.ndarray:
        return self.a_dag(f).conj().T

    def b(self, f) -> np.ndarray:
        return self.sqrt_factor @ self.a(f)

    def b_dag(self, f) -> np.ndarray:
        return self.a_dag(f) @ self.sqrt_factor

    def phi_plus(self, f) -> np.ndarray:
        return self.b(f) + self.b_dag(f)

    def phi_minus(self, f) -> np.ndarray:
        return -1j * (self.b(f) - self.b_dag(f))

    def i_phi_minus(self, f) -> np.ndarray:
        return self.b(f) - self.b_dag(f)

    def hop(self, g1, g2) -> np.ndarray:
        """``a*(g1) a(g2)``."""
        return self.a_dag(g1) @ self.a(g2)

    def dGamma(self, A, hermitian=True) -> np.ndarray:
        """``sum_ij A_ij a*_i a_j``."""
        A = np.asarray(A, dtype=self.dtype)
        if A.shape != (self.M, self.M):
            raise ValueError(f"mode matrix must be {self.M}x{self.M}")
        if hermitian and np.max(np.abs(A - A.conj().T)) > 1e-12:
            raise ValueError("dGamma: matrix is not Hermitian")
        padded = np.zeros((self.M + 1, self.M + 1), self.dtype)
        padded[1:, 1:] = A
        return self._basis.one_body_dense(padded, self.dtype)

    def unit(self, j) -> np.ndarray:
        e = np.zeros(self.M, self.dtype)
        e[j] = 1
        return e

    def random_mode(self, rng, scale=1.0) -> np.ndarray:
        h = rng.normal(size=self.M) + 1j * rng.normal(size=self.M)
        return (scale * h / np.linalg.norm(h)).astype(self.dtype)

    def random_vector(self, rng, mask=None) -> np.ndarray:
        xi = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        if mask is not None:
            xi = np.where(mask, xi, 0)
        return (xi / np.linalg.norm(xi)).astype(self.dtype)


@dataclass(frozen=True)
class FockOps:
    a: np.ndarray
    a_dag: np.ndarray
    b: np.ndarray
    b_dag: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray


def build_ops(space: FockSpace, f) -> FockOps:
    b = space.b(f)
    bd = space.b_dag(f)
    return FockOps(space.a(f), space.a_dag(f), b, bd, b + bd, -1j * (b - bd))


def commutator(X, Y):
    return X @ Y - Y @ X


def ad_power(X, Y, n: int):
    """``ad_X^(n)(Y)``: ``Y`` for ``n = 0``, else ``[X, ad_X^(n-1)(Y)]``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = Y
    for _ in range(n):
        out = commutator(X, out)
    return out


def residual(space: FockSpace, diff, reach=2, scale=1.0) -> dict:
    """Max-abs residual over the full space and over interior input vectors.

    With ``scale`` the entries are divided by ``max(1, scale)``, which turns
    them into relative residuals for operators with large entries.
    """
    diff = np.asarray(diff)
    mask = space.interior(reach)
    s = max(1.0, float(scale))
    interior = float(np.max(np.abs(diff[:, mask]), initial=0.0)) / s
    full = float(np.max(np.abs(diff), initial=0.0)) / s
    return {"full": full, "interior": interior, "asserted": full if space.exact else interior}


# -- commutation relations and bounds ------------------------------------------------


def verify_commutators(space: FockSpace, f, g, H=None) -> dict:
    """Residuals of the b/phi commutation relations for mode vectors ``f``, ``g``.

    Relations use ``h = f``; ``H`` (Hermitian mode matrix) defaults to a
    fixed non-trivial matrix built from ``f`` and ``g``.
    """
    h = np.asarray(f, complex)
    g = np.asarray(g, complex)
    g1, g2 = g, h
    if H is None:
        H = np.outer(g, g.conj()) + np.outer(h, h.conj()) + np.diag(np.arange(1, space.M + 1))
    N = space.N
    bg, bh, bdg, bdh = space.b(g), space.b(h), space.b_dag(g), space.b_dag(h)
    Np = space.number
    dG = space.dGamma(H)
    Hh = np.asarray(H) @ h
    hop12 = space.hop(g1, g2)
    rel = {
        "[b(g),b(h)]": commutator(bg, bh),
        "[b*(g),b*(h)]": commutator(bdg, bdh),
        "[b(g),b*(h)]": commutator(bg, bdh)
        - (_ip(g, h) * space.depletion - space.hop(h, g) / N),
        "[phi+(h),i phi-(g)]": commutator(space.phi_plus(h), space.i_phi_minus(g))
        - (-2 * _ip(h, g).real * space.depletion + space.hop(g, h) / N + space.hop(h, g) / N),
        "[b(h),a*(g1)a(g2)]": commutator(bh, hop12) - _ip(h, g1) * space.b(g2),
        "[b*(h),a*(g1)a(g2)]": commutator(bdh, hop12) + _ip(g2, h) * space.b_dag(g1),
        "[phi+(h),N+]": commutator(space.phi_plus(h), Np) - space.i_phi_minus(h),
        "[i phi-(h),N+]": commutator(space.i_phi_minus(h), Np) - space.phi_plus(h),
        "[phi+(h),dG(H)]": commutator(space.phi_plus(h), dG) - space.i_phi_minus(Hh),
        "[i phi-(h),dG(H)]": commutator(space.i_phi_minus(h), dG) - space.phi_plus(Hh),
    }
    return {name: residual(space, R) for name, R in rel.items()}


def verify_bounds(space: FockSpace, h, H, rng, n_draws=100) -> dict:
    """Slack of ``||b(h)xi|| <= ||h|| ||N+^1/2 xi||``, its ``b*`` twin, and ``±dG(H) <= ||H|| N+``.

    Negative slack means violation.
    """
    bh, bdh = space.b(h), space.b_dag(h)
    nh = _nrm(h)
    n = space.totals
    worst_b = worst_bd = np.inf
    for _ in range(n_draws):
        xi = space.random_vector(rng)
        worst_b = min(worst_b, nh * np.sqrt(np.sum(n * np.abs(xi) ** 2)) - np.linalg.norm(bh @ xi))
        worst_bd = min(worst_bd, nh * np.sqrt(np.sum((n + 1) * np.abs(xi) ** 2)) - np.linalg.norm(bdh @ xi))
    dG = space.dGamma(H)
    opn = np.linalg.norm(H, 2)
    bound = opn * space.number
    eig_plus = np.linalg.eigvalsh(bound - dG).min()
    eig_minus = np.linalg.eigvalsh(bound + dG).min()
    return {"b": float(worst_b), "b*": float(worst_bd), "dGamma": float(min(eig_plus, eig_minus))}


# -- nested commutators ----------------------------------------------------------------


def nested_commutator_odd(space: FockSpace, h, g, n: int) -> np.ndarray:
    """Closed form of ``ad^(2n+1)_{sqrt(N) phi+(h)}(b(g))``."""
    sN = space.sqrtN
    h, g = np.asarray(h, space.dtype), np.asarray(g, space.dtype)
    r2, ip = _nrm(h) ** 2, _ip(g, h)
    out = -(4**n) * sN * r2**n * ip * space.depletion
    if n > 0:
        out = out + (4**n - 1) / sN * r2 ** (n - 1) * ip * space.hop(h, h)
    return out + r2**n / sN * space.hop(h, g)


def nested_commutator_even(space: FockSpace, h, g, n: int) -> np.ndarray:
    """Closed form of ``ad^(2n)_{sqrt(N) phi+(h)}(b(g))`` for ``n >= 1``."""
    if n < 1:
        raise ValueError("even formula holds for n >= 1")
    h, g = np.asarray(h, space.dtype), np.asarray(g, space.dtype)
    r2, ip = _nrm(h) ** 2, _ip(g, h)
    return ((2 ** (2 * n - 1) - 1) * r2 ** (n - 1) * ip * space.i_phi_minus(h)
            + r2**n * space.b(g) - r2 ** (n - 1) * ip * space.b_dag(h))


def verify_nested_commutators(space: FockSpace, h, g, n_max: int) -> dict:
    """Relative residuals of the odd (``n = 0..n_max``) and even (``n = 1..n_max``) formulas.

    Without ``n_cut = N`` an order-``k`` commutator is only compared on
    inputs with ``N+ <= n_cut - k - 1``.  Each nested commutator roughly doubles the entry size, so float64 loses
    about one bit per order; pass a ``FockSpace`` built with
    ``dtype=np.clongdouble`` for high orders.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    X = space.sqrtN * space.phi_plus(h)
    out = {}
    current = space.b(g)
    for order in range(1, 2 * n_max + 2):
        current = commutator(X, current)
        n, odd = divmod(order, 2)
        if odd:
            closed = nested_commutator_odd(space, h, g, n)
            out[f"odd n={n}"] = residual(space, current - closed, order + 1, np.max(np.abs(closed)))
        else:
            closed = nested_commutator_even(space, h, g, n)
            out[f"even n={n}"] = residual(space, current - closed, order + 1, np.max(np.abs(closed)))
    return out


# -- conjugation by exp(sqrt(N) phi+(h)) -----------------------------------------------


@dataclass(frozen=True)
class Conjugation:
    lhs: np.ndarray
    rhs: np.ndarray
    residual: dict


def _b_conjugated(space, h, g):
    N, r = space.N, _nrm(h)
    ga, c1, c2 = np.cosh(r), sinh_ratio(r), cosh_ratio(r)
    ip = _ip(g, h)
    return (ga * space.b(g) + ga * c2 * ip * space.i_phi_minus(h) - c2 * ip * space.b_dag(h)
            - np.sqrt(N) * ga * c1 * ip * space.depletion
            + c1 * c2 * ip / np.sqrt(N) * space.hop(h, h) + c1 / np.sqrt(N) * space.hop(h, g))


def _hop_conjugated(space, h, g1, g2):
    """Closed form for ``a*(g1) a(g2)``, the kernel formula for ``a*_x a_y`` integrated."""
    N, r = space.N, _nrm(h)
    c1, c2 = sinh_ratio(r), cosh_ratio(r)
    p, q = _ip(h, g1), _ip(g2, h)
    return (space.hop(g1, g2) + np.sqrt(N) * c1 * (p * space.b(g2) - q * space.b_dag(g1))
            - N * c1**2 * p * q * space.depletion
            + c2 * (p * space.hop(h, g2) + q * space.hop(g1, h))
            + np.sqrt(N) * c1 * c2 * p * q * space.i_phi_minus(h)
            + c2**2 * p * q * space.hop(h, h))


def _dgamma_conjugated(space, h, H):
    N, r = space.N, _nrm(h)
    c1, c2 = sinh_ratio(r), cosh_ratio(r)
    Hh = np.asarray(H) @ h
    hHh = _ip(h, Hh).real
    return (space.dGamma(H) + np.sqrt(N) * c1 * space.i_phi_minus(Hh)
            - N * c1**2 * hHh * space.depletion
            + c2 * (space.hop(h, Hh) + space.hop(Hh, h))
            + np.sqrt(N) * c1 * c2 * hHh * space.i_phi_minus(h)
            + c2**2 * hHh * space.hop(h, h))


def conjugate_by_field_exp(space: FockSpace, h, target: str, *args, overflow=1e12) -> Conjugation:
    """``exp(sqrt(N) phi+(h)) T exp(-sqrt(N) phi+(h))`` by dense exponentials and closed form.

    ``target`` is one of ``"b"`` (arg ``g``), ``"b*"`` (arg ``g``),
    ``"hop"`` (args ``g1, g2`` for ``a*(g1) a(g2)``), ``"axay"`` (mode
    indices ``x, y``), ``"bx"`` (mode index ``x``), ``"dGamma"`` (arg ``H``).
    """
    h = np.asarray(h, complex)
    X = np.sqrt(space.N) * space.phi_plus(h)
    w, V = np.linalg.eigh(X)
    if np.max(np.abs(w), initial=0.0) > np.log(overflow):
        raise OverflowError(f"exp(sqrt(N) phi+(h)) exceeds {overflow:g}; reduce ||h|| or N")
    E = (V * np.exp(w)) @ V.conj().T
    Einv = (V * np.exp(-w)) @ V.conj().T
    if target == "b":
        (g,) = args
        T, rhs = space.b(g), _b_conjugated(space, h, g)
    elif target == "bx":
        (x,) = args
        e = space.unit(x)
        T, rhs = space.b(e), _b_conjugated(space, h, e)
    elif target == "b*":
        (g,) = args
        T, rhs = space.b_dag(g), _b_conjugated(space, -h, g).conj().T
    elif target == "hop":
        g1, g2 = args
        T, rhs = space.hop(g1, g2), _hop_conjugated(space, h, g1, g2)
    elif target == "axay":
        x, y = args
        ex, ey = space.unit(x), space.unit(y)
        T, rhs = space.hop(ex, ey), _hop_conjugated(space, h, ex, ey)
    elif target == "dGamma":
        (H,) = args
        T, rhs = space.dGamma(H), _dgamma_conjugated(space, h, H)
    else:
        raise ValueError(f"unknown conjugation target {target!r}")
    lhs = E @ T @ Einv
    return Conjugation(lhs, rhs, residual(space, lhs - rhs))


def truncation_convergence(M: int, N: int, h, target: str, *args, n_cuts, support=1, seed=0) -> list:
    """Residual ``||(lhs - rhs) xi||`` of a field-exponential conjugation as ``n_cut`` grows.

    ``xi`` is a fixed random vector supported on ``N+ <= support``; it is
    drawn once on the largest space and restricted to each smaller one.
    """
    n_cuts = sorted(n_cuts)
    big = FockSpace(M, N, n_cuts[-1])
    xi_big = big.random_vector(np.random.default_rng(seed), mask=big.totals <= support)
    lookup = {tuple(o): xi_big[k] for k, o in enumerate(big.occupations)}
    out = []
    for nc in n_cuts:
        space = FockSpace(M, N, nc)
        xi = np.array([lookup[tuple(o)] for o in space.occupations])
        conj = conjugate_by_field_exp(space, h, target, *args)
        out.append(float(np.linalg.norm((conj.lhs - conj.rhs) @ xi)))
    return out


def conjugate_by_number_exp(space: FockSpace, s: float, target: str, h) -> Conjugation:
    """``exp(-s N+) T exp(s N+)`` for ``T`` in ``b``, ``b*``, ``phi+``, ``i phi-``."""
    d = np.exp(-s * space.totals)
    left, right = np.diag(d), np.diag(1 / d)
    ch, sh = np.cosh(s), np.sinh(s)
    if target == "b":
        T = space.b(h)
        rhs = np.exp(s) * T
    elif target == "b*":
        T = space.b_dag(h)
        rhs = np.exp(-s) * T
    elif target == "phi+":
        T = space.phi_plus(h)
        rhs = ch * T + sh * space.i_phi_minus(h)
    elif target == "i phi-":
        T = space.i_phi_minus(h)
        rhs = ch * T + sh * space.phi_plus(h)
    else:
        raise ValueError(f"unknown target {target!r}")
    lhs = left @ T @ right
    return Conjugation(lhs, rhs, residual(space, lhs - rhs))


# -- time derivative of exp(sqrt(N) phi+(h_t)) ------------------------------------------


def time_derivative_closed_form(space: FockSpace, h, dh) -> np.ndarray:
    """Operator ``[d_t exp(sqrt(N) phi+(h_t))] exp(-sqrt(N) phi+(h_t))`` from ``h_t`` and ``d_t h_t``."""
    N, r = space.N, _nrm(h)
    h, dh = np.asarray(h, complex), np.asarray(dh, complex)
    c1, c2, c3 = sinh_ratio(r), cosh_ratio(r), sinh_excess_ratio(r)
    re, im = _ip(dh, h).real, _ip(dh, h).imag
    return (np.sqrt(N) * c1 * space.phi_plus(dh)
            - np.sqrt(N) * c1 * c2 * im * space.phi_minus(h)
            - np.sqrt(N) * c3 * re * space.phi_plus(h)
            - 1j * N * c1**2 * im * space.depletion
            + 1j * c2**2 * im * space.hop(h, h)
            + c2 * (space.hop(h, dh) - space.hop(dh, h)))


def time_derivative_fd(space: FockSpace, path, t: float, delta: float) -> np.ndarray:
    """Central finite difference of ``exp(sqrt(N) phi+(h_t))`` times ``exp(-sqrt(N) phi+(h_t))``."""
    if not delta > 0:
        raise ValueError("finite-difference step must be positive")
    sN = np.sqrt(space.N)
    plus = expm_hermitian(sN * space.phi_plus(path(t + delta)))
    minus = expm_hermitian(sN * space.phi_plus(path(t - delta)))
    return (plus - minus) / (2 * delta) @ expm_hermitian(sN * space.phi_plus(path(t)), -1.0)


def verify_time_derivative(space: FockSpace, path, dpath, t: float, delta: float) -> dict:
    fd = time_derivative_fd(space, path, t, delta)
    closed = time_derivative_closed_form(space, path(t), dpath(t))
    return residual(space, fd - closed)


def rotating_path(h0):
    """``h_t = exp(i t) h0`` and its derivative."""
    h0 = np.asarray(h0, complex)
    return (lambda t: np.exp(1j * t) * h0), (lambda t: 1j * np.exp(1j * t) * h0)


# -- vacuum computations ---------------------------------------------------------------


def bstar_power_norm(space: FockSpace, h, n: int):
    """``||b*(h)^n Omega||^2`` by matrix powers, and its closed form."""
    N = space.N
    v = space.vacuum()
    bd = space.b_dag(h)
    for _ in range(n):
        v = bd @ v
    dense = float(np.vdot(v, v).real)
    if n > N:
        return dense, 0.0
    from math import factorial
    closed = factorial(N - 1) / (N ** (n - 1) * factorial(N - n)) * factorial(n) * _nrm(h) ** (2 * n)
    return dense, closed


def vacuum_mgf_identity(space: FockSpace, h, lam_kappa: float):
    """``<e^{sqrt(N) b*(h)} Omega, e^{lam_kappa N+} e^{sqrt(N) b*(h)} Omega>`` vs ``(1 + ||h||^2 e^{lam_kappa})^N``."""
    if not space.exact:
        raise ValueError("vacuum MGF identity needs n_cut = N")
    N = space.N
    v = sla.expm(np.sqrt(N) * space.b_dag(h)) @ space.vacuum()
    lhs = float(np.sum(np.abs(v) ** 2 * np.exp(lam_kappa * space.totals)))
    rhs = float((1 + _nrm(h) ** 2 * np.exp(lam_kappa)) ** N)
    return lhs, rhs


# -- lattice bridge --------------------------------------------------------------------


def orthonormal_complement(phi_amplitudes, fields=None) -> np.ndarray:
    """Orthonormal basis (columns) with first column ``phi`` and the rest ``⊥ phi``.

    Extra columns come from Gram-Schmidt on ``fields`` (orthonormal-basis
    coefficient vectors), padded with site unit vectors if needed.
    """
    phi = np.asarray(phi_amplitudes, complex).reshape(-1)
    n = phi.size
    cand = [phi / np.linalg.norm(phi)]
    extra = [] if fields is None else [np.asarray(f, complex).reshape(-1) for f in fields]
    extra += list(np.eye(n, dtype=complex))
    for v in extra:
        for _ in range(2):
            for c in cand:
                v = v - np.vdot(c, v) * c
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            cand.append(v / nv)
        if len(cand) == n:
            break
    return np.column_stack(cand)


# -- full identity battery -------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    residual: float
    tolerance: float
    asserted: bool = True

    @property
    def passed(self) -> bool:
        return (not self.asserted) or self.residual <= self.tolerance

    def as_dict(self) -> dict:
        return {"residual": self.residual, "tolerance": self.tolerance,
                "asserted": self.asserted, "passed": self.passed}


def _random_hermitian(rng, M):
    A = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    return (A + A.conj().T) / 2


def identity_suite(M: int, N: int, n_cut: int = None, seed: int = 0, h_norm=0.4,
                   nested_order=6) -> dict:
    """Every operator identity of this module on one ``(M, N, n_cut)``, as named :class:`Check` s.

    Exponential conjugations are only asserted when ``n_cut = N``; otherwise
    their truncation-edge residual is recorded with ``asserted=False``.
    """
    space = FockSpace(M, N, n_cut)
    exact = space.exact
    rng = np.random.default_rng(seed)
    f = space.random_mode(rng, 0.8)
    g = space.random_mode(rng, 0.6)
    h = space.random_mode(rng, h_norm)
    H = _random_hermitian(rng, M)
    out = {}

    for name, r in verify_commutators(space, f, g).items():
        out[name] = Check(r["asserted"], 1e-10)

    n_nested = nested_order if exact else min(nested_order, (space.n_cut - 3) // 2)
    if n_nested >= 1:
        wide = FockSpace(M, N, space.n_cut, dtype=np.clongdouble) if exact else space
        for name, r in verify_nested_commutators(wide, h, g, n_nested).items():
            out[f"nested {name}"] = Check(r["asserted"], 1e-9)

    targets = [("b", (g,)), ("b*", (g,)), ("hop", (g, f)), ("axay", (0, M - 1)),
               ("bx", (M - 1,)), ("dGamma", (H,))]
    for target, args in targets:
        conj = conjugate_by_field_exp(space, h, target, *args)
        out[f"field-exp {target}"] = Check(conj.residual["full" if exact else "interior"], 1e-8, exact)

    for s in (0.7, np.log(2.0), -0.4):
        for target in ("b", "b*", "phi+", "i phi-"):
            conj = conjugate_by_number_exp(space, s, target, f)
            out[f"number-exp {target} s={s:.4g}"] = Check(conj.residual["full"], 1e-12)

    path, dpath = rotating_path(h)
    deltas = (1e-3, 5e-4, 1e-4)
    td = [verify_time_derivative(space, path, dpath, 0.3, d)["full" if exact else "interior"]
          for d in deltas]
    out["time-derivative delta=1e-4"] = Check(td[2], 1e-6, exact)
    ratio = td[0] / td[1] if td[1] > 0 else np.inf
    out["time-derivative O(delta^2) ratio"] = Check(abs(ratio - 4.0), 0.5, exact)

    bounds = verify_bounds(space, f, H, rng)
    for name, slack in bounds.items():
        out[f"bound {name}"] = Check(max(0.0, -slack), 1e-10)

    if exact:
        for n in range(N + 1):
            dense, closed = bstar_power_norm(space, h, n)
            out[f"b*^n vacuum n={n}"] = Check(abs(dense - closed) / max(1.0, closed), 1e-10)
        for lk in (0.0, 0.3, -0.5):
            lhs, rhs = vacuum_mgf_identity(space, h, lk)
            out[f"vacuum mgf lk={lk}"] = Check(abs(lhs - rhs) / rhs, 1e-10)
    return out
