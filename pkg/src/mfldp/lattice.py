"""Periodic lattice fields, spectral derivatives and convolutions.

Fields are complex arrays of shape ``(M,) * d`` sampling a function on the
box ``[-L/2, L/2)^d``.  Inner products carry the quadrature weight
``(L/M)^d`` so they approximate continuum integrals.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import LatticeMismatchError


@dataclass(frozen=True)
class Lattice:
    d: int = 1
    L: float = 2 * np.pi
    M: int = 64

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d must be 1, 2 or 3, got {self.d}")
        if self.M < 2:
            raise ValueError(f"need M >= 2 grid points, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

    @property
    def shape(self):
        return (self.M,) * self.d

    @property
    def n_sites(self) -> int:
        return self.M**self.d

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def weight(self) -> float:
        """Quadrature weight per site, ``(L/M)^d``."""
        return self.dx**self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.M)

    @cached_property
    def coords(self):
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    @cached_property
    def momentum_axis(self) -> np.ndarray:
        """Wavenumbers ``2 pi n / L`` in FFT order, ``n`` in ``[-M//2, ceil(M/2) - 1]``."""
        return 2 * np.pi * np.fft.fftfreq(self.M, d=self.dx)

    @cached_property
    def k2(self) -> np.ndarray:
        ks = np.meshgrid(*([self.momentum_axis] * self.d), indexing="ij")
        return sum(k**2 for k in ks)

    @property
    def k2_max(self) -> float:
        return float(self.k2.max())

    @cached_property
    def displacement(self):
        """Minimal-image displacement per axis for FFT-ordered offsets ``m * dx``."""
        m = np.arange(self.M)
        wrapped = np.minimum(m, self.M - m) * self.dx
        return np.meshgrid(*([wrapped] * self.d), indexing="ij")

    # array-level helpers; everything downstream funnels through these

    def inner(self, f, g) -> complex:
        return complex(np.vdot(f, g) * self.weight)

    def norm(self, f) -> float:
        return float(np.sqrt(np.vdot(f, f).real * self.weight))

    def fourier_norm(self, f) -> float:
        fk = np.fft.fftn(f)
        return float(np.sqrt(np.vdot(fk, fk).real / self.n_sites * self.weight))

    def laplacian(self, f) -> np.ndarray:
        return np.fft.ifftn(-self.k2 * np.fft.fftn(f))

    def convolve(self, kernel, f) -> np.ndarray:
        """Circular convolution ``sum_y kernel(x - y) f(y) (L/M)^d``."""
        return np.fft.ifftn(np.fft.fftn(kernel) * np.fft.fftn(f)) * self.weight

    def kinetic_matrix(self) -> np.ndarray:
        """Dense ``-Laplacian`` in the (orthonormal) site basis."""
        n = self.n_sites
        eye = np.eye(n).reshape((n,) + self.shape)
        axes = tuple(range(1, self.d + 1))
        cols = np.fft.ifftn(self.k2 * np.fft.fftn(eye, axes=axes), axes=axes)
        mat = cols.reshape(n, n).T
        return mat.real if np.allclose(mat.imag, 0, atol=1e-12) else mat

    def check_same(self, other: "Lattice"):
        if self != other:
            raise LatticeMismatchError(f"lattice mismatch: {self} vs {other}")


@dataclass(frozen=True)
class WaveFunction:
    lattice: Lattice
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).reshape(self.lattice.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("wave function has non-finite entries")
        object.__setattr__(self, "values", vals)

    @classmethod
    def normalized(cls, lattice: Lattice, values) -> "WaveFunction":
        vals = np.asarray(values, dtype=complex).reshape(lattice.shape)
        nrm = lattice.norm(vals)
        if nrm == 0:
            raise ValueError("cannot normalize the zero field")
        return cls(lattice, vals / nrm)

    @classmethod
    def gaussian(cls, lattice: Lattice, width=1.0, center=0.0, momentum=0.0):
        center = np.broadcast_to(np.asarray(center, float), (lattice.d,))
        momentum = np.broadcast_to(np.asarray(momentum, float), (lattice.d,))
        vals = np.ones(lattice.shape, complex)
        for x, c, k in zip(lattice.coords, center, momentum):
            vals = vals * np.exp(-((x - c) ** 2) / (2 * width**2) + 1j * k * x)
        return cls.normalized(lattice, vals)

    @classmethod
    def plane_wave(cls, lattice: Lattice, mode=1):
        """``exp(i k.x) / sqrt(L^d)`` with integer mode vector ``n``, ``k = 2 pi n / L``."""
        mode = np.broadcast_to(np.asarray(mode, float), (lattice.d,))
        phase = sum(2 * np.pi * n / lattice.L * x for n, x in zip(mode, lattice.coords))
        return cls(lattice, np.exp(1j * phase) / np.sqrt(lattice.L**lattice.d))

    @property
    def norm(self) -> float:
        return self.lattice.norm(self.values)

    def inner(self, other) -> complex:
        g = other.values if isinstance(other, WaveFunction) else other
        return self.lattice.inner(self.values, g)

    def site_amplitudes(self) -> np.ndarray:
        """Coefficients in the orthonormal site basis (flattened, times ``sqrt(weight)``)."""
        return self.values.reshape(-1) * np.sqrt(self.lattice.weight)

    def with_values(self, values) -> "WaveFunction":
        return WaveFunction(self.lattice, values)


@dataclass(frozen=True)
class PairPotential:
    """Real, even pair potential sampled on FFT-ordered displacements."""

    lattice: Lattice
    values: np.ndarray = field(repr=False)
    kind: str = "custom"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(self.lattice.shape)
        flipped = vals
        for ax in range(self.lattice.d):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        if not np.array_equal(vals, flipped):
            raise ValueError("pair potential must satisfy v(x) = v(-x) on the lattice")
        object.__setattr__(self, "values", vals)

    @classmethod
    def radial(cls, lattice: Lattice, func, kind="custom"):
        r = np.sqrt(sum(x**2 for x in lattice.displacement))
        return cls(lattice, func(r), kind)

    @classmethod
    def zero(cls, lattice):
        return cls(lattice, np.zeros(lattice.shape), "zero")

    @classmethod
    def constant(cls, lattice, value):
        return cls(lattice, np.full(lattice.shape, float(value)), "constant")

    @classmethod
    def gaussian(cls, lattice, strength=1.0, width=1.0):
        return cls.radial(lattice, lambda r: strength * np.exp(-(r**2) / (2 * width**2)), "gaussian")

    @property
    def norm_l1(self) -> float:
        return float(np.abs(self.values).sum() * self.lattice.weight)

    @property
    def norm_linf(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def at_origin(self) -> float:
        return float(self.values.flat[0])

    def site_matrix(self) -> np.ndarray:
        """``V[p, q] = v(x_p - x_q)`` over flattened sites."""
        lat = self.lattice
        idx = np.indices(lat.shape).reshape(lat.d, -1)
        diff = (idx[:, :, None] - idx[:, None, :]) % lat.M
        return self.values[tuple(diff)]


@dataclass(frozen=True)
class Observable:
    """Hermitian one-particle observable as a matrix acting on site values.

    ``matrix`` acts on fields (flattened); because the quadrature weight is a
    scalar, the same matrix represents the operator in the orthonormal site
    basis.
    """

    lattice: Lattice
    matrix: np.ndarray = field(repr=False)
    kind: str = "dense"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        n = self.lattice.n_sites
        if mat.shape != (n, n):
            raise ValueError(f"observable matrix must be {n}x{n}, got {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > 1e-12:
            raise ValueError("observable must be Hermitian")
        object.__setattr__(self, "matrix", (mat + mat.conj().T) / 2)

    @classmethod
    def multiplication(cls, lattice, values):
        vals = np.asarray(values, dtype=float).reshape(-1)
        return cls(lattice, np.diag(vals), "multiplication")

    @classmethod
    def position(cls, lattice, axis=0):
        return cls.multiplication(lattice, lattice.coords[axis])

    @classmethod
    def cosine(cls, lattice, mode=1, axis=0):
        return cls.multiplication(lattice, np.cos(2 * np.pi * mode * lattice.coords[axis] / lattice.L))

    @classmethod
    def finite_rank(cls, lattice, g):
        """``|g><g|`` with the continuum inner product."""
        g = np.asarray(g.values if isinstance(g, WaveFunction) else g, complex).reshape(-1)
        return cls(lattice, lattice.weight * np.outer(g, g.conj()), "finite-rank")

    @classmethod
    def identity(cls, lattice):
        return cls(lattice, np.eye(lattice.n_sites), "multiplication")

    @cached_property
    def op_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f)
        return (self.matrix @ f.reshape(-1)).reshape(f.shape)

    def expectation(self, phi: WaveFunction) -> float:
        return phi.lattice.inner(phi.values, self.apply(phi.values)).real

    def shifted(self, c: float) -> "Observable":
        return Observable(self.lattice, self.matrix + c * np.eye(self.lattice.n_sites), self.kind)


def laplacian(phi: WaveFunction) -> np.ndarray:
    """Spectral Laplacian (Fourier multiplier ``-|k|^2``)."""
    return phi.lattice.laplacian(phi.values)


def mean_field(v: PairPotential, phi: WaveFunction) -> np.ndarray:
    """Real field ``v * |phi|^2`` (circular convolution with quadrature weight)."""
    v.lattice.check_same(phi.lattice)
    out = v.lattice.convolve(v.values, np.abs(phi.values) ** 2)
    if np.max(np.abs(out.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(out.real), initial=0.0)):
        raise ArithmeticError("mean field has a non-negligible imaginary part")
    return out.real


def project_orthogonal(f, phi: WaveFunction) -> np.ndarray:
    """``f - <phi, f> phi``."""
    f = np.asarray(f, dtype=complex)
    return f - phi.lattice.inner(phi.values, f) * phi.values


def edge_mass(phi: WaveFunction, fraction=0.1) -> float:
    """Probability mass within ``fraction * L/2`` of the box boundary (box-size diagnostic)."""
    lat = phi.lattice
    near = np.zeros(lat.shape, bool)
    for x in lat.coords:
        near |= np.abs(x) >= (1 - fraction) * lat.L / 2
    return float(np.sum(np.abs(phi.values[near]) ** 2) * lat.weight)
