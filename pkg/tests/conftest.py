import numpy as np
import pytest

from mfldp import Lattice, Observable, PairPotential, WaveFunction
from mfldp import hartree


def random_field(lat, rng):
    return rng.normal(size=lat.shape) + 1j * rng.normal(size=lat.shape)


def random_state(lat, rng):
    return WaveFunction.normalized(lat, random_field(lat, rng))


def random_hermitian(n, rng):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


def even_potential(lat, rng):
    """Random real potential with v(x) = v(-x) on the lattice."""
    raw = rng.normal(size=lat.shape)
    flipped = raw
    for ax in range(lat.d):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return PairPotential(lat, 0.5 * (raw + flipped))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_lattice():
    return Lattice(1, 2 * np.pi, 8)


@pytest.fixture(scope="session")
def interacting_traj():
    """M = 8 interacting trajectory to t = 0.5."""
    lat = Lattice(1, 2 * np.pi, 8)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    return hartree.evolve(phi0, v, 0.5, 0.005)


@pytest.fixture(scope="session")
def cosine_observable(small_lattice):
    return Observable.cosine(small_lattice, 1)
