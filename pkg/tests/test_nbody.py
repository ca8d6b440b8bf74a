import itertools
from math import comb

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from mfldp import Lattice, Observable, PairPotential, WaveFunction
from mfldp import hartree
from mfldp.errors import DimensionCapError
from mfldp.nbody import (NBodySpace, NBodyState, Propagator, evolve, evolve_many, excision,
                         hamiltonian, mgf, mgf_via_excision, product_state, reduced_density,
                         rotate_modes, sum_distribution, tail_probability, unrotate_modes, variance)

from conftest import even_potential, random_hermitian, random_state


def random_nbody(space, rng):
    c = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    return NBodyState(space, c / np.linalg.norm(c))


def first_quantized_two_body(lat, v):
    """Dense ``H_2`` on the full two-particle grid, restricted to symmetric states."""
    n = lat.n_sites
    T = lat.kinetic_matrix()
    V = v.site_matrix()
    I = np.eye(n)
    H = np.kron(T, I) + np.kron(I, T) + 0.5 * np.diag(V.reshape(-1))
    space = NBodySpace(lat, 2)
    S = np.zeros((n * n, space.dim))
    for k, occ in enumerate(space.occupations):
        sites = [p for p in range(n) for _ in range(occ[p])]
        vec = np.zeros((n, n))
        for a, b in set(itertools.permutations(sites)):
            vec[a, b] = 1
        S[:, k] = vec.reshape(-1) / np.linalg.norm(vec)
    return space, S.T @ H @ S


def evolved_state(N, M=3, t=0.4, strength=3.0):
    lat = Lattice(1, 2 * np.pi, M)
    v = PairPotential.gaussian(lat, strength, 1.0)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    space = NBodySpace(lat, N)
    psi = evolve(product_state(space, phi0), hamiltonian(space, v), t)
    return lat, v, phi0, psi


# -- space and Hamiltonian -----------------------------------------------------------------


@pytest.mark.parametrize("M,N", [(2, 1), (3, 4), (8, 5)])
def test_dimension(M, N):
    space = NBodySpace(Lattice(1, 1.0, M), N)
    assert space.dim == comb(M + N - 1, N)
    assert np.all(space.occupations.sum(axis=1) == N)


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        NBodySpace(Lattice(1, 1.0, 8), 12, dim_cap=10_000)
    with pytest.raises(ValueError):
        NBodySpace(Lattice(1, 1.0, 8), 0)


def test_free_one_particle_spectrum():
    lat = Lattice(1, 2 * np.pi, 6)
    H = hamiltonian(NBodySpace(lat, 1), PairPotential.zero(lat)).toarray()
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), np.sort(lat.k2), atol=1e-10)


@pytest.mark.parametrize("M", [2, 3])
def test_two_body_first_quantized_oracle(M, rng):
    lat = Lattice(1, 3.0, M)
    v = even_potential(lat, rng)
    space, oracle = first_quantized_two_body(lat, v)
    H = hamiltonian(space, v).toarray()
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
    assert np.allclose(H, oracle, atol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 4])
def test_product_state_energy_scaling(N, rng):
    lat = Lattice(1, 2 * np.pi, 5)
    v = even_potential(lat, rng)
    phi = random_state(lat, rng)
    space = NBodySpace(lat, N)
    psi = product_state(space, phi)
    kin = hartree.energy(phi, PairPotential.zero(lat))
    rho = np.abs(phi.values) ** 2
    direct = np.sum(lat.convolve(v.values, rho).real * rho) * lat.weight
    assert psi.expectation(hamiltonian(space, v)) == pytest.approx(N * kin + (N - 1) / 2 * direct, abs=1e-10)


# -- product states ------------------------------------------------------------------------


def test_product_state_single_particle(rng):
    lat = Lattice(1, 2.0, 5)
    phi = random_state(lat, rng)
    space = NBodySpace(lat, 1)
    coeffs = product_state(space, phi).coeffs
    sites = space.occupations.argmax(axis=1)
    assert np.allclose(coeffs, phi.site_amplitudes()[sites])


def test_product_state_localized():
    lat = Lattice(1, 2.0, 4)
    vals = np.zeros(4)
    vals[2] = 1
    psi = product_state(NBodySpace(lat, 3), WaveFunction.normalized(lat, vals))
    assert np.count_nonzero(np.abs(psi.coeffs) > 1e-15) == 1
    assert np.max(np.abs(psi.coeffs)) == pytest.approx(1.0)


def test_product_state_one_body_expectation(rng):
    lat = Lattice(1, 2.0, 4)
    phi = random_state(lat, rng)
    O = Observable(lat, random_hermitian(4, rng))
    space = NBodySpace(lat, 3)
    psi = product_state(space, phi)
    assert psi.norm == pytest.approx(1.0, abs=1e-10)
    assert psi.expectation(space.one_body(O.matrix)) == pytest.approx(3 * O.expectation(phi), abs=1e-10)
    with pytest.raises(ValueError):
        product_state(space, phi.with_values(2 * phi.values))


# -- evolution -----------------------------------------------------------------------------


def test_evolve_zero_time_is_identity(rng):
    lat, v, phi0, _ = evolved_state(2)
    space = NBodySpace(lat, 2)
    psi = random_nbody(space, rng)
    assert np.array_equal(evolve(psi, hamiltonian(space, v), 0.0).coeffs, psi.coeffs)


@pytest.mark.parametrize("method", ["dense", "krylov"])
def test_free_evolution_factorizes(method):
    lat = Lattice(1, 2 * np.pi, 6)
    v = PairPotential.zero(lat)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    space = NBodySpace(lat, 3)
    psi = evolve(product_state(space, phi0), hamiltonian(space, v), 0.7, method=method)
    phi_t = hartree.evolve(phi0, v, 0.7, 0.7, diagnostics=False).state(-1)
    assert abs(abs(product_state(space, phi_t).inner(psi)) - 1) < 1e-8
    gamma = reduced_density(psi)
    a = phi_t.site_amplitudes()
    assert np.allclose(gamma, np.outer(a, a.conj()), atol=1e-10)


def test_krylov_matches_dense(rng):
    lat = Lattice(1, 2 * np.pi, 6)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    space = NBodySpace(lat, 3)
    H = hamiltonian(space, v)
    psi0 = random_nbody(space, rng)
    dense = sla.expm(-1j * 0.9 * H.toarray()) @ psi0.coeffs
    for method in ("dense", "krylov"):
        out = evolve(psi0, H, 0.9, method=method)
        assert abs(np.vdot(dense, out.coeffs)) >= 1 - 1e-10
        assert abs(out.norm - 1) < 1e-9


def test_unitarity_and_energy():
    lat = Lattice(1, 2 * np.pi, 8)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    space = NBodySpace(lat, 4)
    H = hamiltonian(space, v)
    psi0 = product_state(space, WaveFunction.gaussian(lat, 1.0, 0.3, 1.0))
    e0 = psi0.expectation(H)
    for psi in evolve_many(psi0, H, [0.5, 1.0, 2.0], method="krylov", krylov_dim=20):
        assert abs(psi.norm - 1) < 1e-9
        assert abs(psi.expectation(H) - e0) < 1e-8


def test_evolve_many_consistent(rng):
    lat, v, _, _ = evolved_state(2)
    space = NBodySpace(lat, 2)
    H = hamiltonian(space, v)
    psi0 = random_nbody(space, rng)
    states = evolve_many(psi0, H, [0.2, 0.5])
    assert np.allclose(states[1].coeffs, evolve(psi0, H, 0.5).coeffs, atol=1e-12)
    with pytest.raises(ValueError):
        evolve_many(psi0, H, [0.5, 0.2])


def test_propagator_validation():
    lat = Lattice(1, 2.0, 4)
    H = hamiltonian(NBodySpace(lat, 2), PairPotential.zero(lat))
    with pytest.raises(ValueError):
        Propagator(H, method="magic")
    with pytest.raises(DimensionCapError):
        Propagator(H, method="dense", dense_cap=3)


# -- mode rotation -------------------------------------------------------------------------


def test_rotation_by_permutation_relabels_sites(rng):
    lat = Lattice(1, 2.0, 3)
    space = NBodySpace(lat, 2)
    psi = random_nbody(space, rng)
    P = np.eye(3)[:, [2, 0, 1]]
    rotated = rotate_modes(space, psi.coeffs, P)
    occ = space.occupations
    for k, o in enumerate(occ):
        # new mode j is old site perm[j]
        src = space.basis.rank(o[np.argsort([2, 0, 1])][None, :])[0]
        assert rotated[k] == pytest.approx(psi.coeffs[src], abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rotation_roundtrip(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice(1, 2.0, 3)
    space = NBodySpace(lat, 3)
    psi = random_nbody(space, rng)
    U = sla.expm(1j * random_hermitian(3, rng))
    rotated = rotate_modes(space, psi.coeffs, U)
    assert abs(np.linalg.norm(rotated) - 1) < 1e-12
    assert np.allclose(unrotate_modes(space, rotated, U), psi.coeffs, atol=1e-10)


# -- statistics ----------------------------------------------------------------------------


@pytest.mark.parametrize("lam", [-0.7, 0.0, 0.3, 1.2])
def test_mgf_product_state(lam, rng):
    lat = Lattice(1, 2 * np.pi, 4)
    phi = random_state(lat, rng)
    O = Observable(lat, random_hermitian(4, rng))
    psi = product_state(NBodySpace(lat, 3), phi)
    c = 0.37
    a = phi.site_amplitudes()
    one = np.vdot(a, sla.expm(lam * O.matrix) @ a).real
    assert mgf(psi, O, lam, c) == pytest.approx((one * np.exp(-lam * c)) ** 3, rel=1e-10)


def test_mgf_dense_oracle(rng):
    lat = Lattice(1, 2.0, 3)
    space = NBodySpace(lat, 2)
    psi = random_nbody(space, rng)
    O = Observable(lat, random_hermitian(3, rng))
    c = 0.2
    G = space.one_body(O.matrix).toarray() - 2 * c * np.eye(space.dim)
    for lam in (0.0, 0.5, -1.0):
        dense = np.vdot(psi.coeffs, sla.expm(lam * G) @ psi.coeffs).real
        assert mgf(psi, O, lam, c) == pytest.approx(dense, rel=1e-10)
    assert mgf(psi, O, 0.0, c) == pytest.approx(1.0, abs=1e-14)


def test_variance_dense_oracle(rng):
    lat = Lattice(1, 2.0, 3)
    space = NBodySpace(lat, 3)
    psi = random_nbody(space, rng)
    O = Observable.position(lat)
    D = space.one_body(O.matrix)
    m = psi.expectation(D)
    assert variance(psi, O) == pytest.approx(psi.expectation(D @ D) - m**2, abs=1e-10)


def test_tail_support(rng):
    lat = Lattice(1, 2.0, 4)
    space = NBodySpace(lat, 3)
    psi = random_nbody(space, rng)
    O = Observable(lat, random_hermitian(4, rng))
    o = np.linalg.eigvalsh(O.matrix)
    c = 0.1
    assert tail_probability(psi, O, o.max() - c, c) == 0.0
    assert tail_probability(psi, O, o.min() - c - 1e-9, c) == pytest.approx(1.0, abs=1e-12)
    tails = tail_probability(psi, O, np.linspace(-3, 3, 13), c)
    assert np.all(np.diff(tails) <= 1e-15)


def test_chernoff_inequality(rng):
    lat, v, phi0, psi = evolved_state(4)
    O = Observable.cosine(lat, 1)
    c = 0.05
    dist = sum_distribution(psi, O, c)
    lams = np.linspace(0, 3, 31)
    xs = np.linspace(0.01, 0.8, 20)
    env = np.exp(-np.multiply.outer(lams, xs) * 4) * dist.mgf(lams)[:, None]
    assert np.min(env - dist.tail(xs)[None, :]) >= -1e-12


def test_reduced_density_product_state(rng):
    lat = Lattice(1, 2.0, 4)
    phi = random_state(lat, rng)
    gamma = reduced_density(product_state(NBodySpace(lat, 3), phi))
    a = phi.site_amplitudes()
    assert np.allclose(gamma, np.outer(a, a.conj()), atol=1e-12)


def test_reduced_density_hand_contraction():
    lat = Lattice(1, 2.0, 2)
    space = NBodySpace(lat, 2)
    c = np.zeros(space.dim, complex)
    c[space.basis.rank(np.array([[2, 0]]))[0]] = 1 / np.sqrt(2)
    c[space.basis.rank(np.array([[1, 1]]))[0]] = 1 / np.sqrt(2)
    gamma = reduced_density(NBodyState(space, c))
    expected = np.array([[0.75, np.sqrt(2) / 4], [np.sqrt(2) / 4, 0.25]])
    assert np.allclose(gamma, expected, atol=1e-14)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_reduced_density_is_a_state(seed):
    rng = np.random.default_rng(seed)
    space = NBodySpace(Lattice(1, 2.0, 3), 3)
    gamma = reduced_density(random_nbody(space, rng))
    assert abs(np.trace(gamma) - 1) < 1e-12
    assert np.linalg.eigvalsh(gamma).min() >= -1e-12


# -- excision ------------------------------------------------------------------------------


def test_excision_of_condensate(rng):
    lat = Lattice(1, 2.0, 4)
    phi = random_state(lat, rng)
    exc = excision(product_state(NBodySpace(lat, 3), phi), phi)
    norms = exc.layer_norms()
    assert norms[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(norms[1:] < 1e-10)


def test_excision_single_excitation(rng):
    lat = Lattice(1, 2.0, 4)
    N = 3
    phi = random_state(lat, rng)
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    a = phi.site_amplitudes()
    g = g - np.vdot(a, g) * a
    g /= np.linalg.norm(g)
    space = NBodySpace(lat, N)
    # g (x)_s phi^(N-1): one quantum in mode g, N - 1 in the condensate
    template = excision(product_state(space, phi), phi, fields=[g])
    vec = np.zeros(space.dim, complex)
    vec[space.basis.rank(np.array([[N - 1, 1, 0, 0]]))[0]] = 1
    psi = NBodyState(space, unrotate_modes(space, vec, template.modes))
    expected = ((N - 1) * np.outer(a, a.conj()) + np.outer(g, g.conj())) / N
    assert np.allclose(reduced_density(psi), expected, atol=1e-10)
    exc = excision(psi, phi, fields=[g])
    assert np.allclose(exc.layer_norms(), [0, 1, 0, 0], atol=1e-10)
    assert np.allclose(exc.one_excitation_field(), g, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_excision_parseval_and_reconstruction(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice(1, 2.0, 3)
    space = NBodySpace(lat, 3)
    psi = random_nbody(space, rng)
    exc = excision(psi, random_state(lat, rng))
    assert abs(np.sum(exc.layer_norms() ** 2) - 1) < 1e-10
    assert np.allclose(exc.reconstruct().coeffs, psi.coeffs, atol=1e-9)


def test_mgf_via_excision_product_state(rng):
    lat = Lattice(1, 2.0, 4)
    phi = random_state(lat, rng)
    O = Observable(lat, random_hermitian(4, rng))
    psi = product_state(NBodySpace(lat, 3), phi)
    c = O.expectation(phi)
    a = phi.site_amplitudes()
    for lam in (0.0, 0.4, 1.1):
        one = np.vdot(a, sla.expm(lam * (O.matrix - c * np.eye(4))) @ a).real
        assert mgf_via_excision(psi, phi, O, lam) == pytest.approx(one**3, rel=1e-10)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_mgf_via_excision_interacting(N):
    lat, v, phi0, psi = evolved_state(N, M=3, t=0.4)
    traj = hartree.evolve(phi0, v, 0.4, 0.01, diagnostics=False)
    phi_t = traj.state(-1)
    O = Observable.cosine(lat, 1)
    lams = np.linspace(-1, 1, 9)
    direct = mgf(psi, O, lams, O.expectation(phi_t))
    via = mgf_via_excision(psi, phi_t, O, lams)
    assert np.max(np.abs(via / direct - 1)) < 1e-8


def test_law_of_large_numbers_trend():
    lat = Lattice(1, 2 * np.pi, 6)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    traj = hartree.evolve(phi0, v, 0.5, 0.005, diagnostics=False)
    O = Observable.cosine(lat, 1)
    c = O.expectation(traj.state(-1))
    tails = []
    for N in range(2, 7):
        space = NBodySpace(lat, N)
        psi = evolve(product_state(space, phi0), hamiltonian(space, v), 0.5)
        tails.append(tail_probability(psi, O, 0.3, c))
    assert all(a >= b for a, b in zip(tails, tails[1:]))
