import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfldp import Lattice, PairPotential, WaveFunction
from mfldp.errors import HartreeInstabilityError
from mfldp.hartree import HartreeFrame, energy, evolve, frame_at, sobolev_norm

from conftest import even_potential, random_state


def test_free_plane_wave_exact():
    lat = Lattice(1, 2 * np.pi, 32)
    phi0 = WaveFunction.plane_wave(lat, 3)
    traj = evolve(phi0, PairPotential.zero(lat), 1.0, 0.01)
    for s, state in zip(traj.times, traj.states):
        assert np.max(np.abs(state - np.exp(-9j * s) * phi0.values)) < 1e-10


def test_zero_time_returns_initial_state(rng):
    lat = Lattice(1, 4.0, 16)
    phi0 = random_state(lat, rng)
    traj = evolve(phi0, PairPotential.gaussian(lat), 0.0, 0.1)
    assert len(traj) == 1 and np.array_equal(traj.states[0], phi0.values)


def test_step_lands_on_final_time():
    lat = Lattice(1, 4.0, 16)
    traj = evolve(WaveFunction.gaussian(lat), PairPotential.gaussian(lat), 0.25, 0.07)
    assert traj.times[-1] == pytest.approx(0.25, abs=1e-14)
    assert np.all(np.diff(traj.times) > 0)


def test_input_validation():
    lat = Lattice(1, 4.0, 16)
    phi = WaveFunction.gaussian(lat)
    v = PairPotential.zero(lat)
    with pytest.raises(ValueError):
        evolve(phi, v, 1.0, 0.0)
    with pytest.raises(ValueError):
        evolve(phi, v, -1.0, 0.1)
    with pytest.raises(ValueError):
        evolve(phi.with_values(2 * phi.values), v, 1.0, 0.1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_reports_last_stable_time():
    lat = Lattice(1, 4.0, 8)
    v = PairPotential.constant(lat, 1e308)
    with pytest.raises(HartreeInstabilityError) as info:
        evolve(WaveFunction.gaussian(lat), v, 1.0, 0.1)
    assert info.value.last_stable_time == 0.0


def test_energy_plane_wave_and_constant_potential(rng):
    lat = Lattice(1, 2 * np.pi, 16)
    assert energy(WaveFunction.plane_wave(lat, 2), PairPotential.zero(lat)) == pytest.approx(4.0, abs=1e-10)
    phi = random_state(lat, rng)
    kin = energy(phi, PairPotential.zero(lat))
    assert energy(phi, PairPotential.constant(lat, 3.0)) == pytest.approx(kin + 1.5, abs=1e-10)


def test_energy_double_sum(rng):
    lat = Lattice(1, 3.0, 12)
    phi = random_state(lat, rng)
    v = even_potential(lat, rng)
    rho = np.abs(phi.values) ** 2
    w = lat.weight
    pot = sum(v.values[(i - j) % 12] * rho[i] * rho[j] for i in range(12) for j in range(12)) * w * w
    T = lat.kinetic_matrix()
    a = phi.site_amplitudes()
    kin = np.vdot(a, T @ a).real
    assert energy(phi, v) == pytest.approx(kin + 0.5 * pot, abs=1e-10)


def test_second_order_convergence():
    lat = Lattice(1, 2 * np.pi, 32)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    ref = evolve(phi0, v, 1.0, 0.00125, diagnostics=False).states[-1]
    errs = [lat.norm(evolve(phi0, v, 1.0, dt, diagnostics=False).states[-1] - ref)
            for dt in (0.02, 0.01, 0.005)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.6))


def test_conservation_laws():
    lat = Lattice(1, 2 * np.pi, 64)
    v = PairPotential.gaussian(lat, 3.0, 1.0)
    phi0 = WaveFunction.gaussian(lat, 1.0, 0.3, 1.0)
    drifts = []
    for dt in (0.01, 0.005):
        traj = evolve(phi0, v, 1.0, dt)
        assert traj.max_norm_drift < 1e-10
        assert np.all(np.isfinite(traj.h4_norms))
        drifts.append(traj.max_energy_drift)
    assert 3.5 <= drifts[0] / drifts[1] <= 4.5


@settings(max_examples=10, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), seed=st.integers(0, 1000))
def test_gauge_covariance(theta, seed):
    lat = Lattice(1, 5.0, 16)
    phi0 = random_state(lat, np.random.default_rng(seed))
    v = PairPotential.gaussian(lat, 2.0, 0.8)
    a = evolve(phi0, v, 0.3, 0.01, diagnostics=False)
    b = evolve(phi0.with_values(np.exp(1j * theta) * phi0.values), v, 0.3, 0.01, diagnostics=False)
    assert np.max(np.abs(b.states - np.exp(1j * theta) * a.states)) < 1e-10


def test_frame_kernels(rng):
    lat = Lattice(1, 3.0, 10)
    phi = random_state(lat, rng)
    v = even_potential(lat, rng)
    fr = HartreeFrame(phi, v)
    K1, K2 = fr.k1_matrix(), fr.k2_matrix()
    assert np.allclose(K1, K1.conj().T, atol=1e-12)
    assert np.allclose(K2, K2.T, atol=1e-12)
    assert np.trace(K1).real == pytest.approx(v.at_origin * phi.norm**2, abs=1e-12)
    f = rng.normal(size=10) + 1j * rng.normal(size=10)
    g = rng.normal(size=10) + 1j * rng.normal(size=10)
    assert np.allclose(fr.k1(f), K1 @ f, atol=1e-12)
    assert np.allclose(fr.k2(f), K2 @ f, atol=1e-12)
    assert abs(lat.inner(f, fr.k1(g)) - lat.inner(fr.k1(f), g)) < 1e-12
    rho = np.abs(phi.values) ** 2
    assert fr.mu == pytest.approx(0.5 * np.sum(fr.potential * rho) * lat.weight, abs=1e-14)


def test_frame_zero_potential():
    lat = Lattice(1, 3.0, 8)
    fr = HartreeFrame(WaveFunction.gaussian(lat), PairPotential.zero(lat))
    assert np.all(fr.k1_matrix() == 0) and np.all(fr.k2_matrix() == 0) and fr.mu == 0


def test_frame_at_snaps_and_rejects(interacting_traj):
    traj = interacting_traj
    fr = frame_at(traj, 0.2013)
    assert fr.time == pytest.approx(0.2, abs=1e-12)
    with pytest.raises(ValueError):
        frame_at(traj, 0.6)
    with pytest.raises(ValueError):
        frame_at(traj, -0.1)


def test_sobolev_norm_of_plane_wave():
    lat = Lattice(1, 2 * np.pi, 16)
    assert sobolev_norm(WaveFunction.plane_wave(lat, 2)) == pytest.approx(25.0, rel=1e-12)
