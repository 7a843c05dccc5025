import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqed import gaussian
from cvqed.gaussian import (
    DimensionMismatch,
    GaussianState,
    apply,
    counterterm_evolution,
    counterterm_matrix,
    displace,
    expectation,
    free_evolution,
    free_hamiltonian_matrix,
    number_mean,
    number_means,
    quadratic_evolution,
    vacuum,
)
from cvqed.lattice import LatticeConfig, ModeLayout
from cvqed.modes import SymplecticOp, groundstate_unitary, local_fields, squeeze_layer, symplectic_form

from oracles import direct_free_hamiltonian, lattice_frequency, random_symplectic


def test_vacuum_examples():
    assert np.array_equal(vacuum(1).cov, np.diag([0.5, 0.5]))
    v6 = vacuum(6)
    assert np.allclose(v6.symplectic_eigenvalues(), 0.5, atol=1e-14)
    assert np.all(number_means(v6) == 0)
    assert all(number_mean(v6, j) == 0 for j in range(6))


def test_identity_apply_is_bitwise():
    rng = np.random.default_rng(1)
    S = random_symplectic(3, rng)
    state = apply(vacuum(3), SymplecticOp(S, rng.standard_normal(6)))
    same = apply(state, SymplecticOp.identity(3))
    assert np.array_equal(same.mean, state.mean)
    assert np.array_equal(same.cov, state.cov)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        apply(vacuum(2), SymplecticOp.identity(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_apply_preserves_uncertainty_and_inverts(n, seed):
    rng = np.random.default_rng(seed)
    op = SymplecticOp(random_symplectic(n, rng), rng.standard_normal(2 * n))
    state = apply(vacuum(n), op, check=True)
    assert state.is_physical()
    assert np.all(state.symplectic_eigenvalues() > 0.5 - 1e-9)
    back = apply(state, op.inverse())
    assert np.abs(back.mean).max() < 1e-10
    assert np.abs(back.cov - vacuum(n).cov).max() < 1e-10


@pytest.mark.parametrize("dim,extent,mass", [(1, 2, 1.0), (1, 4, 0.5), (2, 2, 1.0), (3, 2, 0.3)])
def test_groundstate_is_vacuum_of_particle_modes(dim, extent, mass):
    cfg = LatticeConfig(dim, extent, mass)
    omega = gaussian.groundstate(cfg)
    assert omega.is_physical()
    particle = apply(omega, groundstate_unitary(cfg))
    assert np.abs(particle.cov - 0.5 * np.eye(2 * cfg.num_modes)).max() < 1e-10
    assert np.abs(number_means(omega, groundstate_unitary(cfg))).max() < 1e-10


def test_free_evolution_at_zero_time_is_identity():
    cfg = LatticeConfig(2, 2, 0.8)
    assert free_evolution(cfg, 0.0).distance(SymplecticOp.identity(cfg.num_modes)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-20, 20))
def test_groundstate_is_stationary(t):
    cfg = LatticeConfig(1, 4, 0.6)
    omega = gaussian.groundstate(cfg)
    moved = apply(omega, free_evolution(cfg, t))
    assert np.abs(moved.cov - omega.cov).max() < 1e-10
    assert np.abs(moved.mean - omega.mean).max() < 1e-10


@pytest.mark.parametrize("dim,extent,mass", [(1, 2, 1.0), (1, 3, 0.4), (2, 2, 0.9)])
def test_free_evolution_generated_by_lattice_hamiltonian(dim, extent, mass):
    cfg = LatticeConfig(dim, extent, mass)
    h = direct_free_hamiltonian(dim, extent, mass)
    assert np.abs(free_hamiltonian_matrix(cfg) - h).max() < 1e-12
    assert free_evolution(cfg, 0.73).distance(quadratic_evolution(h, 0.73)) < 1e-10


def test_probe_phase_advances_at_dispersion_frequency():
    cfg = LatticeConfig(1, 4, 0.7)
    U = groundstate_unitary(cfg)
    layout = ModeLayout(cfg)
    times = np.linspace(0, 3, 31)
    for k in range(cfg.num_sites):
        mode = layout.index("scalar", 0, k)
        probe = apply(displace(vacuum(cfg.num_modes), mode, 0.3), U.inverse())
        beta = apply(probe, U)  # particle frame view
        amps = []
        for t in times:
            s = apply(apply(probe, free_evolution(cfg, t)), U)
            n = cfg.num_modes
            amps.append((s.mean[mode] + 1j * s.mean[n + mode]) / math.sqrt(2))
        assert abs(amps[0] - 0.3) < 1e-12 and abs(beta.mean[mode] - 0.3 * math.sqrt(2)) < 1e-12
        rate = -np.polyfit(times, np.unwrap(np.angle(amps)), 1)[0]
        expected = lattice_frequency(cfg.momenta()[k], 0.7)
        assert abs(rate - expected) < 1e-6


def test_counterterm_zero_is_identity():
    cfg = LatticeConfig(1, 2, 1.0)
    assert counterterm_evolution(cfg, 0.0, 0.4).distance(SymplecticOp.identity(cfg.num_modes)) == 0


def test_counterterm_small_step_slope_is_generator_norm():
    cfg = LatticeConfig(1, 2, 1.0)
    dm = -0.7
    gen = symplectic_form(cfg.num_modes) @ counterterm_matrix(cfg, dm)
    ident = np.eye(2 * cfg.num_modes)
    for dt in (1e-4, 1e-5, 1e-6):
        slope = np.linalg.norm(counterterm_evolution(cfg, dm, dt).matrix - ident) / dt
        assert slope == pytest.approx(np.linalg.norm(gen), rel=10 * dt)


@pytest.mark.parametrize("dm", [-0.5, 0.3, 1.2])
def test_counterterm_shifts_mass_squared_by_half(dm):
    """``(dm/2) phi^dag phi`` added to the free theory is the free theory at
    ``m_eff^2 = m^2 + dm/2``."""
    d, L, m = 1, 4, 0.9
    cfg = LatticeConfig(d, L, m)
    m_eff = math.sqrt(m**2 + dm / 2)
    expected = direct_free_hamiltonian(d, L, m_eff) - direct_free_hamiltonian(d, L, m)
    assert np.abs(counterterm_matrix(cfg, dm) - expected).max() < 1e-12
    exact = free_evolution(LatticeConfig(d, L, m_eff), 1.0)
    errors = []
    for steps in (50, 100, 200):
        dt = 1.0 / steps
        step = free_evolution(cfg, dt) @ counterterm_evolution(cfg, dm, dt)
        total = SymplecticOp.identity(cfg.num_modes)
        for _ in range(steps):
            total = step @ total
        errors.append(total.distance(exact))
    assert errors[0] > errors[1] > errors[2]
    assert np.polyfit(np.log([50, 100, 200]), np.log(errors), 1)[0] == pytest.approx(-1.0, abs=0.1)


@pytest.mark.parametrize("r", [0.0, 0.2, 0.9, 1.7])
def test_squeezed_occupation(r):
    sq = SymplecticOp.from_bogoliubov(np.array([[math.cosh(r)]]), np.array([[math.sinh(r)]]))
    assert number_mean(apply(vacuum(1), sq), 0) == pytest.approx(math.sinh(r) ** 2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_coherent_occupation(alpha):
    assert number_mean(displace(vacuum(2), 1, alpha), 1) == pytest.approx(abs(alpha) ** 2, abs=1e-9)
    assert number_mean(displace(vacuum(2), 1, alpha), 0) == pytest.approx(0, abs=1e-15)


def test_occupation_from_covariance_block():
    """``<n> = (tr V_block)/2 + |mean|^2/2 - 1/2`` for the x,p diagonal entries."""
    rng = np.random.default_rng(7)
    state = apply(vacuum(3), SymplecticOp(random_symplectic(3, rng), rng.standard_normal(6)))
    for j in range(3):
        block = state.cov[np.ix_([j, 3 + j], [j, 3 + j])]
        mean = state.mean[[j, 3 + j]]
        assert number_mean(state, j) == pytest.approx(0.5 * np.trace(block) + 0.5 * mean @ mean - 0.5, abs=1e-12)


def test_two_point_function_in_groundstate():
    cfg = LatticeConfig(1, 4, 0.6)
    omega = gaussian.groundstate(cfg)
    fields = local_fields(cfg)
    w = lattice_frequency(cfg.momenta(), 0.6)
    expected = np.sum(1 / (2 * w)) / cfg.num_sites
    for x in range(cfg.num_sites):
        phi = fields["phi"][x]
        assert expectation(omega, [phi.dagger(), phi]).real == pytest.approx(expected, abs=1e-12)


def test_wick_fourth_moment_of_vacuum():
    from cvqed.modes import LadderForm

    a = LadderForm(np.array([1.0 + 0j]), np.array([0j]))
    n_sq = expectation(vacuum(1), [a.dagger(), a, a.dagger(), a])
    assert n_sq == 0
    sq = apply(vacuum(1), SymplecticOp.from_bogoliubov(np.array([[math.cosh(0.5)]]), np.array([[math.sinh(0.5)]])))
    s2 = math.sinh(0.5) ** 2
    # <n^2> for a squeezed vacuum: 3 s^4 + 2 s^2
    assert expectation(sq, [a.dagger(), a, a.dagger(), a]).real == pytest.approx(3 * s2**2 + 2 * s2, abs=1e-12)


def test_squeeze_layer_occupations_from_frequencies():
    cfg = LatticeConfig(1, 2, 1.0)
    state = apply(vacuum(cfg.num_modes), squeeze_layer(cfg))
    w = ModeLayout(cfg).frequencies
    expected = np.sinh(0.5 * np.log(w)) ** 2
    assert np.allclose(number_means(state), expected, atol=1e-12)


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    state = apply(vacuum(2), SymplecticOp(random_symplectic(2, rng), rng.standard_normal(4)))
    path = tmp_path / "state.txt"
    gaussian.save(state, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "modes 2"
    assert len(lines) == 2 + 4
    back = gaussian.load(path)
    assert np.array_equal(back.mean, state.mean)
    assert np.array_equal(back.cov, state.cov)
    with pytest.raises(DimensionMismatch):
        gaussian.from_text("modes 3\n0 0\n1 0\n0 1\n")


def test_unphysical_state_detected():
    assert not GaussianState(np.zeros(2), 0.2 * np.eye(2)).is_physical()
