import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from optopulse.bch import compile_linear_beamsplitter, compile_nonlinear_swap, predicted_swap_time
from optopulse.fock import (BudgetError, FockConfig, HamiltonianTermList, NonHermitianError, NormDriftError,
                            build_hamiltonian, coherent_state, double_cavity_terms, edge_population, evolve,
                            fock_state, lindblad_evolve, linearized_terms, mode_energy, mode_operator,
                            thermal_density, two_cavity_terms)
from optopulse.model import SystemParams

THREE = FockConfig((3, 3, 4), ("a", "s", "m"))


def basis_index(config, occupations):
    return int(np.ravel_multi_index(occupations, config.dims))


def test_config_validation():
    with pytest.raises(ValueError):
        FockConfig((1, 3), ("c", "m"))
    with pytest.raises(ValueError):
        FockConfig((3, 3), ("c", "c"))
    with pytest.raises(ValueError):
        FockConfig((3, 3), ("c", "q"))
    with pytest.raises(BudgetError):
        FockConfig((100, 100, 100), ("a", "s", "m"))
    assert FockConfig((2, 3), ("c", "m")).enlarged(4).dims == (6, 7)


def test_mechanical_number_operator_is_diagonal():
    config = FockConfig((5,), ("m",))
    H = build_hamiltonian(HamiltonianTermList().add(0.7, "n_m"), config)
    np.testing.assert_array_equal(H.toarray(), np.diag(0.7 * np.arange(5)))


def test_cubic_coupling_matrix_elements():
    H = build_hamiltonian(HamiltonianTermList().add(1.0, "x_a", "x_s", "x_m"), THREE).toarray()
    for n in range(3):
        bra = basis_index(THREE, (1, 0, n))
        # <1|x|0> <0|x|1> <n|x|n+1> = (1/sqrt2)^2 sqrt(n+1)/sqrt2
        assert H[bra, basis_index(THREE, (0, 1, n + 1))] == pytest.approx(math.sqrt(n + 1) / (2 * math.sqrt(2)))
        if n > 0:
            assert H[bra, basis_index(THREE, (0, 1, n - 1))] == pytest.approx(math.sqrt(n) / (2 * math.sqrt(2)))
        assert H[bra, basis_index(THREE, (0, 1, n))] == 0


def test_double_cavity_hamiltonian_is_exactly_hermitian():
    H = build_hamiltonian(double_cavity_terms(SystemParams(g0=0.3)), THREE)
    assert abs(H - H.getH()).max() == 0


def test_mixed_quadrature_product_is_symmetrized():
    config = FockConfig((6,), ("c",))
    H = build_hamiltonian(HamiltonianTermList().add(1.0, "x_c", "p_c"), config)
    assert abs(H - H.getH()).max() < 1e-15


def test_non_hermitian_term_list_rejected():
    with pytest.raises(NonHermitianError):
        build_hamiltonian(HamiltonianTermList().add(1.0, "a_c"), FockConfig((4,), ("c",)))


def test_term_list_validation():
    with pytest.raises(ValueError, match="degree"):
        HamiltonianTermList().add(1.0, "n_a", "x_s", "x_m")
    with pytest.raises(ValueError, match="bad factor"):
        HamiltonianTermList().add(1.0, "q_a")
    assert len(HamiltonianTermList().add(0.0, "n_a")) == 0


def test_two_cavity_and_symmetric_basis_share_spectrum():
    params = SystemParams(g0=0.4, delta=1.1)
    two = FockConfig((3, 3, 4), ("c", "a", "m"))
    H_two = build_hamiltonian(two_cavity_terms(params), two).toarray()
    H_sym = build_hamiltonian(double_cavity_terms(params), THREE).toarray()
    photons_two = (mode_operator(two, "c", "n") + mode_operator(two, "a", "n")).diagonal().real
    photons_sym = (mode_operator(THREE, "a", "n") + mode_operator(THREE, "s", "n")).diagonal().real
    for total in (0, 1, 2):
        keep_two = np.flatnonzero(photons_two == total)
        keep_sym = np.flatnonzero(photons_sym == total)
        ev_two = np.linalg.eigvalsh(H_two[np.ix_(keep_two, keep_two)])
        ev_sym = np.linalg.eigvalsh(H_sym[np.ix_(keep_sym, keep_sym)])
        np.testing.assert_allclose(ev_two, ev_sym, atol=1e-12)


def test_mode_energy_examples():
    config = FockConfig((30, 5), ("m", "c"))
    assert mode_energy(fock_state(config, {}), "m", config) == 0
    assert mode_energy(fock_state(config, {"m": 2}), "m", config) == 2
    assert mode_energy(coherent_state(config, {"m": 1.0}), "m", config) == pytest.approx(1, abs=1e-12)
    assert mode_energy(thermal_density(config, {"m": 0.2}), "m", config) == pytest.approx(0.2, rel=1e-12)
    with pytest.raises(ValueError):
        fock_state(config, {"c": 5})


def test_edge_population_monitor():
    config = FockConfig((4,), ("m",))
    assert edge_population(fock_state(config, {"m": 3}), "m", config) == 1
    assert edge_population(fock_state(config, {"m": 2}), "m", config) == 0


def test_zero_hamiltonian_leaves_state_unchanged():
    config = FockConfig((6, 6), ("c", "m"))
    psi = coherent_state(config, {"c": 0.5, "m": 0.3j})
    zero = sp.csr_matrix((config.total, config.total), dtype=complex)
    traj = evolve(psi, [(zero, 3.0)], config, dt=0.5)
    np.testing.assert_array_equal(traj.final_state, psi)


def test_coherent_state_revives_after_one_period():
    config = FockConfig((40,), ("m",))
    psi = coherent_state(config, {"m": 1.5})
    H = build_hamiltonian(HamiltonianTermList().add(1.0, "n_m"), config)
    final = evolve(psi, [(H, 2 * math.pi)], config).final_state
    assert abs(np.vdot(psi, final)) ** 2 > 1 - 1e-8


@given(st.floats(0.0, 1.5), st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.5))
def test_evolution_is_unitary(amplitude, phase, coupling):
    config = FockConfig((12, 12), ("c", "m"))
    psi = coherent_state(config, {"m": amplitude * np.exp(1j * phase)})
    H = build_hamiltonian(linearized_terms(SystemParams(), coupling * (1 + 1j)), config)
    traj = evolve(psi, [(H, 1.0), (H * 0.5, 0.5)], config, dt=0.25)
    assert np.abs(traj.norms - 1).max() < 1e-8


def test_norm_drift_detected():
    config = FockConfig((4,), ("m",))
    leaky = sp.identity(4, dtype=complex, format="csr") * 1e-3j
    with pytest.raises(NormDriftError, match="norm drift"):
        evolve(fock_state(config, {}), [(leaky, 1.0)], config)


def test_unnormalized_initial_state_rejected():
    config = FockConfig((4,), ("m",))
    with pytest.raises(ValueError, match="normalised"):
        evolve(2 * fock_state(config, {}), [], config)


def test_trajectory_csv_layout():
    config = FockConfig((4, 4), ("c", "m"))
    H = build_hamiltonian(linearized_terms(SystemParams(), 0.2), config)
    traj = evolve(fock_state(config, {"m": 1}), [(H, 1.0)], config, dt=0.5)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,n_c,n_m,norm"
    assert len(lines) == 4


# master equation -----------------------------------------------------------------

def test_lindblad_without_decay_matches_pure_evolution():
    config = FockConfig((6, 6), ("c", "m"))
    psi = coherent_state(config, {"c": 0.4, "m": 0.8j})
    segments = [(build_hamiltonian(linearized_terms(SystemParams(), g), config), 0.5) for g in (0.3, -0.2j, 0.1)]
    pure = evolve(psi, segments, config, dt=0.01)
    mixed = lindblad_evolve(np.outer(psi, psi.conj()), segments, config, {}, dt=0.01)
    for mode in ("c", "m"):
        np.testing.assert_allclose(mixed.energies[mode], pure.energies[mode], atol=1e-8)


def test_cavity_decay_convention():
    config = FockConfig((4,), ("c",))
    psi = fock_state(config, {"c": 1})
    zero = sp.csr_matrix((4, 4), dtype=complex)
    traj = lindblad_evolve(np.outer(psi, psi.conj()), [(zero, 2.0)], config, {"c": 0.3}, dt=0.001)
    np.testing.assert_allclose(traj.energies["c"], np.exp(-2 * 0.3 * traj.t), atol=1e-10)


def test_density_budget():
    config = FockConfig((40, 40), ("c", "m"))
    with pytest.raises(BudgetError):
        lindblad_evolve(np.zeros((1, 1)), [], config, {}, 0.1)


# swap dynamics -----------------------------------------------------------------------

def test_beamsplitter_conserves_excitations():
    params = SystemParams(delta=1.0)
    area, t1 = 0.05, 5e-4
    swap = compile_linear_beamsplitter(params, area / t1, t1, 1.0).metadata["swap_time"]
    sched = compile_linear_beamsplitter(params, area / t1, t1, swap)
    config = FockConfig((8, 8), ("c", "m"))
    traj = evolve(fock_state(config, {"m": 1}), sched.fock_segments(params, config), config, dt=0.5)
    total = traj.energies["c"] + traj.energies["m"]
    assert np.abs(total - 1).max() < 0.02
    assert traj.energies["m"][-1] < 0.02


def test_nonlinear_swap_empties_mechanics():
    params = SystemParams(g0=0.1)
    probe = compile_nonlinear_swap(params, 1000, 0.01, 0.08, 1.0, 4)
    sched = compile_nonlinear_swap(params, 1000, 0.01, 0.08, predicted_swap_time(probe), 4, correction="window")
    config = FockConfig((90, 10, 10), ("a", "s", "m"))
    traj = evolve(coherent_state(config, {"m": 1.0}), sched.fock_segments(params, config), config, dt=0.05)
    initial = traj.energies["m"][0]
    assert traj.energies["m"].min() <= 0.1 * initial
    assert traj.energies["s"][-1] >= 0.9 * initial
    assert np.abs(traj.norms - 1).max() < 1e-8
