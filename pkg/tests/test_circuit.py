import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqed.circuit import (
    ROUNDTRIP_TOL,
    BeamSplitter,
    OpticalCircuit,
    PhaseShifter,
    SingleModeSqueezer,
    TwoModeSqueezer,
    bloch_messiah,
    decompose_to_circuit,
    element_op,
    groundstate_circuit,
    reck_decompose,
    takagi,
)
from cvqed.lattice import LatticeConfig
from cvqed.modes import SYMPLECTIC_TOL, SymplecticOp, embed_bogoliubov, groundstate_unitary

from oracles import random_symplectic, random_unitary


def test_identity_lowers_to_empty_circuit():
    assert len(decompose_to_circuit(SymplecticOp.identity(5))) == 0


@pytest.mark.parametrize("xi", [0.3, -0.8, 1.7])
def test_two_mode_squeezer_is_a_fixed_point(xi):
    op = element_op(TwoModeSqueezer(1, 3, xi), 5)
    circ = decompose_to_circuit(op)
    counts = circ.counts()
    assert counts.get("TwoModeSqueezer") == 1
    assert set(counts) <= {"TwoModeSqueezer", "PhaseShifter"}
    assert circ.recompose().distance(op) < ROUNDTRIP_TOL


def test_random_six_mode_roundtrip():
    S = random_symplectic(6, np.random.default_rng(2024))
    op = SymplecticOp(S)
    assert op.symplectic_error() < SYMPLECTIC_TOL
    circ = decompose_to_circuit(op)
    assert np.linalg.norm(circ.recompose().matrix - S) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_roundtrip_up_to_ten_modes(n, seed):
    op = SymplecticOp(random_symplectic(n, np.random.default_rng(seed)))
    circ = decompose_to_circuit(op)
    assert circ.recompose().distance(op) <= ROUNDTRIP_TOL
    for el in circ:
        assert element_op(el, n).symplectic_error() < SYMPLECTIC_TOL


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_passive_maps_use_only_interferometer_elements(n, seed):
    U = random_unitary(n, np.random.default_rng(seed))
    op = SymplecticOp.from_passive(U)
    circ = decompose_to_circuit(op)
    assert set(circ.counts()) <= {"BeamSplitter", "PhaseShifter"}
    assert circ.recompose().distance(op) <= ROUNDTRIP_TOL
    beam_splitters = [el for el in reck_decompose(U) if isinstance(el, BeamSplitter)]
    assert len(beam_splitters) <= n * (n - 1) // 2


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_bloch_messiah_factors(n, seed):
    op = SymplecticOp(random_symplectic(n, np.random.default_rng(seed)))
    U1, r, U2 = bloch_messiah(op)
    assert np.allclose(U1 @ U1.conj().T, np.eye(n), atol=1e-10)
    assert np.allclose(U2 @ U2.conj().T, np.eye(n), atol=1e-10)
    assert np.all(r >= 0)
    squeeze = SymplecticOp.from_bogoliubov(np.diag(np.cosh(r)), -np.diag(np.sinh(r)))
    rebuilt = SymplecticOp.from_passive(U1) @ squeeze @ SymplecticOp.from_passive(U2)
    assert rebuilt.distance(op) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_takagi_factorisation(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    M = M + M.T
    s, W = takagi(M)
    assert np.all(s >= 0)
    assert np.allclose(W @ np.diag(s) @ W.T, M, atol=1e-10)
    assert np.allclose(W.conj().T @ W, np.eye(n), atol=1e-10)


def test_displaced_operator_rejected():
    op = SymplecticOp(np.eye(4), np.array([0.1, 0, 0, 0]))
    with pytest.raises(ValueError):
        decompose_to_circuit(op)


@pytest.mark.parametrize("dim,extent", [(1, 2), (1, 4), (2, 2)])
def test_groundstate_circuit_recomposes(dim, extent):
    cfg = LatticeConfig(dim, extent, 0.8)
    U = groundstate_unitary(cfg)
    assert groundstate_circuit(cfg).recompose().distance(U) < ROUNDTRIP_TOL
    assert groundstate_circuit(cfg, inverse=True).recompose().distance(U.inverse()) < ROUNDTRIP_TOL


def test_text_format_roundtrip(tmp_path):
    circ = OpticalCircuit(
        4,
        [
            BeamSplitter(0, 1, 0.3, -1.2),
            PhaseShifter(2, 0.1 + 1e-13),
            TwoModeSqueezer(1, 3, 0.25),
            SingleModeSqueezer(0, 0.4, 0.7),
        ],
    )
    path = tmp_path / "c.txt"
    circ.save(path)
    text = path.read_text()
    assert text.splitlines()[0] == "# modes 4"
    assert text.splitlines()[1].split()[0] == "BS"
    back = OpticalCircuit.load(path)
    assert back.elements == circ.elements
    assert back.num_modes == 4
    assert back.recompose().distance(circ.recompose()) == 0


def test_text_format_ignores_comments_and_rejects_unknown_tags():
    circ = OpticalCircuit.from_text("# a comment\n\nPS 2 0.5\n")
    assert circ.num_modes == 3
    with pytest.raises(ValueError):
        OpticalCircuit.from_text("XX 0 1\n")


def test_element_conventions():
    A = element_op(BeamSplitter(0, 1, 0.4, 0.9), 2).bogoliubov()[0]
    c, s = np.cos(0.4), np.sin(0.4)
    assert np.allclose(A, [[c, -np.exp(-0.9j) * s], [np.exp(0.9j) * s, c]])
    A, B = element_op(TwoModeSqueezer(0, 1, 0.6), 2).bogoliubov()
    assert np.allclose(A, np.cosh(0.6) * np.eye(2))
    assert np.allclose(B, np.sinh(0.6) * np.array([[0, 1], [1, 0]]))
    A, B = element_op(SingleModeSqueezer(0, 0.6, 0.2), 1).bogoliubov()
    assert np.allclose(B, [[-np.exp(0.2j) * np.sinh(0.6)]])


def test_embedded_squeezer_matches_element():
    A = np.cosh(0.5) * np.eye(2)
    B = np.sinh(0.5) * np.array([[0, 1], [1, 0]])
    assert embed_bogoliubov(4, (0, 2), A, B).distance(element_op(TwoModeSqueezer(0, 2, 0.5), 4)) < 1e-14
