"""Lowering of Gaussian unitaries to optical elements.

A symplectic operator is factored Bloch-Messiah style into
``passive . squeezers . passive``; each passive part is then factored into
beam splitters and phase shifters by triangular (Reck) nulling.  Layers that
are already made of disjoint squeezers are emitted as they stand, so a
two-mode squeezer lowers to a single ``TMS`` element.

Element conventions (Heisenberg maps of the mode operators):

===========================  =====================================================
``BS i j theta phi``         a_i -> cos(t) a_i - e^{-i phi} sin(t) a_j,
                             a_j -> e^{i phi} sin(t) a_i + cos(t) a_j
``PS i theta``               a_i -> e^{i theta} a_i
``TMS i j xi``               a_i -> cosh(xi) a_i + sinh(xi) a_j^dag (and i <-> j)
``SMS i r phi``              a_i -> cosh(r) a_i - e^{i phi} sinh(r) a_i^dag
===========================  =====================================================

Elements are listed in the order they act on the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import polar

from .modes import NonSymplectic, SymplecticOp, embed_bogoliubov

ZERO_TOL = 1e-12
ROUNDTRIP_TOL = 1e-8


@dataclass(frozen=True)
class BeamSplitter:
    i: int
    j: int
    theta: float
    phi: float

    def bogoliubov(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        A = np.array([[c, -np.exp(-1j * self.phi) * s], [np.exp(1j * self.phi) * s, c]])
        return (self.i, self.j), A, None


@dataclass(frozen=True)
class PhaseShifter:
    i: int
    theta: float

    def bogoliubov(self):
        return (self.i,), np.array([[np.exp(1j * self.theta)]]), None


@dataclass(frozen=True)
class TwoModeSqueezer:
    i: int
    j: int
    xi: float

    def bogoliubov(self):
        ch, sh = np.cosh(self.xi), np.sinh(self.xi)
        return (self.i, self.j), np.eye(2) * ch, np.array([[0.0, sh], [sh, 0.0]])


@dataclass(frozen=True)
class SingleModeSqueezer:
    i: int
    r: float
    phi: float = 0.0

    def bogoliubov(self):
        return (self.i,), np.array([[np.cosh(self.r)]]), np.array([[-np.exp(1j * self.phi) * np.sinh(self.r)]])


Element = BeamSplitter | PhaseShifter | TwoModeSqueezer | SingleModeSqueezer


def element_op(el: Element, num_modes: int) -> SymplecticOp:
    modes, A, B = el.bogoliubov()
    return embed_bogoliubov(num_modes, list(modes), A, B)


@dataclass
class OpticalCircuit:
    num_modes: int
    elements: list = field(default_factory=list)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for el in self.elements:
            out[type(el).__name__] = out.get(type(el).__name__, 0) + 1
        return out

    def recompose(self) -> SymplecticOp:
        S = np.eye(2 * self.num_modes)
        for el in self.elements:
            S = element_op(el, self.num_modes).matrix @ S
        return SymplecticOp(S)

    def to_text(self) -> str:
        lines = [f"# modes {self.num_modes}"]
        for el in self.elements:
            if isinstance(el, BeamSplitter):
                lines.append(f"BS {el.i} {el.j} {el.theta!r} {el.phi!r}")
            elif isinstance(el, PhaseShifter):
                lines.append(f"PS {el.i} {el.theta!r}")
            elif isinstance(el, TwoModeSqueezer):
                lines.append(f"TMS {el.i} {el.j} {el.xi!r}")
            else:
                lines.append(f"SMS {el.i} {el.r!r} {el.phi!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, num_modes: int | None = None) -> "OpticalCircuit":
        elements = []
        highest = -1
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "modes" and num_modes is None:
                    num_modes = int(parts[1])
                continue
            tag, *args = line.split()
            if tag == "BS":
                el = BeamSplitter(int(args[0]), int(args[1]), float(args[2]), float(args[3]))
                highest = max(highest, el.i, el.j)
            elif tag == "PS":
                el = PhaseShifter(int(args[0]), float(args[1]))
                highest = max(highest, el.i)
            elif tag == "TMS":
                el = TwoModeSqueezer(int(args[0]), int(args[1]), float(args[2]))
                highest = max(highest, el.i, el.j)
            elif tag == "SMS":
                el = SingleModeSqueezer(int(args[0]), float(args[1]), float(args[2]))
                highest = max(highest, el.i)
            else:
                raise ValueError(f"unknown circuit element {tag!r}")
            elements.append(el)
        if num_modes is None:
            num_modes = highest + 1
        return cls(num_modes, elements)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "OpticalCircuit":
        return cls.from_text(Path(path).read_text())


# -- passive (interferometer) decomposition ----------------------------------


def reck_decompose(U: np.ndarray, tol: float = ZERO_TOL) -> list:
    """Beam splitters and phase shifters realising the passive mode map ``U``.

    Column operations null the strictly lower triangle row by row from the
    bottom, leaving a diagonal of phases.
    """
    U = np.array(U, dtype=complex)
    n = U.shape[0]
    bs = []
    for row in range(n - 1, 0, -1):
        for col in range(row):
            um, un = U[row, col], U[row, col + 1]
            if abs(um) < tol:
                continue
            theta = np.arctan2(abs(um), abs(un))
            phi = np.angle(um) - np.angle(un) if abs(un) >= tol else np.angle(um)
            c, s = np.cos(theta), np.sin(theta)
            T = np.array([[c, -np.exp(-1j * phi) * s], [np.exp(1j * phi) * s, c]])
            U[:, [col, col + 1]] = U[:, [col, col + 1]] @ T.conj().T
            bs.append(BeamSplitter(col, col + 1, float(theta), float(phi)))
    elements = list(bs)
    for i, d in enumerate(np.diag(U)):
        angle = float(np.angle(d))
        if abs(angle) > tol:
            elements.append(PhaseShifter(i, angle))
    return elements


# -- Takagi / Bloch-Messiah ----------------------------------------------------


def takagi(M: np.ndarray, tol: float = 1e-11) -> tuple[np.ndarray, np.ndarray]:
    """Factor a complex symmetric ``M = W diag(s) W^T`` with unitary ``W`` and ``s >= 0``.

    Uses the real symmetric embedding ``[[X, Y], [Y, -X]]`` whose non-negative
    eigenpairs carry the Takagi vectors; the kernel is handled separately so
    that degenerate zeros give an orthonormal basis.
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    if np.linalg.norm(M - M.T) > 1e3 * tol * max(1.0, np.linalg.norm(M)):
        raise ValueError("matrix is not symmetric")
    X, Y = M.real, M.imag
    vals, vecs = np.linalg.eigh(np.block([[X, Y], [Y, -X]]))
    cols, svals = [], []
    for idx in np.argsort(vals)[::-1]:
        if vals[idx] <= tol:
            break
        cols.append(vecs[:n, idx] + 1j * vecs[n:, idx])
        svals.append(vals[idx])
    k = len(cols)
    if k < n:
        # conj(ker M) completes the basis
        _, _, vh = np.linalg.svd(M)
        kernel = vh[k:].conj().T
        kernel = kernel.conj()
        cols.extend(kernel.T)
        svals.extend([0.0] * (n - k))
    W = np.array(cols).T
    return np.array(svals), W


def bloch_messiah(op: SymplecticOp, tol: float = 1e-10):
    """Return ``(U1, r, U2)`` with ``S = passive(U1) . squeeze(r) . passive(U2)``.

    ``squeeze(r)`` maps ``a_j -> cosh(r_j) a_j - sinh(r_j) a_j^dag``.
    """
    S = op.matrix
    err = op.symplectic_error()
    if err > tol * max(1.0, np.linalg.norm(S)):
        raise NonSymplectic(f"symplectic defect {err:.3e} exceeds tolerance")
    n = op.num_modes
    O, P = polar(S, side="right")
    Ap, Bp = SymplecticOp(P).bogoliubov()
    s, W = takagi(-Bp)
    r = np.arcsinh(s)
    passive_O = SymplecticOp(O).bogoliubov()[0]
    U1 = passive_O @ W
    U2 = W.conj().T
    return U1, r, U2


def _direct_lowering(op: SymplecticOp, tol: float) -> list | None:
    """Read off elements when ``op`` is already a layer of disjoint squeezers and phases.

    Returns ``None`` unless ``A`` is diagonal and ``B`` couples each mode to at
    most one partner.
    """
    A, B = op.bogoliubov()
    n = op.num_modes
    if np.abs(A - np.diag(np.diag(A))).max(initial=0.0) > tol:
        return None
    mask = np.abs(B) > tol
    if np.any(mask.sum(axis=1) > 1):
        return None
    elements = []
    done = set()
    for i in range(n):
        if i in done:
            continue
        alpha = float(np.angle(A[i, i]))
        partners = np.flatnonzero(mask[i])
        if partners.size == 0:
            if abs(alpha) > tol:
                elements.append(PhaseShifter(i, alpha))
            done.add(i)
            continue
        j = int(partners[0])
        r = float(np.arccosh(max(abs(A[i, i]), 1.0)))
        beta = float(np.angle(B[i, j]))
        if j == i:
            # A = e^{i alpha} cosh r, B = e^{i beta} sinh r
            elements.append(SingleModeSqueezer(i, r, float(np.angle(-np.exp(1j * (beta - alpha))))))
            if abs(alpha) > tol:
                elements.append(PhaseShifter(i, alpha))
        else:
            # phases: theta_i before, then TMS, then phi_i, phi_j after
            if abs(alpha - beta) > tol:
                elements.append(PhaseShifter(i, float(np.angle(np.exp(1j * (alpha - beta))))))
            elements.append(TwoModeSqueezer(i, j, r))
            if abs(np.angle(np.exp(1j * beta))) > tol:
                elements.append(PhaseShifter(i, beta))
            alpha_j = float(np.angle(A[j, j]))
            if abs(alpha_j) > tol:
                elements.append(PhaseShifter(j, alpha_j))
            done.add(j)
        done.add(i)
    return elements


def decompose_to_circuit(op: SymplecticOp, tol: float = 1e-10) -> OpticalCircuit:
    """Factor a symplectic operator into optical elements.

    Operators that already are a layer of disjoint squeezers and phase shifts
    are emitted element by element.  Passive operators go straight to the
    triangular beam-splitter mesh.  Everything else goes through
    :func:`bloch_messiah`.

    Raises :class:`NonSymplectic` if ``op`` violates the symplectic condition.
    """
    n = op.num_modes
    err = op.symplectic_error()
    if err > tol * max(1.0, np.linalg.norm(op.matrix)):
        raise NonSymplectic(f"symplectic defect {err:.3e} exceeds tolerance")
    if np.any(op.displacement):
        raise ValueError("displaced operators are not supported by the circuit lowering")

    direct = _direct_lowering(op, tol)
    if direct is not None:
        circuit = OpticalCircuit(n, direct)
        if circuit.recompose().distance(op) <= ROUNDTRIP_TOL:
            return circuit
    if op.is_passive(tol):
        U, _ = op.bogoliubov()
        return OpticalCircuit(n, reck_decompose(U))

    U1, r, U2 = bloch_messiah(op, tol)
    elements = reck_decompose(U2)
    for j in range(n):
        if abs(r[j]) > ZERO_TOL:
            elements.append(SingleModeSqueezer(j, float(r[j]), 0.0))
    elements.extend(reck_decompose(U1))
    return OpticalCircuit(n, elements)


def lower_sequence(ops) -> OpticalCircuit:
    """Concatenate the circuits of several operators given in the order they act."""
    ops = list(ops)
    circuit = OpticalCircuit(ops[0].num_modes)
    for op in ops:
        circuit.elements.extend(decompose_to_circuit(op).elements)
    return circuit


def groundstate_circuit(cfg, inverse: bool = False) -> OpticalCircuit:
    """Two-step circuit for the ground-state unitary: Fourier mesh, then down-converters.

    With ``inverse=True`` the circuit prepares the free ground state from the
    local vacuum (squeezers first, then the inverse Fourier mesh).
    """
    from .modes import fourier_symplectic, squeeze_layer

    fourier, squeeze = fourier_symplectic(cfg), squeeze_layer(cfg)
    if inverse:
        return lower_sequence([squeeze.inverse(), fourier.inverse()])
    return lower_sequence([fourier, squeeze])
