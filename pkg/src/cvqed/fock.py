"""Truncated-Fock backend.

Occupation basis
----------------
:class:`FockSpace` enumerates occupation tuples ``(n_0, ..., n_{N-1})`` with
``0 <= n_j <= cutoff`` in lexicographic order, mode 0 most significant, so with
no extra cap basis index ``i`` is the mixed-radix number with digits ``n_j``.
An optional ``max_total`` additionally drops states with ``sum n_j > max_total``
(order is preserved).

Frames
------
A :class:`FockModel` represents field operators in the occupation basis of a
chosen set of modes:

``"particle"``
    The modes ``b(k), c(k), a_i(k)``.  The Fock vacuum is the free ground state,
    the free Hamiltonian is diagonal and exact, and only the interaction and
    counterterm feel the cutoff.  Measuring these occupations is the same as
    uncomputing with the ground-state unitary and measuring local qumodes.
``"position"``
    The local qumodes ``B(x), C(x), A_i(x)``.  Here the free Hamiltonian itself is
    truncated, which makes it the brute-force check on the Gaussian machinery.

Fields are assembled from :class:`~cvqed.modes.LadderForm` objects over local
modes and re-expressed in the frame, so both frames share one construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import logm
from scipy.sparse.linalg import expm_multiply
from scipy.sparse.linalg import norm as _spnorm

from . import circuit as _circuit
from .lattice import LatticeConfig, ModeLayout
from .modes import LadderForm, SymplecticOp, groundstate_unitary, local_fields, symplectic_form

DENSE_LIMIT = 200_000
KRYLOV_LIMIT = 5_000_000
_KEY_LIMIT = 2**62


class CutoffTooSmall(ValueError):
    pass


class OracleTooLarge(RuntimeError):
    pass


class ZeroNorm(ValueError):
    pass


def _capped_tuples(num_modes: int, cutoff: int, budget: int):
    if num_modes == 0:
        yield ()
        return
    for n in range(min(cutoff, budget) + 1):
        for rest in _capped_tuples(num_modes - 1, cutoff, budget - n):
            yield (n,) + rest


class FockSpace:
    """Occupation-number basis of ``num_modes`` modes truncated at ``cutoff`` quanta each."""

    def __init__(self, num_modes: int, cutoff: int, max_total: int | None = None):
        if cutoff < 1:
            raise CutoffTooSmall(f"cutoff must be at least 1, got {cutoff}")
        if num_modes < 1:
            raise ValueError("need at least one mode")
        self.num_modes = int(num_modes)
        self.cutoff = int(cutoff)
        self.max_total = None if max_total is None or max_total >= num_modes * cutoff else int(max_total)
        full = (cutoff + 1) ** num_modes
        if self.max_total is None:
            if full > KRYLOV_LIMIT:
                raise OracleTooLarge(f"Fock dimension {full} exceeds {KRYLOV_LIMIT}")
            digits = np.unravel_index(np.arange(full), (cutoff + 1,) * num_modes)
            self.basis = np.stack(digits, axis=1).astype(np.int16)
        else:
            rows = list(_capped_tuples(num_modes, cutoff, self.max_total))
            if len(rows) > KRYLOV_LIMIT:
                raise OracleTooLarge(f"Fock dimension {len(rows)} exceeds {KRYLOV_LIMIT}")
            self.basis = np.array(rows, dtype=np.int16).reshape(len(rows), num_modes)
        self._use_keys = (cutoff + 1) ** num_modes < _KEY_LIMIT
        if self._use_keys:
            self._radix = (cutoff + 1) ** np.arange(num_modes - 1, -1, -1, dtype=np.int64)
            self._keys = self.basis.astype(np.int64) @ self._radix
        else:
            self._lookup = {row.tobytes(): i for i, row in enumerate(self.basis)}

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def index_of(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int16)
        if self._use_keys:
            key = int(occ.astype(np.int64) @ self._radix)
            pos = int(np.searchsorted(self._keys, key))
            if pos < self.dim and self._keys[pos] == key:
                return pos
        else:
            pos = self._lookup.get(occ.tobytes())
            if pos is not None:
                return pos
        raise KeyError(f"occupation {tuple(occ)} not in basis")

    def _locate(self, rows: np.ndarray) -> np.ndarray:
        if self._use_keys:
            return np.searchsorted(self._keys, rows.astype(np.int64) @ self._radix)
        return np.array([self._lookup[r.tobytes()] for r in rows], dtype=np.int64)

    def annihilation(self, mode: int) -> sp.csr_matrix:
        """Truncated ``a_mode`` as a sparse matrix."""
        n = self.basis[:, mode]
        src = np.flatnonzero(n > 0)
        rows = self.basis[src].copy()
        rows[:, mode] -= 1
        dst = self._locate(rows)
        vals = np.sqrt(n[src].astype(float))
        return sp.csr_matrix((vals, (dst, src)), shape=(self.dim, self.dim))

    def number(self, mode: int) -> sp.csr_matrix:
        return sp.diags(self.basis[:, mode].astype(float), format="csr")

    def vacuum(self) -> np.ndarray:
        psi = np.zeros(self.dim, complex)
        psi[0] = 1.0
        return psi

    def basis_state(self, occupation) -> np.ndarray:
        psi = np.zeros(self.dim, complex)
        psi[self.index_of(occupation)] = 1.0
        return psi

    def low_occupation_mask(self) -> np.ndarray:
        """Basis states where every mode is strictly below the cutoff."""
        return np.all(self.basis < self.cutoff, axis=1)


# -- field model ------------------------------------------------------------------


@dataclass(frozen=True)
class FieldOps:
    """Sparse field operators at every site (photon entries indexed ``[component][site]``)."""

    phi: list
    pi: list
    phi1: list
    phi2: list
    pi1: list
    pi2: list
    A: list
    E: list


class FockModel:
    """Lattice scalar QED restricted to a truncated Fock space in a chosen frame.

    Parameters
    ----------
    cfg : LatticeConfig
    cutoff : int
        Maximum occupation per mode.
    frame : {"particle", "position"}
    modes : sequence of int, optional
        Keep only these frame modes; the others are frozen in their vacuum and
        their components are dropped from every field.  Exact for operators that
        do not couple kept and dropped modes, such as the free Hamiltonian split
        into scalar and photon sectors.
    max_total : int, optional
        Cap on the total number of quanta.
    """

    def __init__(
        self,
        cfg: LatticeConfig,
        cutoff: int,
        frame: str = "particle",
        modes=None,
        max_total: int | None = None,
    ):
        if frame not in ("particle", "position"):
            raise ValueError(f"unknown frame {frame!r}")
        self.cfg = cfg
        self.layout = ModeLayout(cfg)
        self.frame = frame
        self.groundstate_op = groundstate_unitary(cfg)
        self.frame_op = self.groundstate_op if frame == "particle" else SymplecticOp.identity(cfg.num_modes)
        self.modes = np.arange(cfg.num_modes) if modes is None else np.asarray(sorted(modes), dtype=int)
        self.space = FockSpace(len(self.modes), cutoff, max_total)
        self._ops: dict = {}

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def ladder(self) -> list[sp.csr_matrix]:
        return [self.space.annihilation(j) for j in range(len(self.modes))]

    @cached_property
    def ladder_dag(self) -> list[sp.csr_matrix]:
        return [a.T.tocsr() for a in self.ladder]

    def operator(self, form: LadderForm, local: bool = True) -> sp.csr_matrix:
        """Sparse matrix of a linear form (over local modes unless ``local=False``)."""
        if local and self.frame == "particle":
            form = form.to_frame(self.frame_op)
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for slot, mode in enumerate(self.modes):
            u, v = form.u[mode], form.v[mode]
            if abs(u) > 1e-15:
                out = out + u * self.ladder[slot]
            if abs(v) > 1e-15:
                out = out + v * self.ladder_dag[slot]
        return out.tocsr()

    def particle_form(self, mode: int) -> LadderForm:
        """The particle mode ``U^dag a_mode U`` as a form over local modes."""
        A, B = self.groundstate_op.bogoliubov()
        return LadderForm(A[mode].copy(), B[mode].copy())

    def particle_operator(self, mode: int) -> sp.csr_matrix:
        if self.frame == "particle":
            if mode not in self.modes:
                return sp.csr_matrix((self.dim, self.dim), dtype=complex)
            return self.ladder[int(np.searchsorted(self.modes, mode))].astype(complex)
        return self.operator(self.particle_form(mode))

    @cached_property
    def fields(self) -> FieldOps:
        f = local_fields(self.cfg)
        conv = lambda forms: [self.operator(x) for x in forms]  # noqa: E731
        return FieldOps(
            phi=conv(f["phi"]),
            pi=conv(f["pi"]),
            phi1=conv(f["phi1"]),
            phi2=conv(f["phi2"]),
            pi1=conv(f["pi1"]),
            pi2=conv(f["pi2"]),
            A=[conv(c) for c in f["A"]],
            E=[conv(c) for c in f["E"]],
        )

    # -- Hamiltonians ---------------------------------------------------------

    def H0(self) -> sp.csr_matrix:
        """Normal-ordered free Hamiltonian ``sum_j w_j beta_j^dag beta_j``."""
        if "H0" not in self._ops:
            w = self.layout.frequencies
            if self.frame == "particle":
                diag = self.space.basis.astype(float) @ w[self.modes]
                H = sp.diags(diag.astype(complex), format="csr")
            else:
                H = sp.csr_matrix((self.dim, self.dim), dtype=complex)
                for mode in range(self.cfg.num_modes):
                    beta = self.particle_operator(mode)
                    if beta.nnz:
                        H = H + w[mode] * (beta.conj().T @ beta)
                H = _hermitize(H)
            self._ops["H0"] = H
        return self._ops["H0"]

    def _interaction_parts(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        if "HI" not in self._ops:
            cfg = self.cfg
            f = self.fields
            cubic = sp.csr_matrix((self.dim, self.dim), dtype=complex)
            quartic = sp.csr_matrix((self.dim, self.dim), dtype=complex)
            for x in range(cfg.num_sites):
                phi = f.phi[x]
                phid = phi.conj().T.tocsr()
                density = phid @ phi
                for i in range(cfg.dim):
                    fwd, bwd = cfg.shift(x, i, 1), cfg.shift(x, i, -1)
                    grad = 0.5 * (f.phi[fwd] - f.phi[bwd])
                    gradd = grad.conj().T.tocsr()
                    A = f.A[i][x]
                    if grad.nnz:
                        cubic = cubic - 1j * (A @ (phi @ gradd - phid @ grad))
                    quartic = quartic - (A @ A) @ density
            self._ops["HI"] = (_hermitize(cubic), _hermitize(quartic))
        return self._ops["HI"]

    def HI(self, e: float) -> sp.csr_matrix:
        """Interaction Hamiltonian at charge ``e`` (symmetric lattice gradient)."""
        cubic, quartic = self._interaction_parts()
        return (e * cubic + e**2 * quartic).tocsr()

    @cached_property
    def _phi_density(self) -> sp.csr_matrix:
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for phi in self.fields.phi:
            out = out + phi.conj().T @ phi
        return _hermitize(out)

    def Hct(self, delta_m: float) -> sp.csr_matrix:
        """Mass counterterm ``(delta_m/2) sum_x phi^dag phi``."""
        return (0.5 * delta_m * self._phi_density).tocsr()

    def hamiltonian(self, e: float = 0.0, delta_m: float = 0.0) -> sp.csr_matrix:
        return (self.H0() + self.HI(e) + self.Hct(delta_m)).tocsr()

    # -- symmetries and constraints ---------------------------------------------

    def charge(self) -> sp.csr_matrix:
        """Total charge ``sum_k b^dag b - c^dag c``."""
        if "Q" not in self._ops:
            n = self.cfg.num_sites
            Q = sp.csr_matrix((self.dim, self.dim), dtype=complex)
            for mode in range(2 * n):
                beta = self.particle_operator(mode)
                if beta.nnz:
                    sign = 1.0 if mode < n else -1.0
                    Q = Q + sign * (beta.conj().T @ beta)
            self._ops["Q"] = _hermitize(Q)
        return self._ops["Q"]

    def constraint(self, k: int) -> sp.csr_matrix:
        """Gauge-condition operator ``C(k) = sum_i k_i a_i(k)`` (not hermitian)."""
        kvec = self.cfg.momenta()[k]
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for i in range(self.cfg.dim):
            if kvec[i] != 0:
                out = out + kvec[i] * self.particle_operator(self.layout.index("photon", i, k))
        return out.tocsr()

    def constraint_norms(self, psi: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(self.constraint(k) @ psi) for k in range(self.cfg.num_sites)])

    def _gauss_parts(self, x: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        key = ("gauss", x)
        if key not in self._ops:
            cfg = self.cfg
            f = self.fields
            div = sp.csr_matrix((self.dim, self.dim), dtype=complex)
            for i in range(cfg.dim):
                div = div + 0.5 * (f.E[i][cfg.shift(x, i, 1)] - f.E[i][cfg.shift(x, i, -1)])
            pi, phi = f.pi[x], f.phi[x]
            density = 1j * (pi @ phi - pi.conj().T @ phi.conj().T)
            self._ops[key] = (_hermitize(div), _hermitize(density))
        return self._ops[key]

    def gauss_law(self, x: int, e: float) -> sp.csr_matrix:
        """``div E(x) - rho(x)`` with ``rho = i e (pi phi - pi^dag phi^dag)``.

        The divergence is the symmetric lattice difference.
        """
        div, density = self._gauss_parts(x)
        return (div - e * density).tocsr() if e else div

    # -- states -------------------------------------------------------------------

    def groundstate(self) -> np.ndarray:
        """Free ground state: the Fock vacuum in the particle frame, otherwise
        the ground-state circuit applied to the local vacuum."""
        if self.frame == "particle":
            return self.space.vacuum()
        if len(self.modes) != self.cfg.num_modes:
            raise ValueError("ground-state preparation needs every mode in the position frame")
        return apply_circuit(self, _circuit.groundstate_circuit(self.cfg, inverse=True), self.space.vacuum())

    def energy(self, H: sp.spmatrix, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, H @ psi)))


def _hermitize(H: sp.spmatrix) -> sp.csr_matrix:
    H = 0.5 * (H + H.conj().T)
    H = H.tocsr()
    H.eliminate_zeros()
    return H


# -- module-level entry points ------------------------------------------------------


def build_quadrature_ops(model: FockModel) -> FieldOps:
    return model.fields


def build_H0(model: FockModel) -> sp.csr_matrix:
    return model.H0()


def build_HI(model: FockModel, e: float) -> sp.csr_matrix:
    return model.HI(e)


def build_Hct(model: FockModel, delta_m: float) -> sp.csr_matrix:
    return model.Hct(delta_m)


def gauss_constraint_op(model: FockModel, k: int) -> sp.csr_matrix:
    return model.constraint(k)


def gauss_law_op(model: FockModel, x: int, e: float) -> sp.csr_matrix:
    return model.gauss_law(x, e)


def commutator(A: sp.spmatrix, B: sp.spmatrix) -> sp.spmatrix:
    return A @ B - B @ A


def sparse_norm(A: sp.spmatrix) -> float:
    """Frobenius norm of a sparse matrix."""
    return float(_spnorm(A)) if A.nnz else 0.0


# -- evolution --------------------------------------------------------------------


def _check_size(dim: int, limit: int) -> None:
    if dim > limit:
        raise OracleTooLarge(f"dimension {dim} exceeds the evolution limit {limit}")


def exact_evolve(H: sp.spmatrix, t: float, psi: np.ndarray, sign: int = -1, limit: int = KRYLOV_LIMIT) -> np.ndarray:
    """``exp(sign * i * t * H) psi`` via a Krylov/Taylor action of the exponential."""
    _check_size(H.shape[0], limit)
    if t == 0:
        return np.array(psi, dtype=complex)
    return expm_multiply((sign * 1j * t) * H, np.asarray(psi, dtype=complex))


def trotter_step(
    model: FockModel,
    e: float,
    delta_m: float,
    dt: float,
    psi: np.ndarray,
    sign: int = 1,
) -> np.ndarray:
    """One Lie-Trotter step ``exp(s i dt H0) exp(s i dt HI(e)) exp(s i dt Hct) psi``.

    The rightmost factor acts first.  ``sign=+1`` reproduces the literal product
    formula; ``sign=-1`` gives ordinary Schroedinger evolution.
    """
    _check_size(model.dim, KRYLOV_LIMIT)
    psi = np.asarray(psi, dtype=complex)
    if delta_m != 0:
        psi = expm_multiply((sign * 1j * dt) * model.Hct(delta_m), psi)
    if e != 0:
        psi = expm_multiply((sign * 1j * dt) * model.HI(e), psi)
    return _free_step(model, dt, psi, sign)


def _free_step(model: FockModel, dt: float, psi: np.ndarray, sign: int) -> np.ndarray:
    H0 = model.H0()
    if model.frame == "particle":
        return np.exp((sign * 1j * dt) * H0.diagonal()) * psi
    return expm_multiply((sign * 1j * dt) * H0, psi)


# -- Gaussian circuits inside the truncated space -------------------------------------


def _element_generator(model: FockModel, el) -> sp.csr_matrix:
    """Hermitian ``G`` with ``exp(-i G)`` the element, on the model's modes."""
    slots = {int(m): s for s, m in enumerate(model.modes)}
    modes, A, B = el.bogoliubov()
    if any(m not in slots for m in modes):
        raise ValueError("circuit touches a mode outside the model")
    a = [model.ladder[slots[m]] for m in modes]
    ad = [model.ladder_dag[slots[m]] for m in modes]
    if B is None:
        # passive: U^dag a U = W a with W = exp(-i K), G = a^dag K a
        W = np.asarray(A, dtype=complex)
        K = 1j * logm(W)
        G = sp.csr_matrix((model.dim, model.dim), dtype=complex)
        for p in range(len(modes)):
            for q in range(len(modes)):
                if abs(K[p, q]) > 1e-15:
                    G = G + K[p, q] * (ad[p] @ a[q])
        return _hermitize(G)
    # active: S = exp(Omega h) and G = r^T h r / 2 from truncated quadratures
    m = len(modes)
    S = SymplecticOp.from_bogoliubov(A, B).matrix
    h = -symplectic_form(m) @ np.real(logm(S))
    h = 0.5 * (h + h.T)
    s2 = np.sqrt(0.5)
    quads = [s2 * (a[p] + ad[p]) for p in range(m)] + [-1j * s2 * (a[p] - ad[p]) for p in range(m)]
    G = sp.csr_matrix((model.dim, model.dim), dtype=complex)
    for p in range(2 * m):
        for q in range(2 * m):
            if abs(h[p, q]) > 1e-15:
                G = G + 0.5 * h[p, q] * (quads[p] @ quads[q])
    return _hermitize(G)


def apply_circuit(model: FockModel, circ, psi: np.ndarray) -> np.ndarray:
    """Run an :class:`~cvqed.circuit.OpticalCircuit` on a truncated state."""
    psi = np.asarray(psi, dtype=complex)
    for el in circ.elements:
        if isinstance(el, _circuit.PhaseShifter):
            slot = int(np.searchsorted(model.modes, el.i))
            psi = np.exp(1j * el.theta * model.space.basis[:, slot]) * psi
            continue
        psi = expm_multiply(-1j * _element_generator(model, el), psi)
    return psi


def apply_gaussian(model: FockModel, op: SymplecticOp, psi: np.ndarray) -> np.ndarray:
    """Apply a Gaussian unitary on the model's own modes by lowering it to a circuit."""
    if model.frame != "position" or len(model.modes) != model.cfg.num_modes:
        raise ValueError("Gaussian embedding needs the full position frame")
    return apply_circuit(model, _circuit.decompose_to_circuit(op), psi)


# -- states and measurement -------------------------------------------------------------


@dataclass(frozen=True)
class Wavepacket:
    """One creation profile ``sum_k f(k) b^dag(k)`` (or ``c^dag`` when ``kind='antiparticle'``)."""

    profile: np.ndarray
    kind: str = "particle"
    peak: int | None = None


def creation_operator(model: FockModel, packet: Wavepacket) -> sp.csr_matrix:
    f = np.asarray(packet.profile, dtype=complex)
    n = model.cfg.num_sites
    if f.shape != (n,):
        raise ValueError(f"profile needs {n} momentum weights")
    comp = {"particle": 0, "antiparticle": 1}.get(packet.kind)
    if comp is None:
        raise ValueError("only particle and antiparticle wavepackets are supported")
    out = sp.csr_matrix((model.dim, model.dim), dtype=complex)
    for k in range(n):
        if f[k] != 0:
            out = out + f[k] * model.particle_operator(model.layout.index("scalar", comp, k)).conj().T
    return out.tocsr()


def prepare_excited(model: FockModel, psi: np.ndarray, packets, tol: float = 1e-12) -> np.ndarray:
    """Apply each wavepacket creation operator in turn and renormalise."""
    psi = np.asarray(psi, dtype=complex)
    for packet in packets:
        psi = creation_operator(model, packet) @ psi
    norm = np.linalg.norm(psi)
    if norm < tol:
        raise ZeroNorm("wavepacket profile annihilates the state at this cutoff")
    return psi / norm


@dataclass
class Measurement:
    marginals: list  # per mode, array P(n) for n = 0..cutoff
    means: np.ndarray
    labels: list  # (classification, component, momentum-or-site) per mode
    samples: np.ndarray | None = None

    def totals(self) -> dict[str, float]:
        out = {"particle": 0.0, "antiparticle": 0.0, "photon": 0.0}
        for lab, m in zip(self.labels, self.means):
            out[lab[0]] += float(m)
        return out


def measure_numbers(model: FockModel, psi: np.ndarray, shots: int = 0, seed: int | None = None) -> Measurement:
    """Exact per-mode number distributions and optional seeded joint samples."""
    prob = np.abs(psi) ** 2
    prob = prob / prob.sum()
    basis = model.space.basis
    cutoff = model.space.cutoff
    marginals = [np.bincount(basis[:, j], weights=prob, minlength=cutoff + 1) for j in range(basis.shape[1])]
    means = prob @ basis
    labels = []
    for mode in model.modes:
        kind, comp, site = model.layout.label(int(mode))
        labels.append((model.layout.classify(int(mode)), comp if kind == "photon" else 0, site))
    samples = None
    if shots:
        rng = np.random.default_rng(seed)
        samples = basis[rng.choice(len(prob), size=shots, p=prob)].astype(int)
    return Measurement(marginals, means, labels, samples)


# -- trace export ----------------------------------------------------------------------------

TRACE_COLUMNS = ("t", "e", "delta_m", "norm", "energy", "max_constraint", "charge")


def write_trace(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(row[c])) for c in TRACE_COLUMNS])

