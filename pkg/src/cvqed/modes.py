"""Gaussian mode maps: symplectic operators, the lattice Fourier transform and
the ground-state unitary relating local qumodes to particle modes.

Conventions
-----------
Quadratures are ordered ``r = (x_1 .. x_N, p_1 .. p_N)`` with
``a_j = (x_j + i p_j)/sqrt(2)`` and ``[r_a, r_b] = i Omega_ab``.

A :class:`SymplecticOp` stores the Heisenberg action of a Gaussian unitary
``U``: ``U^dag r U = S r + d``.  Applying ``U`` to a state sends the mean to
``S mean + d`` and the covariance to ``S cov S^T``.  For ``U = U2 U1`` the
matrices compose as ``S2 @ S1``, so state order and matrix order agree.

The equivalent complex (Bogoliubov) form is ``U^dag a U = A a + B a^dag``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeConfig, ModeLayout, photon_frequencies, scalar_frequencies

SYMPLECTIC_TOL = 1e-10


class NonSymplectic(ValueError):
    """Raised when a matrix violates ``S Omega S^T = Omega`` beyond tolerance."""


def symplectic_form(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def symplectic_error(S: np.ndarray) -> float:
    n = S.shape[0] // 2
    omega = symplectic_form(n)
    return float(np.linalg.norm(S @ omega @ S.T - omega))


def bogoliubov_to_symplectic(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    return np.block(
        [
            [(A + B).real, -(A - B).imag],
            [(A + B).imag, (A - B).real],
        ]
    )


def symplectic_to_bogoliubov(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = S.shape[0] // 2
    sxx, sxp = S[:n, :n], S[:n, n:]
    spx, spp = S[n:, :n], S[n:, n:]
    A = 0.5 * ((sxx + spp) + 1j * (spx - sxp))
    B = 0.5 * ((sxx - spp) + 1j * (spx + sxp))
    return A, B


@dataclass(frozen=True, eq=False)
class SymplecticOp:
    """Gaussian unitary as a real ``2N x 2N`` symplectic matrix plus displacement."""

    matrix: np.ndarray
    displacement: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"symplectic matrix must be square with even size, got {m.shape}")
        d = np.zeros(m.shape[0]) if self.displacement is None else np.asarray(self.displacement, float)
        if d.shape != (m.shape[0],):
            raise ValueError("displacement length does not match matrix")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "displacement", d)

    @property
    def num_modes(self) -> int:
        return self.matrix.shape[0] // 2

    @classmethod
    def identity(cls, n: int) -> "SymplecticOp":
        return cls(np.eye(2 * n))

    @classmethod
    def from_bogoliubov(cls, A, B=None) -> "SymplecticOp":
        A = np.asarray(A, dtype=complex)
        B = np.zeros_like(A) if B is None else B
        return cls(bogoliubov_to_symplectic(A, B))

    @classmethod
    def from_passive(cls, U) -> "SymplecticOp":
        return cls.from_bogoliubov(U)

    def bogoliubov(self) -> tuple[np.ndarray, np.ndarray]:
        return symplectic_to_bogoliubov(self.matrix)

    def symplectic_error(self) -> float:
        return symplectic_error(self.matrix)

    def is_symplectic(self, tol: float = SYMPLECTIC_TOL) -> bool:
        return self.symplectic_error() <= tol

    def is_passive(self, tol: float = SYMPLECTIC_TOL) -> bool:
        S = self.matrix
        return float(np.linalg.norm(S.T @ S - np.eye(len(S)))) <= tol

    def inverse(self) -> "SymplecticOp":
        n = self.num_modes
        omega = symplectic_form(n)
        inv = -omega @ self.matrix.T @ omega
        return SymplecticOp(inv, -inv @ self.displacement)

    def __matmul__(self, other: "SymplecticOp") -> "SymplecticOp":
        """``self @ other`` is the operator that applies ``other`` first."""
        if self.num_modes != other.num_modes:
            raise ValueError("mode count mismatch")
        return SymplecticOp(self.matrix @ other.matrix, self.matrix @ other.displacement + self.displacement)

    def distance(self, other: "SymplecticOp") -> float:
        return float(
            np.linalg.norm(self.matrix - other.matrix) + np.linalg.norm(self.displacement - other.displacement)
        )


def embed_bogoliubov(n: int, modes, A_sub, B_sub=None) -> SymplecticOp:
    """Lift a Bogoliubov map on a subset of modes to ``n`` modes."""
    modes = np.asarray(modes, dtype=int)
    A = np.eye(n, dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    A[np.ix_(modes, modes)] = A_sub
    if B_sub is not None:
        B[np.ix_(modes, modes)] = B_sub
    return SymplecticOp.from_bogoliubov(A, B)


# -- lattice Fourier transform ------------------------------------------------


def fourier_matrix(extent: int, dim: int) -> np.ndarray:
    """Unitary ``U(k, x) = L**(-d/2) exp(-i k.x)`` on the flat site index."""
    coords = np.array(np.unravel_index(np.arange(extent**dim), (extent,) * dim)).T
    phase = coords @ coords.T * (2.0 * np.pi / extent)
    return np.exp(-1j * phase) / extent ** (dim / 2.0)


def _block_ranges(cfg: LatticeConfig, block: str) -> list[np.ndarray]:
    n = cfg.num_sites
    if block == "scalar":
        blocks = [0, 1]
    elif block == "photon":
        blocks = list(range(2, 2 + cfg.dim))
    elif block == "all":
        blocks = list(range(2 + cfg.dim))
    else:
        raise ValueError(f"unknown block {block!r}")
    return [np.arange(b * n, (b + 1) * n) for b in blocks]


def fourier_symplectic(cfg: LatticeConfig, block: str = "all") -> SymplecticOp:
    """Discrete Fourier transform on every mode block of the given field kind.

    ``block`` is ``"scalar"``, ``"photon"`` or ``"all"``.  Blocks not selected
    are left untouched.
    """
    F = fourier_matrix(cfg.extent, cfg.dim)
    A = np.eye(cfg.num_modes, dtype=complex)
    for idx in _block_ranges(cfg, block):
        A[np.ix_(idx, idx)] = F
    return SymplecticOp.from_passive(A)


# -- squeezing layer -----------------------------------------------------------


@dataclass(frozen=True)
class SqueezeEntry:
    """One down-converter of the ground-state construction.

    ``xi`` is the log-frequency; the Heisenberg squeeze parameter is ``xi/2``.
    ``mode == partner`` marks a single-mode squeezer.
    """

    kind: str
    component: int
    momentum: int
    mode: int
    partner: int
    xi: float


def squeeze_parameters(cfg: LatticeConfig) -> list[SqueezeEntry]:
    """Squeezers that turn Fourier modes into particle modes.

    Scalars: one two-mode squeezer per momentum, coupling the particle Fourier
    mode at ``k`` with the antiparticle Fourier mode at ``-k``.  Photons: one
    two-mode squeezer per unordered pair ``{k, -k}`` of each component, or a
    single-mode squeezer when ``k = -k`` mod 2*pi.
    """
    layout = ModeLayout(cfg)
    with np.errstate(divide="ignore"):
        ws = np.log(scalar_frequencies(cfg))
        wg = np.log(photon_frequencies(cfg))
    out = []
    for k in range(cfg.num_sites):
        out.append(
            SqueezeEntry(
                "scalar",
                0,
                k,
                layout.index("scalar", 0, k),
                layout.index("scalar", 1, cfg.reflect(k)),
                float(ws[k]),
            )
        )
    for comp in range(cfg.dim):
        for k in range(cfg.num_sites):
            mk = cfg.reflect(k)
            if mk < k:
                continue
            out.append(
                SqueezeEntry(
                    "photon",
                    comp,
                    k,
                    layout.index("photon", comp, k),
                    layout.index("photon", comp, mk),
                    float(wg[k]),
                )
            )
    return out


def squeeze_bogoliubov(cfg: LatticeConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` of the squeezing layer acting on Fourier-labelled slots."""
    n = cfg.num_modes
    A = np.eye(n, dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    for sq in squeeze_parameters(cfg):
        if not np.isfinite(sq.xi):
            raise ValueError("a massless scalar has a zero mode at k = 0; use m > 0")
        r = 0.5 * sq.xi
        i, j = sq.mode, sq.partner
        A[i, i] = A[j, j] = np.cosh(r)
        B[i, j] = B[j, i] = np.sinh(r)
    return A, B


def squeeze_layer(cfg: LatticeConfig) -> SymplecticOp:
    return SymplecticOp.from_bogoliubov(*squeeze_bogoliubov(cfg))


def groundstate_unitary(cfg: LatticeConfig) -> SymplecticOp:
    """The Gaussian unitary ``U`` with ``U^dag B(x) U = b(k)`` for ``k = 2 pi x / L``.

    Heisenberg order: Fourier transform first, then the down-converters.  The
    free ground state is ``U^dag |0>``, i.e. ``groundstate_unitary(cfg).inverse()``
    applied to the local vacuum.
    """
    return squeeze_layer(cfg) @ fourier_symplectic(cfg, "all")


@dataclass(frozen=True)
class ModeMapCoefficients:
    """Per-mode coefficients ``b = u * Bt(k) + v * Ct^dag(-k)`` (and photon analogues)."""

    u: np.ndarray
    v: np.ndarray
    partner: np.ndarray
    frequency: np.ndarray


def mode_map_coefficients(cfg: LatticeConfig) -> ModeMapCoefficients:
    layout = ModeLayout(cfg)
    w = layout.frequencies
    partner = np.arange(cfg.num_modes)
    for sq in squeeze_parameters(cfg):
        partner[sq.mode] = sq.partner
        partner[sq.partner] = sq.mode
    sw = np.sqrt(w)
    return ModeMapCoefficients(u=0.5 * (sw + 1 / sw), v=0.5 * (sw - 1 / sw), partner=partner, frequency=w)


# -- linear forms in ladder operators -----------------------------------------


@dataclass(frozen=True, eq=False)
class LadderForm:
    """Linear operator ``sum_j u_j a_j + v_j a_j^dag`` over the modes of a frame."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "LadderForm":
        return cls(np.zeros(n, complex), np.zeros(n, complex))

    def dagger(self) -> "LadderForm":
        return LadderForm(self.v.conj(), self.u.conj())

    def __add__(self, other: "LadderForm") -> "LadderForm":
        return LadderForm(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "LadderForm") -> "LadderForm":
        return LadderForm(self.u - other.u, self.v - other.v)

    def __mul__(self, c) -> "LadderForm":
        return LadderForm(c * self.u, c * self.v)

    __rmul__ = __mul__

    def to_frame(self, frame: SymplecticOp) -> "LadderForm":
        """Re-express in the modes ``beta = U^dag a U`` of a Gaussian frame."""
        Ai, Bi = frame.inverse().bogoliubov()
        return LadderForm(self.u @ Ai + self.v @ Bi.conj(), self.u @ Bi + self.v @ Ai.conj())

    def commutator(self, other: "LadderForm") -> complex:
        """The c-number ``[self, other]``."""
        return complex(np.dot(self.u, other.v) - np.dot(self.v, other.u))

    def support(self, tol: float = 1e-14) -> np.ndarray:
        return np.flatnonzero((np.abs(self.u) > tol) | (np.abs(self.v) > tol))


def _unit(n: int, j: int, c: complex) -> np.ndarray:
    e = np.zeros(n, complex)
    e[j] = c
    return e


def local_fields(cfg: LatticeConfig) -> dict[str, list]:
    """Field operators at every site as ladder forms of the local qumodes.

    Returns a dict with keys ``phi``, ``pi`` (complex scalar and its momentum),
    ``phi1``, ``phi2``, ``pi1``, ``pi2`` (real components) each a list over
    sites, and ``A``, ``E`` (gauge field and its conjugate momentum) as lists
    over components of lists over sites.
    """
    layout = ModeLayout(cfg)
    n = cfg.num_modes
    s2 = np.sqrt(0.5)
    out = {key: [] for key in ("phi", "pi", "phi1", "phi2", "pi1", "pi2")}
    for x in range(cfg.num_sites):
        jb = layout.index("scalar", 0, x)
        jc = layout.index("scalar", 1, x)
        phi = LadderForm(_unit(n, jb, s2), _unit(n, jc, s2))
        pi = LadderForm(_unit(n, jc, -1j * s2), _unit(n, jb, 1j * s2))
        out["phi"].append(phi)
        out["pi"].append(pi)
        out["phi1"].append((phi + phi.dagger()) * s2)
        out["phi2"].append((phi - phi.dagger()) * (-1j * s2))
        # pi = (pi1 - i pi2)/sqrt2
        out["pi1"].append((pi + pi.dagger()) * s2)
        out["pi2"].append((pi.dagger() - pi) * (-1j * s2))
    out["A"] = []
    out["E"] = []
    for comp in range(cfg.dim):
        a_list, e_list = [], []
        for x in range(cfg.num_sites):
            j = layout.index("photon", comp, x)
            a_list.append(LadderForm(_unit(n, j, s2), _unit(n, j, s2)))
            e_list.append(LadderForm(_unit(n, j, -1j * s2), _unit(n, j, 1j * s2)))
        out["A"].append(a_list)
        out["E"].append(e_list)
    return out
