"""Gaussian states on mean vector and covariance matrix.

Covariance convention: ``cov_ab = <{r_a - m_a, r_b - m_b}>/2``, so the vacuum is
``identity/2``.  Every quadratic stage of the algorithm (ground-state
preparation, free evolution, counterterm kicks, uncompute) is exact here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .lattice import LatticeConfig, ModeLayout
from .modes import LadderForm, SymplecticOp, groundstate_unitary, local_fields, symplectic_form

UNCERTAINTY_TOL = 1e-9


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"mean {mean.shape} and covariance {cov.shape} do not match")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def num_modes(self) -> int:
        return self.mean.size // 2

    def is_physical(self, tol: float = UNCERTAINTY_TOL) -> bool:
        """Symmetric covariance obeying ``cov + (i/2) Omega >= 0``."""
        if np.abs(self.cov - self.cov.T).max(initial=0.0) > tol:
            return False
        herm = self.cov + 0.5j * symplectic_form(self.num_modes)
        return bool(np.linalg.eigvalsh(herm).min() >= -tol)

    def symplectic_eigenvalues(self) -> np.ndarray:
        vals = np.linalg.eigvals(1j * symplectic_form(self.num_modes) @ self.cov)
        return np.sort(np.abs(vals.real))[::2]

    def second_moments(self) -> np.ndarray:
        """Complex matrix ``<r_a r_b>`` (not symmetrised)."""
        return self.cov + 0.5j * symplectic_form(self.num_modes) + np.outer(self.mean, self.mean)


def vacuum(num_modes: int) -> GaussianState:
    if num_modes < 1:
        raise ValueError("need at least one mode")
    return GaussianState(np.zeros(2 * num_modes), 0.5 * np.eye(2 * num_modes))


def apply(state: GaussianState, op: SymplecticOp, check: bool = False) -> GaussianState:
    """State after the Gaussian unitary ``op``."""
    if op.num_modes != state.num_modes:
        raise DimensionMismatch(f"operator acts on {op.num_modes} modes, state has {state.num_modes}")
    S = op.matrix
    out = GaussianState(S @ state.mean + op.displacement, S @ state.cov @ S.T)
    if check and not out.is_physical():
        raise ValueError("uncertainty relation violated after apply")
    return out


def displace(state: GaussianState, mode: int, alpha: complex) -> GaussianState:
    """Coherent displacement ``a_mode -> a_mode + alpha``."""
    n = state.num_modes
    d = np.zeros(2 * n)
    d[mode] = np.sqrt(2.0) * np.real(alpha)
    d[n + mode] = np.sqrt(2.0) * np.imag(alpha)
    return GaussianState(state.mean + d, state.cov)


def number_mean(state: GaussianState, mode: int) -> float:
    """Normal-ordered occupation ``<a^dag a>`` of one mode."""
    n = state.num_modes
    if not 0 <= mode < n:
        raise IndexError(f"mode {mode} out of range")
    x, p = mode, n + mode
    second = state.cov[x, x] + state.cov[p, p] + state.mean[x] ** 2 + state.mean[p] ** 2
    return float(0.5 * second - 0.5)


def number_means(state: GaussianState, frame: SymplecticOp | None = None) -> np.ndarray:
    """Occupations of every mode, optionally of the modes ``U^dag a U`` of a frame."""
    if frame is not None:
        state = apply(state, frame)
    n = state.num_modes
    diag = np.diag(state.cov)
    return 0.5 * (diag[:n] + diag[n:] + state.mean[:n] ** 2 + state.mean[n:] ** 2) - 0.5


# -- quadratic generators -------------------------------------------------------


def ladder_to_quadrature(form: LadderForm) -> np.ndarray:
    """Coefficients ``c`` with ``form = c . r``."""
    s = np.sqrt(0.5)
    return np.concatenate([s * (form.u + form.v), 1j * s * (form.u - form.v)])


def quadratic_evolution(hmat: np.ndarray, t: float, sign: int = -1) -> SymplecticOp:
    """``exp(sign * i * t * H)`` for ``H = r^T hmat r / 2``."""
    n = hmat.shape[0] // 2
    return SymplecticOp(expm(-sign * t * symplectic_form(n) @ hmat))


def free_hamiltonian_matrix(cfg: LatticeConfig) -> np.ndarray:
    """Quadratic form of the free Hamiltonian in local quadratures.

    Normal-ordering constants are dropped; they do not enter symplectic maps.
    """
    S = groundstate_unitary(cfg).matrix
    w = ModeLayout(cfg).frequencies
    return S.T @ np.diag(np.concatenate([w, w])) @ S


def counterterm_matrix(cfg: LatticeConfig, delta_m: float) -> np.ndarray:
    """Quadratic form of ``(delta_m/2) sum_x phi^dag phi``."""
    fields = local_fields(cfg)
    h = np.zeros((2 * cfg.num_modes, 2 * cfg.num_modes))
    for phi1, phi2 in zip(fields["phi1"], fields["phi2"]):
        c1 = ladder_to_quadrature(phi1).real
        c2 = ladder_to_quadrature(phi2).real
        h += np.outer(c1, c1) + np.outer(c2, c2)
    # phi^dag phi = (phi1^2 + phi2^2)/2 and H = r^T h r / 2
    return 0.5 * delta_m * h


def free_evolution(cfg: LatticeConfig, t: float, sign: int = -1) -> SymplecticOp:
    """``exp(sign * i * t * H0)`` as a symplectic map on local modes.

    Built as ``U^-1 . R(t) . U`` with ``R`` rotating every particle mode by its
    frequency, so the ground state is an exact fixed point.
    """
    U = groundstate_unitary(cfg)
    w = ModeLayout(cfg).frequencies
    theta = -sign * w * t
    c, s = np.cos(theta), np.sin(theta)
    R = np.block([[np.diag(c), np.diag(s)], [np.diag(-s), np.diag(c)]])
    return U.inverse() @ SymplecticOp(R) @ U


def counterterm_evolution(cfg: LatticeConfig, delta_m: float, dt: float, sign: int = -1) -> SymplecticOp:
    return quadratic_evolution(counterterm_matrix(cfg, delta_m), dt, sign)


def groundstate(cfg: LatticeConfig) -> GaussianState:
    return apply(vacuum(cfg.num_modes), groundstate_unitary(cfg).inverse())


# -- Wick moments ---------------------------------------------------------------


def expectation(state: GaussianState, forms: list[LadderForm]) -> complex:
    """``<L_1 L_2 ... L_k>`` for linear forms in the ladder operators.

    Evaluated by Wick's theorem about the mean.
    """
    vecs = [ladder_to_quadrature(f) for f in forms]
    means = [complex(v @ state.mean) for v in vecs]
    corr = state.cov + 0.5j * symplectic_form(state.num_modes)
    k = len(vecs)
    total = 0j
    for size in range(0, k + 1, 2):
        for subset in itertools.combinations(range(k), size):
            rest = [i for i in range(k) if i not in subset]
            term = np.prod([means[i] for i in rest]) if rest else 1.0
            if term == 0:
                continue
            total += term * _pairings(list(subset), vecs, corr)
    return complex(total)


def _pairings(idx: list[int], vecs, corr) -> complex:
    if not idx:
        return 1.0
    first, rest = idx[0], idx[1:]
    total = 0j
    for j, other in enumerate(rest):
        pair = vecs[first] @ corr @ vecs[other]
        if pair != 0:
            total += pair * _pairings(rest[:j] + rest[j + 1 :], vecs, corr)
    return total


# -- snapshot text format -------------------------------------------------------


def to_text(state: GaussianState) -> str:
    """``modes N`` header, one line of means, then ``2N`` covariance rows."""
    lines = [f"modes {state.num_modes}", " ".join(repr(float(v)) for v in state.mean)]
    lines += [" ".join(repr(float(v)) for v in row) for row in state.cov]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> GaussianState:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    tag, n = lines[0].split()
    if tag != "modes":
        raise ValueError("snapshot must start with 'modes N'")
    n = int(n)
    mean = np.array([float(v) for v in lines[1].split()])
    cov = np.array([[float(v) for v in ln.split()] for ln in lines[2 : 2 + 2 * n]])
    if mean.size != 2 * n or cov.shape != (2 * n, 2 * n):
        raise DimensionMismatch("snapshot size does not match header")
    return GaussianState(mean, cov)


def save(state: GaussianState, path) -> None:
    Path(path).write_text(to_text(state))


def load(path) -> GaussianState:
    return from_text(Path(path).read_text())
