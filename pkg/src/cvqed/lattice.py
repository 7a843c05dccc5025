"""Lattice geometry, momentum grid, dispersion and qumode indexing.

The lattice is a periodic hypercube of ``extent**dim`` sites with unit spacing.
Momenta live on the dual grid ``k_i = 2*pi*n_i/L`` with ``n_i`` in ``[0, L)``.

Qumodes are ordered in ``(2 + dim)`` contiguous blocks of ``L**dim`` modes each::

    block 0            particle-type scalar modes   (B(x) / b(k))
    block 1            antiparticle scalar modes    (C(x) / c(k))
    block 2 .. 2+d-1   photon component i           (A_i(x) / a_i(k))

Inside a block the site (or momentum) index is row-major in the coordinates,
with the first axis slowest.  The same flat index addresses the position-space
mode at site ``x`` and, after the ground-state transform, the particle mode at
momentum ``k = 2*pi*x/L``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SCALAR = "scalar"
PHOTON = "photon"


@dataclass(frozen=True)
class LatticeConfig:
    """Periodic cubic lattice with a complex scalar of mass ``scalar_mass``.

    The photon mass is not a free parameter: it is pinned to ``1/extent``.
    """

    dim: int
    extent: int
    scalar_mass: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.extent) != self.extent or self.extent < 2:
            raise ValueError(f"extent must be an integer >= 2, got {self.extent}")
        if self.scalar_mass < 0:
            raise ValueError("scalar_mass must be non-negative")

    @property
    def photon_mass(self) -> float:
        return 1.0 / self.extent

    @property
    def num_sites(self) -> int:
        return self.extent**self.dim

    @property
    def num_scalar_modes(self) -> int:
        return 2 * self.num_sites

    @property
    def num_photon_modes(self) -> int:
        return self.dim * self.num_sites

    @property
    def num_modes(self) -> int:
        return (2 + self.dim) * self.num_sites

    def sites(self) -> np.ndarray:
        """All site coordinates, shape ``(L**d, d)``, in flat-index order."""
        return np.array(list(itertools.product(range(self.extent), repeat=self.dim)), dtype=int)

    def momenta(self) -> np.ndarray:
        """Physical momenta ``2*pi*n/L`` for every dual-lattice point, shape ``(L**d, d)``."""
        return 2.0 * np.pi * self.sites() / self.extent

    def site_index(self, coords) -> int:
        coords = np.mod(np.asarray(coords, dtype=int), self.extent)
        if coords.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got {coords.shape}")
        return int(np.ravel_multi_index(tuple(coords), (self.extent,) * self.dim))

    def site_coords(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, (self.extent,) * self.dim))

    def shift(self, index: int, axis: int, step: int = 1) -> int:
        """Flat index of the periodic neighbour ``x + step * e_axis``."""
        coords = np.array(self.site_coords(index))
        coords[axis] += step
        return self.site_index(coords)

    def reflect(self, index: int) -> int:
        """Flat index of the momentum ``-k`` (mod 2*pi)."""
        return self.site_index(-np.array(self.site_coords(index)))


def dispersion(cfg: LatticeConfig, k, mass: float) -> float | np.ndarray:
    """Lattice frequency ``sqrt(mass**2 + 4 * sum_i sin(k_i/2)**2)``.

    ``k`` may be a single momentum of length ``cfg.dim`` or an array whose last
    axis has length ``cfg.dim``.
    """
    if mass < 0:
        raise ValueError("mass must be non-negative")
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != cfg.dim:
        raise ValueError(f"momentum must have {cfg.dim} components")
    w = np.sqrt(mass**2 + 4.0 * np.sum(np.sin(k / 2.0) ** 2, axis=-1))
    return float(w) if w.ndim == 0 else w


def scalar_frequencies(cfg: LatticeConfig) -> np.ndarray:
    return dispersion(cfg, cfg.momenta(), cfg.scalar_mass)


def photon_frequencies(cfg: LatticeConfig) -> np.ndarray:
    return dispersion(cfg, cfg.momenta(), cfg.photon_mass)


@dataclass(frozen=True)
class ModeLayout:
    """Bijection between ``(kind, component, site)`` and a flat qumode index.

    ``kind`` is ``"scalar"`` (component 0 = particle, 1 = antiparticle) or
    ``"photon"`` (component = spatial direction).
    """

    cfg: LatticeConfig

    @property
    def num_modes(self) -> int:
        return self.cfg.num_modes

    def index(self, kind: str, component: int, site: int) -> int:
        n = self.cfg.num_sites
        if not 0 <= site < n:
            raise IndexError(f"site {site} out of range")
        if kind == SCALAR:
            if component not in (0, 1):
                raise IndexError("scalar component must be 0 or 1")
            return component * n + site
        if kind == PHOTON:
            if not 0 <= component < self.cfg.dim:
                raise IndexError(f"photon component must be in [0, {self.cfg.dim})")
            return (2 + component) * n + site
        raise ValueError(f"unknown field kind {kind!r}")

    def label(self, index: int) -> tuple[str, int, int]:
        n = self.cfg.num_sites
        if not 0 <= index < self.num_modes:
            raise IndexError(f"mode {index} out of range")
        block, site = divmod(index, n)
        if block < 2:
            return (SCALAR, block, site)
        return (PHOTON, block - 2, site)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Particle-mode frequency for every flat index."""
        ws = scalar_frequencies(self.cfg)
        wg = photon_frequencies(self.cfg)
        return np.concatenate([ws, ws] + [wg] * self.cfg.dim)

    def scalar_modes(self) -> np.ndarray:
        return np.arange(self.cfg.num_scalar_modes)

    def photon_modes(self) -> np.ndarray:
        return np.arange(self.cfg.num_scalar_modes, self.num_modes)

    def particle_modes(self) -> np.ndarray:
        return np.arange(self.cfg.num_sites)

    def antiparticle_modes(self) -> np.ndarray:
        n = self.cfg.num_sites
        return np.arange(n, 2 * n)

    def classify(self, index: int) -> str:
        kind, comp, _ = self.label(index)
        if kind == PHOTON:
            return "photon"
        return "particle" if comp == 0 else "antiparticle"


def mode_layout(cfg: LatticeConfig) -> ModeLayout:
    return ModeLayout(cfg)
