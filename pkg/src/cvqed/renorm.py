"""One-loop lattice integrals for the mass counterterm and vacuum polarisation.

Every Minkowski energy integral is done analytically first (residues, or a
Feynman parameter followed by a Euclidean rotation), leaving smooth integrals
over the Brillouin zone ``[-pi, pi]^3`` normalised by ``(2 pi)^3``.  Those are
evaluated by adaptive cubature on the positive octant, folding the other
octants in by reflection, so the integrable singularity at ``l = 0`` sits at a
corner of the domain.

Real conventions: self-energies are reported as mass-squared shifts, so the
counterterm is ``delta_m = Sigma1 + Sigma2`` with both terms real, and the
polarisation tadpole is reported as the coefficient of ``e^2 zeta1.zeta2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cubature
from scipy.stats import qmc

DIM = 3
VOLUME = (2.0 * np.pi) ** DIM
LOG_COEFFICIENT = 1.0 / (48.0 * np.pi**2)
REFERENCE = {"delta_m": -1.36, "pi0": 0.455, "pi1_intercept": 0.003}


class QuadratureNotConverged(RuntimeError):
    pass


class ExpansionUnstable(RuntimeError):
    pass


class PoleProximity(ValueError):
    pass


@dataclass(frozen=True)
class LoopIntegralResult:
    value: float
    abs_error_estimate: float
    evaluations: int
    parameters: dict = field(default_factory=dict)


# -- kernels -------------------------------------------------------------------------


def omega_sq(l: np.ndarray, mass: float) -> np.ndarray:
    """Lattice ``m^2 + 4 sum sin^2(l_i/2)`` along the last axis."""
    return mass**2 + 4.0 * np.sum(np.sin(0.5 * l) ** 2, axis=-1)


def vertex_weight(lx: np.ndarray, vertex: str) -> np.ndarray:
    """Squared photon-scalar vertex along the polarisation axis."""
    if vertex == "continuum":
        return lx**2
    if vertex == "sin":
        return np.sin(lx) ** 2
    if vertex == "hat":
        return 4.0 * np.sin(0.5 * lx) ** 2
    raise ValueError(f"unknown vertex {vertex!r}")


# -- adaptive cubature -----------------------------------------------------------------


def zone_integral(
    f,
    atol: float = 1e-4,
    rtol: float = 0.0,
    odd_axes=(),
    max_subdivisions: int = 50_000,
    rule: str = "genz-malik",
    label: str = "",
) -> LoopIntegralResult:
    """``int_{[-pi,pi]^3} d^3l/(2pi)^3 f(l)``.

    ``f`` maps an ``(n, 3)`` array of momenta to ``n`` values.  Axes listed in
    ``odd_axes`` are those along which ``f`` is not assumed even; the integrand
    is folded explicitly along them and by a factor two along the rest.
    """
    signs = np.array(list(itertools.product(*[(1.0, -1.0) if ax in odd_axes else (1.0,) for ax in range(DIM)])))
    even_factor = 2.0 ** (DIM - len(odd_axes))
    scale = even_factor / VOLUME
    count = [0]

    def folded(l):
        count[0] += l.shape[0] * len(signs)
        out = f(l * signs[0])
        for s in signs[1:]:
            out = out + f(l * s)
        return out

    res = cubature(
        folded,
        np.zeros(DIM),
        np.full(DIM, np.pi),
        rule=rule,
        atol=atol / scale,
        rtol=rtol,
        max_subdivisions=max_subdivisions,
    )
    value = float(res.estimate) * scale
    error = float(res.error) * scale
    if res.status != "converged":
        raise QuadratureNotConverged(
            f"{label or 'integral'}: error {error:.2e} above target {atol:.1e} after {count[0]} evaluations"
        )
    return LoopIntegralResult(value, error, count[0], {"atol": atol, "rule": rule})


# -- Monte Carlo cross-check ---------------------------------------------------------------


def monte_carlo_integral(
    f,
    samples: int = 2**15,
    replicates: int = 8,
    seed: int = 0,
    radius: float = 0.5,
    r_min: float = 1e-9,
) -> LoopIntegralResult:
    """Scrambled-Sobol estimate of the same integral as :func:`zone_integral`.

    The zone is split into a ball of ``radius`` about the origin, sampled in
    spherical coordinates with logarithmic radial spacing (which tames the
    ``l = 0`` singularity), and its complement, sampled uniformly by rejection.
    The error is the standard error over independently scrambled replicates.
    """
    estimates = []
    for rep in range(replicates):
        rng = np.random.default_rng([seed, rep])
        # ball part
        u = qmc.Sobol(DIM, scramble=True, seed=rng).random(samples)
        log_span = math.log(radius / r_min)
        r = r_min * np.exp(u[:, 0] * log_span)
        cos_t = 2.0 * u[:, 1] - 1.0
        sin_t = np.sqrt(1.0 - cos_t**2)
        ph = 2.0 * np.pi * u[:, 2]
        pts = np.stack([r * sin_t * np.cos(ph), r * sin_t * np.sin(ph), r * cos_t], axis=1)
        # d^3l = r^3 dlog(r) dcos dphi
        jac = r**3 * log_span * 4.0 * np.pi
        ball = float(np.mean(f(pts) * jac))
        # complement part
        v = qmc.Sobol(DIM, scramble=True, seed=rng).random(samples)
        pts = np.pi * (2.0 * v - 1.0)
        outside = np.sum(pts**2, axis=1) > radius**2
        vals = np.where(outside, f(np.where(outside[:, None], pts, np.pi)), 0.0)
        rest = float(np.mean(vals)) * VOLUME
        estimates.append((ball + rest) / VOLUME)
    est = np.array(estimates)
    return LoopIntegralResult(
        float(est.mean()),
        float(est.std(ddof=1) / np.sqrt(replicates)),
        2 * samples * replicates,
        {"samples": samples, "replicates": replicates, "seed": seed},
    )


# -- mass counterterm and tadpoles ------------------------------------------------------------


def inverse_frequency_integral(mass: float, atol: float = 1e-5) -> LoopIntegralResult:
    """``int d^3l/(2pi)^3 1/omega(l)``."""
    res = zone_integral(lambda l: 1.0 / np.sqrt(omega_sq(l, mass)), atol=atol, label="1/omega")
    return LoopIntegralResult(res.value, res.abs_error_estimate, res.evaluations, {"mass": mass})


def delta_m(e: float, m: float = 0.0, photon_mass: float = 0.0, atol: float = 1e-4) -> LoopIntegralResult:
    """Leading mass counterterm ``delta_m = -3 e^2 int d^3l/(2pi)^3 1/omega_photon(l)``.

    The energy integral of the photon tadpole-like reduction is done by residues,
    leaving ``1/(2 omega)`` per propagator.  The leading term does not depend on
    the scalar mass ``m``; it is recorded for bookkeeping.
    """
    if e == 0:
        return LoopIntegralResult(0.0, 0.0, 0, {"e": e, "m": m, "photon_mass": photon_mass})
    base = inverse_frequency_integral(photon_mass, atol=atol / (3 * e * e))
    return LoopIntegralResult(
        -3.0 * e * e * base.value,
        3.0 * e * e * base.abs_error_estimate,
        base.evaluations,
        {"e": e, "m": m, "photon_mass": photon_mass},
    )


def pi2(m: float, atol: float = 1e-5) -> LoopIntegralResult:
    """Tadpole polarisation coefficient ``Pi2 / (e^2 zeta1.zeta2) = -int 1/omega``.

    Its magnitude is the constant ``Pi0``.
    """
    base = inverse_frequency_integral(m, atol=atol)
    return LoopIntegralResult(-base.value, base.abs_error_estimate, base.evaluations, {"m": m})


# -- two-propagator polarisation -----------------------------------------------------------------


@dataclass(frozen=True)
class PolarizationExpansion:
    """Small-momentum coefficients of the two-propagator polarisation.

    ``value`` is the integral at the requested kinematics; ``pi0``, ``pi1`` and
    ``pi2`` are the constant, ``k0^2`` and ``|k|^2`` coefficients.
    """

    value: LoopIntegralResult
    pi0: LoopIntegralResult
    pi1: LoopIntegralResult
    pi2: LoopIntegralResult
    variant: str
    vertex: str
    log_divergent: bool
    matches_reference_pi0: bool


def _variant(literal: bool):
    """``(power, prefactor, denominator_shift)`` of the Feynman-parameter integrand."""
    return (-0.5, 2.0) if literal else (-1.5, 1.0)


def _weight(l, vertex, literal):
    if literal:
        return np.sum(l**2, axis=-1)
    return vertex_weight(l[:, 0], vertex)


def _denominator(l, x, k0, kz, m, literal):
    """Feynman-parameter denominator, shape ``(n, len(x))``; ``k`` points along axis 2."""
    shifted = l.copy()
    shifted[:, 2] += kz
    w1, w2 = omega_sq(l, m), omega_sq(shifted, m)
    if literal:
        w1, w2 = np.sqrt(w1), np.sqrt(w2)
    return x * w1[:, None] + (1.0 - x) * w2[:, None] - x * (1.0 - x) * k0**2


def _x_nodes(n: int):
    t, w = leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def polarization_value(
    k0: float,
    kvec,
    m: float,
    literal: bool = False,
    vertex: str = "continuum",
    atol: float = 1e-5,
    x_nodes: int = 16,
) -> LoopIntegralResult:
    """``Pi1 / (e^2 zeta1.zeta2)`` at the given kinematics (polarisation along axis 0).

    ``kvec`` must be orthogonal to the polarisation and is taken along axis 2.
    """
    kvec = np.asarray(kvec, dtype=float)
    if kvec.shape != (DIM,) or kvec[0] != 0 or kvec[1] != 0:
        raise ValueError("external momentum must lie along the third axis")
    kz = float(kvec[2])
    power, pref = _variant(literal)
    x, wx = _x_nodes(x_nodes)

    def f(l):
        den = _denominator(l, x, k0, kz, m, literal)
        return pref * _weight(l, vertex, literal) * (np.maximum(den, 1e-300) ** power @ wx)

    res = zone_integral(f, atol=atol, odd_axes=(2,) if kz else (), label="polarisation")
    params = {"k0": k0, "kz": kz, "m": m, "literal": literal, "vertex": vertex}
    return LoopIntegralResult(res.value, res.abs_error_estimate, res.evaluations, params)


def _difference_quotient(kind: str, h: float, m: float, literal: bool, vertex: str, atol: float, x_nodes: int):
    """``(V(h) - V(0)) / h^2`` along ``k0`` or ``|k|`` without catastrophic cancellation."""
    power, pref = _variant(literal)
    x, wx = _x_nodes(x_nodes)

    def f(l):
        w1 = omega_sq(l, m)
        if kind == "k0":
            base = np.sqrt(w1) if literal else w1
            base = np.broadcast_to(base[:, None], (l.shape[0], x.size))
            delta = np.broadcast_to(-x * (1.0 - x) * h * h, base.shape)
        else:
            # omega^2(l + h e_z) - omega^2(l) = 4 sin(h/2) sin(l_z + h/2)
            dw2 = 4.0 * np.sin(0.5 * h) * np.sin(l[:, 2] + 0.5 * h)
            if literal:
                w2 = w1 + dw2
                root = np.sqrt(w1)
                base = np.broadcast_to(root[:, None], (l.shape[0], x.size))
                delta = (1.0 - x) * (dw2 / (np.sqrt(w2) + root))[:, None]
            else:
                base = np.broadcast_to(w1[:, None], (l.shape[0], x.size))
                delta = (1.0 - x) * dw2[:, None]
        ratio = delta / base
        diff = base**power * np.expm1(power * np.log1p(ratio))
        return pref * _weight(l, vertex, literal) * (diff @ wx) / (h * h)

    return zone_integral(
        f, atol=atol, odd_axes=(2,) if kind == "k" else (), label=f"difference quotient in {kind}"
    )


def _richardson(kind, h, m, literal, vertex, atol, x_nodes, label) -> LoopIntegralResult:
    coarse = _difference_quotient(kind, h, m, literal, vertex, atol, x_nodes)
    fine = _difference_quotient(kind, 0.5 * h, m, literal, vertex, atol, x_nodes)
    value = (4.0 * fine.value - coarse.value) / 3.0
    quad_err = (4.0 * fine.abs_error_estimate + coarse.abs_error_estimate) / 3.0
    trunc_err = abs(fine.value - coarse.value) / 3.0
    if quad_err > 0.1 * abs(fine.value):
        raise ExpansionUnstable(f"{label}: quadrature noise {quad_err:.2e} swamps difference {fine.value:.2e}")
    params = {"m": m, "h": h, "literal": literal, "vertex": vertex, "richardson_correction": trunc_err}
    return LoopIntegralResult(value, quad_err + trunc_err, coarse.evaluations + fine.evaluations, params)


def pi1(
    k0: float,
    kvec,
    m: float,
    literal: bool = False,
    vertex: str = "continuum",
    atol: float = 1e-6,
    step: float | None = None,
    x_nodes: int = 8,
) -> PolarizationExpansion:
    """Two-propagator polarisation and its small-momentum expansion.

    ``Pi1`` and ``Pi2`` come from Richardson-extrapolated difference quotients
    in ``k0^2`` and ``|k|^2`` with step ``h = step`` (default ``m/10``, well
    inside the two-particle threshold).  ``literal=True`` selects the
    square-root-of-frequencies denominator with the full ``|l|^2`` numerator,
    otherwise the squared-frequency denominator with exponent ``-3/2`` and the
    polarisation-projected vertex ``vertex``.
    """
    if m <= 0:
        raise ValueError("the momentum expansion needs m > 0")
    h = 0.1 * m if step is None else step
    value = polarization_value(k0, kvec, m, literal, vertex, atol=10 * atol)
    base = polarization_value(0.0, np.zeros(DIM), m, literal, vertex, atol=10 * atol)
    c1 = _richardson("k0", h, m, literal, vertex, atol, x_nodes, "Pi1")
    c2 = _richardson("k", h, m, literal, vertex, atol, x_nodes, "Pi2")
    return PolarizationExpansion(
        value=value,
        pi0=base,
        pi1=c1,
        pi2=c2,
        variant="literal" if literal else "squared",
        vertex="full" if literal else vertex,
        log_divergent=not literal,
        matches_reference_pi0=abs(base.value - REFERENCE["pi0"]) <= 0.003,
    )


def taylor_coefficients(m: float, vertex: str = "continuum", atol: float = 1e-6) -> tuple[LoopIntegralResult, ...]:
    """Closed-form ``k0^2`` and ``|k|^2`` kernels of the squared-frequency variant.

    ``Pi1 = (1/4) int v/omega^5`` and
    ``Pi2 = int v (-(3/4) cos l_z / omega^5 + (5/2) sin^2 l_z / omega^7)``.
    """

    def k0_kernel(l):
        return 0.25 * vertex_weight(l[:, 0], vertex) / omega_sq(l, m) ** 2.5

    def k_kernel(l):
        w2 = omega_sq(l, m)
        lz = l[:, 2]
        return vertex_weight(l[:, 0], vertex) * (-0.75 * np.cos(lz) / w2**2.5 + 2.5 * np.sin(lz) ** 2 / w2**3.5)

    return zone_integral(k0_kernel, atol=atol, label="Pi1 kernel"), zone_integral(k_kernel, atol=atol, label="Pi2 kernel")


@dataclass(frozen=True)
class LogFit:
    slope: float
    intercept: float
    masses: tuple
    values: tuple
    errors: tuple


def log_fit(masses, results) -> LogFit:
    """Least-squares line of the coefficient against ``log(1/m^2)``."""
    masses = np.asarray(masses, dtype=float)
    y = np.array([r.value for r in results])
    slope, intercept = np.polyfit(np.log(1.0 / masses**2), y, 1)
    return LogFit(float(slope), float(intercept), tuple(masses), tuple(y), tuple(r.abs_error_estimate for r in results))


def delta_e(e: float, m: float, source: str = "numeric", expansion: PolarizationExpansion | None = None) -> float:
    """Charge shift ``e0^2 - e^2 = Pi1(m) e^4``.

    ``source="numeric"`` uses the computed ``k0^2`` coefficient, ``"closed_form"``
    the asymptotic ``log(1/m^2)/(48 pi^2) + 0.003``.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    if e == 0:
        return 0.0
    if source == "closed_form":
        coeff = LOG_COEFFICIENT * math.log(1.0 / m**2) + REFERENCE["pi1_intercept"]
    elif source == "numeric":
        coeff = (expansion or pi1(0.0, np.zeros(DIM), m)).pi1.value
    else:
        raise ValueError(f"unknown source {source!r}")
    return coeff * e**4


# -- scalar self-energy ---------------------------------------------------------------------------


def _threshold(kvec: np.ndarray, m: float, photon_mass: float, grid: int = 48) -> float:
    """Smallest ``omega_photon(l) + omega_scalar(l + k)`` over a grid plus the point ``l = 0``."""
    axis = np.linspace(-np.pi, np.pi, grid, endpoint=False)
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, DIM)
    pts = np.vstack([pts, np.zeros(DIM), -kvec])
    total = np.sqrt(omega_sq(pts, photon_mass)) + np.sqrt(omega_sq(pts + kvec, m))
    return float(total.min())


def sigma_phi(
    k0: float,
    kvec,
    m: float,
    e: float,
    photon_mass: float = 0.0,
    atol: float = 1e-4,
    pole_tol: float = 1e-3,
) -> tuple[LoopIntegralResult, LoopIntegralResult]:
    """Exchange and seagull self-energies ``(Sigma1, Sigma2)`` as mass-squared shifts.

    After the energy integral by residues, the exchange term is
    ``-2 e^2 int R`` with ``a = omega_photon(l)``, ``b = omega_scalar(l + k)``,
    ``P^2 = 4 sum sin^2((l + 2k)_i/2)`` and
    ``R = [-(P^2 + a b)(a + b) + k0^2 (a + 4 b)] / (2 a b ((a + b)^2 - k0^2))``.
    The seagull term is ``-4 e^2 int 1/omega_photon``.

    Kinematics at or above the two-particle threshold put a pole on the
    integration contour; no principal value is attempted and
    :class:`PoleProximity` is raised instead.
    """
    kvec = np.asarray(kvec, dtype=float)
    if k0 != 0 and abs(k0) >= _threshold(kvec, m, photon_mass) - pole_tol:
        raise PoleProximity(f"k0 = {k0} reaches the two-particle threshold")
    scale = e * e
    if scale == 0:
        zero = LoopIntegralResult(0.0, 0.0, 0, {"e": e})
        return zero, zero

    def exchange(l):
        a = np.sqrt(omega_sq(l, photon_mass))
        b = np.sqrt(omega_sq(l + kvec, m))
        p2 = omega_sq(l + 2.0 * kvec, 0.0)
        num = -(p2 + a * b) * (a + b) + k0 * k0 * (a + 4.0 * b)
        den = 2.0 * a * b * ((a + b) ** 2 - k0 * k0)
        return -2.0 * num / np.where(den == 0, np.inf, den)

    odd = tuple(ax for ax in range(DIM) if kvec[ax] != 0)
    s1 = zone_integral(exchange, atol=atol / scale, odd_axes=odd, label="Sigma1")
    s2 = zone_integral(
        lambda l: -4.0 / np.sqrt(omega_sq(l, photon_mass)), atol=atol / scale, label="Sigma2"
    )
    params = {"k0": k0, "k": kvec.tolist(), "m": m, "e": e, "photon_mass": photon_mass}
    return (
        LoopIntegralResult(scale * s1.value, scale * s1.abs_error_estimate, s1.evaluations, params),
        LoopIntegralResult(scale * s2.value, scale * s2.abs_error_estimate, s2.evaluations, params),
    )
