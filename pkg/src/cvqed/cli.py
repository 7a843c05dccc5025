"""Command-line entry point.

Subcommands: ``renorm``, ``groundstate``, ``scatter``, ``validate`` and
``dispersion``.  Each reads an optional YAML config (``--config``), applies flag
overrides and writes a JSON envelope carrying the version, a hash of the
resolved config and the seed.

Exit codes: 0 success, 2 a check or invariant failed, 3 an oracle or quadrature
budget was exceeded, 4 the configuration is invalid.

Set ``CVQED_THREADS`` to bound the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import os

_threads = os.environ.get("CVQED_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
import warnings  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import yaml  # noqa: E402
from pydantic import ValidationError  # noqa: E402

from . import __version__  # noqa: E402
from . import circuit, fock, gaussian, modes, renorm, scattering  # noqa: E402
from .config import RunConfig, load_config, with_overrides  # noqa: E402
from .lattice import LatticeConfig, photon_frequencies, scalar_frequencies  # noqa: E402

EXIT_OK, EXIT_FAILED, EXIT_BUDGET, EXIT_CONFIG = 0, 2, 3, 4
# below this cutoff a failing truncation-sensitive check is reported as such
TRUNCATION_MIN_CUTOFF = 12


class ConfigError(ValueError):
    pass


def lattice_of(cfg: RunConfig) -> LatticeConfig:
    return LatticeConfig(cfg.lattice.dim, cfg.lattice.extent, cfg.lattice.mass)


def envelope(command: str, cfg: RunConfig, result) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config_hash": cfg.digest(),
        "seed": cfg.output.seed,
        "config": cfg.model_dump(mode="json"),
        "result": result,
    }


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _table(rows, columns) -> str:
    cells = [[_fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if v is None:
        return "-"
    return str(v)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c) for c in columns})
    return buf.getvalue()


# -- renorm ---------------------------------------------------------------------------------

RENORM_COLUMNS = ["constant", "m", "value", "error", "reference", "deviation", "note"]


def _row(name, m, res, reference=None, note=""):
    value = res.value if hasattr(res, "value") else float(res)
    error = res.abs_error_estimate if hasattr(res, "abs_error_estimate") else None
    return {
        "constant": name,
        "m": m,
        "value": value,
        "error": error,
        "reference": reference,
        "deviation": None if reference is None else value - reference,
        "note": note,
    }


def run_renorm(cfg: RunConfig, constant: str = "all") -> dict:
    rc = cfg.renorm
    rows = []
    wanted = lambda key: constant in ("all", key)  # noqa: E731
    mc = lambda f: renorm.monte_carlo_integral(f, rc.mc_samples, rc.mc_replicates, cfg.output.seed)  # noqa: E731
    inv_omega = lambda l: 1.0 / np.sqrt(renorm.omega_sq(l, 0.0))  # noqa: E731
    if wanted("dm"):
        dm = renorm.delta_m(1.0, 0.0, atol=rc.atol)
        rows.append(_row("delta_m/e^2", 0.0, dm, renorm.REFERENCE["delta_m"]))
        check = mc(inv_omega)
        rows.append(_row("delta_m/e^2 (monte carlo)", 0.0, renorm.LoopIntegralResult(-3 * check.value, 3 * check.abs_error_estimate, check.evaluations), renorm.REFERENCE["delta_m"]))
    if wanted("pi0"):
        p2 = renorm.pi2(0.0, atol=rc.atol / 10)
        rows.append(_row("pi0", 0.0, renorm.LoopIntegralResult(-p2.value, p2.abs_error_estimate, p2.evaluations), renorm.REFERENCE["pi0"]))
        check = mc(inv_omega)
        rows.append(_row("pi0 (monte carlo)", 0.0, check, renorm.REFERENCE["pi0"]))
    if constant == "all":
        dm = renorm.delta_m(1.0, 0.0, atol=rc.atol)
        p0 = renorm.pi2(0.0, atol=rc.atol / 10)
        ratio = abs(dm.value) / (3 * abs(p0.value))
        rows.append({"constant": "|delta_m|/(3 pi0)", "m": 0.0, "value": ratio, "reference": 1.0, "deviation": ratio - 1.0, "note": ""})
    fits = {}
    if wanted("pi1") or wanted("pi2") or wanted("de"):
        expansions = []
        for m in rc.masses:
            exp = renorm.pi1(0.0, np.zeros(3), m, literal=rc.literal, vertex=rc.vertex)
            expansions.append(exp)
            flag = "log-divergent as m->0" if exp.log_divergent else ""
            ref = renorm.LOG_COEFFICIENT * np.log(1 / m**2) + renorm.REFERENCE["pi1_intercept"]
            if wanted("pi1"):
                rows.append(_row("pi1", m, exp.pi1, ref, flag))
            if wanted("pi2"):
                rows.append(_row("pi2", m, exp.pi2, -ref, flag))
            if wanted("de"):
                e = cfg.schedule.e_target
                rows.append(_row("delta_e", m, renorm.delta_e(e, m, "numeric", exp), renorm.delta_e(e, m, "closed_form"), f"e = {e}"))
        if len(rc.masses) >= 2:
            for key, sign in (("pi1", 1.0), ("pi2", -1.0)):
                if not wanted(key):
                    continue
                res = [renorm.LoopIntegralResult(sign * getattr(x, key).value, getattr(x, key).abs_error_estimate, 0) for x in expansions]
                fit = renorm.log_fit(rc.masses, res)
                label = key if sign > 0 else "-pi2"
                fits[label] = {"slope": fit.slope, "intercept": fit.intercept}
                rows.append({"constant": f"{label} slope", "value": fit.slope, "reference": renorm.LOG_COEFFICIENT, "deviation": fit.slope - renorm.LOG_COEFFICIENT, "note": "fit vs log(1/m^2)"})
                rows.append({"constant": f"{label} intercept", "value": fit.intercept, "reference": renorm.REFERENCE["pi1_intercept"], "deviation": fit.intercept - renorm.REFERENCE["pi1_intercept"], "note": "fit vs log(1/m^2)"})
    return {"rows": rows, "fits": fits, "variant": "literal" if rc.literal else "squared", "vertex": rc.vertex}


# -- groundstate ---------------------------------------------------------------------------------


def run_groundstate(cfg: RunConfig, emit_circuit: str | None = None) -> tuple[dict, bool]:
    lat = lattice_of(cfg)
    U = modes.groundstate_unitary(lat)
    result: dict = {"modes": lat.num_modes, "symplectic_error": U.symplectic_error()}
    ok = U.symplectic_error() <= modes.SYMPLECTIC_TOL
    if cfg.backend.kind == "gaussian":
        state = gaussian.groundstate(lat)
        means = gaussian.number_means(state, U)
        result.update(
            backend="gaussian",
            particle_number_means=means.tolist(),
            max_particle_number=float(np.abs(means).max()),
            physical=state.is_physical(),
        )
        ok &= bool(np.abs(means).max() <= 1e-10)
    else:
        model = fock.FockModel(lat, cfg.backend.cutoff, frame="position")
        psi = model.groundstate()
        H0 = model.H0()
        from scipy.sparse.linalg import eigsh

        vals, vecs = eigsh(H0, k=1, which="SA", tol=1e-12)
        fidelity = float(abs(np.vdot(vecs[:, 0], psi)) ** 2)
        annihilation = max(float(np.linalg.norm(model.particle_operator(j) @ psi)) for j in range(lat.num_modes))
        constraint = float(model.constraint_norms(psi).max())
        result.update(
            backend="fock",
            frame="position",
            cutoff=cfg.backend.cutoff,
            fidelity_with_diagonalised=fidelity,
            lowest_eigenvalue=float(vals[0]),
            prepared_energy=model.energy(H0, psi),
            max_annihilation_residual=annihilation,
            max_constraint=constraint,
        )
        ok &= fidelity >= 0.999
    if emit_circuit:
        circ = circuit.groundstate_circuit(lat)
        Path(emit_circuit).write_text(circ.to_text())
        back = circuit.OpticalCircuit.load(emit_circuit).recompose()
        result["circuit"] = {"path": emit_circuit, "elements": circ.counts(), "roundtrip_error": back.distance(U)}
        ok &= back.distance(U) <= 1e-8
    return result, bool(ok)


# -- scatter --------------------------------------------------------------------------------------


def _in_spec(cfg: RunConfig, lat: LatticeConfig) -> scattering.WavepacketSpec:
    entries = []
    for p in cfg.in_state.packets:
        if p.weights is not None:
            profile = np.asarray(p.weights, dtype=complex)
        elif p.width is not None:
            profile = scattering.gaussian_profile(lat, p.peak, p.width)
        else:
            profile = scattering.sharp_profile(lat, p.peak)
        entries.append((p.kind, p.peak, profile))
    return scattering.WavepacketSpec.build(lat, entries)


def _schedule(cfg: RunConfig, dt: float | None = None) -> scattering.CouplingSchedule:
    s = cfg.schedule
    return scattering.build_schedule(s.T, s.T1, s.dt if dt is None else dt, s.e_target, s.dm_coefficient)


def run_scatter(cfg: RunConfig) -> tuple[dict, list, bool]:
    lat = lattice_of(cfg)
    trace: list = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", scattering.ConstraintViolation)
        report = scattering.run_scattering(
            lat,
            _schedule(cfg),
            _in_spec(cfg, lat),
            cutoff=cfg.backend.cutoff,
            seed=cfg.output.seed,
            shots=cfg.output.shots,
            sign=cfg.schedule.sign,
            epsilon=cfg.schedule.epsilon,
            convergence_check=cfg.output.convergence_check,
            trace=trace,
        )
    violated = any(issubclass(w.category, scattering.ConstraintViolation) for w in caught)
    return report.to_dict(), trace, not violated


def run_sweep(cfg: RunConfig, dts, refine: int = 8) -> dict:
    lat = lattice_of(cfg)
    return scattering.dt_sweep(lat, _schedule(cfg), _in_spec(cfg, lat), dts, cfg.backend.cutoff, cfg.schedule.sign, refine)


# -- validate -------------------------------------------------------------------------------------


def _check(name, value, tol, truncation=False, cutoff=None):
    ok = bool(value <= tol)
    if ok:
        status = "pass"
    elif truncation and cutoff is not None and cutoff < TRUNCATION_MIN_CUTOFF:
        status = "insufficient cutoff"
    else:
        status = "fail"
    return {"check": name, "value": float(value), "tolerance": tol, "status": status}


def run_validate(cfg: RunConfig, inject_symplectic: float = 0.0) -> tuple[list, bool]:
    lat = lattice_of(cfg)
    checks = []
    U = modes.groundstate_unitary(lat)
    if inject_symplectic:
        rng = np.random.default_rng(cfg.output.seed)
        perturbation = rng.standard_normal(U.matrix.shape)
        U = modes.SymplecticOp(U.matrix + inject_symplectic * perturbation / np.linalg.norm(perturbation))
    ops = {
        "groundstate unitary": U,
        "fourier": modes.fourier_symplectic(lat),
        "squeeze layer": modes.squeeze_layer(lat),
        "free evolution": gaussian.free_evolution(lat, 0.7),
        "counterterm evolution": gaussian.counterterm_evolution(lat, -0.4, 0.3),
    }
    worst = max(op.symplectic_error() for op in ops.values())
    checks.append(_check("symplectic invariant", worst, modes.SYMPLECTIC_TOL))

    clean = modes.groundstate_unitary(lat)
    A, B = modes.squeeze_layer(lat).bogoliubov()
    coeff = modes.mode_map_coefficients(lat)
    idx = np.arange(lat.num_modes)
    diff = max(
        np.abs(A[idx, idx] - coeff.u).max(),
        np.abs(np.abs(B[idx, coeff.partner]) - np.abs(coeff.v)).max(),
    )
    checks.append(_check("mode-map coefficients", diff, 1e-10))
    if lat.num_modes <= 60:
        circ = circuit.groundstate_circuit(lat)
        checks.append(_check("circuit round trip", circ.recompose().distance(clean), 1e-8))

    omega = gaussian.groundstate(lat)
    moved = gaussian.apply(omega, gaussian.free_evolution(lat, 1.3))
    checks.append(_check("ground state stationary", float(np.abs(moved.cov - omega.cov).max()), 1e-10))
    checks.append(
        {"check": "uncertainty relation", "value": 0.0, "tolerance": 0.0, "status": "pass" if omega.is_physical() else "fail"}
    )

    cutoff = cfg.backend.cutoff
    fock_ok = lat.num_modes <= 8
    if fock_ok:
        try:
            model = fock.FockModel(lat, cutoff, frame="particle")
            H = model.HI(0.37)
            checks.append(_check("interaction hermitian", fock.sparse_norm(H - H.conj().T), 1e-12))
            checks.append(_check("interaction conserves charge", fock.sparse_norm(fock.commutator(H, model.charge())), 1e-10))
            G = model.gauss_law(0, 0.37)
            checks.append(_check("gauss law hermitian", fock.sparse_norm(G - G.conj().T), 1e-12))
            vac = model.groundstate()
            checks.append(_check("gauss law vacuum expectation", abs(np.vdot(vac, G @ vac)), 1e-10))
            checks.append(_check("constraint annihilates vacuum", float(model.constraint_norms(vac).max()), 1e-9))

            photon_quanta = model.space.basis[:, lat.num_scalar_modes :].sum(axis=1)
            levels = np.sort(model.H0().diagonal().real[photon_quanta == 0])
            checks.append(_check("ground energy (particle frame)", abs(levels[0]), 1e-9))
            w = modes.mode_map_coefficients(lat).frequency[: lat.num_scalar_modes]
            checks.append(_check("first scalar gap = lowest scalar frequency", abs(levels[1] - w.min()), 1e-6))

            scalar = [j for j in range(lat.num_modes) if j < lat.num_scalar_modes]
            sector = fock.FockModel(lat, cutoff, frame="position", modes=scalar)
            from scipy.sparse.linalg import eigsh

            e0 = eigsh(sector.H0(), k=1, which="SA", tol=1e-12)[0][0] if sector.dim > 2 else sector.H0().diagonal().real.min()
            checks.append(_check("ground energy (position frame)", abs(float(e0)), 1e-9, truncation=True, cutoff=cutoff))

            agreement = _gaussian_fock_agreement(lat, cutoff)
            checks.append(_check("gaussian/fock agreement", agreement, 1e-3, truncation=True, cutoff=cutoff))
        except fock.CutoffTooSmall as exc:
            checks.append({"check": "fock backend", "value": float(cutoff), "tolerance": 1, "status": "insufficient cutoff", "detail": str(exc)})

    dm = renorm.delta_m(1.0, 0.0, atol=cfg.renorm.atol)
    p0 = renorm.pi2(0.0, atol=cfg.renorm.atol / 10)
    gap = abs(abs(dm.value) - 3 * abs(p0.value))
    tol = dm.abs_error_estimate + 3 * p0.abs_error_estimate
    checks.append(_check("|delta_m| = 3 pi0", gap, tol))
    return checks, all(c["status"] != "fail" for c in checks)


def _gaussian_fock_agreement(lat: LatticeConfig, cutoff: int) -> float:
    dm, t1, t2 = -0.5, 0.7, 0.4
    state = gaussian.groundstate(lat)
    state = gaussian.apply(state, gaussian.counterterm_evolution(lat, dm, t1))
    state = gaussian.apply(state, gaussian.free_evolution(lat, t2))
    model = fock.FockModel(lat, cutoff, frame="position")
    psi = model.groundstate()
    psi = fock.exact_evolve(model.Hct(dm), t1, psi)
    psi = fock.exact_evolve(model.H0(), t2, psi)
    means = fock.measure_numbers(model, psi).means
    return float(np.abs(means - gaussian.number_means(state)).max())


# -- dispersion --------------------------------------------------------------------------------------


def run_dispersion(cfg: RunConfig) -> list:
    lat = lattice_of(cfg)
    ws, wg = scalar_frequencies(lat), photon_frequencies(lat)
    rows = []
    for i, (n, k) in enumerate(zip(lat.sites(), lat.momenta())):
        rows.append({"n": n.tolist(), "k": k.tolist(), "omega_scalar": float(ws[i]), "omega_photon": float(wg[i])})
    return rows


# -- dispatch ----------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqed", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--extent", type=int)
        p.add_argument("--mass", type=float)
        p.add_argument("--cutoff", type=int)
        p.add_argument("--backend", choices=["gaussian", "fock"])
        p.add_argument("--no-write", action="store_true", help="print only, write no files")

    p = sub.add_parser("renorm", help="one-loop renormalisation constants")
    common(p)
    p.add_argument("--constant", choices=["all", "dm", "pi0", "pi1", "pi2", "de"], default="all")
    p.add_argument("--m", type=float, help="evaluate the momentum expansion at this single mass")
    p.add_argument("--literal", action="store_true")

    p = sub.add_parser("groundstate", help="prepare and check the free ground state")
    common(p)
    p.add_argument("--emit-circuit", metavar="PATH")

    p = sub.add_parser("scatter", help="run the adiabatic scattering pipeline")
    common(p)
    p.add_argument("--dt", help="step size, or comma-separated list for an error sweep")
    p.add_argument("--e-target", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--T1", type=float)
    p.add_argument("--refine", type=int, default=8, help="reference step is the smallest dt divided by this")

    p = sub.add_parser("validate", help="run the invariant suite")
    common(p)
    p.add_argument("--inject-symplectic", type=float, default=0.0, metavar="EPS")

    p = sub.add_parser("dispersion", help="print lattice frequencies")
    common(p)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {
        "output.directory": args.out,
        "output.seed": args.seed,
        "lattice.dim": args.dim,
        "lattice.extent": args.extent,
        "lattice.mass": args.mass,
        "backend.cutoff": args.cutoff,
        "backend.kind": args.backend,
    }
    if args.command == "renorm":
        if args.m is not None:
            overrides["renorm.masses"] = [args.m]
        if args.literal:
            overrides["renorm.literal"] = True
    if args.command == "scatter":
        overrides["schedule.e_target"] = args.e_target
        overrides["schedule.T"] = args.T
        overrides["schedule.T1"] = args.T1
        if args.dt and "," not in args.dt:
            overrides["schedule.dt"] = float(args.dt)
    return with_overrides(cfg, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        lattice_of(cfg)
    except (ValidationError, yaml.YAMLError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _dispatch(args, cfg)
    except (fock.OracleTooLarge, renorm.QuadratureNotConverged, renorm.ExpansionUnstable) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (fock.CutoffTooSmall, scattering.InvalidWindow) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args, cfg: RunConfig) -> int:
    write = not args.no_write
    if args.command == "renorm":
        result = run_renorm(cfg, args.constant)
        print(_table(result["rows"], RENORM_COLUMNS))
        if write:
            if "json" in cfg.output.formats:
                _write(cfg, "renorm.json", dump_json(envelope("renorm", cfg, result)))
            if "csv" in cfg.output.formats:
                _write(cfg, "renorm.csv", _csv(result["rows"], RENORM_COLUMNS))
        return EXIT_OK

    if args.command == "groundstate":
        result, ok = run_groundstate(cfg, args.emit_circuit)
        text = dump_json(envelope("groundstate", cfg, result))
        print(text, end="")
        if write:
            _write(cfg, "groundstate.json", text)
        return EXIT_OK if ok else EXIT_FAILED

    if args.command == "scatter":
        if args.dt and "," in args.dt:
            dts = [float(v) for v in args.dt.split(",")]
            result = run_sweep(cfg, dts, args.refine)
            print(_table(result["rows"], ["dt", "error"]))
            print(f"slope {result['slope']:.4f}")
            if write:
                _write(cfg, "sweep.json", dump_json(envelope("scatter-sweep", cfg, result)))
            return EXIT_OK
        report, trace, ok = run_scatter(cfg)
        text = dump_json(envelope("scatter", cfg, report))
        if write:
            _write(cfg, "scatter.json", text)
            if cfg.output.trace:
                fock.write_trace(Path(cfg.output.directory) / "trace.csv", trace)
        summary = {k: report[k] for k in ("totals_in", "totals_out", "constraint_max", "charge_drift", "survival_probability")}
        print(dump_json(summary), end="")
        return EXIT_OK if ok else EXIT_FAILED

    if args.command == "validate":
        checks, ok = run_validate(cfg, args.inject_symplectic)
        print(_table(checks, ["check", "value", "tolerance", "status"]))
        if write:
            _write(cfg, "validate.json", dump_json(envelope("validate", cfg, {"checks": checks, "ok": ok})))
        return EXIT_OK if ok else EXIT_FAILED

    if args.command == "dispersion":
        rows = run_dispersion(cfg)
        print(_table(rows, ["n", "k", "omega_scalar", "omega_photon"]))
        if write and "json" in cfg.output.formats:
            _write(cfg, "dispersion.json", dump_json(envelope("dispersion", cfg, rows)))
        return EXIT_OK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
