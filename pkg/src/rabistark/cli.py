"""Command-line entry point.

Configuration files are flat ``key = value`` text with dotted keys, e.g.::

    model.qubits = 2
    params.g = [[0.3, 0.3], [0.3, 0.3]]
    schedule.name = fig2_stark

Values are parsed as JSON where possible (numbers, lists, true/false) and
kept as bare strings otherwise.  Unknown keys are rejected.

Exit codes: 0 success, 1 configuration or usage error, 2 model condition
violated, 3 convergence or certificate failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, darkstates, hilbert
from .dynamics import SolverConfig, least_time_search, run_w_generation
from .hilbert import CapacityError, SpaceSpec
from .models import ConditionError, ModelParams, effective_single_mode, spectrum_equivalence_report
from .openquantum import (CatchReleaseConfig, DissipationRates, catch_and_release, compare_engines,
                          density, propagate_master)
from .schedule import TWO_PI, Schedule, standard_trajectory
from .spectra import (dark_state_probes, effective_min_gap, export_sweep, reference_track,
                      sweep_ratios, sweep_schedule, sweep_spectrum)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_CONDITION, EXIT_CONVERGENCE = 0, 1, 2, 3

# key -> default (None: no default)
SCHEMA = {
    "model.qubits": 2, "model.modes": 2, "model.cutoff": 6, "model.truncation": "total",
    "params.delta": None, "params.omega": 1.0, "params.g": None, "params.u": None,
    "schedule.kind": "named", "schedule.name": None, "schedule.periods": None,
    "schedule.ratios": None, "schedule.g_sum_sq": None, "schedule.u": None,
    "schedule.delta_start": None, "schedule.delta_end": None,
    "end.delta": None, "end.omega": None, "end.g": None, "end.u": None,
    "sweep.coordinate": "g", "sweep.start": 0.0, "sweep.stop": 1.0, "sweep.points": 101,
    "sweep.sector": "even", "sweep.equivalence": False,
    "solver.rtol": 1e-10, "solver.atol": 1e-12, "solver.max_step": None, "solver.samples": 101,
    "solver.auto_escalate": True, "solver.max_cutoff": 12, "solver.convergence_tol": 1e-3,
    "dark.family": None, "dark.tolerance": 1e-10, "dark.nullspace": False, "dark.variant": "a",
    "dark.n_bell": 1, "dark.core": "psi_2splus", "dark.xi": 1.5, "dark.cutoff": None,
    "adiabatic.diagnostics": False, "adiabatic.sweep_points": 101, "adiabatic.exclusion": "ratio",
    "dissipation.kind": "catch_release", "dissipation.kappa_in": 1e-4, "dissipation.kappa_c": 0.1,
    "dissipation.release_periods": 3.0, "dissipation.end_periods": 13.0, "dissipation.gamma": 1e-5,
    "dissipation.gamma_phi": 2e-5, "dissipation.engine": "lindblad", "dissipation.case": "a",
    "dissipation.g_ratios": [1.0, 2.0, 3.0], "dissipation.g_sum_sq": 0.98, "dissipation.u": [0.5, 0.5],
    "dissipation.generation_periods": 1.86,
    "min_time.threshold": 0.99, "min_time.u": [0.5], "min_time.g_range": [0.05, 1.2],
    "min_time.g_step": 0.05, "min_time.t_range": [0.5, 6.0], "min_time.t_step": 0.1,
    "min_time.t_tol": 0.02,
    "output.prefix": "run", "output.stride": 1,
    "expect.fidelity": None, "expect.fidelity_tol": None, "expect.fidelity_min": None,
    "expect.gap": None, "expect.gap_tol": None, "expect.fractions": None,
    "expect.fractions_tol": None, "expect.t_min": None, "expect.t_min_tol": None,
    "expect.flat_energies": None, "expect.max_discrepancy": None, "expect.residual_max": None,
}


class ConfigError(ValueError):
    pass


class Convergence(RuntimeError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip('"')


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse dotted-key text into a dict merged over the schema defaults."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(raw)
    return {**SCHEMA, **cfg}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        bundled = resources.files("rabistark") / "configs" / f"{path.name}"
        if not str(path.name).endswith(".cfg"):
            bundled = resources.files("rabistark") / "configs" / f"{path.name}.cfg"
        if bundled.is_file():
            return parse_config(bundled.read_text(encoding="utf-8"), str(path))
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def bundled_configs() -> list:
    return sorted(p.name[:-4] for p in (resources.files("rabistark") / "configs").iterdir()
                  if p.name.endswith(".cfg"))


# -- config -> objects ------------------------------------------------------

def _need(cfg, key):
    if cfg[key] is None:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def build_spec(cfg) -> SpaceSpec:
    try:
        return SpaceSpec(int(cfg["model.qubits"]), int(cfg["model.modes"]), int(cfg["model.cutoff"]),
                         str(cfg["model.truncation"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model block: {exc}") from exc


def _params_block(cfg, prefix: str, base: ModelParams | None = None) -> ModelParams:
    n, m = int(cfg["model.qubits"]), int(cfg["model.modes"])
    delta = cfg[f"{prefix}.delta"]
    g = cfg[f"{prefix}.g"]
    omega = cfg[f"{prefix}.omega"]
    u = cfg[f"{prefix}.u"]
    if base is not None:
        delta = base.delta if delta is None else delta
        g = base.g if g is None else g
        omega = base.omega if omega is None else omega
        u = base.u if u is None else u
    if delta is None or g is None:
        raise ConfigError(f"{prefix}.delta and {prefix}.g are required")
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (m,))
    u = np.zeros((m, n)) if u is None else u
    try:
        return ModelParams(np.asarray(delta, float), omega, np.asarray(g, float), np.asarray(u, float))
    except ValueError as exc:
        raise ConfigError(f"invalid {prefix} block: {exc}") from exc


def build_params(cfg) -> ModelParams:
    return _params_block(cfg, "params")


def build_schedule(cfg) -> Schedule:
    kind = cfg["schedule.kind"]
    if kind == "named":
        name = _need(cfg, "schedule.name")
        from .schedule import STANDARD
        if name not in STANDARD:
            raise ConfigError(f"unknown schedule.name {name!r}; choose from {sorted(STANDARD)}")
        over = {}
        if int(cfg["model.modes"]) != STANDARD[name]["n_modes"]:
            over["n_modes"] = int(cfg["model.modes"])
        for key in ("periods", "ratios", "g_sum_sq", "u", "delta_start", "delta_end"):
            if cfg[f"schedule.{key}"] is not None:
                over[key] = cfg[f"schedule.{key}"]
        try:
            return standard_trajectory(name, **over)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        except ConditionError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    periods = float(_need(cfg, "schedule.periods"))
    start = build_params(cfg)
    if kind == "constant":
        return Schedule.constant(start, periods * TWO_PI, name="constant")
    if kind == "linear":
        end = _params_block(cfg, "end", base=start)
        return Schedule.linear(start, end, periods * TWO_PI, name="linear")
    raise ConfigError(f"unknown schedule.kind {kind!r}")


def build_solver(cfg) -> SolverConfig:
    ms = cfg["solver.max_step"]
    return SolverConfig(float(cfg["solver.rtol"]), float(cfg["solver.atol"]), "DOP853",
                        np.inf if ms is None else float(ms), int(cfg["solver.samples"]))


# -- output -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def header(command: str, cfg: dict) -> list:
    lines = [f"# rabistark {__version__}", f"# command: {command}"]
    for key in sorted(cfg):
        if cfg[key] is not None:
            lines.append(f"# config: {key} = {json.dumps(cfg[key])}")
    return lines


def write_table(path: Path, head: list, columns: list, rows) -> None:
    lines = list(head) + [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_expect(cfg, metrics: dict) -> list:
    out = []

    def close(name, value, target, tol):
        ok = bool(np.all(np.abs(np.asarray(value) - np.asarray(target)) <= tol))
        out.append(f"expect {name}: {'ok' if ok else 'FAIL'} ({_fmt_any(value)} vs {_fmt_any(target)} +- {tol})")

    if cfg["expect.fidelity"] is not None and "fidelity" in metrics:
        close("fidelity", metrics["fidelity"], cfg["expect.fidelity"], cfg["expect.fidelity_tol"] or 0.0)
    if cfg["expect.fidelity_min"] is not None and "fidelity" in metrics:
        ok = metrics["fidelity"] >= cfg["expect.fidelity_min"]
        out.append(f"expect fidelity_min: {'ok' if ok else 'FAIL'} ({metrics['fidelity']:.6f} >= "
                   f"{cfg['expect.fidelity_min']})")
    if cfg["expect.gap"] is not None and "gap" in metrics:
        close("gap", metrics["gap"], cfg["expect.gap"], cfg["expect.gap_tol"] or 0.0)
    if cfg["expect.fractions"] is not None and "fractions" in metrics:
        close("fractions", metrics["fractions"], cfg["expect.fractions"], cfg["expect.fractions_tol"] or 0.0)
    if cfg["expect.t_min"] is not None and "t_min" in metrics:
        close("t_min", metrics["t_min"], cfg["expect.t_min"], cfg["expect.t_min_tol"] or 0.0)
    if cfg["expect.max_discrepancy"] is not None and "max_discrepancy" in metrics:
        ok = metrics["max_discrepancy"] < cfg["expect.max_discrepancy"]
        out.append(f"expect max_discrepancy: {'ok' if ok else 'FAIL'} ({metrics['max_discrepancy']:.3e})")
    if cfg["expect.residual_max"] is not None and "residual" in metrics:
        ok = metrics["residual"] < cfg["expect.residual_max"]
        out.append(f"expect residual_max: {'ok' if ok else 'FAIL'} ({metrics['residual']:.3e})")
    if cfg["expect.flat_energies"] is not None and "flat" in metrics:
        for e in cfg["expect.flat_energies"]:
            ok = any(abs(f - e) < 1e-8 for f in metrics["flat"])
            out.append(f"expect flat line at {e}: {'ok' if ok else 'FAIL'}")
    return out


def _fmt_any(v):
    if np.ndim(v):
        return "[" + ", ".join(f"{x:.6g}" for x in np.ravel(v)) + "]"
    return f"{float(v):.6g}"


def _finish(out_dir: Path, prefix: str, command: str, cfg, summary: list, metrics: dict) -> list:
    summary = summary + _check_expect(cfg, metrics)
    (out_dir / f"{prefix}.{command}.summary.txt").write_text(
        "\n".join(header(command, cfg) + summary) + "\n", encoding="utf-8")
    for line in summary:
        print(line)
    return summary


# -- commands -----------------------------------------------------------------

SECTORS = {"even": 1, "odd": -1, "full": None}


def cmd_spectrum(cfg, out_dir: Path, args) -> int:
    spec = build_spec(cfg)
    sector = SECTORS.get(cfg["sweep.sector"], "bad")
    if sector == "bad":
        raise ConfigError(f"sweep.sector must be one of {sorted(SECTORS)}")
    points = int(cfg["sweep.points"])
    if points < 2 or cfg["sweep.start"] == cfg["sweep.stop"]:
        raise ConfigError("empty sweep range")
    summary, metrics = [], {}
    if cfg["sweep.coordinate"] == "t":
        schedule = build_schedule(cfg)
        sweep = sweep_schedule(schedule, spec, points, sector)
        grid_scale = 1 / TWO_PI
    elif cfg["sweep.coordinate"] == "g":
        base = build_params(cfg)
        grid = np.linspace(float(cfg["sweep.start"]), float(cfg["sweep.stop"]), points)

        def params_of(x):
            return base.replace(g=x * base.g)

        from .spectra import bogoliubov_labels
        from .models import coupling_column
        try:
            labels = bogoliubov_labels(spec, coupling_column(base))
        except ConditionError:
            labels = {}
        sweep = sweep_spectrum(spec, params_of, grid, sector, labels)
        grid_scale = 1.0
        if cfg["sweep.equivalence"]:
            worst = 0.0
            for x in grid[[1, len(grid) // 2, -1]]:
                p = params_of(x)
                p1 = effective_single_mode(p)
                spec1 = SpaceSpec(spec.n_qubits, 1, spec.cutoff, spec.truncation)
                rep = spectrum_equivalence_report(spec, p, spec1, p1)
                worst = max(worst, rep.max_discrepancy, rep.max_extra_offset_error)
            metrics["max_discrepancy"] = worst
            summary.append(f"equivalence max discrepancy: {worst:.3e}")
    else:
        raise ConfigError("sweep.coordinate must be 'g' or 't'")
    sweep.grid = sweep.grid * grid_scale
    text = export_sweep(sweep, coordinate="t_periods" if grid_scale != 1.0 else "g")
    prefix = cfg["output.prefix"]
    path = out_dir / f"{prefix}.spectrum.csv"
    path.write_text("\n".join(header("spectrum", cfg)) + "\n" + text, encoding="utf-8")
    flat = [float(np.mean(sweep.energies[:, m])) for m in range(sweep.n_tracks)
            if np.ptp(sweep.energies[:, m]) < 1e-8]
    metrics["flat"] = flat
    summary += [f"tracks: {sweep.n_tracks}", f"flagged points: {len(sweep.flags)}",
                "flat tracks: " + ", ".join(f"{e:.10f}" for e in flat)]
    _finish(out_dir, prefix, "spectrum", cfg, summary, metrics)
    return EXIT_OK


def _certificate(cfg, params):
    fam = cfg["dark.family"]
    cut = cfg["dark.cutoff"]
    kw = {} if cut is None else {"cutoff": int(cut)}
    if fam in ("psi_d", "psi_2plus", "psi_2splus", "psi_ds", "psi_3s_minus"):
        return getattr(darkstates, fam)(params, **kw)
    if fam == "psi_odd_parity":
        return darkstates.psi_odd_parity(params, cfg["dark.variant"], **kw)
    if fam == "psi_N_composite":
        return darkstates.psi_N_composite(params, int(cfg["dark.n_bell"]), core=cfg["dark.core"])
    if fam == "squeezed":
        return darkstates.squeezed_dark_state(params, float(cfg["dark.xi"]), **kw)
    raise ConfigError(f"unknown dark.family {fam!r}")


def cmd_dark_verify(cfg, out_dir: Path, args) -> int:
    if args.family:
        cfg = {**cfg, "dark.family": args.family}
    if args.tolerance is not None:
        cfg = {**cfg, "dark.tolerance": args.tolerance}
    _need(cfg, "dark.family")
    params = build_params(cfg)
    cert = _certificate(cfg, params)
    tol = float(cfg["dark.tolerance"])
    summary = [f"family: {cert.family}", f"energy: {cert.energy:.12f}", f"residual: {cert.residual:.3e}",
               f"parity: {cert.parity:+d}", f"photon bound: {cert.photon_bound}"]
    if cfg["dark.nullspace"]:
        kernel = darkstates.one_photon_nullspace(params, cert.parity)
        same = [c for c in kernel if abs(c.energy - cert.energy) < 1e-10]
        if same:
            basis = np.array([hilbert.embed(c.state, c.spec, cert.spec) for c in same])
            q, _ = np.linalg.qr(basis.T)
            overlap = float(np.linalg.norm(q.conj().T @ cert.state) ** 2)
        else:
            overlap = 0.0
        summary.append(f"nullspace overlap: {overlap:.12f}")
    prefix = cfg["output.prefix"]
    (out_dir / f"{prefix}.certificate.txt").write_text(
        "\n".join(header("dark-verify", cfg)) + "\n" + cert.to_record(), encoding="utf-8")
    ok = cert.residual < tol
    summary.append(f"certificate: {'pass' if ok else 'FAIL'} (tolerance {tol:.1e})")
    _finish(out_dir, prefix, "dark-verify", cfg, summary, {"residual": cert.residual})
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_adiabatic(cfg, out_dir: Path, args) -> int:
    schedule = build_schedule(cfg)
    solver = build_solver(cfg)
    res = run_w_generation(schedule, cutoff=int(cfg["model.cutoff"]), truncation=cfg["model.truncation"],
                           config=solver, escalate=bool(cfg["solver.auto_escalate"]),
                           max_cutoff=int(cfg["solver.max_cutoff"]), tol=float(cfg["solver.convergence_tol"]))
    prefix = cfg["output.prefix"]
    stride = max(1, int(cfg["output.stride"]))
    names = list(res.populations)
    rows = [[t / TWO_PI, res.fidelity[k], *(res.populations[n][k] for n in names),
             np.linalg.norm(res.states[k])] for k, t in enumerate(res.times)][::stride]
    write_table(out_dir / f"{prefix}.trajectory.csv", header("adiabatic", cfg),
                ["t_periods", "fidelity", *(f"pop_{n}" for n in names), "norm"], rows)
    fid = res.final_fidelity
    metrics = {"fidelity": fid}
    summary = [f"final fidelity: {fid:.6f}", f"T: {schedule.periods:.4f} x 2pi/omega",
               f"cutoff: {res.meta['cutoff']} (check at +2: {res.meta['check_fidelity']:.6f}, "
               f"converged: {res.meta['converged']})", f"norm drift: {res.norm_drift:.2e}"]
    if cfg["adiabatic.diagnostics"]:
        spec = SpaceSpec(schedule.n_qubits, schedule.n_modes, res.meta["cutoff"], cfg["model.truncation"])
        try:
            sweep = sweep_schedule(schedule, spec, int(cfg["adiabatic.sweep_points"]),
                                   probes=dark_state_probes(spec, schedule))
            ref = reference_track(sweep)
            gap = effective_min_gap(sweep, ref, cfg["adiabatic.exclusion"])
            r = sweep_ratios(sweep, ref)
            rmax = float(np.nanmax(r[:, gap.candidates])) if gap.candidates else float("nan")
            metrics["gap"] = gap.gap
            summary += [f"effective min gap: {gap.gap:.4f}", f"max R over candidate levels: {rmax:.4f}"]
        except ConditionError as exc:
            summary.append(f"diagnostics skipped: {exc}")
    _finish(out_dir, prefix, "adiabatic", cfg, summary, metrics)
    if not res.meta["converged"] and not args.allow_unconverged:
        print("error: cutoff not converged (use --allow-unconverged to accept)", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_master(cfg, out_dir: Path, args) -> int:
    kind = cfg["dissipation.kind"]
    engine = args.engine or cfg["dissipation.engine"]
    prefix = cfg["output.prefix"]
    metrics, summary = {}, []
    if kind == "catch_release":
        rep = catch_and_release(CatchReleaseConfig(
            tuple(cfg["dissipation.g_ratios"]), float(cfg["dissipation.g_sum_sq"]), tuple(cfg["dissipation.u"]),
            float(cfg["dissipation.generation_periods"]), float(cfg["dissipation.release_periods"]),
            float(cfg["dissipation.end_periods"]), float(cfg["dissipation.kappa_in"]),
            float(cfg["dissipation.kappa_c"]), float(cfg["dissipation.gamma"]),
            float(cfg["dissipation.gamma_phi"]), int(cfg["model.cutoff"]), engine,
            int(cfg["solver.samples"])))
        res = rep.result
        metrics = {"fidelity": rep.generation_fidelity, "fractions": rep.emission_fractions}
        summary = [f"generation fidelity: {rep.generation_fidelity:.6f}",
                   f"hold fidelity loss: {rep.hold_fidelity_loss:.2e}",
                   "integrated emission: " + ", ".join(f"{e:.6f}" for e in rep.emitted),
                   "emission fractions: " + ", ".join(f"{f:.6f}" for f in rep.emission_fractions),
                   "expected fractions: " + ", ".join(f"{f:.6f}" for f in rep.expected_fractions)]
        results = {"": res}
    elif kind == "compare":
        rep = compare_engines(cfg["dissipation.case"], float(cfg["schedule.periods"] or 10.0),
                              int(cfg["model.cutoff"]), int(cfg["solver.samples"]))
        metrics = {"max_discrepancy": rep.max_discrepancy}
        summary = [f"dressed vs lindblad max population gap: {rep.max_discrepancy:.3e}"]
        results = {"lindblad_": rep.lindblad, "dressed_": rep.dressed}
    elif kind == "schedule":
        schedule = build_schedule(cfg)
        spec = build_spec(cfg)
        rates = DissipationRates.release(float(cfg["dissipation.kappa_in"]), float(cfg["dissipation.kappa_c"]),
                                         float(cfg["dissipation.release_periods"]) * TWO_PI,
                                         float(cfg["dissipation.gamma"]), float(cfg["dissipation.gamma_phi"]))
        from .dynamics import initial_state, w_target
        psi0 = initial_state(spec)
        target = w_target(schedule.nodes[-1].g[:, 0], spec)
        res = propagate_master(density(psi0), schedule, rates, spec, engine, build_solver(cfg),
                               {"W_psiB": target}, int(cfg["solver.samples"]))
        metrics = {"fidelity": float(res.populations["W_psiB"][-1])}
        summary = [f"final fidelity: {metrics['fidelity']:.6f}"]
        results = {"": res}
    else:
        raise ConfigError(f"unknown dissipation.kind {kind!r}")
    stride = max(1, int(cfg["output.stride"]))
    first = next(iter(results.values()))
    cols, data = ["t_periods"], [first.times / TWO_PI]
    for tag, res in results.items():
        for name, pop in res.populations.items():
            cols.append(f"{tag}pop_{name}")
            data.append(pop)
        for i in range(res.photon_numbers.shape[1]):
            cols += [f"{tag}n_{i + 1}", f"{tag}emission_rate_{i + 1}"]
            data += [res.photon_numbers[:, i], res.emission_rates[:, i]]
        summary.append(f"{tag or ''}trace drift: {res.trace_drift:.2e}, min eigenvalue: {res.min_eigenvalue:.2e}")
    rows = np.array(data).T[::stride]
    write_table(out_dir / f"{prefix}.master.csv", header("master", cfg), cols, rows)
    _finish(out_dir, prefix, "master", cfg, summary, metrics)
    return EXIT_OK


def _min_time_row(args):
    u, kw = args
    res = least_time_search(u, **kw)
    return u, res.t_min, res.g_max, res.fidelity


def cmd_min_time(cfg, out_dir: Path, args) -> int:
    thr = float(cfg["min_time.threshold"])
    if not 0 < thr < 1:
        raise ConfigError("min_time.threshold must lie in (0, 1)")
    kw = dict(threshold=thr, g_range=tuple(cfg["min_time.g_range"]), g_step=float(cfg["min_time.g_step"]),
              t_range=tuple(cfg["min_time.t_range"]), t_step=float(cfg["min_time.t_step"]),
              t_tol=float(cfg["min_time.t_tol"]), cutoff=int(cfg["model.cutoff"]))
    us = [float(u) for u in cfg["min_time.u"]]
    jobs = [(u, kw) for u in us]
    if args.threads and args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_min_time_row, jobs))
    else:
        rows = [_min_time_row(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    prefix = cfg["output.prefix"]
    table = [[u, "not_found" if t is None else t, "" if g is None else g, "" if f is None else f]
             for u, t, g, f in rows]
    write_table(out_dir / f"{prefix}.min_time.csv", header("min-time", cfg),
                ["u", "t_min_periods", "g_max", "fidelity"], table)
    summary = [f"U={u:.4f}: " + ("not found" if t is None else f"T_min={t:.4f} (g_max={g:.2f}, F={f:.5f})")
               for u, t, g, f in rows]
    metrics = {}
    if len(rows) == 1 and rows[0][1] is not None:
        metrics["t_min"] = rows[0][1]
    _finish(out_dir, prefix, "min-time", cfg, summary, metrics)
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "dark-verify": cmd_dark_verify, "adiabatic": cmd_adiabatic,
            "master": cmd_master, "min-time": cmd_min_time}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rabistark", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rabistark {__version__}")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("list-configs", help="print the bundled configuration names")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="config file or bundled config name")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--cutoff", type=int, help="override model.cutoff")
        s.add_argument("--sector", choices=sorted(SECTORS), help="override sweep.sector")
        s.add_argument("--engine", choices=["lindblad", "dressed"], help="master-equation engine")
        s.add_argument("--allow-unconverged", action="store_true")
        s.add_argument("--threads", type=int, default=1)
        if name == "dark-verify":
            s.add_argument("--family", help="override dark.family")
            s.add_argument("--tolerance", type=float, help="override dark.tolerance")
        else:
            s.set_defaults(family=None, tolerance=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.command == "list-configs":
        print("\n".join(bundled_configs()))
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.cutoff is not None:
            cfg["model.cutoff"] = args.cutoff
        if args.sector is not None:
            cfg["sweep.sector"] = args.sector
        if args.engine is not None:
            cfg["dissipation.engine"] = args.engine
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except CapacityError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main_exit():
    sys.exit(main())
