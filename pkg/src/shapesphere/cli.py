"""Command-line interface: ``shapesphere <command> [--config FILE] [--preset NAME] [--set key=value]``.

Every run writes ``manifest.json`` (config hash, tool version) into the
output directory, the data files, and PNG figures unless ``--no-figures``.
A one-line JSON summary goes to stdout; errors go to stderr as a JSON
record and to ``error.json``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, core
from .errors import ShapeSphereError, UnsupportedMassesError
from .integrator import STEP_UNDERFLOW, TIME_REACHED, Trajectory, drift_report, integrate
from .io import (ConfigError, OutputError, RunConfig, apply_overrides, dumps, make_manifest,
                 read_config_file, read_trajectory, write_events_csv, write_json, write_path_csv,
                 write_table, write_trajectory_csv, write_trajectory_json)
from .projection import project, pushforward_velocity

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("shapesphere")


class NumericalFailure(ShapeSphereError):
    """A run finished but failed its numerical checks."""


class Run:
    """Output directory plus bookkeeping for one invocation."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        out = cfg.section("output")
        self.dir = Path(out["dir"])
        self.format = out["format"]
        self.figures = bool(out["figures"])
        self.files = []

    def path(self, name) -> Path:
        return self.dir / name

    def add(self, p):
        self.files.append(str(Path(p).name))
        return p

    def trajectory(self, traj: Trajectory, stem: str, manifest=None):
        if self.format in ("csv", "both"):
            self.add(write_trajectory_csv(traj, self.path(f"{stem}.csv")))
        if self.format in ("json", "both"):
            self.add(write_trajectory_json(traj, self.path(f"{stem}.json"), manifest or self.manifest()))

    def table(self, name, header, rows):
        self.add(write_table(self.path(name), header, rows))

    def json(self, name, obj):
        self.add(write_json(obj, self.path(name)))

    def figure(self, fn, name, *args, **kw):
        if self.figures:
            self.add(fn(*args, path=self.path(name), **kw))

    def manifest(self, **extra):
        return make_manifest(self.command, self.cfg, extra)


def _plots():
    from . import plotting
    return plotting


# ---- subcommands ----------------------------------------------------------

def _simulate(cfg: RunConfig):
    m = cfg.mass_distribution
    return integrate(cfg.initial_state(), m, cfg.duration(), cfg.integrator_config())


def _trajectory_source(cfg: RunConfig, run: Run) -> Trajectory:
    if cfg.input:
        return read_trajectory(cfg.input, cfg.mass_distribution)
    traj = _simulate(cfg)
    run.trajectory(traj, "trajectory")
    return traj


def _relative_drift(traj):
    dH, dJ, dP = drift_report(traj)
    d = traj.diagnostics
    H0 = abs(d["H"][0]) if len(traj) else 0.0
    scale = max(abs(d["J"][0]), math.sqrt(max(d["I"][0], 0) * 2 * abs(H0)), 1e-300) if len(traj) else 1.0
    return {"H": dH / max(H0, 1e-300), "J": dJ / scale, "P": dP / scale}


def cmd_simulate(cfg, run):
    traj = _simulate(cfg)
    run.trajectory(traj, "trajectory")
    drift = _relative_drift(traj)
    summary = {"termination": traj.termination, "t_end": float(traj.times[-1]), "samples": len(traj),
               "relative_drift": drift}
    pl = _plots()
    run.figure(pl.plot_bodies, "bodies.png", traj, title=cfg.preset or "simulation")
    if len(traj) > 1:
        d = traj.diagnostics
        run.figure(pl.plot_series, "drift.png", traj.times,
                   {"H - H0": d["H"] - d["H"][0], "J - J0": d["J"] - d["J"][0]}, ylabel="drift")
    if traj.termination == STEP_UNDERFLOW:
        return summary, NumericalFailure(f"integration stopped: step underflow at t = {traj.times[-1]:.17g}")
    return summary, None


def _shape_trajectory(traj: Trajectory) -> Trajectory:
    if traj.kind == "reduced":
        return traj
    m = traj.masses
    W = project(traj.q, m)
    Wd = np.array([pushforward_velocity(traj.state(i), m) for i in range(len(traj))]).reshape(-1, 3)
    out = Trajectory(traj.times, np.hstack([W, Wd]), "reduced", m, traj.termination)
    out.meta["source"] = "projection"
    return out


def cmd_project(cfg, run):
    if not cfg.input:
        raise ConfigError("project needs an input trajectory (--input or input:)")
    traj = read_trajectory(cfg.input, cfg.mass_distribution)
    shape = _shape_trajectory(traj)
    run.trajectory(shape, "shape")
    run.figure(_plots().plot_shape_sphere, "shape_sphere.png", shape.w, special=_special_dict(traj.masses))
    return {"samples": len(shape), "input": str(cfg.input)}, None


def _require_horizontal(cfg):
    if cfg.initial is not None and "w" in cfg.initial:
        return
    state = cfg.initial_state()
    m = cfg.mass_distribution
    q = core.centered(state.q, m)
    J = core.angular_momentum(core.PhaseState(q, state.v), m)
    scale = math.sqrt(core.moment_of_inertia(q, m) * 2 * max(core.kinetic_energy(state.v, m), 1e-300))
    if abs(J) > 1e-10 * max(scale, 1.0):
        raise ConfigError(f"reduced dynamics needs zero angular momentum (J = {J:.3e})")


def cmd_reduce(cfg, run):
    from .reduced import integrate_reduced
    _require_horizontal(cfg)
    traj = integrate_reduced(cfg.reduced_initial(), cfg.mass_distribution, cfg.duration(),
                             cfg.integrator_config())
    run.trajectory(traj, "reduced")
    d = traj.diagnostics
    run.figure(_plots().plot_shape_sphere, "shape_sphere.png", traj.w, special=_special_dict(traj.masses))
    summary = {"termination": traj.termination, "t_end": float(traj.times[-1]), "samples": len(traj),
               "energy_drift": float(np.max(np.abs(d["H"] - d["H"][0]))) if len(traj) else 0.0}
    if traj.termination == STEP_UNDERFLOW:
        summary["note"] = "step underflow near a binary collision ray"
    return summary, None


def compare_full_reduced(cfg: RunConfig):
    """Projected full trajectory vs reduced integration on a common uniform grid.

    Returns (times, deviation, min separation / size, close approach time).
    """
    from .reduced import ReducedState, integrate_reduced
    m = cfg.mass_distribution
    state = cfg.initial_state()
    icfg = cfg.integrator_config()
    T = cfg.duration()
    full = integrate(state, m, T, icfg)
    red = integrate_reduced(ReducedState.from_phase(state, m), m, T, icfg)
    t_end = min(full.times[-1], red.times[-1])
    sec = cfg.section("compare")
    t = np.linspace(0.0, t_end, int(sec["samples"]))
    Y = full.sample(t)
    q = Y[:, 0:3] + 1j * Y[:, 3:6]
    W = project(q, m)
    dev = np.linalg.norm(W - red.sample(t)[:, 0:3], axis=1)
    size = math.sqrt(core.moment_of_inertia(core.centered(state.q, m), m) / m.M)
    sep = core.pairwise_separations(q).min(axis=1) / size
    close = np.nonzero(sep < sec["close_fraction"])[0]
    t_close = float(t[close[0]]) if len(close) else float(t_end)
    return t, dev, sep, t_close


def cmd_compare(cfg, run):
    _require_horizontal(cfg)
    t, dev, sep, t_close = compare_full_reduced(cfg)
    before = t <= t_close
    run.table("compare.csv", ["t", "deviation", "min_separation"], np.column_stack([t, dev, sep]))
    run.figure(_plots().plot_series, "deviation.png", t, {"|pi(q) - w|": dev}, ylabel="deviation", logy=True)
    return {"close_approach_time": t_close,
            "max_deviation_before_close_approach": float(dev[before].max()),
            "max_deviation": float(dev.max())}, None


def cmd_syzygies(cfg, run):
    from .syzygy import detect_syzygies, hypothesis_check, syzygy_sequence
    traj = _trajectory_source(cfg, run)
    events = detect_syzygies(traj)
    run.add(write_events_csv(events, run.path("syzygies.csv")))
    W = project(traj.q, traj.masses) if traj.kind == "full" else traj.w
    run.figure(_plots().plot_syzygies, "syzygies.png", traj.times, W[:, 2], events)
    summary = {"events": len(events), "counted": len(events.counted), "word": syzygy_sequence(events),
               "identically_collinear": events.identically_collinear, "termination": traj.termination}
    if traj.kind == "full" and len(traj):
        summary["hypothesis"] = dict(zip(("negative_energy", "zero_angular_momentum", "applies"),
                                         hypothesis_check(traj.state(0), traj.masses)))
    return summary, None


def _special_dict(m):
    from .geometry import special_points
    sp = special_points(m)
    d = {"L+": sp.lagrange_plus, "L-": sp.lagrange_minus}
    for i in range(3):
        d[f"E{i + 1}"] = sp.euler[i]
        d[f"B{i + 1}"] = sp.binary[i]
    return d


def cmd_central_configs(cfg, run):
    from .solutions import central_configuration_residual, central_configurations
    m = cfg.mass_distribution
    rows, out = [], []
    for cc in central_configurations(m):
        w = cc.shape
        u = w / np.linalg.norm(w)
        res = central_configuration_residual(cc.q0, m)
        rows.append([cc.kind, cc.multiplier, *np.column_stack([cc.q0.real, cc.q0.imag]).ravel(), *w, *u, res])
        out.append({"kind": cc.kind, "multiplier": cc.multiplier, "residual": res, "shape": u.tolist()})
    header = ["kind", "multiplier", "q1_re", "q1_im", "q2_re", "q2_im", "q3_re", "q3_im",
              "w1", "w2", "w3", "u1", "u2", "u3", "residual"]
    run.table("central_configs.csv", header, rows)
    run.json("central_configs.json", {"manifest": run.manifest(), "configurations": out})
    run.figure(_plots().plot_shape_sphere, "central_configs.png", np.zeros((0, 3)), special=_special_dict(m))
    return {"count": len(out), "kinds": [o["kind"] for o in out],
            "max_residual": max(o["residual"] for o in out)}, None


def cmd_kepler(cfg, run):
    from .io import _complex
    from .solutions import KeplerOrbit
    sec = cfg.section("kepler")
    try:
        orbit = KeplerOrbit(_complex(sec["lam0"], "kepler.lam0"), _complex(sec["lamdot0"], "kepler.lamdot0"),
                            float(sec["c"]))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"kepler: {e}") from e
    T = cfg.T if cfg.T is not None else float(sec.get("T") or (orbit.period if orbit.bounded else 10.0))
    t_coll = orbit.collision_time()
    t = np.linspace(0.0, T, int(sec["samples"]))
    t = t[t < t_coll]
    states = [orbit.state(s) for s in t]
    rows = [[s, lam.real, lam.imag, ld.real, ld.imag, 0.5 * abs(ld) ** 2 - orbit.c / abs(lam)]
            for s, (lam, ld) in zip(t, states)]
    run.table("kepler.csv", ["t", "lam_re", "lam_im", "lamdot_re", "lamdot_im", "E"], rows)
    if len(rows):
        lam = np.array([r[1] + 1j * r[2] for r in rows])
        run.figure(_plots().plot_series, "kepler.png", t, {"|lambda|": np.abs(lam)}, ylabel="|lambda|")
    return {"energy": orbit.energy, "angular_momentum": orbit.angular_momentum, "bounded": orbit.bounded,
            "eccentricity": orbit.eccentricity, "period": orbit.period if orbit.bounded else None,
            "collision_time": t_coll if math.isfinite(t_coll) else None, "samples": len(rows)}, None


EIGHT_TOLERANCES = {"closure": 1e-8, "periodicity": 1e-8, "momenta": 1e-10, "choreography": 1e-6}


def cmd_find_eight(cfg, run):
    from .action import collinear_crossings, find_figure_eight
    sec = cfg.section("eight")
    fe = find_figure_eight(N=int(sec["N"]), T=float(sec["T"]), seed=int(sec.get("seed", cfg.seed)),
                           cfg=cfg.integrator_config() if cfg.integrator else None)
    run.add(write_path_csv(fe.arc.times, fe.arc.nodes, run.path("arc.csv")))
    run.add(write_path_csv(fe.curve.times, fe.curve.nodes, run.path("shape_curve.csv")))
    run.trajectory(fe.orbit, "orbit")
    c = fe.checks
    summary = {
        "action": fe.arc.info["action"],
        "arc_gradient": fe.arc.info["gradient_norm"],
        "selected_size": fe.arc.info["size_at_start"],
        "closure_error": fe.curve.closure_error,
        "collinear_crossings": collinear_crossings(fe.curve),
        "initial_state": {"q": fe.shooting.state.q, "v": fe.shooting.state.v},
        **c,
    }
    run.json("eight.json", {"manifest": run.manifest(), "summary": summary})
    pl = _plots()
    one = fe.orbit.resample(fe.orbit.times[fe.orbit.times <= c["period"]])
    run.figure(pl.plot_bodies, "eight_orbit.png", one, title="figure eight")
    run.figure(pl.plot_shape_sphere, "eight_shape.png", fe.curve.nodes, special=_special_dict(core.EQUAL_MASSES))
    tol = EIGHT_TOLERANCES
    failures = []
    if not fe.curve.closure_error < tol["closure"]:
        failures.append("closure")
    if not c["periodicity_error"] < tol["periodicity"]:
        failures.append("periodicity")
    if not (abs(c["J"]) < tol["momenta"] and c["P"] < tol["momenta"]):
        failures.append("momenta")
    if not c["choreography_error"] < tol["choreography"]:
        failures.append("choreography")
    if c["syzygy_count"] != 6 or sorted(c["syzygy_word"]) != sorted("112233"):
        failures.append("syzygies")
    summary["failed_checks"] = failures
    return summary, NumericalFailure(f"figure-eight checks failed: {failures}") if failures else None


def cmd_emit_sphere(cfg, run):
    traj = _trajectory_source(cfg, run)
    W = project(traj.q, traj.masses) if traj.kind == "full" else traj.w
    n = int(cfg.section("sphere")["samples"])
    if len(traj) > 1 and n > 1:
        t = np.linspace(traj.times[0], traj.times[-1], n)
        Y = traj.sample(t)
        W = project(Y[:, 0:3] + 1j * Y[:, 3:6], traj.masses) if traj.kind == "full" else Y[:, 0:3]
    else:
        t = traj.times
    rho = np.linalg.norm(W, axis=1)
    keep = rho > 0
    U = W[keep] / rho[keep, None]
    run.table("sphere.csv", ["t", "x", "y", "z"], np.column_stack([t[keep], U]) if keep.any() else np.zeros((0, 4)))
    special = _special_dict(traj.masses)
    run.add(write_table(run.path("special_points.csv"), ["name", "x", "y", "z"],
                        [[k, *(v / np.linalg.norm(v))] for k, v in special.items()]))
    run.figure(_plots().plot_shape_sphere, "sphere.png", U, special=special)
    return {"samples": int(keep.sum()), "skipped_triple_collision": int((~keep).sum())}, None


COMMANDS = {
    "simulate": (cmd_simulate, "integrate the full planar three-body equations"),
    "project": (cmd_project, "map a trajectory file to shape coordinates"),
    "reduce": (cmd_reduce, "integrate the reduced shape-space equations (J = 0)"),
    "compare": (cmd_compare, "full vs reduced deviation report"),
    "syzygies": (cmd_syzygies, "detect and type syzygies"),
    "central-configs": (cmd_central_configs, "the five central configurations for given masses"),
    "kepler": (cmd_kepler, "two-body (Kepler) propagation"),
    "find-eight": (cmd_find_eight, "minimize, extend, lift, shoot and verify the figure eight"),
    "emit-sphere": (cmd_emit_sphere, "unit-sphere shape curve plus special points"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapesphere", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-c", "--config", help="YAML/JSON run configuration")
        sp.add_argument("-p", "--preset", help="named initial condition")
        sp.add_argument("-i", "--input", help="trajectory file (.csv or .json)")
        sp.add_argument("-o", "--out", help="output directory")
        sp.add_argument("--format", choices=("csv", "json", "both"))
        sp.add_argument("--no-figures", action="store_true")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, dotted keys for sections (e.g. integrator.rel_tol=1e-12)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = read_config_file(args.config)
    if args.preset:
        data["preset"] = args.preset
    if args.input:
        data["input"] = args.input
    out = dict(data.get("output") or {})
    if args.out:
        out["dir"] = args.out
    if args.format:
        out["format"] = args.format
    if args.no_figures:
        out["figures"] = False
    if out:
        data["output"] = out
    data = apply_overrides(data, args.set)
    return RunConfig.from_dict(data)


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigError, UnsupportedMassesError)):
        return EXIT_CONFIG
    if isinstance(exc, OutputError):
        return EXIT_IO
    return EXIT_NUMERIC


def _error_record(command, exc, code):
    rec = {"status": "error", "command": command, "exit_code": code,
           "error": type(exc).__name__, "message": str(exc)}
    for attr in ("pair", "where", "path", "residual"):
        val = getattr(exc, attr, None)
        if val is not None and not isinstance(val, np.ndarray):
            rec[attr] = val if isinstance(val, (str, int, float)) else repr(val)
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        cfg = _load_config(args)
        run = Run(args.command, cfg)
        handler = COMMANDS[args.command][0]
        with np.errstate(over="ignore"):
            summary, failure = handler(cfg, run)
        manifest = run.manifest(status="ok" if failure is None else "failed", outputs=sorted(run.files),
                                summary=summary)
        write_json(manifest, run.path("manifest.json"))
        if failure is not None:
            raise failure
        run.path("error.json").unlink(missing_ok=True)
        print(dumps({"status": "ok", "command": args.command, **summary}).replace("\n", ""))
        return EXIT_OK
    except (ShapeSphereError, FloatingPointError, ValueError, OSError) as exc:
        if isinstance(exc, OSError) and not isinstance(exc, OutputError):
            exc = OutputError(getattr(exc, "filename", "?"), str(exc))
        elif isinstance(exc, ValueError) and not isinstance(exc, ShapeSphereError):
            exc = ConfigError(str(exc))
        code = _exit_code(exc)
        rec = _error_record(args.command, exc, code)
        print(json.dumps(rec), file=sys.stderr)
        if run is not None:
            try:
                write_json(rec, run.path("error.json"))
                if not run.path("manifest.json").exists() or rec["error"] != "NumericalFailure":
                    write_json(run.manifest(status="error", error=rec, outputs=sorted(run.files)),
                               run.path("manifest.json"))
            except OutputError:
                pass
        return code


if __name__ == "__main__":
    sys.exit(main())
