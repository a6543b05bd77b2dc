"""Command-line interface: mass, minimize, robin, check-inequalities, verify.

Payloads (JSON reports, CSV rows) go to stdout; diagnostics go to stderr.
Exit codes: 0 success, 2 invalid input, 3 accuracy failure, 4 failed
certification, 5 solver failure.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import ConformalMetric, dumps17, mass_of
from .errors import (AccuracyError, ConvergenceError, DomainError, DomainMismatchError,
                     LinearSolverError, MeshQualityError, StepSizeError)
from .fields import read_field_csv, write_field_csv

log = logging.getLogger("deltamass")

EXIT_OK, EXIT_INPUT, EXIT_ACCURACY, EXIT_CERTIFY, EXIT_SOLVER = 0, 2, 3, 4, 5
GRID_RANGE = (32, 2048)
SURFACES = ("flat-torus", "sphere", "mesh")

DEFAULTS = {
    "surface": "flat-torus",
    "tau_re": 0.0,
    "tau_im": 1.0,
    "n1": 256,
    "n2": None,
    "sphere_ntheta": 64,
    "sphere_nphi": None,
    "file": None,
    "phi": "zero",
    "amplitude": 0.5,
    "seed": 0,
    "out": None,
    "repro": False,
    "vertex": 0,
    "state": None,
    "samples": 100,
    "against": None,
    "solver": {},
}
# keys that do not change results and are left out of the config hash
UNHASHED = ("out", "repro", "config", "against")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    options: dict

    @property
    def hash(self) -> str:
        snap = {k: v for k, v in self.options.items() if k not in UNHASHED}
        snap["command"] = self.command
        # same number formatting as the written files, so a reloaded config hashes equally
        blob = dumps17(_sorted(snap)).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sorted(v) for v in obj]
    return obj


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    reports: list = field(default_factory=list)
    history: str | None = None
    version: str = __version__
    wall_time: float = 0.0


# -- discretization from config ---------------------------------------------------

def _check_grid(n, name):
    lo, hi = GRID_RANGE
    if not lo <= n <= hi:
        raise CLIError(f"{name}={n} outside the supported range {lo}..{hi}", EXIT_INPUT)


def build_base(cfg: RunConfig):
    """Return (discretization, Robin field of the base metric, Robin error bars or None)."""
    surface = cfg.surface
    if surface == "flat-torus":
        from .torus import TorusGrid, TorusModulus, flat_robin
        n1 = int(cfg.n1)
        n2 = int(cfg.n2 or n1)
        _check_grid(n1, "n1")
        _check_grid(n2, "n2")
        mod = TorusModulus(float(cfg.tau_re), float(cfg.tau_im))
        grid = TorusGrid(mod, n1, n2)
        return grid, grid.constant(flat_robin(mod)), None
    if surface == "sphere":
        from .sphere import ROBIN_UNIT_AREA, SphereQuadrature
        nt = int(cfg.sphere_ntheta)
        np_ = int(cfg.sphere_nphi or 2 * nt)
        _check_grid(nt, "sphere-ntheta")
        sq = SphereQuadrature(nt, np_)
        return sq, sq.constant(ROBIN_UNIT_AREA), None
    if surface == "mesh":
        from .mesh import MeshDiscretization, mesh_robin_field, read_off
        if not cfg.file:
            raise CLIError("mesh surfaces need --file MESH.off", EXIT_INPUT)
        path = Path(cfg.file)
        if not path.is_file():
            raise CLIError(f"mesh file {path} not found", EXIT_INPUT)
        disc = MeshDiscretization.from_mesh(read_off(path))
        m, err = mesh_robin_field(disc)
        return disc, m, err
    raise CLIError(f"unknown surface {surface!r}", EXIT_INPUT)


def build_phi(cfg: RunConfig, disc):
    spec = cfg.phi
    if spec == "zero":
        return disc.constant(0.0)
    if spec == "random":
        from .inequalities import TestFunctionSpec, random_psi
        return disc.field(random_psi(disc, TestFunctionSpec(int(cfg.seed), 3,
                                                            float(cfg.amplitude))))
    path = Path(spec)
    if not path.is_file():
        raise CLIError(f"--phi must be 'zero', 'random' or a field CSV (got {spec!r})", EXIT_INPUT)
    f, _ = read_field_csv(path)
    disc.check(f)
    return f


# -- output helpers -----------------------------------------------------------------

class Output:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out) if cfg.out else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.t0 = time.perf_counter()

    def path(self, name):
        if self.dir is None:
            return None
        p = self.dir / name
        self.files.append(p.name)
        return p

    def json(self, name, obj):
        obj = dict(obj, config_hash=self.cfg.hash)
        text = dumps17(obj)
        p = self.path(name)
        if p:
            p.write_text(text)
        return text

    def field(self, name, f, extra=None):
        p = self.path(name)
        if p:
            write_field_csv(p, f, dict(extra or {}, config_hash=self.cfg.hash))

    def record(self, record: RunRecord):
        p = self.path("run.json")
        if p:
            record.config = dict(record.config, command=self.cfg.command)
            record.wall_time = time.perf_counter() - self.t0
            p.write_text(dumps17(asdict(record)))


def _emit(text):
    sys.stdout.write(text)
    sys.stdout.flush()


def _surface_header(cfg: RunConfig) -> dict:
    keys = {"flat-torus": ("tau_re", "tau_im", "n1", "n2"),
            "sphere": ("sphere_ntheta", "sphere_nphi"),
            "mesh": ("file",)}[cfg.surface]
    h = {"surface": cfg.surface}
    h.update({k: cfg.options[k] for k in keys if cfg.options.get(k) is not None})
    return h


def _content_hash(disc, phi) -> str:
    h = hashlib.sha256(disc.id.encode())
    h.update(np.ascontiguousarray(phi.values).tobytes())
    return h.hexdigest()[:16]


# -- commands ---------------------------------------------------------------------

def cmd_mass(cfg: RunConfig) -> int:
    out = Output(cfg)
    disc, m, err = build_base(cfg)
    phi = build_phi(cfg, disc)
    cm = ConformalMetric(disc, phi)
    report = mass_of(m, cm)
    report.provenance = dict(_surface_header(cfg), discretization=disc.id, phi=cfg.phi,
                             input_hash=_content_hash(disc, phi))
    if err is not None:
        # trace error bar from the per-vertex Robin error bars
        report.errors["trace"] = float(disc.integral(err * np.exp(phi.values)))
        report.errors["mass"] = report.errors["trace"] / cm.area_phi
        report.flags["mesh_quality"] = True
        report.provenance["genus"] = disc.mesh.genus
    text = out.json("mass.json", report.as_dict())
    out.record(RunRecord(cfg.options, cfg.hash, [report.as_dict()]))
    _emit(text)
    return EXIT_OK


def cmd_minimize(cfg: RunConfig) -> int:
    from .meanfield import SolverOptions, certified, minimize_mass, write_history
    if cfg.surface == "sphere":
        raise CLIError("mass minimization needs positive genus; on the sphere the round "
                       "metric is the minimizer and no negative mass exists", EXIT_INPUT)
    out = Output(cfg)
    disc, m, _ = build_base(cfg)
    opts = SolverOptions.from_dict(cfg.solver or {})
    if cfg.surface == "mesh" and "tol" not in (cfg.solver or {}):
        opts.tol = 1e-6
    if cfg.surface == "mesh":
        from .mesh import smooth_field
        # vertex-scale noise of the fitted Robin field would dominate Δ log h
        m = disc.field(smooth_field(disc, m.values))
        # the Robin field is only known to its fit accuracy, so its spread is not certified
        robin_tol = math.inf
    else:
        robin_tol = 1e-4
    result = minimize_mass(disc, m, opts, robin_tol=robin_tol)
    report = result.report
    report.provenance.update(_surface_header(cfg))
    report.provenance["input_hash"] = _content_hash(disc, result.metric.phi)
    log.info("concentration max/min e^phi = %.6g", report.errors["concentration"])
    header = dict(_surface_header(cfg))
    out.field("phi.csv", result.metric.phi, header)
    hist = out.path("history.csv")
    if hist:
        write_history(hist, result.state.history, {"config_hash": cfg.hash})
    text = out.json("report.json", report.as_dict())
    out.record(RunRecord(cfg.options, cfg.hash, [report.as_dict()],
                         str(hist) if hist else None))
    _emit(text)
    return EXIT_OK if certified(report) else EXIT_CERTIFY


def cmd_robin(cfg: RunConfig) -> int:
    out = Output(cfg)
    if cfg.surface == "flat-torus":
        from .torus import TorusModulus, eta_robin, ewald_robin, grid_robin
        mod = TorusModulus(float(cfg.tau_re), float(cfg.tau_im))
        est = grid_robin(mod)
        o1 = ewald_robin(mod)
        res = {"ewald": o1, "grid": est.value, "grid_error": est.error,
               "eta": eta_robin(mod), "agreement": abs(o1 - est.value)}
        if abs(o1 - est.value) > 1e-5:
            _emit(out.json("robin.json", res))
            raise CLIError(f"Ewald and grid Robin constants differ by {abs(o1 - est.value):.3g}",
                           EXIT_ACCURACY)
    elif cfg.surface == "sphere":
        from .sphere import ROBIN_UNIT_AREA, robin_from_quadrature, sphere_robin
        res = {"closed_form": ROBIN_UNIT_AREA, "kernel": sphere_robin(),
               "quadrature": robin_from_quadrature(int(cfg.sphere_ntheta))}
    else:
        from .mesh import mesh_robin
        disc, _, _ = _mesh_only(cfg)
        est = mesh_robin(disc, int(cfg.vertex))
        res = {"vertex": int(cfg.vertex), "value": est.value, "error": est.error,
               "points": est.n_points}
    text = out.json("robin.json", res)
    out.record(RunRecord(cfg.options, cfg.hash, [res]))
    _emit(text)
    return EXIT_OK


def _mesh_only(cfg):
    from .mesh import MeshDiscretization, read_off
    if not cfg.file or not Path(cfg.file).is_file():
        raise CLIError("mesh surfaces need an existing --file MESH.off", EXIT_INPUT)
    return MeshDiscretization.from_mesh(read_off(cfg.file)), None, None


def cmd_check_inequalities(cfg: RunConfig) -> int:
    from .inequalities import sample_deficits, summarize
    if not cfg.state or not Path(cfg.state).is_file():
        raise CLIError("--state must name a minimizer field CSV written by 'minimize'", EXIT_INPUT)
    phi, header = read_field_csv(cfg.state)
    opts = dict(cfg.options)
    for k in ("surface", "tau_re", "tau_im", "n1", "n2", "sphere_ntheta", "sphere_nphi", "file"):
        if k in header:
            v = header[k]
            opts[k] = v if k in ("surface", "file") else float(v) if "tau" in k else int(v)
    base_cfg = RunConfig(cfg.command, opts)
    if base_cfg.surface == "mesh":
        disc, _, _ = _mesh_only(base_cfg)
    else:
        disc, _, _ = build_base(base_cfg)
    disc.check(phi)
    metric = ConformalMetric(disc, phi)
    rows = sample_deficits(metric, int(cfg.samples), int(cfg.seed))
    summary = summarize(rows)
    lines = [f"# config_hash={cfg.hash}", "seed,hls_deficit,onofri_deficit"]
    lines += [f"{s},{a:.17g},{b:.17g}" for s, a, b in rows]
    csv_text = "\n".join(lines) + "\n"
    out = Output(cfg)
    p = out.path("deficits.csv")
    if p:
        p.write_text(csv_text)
    out.json("summary.json", summary)
    out.record(RunRecord(cfg.options, cfg.hash, [summary]))
    _emit(csv_text)
    sys.stderr.write(dumps17(summary))
    return EXIT_OK if summary["violations"] == 0 else EXIT_CERTIFY


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import run_suites
    out = Output(cfg)
    matrix = run_suites(cfg)
    if cfg.against:
        matrix.append(check_hashes(cfg.against))
    ok = all(row["passed"] for row in matrix)
    text = out.json("verify.json", {"passed": ok, "suites": matrix})
    out.record(RunRecord(cfg.options, cfg.hash, [{"passed": ok}]))
    _emit(text)
    return EXIT_OK if ok else EXIT_CERTIFY


def check_hashes(directory) -> dict:
    """Confirm every output file in a run directory embeds the hash of its run.json config."""
    d = Path(directory)
    row = {"suite": f"hashes:{d}", "passed": False, "details": {}}
    try:
        rec = json.loads((d / "run.json").read_text())
    except (OSError, ValueError) as exc:
        row["details"]["error"] = f"cannot read run.json: {exc}"
        return row
    cfg = RunConfig(rec["config"].get("command", ""), rec["config"])
    expected = rec["config_hash"]
    row["details"]["recomputed"] = cfg.hash == expected
    bad = []
    for p in sorted(d.iterdir()):
        if p.name == "run.json" or not p.is_file():
            continue
        if f"config_hash={expected}" not in p.read_text() and f'"{expected}"' not in p.read_text():
            bad.append(p.name)
    row["details"]["mismatched_files"] = bad
    row["passed"] = row["details"]["recomputed"] and not bad
    return row


COMMANDS = {"mass": cmd_mass, "minimize": cmd_minimize, "robin": cmd_robin,
            "check-inequalities": cmd_check_inequalities, "verify": cmd_verify}


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--out", metavar="DIR", help="directory for report, field and history files")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--repro", action="store_true",
                        help="reproducibility mode: single-threaded linear algebra")
    common.add_argument("--config", metavar="FILE", help="JSON file of option values; flags win")
    common.add_argument("-v", "--verbose", action="count", default=0)

    geom = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    geom.add_argument("surface", nargs="?", choices=SURFACES)
    geom.add_argument("--tau-re", type=float, dest="tau_re")
    geom.add_argument("--tau-im", type=float, dest="tau_im")
    geom.add_argument("--n1", type=int)
    geom.add_argument("--n2", type=int)
    geom.add_argument("--sphere-ntheta", type=int, dest="sphere_ntheta")
    geom.add_argument("--sphere-nphi", type=int, dest="sphere_nphi")
    geom.add_argument("--file", help="triangle mesh in OFF format")

    p = argparse.ArgumentParser(prog="deltamass",
                                description="Robin constants, trace of the inverse Laplacian and "
                                            "the Δ-mass of surfaces.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mass", parents=[common, geom], help="mass of a (conformally changed) metric")
    s.add_argument("--phi", help="'zero', 'random' or a field CSV of the conformal factor")
    s.add_argument("--amplitude", type=float, help="sup-norm of a random conformal factor")

    s = sub.add_parser("minimize", parents=[common, geom],
                       help="minimize the mass in the conformal class")
    s.add_argument("--tol", type=float, help="mean field residual tolerance")
    s.add_argument("--max-iter", type=int, dest="max_iter")

    s = sub.add_parser("robin", parents=[common, geom], help="Robin constant of the base metric")
    s.add_argument("--vertex", type=int, help="mesh vertex for the Robin fit")

    s = sub.add_parser("check-inequalities", parents=[common],
                       help="log-HLS and Onofri deficits at a stored minimizer")
    s.add_argument("--state", help="phi.csv written by 'minimize'")
    s.add_argument("--samples", type=int)

    s = sub.add_parser("verify", parents=[common],
                       help="run the invariant suites and print a pass/fail matrix")
    s.add_argument("--file", help="extra OFF mesh to validate")
    s.add_argument("--n1", type=int, help="grid size for the torus suites (default 128)")
    s.add_argument("--against", metavar="DIR", help="cross-check config hashes of a run directory")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    ns = vars(args).copy()
    command = ns.pop("command")
    ns.pop("verbose", None)
    opts = dict(DEFAULTS)
    if command == "verify":
        opts["n1"] = 128
    if "config" in ns:
        try:
            loaded = json.loads(Path(ns["config"]).read_text())
        except (OSError, ValueError) as exc:
            raise CLIError(f"cannot read config {ns['config']}: {exc}", EXIT_INPUT) from None
        if not isinstance(loaded, dict):
            raise CLIError("config file must hold a JSON object", EXIT_INPUT)
        unknown = set(loaded) - set(DEFAULTS) - {"tol", "max_iter", "starts",
                                                  "precondition_delta"}
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}", EXIT_INPUT)
        solver = dict(loaded.pop("solver", {}))
        for k in ("tol", "max_iter", "starts", "precondition_delta"):
            if k in loaded:
                solver[k] = loaded.pop(k)
        opts.update(loaded)
        opts["solver"] = solver
    for k in ("tol", "max_iter"):
        v = ns.pop(k, None)
        if v is not None:
            opts["solver"] = dict(opts["solver"], **{k: v})
    opts.update({k: v for k, v in ns.items() if v is not None})
    opts.pop("config", None)
    if opts.get("surface") not in SURFACES:
        raise CLIError(f"unknown surface {opts.get('surface')!r}", EXIT_INPUT)
    return RunConfig(command, opts)


def _threads(repro: bool):
    if not repro:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=1)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        with _threads(cfg.repro):
            code = COMMANDS[cfg.command](cfg)
    except CLIError as exc:
        log.error("%s", exc)
        return exc.code
    except (DomainError, DomainMismatchError, MeshQualityError, ValueError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT
    except AccuracyError as exc:
        log.error("accuracy failure: %s %s", exc, getattr(exc, "estimates", ""))
        return EXIT_ACCURACY
    except (ConvergenceError, StepSizeError, LinearSolverError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    log.info("wall time %.3f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
