"""Command line entry point: ``translator-lab <subcommand> [options]``.

Every subcommand writes its artifacts under ``--out``.  ``report.json`` and
the CSV/field files depend only on the effective configuration (written
to ``config.json``); wall-clock data goes to ``metadata.json``.

Exit codes: 0 success with all verdicts true, 1 a verdict false, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, kernels
from ._accel import set_threads_from_env
from .exact import bowl, grim_reaper, plane, tilted_grim_reaper
from .experiments import NOT_APPLICABLE, asymptote_check, blowup_scan, classification_gallery
from .geometry import compute_geometry, geometry_csv, translator_residual
from .grid import DomainError, FieldFormatError, ScalarField, atomic_write_text, make_domain, read_field, write_field
from .metric import (ConformalMetric, DistanceError, curvature_scan, graph_radius_bound,
                     sandwich_check, scan_csv, sectional_curvature)
from .solver import SolverConfig, evolve, newton_solve
from .stability import bump, stability_report

logger = logging.getLogger("translator_lab")

SUBCOMMANDS = ("solve", "exact", "evolve", "stability", "curvature-scan", "metric-check",
               "gallery", "blowup-scan", "asymptote", "selftest")

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- configuration schema -------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_NODES = {"type": "integer", "minimum": 3}

_DOMAIN = {
    "type": "object",
    "additionalProperties": False,
    "required": ["shape"],
    "properties": {
        "shape": {"enum": ["RECT", "SLAB", "DISK", "ANNULUS"]},
        "x": _PAIR, "y": _PAIR, "center": _PAIR,
        "period": _POS, "radius": _POS, "r_in": {"type": "number", "minimum": 0}, "r_out": _POS,
        "nx": _NODES, "ny": _NODES, "h": _POS,
    },
}

_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "newton_tol": _POS, "max_newton": {"type": "integer", "minimum": 1},
        "damping": _POS, "min_step": _POS, "linear_tol": _POS, "continuation": {"type": "boolean"},
        "evolve_dt_safety": _POS, "continuation_tol": _POS,
        "continuation_max_steps": {"type": "integer", "minimum": 0},
        "scheme": {"enum": ["flux", "variational"]},
    },
}

_COMMON = {
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "C": _NUM,
    "tol": _POS,
    "nx": _NODES,
    "ny": _NODES,
}

_SOURCE = {
    "kind": {"enum": ["grim", "tilted", "bowl", "plane"]},
    "b": _NUM,
    "field": {"type": "string"},
    "domain": _DOMAIN,
    "solver": _SOLVER,
}

_SPECIFIC = {
    "solve": {**_SOURCE},
    "exact": {**_SOURCE},
    "evolve": {**_SOURCE, "T": _POS, "dt_safety": _POS, "solve_first": {"type": "boolean"}},
    "stability": {**_SOURCE, "n_random": {"type": "integer", "minimum": 0}, "translator_tol": _POS,
                  "polish": {"type": "boolean"},
                  "eta": {"type": "object", "additionalProperties": False, "required": ["center", "radius"],
                          "properties": {"center": _PAIR, "radius": _POS}}},
    "curvature-scan": {**_SOURCE, "point": _PAIR, "r0": _POS,
                       "sigmas": {"type": "array", "items": _POS, "minItems": 1}, "theta": _POS},
    "metric-check": {**_SOURCE, "n_points": {"type": "integer", "minimum": 1},
                     "n_pairs": {"type": "integer", "minimum": 1}, "slack": {"type": "number", "minimum": 0}},
    "gallery": {"resolutions": {"type": "array", "items": _POS, "minItems": 1}, "b": _NUM,
                "wall_gap": _POS, "solver": _SOLVER},
    "blowup-scan": {"shape": {"enum": ["SLAB", "DISK"]},
                    "M_sequence": {"type": "array", "items": _NUM, "minItems": 1},
                    "h": _POS, "rho": _POS, "r_in": _POS, "width": _POS, "period": _POS,
                    "H_tol": _POS, "solver": _SOLVER},
    "asymptote": {**_SOURCE, "wall": _NUM, "width": _POS,
                  "offsets": {"type": "array", "items": _POS, "minItems": 1}},
    "selftest": {},
}


def config_schema(subcommand: str) -> dict:
    """JSON schema of the config file accepted by ``subcommand``."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"translator-lab {subcommand} config",
        "type": "object",
        "additionalProperties": False,
        "properties": {**_COMMON, **_SPECIFIC[subcommand]},
    }


def load_config(subcommand: str, path: str | None, overrides: dict) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    cfg.setdefault("seed", 42)
    try:
        jsonschema.validate(cfg, config_schema(subcommand))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    if "field" in cfg and "kind" in cfg:
        raise ConfigError("give either 'field' or 'kind', not both")
    return cfg


# -- helpers -----------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _solution(cfg: dict, default: str = "grim"):
    C = float(cfg.get("C", 1.0))
    kind = cfg.get("kind", default)
    if kind == "grim":
        return kind, grim_reaper(C)
    if kind == "tilted":
        return kind, tilted_grim_reaper(float(cfg.get("b", 1.0)), C)
    if kind == "bowl":
        return kind, bowl(C, r_max=4.0)
    return kind, plane()


def _domain(cfg: dict, kind: str, sol):
    nx, ny = cfg.get("nx"), cfg.get("ny")
    dom = dict(cfg.get("domain") or {})
    if dom:
        shape = dom.pop("shape")
        if nx is not None:
            dom["nx"] = nx
        if ny is not None:
            dom["ny"] = ny
        return make_domain(shape, **dom)
    if kind == "grim":
        a = sol.half_width - 0.2 / sol.C
        return make_domain("SLAB", x=(-a, a), period=1.0, nx=nx or 89, ny=ny or 32)
    if kind == "tilted":
        a = sol.half_width - 0.2 / sol.C
        return make_domain("RECT", x=(-a, a), y=(0.0, 1.0), nx=nx or 129, ny=ny or 33)
    if kind == "bowl":
        return make_domain("RECT", x=(-1.0, 1.0), y=(-1.0, 1.0), nx=nx or 65, ny=ny or 65)
    return make_domain("RECT", x=(0.0, 1.0), y=(0.0, 1.0), nx=nx or 33, ny=ny or 33)


def _input_field(cfg: dict, default: str = "grim"):
    """(field, exact solution or None) from ``field`` or ``kind`` + ``domain``."""
    if "field" in cfg:
        try:
            return read_field(cfg["field"]), None
        except OSError as exc:
            raise ConfigError(f"cannot read field {cfg['field']}: {exc}") from None
    kind, sol = _solution(cfg, default)
    d = _domain(cfg, kind, sol)
    return sol.sample(d), sol


def _solver_config(cfg: dict, **extra) -> SolverConfig:
    opts = dict(cfg.get("solver") or {})
    opts.update(extra)
    return SolverConfig(C=float(cfg.get("C", 1.0)), **opts)


def _residual_csv(f: ScalarField, C: float) -> str:
    d = f.domain
    R = translator_residual(f, C).values
    X, Y = d.coords()
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["i", "j", "x", "y", "R"])
    g = lambda v: format(float(v), ".17g")  # noqa: E731
    for i, j in zip(*np.nonzero(d.interior)):
        wr.writerow([i, j, g(X[i, j]), g(Y[i, j]), g(R[i, j])])
    return buf.getvalue()


# -- subcommands ---------------------------------------------------------------------
# Each returns (report dict, verdict, {filename: text or ScalarField}).


def cmd_exact(cfg):
    C = float(cfg.get("C", 1.0))
    f, sol = _input_field(cfg)
    R = translator_residual(f, C).values
    report = {"kind": sol.kind, "C": C, "nx": f.domain.nx, "ny": f.domain.ny,
              "h": f.domain.h, "residual_sup": float(np.max(np.abs(R)))}
    return report, True, {"exact.field": f, "residual.csv": _residual_csv(f, C)}


def cmd_solve(cfg):
    C = float(cfg.get("C", 1.0))
    f, sol = _input_field(cfg)
    extra = {"newton_tol": cfg["tol"]} if "tol" in cfg else {}
    rep = newton_solve(f.domain, f, _solver_config(cfg, **extra))
    report = {"solve": rep.to_json(), "C": C}
    if sol is not None:
        d = f.domain
        report["max_error"] = float(np.max(np.abs(rep.u.values - f.values)[d.interior]))
    hist = "iteration,residual\n" + "".join(f"{k},{r:.17g}\n" for k, r in enumerate(rep.residual_history))
    files = {"solution.field": rep.u, "residual_history.csv": hist,
             "residual.csv": _residual_csv(rep.u, C),
             "geometry.csv": geometry_csv(compute_geometry(rep.u))}
    return report, rep.converged, files


def cmd_evolve(cfg):
    C = float(cfg.get("C", 1.0))
    T = float(cfg.get("T", 0.5))
    tol = float(cfg.get("tol", 1e-2))
    f, sol = _input_field(cfg)
    scfg = _solver_config(cfg)
    u0 = f
    solved = None
    if cfg.get("solve_first", True):
        rep = newton_solve(f.domain, f, scfg)
        solved = rep.to_json()
        if not rep.converged:
            return {"solve": solved, "verdict": False}, False, {}
        u0 = rep.u
    uT = evolve(u0, T, C, dt_safety=float(cfg.get("dt_safety", scfg.evolve_dt_safety)))
    d = f.domain
    drift = float(np.max(np.abs(uT.values - u0.values - C * T)[d.active]))
    report = {"T": T, "C": C, "drift_sup": drift, "tol": tol, "solve": solved,
              "verdict": drift <= tol}
    return report, drift <= tol, {"initial.field": u0, "evolved.field": uT}


def cmd_stability(cfg):
    C = float(cfg.get("C", 1.0))
    f, _ = _input_field(cfg)
    eta = None
    if "eta" in cfg:
        eta = bump(f.domain, tuple(cfg["eta"]["center"]), float(cfg["eta"]["radius"]))
    rep = stability_report(f, C, eta, n_random=int(cfg.get("n_random", 20)), seed=int(cfg["seed"]),
                           eig_tol=float(cfg.get("tol", 1e-6)),
                           translator_tol=float(cfg.get("translator_tol", 1e-2)),
                           polish=bool(cfg.get("polish", True)))
    report = rep.to_json()
    if not rep.translator:
        report["note"] = "first variation is not small: the input is not a translator"
    rows = "label,Q\n" + "".join(f"{lab},{q:.17g}\n" for lab, q in rep.Q_values)
    return report, rep.verdict, {"quadratic_forms.csv": rows}


def _center_node(f: ScalarField):
    d = f.domain
    X, Y = d.coords()
    cx = 0.5 * (d.x[0] + d.x[-1])
    cy = 0.5 * (d.y[0] + d.y[-1])
    score = np.where(d.interior, np.hypot(X - cx, Y - cy), np.inf)
    return tuple(int(v) for v in np.unravel_index(np.argmin(score), score.shape))


def cmd_curvature_scan(cfg):
    f, _ = _input_field(cfg)
    geom = compute_geometry(f)
    p = tuple(cfg["point"]) if "point" in cfg else _center_node(f)
    r0 = float(cfg.get("r0", 0.5))
    sigmas = cfg.get("sigmas", [r0 / 8, r0 / 4, r0 / 2, 3 * r0 / 4, r0])
    scan = curvature_scan(geom, p, r0, sigmas)
    rho = graph_radius_bound(geom, p, float(cfg.get("theta", 0.5)))
    report = {"point": list(p), "r0": r0, "C_emp": scan["C_emp"],
              "rows": [list(r) for r in scan["rows"]], "graph_radius": rho}
    return report, math.isfinite(scan["C_emp"]), {"scan.csv": scan_csv(scan)}


def cmd_metric_check(cfg):
    tol = float(cfg.get("tol", 1e-6))
    rng = np.random.default_rng(int(cfg["seed"]))
    rows = []
    ok = True
    for _ in range(int(cfg.get("n_points", 10))):
        x = rng.uniform(-2.0, 2.0, 3)
        k12 = sectional_curvature(x, (1, 2), ConformalMetric())
        k13 = sectional_curvature(x, (1, 3), ConformalMetric())
        k23 = sectional_curvature(x, (2, 3), ConformalMetric())
        err = abs(k12 + 0.25 * math.exp(-x[2]))
        good = err <= tol and abs(k13) <= tol and abs(k23) <= tol
        ok &= good
        rows.append({"x1": x[0], "x2": x[1], "x3": x[2], "K12": k12, "K13": k13, "K23": k23,
                     "K12_error": err, "ok": good})
    f, _ = _input_field(cfg)
    sw = sandwich_check(compute_geometry(f), int(cfg.get("n_pairs", 100)), int(cfg["seed"]),
                        float(cfg.get("slack", 0.02)))
    ok &= sw["passed"]
    pairs = sw["rows"]
    report = {"tol": tol, "curvature": rows,
              "sandwich": {k: sw[k] for k in ("min_ratio", "max_ratio", "lower", "upper", "passed")},
              "verdict": bool(ok)}
    return report, bool(ok), {"curvature.csv": _rows_csv(rows), "sandwich.csv": _rows_csv(pairs)}


def _rows_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        wr = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _experiment(rep, extra_tables=True):
    files = {"metrics.csv": rep.csv()}
    if extra_tables:
        for name in rep.tables:
            files[f"{name}.csv"] = rep.csv(table=name)
    # "not applicable" is not a failure; "inconclusive" is
    return rep.to_json(), rep.verdict is True or rep.verdict == NOT_APPLICABLE, files


def cmd_gallery(cfg):
    kw = {}
    if "resolutions" in cfg:
        kw["resolutions"] = tuple(cfg["resolutions"])
    for k in ("b", "wall_gap"):
        if k in cfg:
            kw[k] = float(cfg[k])
    rep = classification_gallery(C=float(cfg.get("C", 1.0)), config=_solver_config(cfg), **kw)
    return _experiment(rep)


def cmd_blowup_scan(cfg):
    kw = {k: float(cfg[k]) for k in ("h", "rho", "r_in", "width", "period", "H_tol") if k in cfg}
    scfg = _solver_config(cfg, **({} if "continuation_max_steps" in (cfg.get("solver") or {})
                                  else {"continuation_max_steps": 20_000}))
    rep = blowup_scan(cfg.get("shape", "SLAB"), cfg.get("M_sequence", [1, 2, 4, 8]),
                      config=scfg, **kw)
    return _experiment(rep)


def cmd_asymptote(cfg):
    offsets = cfg.get("offsets", [0.05, 0.1, 0.2, 0.4])
    if "field" in cfg:
        f, _ = _input_field(cfg)
        if "wall" not in cfg or "width" not in cfg:
            raise ConfigError("a field input needs 'wall' and 'width'")
        rep = asymptote_check(f, float(cfg["wall"]), offsets, width=float(cfg["width"]))
    else:
        _, sol = _solution(cfg)
        rep = asymptote_check(sol, cfg.get("wall"), offsets)
    return _experiment(rep)


def cmd_selftest(cfg):
    from .selftest import run_selftest

    results = run_selftest(int(cfg["seed"]))
    rows = [{"check": name, "passed": ok, "detail": detail} for name, ok, detail in results]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}: {r['detail']}")
    ok = all(r["passed"] for r in rows)
    return {"checks": rows, "verdict": ok}, ok, {"selftest.csv": _rows_csv(rows)}


COMMANDS = {
    "solve": cmd_solve, "exact": cmd_exact, "evolve": cmd_evolve, "stability": cmd_stability,
    "curvature-scan": cmd_curvature_scan, "metric-check": cmd_metric_check,
    "gallery": cmd_gallery, "blowup-scan": cmd_blowup_scan, "asymptote": cmd_asymptote,
    "selftest": cmd_selftest,
}


# -- driver ---------------------------------------------------------------------------

HELP = {
    "solve": "Newton solve of the Dirichlet problem",
    "exact": "sample a closed-form translator and its residual",
    "evolve": "run the graphical flow and measure drift from translation",
    "stability": "quadratic forms, kernel checks and top eigenvalue of L",
    "curvature-scan": "sigma^2 sup |A|^2 over shrinking intrinsic balls",
    "metric-check": "conformal curvature and the distance sandwich",
    "gallery": "residual orders and wall tilts of the known translators",
    "blowup-scan": "Dirichlet solves with steepening boundary data",
    "asymptote": "tilt along lines parallel to a slab wall",
    "selftest": "quick internal consistency checks",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default="translator-lab-out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (default 42)")
    common.add_argument("--nx", type=int, help="nodes in x")
    common.add_argument("--ny", type=int, help="nodes in y")
    common.add_argument("--c-speed", type=float, dest="C", help="translation speed C")
    common.add_argument("--tol", type=float, help="main tolerance of the subcommand")
    common.add_argument("--print-schema", action="store_true", help="print the config schema and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="translator-lab",
                                     description="Numerical laboratory for translating graphs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        if name in ("solve", "exact", "evolve", "stability", "curvature-scan", "metric-check", "asymptote"):
            p.add_argument("--kind", choices=["grim", "tilted", "bowl", "plane"])
            p.add_argument("--field", help="input field file")
    return parser


def _write_outputs(out: Path, files: dict) -> None:
    for name, content in files.items():
        path = out / name
        if isinstance(content, ScalarField):
            write_field(content, path)
        else:
            atomic_write_text(path, content)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    name = args.subcommand
    if args.print_schema:
        print(json.dumps(config_schema(name), indent=2, sort_keys=True))
        return EXIT_OK
    overrides = {"seed": args.seed, "nx": args.nx, "ny": args.ny, "C": args.C, "tol": args.tol,
                 "kind": getattr(args, "kind", None), "field": getattr(args, "field", None)}
    threads = set_threads_from_env()
    started = time.time()
    out = Path(args.out)
    try:
        cfg = load_config(name, args.config, overrides)
        report, verdict, files = COMMANDS[name](cfg)
    except (ConfigError, DomainError, FieldFormatError, DistanceError, ValueError) as exc:
        print(f"translator-lab {name}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = {"subcommand": name, "passed": bool(verdict), "verdict": report.get("verdict", bool(verdict)),
              **{k: v for k, v in report.items() if k != "verdict"}}
    files = dict(files)
    files["report.json"] = _dump(report)
    files["config.json"] = _dump(cfg)
    _write_outputs(out, files)
    meta = {
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "version": __version__,
        "python": platform.python_version(),
        "numba": kernels.USE_NUMBA,
        "threads": threads,
        "pid": os.getpid(),
    }
    atomic_write_text(out / "metadata.json", _dump(meta))
    print(f"{name}: verdict {_cell(report['verdict'])}; outputs in {out}")
    return EXIT_OK if verdict else EXIT_VERDICT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
