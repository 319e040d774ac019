"""Command line entry point: ``ymh-lab {classify,flow,stability,verify,deform}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import identities, io, presets
from .curvature import classify
from .fields import DeformationPair, EndForm, HitchinPairState
from .flow import StepFailure, run_flow
from .grid import TorusGrid
from .stability import (contraction_deformation, default_tolerance, solve_deformation_series,
                        stability_classify, weak_test_deformation)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    """The scenario file or a command line value is invalid."""


# --- scenario parsing -------------------------------------------------------------------

def _complex(v):
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    if isinstance(v, (int, float)):
        return complex(v)
    raise ConfigError(f"cannot read {v!r} as a complex number")


def _matrix(v, rank):
    try:
        m = np.array([[_complex(x) for x in row] for row in v], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad matrix {v!r}: {exc}") from exc
    if m.shape != (rank, rank):
        raise ConfigError(f"matrix has shape {m.shape}, expected {(rank, rank)}")
    return m


def load_scenario(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            scenario = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path} is not valid JSON: {exc}") from exc
    if not isinstance(scenario, dict):
        raise ConfigError("scenario must be a JSON object")
    return scenario


def _section(scenario, name, required=True):
    sec = scenario.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"scenario is missing the {name!r} section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return sec


def _base_dir(scenario):
    return Path(scenario.get("_base_dir", "."))


def build_grid(scenario) -> TorusGrid:
    g = _section(scenario, "grid")
    try:
        return TorusGrid(int(g.get("n", 1)), int(g["points_per_axis"]), float(g.get("side_length", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"grid is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def build_rank(scenario) -> int:
    r = _section(scenario, "bundle", required=False).get("rank", 2)
    if not isinstance(r, int) or r < 1:
        raise ConfigError(f"rank must be a positive integer, got {r!r}")
    return r


def build_pair(scenario) -> HitchinPairState:
    grid, rank = build_grid(scenario), build_rank(scenario)
    p = _section(scenario, "pair")
    name = p.get("preset")
    try:
        if name == "trivial":
            return presets.trivial(grid, rank)
        if name == "nilpotent":
            if rank != 2:
                raise ConfigError("the nilpotent preset has rank 2")
            return presets.nilpotent(grid, float(p.get("c", 1.0)))
        if name == "diagonal_higgs":
            coeffs = [_complex(c) for c in p.get("coeffs", [1.0, -1.0])]
            if len(coeffs) != rank:
                raise ConfigError(f"diagonal_higgs needs {rank} coefficients")
            return presets.diagonal_higgs(grid, coeffs)
        if name == "random":
            return presets.random_pair(grid, rank, int(p.get("seed", 0)), int(p.get("k_max", 2)),
                                       float(p.get("amplitude", 0.5)))
        if name == "exact_hitchin":
            if rank != 2:
                raise ConfigError("the exact_hitchin preset has rank 2")
            return presets.exact_hitchin(grid, int(p.get("seed", 0)), int(p.get("k_max", 2)),
                                         float(p.get("amplitude", 0.3)))
        if name == "gauge_hitchin":
            return presets.gauge_hitchin(grid, int(p.get("seed", 0)), int(p.get("k_max", 1)),
                                         float(p.get("amplitude", 0.1)), rank)
        if name == "from_files":
            base = _base_dir(scenario)
            a = io.load_field(base / p["a_path"], grid, rank)
            phi = io.load_field(base / p["phi_path"], grid, rank)
            try:
                return HitchinPairState(a, phi)
            except ValueError as exc:
                raise io.FieldFileError(str(exc)) from exc
    except KeyError as exc:
        raise ConfigError(f"pair preset {name!r} is missing {exc}") from exc
    except (TypeError,) as exc:
        raise ConfigError(f"bad pair parameters: {exc}") from exc
    raise ConfigError(f"unknown pair preset {name!r}")


def build_deformation(scenario, base: HitchinPairState) -> DeformationPair:
    grid, rank = base.grid, base.rank
    d = _section(scenario, "deformation")
    name = d.get("preset")
    try:
        if name == "constant":
            return presets.constant_deformation(grid, _matrix(d["M"], rank), _matrix(d["P"], rank))
        if name == "plane_wave":
            M = _matrix(d["M"], rank) if "M" in d else presets.NILPOTENT
            return presets.plane_wave_deformation(grid, M, int(d.get("k", 1)))
        if name == "random":
            return presets.random_deformation(grid, rank, int(d.get("seed", 0)),
                                              int(d.get("k_max", 2)), float(d.get("amplitude", 0.3)))
        if name == "contraction":
            Pi = EndForm.constant(grid, (1, 1), {((a,), (b,)): _matrix(d["Pi"], rank)
                                                 if a == b else np.zeros((rank, rank))
                                                 for a in range(grid.n) for b in range(grid.n)})
            v = [_complex(x) for x in d.get("v", [1.0] + [0.0] * (grid.n - 1))]
            return contraction_deformation(base, v, Pi)[0]
        if name == "weak_test":
            v01 = [_complex(x) for x in d.get("v01", [1.0] + [0.0] * (grid.n - 1))]
            return weak_test_deformation(base, v01, _complex(d.get("c", 1.0)))[0]
        if name == "from_files":
            b = _base_dir(scenario)
            al = io.load_field(b / d["alpha_path"], grid, rank)
            be = io.load_field(b / d["beta_path"], grid, rank)
            try:
                return DeformationPair(al, be)
            except ValueError as exc:
                raise io.FieldFileError(str(exc)) from exc
    except KeyError as exc:
        raise ConfigError(f"deformation preset {name!r} is missing {exc}") from exc
    raise ConfigError(f"unknown deformation preset {name!r}")


def _tolerance(scenario, key, default):
    tol = _section(scenario, "tolerances", required=False).get(key, default)
    if tol is None:
        return None
    try:
        tol = float(tol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"tolerance {key!r} must be a number") from exc
    if not tol > 0:
        raise ConfigError(f"tolerance {key!r} must be positive")
    return tol


# --- output -------------------------------------------------------------------------------

def _out_path(args, scenario, suffix):
    out = args.out or _section(scenario, "output", required=False).get("path")
    return Path(out) if out else None


def _emit(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _field_format(scenario):
    fmt = _section(scenario, "output", required=False).get("format", "text")
    if fmt not in ("text", "binary"):
        raise ConfigError(f"output format must be text or binary, got {fmt!r}")
    return fmt


def _save_fields(path: Path, fields: dict, fmt: str, digest: str):
    ext = ".ymh" if fmt == "binary" else ".json"
    meta = {"scenario_hash": digest, "version": io.__version__}
    for label, psi in fields.items():
        io.save_field(psi, path.with_name(f"{path.stem}_{label}{ext}"), fmt, meta)


# --- commands ---------------------------------------------------------------------------

def cmd_classify(args, scenario, digest):
    pair = build_pair(scenario)
    report = classify(pair, _tolerance(scenario, "classify", 1e-8))
    _emit(_out_path(args, scenario, ".json"), io.report_text("classify", report.to_dict(), digest))
    return EXIT_OK


def _parse_dt(value):
    if value is None or value == "auto":
        return "auto"
    try:
        dt = float(value)
    except ValueError as exc:
        raise ConfigError(f"--dt must be a number or 'auto', got {value!r}") from exc
    if not dt > 0:
        raise ConfigError("--dt must be positive")
    return dt


def cmd_flow(args, scenario, digest):
    pair = build_pair(scenario)
    fsec = _section(scenario, "flow", required=False)
    t_end = args.t_end if args.t_end is not None else fsec.get("t_end")
    if t_end is None or not float(t_end) > 0:
        raise ConfigError("flow needs a positive --t-end")
    dt = _parse_dt(args.dt if args.dt is not None else fsec.get("dt", "auto"))
    out = _out_path(args, scenario, ".csv")
    try:
        traj = run_flow(pair, float(t_end), dt)
    except StepFailure as exc:
        print(f"flow failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    columns = (("t", "ymh", "holomorphy", "integrability", "k_herm", "dt")
               + tuple(f"ymh_{k}" for k in traj.functional_names))
    _emit(out, io.csv_text(columns, traj.rows(), digest))
    if out is not None:
        _save_fields(out, {"a": traj.final_state.a, "phi": traj.final_state.phi},
                     _field_format(scenario), digest)
    return EXIT_OK


def cmd_stability(args, scenario, digest):
    base = build_pair(scenario)
    deformation = build_deformation(scenario, base)
    report = stability_classify(base, deformation, _tolerance(scenario, "stability", None))
    _emit(_out_path(args, scenario, ".json"), io.report_text("stability", report.to_dict(), digest))
    return EXIT_OK


def _parse_resolutions(text):
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--resolutions must be a comma-separated list of integers: {text!r}") from exc
    if not values:
        raise ConfigError("--resolutions is empty")
    for v in values:
        if v < 4 or v % 2:
            raise ConfigError(f"resolution {v} must be an even integer >= 4")
    return values


def cmd_verify(args, scenario, digest):
    if args.suite is not None and not args.suite.strip():
        raise ConfigError("--suite needs a name")
    suite = args.suite or "all"
    if suite != "all" and suite not in identities.SUITE:
        raise ConfigError(f"unknown suite {suite!r}; choose all or one of {', '.join(identities.SUITE)}")
    resolutions = _parse_resolutions(args.resolutions or "16,32,64")
    reports = identities.run_suite(suite, resolutions)
    rows = [row + (rep.exactness_class,) for rep in reports for row in rep.rows()]
    out = _out_path(args, scenario, ".csv")
    _emit(out, io.csv_text(("identity", "resolution", "residual", "rate", "class"), rows, digest))
    if out is not None:
        summary = {rep.identity_name: rep.to_dict() for rep in reports}
        _emit(out.with_name(out.stem + "_summary.json"), io.report_text("verify", summary, digest))
    return EXIT_OK


def _slope(ts, values):
    ts, values = np.asarray(ts, float), np.asarray(values, float)
    if len(ts) < 2 or np.any(values <= 0):
        return None
    return float(np.polyfit(np.log(ts), np.log(values), 1)[0])


def cmd_deform(args, scenario, digest):
    base = build_pair(scenario)
    def0 = build_deformation(scenario, base)
    dsec = _section(scenario, "deform", required=False)
    order = args.order if args.order is not None else dsec.get("order", 3)
    if not isinstance(order, int) or order < 0:
        raise ConfigError("--order must be a non-negative integer")
    ts = [float(t) for t in dsec.get("t", [0.05, 0.1, 0.2])]
    tol = _tolerance(scenario, "solver", 1e-8)
    series = solve_deformation_series(base, def0, order, tolerance=tol)
    table = []
    for K in range(order + 1):
        trunc = series.truncated(K)
        res = [trunc.residuals(t) for t in ts]
        total = [float(np.sqrt(sum(v ** 2 for v in r.values()))) for r in res]
        table.append({"order": K, "t": ts, "residuals": res, "total": total,
                      "slope": _slope(ts, total)})
    body = {
        "order": order,
        "harmonic_norms": series.harmonic_norms,
        "obstructed": series.obstructed,
        "solver": series.solver,
        "coefficient_norms": [{"alpha": float(np.sqrt(_nsq(a))), "beta": float(np.sqrt(_nsq(b)))}
                              for a, b in zip(series.alphas, series.betas)],
        "residual_table": table,
    }
    out = _out_path(args, scenario, ".json")
    _emit(out, io.report_text("deform", body, digest))
    if out is not None:
        fields = {}
        for k, (a, b) in enumerate(zip(series.alphas, series.betas)):
            fields[f"alpha{k}"] = a
            fields[f"beta{k}"] = b
        _save_fields(out, fields, _field_format(scenario), digest)
    if not all(s["converged"] for s in series.solver):
        print("deformation series: Green solver did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _nsq(psi):
    from .grid import norm_sq

    return norm_sq(psi)


COMMANDS = {"classify": cmd_classify, "flow": cmd_flow, "stability": cmd_stability,
            "verify": cmd_verify, "deform": cmd_deform}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ymh-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {io.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario file (JSON)")
        p.add_argument("--out", help="output path")
        if name == "flow":
            p.add_argument("--t-end", type=float, dest="t_end")
            p.add_argument("--dt", help="step size or 'auto'")
        if name == "deform":
            p.add_argument("--order", type=int)
        if name == "verify":
            p.add_argument("--resolutions", help="comma-separated grid sizes")
            p.add_argument("--suite", help="identity name or 'all'")
    return parser


def _thread_limit():
    raw = os.environ.get("YMH_THREADS")
    if raw is None:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"YMH_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("YMH_THREADS must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            scenario = load_scenario(args.config)
            digest = io.scenario_hash(scenario)
            scenario["_base_dir"] = str(Path(args.config).resolve().parent)
        elif args.command == "verify":
            scenario = {}
            digest = io.scenario_hash({"suite": args.suite or "all",
                                       "resolutions": args.resolutions or "16,32,64"})
        else:
            raise ConfigError(f"{args.command} needs --config")
        with _thread_limit():
            return COMMANDS[args.command](args, scenario, digest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except io.FieldFileError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
