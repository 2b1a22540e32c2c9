"""Command-line front end.

``fkeit <subcommand> --config PATH [--seed N] [--workers N] [--out DIR]``

Each run writes ``<subcommand>.csv`` and ``manifest.json`` into the output
directory.  Exit codes: 0 success, 1 configuration error, 2 simulation
error, 3 acceptance failure (``validate`` only).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, FKEITError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIMULATION = 2
EXIT_ACCEPTANCE = 3

SUBCOMMANDS = {
    "solve-dirichlet": "dirichlet",
    "solve-continuum": "continuum",
    "solve-cem": "cem",
    "estimate-dtn": "dtn",
    "boundary-trace": "trace",
    "jump-kernel": "jump",
    "calibrate": "calibrate",
    "oracle": "oracle",
    "validate": None,
}

MANIFEST_FIELDS = (
    "subcommand", "config", "config_path", "seed", "workers", "dt", "versions", "started_utc", "wall_seconds",
    "outputs", "exit_code", "message",
)

PROBE_COLUMNS = ["probe_x", "probe_y", "mean", "stderr", "n_paths", "seed", "dt"]


def shipped_config(name: str) -> Path:
    """Path of a reference configuration bundled with the package (``.toml`` optional)."""
    if not name.endswith(".toml"):
        name += ".toml"
    return Path(str(resources.files("fkeit") / "configs" / name))


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"fkeit": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _f(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _probe_rows(probes, results, params, extra=()):
    rows = []
    for p, r in zip(probes, results):
        row = [_f(p[0]), _f(p[1]), _f(r.mean), _f(r.stderr), r.n_paths, params.seed, _f(params.dt)]
        rows.append(row + [_f(getattr(r, k)) for k in extra])
    return rows


# --------------------------------------------------------------------------
# subcommand bodies: each returns (list of written files, exit code, message)


def _run_probe_solver(cfg: RunConfig, params, out: Path, name: str):
    from .feynman_kac import NeumannData, solve_cem, solve_continuum, solve_dirichlet

    domain = cfg.build_domain()
    field_ = cfg.build_field()
    probes = np.array(cfg.probes, dtype=float)
    extra = ()
    if cfg.problem == "dirichlet":
        res = solve_dirichlet(probes, cfg.build_boundary(), field_, domain, params, cfg.n_paths)
    elif cfg.problem == "continuum":
        res = solve_continuum(probes, NeumannData(cfg.build_boundary()), field_, domain, params, cfg.n_paths,
                              tol=cfg.tail_tolerance)
        extra = ("horizon_used", "truncation_tail_bound")
    else:
        res = solve_cem(probes, cfg.build_electrodes(), field_, domain, params, cfg.n_paths)
        extra = ("horizon_used", "truncation_tail_bound")
    path = out / f"{name}.csv"
    _write_csv(path, PROBE_COLUMNS + list(extra), _probe_rows(probes, res, params, extra))
    return [path], EXIT_OK, ""


def _start_arcs(cfg: RunConfig, domain):
    n = cfg.trace_value("n_starts", 16)
    return np.arange(n) * domain.boundary_measure() / n


def _run_dtn(cfg: RunConfig, params, out: Path, name: str):
    from .boundary_process import DEFAULT_DTN_STEP, estimate_dtn_many
    from .boundary_data import BoundaryFunction

    domain = cfg.build_domain()
    field_ = cfg.build_field()
    t = cfg.trace_value("t", DEFAULT_DTN_STEP)
    arcs = _start_arcs(cfg, domain)
    if cfg.boundary is not None:
        phis = {"phi": cfg.build_boundary()}
    else:
        phis = {"b_x": BoundaryFunction.coordinate(domain, 0), "b_y": BoundaryFunction.coordinate(domain, 1)}
    ests = estimate_dtn_many(list(phis.values()), t, field_, domain, params, cfg.n_paths, arcs)
    rows = []
    for label, e in zip(phis, ests):
        for j in range(len(arcs)):
            rows.append([label, _f(e.arcs[j]), _f(e.points[j, 0]), _f(e.points[j, 1]), _f(e.results[j].mean),
                         _f(e.results[j].stderr), cfg.n_paths, params.seed, _f(params.dt), _f(t)])
    path = out / f"{name}.csv"
    _write_csv(path, ["function", "arc", "x", "y", "mean", "stderr", "n_paths", "seed", "dt", "t"], rows)
    return [path], EXIT_OK, ""


def _traces(cfg: RunConfig, params):
    from .boundary_process import trace_paths

    domain = cfg.build_domain()
    field_ = cfg.build_field()
    arcs = np.arange(cfg.n_paths) * domain.boundary_measure() / cfg.n_paths
    starts = domain.points_at(arcs)[:, :2]
    S = cfg.trace_value("S", 4.0)
    ds = cfg.trace_value("ds", 1e-3)
    thr = cfg.trace.get("min_gap")
    return domain, trace_paths(starts, S, field_, domain, params, ds, None if thr is None else float(thr))


def _run_trace(cfg: RunConfig, params, out: Path, name: str):
    _, traces = _traces(cfg, params)
    rows = []
    for i, tr in enumerate(traces):
        jm = tr.jump_mask
        for k in range(len(tr.s)):
            rows.append([i, _f(tr.s[k]), _f(tr.arcs[k]), int(jm[k]), params.seed, _f(params.dt)])
    path = out / f"{name}.csv"
    _write_csv(path, ["path_id", "s", "arc", "jump", "seed", "dt"], rows)
    return [path], EXIT_OK, ""


def _run_jump(cfg: RunConfig, params, out: Path, name: str):
    from .boundary_process import jump_statistics

    domain, traces = _traces(cfg, params)
    J = jump_statistics(traces, cfg.trace_value("bins", 16), domain.boundary_measure(),
                        None if cfg.trace.get("min_gap") is None else float(cfg.trace["min_gap"]))
    rows = []
    c = J.centers
    for i in range(len(c)):
        for j in range(len(c)):
            rows.append([i, j, _f(c[i]), _f(c[j]), int(J.counts[i, j]), _f(J.exposure[i]), _f(J.estimate[i, j]),
                         params.seed, _f(params.dt)])
    path = out / f"{name}.csv"
    _write_csv(path, ["source_bin", "target_bin", "source_arc", "target_arc", "count", "exposure", "estimate",
                      "seed", "dt"], rows)
    return [path], EXIT_OK, ""


def _run_calibrate(cfg: RunConfig, params, out: Path, name: str):
    from .reflecting_sde import calibrate_local_time

    cal = calibrate_local_time(cfg.build_domain(), cfg.build_field(), params, cfg.n_paths)
    m = cal.mean_local_time
    path = out / f"{name}.csv"
    _write_csv(path, ["rho", "rho_analytic", "mean_local_time", "stderr", "target", "n_paths", "seed", "dt"],
               [[_f(cal.rho), _f(cal.rho_analytic), _f(m.mean), _f(m.stderr), _f(cal.target), m.n_paths,
                 params.seed, _f(params.dt)]])
    return [path], EXIT_OK, ""


def _run_oracle(cfg: RunConfig, params, out: Path, name: str):
    from .pde_oracle import fd_solve

    domain = cfg.build_domain()
    field_ = cfg.build_field()
    problem = cfg.oracle.get("problem", "cem")
    n = int(cfg.oracle.get("resolution", 64))
    data = cfg.build_electrodes() if problem == "cem" else cfg.build_boundary()
    sol = fd_solve(problem, domain, field_, data, n)
    grid_path = out / f"{name}_grid.csv"
    sol.to_csv(grid_path)
    paths = [grid_path]
    if cfg.probes:
        probes = np.array(cfg.probes, dtype=float)
        vals = sol(probes)
        path = out / f"{name}.csv"
        _write_csv(path, ["probe_x", "probe_y", "value", "resolution", "seed", "dt"],
                   [[_f(p[0]), _f(p[1]), _f(v), n, params.seed, _f(params.dt)] for p, v in zip(probes, vals)])
        paths.insert(0, path)
    return paths, EXIT_OK, ""


def _run_validate(cfg: RunConfig | None, args, out: Path, name: str):
    from .validation import run_suite

    numbers = None
    if args.criteria:
        numbers = [int(c) for c in args.criteria.split(",")]
    workers = args.workers or (cfg.workers if cfg is not None else 8)
    results = run_suite(numbers, workers=workers, echo=lambda s: print(s, flush=True))
    path = out / f"{name}.csv"
    _write_csv(path, ["criterion", "name", "passed", "seconds", "summary"],
               [[r.number, r.name, int(r.passed), f"{r.seconds:.2f}", r.summary] for r in results])
    failed = [r.number for r in results if not r.passed]
    code = EXIT_ACCEPTANCE if failed else EXIT_OK
    return [path], code, f"failed criteria: {failed}" if failed else "all criteria passed"


_RUNNERS = {
    "solve-dirichlet": _run_probe_solver,
    "solve-continuum": _run_probe_solver,
    "solve-cem": _run_probe_solver,
    "estimate-dtn": _run_dtn,
    "boundary-trace": _run_trace,
    "jump-kernel": _run_jump,
    "calibrate": _run_calibrate,
    "oracle": _run_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fkeit", description="Monte Carlo forward solver for the conductivity equation.")
    ap.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    ap.add_argument("--config", help="TOML run configuration (validate: optional)")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    ap.add_argument("--workers", type=int, default=None, help="override the configured worker count")
    ap.add_argument("--out", default=None, help="output directory (default: the configured 'out')")
    ap.add_argument("--criteria", default=None, help="validate only: comma-separated criterion numbers")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    cfg = None
    params = None
    files: list[Path] = []
    code = EXIT_OK
    message = ""
    out = Path(args.out) if args.out else None
    try:
        if args.config is None and sub != "validate":
            raise ConfigError("--config is required")
        if args.config is not None:
            cfg = RunConfig.load(args.config)
            expected = SUBCOMMANDS[sub]
            if expected is not None and cfg.problem != expected:
                raise ConfigError(f"{sub} needs problem = {expected!r}, config has {cfg.problem!r}")
            params = cfg.build_params(args.seed, args.workers)
        if out is None:
            out = Path(cfg.out) if cfg is not None else Path("out") / "validate"
        out.mkdir(parents=True, exist_ok=True)
        name = sub.replace("-", "_")
        if sub == "validate":
            files, code, message = _run_validate(cfg, args, out, name)
        else:
            files, code, message = _RUNNERS[sub](cfg, params, out, name)
    except ConfigError as exc:
        code, message = EXIT_CONFIG, f"configuration error: {exc}"
    except (FKEITError, FloatingPointError) as exc:
        code, message = EXIT_SIMULATION, f"simulation error: {type(exc).__name__}: {exc}"
    except (ValueError, TypeError) as exc:
        code, message = (EXIT_CONFIG if params is None else EXIT_SIMULATION), f"error: {exc}"
    wall = time.perf_counter() - t0
    if message:
        print(message, file=sys.stderr if code else sys.stdout)
    if out is not None and out.is_dir():
        manifest = {
            "subcommand": sub,
            "config": None if cfg is None else cfg.to_dict(),
            "config_path": args.config,
            "seed": None if params is None else params.seed,
            "workers": None if params is None else params.workers,
            "dt": None if params is None else params.dt,
            "versions": _versions(),
            "started_utc": started,
            "wall_seconds": round(wall, 3),
            "outputs": [str(p) for p in files],
            "exit_code": code,
            "message": message,
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, allow_nan=True)
            fh.write("\n")
        for p in files:
            print(p)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
