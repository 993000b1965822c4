"""Command-line front end: steady points, sweeps, trajectories, checks.

Subcommands
-----------
steady      single-point separability / log-negativity evaluation
sweep       curve of the steady-state quantities along one parameter axis
trajectory  Monte Carlo dump of conditional-mean trajectories + summary
rwa-check   lab-frame versus rotating-frame covariance comparison
threshold   instability thresholds and stability flags of the two pairs

Configuration is a JSON file (``--config``) patched by repeatable
``--set dotted.key=value`` overrides; values are parsed as JSON where
possible.  All rates may be given in any consistent units: they are
normalised internally by the mean damping rate.  Trajectory steps and
durations are understood in units of the inverse mean damping rate.

A null detuning (or coupling) resolves to the instability threshold of the
drive, ``sqrt(max(chi^2 - gamma^2, 0))``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure
(divergence, non-convergence, out-of-domain parameters).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .closedform import (
    entanglement_from_pair_covariances,
    separability,
    squeeze_angle,
)
from .errors import ConfigError, NumericalError, PairampError
from .model import (
    Basis,
    ModelOne,
    ModelTwo,
    OscillatorPairParams,
    drift_matrix,
    reduce_to_pairs,
    threshold,
)
from .riccati import full_steady_ode, lyapunov_unconditional, steady_algebraic
from .trajectories import (
    TrajectoryConfig,
    covariance_standard_errors,
    default_dt,
    labframe_rwa_check,
    simulate_conditional_means,
)

__all__ = ["main", "default_config", "parse_config", "resolve_system"]

SWEEPABLE = (
    "chi",
    "detuning",
    "coupling",
    "measurement_rate",
    "bath_occupation",
    "efficiency",
    "gamma1",
    "gamma2",
)

SWEEP_COLUMNS = (
    "value",
    "S",
    "E_N",
    "alpha",
    "V_alpha_plus",
    "V_alpha_minus",
    "converged",
)

_BASIS_COLUMNS = {
    Basis.COLLECTIVE_XY: ("X_plus", "X_minus", "Y_plus", "Y_minus"),
    Basis.UV: ("U1", "U2", "V1", "V2"),
    Basis.INDIVIDUAL: ("X1", "Y1", "X2", "Y2"),
}


def default_config() -> dict:
    return {
        "model": {"kind": "one", "chi": 0.0, "detuning": None, "coupling": None},
        "oscillator": {
            "gamma1": 1.0,
            "gamma2": 1.0,
            "bath_occupation": 0.0,
            "efficiency": 1.0,
            "measurement_rate": 0.0,
            "mech_frequency": None,
        },
        "solver": "both",
        "sweep": {
            "parameter": "measurement_rate",
            "start": 1e-2,
            "stop": 1e3,
            "count": 200,
            "spacing": "log",
        },
        "trajectories": {
            "dt": None,
            "duration": 10.0,
            "n_traj": 100,
            "record_stride": 1,
            "x0": None,
        },
        "rwa": {"tolerance": 0.01, "t_run": None},
        "output": {"path": None, "format": "csv"},
        "seed": 12345,
    }


def _merge(base: dict, patch: dict) -> dict:
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def _apply_set(config: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def parse_config(args) -> dict:
    config = default_config()
    if args.config is not None:
        try:
            with open(args.config) as fh:
                _merge(config, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.output is not None:
        config["output"]["path"] = args.output
    if args.format is not None:
        config["output"]["format"] = args.format
    if config["output"]["format"] not in ("csv", "json"):
        raise ConfigError(f"unknown output format {config['output']['format']!r}")
    return config


def resolve_system(config: dict):
    """Build the normalised (drive, params) pair from a config dict.

    All rates are divided by the mean damping rate; an unset detuning or
    coupling defaults to the drive's instability threshold.
    """
    osc = config["oscillator"]
    mdl = config["model"]
    try:
        g1, g2 = float(osc["gamma1"]), float(osc["gamma2"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad oscillator damping rates: {exc}") from exc
    if g1 <= 0 or g2 <= 0:
        raise ConfigError("damping rates must be positive")
    gbar = 0.5 * (g1 + g2)

    def norm(x):
        return float(x) / gbar

    try:
        params = OscillatorPairParams(
            gamma1=norm(g1),
            gamma2=norm(g2),
            bath_occupation=float(osc["bath_occupation"]),
            efficiency=float(osc["efficiency"]),
            measurement_rate=norm(osc["measurement_rate"]),
            mech_frequency=(
                norm(osc["mech_frequency"])
                if osc.get("mech_frequency") is not None
                else None
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad oscillator parameters: {exc}") from exc

    kind = mdl.get("kind")
    try:
        chi = norm(mdl["chi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad drive chi: {exc}") from exc
    threshold_default = math.sqrt(max(chi * chi - 1.0, 0.0))
    if kind == "one":
        detuning = mdl.get("detuning")
        drive = ModelOne(
            chi=chi,
            detuning=norm(detuning) if detuning is not None else threshold_default,
        )
    elif kind == "two":
        coupling = mdl.get("coupling")
        drive = ModelTwo(
            chi=chi,
            coupling=norm(coupling) if coupling is not None else threshold_default,
        )
    else:
        raise ConfigError(f"model.kind must be 'one' or 'two', got {kind!r}")
    return drive, params, gbar


def _result_dict(res) -> dict:
    return {
        "S": res.separability,
        "E_N": res.log_negativity,
        "alpha": res.alpha,
        "V_alpha_plus": res.v_alpha_plus,
        "V_alpha_minus": res.v_alpha_minus,
        "entangled": res.entangled,
    }


def _solve_point(drive, params, solver: str) -> dict:
    out: dict = {}
    pair_a, pair_b = reduce_to_pairs(drive, params)
    if solver in ("closedform", "both"):
        out["closedform"] = _result_dict(separability(pair_a, pair_b, params))
    if solver in ("riccati", "both"):
        cov_a = steady_algebraic(pair_a, params)
        cov_b = steady_algebraic(pair_b, params)
        out["riccati"] = _result_dict(entanglement_from_pair_covariances(cov_a, cov_b))
    primary = out.get("closedform", out.get("riccati"))
    out.update(primary)
    out["pairs"] = []
    for pair in (pair_a, pair_b):
        th = threshold(pair)
        out["pairs"].append(
            {
                "label": pair.label.value,
                "chi_eff": pair.chi_eff,
                "delta_eff": pair.delta_eff,
                "gamma_mean": pair.gamma_mean,
                "chi_th": th.chi_th,
                "stable": th.stable,
            }
        )
    return out


def _open_output(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _emit_json(payload: dict, path):
    fh, close = _open_output(path)
    try:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    finally:
        if close:
            fh.close()


def _comment_header(config: dict, what: str) -> list[str]:
    # the echo captures the physics configuration; the output destination is
    # omitted so identical runs produce identical bytes wherever they land
    echo = {k: v for k, v in config.items() if k != "output"}
    return [
        f"# pairamp {__version__} {what}",
        f"# config {json.dumps(echo, sort_keys=True)}",
    ]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def cmd_steady(args) -> int:
    config = parse_config(args)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    solver = config.get("solver", "both")
    if solver not in ("closedform", "riccati", "both"):
        raise ConfigError(f"unknown solver {solver!r}")
    drive, params, _ = resolve_system(config)
    result = _solve_point(drive, params, solver)
    result["solver"] = solver
    if config["output"]["format"] == "json":
        _emit_json(result, config["output"]["path"])
    else:
        fh, close = _open_output(config["output"]["path"])
        try:
            for line in _comment_header(config, "steady"):
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS[1:])
            writer.writerow(
                [
                    _fmt(result["S"]),
                    _fmt(result["E_N"]),
                    _fmt(result["alpha"]),
                    _fmt(result["V_alpha_plus"]),
                    _fmt(result["V_alpha_minus"]),
                    "true",
                ]
            )
        finally:
            if close:
                fh.close()
    return 0


def _sweep_grid(sweep: dict) -> np.ndarray:
    try:
        start, stop = float(sweep["start"]), float(sweep["stop"])
        count = int(sweep["count"])
        spacing = sweep.get("spacing", "linear")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep axis: {exc}") from exc
    if count < 1:
        raise ConfigError("sweep count must be >= 1")
    if spacing == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log spacing requires positive endpoints")
        return np.geomspace(start, stop, count)
    if spacing == "linear":
        return np.linspace(start, stop, count)
    raise ConfigError(f"unknown sweep spacing {spacing!r}")


def _config_with_value(config: dict, parameter: str, value: float) -> dict:
    patched = copy.deepcopy(config)
    if parameter in ("chi", "detuning", "coupling"):
        patched["model"][parameter] = value
    else:
        patched["oscillator"][parameter] = value
    return patched


def _sweep_point(config: dict, parameter: str, value: float, solver: str) -> dict:
    """One sweep evaluation; returns a row dict (converged=False on failure)."""
    row = {c: None for c in SWEEP_COLUMNS}
    row["value"] = value
    row["converged"] = False
    if solver == "both":
        row["S_riccati"] = None
    try:
        drive, params, _ = resolve_system(_config_with_value(config, parameter, value))
        result = _solve_point(drive, params, solver)
    except NumericalError:
        return row
    row["S"] = result["S"]
    row["E_N"] = result["E_N"]
    row["alpha"] = result["alpha"]
    row["V_alpha_plus"] = result["V_alpha_plus"]
    row["V_alpha_minus"] = result["V_alpha_minus"]
    row["converged"] = True
    if solver == "both":
        row["S_riccati"] = result["riccati"]["S"]
    return row


def cmd_sweep(args) -> int:
    config = parse_config(args)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    solver = config.get("solver", "both")
    if solver not in ("closedform", "riccati", "both"):
        raise ConfigError(f"unknown solver {solver!r}")
    sweep = config["sweep"]
    parameter = sweep.get("parameter")
    if parameter not in SWEEPABLE:
        raise ConfigError(
            f"sweep parameter must be one of {SWEEPABLE}, got {parameter!r}"
        )
    grid = _sweep_grid(sweep)

    jobs = max(args.jobs, 1)
    if jobs > 1 and len(grid) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(
                    _sweep_point,
                    [config] * len(grid),
                    [parameter] * len(grid),
                    [float(v) for v in grid],
                    [solver] * len(grid),
                    chunksize=max(len(grid) // (4 * jobs), 1),
                )
            )
    else:
        rows = [_sweep_point(config, parameter, float(v), solver) for v in grid]

    columns = list(SWEEP_COLUMNS) + (["S_riccati"] if solver == "both" else [])
    if config["output"]["format"] == "json":
        payload = {"columns": columns, "rows": [[r.get(c) for c in columns] for r in rows]}
        _emit_json(payload, config["output"]["path"])
    else:
        fh, close = _open_output(config["output"]["path"])
        try:
            for line in _comment_header(config, f"sweep {parameter}"):
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            for r in rows:
                writer.writerow([_fmt(r.get(c)) for c in columns])
        finally:
            if close:
                fh.close()
    return 0 if any(r["converged"] for r in rows) else 2


def _traj_slice(config: dict, lo: int, hi: int):
    """Worker for one block of trajectories (deterministic per-index streams)."""
    drive, params, _ = resolve_system(config)
    drift = drift_matrix(drive, params)
    cov, _ = full_steady_ode(drift, params)
    tcfg = _trajectory_config(config, drift, params, cov)
    x0 = config["trajectories"].get("x0")
    res = simulate_conditional_means(
        drift,
        cov,
        params,
        tcfg,
        x0=np.asarray(x0, dtype=float) if x0 is not None else None,
        keep_paths=True,
        record_stride=int(config["trajectories"].get("record_stride", 1)),
        traj_range=(lo, hi),
    )
    return res.times, res.paths, res.final


def _trajectory_config(config, drift, params, cov) -> TrajectoryConfig:
    traj = config["trajectories"]
    dt = traj.get("dt")
    if dt is None:
        dt = default_dt(drift, params, cov.matrix)
    return TrajectoryConfig(
        dt=float(dt),
        duration=float(traj["duration"]),
        n_traj=int(traj["n_traj"]),
        seed=int(config["seed"]),
    )


def cmd_trajectory(args) -> int:
    config = parse_config(args)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    drive, params, _ = resolve_system(config)
    drift = drift_matrix(drive, params)
    cov, _ = full_steady_ode(drift, params)
    tcfg = _trajectory_config(config, drift, params, cov)

    jobs = max(args.jobs, 1)
    n = tcfg.n_traj
    block = 256
    ranges = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
    if jobs > 1 and len(ranges) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(
                pool.map(_traj_slice, [config] * len(ranges), *zip(*ranges))
            )
    else:
        parts = [_traj_slice(config, lo, hi) for lo, hi in ranges]
    times = parts[0][0]
    paths = np.concatenate([p[1] for p in parts], axis=0)
    final = np.concatenate([p[2] for p in parts], axis=0)

    labels = _BASIS_COLUMNS[drift.basis]
    fh, close = _open_output(config["output"]["path"])
    try:
        for line in _comment_header(config, "trajectory"):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["traj", "t", *labels])
        for k in range(paths.shape[0]):
            for i, t in enumerate(times):
                writer.writerow(
                    [k, _fmt(float(t))] + [_fmt(float(v)) for v in paths[k, i]]
                )
    finally:
        if close:
            fh.close()

    mean = final.mean(axis=0)
    cov_means = np.cov(final.T, ddof=1) if n > 1 else np.zeros((4, 4))
    summary = {
        "n_traj": n,
        "dt": tcfg.dt,
        "duration": tcfg.duration,
        "seed": tcfg.seed,
        "basis": drift.basis.value,
        "mean": [float(x) for x in mean],
        "covariance_of_means": [[float(x) for x in r] for r in np.atleast_2d(cov_means)],
    }
    try:
        v_unc = lyapunov_unconditional(drift, params)
        resid = np.atleast_2d(cov_means) + cov.matrix - v_unc.matrix
        se = covariance_standard_errors(np.atleast_2d(cov_means), n)
        summary["total_variance_residual"] = [[float(x) for x in r] for r in resid]
        summary["residual_standard_error"] = [[float(x) for x in r] for r in se]
    except NumericalError:
        summary["total_variance_residual"] = None
        summary["residual_standard_error"] = None
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_rwa_check(args) -> int:
    config = parse_config(args)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    drive, params, _ = resolve_system(config)
    rwa = config.get("rwa", {})
    tolerance = float(rwa.get("tolerance", 0.01))
    t_run = rwa.get("t_run")
    report = labframe_rwa_check(
        drive, params, t_run=float(t_run) if t_run is not None else None
    )
    payload = {
        "deviation": report.deviation,
        "tolerance": tolerance,
        "pass": bool(report.deviation <= tolerance),
        "omega_m": report.omega_m,
    }
    _emit_json(payload, config["output"]["path"])
    return 0


def cmd_threshold(args) -> int:
    config = parse_config(args)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    drive, params, _ = resolve_system(config)
    rows = []
    for pair in reduce_to_pairs(drive, params):
        th = threshold(pair)
        rows.append(
            {
                "label": pair.label.value,
                "chi_eff": pair.chi_eff,
                "delta_eff": pair.delta_eff,
                "chi_th": th.chi_th,
                "stable": th.stable,
            }
        )
    if config["output"]["format"] == "json":
        _emit_json({"pairs": rows}, config["output"]["path"])
    else:
        fh, close = _open_output(config["output"]["path"])
        try:
            for line in _comment_header(config, "threshold"):
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(["label", "chi_eff", "delta_eff", "chi_th", "stable"])
            for r in rows:
                writer.writerow([_fmt(r[c]) for c in ("label", "chi_eff", "delta_eff", "chi_th", "stable")])
        finally:
            if close:
                fh.close()
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; keep that for config errors
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pairamp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pairamp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("steady", cmd_steady),
        ("sweep", cmd_sweep),
        ("trajectory", cmd_trajectory),
        ("rwa-check", cmd_rwa_check),
        ("threshold", cmd_threshold),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config entry by dotted path (repeatable)",
        )
        p.add_argument("--output", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument(
            "--print-config",
            action="store_true",
            help="echo the parsed configuration and exit",
        )
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"pairamp: config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"pairamp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except PairampError as exc:
        print(f"pairamp: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
