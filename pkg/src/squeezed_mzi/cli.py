"""Command-line driver: ``squeezed-mzi <command> [flags]``.

Every command writes its tables/summaries plus ``<command>_manifest.json``
into ``--out`` (default: ``$SQUEEZED_MZI_OUT`` or the current directory)
and prints a one-line summary. A JSON file passed with ``--config`` may
set any flag by its long name with dashes replaced by underscores; flags
given on the command line win. A manifest's ``parameters`` block is a
valid config, so a manifest can be fed back to reproduce its outputs.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import ProtocolConfig, STOP_MODES, run as run_protocol, make_rng
from .groundstate import WellParameters, exact_ground_state, gs_state, sigma_of_u, u_of_sigma
from .interferometer import Channel, gaussian_approximation, mzi_output, outcome_distribution
from .montecarlo import run_ensemble, write_histogram_csv, write_json
from .optimizer import (
    MAX_NUMERIC_N,
    analytic_optimum,
    fitted_delta_theta_min,
    fitted_sigma_min,
    fitted_u_min,
    numeric_optimum,
    robustness,
)
from .spinspace import bloch_quasiprobability, get_space, moments

OUT_ENV = "SQUEEZED_MZI_OUT"
EXIT_USAGE = 2
EXIT_NUMERIC = 3

# built-in defaults, applied after the config file and the flags
DEFAULTS = {
    "ground-state": {"u": 0.0, "tilt": 0.0},
    "distribution": {"theta": 0.0},
    "optimize": {"theta": 0.0, "mode": "fitted", "max_atoms": MAX_NUMERIC_N},
    "adaptive": {
        "theta": math.pi / 6,
        "theta0": 0.0,
        "prior_width": math.pi / 3,
        "seed": 0,
        "stop_mode": "threshold",
        "max_iterations": 25,
    },
    "montecarlo": {
        "theta": math.pi / 6,
        "theta0": 0.0,
        "prior_width": math.pi / 3,
        "seed": 0,
        "stop_mode": "threshold",
        "max_iterations": 25,
        "runs": 1000,
        "workers": 1,
        "records": False,
    },
    "robustness": {"theta": 0.0, "dn_frac": 0.0, "du_frac": 0.0},
    "bloch": {"theta": 0.0, "grid_points": 64},
}
# parameters that do not change results and so stay out of the manifest's parameter block
_RUNTIME_ONLY = {"workers", "out", "config", "format"}


class UsageError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_table(path: Path, header, rows, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        data = [dict(zip(header, (_jsonable(v) for v in row))) for row in rows]
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
            fh.write("\n")
        return path
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    return v


def _write_json(path: Path, payload) -> Path:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------- commands


def _input_state(p):
    space = get_space(p["n_atoms"])
    if p.get("sigma") is not None:
        u = u_of_sigma(p["n_atoms"], p["sigma"])
    else:
        u = p.get("u") or 0.0
    return exact_ground_state(space, WellParameters(interaction_ratio=u)), u


def cmd_ground_state(p, out: Path):
    space = get_space(p["n_atoms"])
    u = u_of_sigma(p["n_atoms"], p["sigma"]) if p.get("sigma") is not None else p["u"]
    state = exact_ground_state(space, WellParameters(interaction_ratio=u, tilt=p["tilt"]))
    m = moments(state)
    sigma_analytic = sigma_of_u(p["n_atoms"], u)
    ideal = gs_state(space, sigma_analytic)
    amps = state.amplitudes
    rows = [
        (int(n), a.real, a.imag, abs(a) ** 2) for n, a in zip(space.n_values, amps)
    ]
    files = [
        _write_table(out / "ground_state.csv", ["n", "re", "im", "prob"], rows, p["format"])
    ]
    summary = {
        "n_atoms": p["n_atoms"],
        "u": u,
        "tilt": p["tilt"],
        "sigma_measured": m.djz,
        "sigma_analytic": sigma_analytic,
        "overlap_with_gs": abs(ideal.overlap(state)) ** 2,
        "mean_jx": m.jx,
        "delta_jx": m.djx,
        "delta_jy": m.djy,
    }
    files.append(_write_json(out / "ground_state_summary.json", summary))
    line = f"ground-state N={p['n_atoms']} u={u:.6g}: sigma={m.djz:.6g} (law {sigma_analytic:.6g})"
    return files, line


def cmd_distribution(p, out: Path):
    state, u = _input_state(p)
    theta = p["theta"]
    channel = Channel(state)
    dist = outcome_distribution(channel, theta)
    space = state.space
    m_out = moments(mzi_output(state, theta))
    n = space.n_values.astype(float)
    overlay = _gauss(n, m_out.jz, m_out.djz)
    theta_a = p.get("theta0")
    if theta_a is None:
        theta_a = theta
    if theta_a != 0:
        g_mean, g_std = gaussian_approximation(theta, theta_a, space.n_atoms)
        optimized = _gauss(n, g_mean, g_std)
    else:
        optimized = np.full(n.shape, np.nan)
    rows = list(zip(space.n_values, dist.probabilities, overlay, optimized))
    files = [
        _write_table(
            out / "distribution.csv",
            ["n", "probability", "gaussian_moments", "gaussian_optimized"],
            rows,
            p["format"],
        )
    ]
    total = float(dist.probabilities.sum())
    summary = {
        "n_atoms": space.n_atoms,
        "u": u,
        "theta": theta,
        "theta_assumed": theta_a,
        "mean_n": dist.mean(),
        "std_n": dist.std(),
        "predicted_mean_n": space.n_atoms * math.sin(theta) / 2,
        "probability_sum": total,
        "support": [int(space.n_values[i]) for i in dist.support],
    }
    files.append(_write_json(out / "distribution_summary.json", summary))
    line = f"distribution N={space.n_atoms} theta={theta:.6g}: mean n={dist.mean():.6g}, sum={total:.15g}"
    return files, line


def _gauss(x, mean, std):
    std = max(std, 1e-300)
    return np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))


def cmd_optimize(p, out: Path):
    n_atoms, theta, mode = p["n_atoms"], p["theta"], p["mode"]
    if mode == "analytic":
        opt = analytic_optimum(n_atoms, theta)
        payload = {
            "sigma_min": opt.sigma,
            "delta_theta_min": opt.delta_theta,
            "u_min": u_of_sigma(n_atoms, opt.sigma) if opt.sigma <= math.sqrt(n_atoms) / 2 else None,
            "extrapolated": opt.extrapolated,
        }
    elif mode == "fitted":
        payload = {
            "sigma_min": fitted_sigma_min(n_atoms, theta),
            "u_min": fitted_u_min(n_atoms, theta),
            "delta_theta_min": fitted_delta_theta_min(n_atoms, theta),
        }
    else:
        if n_atoms > p["max_atoms"]:
            raise UsageError(
                f"numeric mode is limited to N <= {p['max_atoms']}; use --mode fitted for N={n_atoms}"
            )
        res = numeric_optimum(n_atoms, theta, p.get("prior_width"), max_atoms=p["max_atoms"])
        payload = {
            "sigma_min": res.sigma_min,
            "u_min": res.u_min,
            "delta_theta_min": res.delta_theta_min,
            "evaluations": res.evaluations,
            "method": res.method,
            "prior_width": res.prior_width,
        }
    payload.update({"n_atoms": n_atoms, "theta_assumed": theta, "mode": mode})
    files = [_write_json(out / "optimize.json", payload)]
    line = (
        f"optimize ({mode}) N={n_atoms} theta={theta:.6g}: sigma_min={payload['sigma_min']:.6g}, "
        f"dtheta={payload['delta_theta_min']:.6g}"
    )
    return files, line


def _protocol_config(p) -> ProtocolConfig:
    return ProtocolConfig(
        n_atoms=p["n_atoms"],
        theta_true=p["theta"],
        theta0=p["theta0"],
        delta_theta0=p["prior_width"],
        max_iterations=p["max_iterations"],
        seed=p["seed"],
        stop_mode=p["stop_mode"],
    )


def cmd_adaptive(p, out: Path):
    config = _protocol_config(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        state = run_protocol(config, make_rng(config.seed))
    rows = [
        (r.index, r.sigma, r.u, r.n, r.theta_bar, r.delta_theta) for r in state.history
    ]
    files = [
        _write_table(
            out / "adaptive_history.csv",
            ["j", "sigma_j", "u_j", "n_j", "theta_bar_j", "delta_theta_j"],
            rows,
            p["format"],
        )
    ]
    payload = {
        "estimate": state.estimate,
        "theta_true": config.theta_true,
        "delta_theta": state.delta_theta,
        "iterations_used": state.iterations_used,
        "aborted": state.aborted,
        "diagnostic": state.diagnostic,
        "monotone": state.monotone,
    }
    files.append(_write_json(out / "adaptive.json", payload))
    line = (
        f"adaptive N={config.n_atoms}: estimate={state.estimate:.9g} +- {state.delta_theta:.3g} "
        f"after {state.iterations_used} measurements" + (" (aborted)" if state.aborted else "")
    )
    return files, line


def cmd_montecarlo(p, out: Path):
    if p["runs"] < 1:
        raise UsageError(f"--runs must be >= 1, got {p['runs']}")
    config = _protocol_config(p)
    result = run_ensemble(config, p["runs"], p["workers"], keep_records=True)
    hist = out / "montecarlo_histogram.csv"
    write_histogram_csv(result, hist)
    summary = out / "montecarlo.json"
    write_json(result, summary, include_records=p["records"])
    line = (
        f"montecarlo N={config.n_atoms} runs={result.runs}: mean(M+1)={result.mean_iterations:.4g}, "
        f"spread={result.spread_iterations:.4g}, coverage={result.coverage_68:.3f}, "
        f"aborted={result.aborted}"
    )
    return [hist, summary], line


def cmd_robustness(p, out: Path):
    value = robustness(p.get("n_atoms"), p["theta"], p["dn_frac"], p["du_frac"])
    payload = {
        "delta_n_fraction": p["dn_frac"],
        "delta_u_fraction": p["du_frac"],
        "fractional_increase": value,
    }
    files = [_write_json(out / "robustness.json", payload)]
    return files, f"robustness dN={p['dn_frac']:.4g} du={p['du_frac']:.4g}: +{value:.4%}"


def cmd_bloch(p, out: Path):
    points = p["grid_points"]
    if points < 2:
        raise UsageError("--grid-points must be >= 2")
    if points < 16:
        warnings.warn(f"grid of {points}x{points} is too coarse to resolve the state", stacklevel=2)
    state, _ = _input_state(p)
    output = mzi_output(state, p["theta"])
    lats = np.linspace(-math.pi / 2, math.pi / 2, points)
    lons = np.linspace(-math.pi, math.pi, points)
    rows = []
    for label, s in (("input", state), ("output", output)):
        grid = bloch_quasiprobability(s, lats, lons)
        for i, lat in enumerate(lats):
            for k, lon in enumerate(lons):
                rows.append((label, lat, lon, grid[i, k]))
    files = [_write_table(out / "bloch.csv", ["state", "theta", "phi", "P"], rows, p["format"])]
    return files, f"bloch N={state.space.n_atoms}: {points}x{points} grid for input and output"


COMMANDS = {
    "ground-state": cmd_ground_state,
    "distribution": cmd_distribution,
    "optimize": cmd_optimize,
    "adaptive": cmd_adaptive,
    "montecarlo": cmd_montecarlo,
    "robustness": cmd_robustness,
    "bloch": cmd_bloch,
}


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squeezed-mzi",
        description="Squeezed-state Mach-Zehnder interferometry simulations.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, n_required=True):
        sp.add_argument("--n-atoms", type=int, default=None, help="atom number N (even)")
        sp.add_argument("--config", type=Path, default=None, help="JSON file of flag values")
        sp.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")

    def state_flags(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--u", type=float, default=None, help="interaction ratio U/tau")
        g.add_argument("--sigma", type=float, default=None, help="target squeezing width")

    def protocol_flags(sp):
        sp.add_argument("--theta", type=float, default=None, help="true phase")
        sp.add_argument("--theta0", type=float, default=None, help="prior center")
        sp.add_argument("--prior-width", type=float, default=None, help="prior width dtheta0")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--stop-mode", choices=STOP_MODES, default=None)
        sp.add_argument("--max-iterations", type=int, default=None)

    sp = sub.add_parser("ground-state", help="exact double-well ground state")
    common(sp)
    state_flags(sp)
    sp.add_argument("--tilt", type=float, default=None, help="tilt delta/tau")

    sp = sub.add_parser("distribution", help="outcome distribution P(n|theta)")
    common(sp)
    state_flags(sp)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--theta0", type=float, default=None, help="angle the input was optimized for")

    sp = sub.add_parser("optimize", help="optimal squeezing width")
    common(sp)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--prior-width", type=float, default=None)
    sp.add_argument("--mode", choices=("analytic", "fitted", "numeric"), default=None)
    sp.add_argument("--max-atoms", type=int, default=None)

    sp = sub.add_parser("adaptive", help="one run of the adaptive protocol")
    common(sp)
    protocol_flags(sp)

    sp = sub.add_parser("montecarlo", help="ensemble of adaptive runs")
    common(sp)
    protocol_flags(sp)
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--records", action="store_true", default=None, help="include per-run records")

    sp = sub.add_parser("robustness", help="sensitivity to mis-set N and u")
    common(sp)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--dn-frac", type=float, default=None)
    sp.add_argument("--du-frac", type=float, default=None)

    sp = sub.add_parser("bloch", help="Bloch-sphere quasiprobability grids")
    common(sp)
    state_flags(sp)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--grid-points", type=int, default=None)
    return parser


def resolve_parameters(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    params = dict(DEFAULTS.get(args.command, {}))
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        loaded = loaded.get("parameters", loaded)
        known = set(vars(args)) - {"command", "config"}
        unknown = set(loaded) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        params.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            params[key] = value
    if params.get("u") is not None and params.get("sigma") is not None and (
        args.u is None or args.sigma is None
    ):
        # one came from the file, one from the flags: the flag wins
        params.pop("sigma" if args.u is not None else "u")
    if params.get("n_atoms") is None and args.command != "robustness":
        raise UsageError("--n-atoms is required")
    n_atoms = params.get("n_atoms")
    if n_atoms is not None and (n_atoms <= 0 or n_atoms % 2):
        raise UsageError(f"--n-atoms must be a positive even integer, got {n_atoms}")
    if params.get("out") is None:
        params["out"] = os.environ.get(OUT_ENV, ".")
    params["out"] = str(params["out"])
    return params


def _manifest(command, params, files) -> dict:
    return {
        "command": command,
        "parameters": {
            k: v for k, v in sorted(params.items()) if k not in _RUNTIME_ONLY
        },
        "runtime": {k: params.get(k) for k in sorted(_RUNTIME_ONLY) if k != "config"},
        "seed": params.get("seed"),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(f) for f in files],
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = resolve_parameters(args)
        out = Path(params["out"])
        out.mkdir(parents=True, exist_ok=True)
        files, line = COMMANDS[args.command](params, out)
        manifest = out / f"{args.command.replace('-', '_')}_manifest.json"
        _write_json(manifest, _manifest(args.command, params, files))
    except (UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
