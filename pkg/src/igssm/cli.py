"""Command-line harness.

Subcommands are thin veneers over the library: ``simulate`` writes an
observation CSV, ``posterior`` the per-coordinate posterior summary,
``select`` the dimension selections and assumption report, ``adapt`` the
dimension posterior and adaptive estimate, ``audit`` the tail-bound suite,
``sweep`` the rate study (selection + MISE + log-log fit), and ``run`` the
full experiment.  Configs are JSON files validated against the published
schema; a bare name (e.g. ``pp_p1_a1``) resolves to a bundled config.

Exit codes: 0 success, 2 configuration error, 3 infeasible configuration,
4 failed checks under ``--check``.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, run_experiment
from .hierarchy import adaptive_estimate, dimension_posterior
from .posterior import coordinate_posterior
from .selection import InfeasibleError, check_assumptions, composite_constants
from .sequences import Observation, simulate_observation

__all__ = ["main"]


def _load_any(arg: str) -> ExperimentConfig:
    """Load a config from a path, or from the bundled configs by name."""
    path = Path(arg)
    if path.exists():
        return load_config(path)
    name = arg if arg.endswith(".json") else arg + ".json"
    resource = importlib.resources.files("igssm").joinpath("configs", name)
    if resource.is_file():
        with importlib.resources.as_file(resource) as real:
            return load_config(real)
    raise ConfigError(f"config {arg!r} is neither a file nor a bundled config name")


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_sidecar(csv_path: Path, cfg: ExperimentConfig, seed: int, **extra) -> None:
    meta = {
        "artifact": csv_path.name,
        "config_sha256": cfg.sha256(),
        "seed": int(seed),
        "version": __version__,
    }
    meta.update(extra)
    sidecar = csv_path.with_name(csv_path.stem + ".meta.json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_observation(obs_path: Path) -> tuple:
    """Observation values plus the eps/seed recorded in the sidecar."""
    meta_path = obs_path.with_name(obs_path.stem + ".meta.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        with open(obs_path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["j", "y"]:
                raise ConfigError(f"{obs_path}: expected header j,y")
            values = np.array([float(row[1]) for row in reader])
    except OSError as err:
        raise ConfigError(f"cannot read observation: {err}") from err
    except (ValueError, json.JSONDecodeError, IndexError) as err:
        raise ConfigError(f"malformed observation input: {err}") from err
    if values.size == 0:
        raise ConfigError(f"{obs_path}: no observation rows")
    return values, float(meta["eps"]), int(meta["seed"])


def _pick_eps(cfg: ExperimentConfig, arg_eps: float | None) -> float:
    if arg_eps is None:
        return cfg.eps_grid[0]
    if not 0.0 < arg_eps < 1.0:
        raise ConfigError(f"--eps: noise levels must lie in the open interval (0, 1), got {arg_eps}")
    return float(arg_eps)


def _build_problem(cfg: ExperimentConfig, eps: float):
    n = cfg.sequence_length(eps)
    op = cfg.build_operator(n)
    theta = cfg.build_truth(op.n)
    prior = cfg.build_prior(op)
    return op, theta, prior


def _cmd_simulate(args) -> int:
    cfg = _load_any(args.config)
    eps = _pick_eps(cfg, args.eps)
    seed = cfg.seed if args.seed is None else args.seed
    op, theta, _ = _build_problem(cfg, eps)
    obs = simulate_observation(theta, op, eps, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "observation.csv"
    _write_csv(path, ["j", "y"], [(j + 1, repr(float(y))) for j, y in enumerate(obs.values)])
    _write_sidecar(path, cfg, seed, eps=eps, n=op.n)
    if not args.quiet:
        print(f"observation.csv: {op.n} coordinates at eps={eps}")
    return EXIT_OK


def _cmd_posterior(args) -> int:
    cfg = _load_any(args.config)
    values, eps, seed = _read_observation(Path(args.obs))
    model_n = cfg.sequence_length(eps)
    if model_n != values.size:
        raise ConfigError(
            f"observation length {values.size} does not match the config's "
            f"sequence length {model_n} at eps={eps}"
        )
    op, _, prior = _build_problem(cfg, eps)
    summary = coordinate_posterior(prior, op, Observation(values, eps, seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "posterior.csv"
    rows = [
        (j + 1, repr(float(s)), repr(float(m)))
        for j, (s, m) in enumerate(zip(summary.post_var, summary.post_mean))
    ]
    _write_csv(path, ["j", "sigma", "post_mean"], rows)
    _write_sidecar(path, cfg, seed, eps=eps)
    if not args.quiet:
        print(f"posterior.csv: {values.size} coordinates")
    return EXIT_OK


def _cmd_adapt(args) -> int:
    cfg = _load_any(args.config)
    values, eps, seed = _read_observation(Path(args.obs))
    op, theta, prior = _build_problem(cfg, eps)
    if op.n != values.size:
        raise ConfigError(
            f"observation length {values.size} does not match the config's "
            f"sequence length {op.n} at eps={eps}"
        )
    c_lambda = cfg.c_lambda_override
    if c_lambda is None:
        c_lambda = check_assumptions(theta, prior, op, (eps,)).c_lambda
    summary = coordinate_posterior(prior, op, Observation(values, eps, seed))
    dist = dimension_posterior(summary, prior, op, eps, c_lambda)
    estimate = adaptive_estimate(summary, prior, op, eps, c_lambda)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dist_path = out / "dimension_posterior.csv"
    _write_csv(
        dist_path,
        ["m", "log_weight", "prob"],
        [
            (m + 1, repr(float(lw)), repr(float(p)))
            for m, (lw, p) in enumerate(zip(dist.log_weights, dist.probs))
        ],
    )
    _write_sidecar(dist_path, cfg, seed, eps=eps, c_lambda=c_lambda)
    est_path = out / "adaptive.csv"
    omega = np.zeros(op.n)
    omega[: estimate.omega.size] = estimate.omega
    _write_csv(
        est_path,
        ["j", "omega", "theta_hat"],
        [
            (j + 1, repr(float(w)), repr(float(v)))
            for j, (w, v) in enumerate(zip(omega, estimate.values))
        ],
    )
    _write_sidecar(est_path, cfg, seed, eps=eps, c_lambda=c_lambda)
    if not args.quiet:
        print(f"adaptive.csv: search range {estimate.omega.size} of {op.n} coordinates")
    return EXIT_OK


def _cmd_select(args) -> int:
    cfg = _load_any(args.config)
    n = cfg.sequence_length()
    op = cfg.build_operator(n)
    theta = cfg.build_truth(op.n)
    prior = cfg.build_prior(op)
    wclass = cfg.build_class()
    report = check_assumptions(theta, prior, op, cfg.eps_grid, weighted_class=wclass)
    c_lambda = cfg.c_lambda_override
    if c_lambda is None:
        c_lambda = report.c_lambda
    constants = composite_constants(
        report, theta, prior, op, weighted_class=wclass, c_lambda=c_lambda
    )
    payload = {
        "version": __version__,
        "config_sha256": cfg.sha256(),
        "n": op.n,
        "constants": {
            "d": report.d if np.isfinite(report.d) else "inf",
            "c_lambda": report.c_lambda,
            "c_lambda_used": c_lambda,
            "l_lambda": report.l_lambda,
            "submultiplicative": report.submultiplicative,
            "submult_witness": list(report.submult_witness)
            if report.submult_witness is not None
            else None,
            "kappa_oracle": report.kappa_oracle,
            "kappa_minimax": report.kappa_minimax,
            "checked_range": report.checked_range,
            "composite": {k: float(v) for k, v in constants.items()},
        },
        "grid": {
            "eps": list(report.eps_grid),
            "max_dims": [int(v) for v in report.max_dims],
            "oracle_dims": [int(v) for v in report.oracle_dims],
            "oracle_rates": [float(v) for v in report.oracle_rates],
            "minimax_dims": None
            if report.minimax_dims is None
            else [int(v) for v in report.minimax_dims],
            "minimax_rates": None
            if report.minimax_rates is None
            else [float(v) for v in report.minimax_rates],
            "feasible": [bool(v) for v in report.feasible],
        },
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "selection.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if not args.quiet:
        dims = ", ".join(
            f"eps={e}: m*={m}" for e, m in zip(report.eps_grid, report.oracle_dims)
        )
        print(f"selection.json: {dims}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    cfg = _load_any(args.config)
    if args.reps is not None:
        raw = json.loads(json.dumps(cfg.raw))
        block = raw.get("audit", {"configs": 50, "reps": 100_000})
        block["reps"] = args.reps
        raw["audit"] = block
        cfg = ExperimentConfig(raw=raw, base_dir=cfg.base_dir)
    result = run_experiment(
        cfg, args.out, quiet=args.quiet, seed=args.seed, subset="audit"
    )
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code


def _cmd_sweep(args) -> int:
    cfg = _load_any(args.config)
    result = run_experiment(
        cfg, args.out, check=args.check, quiet=args.quiet,
        seed=args.seed, reps=args.reps, subset="sweep",
    )
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code


def _cmd_run(args) -> int:
    cfg = _load_any(args.config)
    result = run_experiment(
        cfg, args.out, check=args.check, quiet=args.quiet,
        seed=args.seed, reps=args.reps, subset="all",
    )
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igssm",
        description="Bayesian estimation laboratory for the indirect Gaussian sequence space model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps=False, check=False, eps=False, obs=False):
        p.add_argument("--config", required=True, help="config path or bundled config name")
        p.add_argument("--out", default="igssm_out", help="output directory (default: igssm_out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if reps:
            p.add_argument("--reps", type=int, default=None, help="override MC replications")
        if check:
            p.add_argument("--check", action="store_true", help="turn checks into the exit code")
        if eps:
            p.add_argument("--eps", type=float, default=None, help="noise level (default: first grid entry)")
        if obs:
            p.add_argument("--obs", required=True, help="observation.csv from the simulate stage")

    p = sub.add_parser("simulate", help="draw one observation vector")
    common(p, eps=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("posterior", help="per-coordinate posterior summary from an observation")
    common(p, obs=True)
    p.set_defaults(func=_cmd_posterior)

    p = sub.add_parser("select", help="dimension selections and assumption report")
    common(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("adapt", help="dimension posterior and adaptive estimate from an observation")
    common(p, obs=True)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("audit", help="run the tail-bound audit suite")
    common(p, reps=True)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("sweep", help="rate study: selection, MISE, log-log fit")
    common(p, reps=True, check=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("run", help="full experiment (sweep + concentration + audit)")
    common(p, reps=True, check=True)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as err:
        print(f"infeasible configuration: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
