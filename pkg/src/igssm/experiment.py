"""End-to-end experiment runner: builds the sequences from a validated
config, runs the requested Monte Carlo stages across the noise grid, and
writes the CSV/JSON artifacts.

Outputs are deterministic for a fixed (config, seed): replication streams
are keyed by counter, grid tasks are gathered in submission order, and no
timestamps are embedded.  Exit codes: 0 success, 2 config error, 3
infeasible configuration, 4 failed acceptance checks (with ``check=True``).
Partially written artifacts are removed on failure.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .montecarlo import (
    TailBoundConfig,
    audit_tail_bounds,
    mc_bracket_mass,
    mc_concentration,
    mc_mise,
    random_tail_suite,
    rate_regression,
    theoretical_exponent,
)
from .selection import (
    InfeasibleError,
    bracket_dimensions,
    check_assumptions,
    composite_constants,
    max_dimension,
    minimax_dimension,
    oracle_dimension,
)
from .sequences import make_weights

__all__ = ["ExperimentResult", "run_experiment", "EXIT_OK", "EXIT_CONFIG", "EXIT_INFEASIBLE", "EXIT_CHECK"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CHECK = 4

_FITTED_KINDS = ("oracle", "minimax", "adaptive")


@dataclass
class ExperimentResult:
    exit_code: int
    outputs: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    error: str | None = None


def _max_workers() -> int:
    env = os.environ.get("IGSSM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def _parallel_map(fn, tasks):
    """Map preserving task order; serial when one worker suffices."""
    workers = min(_max_workers(), max(len(tasks), 1))
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


class _Writer:
    """Serialized artifact writer that can undo itself on failure."""

    def __init__(self, out_dir: Path, cfg: ExperimentConfig, seed: int):
        self.out_dir = out_dir
        self.cfg = cfg
        self.seed = seed
        self.written: list = []

    def csv(self, name: str, header: list, rows: list) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self.written.append(path)
        sidecar = self.out_dir / (path.stem + ".meta.json")
        meta = {
            "artifact": name,
            "config_sha256": self.cfg.sha256(),
            "seed": self.seed,
            "version": __version__,
        }
        sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        self.written.append(sidecar)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        path.write_text(
            json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass
        self.written.clear()


def _selection_at(theta, prior, op, wclass, eps):
    """(m_max, oracle SelectionResult, minimax SelectionResult | None)."""
    m_max = max_dimension(op, eps)
    oracle = oracle_dimension(theta, prior, op, eps)
    minimax = minimax_dimension(wclass, op, eps) if wclass is not None else None
    return m_max, oracle, minimax


def _rates_rows(cfg, report):
    rows = []
    kappa = report.kappa_minimax if report.kappa_minimax is not None else report.kappa_oracle
    for i, eps in enumerate(report.eps_grid):
        rows.append(
            [
                eps,
                report.oracle_dims[i],
                report.oracle_rates[i],
                report.minimax_dims[i] if report.minimax_dims is not None else None,
                report.minimax_rates[i] if report.minimax_rates is not None else None,
                report.d,
                report.c_lambda,
                report.l_lambda,
                kappa,
            ]
        )
    return rows


def _mise_stage(cfg, theta, prior, op, wclass, report, c_lambda, seed, reps):
    tasks = []
    for i, eps in enumerate(cfg.eps_grid):
        for kind in cfg.estimators:
            if kind == "fixed":
                for m in cfg.fixed_dims:
                    tasks.append((eps, kind, m, i))
            else:
                tasks.append((eps, kind, None, i))

    def run(task):
        eps, kind, m, i = task
        est = mc_mise(
            kind, theta, prior, op, eps, reps, seed,
            m=m, weighted_class=wclass, c_lambda=c_lambda,
        )
        if kind == "fixed":
            dim = m
        elif kind == "oracle":
            dim = report.oracle_dims[i]
        elif kind == "minimax":
            dim = report.minimax_dims[i]
        else:
            dim = report.max_dims[i]
        return [eps, kind, dim, est.value, est.se, est.reps]

    rows = _parallel_map(run, tasks)

    fits = {}
    model = cfg.raw["model"]
    block = cfg.raw.get("class")
    theory = theoretical_exponent(
        model["family"],
        model.get("decay"),
        block["family"] if block else "none",
        block["exponent"] if block else None,
    )
    for kind in _FITTED_KINDS:
        pts = [(r[0], r[3], r[4]) for r in rows if r[1] == kind]
        if len(pts) < 2:
            continue
        eps_arr = np.array([p[0] for p in pts])
        mise_arr = np.array([p[1] for p in pts])
        se_arr = np.array([p[2] for p in pts])
        fit = rate_regression(eps_arr, mise_arr, se=se_arr, theory=theory)
        span = math.log10(float(eps_arr.max()) / float(eps_arr.min()))
        adequate = eps_arr.size >= 4 and span >= 3.0 - 1e-9
        fits[kind] = {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "theory_kind": theory.kind,
            "exponent": theory.exponent,
            "note": theory.note,
            "adequate_grid": adequate,
            "matches": fit.slope_matches(cfg.check_rate_tol) if adequate else None,
            "eps": list(eps_arr),
            "mise": list(mise_arr),
            "se": list(se_arr),
        }
    return rows, fits


def _concentration_stage(cfg, theta, prior, op, wclass, report, constants, c_lambda, seed, reps, draws):
    tasks = []
    for eps in cfg.concentration_eps_grid:
        m_max, oracle, minimax = _selection_at(theta, prior, op, wclass, eps)
        for kind in cfg.concentration_kinds:
            sel = minimax if kind.endswith("_minimax") else oracle
            if sel.dimension > m_max:
                raise InfeasibleError(
                    f"selected dimension {sel.dimension} exceeds the search "
                    f"range {m_max} at eps={eps} for {kind}"
                )
            tasks.append((eps, kind, sel, m_max))

    def run(task):
        eps, kind, sel, m_max = task
        if kind.startswith("bracket"):
            mode = "minimax" if kind.endswith("_minimax") else "oracle"
            est = mc_bracket_mass(
                theta, prior, op, eps, reps, seed, report, c_lambda,
                mode=mode, weighted_class=wclass,
            )
            m_lo, m_hi = bracket_dimensions(
                theta, prior, op, eps, report, mode=mode,
                weighted_class=wclass, c_lambda=c_lambda,
            )
            return [eps, kind, sel.dimension, None, None, m_lo, m_hi, est.value, est.se]
        if kind == "sieve_oracle":
            const, two_sided, post = constants["oracle_sieve"], True, "fixed"
        elif kind == "hierarchical_oracle":
            const, two_sided, post = constants["oracle_hierarchical"], True, "hierarchical"
        elif kind == "sieve_minimax":
            const, two_sided, post = constants["minimax_sieve"], True, "fixed"
        else:  # hierarchical_minimax: upper bound only — no uniform lower edge
            const, two_sided, post = constants["minimax_hierarchical"], False, "hierarchical"
        est = mc_concentration(
            post, theta, prior, op, eps, const, sel.rate, reps, draws, seed,
            m=sel.dimension, c_lambda=c_lambda, two_sided=two_sided,
        )
        dim = sel.dimension if post == "fixed" else m_max
        return [eps, kind, dim, const, sel.rate, None, None, est.value, est.se]

    return _parallel_map(run, tasks)


def _audit_stage(cfg, seed):
    block = cfg.audit_block or {"configs": 50, "reps": 100_000}
    suite = random_tail_suite(int(block["configs"]), seed)
    audit_reps = int(block["reps"])

    def run(indexed):
        i, tail_cfg = indexed
        audit = audit_tail_bounds(tail_cfg, audit_reps, seed, rep=i)
        return [
            i,
            tail_cfg.m,
            tail_cfg.c,
            tail_cfg.var_bound,
            tail_cfg.max_bound,
            tail_cfg.shift_bound,
            audit.prob_bound,
            audit.lower_emp,
            audit.lower_se,
            audit.upper_emp,
            audit.upper_se,
            audit.overshoot_bound,
            audit.overshoot_emp,
            audit.overshoot_se,
            audit.passed,
        ]

    return _parallel_map(run, list(enumerate(suite)))


def _run_checks(cfg, fits, conc_rows, audit_rows):
    failures = []
    for kind, fit in fits.items():
        if fit["matches"] is False:
            failures.append(
                f"rate: {kind} slope {fit['slope']:.4f} outside "
                f"{fit['exponent']} +/- {cfg.check_rate_tol}"
            )
    if conc_rows:
        floor = cfg.check_concentration_floor
        ceiling = cfg.check_bracket_ceiling
        smallest = min(r[0] for r in conc_rows)
        for row in conc_rows:
            eps, kind, mass = row[0], row[1], row[7]
            if eps != smallest:
                continue
            if kind.startswith("bracket"):
                if mass > ceiling:
                    failures.append(
                        f"bracket: {kind} outside-mass {mass:.4f} > {ceiling} at eps={eps}"
                    )
            elif mass < floor:
                failures.append(
                    f"concentration: {kind} band mass {mass:.4f} < {floor} at eps={eps}"
                )
    for row in audit_rows:
        if row[-1] is False:
            failures.append(f"audit: config {row[0]} exceeded its tail bound")
    return failures


def run_experiment(
    cfg: ExperimentConfig,
    out_dir,
    check: bool = False,
    quiet: bool = False,
    seed: int | None = None,
    reps: int | None = None,
    subset: str = "all",
) -> ExperimentResult:
    """Run the experiment described by ``cfg`` and write artifacts under
    ``out_dir``.  ``subset`` limits the stages: "sweep" runs selection +
    MISE + rate fits, "audit" only the tail-bound suite, "all" everything
    the config asks for."""
    if subset not in ("all", "sweep", "audit"):
        raise ValueError(f"unknown subset {subset!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else int(seed)
    reps = cfg.mc_reps if reps is None else int(reps)
    draws = cfg.mc_draws
    writer = _Writer(out_dir, cfg, seed)
    messages = []

    try:
        n = cfg.sequence_length()
        op = cfg.build_operator(n)
        theta = cfg.build_truth(op.n)
        prior = cfg.build_prior(op)
        wclass = cfg.build_class()
        if wclass is not None and wclass.weights.size != op.n:
            # explicit operators fix their own length; rebuild the class on it
            block = cfg.raw["class"]
            wclass = make_weights(
                block["family"], op.n, exponent=block["exponent"], radius=block["radius"]
            )

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
            "seed": seed,
            "n": op.n,
            "constants": {
                "d": report.d,
                "c_lambda": report.c_lambda,
                "c_lambda_used": c_lambda,
                "l_lambda": report.l_lambda,
                "submultiplicative": report.submultiplicative,
                "submult_witness": report.submult_witness,
                "kappa_oracle": report.kappa_oracle,
                "kappa_minimax": report.kappa_minimax,
                "checked_range": report.checked_range,
                "composite": constants,
            },
            "grid": {
                "eps": list(report.eps_grid),
                "max_dims": list(report.max_dims),
                "oracle_dims": list(report.oracle_dims),
                "oracle_rates": list(report.oracle_rates),
                "minimax_dims": None
                if report.minimax_dims is None
                else list(report.minimax_dims),
                "minimax_rates": None
                if report.minimax_rates is None
                else list(report.minimax_rates),
                "feasible": list(report.feasible),
            },
        }

        fits: dict = {}
        conc_rows: list = []
        audit_rows: list = []

        if subset in ("all", "sweep"):
            writer.csv(
                "rates.csv",
                ["eps", "m_star", "phi_star", "m_circ", "phi_circ", "d", "C_lambda", "L_lambda", "kappa"],
                _rates_rows(cfg, report),
            )
            messages.append(f"rates.csv: {len(report.eps_grid)} grid points")
            if cfg.estimators:
                mise_rows, fits = _mise_stage(
                    cfg, theta, prior, op, wclass, report, c_lambda, seed, reps
                )
                writer.csv(
                    "mise.csv", ["eps", "kind", "m", "mise", "se", "reps"], mise_rows
                )
                messages.append(f"mise.csv: {len(mise_rows)} rows")
                payload["rates_fit"] = fits

        if subset == "all" and cfg.concentration_kinds:
            conc_rows = _concentration_stage(
                cfg, theta, prior, op, wclass, report, constants, c_lambda, seed, reps, draws
            )
            writer.csv(
                "concentration.csv",
                ["eps", "kind", "m", "constant", "rate", "m_lo", "m_hi", "mass", "se"],
                conc_rows,
            )
            messages.append(f"concentration.csv: {len(conc_rows)} rows")
            payload["concentration"] = [
                {"eps": r[0], "kind": r[1], "mass": r[7], "se": r[8]} for r in conc_rows
            ]

        if subset == "audit" or (subset == "all" and cfg.audit_block is not None):
            audit_rows = _audit_stage(cfg, seed)
            writer.csv(
                "audit.csv",
                [
                    "index", "m", "c", "var_bound", "max_bound", "shift_bound",
                    "prob_bound", "lower_emp", "lower_se", "upper_emp", "upper_se",
                    "overshoot_bound", "overshoot_emp", "overshoot_se", "passed",
                ],
                audit_rows,
            )
            n_passed = sum(1 for r in audit_rows if r[-1])
            messages.append(f"audit.csv: {n_passed}/{len(audit_rows)} configs within bounds")
            payload["audit"] = {"configs": len(audit_rows), "passed": n_passed}

        failures = _run_checks(cfg, fits, conc_rows, audit_rows) if check else []
        payload["checks"] = {"enabled": bool(check), "failures": failures}
        writer.json("report.json", payload)

        if not quiet:
            for line in messages:
                print(line)
            for failure in failures:
                print(f"check failed: {failure}")
        code = EXIT_CHECK if failures else EXIT_OK
        return ExperimentResult(code, list(writer.written), payload, failures)
    except InfeasibleError as err:
        writer.cleanup()
        return ExperimentResult(EXIT_INFEASIBLE, [], {}, [], error=str(err))
    except ConfigError as err:
        writer.cleanup()
        return ExperimentResult(EXIT_CONFIG, [], {}, [], error=str(err))
