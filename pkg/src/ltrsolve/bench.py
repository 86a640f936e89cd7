"""Experiment runner and command-line interface.

Runs the Lanczos solver and/or its dense oracle on the bundled test
problems from a fully deterministic experiment spec (flags or a JSON file),
and emits machine-readable reports: per-iteration CSV with a fixed column
order, and a JSON report carrying the config echo, summary metrics,
comparison metrics and figure-ready series.

Exit codes: 0 success, 2 usage/spec error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .exceptions import UsageError
from .gklb import gklb
from .operator import NonlinearProblem, add_noise, gradient
from .problems import build_problem61, build_synthetic
from .rtr import (compare_metrics, decompose_jacobian, factorization_defect,
                  rtr_solve)
from .solver import CSV_FIELDS, SolverConfig, SolverResult, ltr_solve

Array = np.ndarray

_OUTPUT_KINDS = ("table1", "table2", "error_series", "defect_sweep")
_SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)}


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Deterministic description of one experiment.

    ``solver`` holds keyword overrides for :class:`SolverConfig`; ``x0`` is
    ``"default"`` (problem-specific start), ``"truth"``, a scalar for a
    constant vector, or an explicit list.
    """

    problem: str = "param_ident"
    grid_n: int = 20
    size: int = 20
    spectrum_decay: float = 0.85
    nonlinearity_scale: float = 0.1
    residual_target: float = 0.1
    residual_mode: str = "tail"
    delta: float = 0.0
    seed: int = 0
    method: str = "ltr"
    ell: object = "adaptive"
    solver: dict = dataclasses.field(default_factory=dict)
    x0: object = "default"
    outputs: tuple = ("table2",)
    ell_sweep: tuple = (5, 10, 20, 40)

    def __post_init__(self):
        if self.problem not in ("param_ident", "synthetic"):
            raise UsageError(f"spec field 'problem': unknown value {self.problem!r}")
        if self.residual_mode not in ("tail", "random"):
            raise UsageError(
                f"spec field 'residual_mode': unknown value {self.residual_mode!r}")
        if self.method not in ("ltr", "rtr", "both"):
            raise UsageError(f"spec field 'method': unknown value {self.method!r}")
        if self.delta < 0:
            raise UsageError("spec field 'delta': must be >= 0")
        if not (isinstance(self.ell, int) or self.ell == "adaptive"):
            raise UsageError(
                f"spec field 'ell': expected integer or 'adaptive', got {self.ell!r}")
        for key in self.solver:
            if key not in _SOLVER_FIELDS:
                raise UsageError(f"spec field 'solver': unknown option {key!r}")
        for out in self.outputs:
            if out not in _OUTPUT_KINDS:
                raise UsageError(f"spec field 'outputs': unknown kind {out!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["outputs"] = list(self.outputs)
        d["ell_sweep"] = list(self.ell_sweep)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown spec fields: {sorted(unknown)}")
        raw = dict(raw)
        for tup in ("outputs", "ell_sweep"):
            if tup in raw:
                raw[tup] = tuple(raw[tup])
        return cls(**raw)


@dataclasses.dataclass
class ExperimentReport:
    """Everything an experiment produced, JSON-serializable via ``to_dict``."""

    spec: ExperimentSpec
    version: str
    commit: Optional[str]
    timestamp: str
    methods: dict
    timing: dict
    iterate_agreement: Optional[float] = None
    table1: Optional[dict] = None
    per_iteration_errors: Optional[dict] = None
    error_series: Optional[dict] = None
    defect_sweep: Optional[list] = None

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "commit": self.commit,
            "timestamp": self.timestamp,
            "spec": self.spec.to_dict(),
            "methods": self.methods,
            "timing": self.timing,
            "iterate_agreement": self.iterate_agreement,
            "table1": self.table1,
            "per_iteration_errors": self.per_iteration_errors,
            "error_series": self.error_series,
            "defect_sweep": self.defect_sweep,
        }


def _git_commit() -> Optional[str]:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent, capture_output=True,
            text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def _build_problem(spec: ExperimentSpec):
    """Returns (operator, exact data vector, default start)."""
    if spec.problem == "param_ident":
        prob = build_problem61(spec.grid_n, spec.residual_target, spec.seed,
                               spec.residual_mode)
        return prob.operator(), prob.exact_data(), prob.default_start()
    op = build_synthetic(spec.size, spec.spectrum_decay,
                         spec.nonlinearity_scale, spec.seed)
    return op, op.eval(op.known_solution), np.zeros(op.n)


def _resolve_x0(spec: ExperimentSpec, op: NonlinearProblem,
                default_start: Array) -> Array:
    if isinstance(spec.x0, str):
        if spec.x0 == "truth":
            return op.known_solution.copy()
        if spec.x0 == "default":
            return default_start
        raise UsageError(f"spec field 'x0': unknown value {spec.x0!r}")
    if np.isscalar(spec.x0):
        return np.full(op.n, float(spec.x0))
    x0 = np.asarray(spec.x0, dtype=float)
    if x0.shape != (op.n,):
        raise UsageError(f"spec field 'x0': expected length {op.n}")
    return x0


def _method_summary(op: NonlinearProblem, data, result: SolverResult) -> dict:
    x = result.x_final
    res_norm = float(np.linalg.norm(op.eval(x) - data.y_delta))
    summary = {
        "stop_reason": result.stop_reason,
        "it": result.totals["outer"],
        "it_inner": result.totals["inner"],
        "residual_norm": res_norm,
        "err_norm": None,
        "err_rmse": None,
        "records": [dataclasses.asdict(r) for r in result.records],
    }
    if op.known_solution is not None:
        err = float(np.linalg.norm(x - op.known_solution))
        summary["err_norm"] = err
        summary["err_rmse"] = err / np.sqrt(op.n)
    return summary


def sweep_subspace_metrics(op: NonlinearProblem, data, x0: Array,
                           ells, cfg: SolverConfig) -> dict:
    """err_r / err_p per subspace dimension, at x0 with a shared radius."""
    g = gradient(op, x0, data)
    dec = decompose_jacobian(op, x0)
    snorm_exact = float(np.linalg.norm(dec.s * (dec.Vt @ g)))
    delta = cfg.mu0 * snorm_exact
    out = {"ells": [], "err_r": [], "err_p": []}
    for ell in ells:
        ell = min(int(ell), op.n)
        if ell in out["ells"]:
            continue
        bid = gklb(lambda v: op.jac_apply(x0, v),
                   lambda u: op.jac_transpose_apply(x0, u), g, ell)
        metrics = compare_metrics(dec, bid, g, delta, cfg.secular)
        out["ells"].append(ell)
        out["err_r"].append(metrics["err_r"])
        out["err_p"].append(metrics["err_p"])
    return out


def sweep_defect(op: NonlinearProblem, data, x0: Array, ells) -> list:
    """Factorization defect against the dense normal operator, per dimension."""
    g = gradient(op, x0, data)
    J = np.asarray(op.jac_dense(x0), dtype=float)
    B = J.T @ J
    out = []
    for ell in ells:
        ell = min(int(ell), op.n)
        bid = gklb(lambda v: op.jac_apply(x0, v),
                   lambda u: op.jac_transpose_apply(x0, u), g, ell)
        out.append([ell, factorization_defect(bid, B)])
    return out


def run(spec: ExperimentSpec) -> ExperimentReport:
    """Execute the spec and assemble the report.

    When both methods run on a problem with a dense hook, the Lanczos run is
    additionally instrumented to compare its square-rooted gradient and step
    against the dense oracle at every accepted iterate (instrumentation time
    is excluded from the reported wall times).
    """
    op, y, default_start = _build_problem(spec)
    data = add_noise(y, spec.delta, spec.seed + 1)
    x0 = _resolve_x0(spec, op, default_start)
    overrides = dict(spec.solver)
    overrides.setdefault("ell", spec.ell)
    cfg = SolverConfig(**overrides)

    methods = {}
    timing = {"wall_time": {}, "time_ratio": None}
    run_both = spec.method == "both"
    dense_ok = op.jac_dense is not None
    iterates = {}
    per_iter = {"k": [], "err_r": [], "err_p": []} if run_both and dense_ok else None

    def make_probe(name, collect_metrics):
        xs = iterates.setdefault(name, [])

        def probe(k, x, g, gnorm, f, state, Delta, w_hat, lam, p):
            xs.append(x.copy())
            if collect_metrics and per_iter is not None:
                bid, tsvd = state.payload
                dec = decompose_jacobian(op, x)
                m = compare_metrics(dec, bid, g, Delta, cfg.secular, tsvd)
                per_iter["k"].append(k)
                per_iter["err_r"].append(m["err_r"])
                per_iter["err_p"].append(m["err_p"])
        return probe

    if spec.method in ("ltr", "both"):
        result = ltr_solve(op, data, x0, cfg,
                           probe=make_probe("ltr", run_both and dense_ok))
        iterates["ltr"].append(result.x_final.copy())
        methods["ltr"] = _method_summary(op, data, result)
        timing["wall_time"]["ltr"] = result.totals["wall_time"]
    if spec.method in ("rtr", "both"):
        result = rtr_solve(op, data, x0, cfg, probe=make_probe("rtr", False))
        iterates["rtr"].append(result.x_final.copy())
        methods["rtr"] = _method_summary(op, data, result)
        timing["wall_time"]["rtr"] = result.totals["wall_time"]

    agreement = None
    if run_both:
        ltr_w, rtr_w = timing["wall_time"]["ltr"], timing["wall_time"]["rtr"]
        timing["time_ratio"] = rtr_w / ltr_w if ltr_w > 0 else None
        # agreement over the first ten steps; over longer horizons a single
        # ulp-level difference eventually flips a radius-update branch and
        # the two trajectories legitimately separate
        common = min(len(iterates["ltr"]), len(iterates["rtr"]), 11)
        if common:
            agreement = float(max(
                np.linalg.norm(a - b) for a, b in
                zip(iterates["ltr"][:common], iterates["rtr"][:common])))

    table1 = None
    if "table1" in spec.outputs and dense_ok:
        table1 = sweep_subspace_metrics(op, data, x0, spec.ell_sweep, cfg)

    error_series = None
    if "error_series" in spec.outputs and op.known_solution is not None:
        error_series = {}
        for name, xs in iterates.items():
            errs = [float(np.linalg.norm(x - op.known_solution)) for x in xs]
            error_series[name] = [[k, e] for k, e in enumerate(errs)]

    defect_sweep = None
    if "defect_sweep" in spec.outputs and dense_ok:
        defect_sweep = sweep_defect(op, data, x0, spec.ell_sweep)

    return ExperimentReport(
        spec=spec,
        version=__version__,
        commit=_git_commit(),
        timestamp=datetime.now(timezone.utc).isoformat(),
        methods=methods,
        timing=timing,
        iterate_agreement=agreement,
        table1=table1,
        per_iteration_errors=per_iter,
        error_series=error_series,
        defect_sweep=defect_sweep,
    )


# -- emission -------------------------------------------------------------


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_records_csv(records: list, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow(_csv_cell(rec[name]) for name in CSV_FIELDS)


def emit(report: ExperimentReport, format: str, path) -> list:
    """Write the report; returns the list of files written.

    ``format="csv"`` writes one records table per method (suffixed with the
    method name when both ran) plus a ``*.summary.json`` sidecar with the
    record-free report.  ``format="json"`` writes the complete report to one
    file.  Existing files are overwritten.
    """
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        if format == "json":
            target = base.with_suffix(".json")
            with open(target, "w") as fh:
                json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(target)
        elif format == "csv":
            names = list(report.methods)
            for name in names:
                suffix = f".{name}.csv" if len(names) > 1 else ".csv"
                target = base.with_suffix(suffix)
                _write_records_csv(report.methods[name]["records"], target)
                written.append(target)
            summary = report.to_dict()
            for method in summary["methods"].values():
                method.pop("records", None)
            target = base.with_suffix(".summary.json")
            with open(target, "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(target)
        else:
            raise UsageError(f"unknown output format {format!r}")
    except OSError as exc:
        raise RuntimeError(f"failed to write {exc.filename or base}: {exc}") from exc
    return [str(p) for p in written]


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# -- command line ---------------------------------------------------------


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ltr-bench",
        description="Run trust-region experiments on the bundled problems.")
    p.add_argument("--problem", choices=["param_ident", "synthetic"],
                   default="param_ident")
    p.add_argument("--grid-n", type=int, default=20,
                   help="grid points per side for param_ident")
    p.add_argument("--size", type=int, default=20,
                   help="dimension of the synthetic problem")
    p.add_argument("--delta", type=float, default=0.0, help="noise level")
    p.add_argument("--residual-mode", choices=["tail", "random"],
                   default="tail",
                   help="direction of the built-in data perturbation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["ltr", "rtr", "both"], default="ltr")
    p.add_argument("--ell", default="adaptive",
                   help="subspace dimension: integer or 'adaptive'")
    p.add_argument("--q", type=float, default=None,
                   help="projected model-norm threshold")
    p.add_argument("--tau-bar", type=float, default=None,
                   help="discrepancy-principle constant")
    p.add_argument("--kmax", type=int, default=None, help="iteration cap")
    p.add_argument("--x0", default=None,
                   help="'default', 'truth', or a constant value")
    p.add_argument("--outputs", default=None,
                   help="comma-separated: " + ",".join(_OUTPUT_KINDS))
    p.add_argument("--out", default=None, help="output path base")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--spec", default=None,
                   help="JSON spec file; overrides the flags above")
    return p


def _spec_from_args(args) -> ExperimentSpec:
    if args.spec is not None:
        try:
            with open(args.spec) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read spec file {args.spec}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(
                f"spec file {args.spec}: line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from exc
        return ExperimentSpec.from_dict(raw)

    ell = args.ell
    if ell != "adaptive":
        try:
            ell = int(ell)
        except ValueError:
            raise UsageError(
                f"--ell expects an integer or 'adaptive', got {ell!r}") from None
    solver = {}
    if args.q is not None:
        solver["q"] = args.q
    if args.tau_bar is not None:
        solver["tau_bar"] = args.tau_bar
    if args.kmax is not None:
        solver["k_max"] = args.kmax
    x0 = "default"
    if args.x0 is not None:
        if args.x0 in ("default", "truth"):
            x0 = args.x0
        else:
            try:
                x0 = float(args.x0)
            except ValueError:
                raise UsageError(
                    f"--x0 expects 'default', 'truth' or a number, got {args.x0!r}"
                ) from None
    outputs = ("table2",)
    if args.outputs is not None:
        outputs = tuple(s.strip() for s in args.outputs.split(",") if s.strip())
    return ExperimentSpec(
        problem=args.problem, grid_n=args.grid_n, size=args.size,
        residual_mode=args.residual_mode, delta=args.delta, seed=args.seed,
        method=args.method, ell=ell, solver=solver, x0=x0, outputs=outputs)


def _print_summary(report: ExperimentReport, out=sys.stdout) -> None:
    for name, s in report.methods.items():
        err = "" if s["err_norm"] is None else f"  err={s['err_norm']:.3e}"
        wall = report.timing["wall_time"].get(name, float("nan"))
        print(f"{name}: stop={s['stop_reason']}  it={s['it']}  "
              f"inner={s['it_inner']}  residual={s['residual_norm']:.3e}"
              f"{err}  wall={wall:.2f}s", file=out)
    if report.timing["time_ratio"] is not None:
        print(f"time ratio (rtr/ltr): {report.timing['time_ratio']:.2f}",
              file=out)
    if report.iterate_agreement is not None:
        print(f"iterate agreement: {report.iterate_agreement:.3e}", file=out)


def main(argv=None) -> int:
    parser = build_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = _spec_from_args(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(spec)
        _print_summary(report)
        if args.out is not None:
            for path in emit(report, args.format, args.out):
                print(f"wrote {path}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> exit code 1
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
