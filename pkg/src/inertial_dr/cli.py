"""Command-line entry point: ``inertial-dr {validate,cluster,heron,toy}``.

Exit codes: 0 success, 1 invalid parameters, 2 non-convergence (or a
failed property suite for ``toy``), 3 I/O error.

Per-iteration traces are written as CSV with the header
``n,rmse,fp_residual,objective`` or as JSON holding the same rows plus the
run configuration and library version. Files go to ``--output`` and are
written atomically. Reference solutions are cached under
``$INERTIAL_DR_CACHE`` (or ``--cache-dir``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all
from .experiments import (RunReport, build_clustering_problem, build_heron_problem,
                          cluster_labels, clustering_instance, gen_half_moons,
                          heron_instance, reference_solution, run_primal_dual,
                          run_subgradient)
from .fixpoint import ScheduleError, best_delta, constant_schedule, validate_schedule
from .primal_dual import (PrimalDualProblem, StepSizeError, StepSizes, default_stepsizes,
                          validate_stepsizes)

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3
CSV_HEADER = ("n", "rmse", "fp_residual", "objective")
CLUSTER_GAMMA = {1: 4.0, 2: 5.2}


class CLIError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


@dataclass
class RunConfig:
    command: str
    alpha: float = 0.2
    sigma: float = 1e-6
    delta: float | None = None
    lam: float | None = None
    tau: float | None = None
    sigma_i: list | None = None
    norms: list | None = None
    eps: list = field(default_factory=lambda: [1e-4])
    p: int = 2
    gamma_clust: float | None = None
    K: int = 10
    phi: float = 0.5
    per_moon: int = 100
    noise: float = 0.05
    n: list = field(default_factory=lambda: [2, 3])
    m: list = field(default_factory=lambda: [5, 10, 20, 50])
    seed: int = 0
    max_iter: int = 1_000_000
    timeout: float = 60.0
    subgradient_c: float = 2.0
    output_path: str | None = None
    format: str = "csv"
    cache_dir: str | None = None
    quick: bool = False

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        known = {k: v for k, v in vars(ns).items() if k in cls.__dataclass_fields__}
        cfg = cls(**known)
        if cfg.command == "cluster" and cfg.gamma_clust is None:
            cfg.gamma_clust = CLUSTER_GAMMA[cfg.p]
        return cfg

    def schedule(self, alpha: float | None = None):
        """The Douglas-Rachford schedule for ``alpha`` (default: the configured one)."""
        a = self.alpha if alpha is None else alpha
        return constant_schedule(a, sigma=self.sigma, delta=self.delta,
                                 lam=self.lam if a == self.alpha else None, relaxation=2.0)

    def echo(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- output

def _atomic_write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else ("nan" if math.isnan(v) else str(v))


def trace_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for n, r, fp, obj in report.csv_rows():
        w.writerow((n, _fmt(r), _fmt(fp), _fmt(obj)))
    return buf.getvalue()


def trace_json(report: RunReport, cfg: RunConfig, cell: dict) -> str:
    rows = [dict(zip(CSV_HEADER, (n, r, fp, obj))) for n, r, fp, obj in report.csv_rows()]
    for row in rows:
        for k in CSV_HEADER[1:]:
            if not math.isfinite(row[k]):
                row[k] = None
    doc = {"version": __version__, "config": cfg.echo(), "cell": cell,
           "algorithm": report.algorithm_tag, "converged": report.converged,
           "timed_out": report.timed_out, "iterations": report.iterations, "rows": rows}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_trace(cfg: RunConfig, stem: str, report: RunReport, cell: dict) -> None:
    if cfg.output_path is None:
        return
    out = Path(cfg.output_path)
    if cfg.format == "csv":
        _atomic_write(out / f"{stem}.csv", trace_csv(report))
    else:
        _atomic_write(out / f"{stem}.json", trace_json(report, cfg, cell))


def render_cell(report: RunReport) -> str:
    if report.timed_out:
        return "--"
    text = f"{report.wall_time:.2f} s ({report.iterations})"
    return text if report.converged else text + " [not converged]"


def write_summary(cfg: RunConfig, rows: list[dict], columns: list[str]) -> None:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for r in rows:
        print("  ".join(str(r[c]).ljust(widths[c]) for c in columns))
    if cfg.output_path is None:
        return
    out = Path(cfg.output_path)
    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
        _atomic_write(out / "summary.csv", buf.getvalue())
    else:
        doc = {"version": __version__, "config": cfg.echo(), "cells": rows}
        _atomic_write(out / "summary.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- commands

def _check_schedule(cfg: RunConfig, alpha: float):
    try:
        return cfg.schedule(alpha)
    except ScheduleError as exc:
        raise CLIError(f"invalid schedule: {exc}", EXIT_INVALID) from exc


def _steps(cfg: RunConfig, problem: PrimalDualProblem) -> StepSizes:
    try:
        if cfg.tau is None and cfg.sigma_i is None:
            return default_stepsizes(problem)
        if cfg.tau is None or cfg.sigma_i is None:
            raise CLIError("--tau and --sigma-i must be given together", EXIT_INVALID)
        sig = list(cfg.sigma_i)
        if len(sig) == 1:
            sig = sig * problem.m
        return validate_stepsizes(problem, cfg.tau, sig)
    except (StepSizeError, ValueError) as exc:
        raise CLIError(f"invalid step sizes: {exc}", EXIT_INVALID) from exc


def cmd_validate(cfg: RunConfig) -> int:
    delta = cfg.delta if cfg.delta is not None else (
        best_delta(cfg.alpha, cfg.sigma) if 0.0 <= cfg.alpha < 1.0 else 1.0)
    ok = True
    try:
        lam_max = validate_schedule(cfg.alpha, cfg.sigma, delta)
    except ScheduleError as exc:
        print(f"schedule inadmissible: {exc}")
        return EXIT_INVALID
    print(f"alpha={cfg.alpha} sigma={cfg.sigma} delta={delta}")
    print(f"lambda_max = {lam_max:.6f}")
    print(f"DR bound 2*lambda_max = {2 * lam_max:.6f}")
    if cfg.lam is not None:
        if 0.0 < cfg.lam < 2 * lam_max:
            print(f"lambda = {cfg.lam}: admissible for Douglas-Rachford"
                  + (" and the fixed-point iteration" if cfg.lam <= lam_max else ""))
        else:
            print(f"lambda = {cfg.lam}: violates 0 < lambda < 2*lambda_max = {2 * lam_max:.6f}")
            ok = False
    if cfg.tau is not None or cfg.sigma_i is not None:
        if cfg.tau is None or cfg.sigma_i is None:
            print("step-size check needs both --tau and --sigma-i")
            return EXIT_INVALID
        sig = np.asarray(cfg.sigma_i, dtype=float)
        norms = np.asarray(cfg.norms if cfg.norms else [1.0] * sig.size, dtype=float)
        if norms.size == 1 and sig.size > 1:
            norms = np.full(sig.size, norms[0])
        if norms.size != sig.size:
            print("--norms must give one value per --sigma-i entry")
            return EXIT_INVALID
        if cfg.tau <= 0 or np.any(sig <= 0) or np.any(norms <= 0):
            print("tau, sigma_i and norms must be positive")
            return EXIT_INVALID
        coupling = float(cfg.tau * np.sum(sig * norms ** 2))
        if coupling < 4.0:
            rho = (1.0 - 0.5 * math.sqrt(coupling)) * min(1.0 / cfg.tau, *(1.0 / sig))
            print(f"tau * sum sigma_i ||L_i||^2 = {coupling:.6g} < 4: admissible, rho = {rho:.6g}")
        else:
            print(f"tau * sum sigma_i ||L_i||^2 = {coupling:.6g} violates < 4")
            ok = False
    return EXIT_OK if ok else EXIT_INVALID


def _alpha_variants(cfg: RunConfig) -> list[tuple[str, float]]:
    variants = [("inertial", cfg.alpha)] if cfg.alpha > 0 else []
    return variants + [("classical", 0.0)]


def cmd_cluster(cfg: RunConfig) -> int:
    if cfg.p not in (1, 2):
        raise CLIError("--p must be 1 or 2", EXIT_INVALID)
    for a in {cfg.alpha, 0.0}:
        _check_schedule(cfg, a)
    try:
        pts, _ = gen_half_moons(cfg.seed, cfg.per_moon, cfg.noise)
        inst = clustering_instance(pts, cfg.p, cfg.gamma_clust, cfg.K, cfg.phi)
        problem = build_clustering_problem(inst)
    except ValueError as exc:
        raise CLIError(f"invalid clustering instance: {exc}", EXIT_INVALID) from exc
    steps = _steps(cfg, problem)
    ref = _reference(cfg, problem, inst.content_hash())
    ref_clusters = int(cluster_labels(ref, inst.n_points, inst.dim).max()) + 1
    rows, failed = [], False
    for eps in cfg.eps:
        for name, alpha in _alpha_variants(cfg):
            rep = run_primal_dual(problem, ref, eps, alpha, cfg.lam if alpha == cfg.alpha else None,
                                  steps, cfg.max_iter, f"pd-dr-{name}", cfg.sigma, cfg.delta,
                                  time_limit=cfg.timeout)
            clusters = int(cluster_labels(rep.x, inst.n_points, inst.dim).max()) + 1
            cell = {"problem": "cluster", "p": cfg.p, "eps": eps, "algorithm": rep.algorithm_tag,
                    "alpha": alpha}
            write_trace(cfg, f"cluster-p{cfg.p}-{name}-eps{eps:g}", rep, cell)
            failed |= not rep.converged and not rep.timed_out
            rows.append({"eps": f"{eps:g}", "algorithm": rep.algorithm_tag, "alpha": alpha,
                         "iterations": rep.iterations, "converged": rep.converged,
                         "clusters": clusters, "cell": render_cell(rep)})
    print(f"reference: {ref_clusters} clusters")
    write_summary(cfg, rows, ["eps", "algorithm", "alpha", "iterations", "converged", "clusters", "cell"])
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def cmd_heron(cfg: RunConfig) -> int:
    for a in {cfg.alpha, 0.0}:
        _check_schedule(cfg, a)
    if cfg.subgradient_c <= 0:
        raise CLIError("--subgradient-c must be positive", EXIT_INVALID)
    rows, failed = [], False
    for n in cfg.n:
        for m in cfg.m:
            try:
                inst = heron_instance(n, m, cfg.seed)
            except ValueError as exc:
                raise CLIError(f"invalid Heron instance: {exc}", EXIT_INVALID) from exc
            problem = build_heron_problem(inst)
            steps = _steps(cfg, problem)
            ref = _reference(cfg, problem, inst.content_hash())
            for eps in cfg.eps:
                row = {"n": n, "m": m, "eps": f"{eps:g}"}
                reports = []
                for name, alpha in _alpha_variants(cfg):
                    reports.append((name, run_primal_dual(
                        problem, ref, eps, alpha, cfg.lam if alpha == cfg.alpha else None, steps,
                        cfg.max_iter, f"pd-dr-{name}", cfg.sigma, cfg.delta, time_limit=cfg.timeout)))
                reports.append(("subgradient", run_subgradient(inst, ref, eps, cfg.subgradient_c,
                                                               cfg.max_iter, cfg.timeout)))
                for name, rep in reports:
                    cell = {"problem": "heron", "n": n, "m": m, "eps": eps, "algorithm": rep.algorithm_tag}
                    write_trace(cfg, f"heron-n{n}-m{m}-{name}-eps{eps:g}", rep, cell)
                    failed |= not rep.converged and not rep.timed_out
                    row[name] = render_cell(rep)
                rows.append(row)
    cols = ["n", "m", "eps"] + [name for name, _ in _alpha_variants(cfg)] + ["subgradient"]
    write_summary(cfg, rows, cols)
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def _reference(cfg: RunConfig, problem: PrimalDualProblem, key: str) -> np.ndarray:
    try:
        return reference_solution(problem, key=key, cache_dir=cfg.cache_dir)
    except OSError as exc:
        raise CLIError(f"reference cache: {exc}", EXIT_IO) from exc
    except RuntimeError as exc:
        raise CLIError(str(exc), EXIT_NOT_CONVERGED) from exc


def cmd_toy(cfg: RunConfig) -> int:
    try:
        results = run_all(cfg.seed, cfg.alpha, quick=cfg.quick)
    except ScheduleError as exc:
        raise CLIError(f"invalid schedule: {exc}", EXIT_INVALID) from exc
    for r in results:
        print(r.line())
    bad = [r for r in results if not r.passed]
    if bad:
        for r in bad:
            for msg in r.failures:
                print(f"  violated [{r.name}]: {msg}")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "cluster": cmd_cluster, "heron": cmd_heron, "toy": cmd_toy}


# --------------------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inertial-dr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def schedule_flags(sp, alpha_default=0.2):
        sp.add_argument("--alpha", type=float, default=alpha_default, help="inertial bound (default %(default)s)")
        sp.add_argument("--sigma", type=float, default=1e-6, help="descent constant (default %(default)s)")
        sp.add_argument("--delta", type=float, default=None, help="default: the value maximizing lambda_max")
        sp.add_argument("--lambda", dest="lam", type=float, default=None, help="relaxation of the inertial run (default 1 when admissible)")
        sp.add_argument("--tau", type=float, default=None, help="primal step")
        sp.add_argument("--sigma-i", dest="sigma_i", type=float, nargs="+", default=None, help="dual steps")

    def run_flags(sp, eps_default):
        sp.add_argument("--eps", type=float, nargs="+", default=eps_default, help="RMSE tolerances")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-iter", dest="max_iter", type=int, default=1_000_000)
        sp.add_argument("--timeout", type=float, default=60.0, help="seconds per cell (default %(default)s)")
        sp.add_argument("--output", dest="output_path", default=None, help="directory for trace files")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--cache-dir", dest="cache_dir", default=None,
                        help="reference cache (default $INERTIAL_DR_CACHE or ~/.cache/inertial_dr)")

    sp = sub.add_parser("validate", help="check schedule and step-size parameters")
    schedule_flags(sp)
    sp.add_argument("--norms", type=float, nargs="+", default=None,
                    help="operator norm bounds, one per --sigma-i entry (default 1)")

    sp = sub.add_parser("cluster", help="convex clustering of two half moons")
    schedule_flags(sp)
    run_flags(sp, [1e-4, 1e-8])
    sp.add_argument("--p", type=int, choices=(1, 2), default=2)
    sp.add_argument("--gamma-clust", dest="gamma_clust", type=float, default=None,
                    help="tuning parameter (default 5.2 for p=2, 4 for p=1)")
    sp.add_argument("--K", type=int, default=10)
    sp.add_argument("--phi", type=float, default=0.5)
    sp.add_argument("--per-moon", dest="per_moon", type=int, default=100)
    sp.add_argument("--noise", type=float, default=0.05)

    sp = sub.add_parser("heron", help="generalized Heron problem grid")
    schedule_flags(sp)
    run_flags(sp, [1e-5, 1e-10])
    sp.add_argument("--n", type=int, nargs="+", default=[2, 3])
    sp.add_argument("--m", type=int, nargs="+", default=[5, 10, 20, 50])
    sp.add_argument("--subgradient-c", dest="subgradient_c", type=float, default=2.0,
                    help="step constant c in t_k = c/k")

    sp = sub.add_parser("toy", help="closed-form examples and property suites")
    sp.add_argument("--alpha", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quick", action="store_true", help="smaller samples")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig.from_args(ns)
    try:
        return COMMANDS[cfg.command](cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
