"""Command-line front end: ``qnls simulate | classify | verify | sweep``.

Exit statuses: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import criteria, plots
from .diagnostics import FitError, csv_text, fit_decay, format_float
from .model import ConfigError, NonlinearitySpec, ProblemSpec, load_problem, parse_potential, parse_terms
from .scenarios import SCENARIOS, run_scenario
from .solver import BLOWUP, COMPLETED, RunOutcome, StepperConfig, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

SWEEP_AXES = ("alpha", "m", "beta", "amplitude")
SUMMARY_HEADER = ("index", "alpha", "m", "beta", "amplitude", "status", "t_final", "l_fit",
                  "blowup_estimate", "bound")

log = logging.getLogger("qnls")


class UsageFailure(Exception):
    """Raised for anything that should end with exit status 2."""


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    @classmethod
    def parse(cls, text: str) -> "Axis":
        parts = text.split(":")
        if len(parts) != 4:
            raise UsageFailure(f"bad axis {text!r}; expected NAME:MIN:MAX:COUNT")
        name = parts[0].strip()
        if name not in SWEEP_AXES:
            raise UsageFailure(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_AXES)}")
        try:
            lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise UsageFailure(f"bad axis {text!r}: {exc}") from None
        if count < 1:
            raise UsageFailure("axis count must be >= 1")
        return cls(name, lo, hi, count)

    @property
    def values(self) -> list[float]:
        if self.count == 1:
            return [self.lo]
        return [float(v) for v in np.linspace(self.lo, self.hi, self.count)]


# ---------------------------------------------------------------------------
# helpers


def _prepare_out(path: str, files: list[str], force: bool) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    clash = [f for f in files if (out / f).exists()]
    if clash and not force:
        raise UsageFailure(f"{out / clash[0]} exists; pass --force to overwrite")
    return out


def _load(path: str) -> tuple[ProblemSpec, StepperConfig]:
    spec, solver = load_problem(path)
    try:
        cfg = StepperConfig.from_dict(solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver]: {exc}") from exc
    return spec, cfg


def _bound(rec) -> float:
    return rec.J / (4.0 * rec.y) if rec.y > 0 else math.nan


def _l_fit(outcome: RunOutcome) -> float:
    try:
        return fit_decay(outcome.records, t_min=1.0)[0]
    except FitError:
        return math.nan


def _exit_for(outcome: RunOutcome) -> int:
    return EXIT_OK if outcome.status in (COMPLETED, BLOWUP) else EXIT_RUNTIME


def report_text(spec: ProblemSpec, outcome: RunOutcome) -> str:
    r0 = outcome.records[0]
    rep = criteria.classify(spec.dim, spec.h, spec.V, J0=r0.J, y0=r0.y, E0=r0.energy)
    rec = outcome.records[-1]
    lines = [
        "run",
        f"status: {outcome.status}",
        f"t_final: {format_float(outcome.t_final)}",
        f"steps: {outcome.steps}",
        f"rejected steps: {outcome.rejections}",
        f"newton iterations: {outcome.newton_iterations}",
    ]
    if outcome.message:
        lines.append(f"message: {outcome.message}")
    if outcome.blowup_time_estimate is not None:
        lines.append(f"blowup time estimate: {format_float(outcome.blowup_time_estimate)}")
    if r0.y > 0:
        lines.append(f"Theorem 1 bound J(0)/(4y(0)): {format_float(_bound(r0))}")
    lines += [
        f"E(u0): {format_float(r0.energy)}",
        f"mass drift: {format_float(abs(rec.mass2 / r0.mass2 - 1))}",
        f"energy drift: {format_float(abs(rec.energy - r0.energy) / max(abs(r0.energy), 1e-300))}",
        f"fitted decay exponent (t >= 1): {format_float(_l_fit(outcome))}",
        "",
        "classification",
        rep.to_text().rstrip("\n"),
        "",
        rep.to_keyvalue().rstrip("\n"),
    ]
    return "\n".join(lines) + "\n"


def write_run(out: Path, spec: ProblemSpec, outcome: RunOutcome) -> None:
    (out / "diagnostics.csv").write_text(csv_text(outcome.records), encoding="utf-8")
    (out / "report.txt").write_text(report_text(spec, outcome), encoding="utf-8")
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    rs = outcome.records
    t = [r.t for r in rs]
    plots.line_plot(pdir / "energy.svg", t, {"E": [r.energy for r in rs]}, xlabel="t", ylabel="energy")
    plots.line_plot(pdir / "J.svg", t, {"J": [r.J for r in rs]}, xlabel="t", ylabel="∫|x|²|u|²")
    plots.line_plot(pdir / "P_residual.svg", t, {"residual": [r.P_residual_rho for r in rs]},
                    xlabel="t", ylabel="P - J(0) - 4∫τθ")
    sel = [r for r in rs if r.t > 0 and r.decay_quantity > 0]
    log_axes = len(sel) >= 2
    if not log_axes:  # h = 0 and V = 0: the decay quantity vanishes identically
        sel = rs
    plots.line_plot(pdir / "decay.svg", [r.t for r in sel], {"decay": [r.decay_quantity for r in sel]},
                    xlabel="t", ylabel="∫|∇h|² + ∫|V||u|²", logx=log_axes, logy=log_axes)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    spec, cfg = _load(args.config)
    out = _prepare_out(args.out, ["diagnostics.csv", "report.txt"], args.force)
    outcome = run(spec, cfg)
    write_run(out, spec, outcome)
    print(f"{outcome.status} at t={outcome.t_final:.6g} after {outcome.steps} steps")
    if _exit_for(outcome) != EXIT_OK:
        print(f"run failed: {outcome.status}: {outcome.message}", file=sys.stderr)
    return _exit_for(outcome)


def cmd_classify(args) -> int:
    try:
        h = parse_terms(args.h)
        V = parse_potential(args.pot)
        rep = criteria.classify(args.dim, h, V, q=args.q, V1_norm=args.v1_norm)
    except (ValueError, criteria.CriteriaUsageError) as exc:
        raise UsageFailure(str(exc)) from None
    print(rep.to_text(), end="")
    print(rep.to_keyvalue(), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.scenario not in SCENARIOS:
        raise UsageFailure(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    out = None
    if args.out:
        out = _prepare_out(args.out, [f"{args.scenario}.csv"], args.force)
    result = run_scenario(args.scenario)
    for line in result.lines():
        print(line)
    if out is not None:
        (out / f"{args.scenario}.csv").write_text(csv_text(result.records), encoding="utf-8")
    print(f"{'PASS' if result.passed else 'FAIL'} {args.scenario}")
    return EXIT_OK if result.passed else EXIT_RUNTIME


def apply_axes(spec: ProblemSpec, point: dict[str, float]) -> ProblemSpec:
    for name, value in point.items():
        if name == "alpha":
            b = spec.h.terms[0][0] if spec.h.terms else 1.0
            spec = spec.replace(h=NonlinearitySpec.power(value, b))
        elif name == "m":
            spec = spec.replace(V=replace(spec.V, m=value))
        elif name == "beta":
            spec = spec.replace(u0=replace(spec.u0, chirp=value))
        elif name == "amplitude":
            spec = spec.replace(u0=replace(spec.u0, amplitude=value))
    return spec


def _sweep_one(job):
    spec, cfg = job
    outcome = run(spec, cfg)
    r0 = outcome.records[0]
    return outcome.status, outcome.t_final, _l_fit(outcome), outcome.blowup_time_estimate, _bound(r0)


def _workers(requested: int | None) -> int:
    n = requested or os.cpu_count() or 1
    env = os.environ.get("QNLS_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise UsageFailure(f"QNLS_THREADS must be an integer, got {env!r}") from None
    return max(1, n)


def cmd_sweep(args) -> int:
    axes = [Axis.parse(a) for a in args.axis]
    if not 1 <= len(axes) <= 2:
        raise UsageFailure("sweep takes one or two --axis options")
    if len({a.name for a in axes}) != len(axes):
        raise UsageFailure("sweep axes must be distinct")
    base, cfg = _load(args.config)
    out = _prepare_out(args.out, ["summary.csv"], args.force)
    points = [dict(zip([a.name for a in axes], combo)) for combo in itertools.product(*(a.values for a in axes))]
    specs = [apply_axes(base, p) for p in points]

    if len(specs) == 1:
        outcome = run(specs[0], cfg)
        write_run(out, specs[0], outcome)
        rows = [(outcome.status, outcome.t_final, _l_fit(outcome), outcome.blowup_time_estimate,
                 _bound(outcome.records[0]))]
    else:
        jobs = [(s, cfg) for s in specs]
        n = min(_workers(args.jobs), len(jobs))
        if n == 1:
            rows = [_sweep_one(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=n) as pool:
                rows = list(pool.map(_sweep_one, jobs))  # map keeps parameter order

    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for i, (spec, row) in enumerate(zip(specs, rows)):
            status, t_final, l_fit, t_blow, bound = row
            alpha = spec.h.terms[0][1] if spec.h.terms else math.nan
            writer.writerow([i, format_float(alpha), format_float(spec.V.m), format_float(spec.u0.chirp),
                             format_float(spec.u0.amplitude), status, format_float(t_final),
                             format_float(l_fit), format_float(math.nan if t_blow is None else t_blow),
                             format_float(bound)])
            print(f"{i}: {points[i]} -> {status} t={t_final:.6g}")
    names = [a.name for a in axes]
    statuses = [r[0] for r in rows]
    if set(names) == {"alpha", "m"}:
        plots.phase_plot(out / "phase.svg", [p["m"] for p in points], [p["alpha"] for p in points],
                         statuses, xlabel="m", ylabel="alpha")
    elif len(axes) == 1 and len(specs) > 1:
        plots.phase_plot(out / "phase.svg", [p[names[0]] for p in points], [r[1] for r in rows],
                         statuses, xlabel=names[0], ylabel="t_final")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnls", description="Quasilinear Schrödinger laboratory.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true", help="overwrite existing outputs")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("classify", help="evaluate the analytic criteria only")
    c.add_argument("--dim", type=int, required=True)
    c.add_argument("--h", default="0", help='"b:alpha[,b:alpha]"; "0" for h = 0')
    c.add_argument("--pot", required=True, help='"sign:c:m[:bounded]"')
    c.add_argument("--q", type=float, default=None)
    c.add_argument("--v1-norm", type=float, default=None, help="‖V1‖ in L^{N/2} for the q = N/2 case")
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("verify", help="run a pinned scenario and check its tolerances")
    v.add_argument("scenario", help=", ".join(SCENARIOS))
    v.add_argument("--out", default=None, help="write the scenario's diagnostics CSV here")
    v.add_argument("--force", action="store_true")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--axis", action="append", required=True, help="NAME:MIN:MAX:COUNT")
    w.add_argument("--out", required=True)
    w.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    w.add_argument("--force", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
