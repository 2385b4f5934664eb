"""``macopt`` command line.

Exit codes: 0 success, 1 bad configuration or arguments, 2 infeasible,
3 solver failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import verify
from ._jit import backend
from .config import ScenarioConfig, default_config, load_config
from .exceptions import ConfigError, MacoptError, OutOfInteriorRange, SolverFailure
from .multi_user import (MultiUserInstance, hybrid_sum_rate_multi, noma_sum_rate_multi,
                         tdma_sum_rate_multi)
from .region import trace_region
from .single_user import SingleUserProblem, is_interior, solve_p2, stationarity_residual_p2
from .two_user import TwoUserInstance

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4
LN2 = math.log(2.0)
log = logging.getLogger("macopt")


def fmt(x: float) -> str:
    """Nine significant digits, locale independent."""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return format(float(x), ".9g")


def convert(nats_per_second: float, unit: str) -> float:
    return nats_per_second / LN2 if unit == "bits" else nats_per_second


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MACOPT_THREADS", "1")))
    except ValueError:
        return 1


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args, n_default: int) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else default_config(n_default)
    if args.resistance is not None:
        cfg = cfg.with_resistance(args.resistance)
    return cfg


def _unit(args, cfg: ScenarioConfig) -> str:
    return args.unit or cfg.rate_unit


def _tol(args, cfg: ScenarioConfig) -> float:
    return args.tol if args.tol is not None else cfg.solver.tolerance


# ---------------------------------------------------------------------------
# sub-commands
# ---------------------------------------------------------------------------
def cmd_single_user(args) -> int:
    cfg = _load(args, 1)
    if len(cfg.users) != 1:
        raise ConfigError(f"single-user needs exactly 1 user, got {len(cfg.users)}")
    unit = _unit(args, cfg)
    prob = SingleUserProblem(cfg.users[0], cfg.horizon)
    sol = solve_p2(prob)
    resid = math.nan
    if sol.feasible and is_interior(prob, sol):
        try:
            resid = stationarity_residual_p2(prob, sol.duration)
        except OutOfInteriorRange:
            pass
    rate = convert(sol.rate / cfg.horizon, unit)
    rows = [("feasible", str(sol.feasible).lower()), ("duration", fmt(sol.duration)),
            ("discharge", fmt(sol.discharge)), ("transmit_power", fmt(sol.transmit_power)),
            (f"rate_{unit}", fmt(rate)), ("stationarity_residual", fmt(resid))]
    if not sol.feasible:
        print("infeasible: the battery cannot power the circuit")
    for k, v in rows:
        print(f"{k:>22}  {v}")
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([k for k, _ in rows])
        w.writerow([v for _, v in rows])
        Path(args.out).write_text(buf.getvalue())
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def _sum_rates(cfg: ScenarioConfig, strategies, tol: float) -> dict:
    inst = MultiUserInstance(cfg.users, cfg.horizon)
    out = {}
    for s in strategies:
        if s == "noma":
            out[s] = noma_sum_rate_multi(inst)
        elif s == "tdma":
            out[s] = tdma_sum_rate_multi(inst, tol)[0]
        else:
            out[s] = hybrid_sum_rate_multi(inst, tol, cfg.solver.max_iter)[0]
    return {k: v / cfg.horizon for k, v in out.items()}


def cmd_sum_rate(args) -> int:
    cfg = _load(args, 3)
    unit, tol = _unit(args, cfg), _tol(args, cfg)
    try:
        rates = _sum_rates(cfg, cfg.strategies(), tol)
    except SolverFailure as exc:
        print(json.dumps({"error": str(exc),
                          "report": exc.report.to_dict() if exc.report else None}), file=sys.stderr)
        return EXIT_SOLVER
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", f"rate_{unit}"])
    for s, v in rates.items():
        w.writerow([s, fmt(convert(v, unit))])
    _emit(buf.getvalue(), args.out)
    if args.out:
        sys.stdout.write(buf.getvalue())
    if cfg.strategy == "all":
        ok = rates["hybrid"] >= max(rates["noma"], rates["tdma"]) - 1e-6
        print(f"dominance hybrid >= max(noma, tdma): {'pass' if ok else 'FAIL'}")
    return EXIT_OK


def parse_r_range(text: str) -> list[float]:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--r-range must look like LO:HI:STEP, got {text!r}") from exc
    if step <= 0 or hi < lo or lo < 0:
        raise ConfigError("--r-range needs 0 <= LO <= HI and STEP > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


def cmd_sweep(args) -> int:
    cfg = _load(args, 3)
    unit, tol = _unit(args, cfg), _tol(args, cfg)
    if args.r_values is not None:
        rs = [float(v) for v in args.r_values.split(",") if v.strip()]
    elif args.r_range:
        rs = parse_r_range(args.r_range)
    elif cfg.r_values is not None:
        rs = list(cfg.r_values)
    else:
        rs = parse_r_range("0:1:0.1")
    if any(r < 0 for r in rs):
        raise ConfigError("resistances must be >= 0")

    def row(r):
        try:
            rates = _sum_rates(cfg.with_resistance(r), ["noma", "tdma", "hybrid"], tol)
            return r, rates, None
        except SolverFailure as exc:
            return r, None, exc

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(row, rs))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", f"noma_{unit}", f"tdma_{unit}", f"hybrid_{unit}"])
    failed = False
    for r, rates, exc in results:
        if rates is None:
            failed = True
            print(f"r={fmt(r)}: solver failure: {exc}", file=sys.stderr)
            w.writerow([fmt(r), "nan", "nan", "nan"])
        else:
            w.writerow([fmt(r)] + [fmt(convert(rates[s], unit)) for s in ("noma", "tdma", "hybrid")])
    _emit(buf.getvalue(), args.out)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_region(args) -> int:
    cfg = _load(args, 2)
    if len(cfg.users) != 2:
        raise ConfigError(f"region needs exactly 2 users, got {len(cfg.users)}")
    unit, tol = _unit(args, cfg), _tol(args, cfg)
    inst = TwoUserInstance(cfg.users, cfg.horizon)
    try:
        regions = {s: trace_region(inst, args.points, s, tol) for s in cfg.strategies()}
    except SolverFailure as exc:
        print(json.dumps({"error": str(exc),
                          "report": exc.report.to_dict() if exc.report else None}), file=sys.stderr)
        return EXIT_SOLVER
    scale = 1.0 / cfg.horizon / (LN2 if unit == "bits" else 1.0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", f"r1_{unit}", f"r2_{unit}", "label"])
    doc = {"unit": unit, "regions": {}}
    for s, reg in regions.items():
        pts = reg.points * scale
        for k, (a, b) in enumerate(pts):
            w.writerow([s, fmt(a), fmt(b), reg.label_of(k)])
        doc["regions"][s] = {"points": [[float(fmt(a)), float(fmt(b))] for a, b in pts],
                             "labels": reg.labels}
    _emit(buf.getvalue(), args.out)
    if args.out:
        Path(args.out).with_suffix(".json").write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    results = [verify.SUITES[n]() for n in names]
    for res in results:
        print(f"{res.suite:>10}: {'pass' if res.passed else 'FAIL'} "
              f"({sum(c.passed for c in res.checks)}/{len(res.checks)} checks)", file=sys.stderr)
    doc = {"passed": all(r.passed for r in results), "suites": [r.to_dict() for r in results]}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK if doc["passed"] else EXIT_VERIFY


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="macopt", description="Sum-rates and rate regions for battery-limited MAC users.")
    p.add_argument("--version", action="version", version="macopt 0.1.0")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, points=False):
        sp.add_argument("--config", help="JSON scenario file (built-in reference scenario if omitted)")
        sp.add_argument("--out", help="write the table here instead of standard output")
        sp.add_argument("--unit", choices=("bits", "nats"), help="rate unit (default from config)")
        sp.add_argument("--tol", type=float, help="solver stationarity tolerance")
        sp.add_argument("--resistance", type=float,
                        help="override every user's internal resistance")
        if points:
            sp.add_argument("--points", type=int, default=25, help="points per boundary arc")

    common(sub.add_parser("single-user", help="optimal single-user schedule"))
    common(sub.add_parser("sum-rate", help="maximum sum-rate per strategy"))
    sw = sub.add_parser("sweep", help="sum-rates over a range of internal resistances")
    common(sw)
    sw.add_argument("--r-range", help="LO:HI:STEP (inclusive)")
    sw.add_argument("--r-values", help="comma-separated resistances")
    common(sub.add_parser("region", help="two-user rate-region boundaries"), points=True)
    vp = sub.add_parser("verify", help="run a built-in property suite")
    vp.add_argument("suite", nargs="?", default="all", choices=[*verify.SUITES, "all"])
    vp.add_argument("--out", help="write the JSON summary here")
    return p


COMMANDS = {"single-user": cmd_single_user, "sum-rate": cmd_sum_rate, "sweep": cmd_sweep,
            "region": cmd_region, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", backend())
    if getattr(args, "points", 1) < 0:
        print("error: --points must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MacoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
