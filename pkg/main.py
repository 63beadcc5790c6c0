#!/usr/bin/env python3
"""
Dyadic-tree Pettis integral toolkit: carve the sets, integrate basic
functions, verify the construction's lemmas, and build blow-up witnesses.

Usage:
    python main.py <command> [options]

Example:
    python main.py verify --lemma 3.2 --kmax 10
    python main.py blowup --weights 1 1/4 -1/8 --slopes 1/3 1/2 2/3 --x 0 --M 50 --kmax 40
"""

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from app.banach_backend.backend import parse_backend
from app.banach_backend.frames import FrameBank
from app.banach_backend.schedule import BlockSchedule, GrowthConfig, from_cuts, make_schedule
from app.carving.audit import PathAuditor
from app.carving.carver import CarvingConfig, carve, occupancy
from app.config import Settings
from app.dyadic_core.rationals import format_rational, parse_rational
from app.dyadic_core.tree import Address, NodeKey, addresses_at
from app.errors import FrameValidationError, InfeasibleError, PettisError, UsageError
from app.family.slopes import independence_witness, slope_selector, verify_ad
from app.pettis_eval.certificates import bochner_check, pettis_check
from app.pettis_eval.integrator import integral
from app.stepfun.basic_function import BasicFunction, CombinedScheme, FnScheme, combine, make_fn, restrict
from app.stepfun.selectors import Selector
from app.verify.blowup import BlowupHarness
from app.verify.lemmas import LemmaParams, lemma_ids, verify_suite
from app.verify.quotients import dyadic_steps, quotient_table

Progress = Callable[[str], None]
NEGATIVE_RATIONAL = re.compile(r"^-(\d+/\d+|2\^-?\d+)$")


@dataclass
class CommandResult:
    payload: dict
    table: Optional[pd.DataFrame] = None
    ok: bool = True


def _rationals(values: Optional[List[str]]) -> List[Fraction]:
    return [parse_rational(v) for v in values or []]


def _load_function(args, kmax: int) -> BasicFunction:
    """Function from --f JSON, or from --slopes with optional --weights"""
    if getattr(args, "f", None):
        try:
            with open(args.f) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read function file {args.f}: {e}")
        f = BasicFunction.from_json(data)
        if args.kmax is not None:
            f = f.with_kmax(kmax)
    elif getattr(args, "slopes", None):
        slopes = _rationals(args.slopes)
        weights = _rationals(args.weights) or [Fraction(1)] * len(slopes)
        if len(slopes) == 1 and weights == [Fraction(1)]:
            f = make_fn(slope_selector(slopes[0]), kmax)
        else:
            f = combine(weights, [slope_selector(t) for t in slopes], kmax)
    else:
        raise UsageError("a function is required: pass --f cfg.json or --slopes")
    if getattr(args, "restrict", None) is not None:
        f = restrict(f, Address.parse(args.restrict))
    return f


def _terms(f: BasicFunction) -> Tuple[List[Fraction], List[Selector]]:
    if isinstance(f.scheme, FnScheme):
        return [Fraction(1)], [f.scheme.selector]
    if isinstance(f.scheme, CombinedScheme):
        return list(f.scheme.weights), list(f.scheme.selectors)
    raise UsageError("blow-up needs a selector-based function, not an explicit coefficient table")


def _schedule(args, fallback: Optional[Sequence[int]] = None) -> BlockSchedule:
    """--cuts, else a generated schedule (--count), else `fallback` when given"""
    if args.cuts:
        return from_cuts(args.cuts)
    if args.count is None and fallback is not None:
        return from_cuts(fallback)
    return make_schedule(args.count or 3, GrowthConfig(first_cut=args.first_cut))


def run_construct(args, settings: Settings, progress: Progress) -> CommandResult:
    kmax = settings.kmax
    if args.kind == "function":
        return CommandResult(_load_function(args, kmax).to_json())
    if args.kind == "schedule":
        return CommandResult(_schedule(args).to_json())
    cfg = CarvingConfig(kmax, settings.pieces_per_set)
    if args.audit_paths:
        rng = np.random.default_rng(settings.seed)
        paths = [Address.from_index(int(rng.integers(0, 1 << kmax)), kmax) for _ in range(args.audit_paths)]
        auditor = PathAuditor(
            cfg, lambda n, total, r: progress(f"🔍 path {n}/{total}: {r.tau} {'✓' if r.passed else '✗'}")
        )
        reports = auditor.audit_many(paths)
        table = pd.DataFrame(
            [
                {
                    "tau": str(r.tau),
                    "keys": r.keys_checked,
                    "free_measure": format_rational(r.free_measure),
                    "status": "pass" if r.passed else "fail",
                }
                for r in reports
            ]
        )
        ok = all(r.passed for r in reports)
        payload = {"kmax": kmax, "status": "pass" if ok else "fail", "paths": [r.to_json() for r in reports]}
        return CommandResult(payload, table, ok)
    if args.sigma is not None:
        sigma = Address.parse(args.sigma)
        indices = [args.i] if args.i is not None else range(sigma.depth + 1)
        keys = [NodeKey(sigma, i) for i in indices]
    else:
        depth = min(args.depth, kmax)
        keys = [NodeKey(sigma, i) for d in range(depth + 1) for sigma in addresses_at(d) for i in range(d + 1)]
    sets = [carve(key, cfg).to_json(args.max_pieces) for key in keys]
    return CommandResult(
        {
            "kmax": kmax,
            "pieces_per_set": cfg.pieces_per_set,
            "occupancy": format_rational(occupancy(cfg)),
            "sets": sets,
        }
    )


def run_integrate(args, settings: Settings, progress: Progress) -> CommandResult:
    kmax = settings.kmax
    f = _load_function(args, kmax)
    cfg = CarvingConfig(f.kmax, settings.pieces_per_set)
    if args.at is not None:
        a, b = Fraction(0), parse_rational(args.at)
    else:
        a, b = parse_rational(args.a), parse_rational(args.b)
    vector = integral(f, a, b, cfg)
    payload = {"interval": [format_rational(a), format_rational(b)], "kmax": f.kmax, "integral": vector.to_json()}
    if args.certify:
        payload["pettis"] = pettis_check(f, "l2").to_json()
        bochner = bochner_check(f, parse_rational(args.threshold), settings.precision_bits)
        payload["bochner"] = bochner.to_json()
    return CommandResult(payload)


def run_verify(args, settings: Settings, progress: Progress) -> CommandResult:
    values = LemmaParams.from_settings(settings).to_json()
    explicit = {}
    if args.params:
        try:
            with open(args.params) as fh:
                explicit = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read params file {args.params}: {e}")
    flags = {"samples": args.samples, "depth": args.depth, "backend": args.backend}
    explicit.update({k: v for k, v in flags.items() if v is not None})
    values.update(explicit)
    if "depth" not in explicit:
        values["depth"] = min(LemmaParams.depth, int(values["kmax"]))
    params = LemmaParams.from_json(values, settings)
    ids = None if args.lemma == "all" else [args.lemma]
    reports = verify_suite(
        params,
        ids,
        lambda n, total, r: progress(f"🧪 [{n}/{total}] {r.lemma} {r.name}: {'pass ✓' if r.passed else 'FAIL ✗'}"),
    )
    table = pd.DataFrame(
        [
            {
                "lemma": r.lemma,
                "name": r.name,
                "status": "pass" if r.passed else "fail",
                "checked": sum(s.checked for s in r.steps),
                "failed": sum(s.failed for s in r.steps),
            }
            for r in reports
        ]
    )
    ok = all(r.passed for r in reports)
    if len(reports) == 1:
        return CommandResult(reports[0].to_json(args.timing), table, ok)
    payload = {"lemma": "all", "status": "pass" if ok else "fail", "reports": [r.to_json(args.timing) for r in reports]}
    return CommandResult(payload, table, ok)


def run_blowup(args, settings: Settings, progress: Progress) -> CommandResult:
    f = _load_function(args, settings.kmax)
    weights, selectors = _terms(f)
    harness = BlowupHarness(weights, selectors, f.kmax, settings, progress)
    M = parse_rational(args.M)
    bank = schedule = backend = None
    if args.mode == "general":
        backend = parse_backend(settings.backend, seed=settings.seed)
        schedule = _schedule(args, LemmaParams.cuts)
        progress(f"🧮 sampling frames for {len(schedule.blocks_within(f.kmax))} blocks ({backend.label})")
        bank = FrameBank(
            schedule,
            backend,
            f.kmax,
            settings,
            lambda k, fr: progress(f"  block {k}: {fr.size} vectors in dimension {fr.dimension}"),
        )
    witnesses, rows = [], []
    for x in args.x:
        started = time.perf_counter()
        if args.mode == "general":
            witness = harness.run_general(parse_rational(x), M, schedule, backend, bank)
        else:
            witness = harness.run(parse_rational(x), M)
        data = witness.to_json()
        if args.timing:
            data["ms"] = round((time.perf_counter() - started) * 1000, 3)
        witnesses.append(data)
        for sample in witness.samples:
            rows.append(
                {
                    "x": data["x"],
                    "h": format_rational(sample.h),
                    "j": sample.j,
                    "tau": str(sample.tau),
                    "quot_sq": format_rational(sample.quotient_sq.lo),
                    "status": "pass" if sample.passed else "fail",
                }
            )
    ok = all(w["status"] == "pass" for w in witnesses)
    return CommandResult({"status": "pass" if ok else "fail", "witnesses": witnesses}, pd.DataFrame(rows), ok)


def run_family(args, settings: Settings, progress: Progress) -> CommandResult:
    if args.witness:
        horizon, witnesses = independence_witness(_rationals(args.weights), _rationals(args.ts), args.depth)
        missing = [k for k in range(horizon, args.depth + 1) if k not in witnesses]
        rows = [{"level": k, "j": j, "d": format_rational(d)} for k, (j, d) in sorted(witnesses.items())]
        payload = {
            "horizon": horizon,
            "depth": args.depth,
            "status": "fail" if missing else "pass",
            "missing_levels": missing,
            "witnesses": rows,
        }
        return CommandResult(payload, pd.DataFrame(rows), not missing)
    if not args.check_ad:
        raise UsageError("family needs --check-ad or --witness")
    report = verify_ad(_rationals(args.ts), args.depth)
    return CommandResult(report.to_json(), pd.DataFrame([p.to_row() for p in report.pairs]), report.passed)


def run_table(args, settings: Settings, progress: Progress) -> CommandResult:
    f = _load_function(args, settings.kmax)
    cfg = CarvingConfig(f.kmax, settings.pieces_per_set)
    x = parse_rational(args.x)
    hs = _rationals(args.steps) or dyadic_steps(x, parse_rational(args.hmin), parse_rational(args.hmax))
    bank = None
    backend = parse_backend(settings.backend, seed=settings.seed)
    if not backend.is_exact:
        bank = FrameBank(_schedule(args, LemmaParams.cuts), backend, f.kmax, settings)
    table = quotient_table(f, x, hs, cfg, bank)
    return CommandResult({"x": format_rational(x), "rows": table.to_dict(orient="records")}, table)


def _add_function_args(p: argparse.ArgumentParser):
    p.add_argument("--f", help="Function JSON file (as written by construct --kind function)")
    p.add_argument("--slopes", nargs="+", help="Slopes t of the selectors n_t(k) = floor(t·k)")
    p.add_argument("--weights", nargs="+", help="Weights λ_i matching --slopes (default all 1)")
    p.add_argument("--restrict", help="Restrict the function to the subtree of this address (bit string)")


def _add_schedule_args(p: argparse.ArgumentParser):
    p.add_argument("--cuts", type=int, nargs="+", help="Explicit block cut points n_0=0 < n_1 < ... (frame default: 0 3 7)")
    p.add_argument("--count", type=int, help="Number of blocks for a generated schedule (construct default: 3)")
    p.add_argument("--first-cut", type=int, default=8, help="First cut of a generated schedule (default: 8)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kmax", type=int, help="Truncation depth (env PETTIS_KMAX, default 10)")
    common.add_argument("--seed", type=int, help="Seed for sampled quantities (env PETTIS_SEED)")
    common.add_argument("--backend", help="Norm backend: l2, lp:P, summing, or a JSON object")
    common.add_argument("--precision-bits", type=int, help="Starting enclosure precision in bits")
    common.add_argument("--workers", type=int, help="Threads for independent checks (env PETTIS_WORKERS, default 1)")
    common.add_argument("--out", help="Write the report here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"], default="json", help="Report format (default: json)")
    common.add_argument("--timing", action="store_true", help="Include wall-clock timings in reports")
    common.add_argument("--quiet", action="store_true", help="Suppress progress output on stderr")

    parser = argparse.ArgumentParser(description="Dyadic-tree Pettis integral toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", parents=[common], help="Emit carved sets, function JSON or a block schedule")
    p.add_argument("--kind", choices=["carving", "function", "schedule"], required=True)
    p.add_argument("--sigma", help="Carve only this address (bit string; empty string for the root)")
    p.add_argument("--i", type=int, help="Level index with --sigma")
    p.add_argument("--depth", type=int, default=2, help="Carve every key up to this depth (default: 2)")
    p.add_argument("--max-pieces", type=int, default=1 << 16, help="List pieces only for sets with at most this many")
    p.add_argument("--audit-paths", type=int, default=0, help="Audit this many random root-to-leaf paths instead")
    _add_function_args(p)
    _add_schedule_args(p)
    p.set_defaults(handler=run_construct)

    p = sub.add_parser("integrate", parents=[common], help="Integral of a basic function over an interval")
    _add_function_args(p)
    p.add_argument("--at", help="Right endpoint t of [0, t]")
    p.add_argument("--a", default="0", help="Left endpoint (with --b)")
    p.add_argument("--b", default="1", help="Right endpoint (with --a)")
    p.add_argument("--certify", action="store_true", help="Add Pettis and Bochner certificates")
    p.add_argument("--threshold", default="100", help="Bochner divergence threshold (default: 100)")
    p.set_defaults(handler=run_integrate)

    p = sub.add_parser("verify", parents=[common], help="Run a lemma check")
    p.add_argument("--lemma", required=True, choices=lemma_ids() + ["all"])
    p.add_argument("--params", help="Lemma parameter JSON file")
    p.add_argument("--samples", type=int, help="Random samples per check")
    p.add_argument("--depth", type=int, help="Deepest address τ to test")
    p.set_defaults(handler=run_verify)

    p = sub.add_parser("blowup", parents=[common], help="Witness difference quotients above M")
    _add_function_args(p)
    p.add_argument("--x", nargs="+", required=True, help="Anchor points in [0, 1]")
    p.add_argument("--M", required=True, help="Target quotient bound")
    p.add_argument("--mode", choices=["l2", "general"], default="l2")
    _add_schedule_args(p)
    p.set_defaults(handler=run_blowup)

    p = sub.add_parser("family", parents=[common], help="Almost-disjointness of slope selectors")
    p.add_argument("--check-ad", action="store_true", help="Report collisions of every slope pair")
    p.add_argument("--witness", action="store_true", help="Show nonzero merged weights past the collision horizon")
    p.add_argument("--ts", nargs="+", required=True, help="Slopes in (0, 1)")
    p.add_argument("--weights", nargs="+", help="Nonzero weights for --witness")
    p.add_argument("--depth", type=int, default=30, help="Levels to scan (default: 30)")
    p.set_defaults(handler=run_family)

    p = sub.add_parser("table", parents=[common], help="Difference quotients ‖F(x+h)-F(x)‖²/h²")
    _add_function_args(p)
    p.add_argument("--x", required=True, help="Anchor point in [0, 1]")
    p.add_argument("--hmin", default="2^-12", help="Smallest step (default: 2^-12)")
    p.add_argument("--hmax", default="2^-2", help="Largest step (default: 2^-2)")
    p.add_argument("--steps", nargs="+", help="Explicit steps instead of the dyadic ladder")
    _add_schedule_args(p)
    p.set_defaults(handler=run_table)
    return parser


def _emit(result: CommandResult, args):
    if args.format == "csv":
        if result.table is None:
            raise UsageError(f"{args.command} has no tabular output; use --format json")
        text = result.table.to_csv(index=False)
    else:
        text = json.dumps(result.payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _shield_negatives(argv: Optional[List[str]]) -> List[str]:
    """Keep "-1/8" and "-2^-3" from being read as options; parse_rational strips the space"""
    argv = sys.argv[1:] if argv is None else argv
    return [" " + a if NEGATIVE_RATIONAL.match(a) else a for a in argv]


def cli(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0 on pass, 1 on a property violation or infeasible target, 2 on usage errors"""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(_shield_negatives(argv))
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    def progress(message: str):
        if not args.quiet:
            print(message, file=sys.stderr)

    try:
        settings = Settings.from_env().override(
            kmax=args.kmax,
            seed=args.seed,
            backend=args.backend,
            precision_bits=args.precision_bits,
            workers=args.workers,
        )
        if settings.precision_bits > settings.max_precision_bits:
            settings = settings.override(max_precision_bits=settings.precision_bits)
        result = args.handler(args, settings, progress)
        _emit(result, args)
    except InfeasibleError as e:
        print(f"⚠️  {e}", file=sys.stderr)
        report = CommandResult({"status": "infeasible", "message": str(e), "minimal_kmax": e.minimal_kmax})
        args.format = "json"
        _emit(report, args)
        return 1
    except FrameValidationError as e:
        print(f"⚠️  {e}", file=sys.stderr)
        return 1
    except (PettisError, ValueError) as e:
        print(f"⚠️  {e}", file=sys.stderr)
        return 2
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(cli())
