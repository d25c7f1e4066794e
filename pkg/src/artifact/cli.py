"""Command-line front end. Every command prints one JSON document.

A successful run exits with 0. Invalid input or an empty outcome exits with 2,
and a resource cap exits with 3. Errors go to stderr as
``{"error": {"kind": ..., "detail": ...}}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import flow, sweep
from . import random as rnd
from .core import (
    ApportionmentError,
    Instance,
    Outcome,
    ResourceCapExceeded,
    ValidationError,
    apportion_stationary,
    as_rat,
    hamilton_outcome,
    quotas,
    rat_str,
)

METHODS = {
    "adams": ("stationary", Fraction(0)),
    "webster": ("stationary", Fraction(1, 2)),
    "jefferson": ("stationary", Fraction(1)),
    "dean": ("power-mean", Fraction(-1)),
    "hill": ("power-mean", Fraction(0)),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _instance(args) -> Instance:
    if not args.instance:
        raise ValidationError("--instance is required")
    data = _load_json(args.instance)
    try:
        pops, house = data["populations"], data.get("house")
    except (TypeError, KeyError) as exc:
        raise ValidationError("instance JSON needs 'populations' and 'house'") from exc
    if args.house is not None:
        house = args.house
    if house is None:
        raise ValidationError("instance has no house size; pass --house")
    return Instance(pops, house)


def _rats(values) -> list[str]:
    return [rat_str(v) for v in values]


def _optional_outcome(outcome: Outcome | None):
    return None if outcome is None else outcome.to_json()


def _instance_json(inst: Instance) -> dict:
    return {"populations": list(inst.populations), "house": inst.house}


def cmd_apportion(args):
    inst = _instance(args)
    method = args.method
    if method in METHODS:
        method, value = METHODS[method]
        if method == "stationary":
            args.delta = args.delta if args.delta is not None else rat_str(value)
        else:
            args.q = args.q if args.q is not None else rat_str(value)
    if method == "stationary":
        if args.delta is None:
            raise ValidationError("--delta is required for the stationary method")
        return apportion_stationary(inst, args.delta).to_json()
    if method == "power-mean":
        if args.q is None:
            raise ValidationError("--q is required for the power-mean method")
        return sweep.apportion_power_mean(inst, sweep.parse_q(args.q)).to_json()
    return hamilton_outcome(inst).to_json()


def cmd_atlas(args):
    atlas = sweep.breakpoint_atlas(_instance(args), events=args.events)
    return {
        "breakpoints": _rats(atlas.breakpoints),
        "intervals": [{"lo": rat_str(lo), "hi": rat_str(hi), **o.to_json()} for lo, hi, o in atlas.cells()],
        "at_breakpoints": [{"at": rat_str(d), **o.to_json()} for d, o in zip(atlas.breakpoints, atlas.breakpoint_outcomes)],
        "endpoints": {"zero": _optional_outcome(atlas.at_zero), "one": atlas.at_one.to_json()},
    }


def cmd_quota_partition(args):
    part = sweep.quota_partition(_instance(args))

    def opt(v):
        return None if v is None else rat_str(v)

    return {
        "tau": rat_str(part.tau_low),
        "tau_bar": rat_str(part.tau_high),
        "tight_low": opt(part.tight_low),
        "tight_low_closed": part.tight_low_closed,
        "tight_high": opt(part.tight_high),
        "tight_high_closed": part.tight_high_closed,
    }


def _distribution(args) -> rnd.DeltaDistribution:
    if not args.g:
        raise ValidationError("--g is required")
    data = _load_json(args.g)
    if not isinstance(data, dict):
        raise ValidationError("distribution JSON must be an object")
    return rnd.DeltaDistribution.from_json(data)


def cmd_expect(args):
    inst = _instance(args)
    dist = _distribution(args)
    expected = rnd.expected_apportionment(inst, dist, args.tiebreak)
    bounds = {"quotas": _rats(quotas(inst)), "mixture_deviation": rat_str(Fraction(inst.house + 1, 2))}
    if dist.mean() == Fraction(1, 2):
        bounds["mean_half"] = _rats(rnd.fixed_pop_bound_check(inst, dist, args.tiebreak).bounds)
    return {"expected": _rats(expected), "bounds": bounds}


def cmd_sample(args):
    inst = _instance(args)
    seed = rnd.check_seed(args.seed)
    if args.method == "fixed-divisor":
        rows = rnd.fixed_divisor_batch(inst, seed, args.reps, args.shifts).tolist()
    else:
        rows = rnd.sample_randomized_batch(inst, _distribution(args), args.tiebreak, seed, args.reps, args.workers)
    return {"samples": [list(r) for r in rows]}


def cmd_hm(args):
    inst = _instance(args)
    caps = {"max_nodes": args.max_nodes}
    if args.hm_command == "enumerate":
        return [list(x) for x in sorted(flow.enumerate_hm_quota(inst, max_horizon=args.max_horizon, **caps), reverse=True)]
    if args.hm_command == "phi":
        return flow.phi(inst, inst.house, max_horizon=args.max_horizon, **caps).to_json()
    if args.hm_command == "decompose":
        return flow.decompose_quota(inst, **caps).to_json()
    seed = rnd.check_seed(args.seed)
    rows = flow.sample_hm_batch(inst, seed, args.reps).tolist()
    return rows[0] if args.reps == 1 else rows


def cmd_gen_adversary(args):
    if args.kind == "stationary":
        if args.house is None or args.delta is None:
            raise ValidationError("--house and --delta are required")
        inst = rnd.adversary_stationary(args.house, args.delta, args.eps)
    else:
        if not args.signposts:
            raise ValidationError("--signposts is required")
        inst = rnd.adversary_fixed_divisor([as_rat(s) for s in args.signposts.split(",")], args.eps)
    return _instance_json(inst)


def cmd_gen_from_arrangement(args):
    data = _load_json(args.arrangement)
    try:
        spec = sweep.ArrangementSpec.from_json(data)
    except (KeyError, TypeError) as exc:
        raise ValidationError("arrangement JSON needs a 'lines' list of {m, c}") from exc
    built = sweep.instance_from_arrangement(spec, args.k, normalize=not args.no_normalize)
    return {
        **_instance_json(built.instance),
        "rational_populations": _rats(built.populations),
        "scale": built.scale,
        "kept": list(built.kept),
    }


def _seed(value: str) -> int:
    try:
        return rnd.check_seed(int(value))
    except ValueError as exc:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {value!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--instance", help="instance JSON with populations and house")
    common.add_argument("--house", type=int, help="override the house size")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--format", choices=["json"], default="json")

    parser = _Parser(prog="artifact", description="Exact apportionment methods.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("apportion", parents=[common], help="evaluate one method")
    p.add_argument("--method", default="stationary", choices=["stationary", "power-mean", "hamilton", *METHODS])
    p.add_argument("--delta")
    p.add_argument("--q", help="rational, +inf or -inf")
    p.set_defaults(handler=cmd_apportion)

    p = sub.add_parser("atlas", parents=[common], help="breakpoints in delta with every outcome")
    p.add_argument("--events", choices=["walk", "pairs"], default="walk")
    p.set_defaults(handler=cmd_atlas)

    p = sub.add_parser("quota-partition", parents=[common], help="quota thresholds in delta")
    p.set_defaults(handler=cmd_quota_partition)

    tiebreaks = [t.value for t in rnd.TieBreak]
    p = sub.add_parser("expect", parents=[common], help="exact expectation under a delta distribution")
    p.add_argument("--g", help="distribution JSON")
    p.add_argument("--tiebreak", choices=tiebreaks, default="uniform")
    p.set_defaults(handler=cmd_expect)

    p = sub.add_parser("sample", parents=[common], help="seeded draws of a randomized method")
    p.add_argument("--method", choices=["stationary", "fixed-divisor"], default="stationary")
    p.add_argument("--g", help="distribution JSON")
    p.add_argument("--tiebreak", choices=tiebreaks, default="uniform")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--shifts", choices=["paired", "iid"], default="paired")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_sample)

    hm = sub.add_parser("hm", help="house-monotone quota methods")
    hm_sub = hm.add_subparsers(dest="hm_command", required=True, parser_class=_Parser)
    for name in ("enumerate", "phi", "decompose", "sample"):
        p = hm_sub.add_parser(name, parents=[common])
        p.add_argument("--max-nodes", type=int, default=flow.DEFAULT_MAX_NODES)
        p.add_argument("--max-horizon", type=int, default=flow.DEFAULT_MAX_HORIZON)
        p.add_argument("--reps", type=int, default=1)
        p.set_defaults(handler=cmd_hm)

    p = sub.add_parser("gen-adversary", parents=[common], help="instances with large quota deviation")
    p.add_argument("--kind", choices=["stationary", "fixed-divisor"], default="stationary")
    p.add_argument("--delta")
    p.add_argument("--eps", default="1/2")
    p.add_argument("--signposts", help="comma-separated first signposts")
    p.set_defaults(handler=cmd_gen_adversary)

    p = sub.add_parser("gen-from-arrangement", parents=[common], help="instance whose level traces a line arrangement")
    p.add_argument("--arrangement", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(handler=cmd_gen_from_arrangement)
    return parser


def _emit_error(exc: ApportionmentError) -> None:
    print(json.dumps({"error": {"kind": exc.kind, "detail": str(exc)}}), file=sys.stderr)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "reps", 1) < 1:
            raise ValidationError("--reps must be positive")
        result = args.handler(args)
        text = json.dumps(result) + "\n"
        if args.out == "-":
            sys.stdout.write(text)
        else:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
    except ResourceCapExceeded as exc:
        _emit_error(exc)
        return 3
    except ApportionmentError as exc:
        _emit_error(exc)
        return 2
    except OSError as exc:
        _emit_error(ValidationError(str(exc)))
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
