"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 degraded run (alarm fraction above
the configured limit), 4 property-check failure.
"""

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import io
from .config import apply_overrides, config_hash, read_raw, validate
from .errors import MRLError, ResourceError, ValidationError
from .estimators.sphere import sphere_mesh
from .mc_harness import ExperimentPlan, default_workers, run_plan
from .model import check_assumption3, check_ellipticity, hormander_rank
from .pipelines import models

EXIT_OK, EXIT_VALIDATION, EXIT_DEGRADED, EXIT_CHECK = 0, 2, 3, 4

COMMANDS = (
    "simulate", "lift", "solve", "malliavin", "eigen-tail", "roughness", "smallball",
    "density", "jacobian-probe", "hormander-check", "check-assumptions",
)


def build_parser():
    p = argparse.ArgumentParser(prog="mrl", description="Markovian rough path Malliavin experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file (defaults to an empty version-1 config)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, value parsed as JSON when possible")
        s.add_argument("--workers", type=int, default=None, help="worker processes (default $MRL_WORKERS or 1)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None, help="output directory (default mrl_out/<command>)")
        s.add_argument("--no-resume", action="store_true", help="discard an existing summary log")
    return p


def resolve_config(args):
    pipeline = args.command.replace("-", "_")
    raw = read_raw(args.config) if args.config else {"version": 1}
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    raw = apply_overrides(raw, args.set)
    raw["pipeline"] = pipeline
    if args.seed is not None:
        raw["seed"] = args.seed
    return validate(raw)


def hormander_check(cfg):
    _, fields = models(cfg)
    h = cfg["hormander"]
    x = np.asarray(h.get("x", np.zeros(fields.m)), dtype=float)
    rep = hormander_rank(fields, x, h["k0"], h["svd_tol"], h["budget"])
    payload = {
        "x": x, "k0": h["k0"], "rank_by_level": rep.rank_by_level, "satisfied_at": rep.satisfied_at,
        "singular_values": rep.singular_values, "n_brackets": rep.n_brackets,
    }
    return payload, rep.satisfied_at is not None


def check_assumptions(cfg):
    spec, _ = models(cfg)
    a = cfg["assumptions"]
    axis = np.linspace(-a["box"], a["box"], a["points_per_axis"])
    probes = np.array(list(itertools.product(axis, repeat=spec.d)))
    dirs = sphere_mesh(spec.d, a["n_directions"])
    ell = check_ellipticity(spec, probes, dirs)
    a3 = check_assumption3(spec, probes, convention=a["contraction"])
    payload = {
        "ellipticity": {
            "lambda": spec.lam, "Lambda": spec.Lam, "min_rayleigh": ell.min_rayleigh,
            "max_rayleigh": ell.max_rayleigh, "pass": ell.passed,
        },
        "assumption3": {
            "estimated_CJ": a3.estimated_CJ, "argmin_point": a3.argmin_point,
            "argmin_direction": a3.argmin_direction, "convention": a3.convention,
            "a_constant": a3.a_constant, "pass": a3.estimated_CJ > 0,
        },
        "drift_convention": spec.convention,
        "probe_box": a["box"],
        "n_probes": int(len(probes)),
    }
    return payload, bool(ell.passed and a3.estimated_CJ > 0 and not a3.a_constant)


def run(args):
    cfg = resolve_config(args)
    out = args.out or os.path.join("mrl_out", args.command)
    workers = default_workers() if args.workers is None else args.workers
    if workers < 1:
        raise ValidationError("--workers must be >= 1")
    if args.command in ("hormander-check", "check-assumptions"):
        fn = hormander_check if args.command == "hormander-check" else check_assumptions
        payload, ok = fn(cfg)
        payload["pass"] = ok
        io.write_json(os.path.join(out, "report.json"), payload, config_hash(cfg))
        print(json.dumps(io._jsonable(payload), sort_keys=True))
        return EXIT_OK if ok else EXIT_CHECK
    res = run_plan(ExperimentPlan(cfg, out), workers=workers, resume=not args.no_resume)
    agg = res.aggregate
    print(f"{cfg['pipeline']}: {agg.n_ok} ok, {agg.n_alarm} alarm, {agg.n_excluded} excluded -> {out}")
    for name, ok in res.checks.items():
        print(f"  check {name}: {'pass' if ok else 'FAIL'}")
    if res.degraded:
        return EXIT_DEGRADED
    if not all(res.checks.values()):
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ResourceError, MRLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
