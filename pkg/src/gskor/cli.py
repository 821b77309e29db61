"""Command-line front end: ``gskor {skorokhod,simulate,expect,verify}``.

Outputs are data only (CSV and JSON) and depend on nothing but the inputs
and seeds. Failures exit nonzero with a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gsde, skorokhod, verify
from .config import ConstraintSpec, RunConfig, load_config, materialize
from .errors import ConfigError, GskorError
from .gexp import FUNCTIONALS, family_sensitivity, lower_expectation, sublinear_expectation
from .path_core import read_path_csv, write_columns_csv

EXIT_FAILED_CHECK = 1
EXIT_ERROR = 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path | None, obj) -> None:
    text = _dump(obj)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_run_config(path: str) -> tuple[RunConfig, dict]:
    cfg = load_config(path)
    return cfg, materialize(cfg, Path(path).parent)


def cmd_skorokhod(args) -> int:
    s = read_path_csv(args.input)
    spec_path = Path(args.constraints)
    try:
        spec = ConstraintSpec.model_validate_json(spec_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError([{"pointer": "", "kind": "validation-error", "message": str(exc)}]) from None
    pair = spec.build(s.grid, spec_path.parent)
    sol = skorokhod.solve(s, pair)
    write_columns_csv(args.out, s.grid, {"s": s.values, "x": sol.x.values, "k": sol.k.values,
                                         "k_r": sol.k_r.values, "k_l": sol.k_l.values})
    return 0


def cmd_simulate(args) -> int:
    cfg, objs = _load_run_config(args.config)
    if objs["pair"] is None:
        raise ConfigError([{"pointer": "/constraints", "kind": "validation-error",
                            "message": "simulate needs a constraint specification"}])
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    res = gsde.ensemble_solve(cfg.x0, objs["coefficients"], objs["pair"], objs["family"], objs["grid"],
                              cfg.paths, cfg.seed, p=cfg.p, tol=cfg.tolerances.picard,
                              max_iter=cfg.tolerances.max_iter, init=cfg.picard_init,
                              realized_qv=cfg.realized_qv)
    iterations = []
    for j, (sols, paths) in enumerate(zip(res.solutions, res.paths)):
        for i, (sol, path) in enumerate(zip(sols, paths)):
            if sol is None:
                continue
            iterations.append(sol.iterations)
            write_columns_csv(out / f"path_s{j:03d}_p{i:06d}.csv", objs["grid"], {
                "B": path.B.values, "QV": path.QV.values, "X": sol.X.values, "A": sol.A.values,
                "A_r": sol.A_r.values, "A_l": sol.A_l.values})
    summary = {
        "config": cfg.model_dump(),
        "scenarios": [c.describe() for c in objs["family"]],
        "moments": res.moments,
        "per_scenario": res.per_scenario,
        "picard_iterations": {"min": min(iterations, default=0), "max": max(iterations, default=0),
                              "mean": float(np.mean(iterations)) if iterations else 0.0},
        "failures": res.failures,
    }
    _write_json(out / "summary.json", summary)
    return EXIT_FAILED_CHECK if res.failures else 0


def cmd_expect(args) -> int:
    cfg, objs = _load_run_config(args.config)
    if args.functional not in FUNCTIONALS:
        raise ConfigError([{"pointer": "", "kind": "validation-error",
                            "message": f"unknown functional {args.functional!r}; choose from {sorted(FUNCTIONALS)}"}])
    fn = FUNCTIONALS[args.functional]
    kw = dict(realized_qv=cfg.realized_qv)
    upper = sublinear_expectation(fn, objs["family"], objs["grid"], cfg.paths, cfg.seed, **kw)
    low_value, low = lower_expectation(fn, objs["family"], objs["grid"], cfg.paths, cfg.seed, **kw)
    report = {
        "functional": args.functional,
        "upper": upper.to_dict(),
        "lower": {"value": low_value, "argmin": low.argmax, "stderr": low.stderrs[low.argmax]},
        "sublinear_ordering_holds": bool(upper.value >= low_value),
        "grid": {"T": cfg.grid.T, "n": cfg.grid.n},
        "seed": cfg.seed,
    }
    if args.sensitivity:
        ms = [int(m) for m in args.sensitivity.split(",")]
        report["family_sensitivity"] = family_sensitivity(fn, objs["bounds"], objs["grid"], ms,
                                                          cfg.paths, cfg.seed, **kw)
    _write_json(Path(args.out) if args.out else None, report)
    return 0


def cmd_verify(args) -> int:
    names = "all" if args.suite == "all" else args.suite.split(",")
    try:
        reports = verify.run_suites(names, args.trials, args.seed)
    except KeyError as exc:
        raise ConfigError([{"pointer": "", "kind": "validation-error", "message": exc.args[0]}]) from None
    doc = {"seed": args.seed, "reports": [r.to_dict() for r in reports],
           "verdict": "pass" if all(r.passed for r in reports) else "fail"}
    for r in reports:
        print(f"{r.property_id}: {r.verdict} ({r.failures}/{r.trials} failed, worst slack {r.worst_slack:.3g})",
              file=sys.stderr)
    _write_json(Path(args.out) if args.out else None, doc)
    return 0 if doc["verdict"] == "pass" else EXIT_FAILED_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gskor", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = ap.add_subparsers(dest="command", required=True)

    sk = sub.add_parser("skorokhod", help="reflect one input path between two obstacles")
    sk.add_argument("--input", required=True, help="t,value CSV of the input path")
    sk.add_argument("--constraints", required=True, help="constraint JSON {kind, alpha, beta[, link]}")
    sk.add_argument("--out", required=True, help="output CSV (t,s,x,k,k_r,k_l)")
    sk.set_defaults(func=cmd_skorokhod)

    sim = sub.add_parser("simulate", help="solve the reflected SDE on every scenario path")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", help="output directory (default: config 'output')")
    sim.set_defaults(func=cmd_simulate)

    ex = sub.add_parser("expect", help="upper and lower sublinear expectation of a functional")
    ex.add_argument("--functional", required=True, help=f"one of {', '.join(sorted(FUNCTIONALS))}")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out", help="report JSON (default: stdout)")
    ex.add_argument("--sensitivity", help="comma-separated family sizes m for a sensitivity table")
    ex.set_defaults(func=cmd_expect)

    ve = sub.add_parser("verify", help="run property suites")
    ve.add_argument("--suite", default="all", help=f"'all' or comma-separated from {', '.join(verify.SUITES)}")
    ve.add_argument("--trials", type=int, default=None, help="trial count (default: per-suite)")
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--out", help="report JSON (default: stdout)")
    ve.set_defaults(func=cmd_verify)
    return ap


def _error(kind: str, message: str, details=None) -> int:
    doc = {"error": kind, "message": message}
    if details:
        doc["details"] = details
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("config-error", str(exc), exc.errors)
    except GskorError as exc:
        return _error(type(exc).__name__, str(exc))
    except OSError as exc:
        return _error("io-error", str(exc))


if __name__ == "__main__":
    sys.exit(main())
