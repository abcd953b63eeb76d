"""Command-line interface: ``ltrc-ustat {test,estimate,simulate}``.

Exit codes: 0 on success, 2 for unusable input or configuration, 3 when the
data are valid but a statistic is undefined on them.  Failures print a JSON
object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import estimators, ingest, sim
from .crtest import run_test
from .errors import ConfigError, InputError, LtrcError, NumericError, ParseError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

BUILTIN_TRANSFORMER = "builtin:transformer"
ESTIMATORS = ("K_c", "Lambda_c", "S_X", "F1", "F2")


def load_sample(path: str):
    """Read a dataset, picking the format from its header line."""
    if path == BUILTIN_TRANSFORMER:
        return ingest.load_transformer()
    p = Path(path)
    if not p.is_file():
        raise ParseError(0, f"cannot read {path}")
    text = p.read_text(encoding="utf-8")
    head = text.lstrip().split("\n", 1)[0].strip()
    if head.startswith("serial"):
        return ingest.ingest_transformer(p)
    return ingest.read_ltrc_csv(p)


def load_config(path: str) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    try:
        if p.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_test(args) -> int:
    sample = load_sample(args.input)
    res = run_test(sample, args.alpha, scaling=args.scaling, variance=args.variance,
                   weighting=args.weighting, limit=args.limit_convention)
    report = res.to_dict()
    if args.format == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        flat = {k: v for k, v in report.items() if not isinstance(v, dict)}
        flat.update(report["conventions"])
        text = ",".join(flat) + "\n" + ",".join(str(v) for v in flat.values()) + "\n"
    _emit(text, args.out)
    return 0


def _estimate(sample, name, args):
    if name == "K_c":
        return estimators.censor_survival(sample)
    if name == "Lambda_c":
        return estimators.censor_cum_hazard(sample)
    if name == "S_X":
        return estimators.failure_survival(sample)
    cause = 1 if name == "F1" else 2
    return estimators.cumulative_incidence(sample, cause, limit=args.limit_convention,
                                           weighting=args.weighting)


def cmd_estimate(args) -> int:
    sample = load_sample(args.input)
    names = args.estimators.split(",")
    for name in names:
        if name not in ESTIMATORS:
            raise ConfigError("estimators", f"unknown estimator {name!r}")
    fns = {name: _estimate(sample, name, args) for name in names}
    if args.format == "json":
        doc = {name: {"initial": f.initial_value, "times": f.jump_times.tolist(),
                      "values": f.values.tolist()} for name, f in fns.items()}
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return 0
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for name, f in fns.items():
        (out / f"{name}.csv").write_text(ingest.step_csv(f, name), encoding="utf-8")
    print(json.dumps({"written": [str(out / f"{n}.csv") for n in fns]}))
    return 0


def cmd_simulate(args) -> int:
    grid = load_config(args.config)
    if args.seed is not None:
        grid["seed"] = args.seed
    if args.scaling is not None:
        grid["scaling"] = args.scaling
    configs = sim.expand_grid(grid)
    rows = sim.simulate_table(configs, workers=args.workers)
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        text = sim.table_csv(rows)
    _emit(text, args.out)
    if args.out:
        for r in rows:
            print(f"a={r['a']:g} p1={r['p1']:g} n={r['n']} cens={r['censor_frac']:g} "
                  f"alpha={r['alpha']:g}: rate={r['rejection_rate']:.4f} "
                  f"(se {r['mc_se']:.4f}, reps {r['reps']}, skipped {r['skipped']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltrc-ustat",
        description="U-statistics and a lifetime/cause independence test for "
                    "left-truncated, right-censored competing-risks data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = argparse.ArgumentParser(add_help=False)
    conv.add_argument("--limit-convention", choices=("left", "right"), default="left",
                      help="evaluate the censoring survival at T- or at T")
    conv.add_argument("--weighting", choices=("censoring", "ltrc"), default="censoring")
    conv.add_argument("--out", help="output file (test, simulate) or directory (estimate)")

    p = sub.add_parser("test", parents=[conv], help="run the independence test")
    p.add_argument("input", help=f"CSV file, or {BUILTIN_TRANSFORMER}")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--scaling", choices=("theorem3", "as-printed"), default="theorem3")
    p.add_argument("--variance", choices=("influence", "plugin"), default="influence")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("estimate", parents=[conv], help="export estimated curves")
    p.add_argument("input", help=f"CSV file, or {BUILTIN_TRANSFORMER}")
    p.add_argument("--estimators", default=",".join(ESTIMATORS),
                   help="comma-separated subset of " + ",".join(ESTIMATORS))
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo rejection-rate table")
    p.add_argument("config", help="JSON or TOML simulation config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scaling", choices=("theorem3", "as-printed"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if getattr(args, "alpha", 0.5) is not None and not 0 < getattr(args, "alpha", 0.5) < 1:
        return _fail(ConfigError("alpha", "must lie in (0, 1)"), 2)
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(exc, 2)
    except NumericError as exc:
        return _fail(exc, 3)
    except LtrcError as exc:  # pragma: no cover - every error is one of the above
        return _fail(exc, 3)


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
