"""Command line: ``sdotlab run|suite|classify|exponents|replay``.

Exit codes: 0 everything passed, 1 a diagnostic failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .cones import classify, exponents
from .errors import ConfigError, PreconditionError
from .lab import config, runner
from .lab.report import fmt

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _print_report(rep, quiet: bool):
    if quiet:
        return
    print(f"[{rep.status}] {rep.name} ({rep.seconds:.1f}s)")
    if rep.error:
        print(f"  error: {rep.error}")
    for r in rep.results:
        line = f"  {r.status:5s} {r.kind:11s} {r.base}"
        if r.error:
            line += f"  {r.error}"
        print(line)
        for name, ok, detail in r.checks:
            print(f"        {'ok  ' if ok else 'FAIL'} {name}: {detail}")


def cmd_run(a) -> int:
    scn = config.load(a.config)
    if a.seed is not None:
        scn = scn.with_seed(a.seed)
    rep = runner.run(scn, a.out_dir, slack=a.slack, make_figures=not a.no_figures)
    _print_report(rep, a.quiet)
    return EXIT_OK if rep.status == "PASS" else EXIT_FAIL


def cmd_suite(a) -> int:
    d = Path(a.dir) if a.dir else runner.scenario_dir()
    if not d.is_dir():
        raise ConfigError("not a directory", where=str(d))
    paths = sorted(d.glob("*.yaml"))
    if not paths:
        raise ConfigError("no scenario files (*.yaml) found", where=str(d))
    reps = runner.suite(paths, a.out_dir, jobs=a.jobs, seed=a.seed, slack=a.slack, make_figures=not a.no_figures)
    for rep in reps:
        _print_report(rep, a.quiet)
    bad = [r.name for r in reps if r.status != "PASS"]
    if not a.quiet:
        print(f"{len(reps) - len(bad)}/{len(reps)} scenarios passed" + (f"; failed: {', '.join(bad)}" if bad else ""))
    return EXIT_FAIL if bad else EXIT_OK


def cmd_classify(a) -> int:
    from .cones import ConePair

    pair = ConePair(config.sector_of(a.source), config.sector_of(a.target))
    c = classify(pair)
    print(f"verdict: {c.verdict}")
    print(f"family_dimension: {c.family_dimension}")
    if c.witness is not None:
        q = c.witness.Q
        print(f"Q: [[{fmt(q[0, 0])}, {fmt(q[0, 1])}], [{fmt(q[1, 0])}, {fmt(q[1, 1])}]]")
    return EXIT_OK


def cmd_exponents(a) -> int:
    try:
        t = exponents(a.n, a.m, a.l, a.k)
    except PreconditionError as exc:
        raise ConfigError(str(exc), where="exponents") from exc
    for k, v in t.as_dict().items():
        print(f"{k}: {fmt(v) if not math.isnan(v) else 'nan'}")
    return EXIT_OK


def cmd_replay(a) -> int:
    kinds = [k.strip() for k in a.diagnostic.split(",") if k.strip()]
    bad = [k for k in kinds if k not in config.DIAGNOSTICS]
    if bad or not kinds:
        raise ConfigError(f"unknown diagnostic(s): {', '.join(bad) or '(none)'}", where="replay")
    rep = runner.replay(a.plan, kinds, a.out_dir, slack=a.slack)
    _print_report(rep, a.quiet)
    if not a.quiet:
        for f in rep.files:
            print(f"  wrote {f}")
    return EXIT_OK if rep.status == "PASS" else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out-dir", default="sdotlab-out", help="report directory (default: %(default)s)")
    common.add_argument("--jobs", type=int, default=1, help="parallel scenario runs for 'suite'")
    common.add_argument("--slack", type=float, default=None, help="chi monotonicity slack (default 0.05)")
    common.add_argument("--quiet", action="store_true", help="print nothing; rely on the exit code")
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = argparse.ArgumentParser(prog="sdotlab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("run", parents=[common], help="run one scenario file")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("suite", parents=[common], help="run every *.yaml in a directory (default: built-ins)")
    s.add_argument("dir", nargs="?", default=None)
    s.set_defaults(func=cmd_suite)
    s = sub.add_parser("classify", parents=[common], help="classify a sector pair given as 'lo,hi' degrees")
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.set_defaults(func=cmd_classify)
    s = sub.add_parser("exponents", parents=[common], help="print the exponent table")
    s.add_argument("--n", type=float, default=2)
    s.add_argument("--m", type=float, default=0)
    s.add_argument("--l", type=float, default=0)
    s.add_argument("--k", type=float, default=0)
    s.set_defaults(func=cmd_exponents)
    s = sub.add_parser("replay", parents=[common], help="re-run diagnostics on a saved plan")
    s.add_argument("plan")
    s.add_argument("diagnostic", help="diagnostic kind, or several separated by commas")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    p = build_parser()
    try:
        a = p.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if a.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if a.slack is not None and not a.slack >= 0:
        print("error: --slack must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return a.func(a)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
