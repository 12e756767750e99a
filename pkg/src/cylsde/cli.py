"""Command-line front end.

Exit codes: 0 when every check passes, 1 when an experiment fails, 2 for
usage or configuration errors.
"""
import argparse
import sys
import time

from .config import CORE_KEYS, ConfigError, parse_config
from .harness import Experiment, ExperimentError, refine, run, selftest_experiments
from .noise import OffGridError, sample_cylindrical
from .stats import TooFewPathsError

SUBCOMMANDS = {
    "isometry": "isometry", "duality": "duality", "pushthrough": "pushthrough", "qv": "qv", "cross": "cross",
    "bdg": "bdg", "strat-convert": "strat_convert", "collapse": "collapse", "solve": "solve",
    "truncate": "truncation", "energy": "energy", "ito-formula": "ito_formula",
}
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_LIMIT = 2**64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text):
    value = int(text, 10)
    if not 0 <= value < SEED_LIMIT:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=_seed, help="master seed (required with --ci)")
    common.add_argument("--n-paths", type=int, dest="n_paths")
    common.add_argument("--dt", type=float)
    common.add_argument("--t-final", type=float, dest="t_final")
    common.add_argument("--k-modes", type=int, dest="k_modes")
    common.add_argument("--workers", type=int, help="thread count for path fan-out")
    common.add_argument("--out", help="write the report CSV here instead of standard output")
    common.add_argument("--ci", action="store_true", help="CI mode: a seed is mandatory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cylsde", description="Monte Carlo checks of Hilbert-space stochastic calculus")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "solve":
            p.add_argument("--path-out", help="also write the first solution path as CSV")
    p = sub.add_parser("refine", parents=[common])
    p.add_argument("--kind", help="experiment kind to refine (overrides the config)")
    p.add_argument("--ladder", help="comma-separated dt or mesh values, coarse to fine")
    sub.add_parser("selftest", parents=[common])
    return parser


def _load_config(args):
    if not args.config:
        return parse_config("")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _resolve_seed(args, cfg):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        if args.ci:
            raise UsageError("--ci requires a seed (--seed or 'seed' in the config)")
        seed = time.time_ns() % SEED_LIMIT
    return seed


def _experiment(args, cfg, kind):
    if cfg.kind is not None and cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}", cfg.lines["kind"], 1)
    fields = {k: cfg.get(k) for k in CORE_KEYS if k not in ("kind", "out", "verbosity") and k in cfg}
    for key in ("n_paths", "dt", "t_final", "k_modes", "workers"):
        if getattr(args, key) is not None:
            fields[key] = getattr(args, key)
    fields["seed"] = _resolve_seed(args, cfg)
    return Experiment(kind, cfg.params(), **fields)


def _emit(text, args, cfg):
    out = args.out or cfg.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_path(args, exp):
    from .harness import _ou
    from .spde import solve_em

    A, G, _, _ = _ou(exp)
    sol = solve_em(A, G, [float(exp.param("psi0", 0.0))], sample_cylindrical(exp.grid, 1, exp.seed, 1))
    with open(args.path_out, "w", encoding="utf-8", newline="") as fh:
        sol.to_csv(fh, seed=exp.seed)


def _cmd_experiment(args, cfg):
    exp = _experiment(args, cfg, SUBCOMMANDS[args.command])
    report = run(exp)
    _emit(report.csv_text(), args, cfg)
    if args.command == "solve" and args.path_out:
        _write_path(args, exp)
    print(report.summary_line())
    return EXIT_PASS if report.passed else EXIT_FAIL


def _cmd_refine(args, cfg):
    kind = args.kind or cfg.kind
    if kind is None:
        raise ConfigError("missing required key: kind (or pass --kind)")
    if args.ladder:
        try:
            ladder = [float(x) for x in args.ladder.split(",")]
        except ValueError:
            raise UsageError(f"bad --ladder {args.ladder!r}") from None
    else:
        cfg.require("ladder")
        ladder = cfg.get("ladder")
    if cfg.kind is None:
        cfg.values["kind"] = kind
    exp = _experiment(args, cfg, kind)
    rep = refine(exp, ladder)
    rows = ["rung,param,error\n"] + [f"{i},{p:.17g},{e:.17g}\n" for i, (p, e) in enumerate(zip(rep.params, rep.errors))]
    rows.append(f"# slope={rep.slope:.17g}, floor={str(rep.floor).lower()}\n")
    rows.append(f"# seed={exp.seed}, dt={min(ladder)!r}, n={exp.n_paths}\n")
    _emit("".join(rows), args, cfg)
    expected = cfg.get("expected_slope")
    ok = True
    if expected is not None and not rep.floor:
        ok = abs(rep.slope - expected) <= cfg.get("slope_tol", 0.3)
    status = "PASS" if ok else "FAIL"
    floor = " floor" if rep.floor else ""
    print(f"{status} refine {kind} slope={rep.slope:.4f} rungs={len(ladder)}{floor}")
    return EXIT_PASS if ok else EXIT_FAIL


def _cmd_selftest(args, cfg):
    start = time.perf_counter()
    reports = [run(e) for e in selftest_experiments(args.workers or 1)]
    text = "".join(f"# experiment={r.experiment.kind}\n" + r.csv_text() for r in reports)
    if args.out or cfg.get("out"):
        _emit(text, args, cfg)
    if args.verbose:
        for r in reports:
            print(r.summary_line())
    passed = sum(r.passed for r in reports)
    status = "PASS" if passed == len(reports) else "FAIL"
    print(f"{status} selftest {passed}/{len(reports)} runtime={time.perf_counter() - start:.2f}s")
    return EXIT_PASS if passed == len(reports) else EXIT_FAIL


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_PASS if exc.code in (0, None) else EXIT_USAGE
    try:
        cfg = _load_config(args)
        if args.command == "selftest":
            return _cmd_selftest(args, cfg)
        if args.command == "refine":
            return _cmd_refine(args, cfg)
        return _cmd_experiment(args, cfg)
    except (UsageError, ConfigError, ExperimentError, TooFewPathsError, OffGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"FAIL {args.command} error={type(exc).__name__}: {exc}")
        return EXIT_FAIL


def entry():
    sys.exit(main())
