"""Command-line entry point: ``seqpg <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataio, stats
from .dataset import merge
from .equilibrium import classify_regime
from .game import GameConfig, GameError, as_treatment
from .montecarlo import McConfig, NOISE_LEVELS, default_grid, format_tables, run_mc
from .sfem import fit
from .simulator import PopulationSpec, simulate_session


def _freqs(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _out(path: str | None, default_name: str) -> Path:
    return Path(path) if path else dataio.default_output_dir() / default_name


def cmd_simulate(args) -> int:
    if args.config:
        run = dataio.RunConfig.load(args.config)
        treatment, freqs, beta, seed = run.treatment, run.freqs(), run.beta, run.seed
        cfg = run.game_config()
        out = args.out or run.outputs.get("dataset")
    else:
        treatment, freqs, beta, seed = args.treatment, args.freqs, args.beta, args.seed
        cfg = GameConfig.for_treatment(treatment, n=args.n, r=args.r, rounds=args.rounds,
                                       endowment=args.endowment)
        out = args.out
    spec = PopulationSpec.from_freqs(treatment, freqs, beta, seed)
    dataset = simulate_session(spec, cfg, session_id=args.session)
    path = dataio.export(dataset, _out(out, f"sim_{spec.treatment.value}_seed{seed}.csv"))
    print(f"wrote {len(dataset)} rows to {path}")
    return 0


def cmd_estimate(args) -> int:
    dataset = merge(dataio.ingest(p) for p in args.data)
    est = fit(dataset, restarts=args.restarts, seed=args.seed)
    print(est.table())
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(est.to_dict(), indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_mc(args) -> int:
    if args.config:
        cfg = McConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        grid = default_grid()
        if args.treatments:
            keep = {as_treatment(t) for t in args.treatments.split(",")}
            grid = [g for g in grid if g.treatment in keep]
        if args.noise:
            levels = {NOISE_LEVELS[x] for x in args.noise.split(",")}
            grid = [g for g in grid if g.beta in levels]
        cfg = McConfig(grid, args.replications, args.seed, args.restarts, args.workers, args.cache)
    report = run_mc(cfg)
    for path in format_tables(report, _out(args.out, "mc")):
        print(f"wrote {path}")
    if report.n_failures:
        print(f"{report.n_failures} replications failed to fit", file=sys.stderr)
        return 1
    return 0


def cmd_equilibrium(args) -> int:
    cfg = GameConfig(n=args.n, r=args.r, m=args.m, position_known=args.known)
    print(classify_regime(cfg).describe())
    return 0


def cmd_stats(args) -> int:
    if args.test == "binomial":
        res = stats.binomial_test(args.k, args.n, args.p0)
    elif args.test == "hpd":
        lo, hi = stats.beta_hpd(args.successes, args.failures, args.a, args.b, args.mass)
        print(f"HPD {args.mass:.0%}: ({lo:.4f}, {hi:.4f})")
        return 0
    elif args.test == "mcnemar":
        res = stats.mcnemar_test(args.b, args.c)
    elif args.test == "chisq":
        a, b, c, d = args.table
        res = stats.chisq_independence([[a, b], [c, d]], correction=args.correction)
    else:
        res = stats.two_prop_ztest(args.s1, args.n1, args.s2, args.n2)
    print(res.describe())
    return 0


def cmd_report(args) -> int:
    dataset = merge(dataio.ingest(p) for p in args.data)
    for path in dataio.write_report(dataset, _out(args.out, "report")):
        print(f"wrote {path}")
    rep = dataio.report_contributions(dataset)
    for t, tokens in rep.mean_tokens.items():
        print(f"{t}: mean contribution across conditions {tokens:.3f} tokens")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqpg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one session and write the CSV dataset")
    p.add_argument("--treatment", default="T1")
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--freqs", type=_freqs, default=[6, 9, 12, 5], help="gm,alt,coop[,free] counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--r", type=float, default=3.0)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--endowment", type=float, default=10.0)
    p.add_argument("--session", default="S1")
    p.add_argument("--config", help="RunConfig JSON (overrides the flags above)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit the type mixture to one or more datasets")
    p.add_argument("data", nargs="+")
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("mc", help="run the parameter-recovery study")
    p.add_argument("--config", help="McConfig JSON")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--treatments", help="comma list, e.g. T1,T3")
    p.add_argument("--noise", help="comma list of high,medium,low")
    p.add_argument("--cache", help="directory for per-cell results (resume)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("equilibrium", help="print the equilibrium summary")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--r", type=float, default=3.0)
    p.add_argument("--known", action="store_true", help="players know their position")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("stats", help="hypothesis tests")
    tests = p.add_subparsers(dest="test", required=True)
    t = tests.add_parser("binomial")
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--p0", type=float, required=True)
    t = tests.add_parser("hpd")
    t.add_argument("--successes", type=int, required=True)
    t.add_argument("--failures", type=int, required=True)
    t.add_argument("--a", type=float, default=1.0)
    t.add_argument("--b", type=float, default=1.0)
    t.add_argument("--mass", type=float, default=0.95)
    t = tests.add_parser("mcnemar")
    t.add_argument("--b", type=int, required=True)
    t.add_argument("--c", type=int, required=True)
    t = tests.add_parser("chisq")
    t.add_argument("--table", type=_freqs, required=True, help="a,b,c,d row-major 2x2 counts")
    t.add_argument("--correction", action="store_true")
    t = tests.add_parser("ztest")
    for name in ("s1", "n1", "s2", "n2"):
        t.add_argument(f"--{name}", type=int, required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="contribution curves (CSV + SVG)")
    p.add_argument("data", nargs="+")
    p.add_argument("--out", help="output prefix")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "stats" and args.test == "chisq" and len(args.table) != 4:
        parser.error("--table needs four counts")
    try:
        return args.func(args)
    except (GameError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
