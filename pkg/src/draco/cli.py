"""Command-line entry point: ``draco train | verify | bench | tables``.

Exit codes: 0 success, 1 a verification failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import config as config_mod
from .bench import BENCH_HEADER, bench_cell
from .codes import CodeParams, CyclicTables, InvalidParams, Scheme, build_cyclic_tables
from .simharness import ConfigError, run_experiment
from .verify import SUITES

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_train(args) -> int:
    try:
        cfg, values = config_mod.load(args.config, args.override, args.seed)
        tables = None
        tables_path = values["code.tables"]
        if tables_path and Path(tables_path).is_file():
            tables = CyclicTables.load(tables_path)
        out_dir = Path(args.out or values["out.dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        result = run_experiment(cfg, tables=tables, keep_transcripts=values["out.transcripts"])
        (out_dir / "metrics.csv").write_text(result.metrics_csv())
        if values["out.transcripts"]:
            (out_dir / "transcripts.jsonl").write_text(result.transcripts_jsonl())
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    last = result.rows[-1]
    acc = f", accuracy {float(last['accuracy']):.4f}" if last["accuracy"] else ""
    print(f"{cfg.aggregator} P={cfg.P} s={cfg.s} attack={cfg.attack.kind}x{cfg.attack.count}: "
          f"{cfg.T} rounds, final loss {float(last['loss']):.6g}{acc} -> {out_dir / 'metrics.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        kwargs = {}
        if args.trials is not None:
            kwargs = {"codes": {"seeds": args.trials}, "detection": {"trials": args.trials},
                      "equivalence": {"T": args.trials}}[name]
        print(f"== {name}")
        for check in SUITES[name](**kwargs):
            print(check.line())
            failed += not check.passed
    print("all checks passed" if not failed else f"{failed} check(s) failed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_bench(args) -> int:
    try:
        rows = [bench_cell(args.scheme, P, args.s, args.d, args.reps, args.seed, not args.no_gm)
                for P in _ints(args.P)]
    except InvalidParams as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        try:
            Path(args.out).write_text(buf.getvalue())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_tables(args) -> int:
    try:
        P, s, out = args.P, args.s, args.out
        if args.config:
            cfg, values = config_mod.load(args.config, args.override)
            P, s = cfg.P, cfg.s
            out = out or values["code.tables"]
        if P is None or s is None or not out:
            raise ConfigError("need P, s and an output path (flags or config)")
        tables = build_cyclic_tables(CodeParams(P, s, Scheme.CYCLIC))
        tables.save(out)
    except (ConfigError, InvalidParams, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote cyclic tables P={P} s={s} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="draco", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a simulated training experiment")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, help="overrides DRACO_SEED and the config file")
    p.add_argument("--out", help="output directory (default: out.dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run the seeded property suites")
    p.add_argument("suite", choices=[*SUITES, "all"])
    p.add_argument("--trials", type=int, help="seeds (codes), trials (detection) or rounds (equivalence)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time encode/decode against the geometric median")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="repetition")
    p.add_argument("--P", default="6,12,24,48", help="comma-separated node counts")
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--d", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-gm", action="store_true")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("tables", help="(re)build the cyclic-code tables cache file")
    p.add_argument("--config")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--P", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tables)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
