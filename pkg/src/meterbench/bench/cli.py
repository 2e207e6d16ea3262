"""``meterbench`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 experiment error,
4 verification mismatch.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..datagen import household_ids
from ..domain import MeterError
from ..storage import ARCHITECTURES
from .config import ConfigError, RunConfig, load_config
from .experiment import ExperimentError, run_experiment, sweep_mcb, verify
from .report import emit_csv, emit_table, read_csv, write_readings_csv

OK, CONFIG_ERROR, EXPERIMENT_ERROR, MISMATCH = 0, 2, 3, 4


def _config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    changes = {}
    for name in ("architecture", "seed", "repetitions", "warmup", "output_dir", "cn_count", "households_per_cn"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if changes:
        try:
            config = config.override(**changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return config


def cmd_generate(args) -> int:
    config = _config(args)
    gen = config.generator()
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        for cn in range(config.cn_count):
            ids = household_ids(config.households_per_cn, cn)
            write_readings_csv(ids, gen.month(ids, config.month), out, header=cn == 0)
    finally:
        if out is not sys.stdout:
            out.close()
    return OK


def cmd_run(args) -> int:
    config = _config(args)
    try:
        report = run_experiment(config)
    except ExperimentError as exc:
        if exc.report is not None:
            sys.stdout.write(emit_table(exc.report))
        print(f"error: {exc}", file=sys.stderr)
        return EXPERIMENT_ERROR
    sys.stdout.write(emit_table(report))
    print(f"results in {config.output_dir / report.run_id}")
    return OK


def cmd_sweep(args) -> int:
    config = _config(args)
    households = args.households or list(config.sweep_households)
    workers = args.workers or list(config.mcb_workers)
    report = sweep_mcb(households, workers, config.seed, config.repetitions, config.warmup, config.month,
                       config.noise, config.bucket_set())
    path = Path(args.out) if args.out else config.output_dir / report.run_id / "results.csv"
    emit_csv(report, path, append=args.append)
    sys.stdout.write(emit_table(report))
    print(f"csv: {path}")
    return OK


def cmd_verify(args) -> int:
    config = _config(args)
    result = verify(config, [a.upper() for a in args.architectures], args.seeds)
    for seed, ref in sorted(result.reference.items()):
        print(f"seed {seed}  reference  {ref}")
    for line in result.lines():
        print(line)
    if not result.ok:
        print(f"mismatch: {result.mismatches}", file=sys.stderr)
        return MISMATCH
    return OK


def cmd_report(args) -> int:
    try:
        reports = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.csv}: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    if args.run_id:
        reports = [r for r in reports if r.run_id == args.run_id]
    for i, r in enumerate(reports):
        if i:
            sys.stdout.write("\n")
        sys.stdout.write(emit_table(r))
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meterbench", description="Smart-meter storage and billing benchmark.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("config", nargs=None if config_required else "?", help="YAML run config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--repetitions", type=int)
        sp.add_argument("--warmup", type=int)
        sp.add_argument("--output-dir", type=Path)

    g = sub.add_parser("generate", help="dump synthetic readings as CSV (household,slot,kwh)")
    common(g)
    g.add_argument("--cn-count", type=int)
    g.add_argument("--households-per-cn", type=int)
    g.add_argument("-o", "--out", default="-")
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("run", help="run one experiment from a config file")
    common(r, config_required=True)
    r.add_argument("--architecture", choices=[a.lower() for a in ARCHITECTURES] + list(ARCHITECTURES))
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="MCB speedup grid")
    common(s)
    s.add_argument("--households", type=int, nargs="+")
    s.add_argument("--workers", type=int, nargs="+")
    s.add_argument("-o", "--out")
    s.add_argument("--append", action="store_true", help="append to an existing CSV")
    s.set_defaults(fn=cmd_sweep)

    v = sub.add_parser("verify", help="compare bill checksums across architectures")
    common(v)
    v.add_argument("--architectures", nargs="+", default=list(ARCHITECTURES))
    v.add_argument("--seeds", type=int, nargs="+")
    v.set_defaults(fn=cmd_verify)

    t = sub.add_parser("report", help="render tables from a results CSV")
    t.add_argument("csv", type=Path)
    t.add_argument("--run-id")
    t.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (MeterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXPERIMENT_ERROR


if __name__ == "__main__":
    sys.exit(main())
