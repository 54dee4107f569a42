"""Command-line entry point: ``candlebt {run,compare,verify,snus}``.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 verification failure.
Warnings and the human summary go to stderr; machine-readable output goes to
files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dataio
from .errors import ConfigError, DataError, DegenerateOrder
from .oracle import DEFAULT_MAX_SEGMENTS
from .resolver import DEFAULT_MAX_DEPTH, SnuLogEntry, SnuPolicy
from .runner import BacktestReport, RunConfig, run, run_policy_comparison
from .verify import run_sweep

log = logging.getLogger("candlebt")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--candles", help="candle CSV file (header row required)")
    p.add_argument("--script", help="JSON signal script")
    p.add_argument("--tick-size", type=float, help="instrument tick size")
    p.add_argument("--resolution", default="1d", help="resolution label of the candle file (default 1d)")
    p.add_argument("--columns", help="column mapping, e.g. timestamp=Date,open=Open,...")
    p.add_argument("--timestamp-format", help="strptime format; ISO-8601 when omitted")
    p.add_argument("--slippage", type=int, default=0, help="slippage ticks per fill (default 0)")
    p.add_argument("--fees", type=float, default=0.0, help="fee ticks per round trip (default 0)")
    p.add_argument("--finer-dir", help="directory holding <label>.csv files for the exact policy")
    p.add_argument("--ladder", help="comma-separated finer resolutions, coarsest first (e.g. 1h,1m,tick)")
    p.add_argument("--fallback", default="wc", choices=["wc", "bc"], help="exact-policy fallback")
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH, help="exact-policy refinement depth")
    p.add_argument("--out", help="report path (stdout when omitted)")
    p.add_argument("--format", default="json", choices=["json", "csv"], help="report format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="candlebt", description="Candle backtests with honest handling of "
                                     "ambiguous candles.")
    parser.add_argument("--config", help="JSON file supplying any flag; command-line flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one backtest")
    _add_data_args(p)
    p.add_argument("--policy", default="wc", choices=["wc", "bc", "ig", "ex"], help="SNU policy")

    p = sub.add_parser("compare", help="run several policies on the same inputs")
    _add_data_args(p)
    p.add_argument("--policies", default="wc,bc", help="comma-separated policies (default wc,bc)")

    p = sub.add_parser("snus", help="list every ambiguous candle met during a run")
    _add_data_args(p)
    p.add_argument("--policy", default="wc", choices=["wc", "bc", "ig", "ex"], help="SNU policy")

    p = sub.add_parser("verify", help="check the decision engine against the tick-path oracle")
    p.add_argument("--radius", type=int, default=6, help="largest candle range swept (default 6)")
    p.add_argument("--max-segments", type=int, default=DEFAULT_MAX_SEGMENTS, help="oracle path legs")
    p.add_argument("--margin", type=int, default=2, help="order levels range over [low-m, high+m]")
    p.add_argument("--out", help="write the per-family table as JSON")
    return parser


def _flag_dests(parser: argparse.ArgumentParser) -> dict:
    return {a.dest: a for a in parser._actions}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(file_cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    # Re-parse with file values as defaults so explicit flags still override them.
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = _flag_dests(sub)
    defaults = {}
    for key, value in file_cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _columns(text: Optional[str]) -> dict:
    cols = dict(dataio.DEFAULT_COLUMNS)
    if not text:
        return cols
    for part in text.split(","):
        key, sep, name = part.partition("=")
        if not sep or key.strip() not in cols:
            raise ConfigError(f"bad column mapping {part!r}")
        cols[key.strip()] = name.strip()
    return cols


def _policy(name: str, args) -> SnuPolicy:
    try:
        return SnuPolicy.parse(name, args.fallback, args.max_depth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _inputs(args, policies: Sequence[SnuPolicy]):
    for flag in ("candles", "script", "tick_size"):
        if getattr(args, flag) in (None, ""):
            raise ConfigError(f"--{flag.replace('_', '-')} is required")
    needs_finer = any(p.kind.value == "ex" for p in policies)
    if needs_finer and not (args.finer_dir and args.ladder):
        raise ConfigError("policy ex reloads finer candles: pass --finer-dir and --ladder")
    cols = _columns(args.columns)
    if args.tick_size <= 0:
        raise ConfigError("--tick-size must be positive")
    spec = dataio.CandleFileSpec(args.candles, args.tick_size, cols, args.timestamp_format, args.resolution)
    try:
        candles = dataio.load_candles(spec)
    except FileNotFoundError as exc:
        raise DataError(f"candle file not found: {args.candles}") from exc
    try:
        script = dataio.load_script(args.script, args.tick_size)
    except FileNotFoundError as exc:
        raise ConfigError(f"script file not found: {args.script}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad signal script: {exc}") from exc
    refiner = None
    if args.finer_dir and args.ladder:
        ladder = [s.strip() for s in args.ladder.split(",") if s.strip()]
        refiner = dataio.DirectoryFinerSource(args.finer_dir, ladder, args.tick_size, cols, args.timestamp_format)
    config = RunConfig(args.tick_size, args.slippage, args.fees, refiner)
    return candles, script, config


def _warn(entries: Sequence[SnuLogEntry]) -> None:
    for e in entries:
        when = e.timestamp.isoformat() if e.timestamp else "?"
        chosen = "order ignored" if e.chosen is None else str(e.chosen)
        cands = ", ".join(f"{o}={v}" for o, v in e.candidates)
        print(f"WARNING: SNU {e.snu_id} at {when} (order {e.order_id}): candidates {cands}; "
              f"{e.policy} -> {chosen}", file=sys.stderr)


def _summary_table(label: str, r: BacktestReport) -> str:
    s = r.summary
    pf = "n/a" if s.profit_factor is None else f"{s.profit_factor:.4g}"
    return (f"{label:<28} trades={s.trade_count:<4} win_rate={s.win_rate:.3f} net={s.net_total:g} "
            f"gross={s.gross_total:g} pf={pf} avg={s.average_trade:.4g} max_dd={s.max_drawdown:g} "
            f"snus={len(r.snu_log)}")


def _emit(payload, args) -> None:
    if isinstance(payload, dict):  # CSV sections
        if not args.out:
            for name, data in payload.items():
                sys.stdout.write(f"# {name}\n")
                sys.stdout.write(data.decode())
            return
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in payload.items():
            (out / name).write_bytes(data)
        return
    if args.out:
        Path(args.out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode())


def cmd_run(args) -> int:
    policy = _policy(args.policy, args)
    candles, script, config = _inputs(args, [policy])
    report = run(candles, script, policy, config)
    _warn(report.snu_log)
    print(_summary_table(policy.label, report), file=sys.stderr)
    _emit(dataio.write_report(report, args.format), args)
    return EXIT_OK


def cmd_compare(args) -> int:
    policies = [_policy(p.strip(), args) for p in args.policies.split(",") if p.strip()]
    if not policies:
        raise ConfigError("--policies is empty")
    if args.format != "json":
        raise ConfigError("compare writes JSON only")
    candles, script, config = _inputs(args, policies)
    cmp = run_policy_comparison(candles, script, policies, config)
    for label, rep in cmp.reports.items():
        _warn(rep.snu_log)
    for label, rep in cmp.reports.items():
        print(_summary_table(label, rep), file=sys.stderr)
    band = cmp.divergence["band_width"]
    print(f"band width (bc - wc net): {'n/a' if band is None else f'{band:g}'}", file=sys.stderr)
    _emit(dataio.write_report(cmp, "json"), args)
    return EXIT_OK


def cmd_snus(args) -> int:
    policy = _policy(args.policy, args)
    candles, script, config = _inputs(args, [policy])
    report = run(candles, script, policy, config)
    _warn(report.snu_log)
    rows = dataio.report_to_dict(report)["snu_log"]
    _emit(dataio.dumps({"snu_log": rows}), args)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.radius < 1:
        raise ConfigError("--radius must be >= 1")
    if args.max_segments < 1:
        raise ConfigError("--max-segments must be >= 1")
    rep = run_sweep(args.radius, max_segments=args.max_segments, margin=args.margin)
    print(f"{'family':<40}{'unique':>10}{'snu':>8}")
    for fam, u, a in rep.table():
        print(f"{fam:<40}{u:>10}{a:>8}")
    print(f"cases={rep.cases} discrepancies={len(rep.discrepancies)} seconds={rep.seconds:.1f}")
    if args.out:
        Path(args.out).write_bytes(dataio.dumps({
            "radius": rep.radius, "max_segments": rep.max_segments, "cases": rep.cases,
            "families": {f: {"unique": u, "snu": a} for f, u, a in rep.table()},
            "discrepancies": len(rep.discrepancies),
        }))
    if rep.ok:
        return EXIT_OK
    for item in rep.discrepancies:
        if item is None:
            continue
        fam, c, subject, d = item
        print(f"DISCREPANCY {fam} candle={c.ohlc()} subject={subject} engine={d.engine} "
              f"oracle={sorted(map(str, d.oracle))} error={d.error}", file=sys.stderr)
    hidden = sum(1 for item in rep.discrepancies if item is None)
    if hidden:
        print(f"... and {hidden} more", file=sys.stderr)
    return EXIT_VERIFY


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "snus": cmd_snus, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateOrder) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
