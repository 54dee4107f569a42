"""CSV candle ingest, JSON signal scripts, finer-data provision and report serialisation."""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .candles import (
    BracketLevels,
    Candle,
    EntryOrder,
    Limit,
    Side,
    Stop,
    StopLimit,
    TimeInForce,
    round_levels,
    to_price,
    to_ticks,
    validate_candle,
)
from .engine import CandleOutcome, OutcomeKind
from .errors import (
    ConfigError,
    DataGap,
    MalformedCandle,
    NonMonotonicTimestamps,
    OffGridPrice,
    ParseError,
)
from .resolver import SnuLogEntry
from .runner import BacktestReport, PolicyComparison, ScriptAction, Summary, TradeRecord

DEFAULT_COLUMNS = {"timestamp": "timestamp", "open": "open", "high": "high", "low": "low", "close": "close"}


# -- timestamps and resolutions ---------------------------------------------------

def parse_timestamp(text: str, fmt: Optional[str] = None) -> datetime:
    text = text.strip()
    if fmt:
        ts = datetime.strptime(text, fmt)
    else:
        ts = datetime.fromisoformat(text[:-1] + "+00:00" if text.endswith("Z") else text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: Optional[datetime]) -> Optional[str]:
    return None if ts is None else ts.isoformat()


_RESOLUTION = re.compile(r"^(\d+)([smhdw])$")
_UNITS = {"s": "seconds", "m": "minutes", "h": "hours", "d": "days", "w": "weeks"}


def parse_resolution(label: str) -> Optional[timedelta]:
    """``"15m"`` -> 15 minutes. ``"tick"`` has no fixed period and returns None."""
    if label == "tick":
        return None
    m = _RESOLUTION.match(label)
    if not m:
        raise ConfigError(f"unknown resolution label {label!r} (use e.g. 1d, 4h, 15m, 1s or tick)")
    return timedelta(**{_UNITS[m.group(2)]: int(m.group(1))})


# -- candles ---------------------------------------------------------------------

@dataclass(frozen=True)
class CandleFileSpec:
    path: Union[str, Path]
    tick_size: float
    columns: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    timestamp_format: Optional[str] = None
    resolution: str = "1d"


def load_candles(spec: CandleFileSpec) -> list[Candle]:
    with open(spec.path, newline="") as fh:
        return parse_candles(fh, spec)


def parse_candles(fh, spec: CandleFileSpec) -> list[Candle]:
    period = parse_resolution(spec.resolution)
    cols = {**DEFAULT_COLUMNS, **spec.columns}
    reader = csv.DictReader(fh)
    missing = [c for c in cols.values() if c not in (reader.fieldnames or [])]
    if missing:
        raise ParseError(1, f"missing column(s) {', '.join(missing)}")
    out: list[Candle] = []
    for row_no, row in enumerate(reader, start=2):
        try:
            ts = parse_timestamp(row[cols["timestamp"]], spec.timestamp_format)
            prices = {k: float(row[cols[k]]) for k in ("open", "high", "low", "close")}
        except (TypeError, ValueError) as exc:
            raise ParseError(row_no, str(exc)) from exc
        ticks = {}
        for k, v in prices.items():
            t = to_ticks(v, spec.tick_size)
            if t is None:
                raise OffGridPrice(row_no, f"{k} {v} is not a multiple of tick size {spec.tick_size}")
            ticks[k] = t
        candle = Candle(ticks["open"], ticks["high"], ticks["low"], ticks["close"], ts, period)
        try:
            validate_candle(candle)
        except MalformedCandle as exc:
            raise ParseError(row_no, f"MalformedCandle: {exc.which}") from exc
        if out and ts <= out[-1].timestamp:
            raise NonMonotonicTimestamps(f"row {row_no}: {ts.isoformat()} does not follow "
                                         f"{out[-1].timestamp.isoformat()}")
        out.append(candle)
    return out


def write_candles(candles: Sequence[Candle], tick_size: float, columns: Mapping[str, str] = DEFAULT_COLUMNS) -> str:
    buf = io.StringIO()
    keys = ("timestamp", "open", "high", "low", "close")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([columns[k] for k in keys])
    for c in candles:
        w.writerow([format_timestamp(c.timestamp)] + [repr(to_price(v, tick_size)) for v in c.ohlc()])
    return buf.getvalue()


# -- finer data --------------------------------------------------------------------

class DirectoryFinerSource:
    """Sub-candles from ``<directory>/<label>.csv`` for each label of the ladder.

    ``ladder[0]`` is refinement level 1. Files are loaded lazily and kept.
    """

    def __init__(self, directory: Union[str, Path], ladder: Sequence[str], tick_size: float,
                 columns: Mapping[str, str] = DEFAULT_COLUMNS, timestamp_format: Optional[str] = None):
        if not ladder:
            raise ConfigError("the resolution ladder needs at least one level")
        self.directory = Path(directory)
        self.ladder = list(ladder)
        self.tick_size = tick_size
        self.columns = dict(columns)
        self.timestamp_format = timestamp_format
        self.max_level = len(self.ladder)
        self._cache: dict[int, tuple[list[datetime], list[Candle]]] = {}
        for label in self.ladder:
            parse_resolution(label)

    def _level(self, level: int):
        if level not in self._cache:
            label = self.ladder[level - 1]
            path = self.directory / f"{label}.csv"
            if not path.exists():
                raise DataGap(f"no finer data file {path}")
            spec = CandleFileSpec(path, self.tick_size, self.columns, self.timestamp_format, label)
            candles = load_candles(spec)
            self._cache[level] = ([c.timestamp for c in candles], candles)
        return self._cache[level]

    def sub_candles(self, candle: Candle, level: int) -> list[Candle]:
        if not 1 <= level <= self.max_level:
            raise DataGap(f"no refinement level {level}")
        if candle.timestamp is None or candle.period is None:
            raise DataGap("refinement needs candles with timestamp and period")
        stamps, candles = self._level(level)
        start, end = candle.timestamp, candle.timestamp + candle.period
        subs = candles[bisect.bisect_left(stamps, start):bisect.bisect_left(stamps, end)]
        if not subs:
            raise DataGap(f"no {self.ladder[level - 1]} data inside {start.isoformat()}")
        step = parse_resolution(self.ladder[level - 1])
        if step is not None:
            expected = [start + i * step for i in range(candle.period // step)]
            got = {s.timestamp for s in subs}
            missing = [t for t in expected if t not in got]
            if missing:
                raise DataGap(f"missing {self.ladder[level - 1]} sub-period(s) starting "
                              f"{', '.join(t.isoformat() for t in missing)}")
        return subs


# -- signal scripts ------------------------------------------------------------------

def _trigger(spec: Mapping[str, Any], levels: Mapping[str, Optional[int]]):
    kind = spec.get("type")
    if kind == "limit":
        return Limit(levels["limit"])
    if kind == "stop":
        return Stop(levels["stop"])
    if kind in ("stop_limit", "stoplimit"):
        return StopLimit(levels["stop"], levels["limit"])
    raise ConfigError(f"unknown trigger type {kind!r}")


def parse_order(spec: Mapping[str, Any], tick_size: float, default_id: str) -> EntryOrder:
    side = Side(spec.get("side", "long"))
    trig = spec.get("trigger") or {}
    raw = {"stop": trig.get("stop"), "limit": trig.get("limit"),
           "stop_loss": spec.get("stop_loss"), "target": spec.get("target")}
    levels = round_levels(raw, side, tick_size)
    tif = TimeInForce(spec.get("tif", TimeInForce.GOOD_TILL_CANCELLED.value))
    return EntryOrder(side, _trigger(trig, levels), BracketLevels(levels["stop_loss"], levels["target"]),
                      tif, str(spec.get("id", default_id)), int(spec.get("quantity", 1)))


def parse_script(items: Sequence[Mapping[str, Any]], tick_size: float) -> list[ScriptAction]:
    actions = []
    for n, item in enumerate(items):
        at = item["at"]
        if isinstance(at, str):
            at = parse_timestamp(at)
        action = item.get("action", "submit")
        if action == "submit":
            order = parse_order(item["order"], tick_size, default_id=f"o{n}")
            actions.append(ScriptAction(at, action, order, order.id))
        else:
            actions.append(ScriptAction(at, action, None, str(item.get("order_id"))))
    return actions


def load_script(path: Union[str, Path], tick_size: float) -> list[ScriptAction]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ConfigError("a signal script is a JSON array of actions")
    return parse_script(data, tick_size)


# -- reports ---------------------------------------------------------------------------

def _outcome_dict(o: Optional[CandleOutcome]):
    return None if o is None else {"kind": o.kind.value, "entry": o.entry, "exit": o.exit}


def _outcome(d) -> Optional[CandleOutcome]:
    return None if d is None else CandleOutcome(OutcomeKind(d["kind"]), d["entry"], d["exit"])


def _num(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x):
    return float(x) if x in ("inf", "-inf") else x


def report_to_dict(r: BacktestReport) -> dict:
    trades = []
    for t in r.trades:
        d = asdict(t)
        d.update(side=t.side.value, entry_time=format_timestamp(t.entry_time),
                 exit_time=format_timestamp(t.exit_time), snu_ids=list(t.snu_ids))
        trades.append(d)
    snus = [{
        "timestamp": format_timestamp(e.timestamp),
        "snu_id": e.snu_id,
        "candidates": [{"outcome": _outcome_dict(o), "value": v} for o, v in e.candidates],
        "chosen": _outcome_dict(e.chosen),
        "policy": e.policy,
        "depth": e.depth,
        "order_id": e.order_id,
        "note": e.note,
    } for e in r.snu_log]
    summary = {k: _num(v) for k, v in asdict(r.summary).items()}
    events = [{**ev, "timestamp": format_timestamp(ev["timestamp"])} for ev in r.events]
    return {"config": dict(r.config), "summary": summary, "trades": trades, "snu_log": snus, "events": events}


def _ts(text):
    return None if text is None else parse_timestamp(text)


def report_from_dict(d: Mapping[str, Any]) -> BacktestReport:
    trades = [TradeRecord(t["order_id"], Side(t["side"]), t["quantity"], _ts(t["entry_time"]), t["entry_price"],
                          _ts(t["exit_time"]), t["exit_price"], t["exit_reason"], t["gross_ticks"],
                          t["net_ticks"], tuple(t["snu_ids"])) for t in d["trades"]]
    snus = [SnuLogEntry(_ts(e["timestamp"]), e["snu_id"],
                        tuple((_outcome(c["outcome"]), c["value"]) for c in e["candidates"]),
                        _outcome(e["chosen"]), e["policy"], e["depth"], e["order_id"], e["note"])
            for e in d["snu_log"]]
    summary = Summary(**{k: _unnum(v) for k, v in d["summary"].items()})
    events = [{**ev, "timestamp": _ts(ev["timestamp"])} for ev in d.get("events", [])]
    return BacktestReport(trades, snus, summary, dict(d["config"]), events)


def comparison_to_dict(cmp: PolicyComparison) -> dict:
    return {"reports": {k: report_to_dict(r) for k, r in cmp.reports.items()},
            "divergence": {k: (_num(v) if not isinstance(v, dict) else
                               {kk: _num(vv) if not isinstance(vv, dict) else vv for kk, vv in v.items()})
                           for k, v in cmp.divergence.items()}}


def comparison_from_dict(d: Mapping[str, Any]) -> PolicyComparison:
    return PolicyComparison({k: report_from_dict(r) for k, r in d["reports"].items()}, d["divergence"])


def dumps(obj: Mapping[str, Any]) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode()


def _csv(rows: Sequence[Mapping[str, Any]], header: Sequence[str]) -> bytes:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue().encode()


_TRADE_COLUMNS = [f for f in TradeRecord.__dataclass_fields__]
_SNU_COLUMNS = ["timestamp", "snu_id", "policy", "order_id", "candidates", "chosen", "depth", "note"]


def write_report(report: Union[BacktestReport, PolicyComparison], fmt: str = "json"):
    """JSON returns bytes; CSV returns ``{section file name: bytes}``."""
    if isinstance(report, PolicyComparison):
        if fmt != "json":
            raise ConfigError("policy comparisons are written as JSON")
        return dumps(comparison_to_dict(report))
    d = report_to_dict(report)
    if fmt == "json":
        return dumps(d)
    if fmt != "csv":
        raise ConfigError(f"unknown report format {fmt!r}")
    trades = [{**t, "snu_ids": ";".join(t["snu_ids"])} for t in d["trades"]]
    snus = [{
        **{k: e[k] for k in ("timestamp", "snu_id", "policy", "order_id", "depth", "note")},
        "candidates": ";".join(f"{_fmt_outcome(c['outcome'])}={c['value']}" for c in e["candidates"]),
        "chosen": _fmt_outcome(e["chosen"]) if e["chosen"] else "cancelled",
    } for e in d["snu_log"]]
    summary = [{"metric": k, "value": v} for k, v in d["summary"].items()]
    return {
        "trades.csv": _csv(trades, _TRADE_COLUMNS),
        "snu_log.csv": _csv(snus, _SNU_COLUMNS),
        "summary.csv": _csv(summary, ["metric", "value"]),
    }


def _fmt_outcome(d) -> str:
    return str(_outcome(d))


def read_report(data: bytes) -> Union[BacktestReport, PolicyComparison]:
    d = json.loads(data)
    if "reports" in d:
        return comparison_from_dict(d)
    return report_from_dict(d)
