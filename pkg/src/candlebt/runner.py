"""Historical simulation over a candle series driven by a signal script.

Orders in the script are submitted at a candle's close and first evaluated on
the next candle. Only one order or position is live at a time; entries that
arrive while something is live are rejected and logged.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence, Union

from .candles import (
    Candle,
    DegeneracyKind,
    EntryOrder,
    OrderState,
    OrderStatus,
    Position,
    Side,
    TimeInForce,
    classify_degenerate,
    validate_candle,
)
from .engine import OutcomeKind, evaluate_order, evaluate_position
from .errors import ConfigError, ScriptOutOfRange
from .resolver import CANCELLED, TIE_BREAK_NOTE, FinerDataSource, PolicyKind, SnuLogEntry, SnuPolicy, resolve

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class ScriptAction:
    """One scripted instruction, applied at the close of candle ``at``.

    ``at`` is a candle index or a candle timestamp.
    """

    at: Union[int, datetime]
    action: str  # "submit" | "cancel"
    order: Optional[EntryOrder] = None
    order_id: Optional[str] = None

    def __post_init__(self):
        if self.action not in ("submit", "cancel"):
            raise ValueError(f"unknown script action {self.action!r}")
        if self.action == "submit" and self.order is None:
            raise ValueError("submit needs an order")


SignalScript = Sequence[ScriptAction]


@dataclass(frozen=True, slots=True)
class RunConfig:
    tick_size: float = 1.0
    slippage_ticks: int = 0  # per fill, per unit
    fee_ticks: float = 0.0  # flat per round trip
    refiner: Optional[FinerDataSource] = None

    def echo(self) -> dict:
        return {"tick_size": self.tick_size, "slippage_ticks": self.slippage_ticks, "fee_ticks": self.fee_ticks}


@dataclass(frozen=True, slots=True)
class TradeRecord:
    order_id: str
    side: Side
    quantity: int
    entry_time: Optional[datetime]
    entry_price: int
    exit_time: Optional[datetime]
    exit_price: int
    exit_reason: str  # stop | target | immediate | end_of_data
    gross_ticks: int
    net_ticks: float
    snu_ids: tuple = ()


@dataclass(frozen=True, slots=True)
class Summary:
    trade_count: int = 0
    win_rate: float = 0.0
    gross_total: float = 0
    net_total: float = 0.0
    profit_factor: Optional[float] = None  # inf when there are winners but no losers
    average_trade: float = 0.0
    max_drawdown: float = 0.0


@dataclass
class BacktestReport:
    trades: list
    snu_log: list
    summary: Summary
    config: dict
    events: list = field(default_factory=list)


def compute_summary(trades: Sequence[TradeRecord]) -> Summary:
    if not trades:
        return Summary()
    nets = [t.net_ticks for t in trades]
    wins = sum(n for n in nets if n > 0)
    losses = -sum(n for n in nets if n < 0)
    if losses > 0:
        pf = wins / losses
    else:
        pf = math.inf if wins > 0 else None
    peak = equity = drawdown = 0.0
    for n in nets:
        equity += n
        peak = max(peak, equity)
        drawdown = max(drawdown, peak - equity)
    return Summary(
        trade_count=len(trades),
        win_rate=sum(1 for n in nets if n > 0) / len(trades),
        gross_total=sum(t.gross_ticks for t in trades),
        net_total=sum(nets),
        profit_factor=pf,
        average_trade=sum(nets) / len(trades),
        max_drawdown=drawdown,
    )


def data_fingerprint(candles: Sequence[Candle]) -> str:
    h = hashlib.sha256()
    for c in candles:
        ts = c.timestamp.isoformat() if c.timestamp else ""
        h.update(f"{ts},{c.open},{c.high},{c.low},{c.close};".encode())
    return h.hexdigest()


def _script_index(candles: Sequence[Candle], script: SignalScript) -> dict[int, list[ScriptAction]]:
    by_ts = {c.timestamp: i for i, c in enumerate(candles) if c.timestamp is not None}
    out: dict[int, list[ScriptAction]] = defaultdict(list)
    for a in script:
        if isinstance(a.at, datetime):
            if a.at not in by_ts:
                raise ScriptOutOfRange(f"no candle at {a.at.isoformat()}")
            idx = by_ts[a.at]
        else:
            idx = a.at
            if not 0 <= idx < len(candles):
                raise ScriptOutOfRange(f"candle index {idx} outside 0..{len(candles) - 1}")
        out[idx].append(a)
    return out


class _Book:
    """Mutable state of one run."""

    def __init__(self, policy: SnuPolicy, config: RunConfig):
        self.policy = policy
        self.config = config
        self.order: Optional[EntryOrder] = None
        self.state = OrderState()
        self.position: Optional[Position] = None
        self.position_snus: list[str] = []
        self.trades: list[TradeRecord] = []
        self.snu_log: list[SnuLogEntry] = []
        self.events: list[dict] = []

    def event(self, ts, kind: str, order_id: str, detail: str = "") -> None:
        self.events.append({"timestamp": ts, "event": kind, "order_id": order_id, "detail": detail})

    def book(self, side: Side, qty: int, order_id: str, entry_time, entry: int, exit_time,
             exit_price: int, reason: str, snus: Sequence[str]) -> None:
        cfg = self.config
        gross = side.sign * (exit_price - entry) * qty
        net = gross - 2 * cfg.slippage_ticks * qty - cfg.fee_ticks
        self.trades.append(TradeRecord(order_id, side, qty, entry_time, entry, exit_time, exit_price,
                                       reason, gross, net, tuple(snus)))

    def resolve(self, result, candle, subject, status=OrderStatus.PENDING):
        outcome, entry = resolve(result, self.policy, candle=candle, subject=subject, state=status,
                                 refiner=self.config.refiner, timestamp=candle.timestamp)
        if entry is not None:
            self.snu_log.append(entry)
        return outcome, entry

    # -- per-candle steps ------------------------------------------------------

    def step_position(self, c: Candle) -> None:
        pos = self.position
        outcome, entry = self.resolve(evaluate_position(pos, c), c, pos)
        if entry is not None:
            self.position_snus.append(entry.snu_id)
        if outcome.kind in (OutcomeKind.STOPPED_OUT, OutcomeKind.TARGET_HIT):
            reason = "stop" if outcome.kind is OutcomeKind.STOPPED_OUT else "target"
            self.book(pos.side, pos.quantity, pos.order_id, pos.entry_time, pos.entry_price,
                      c.timestamp, outcome.exit, reason, self.position_snus)
            self.position, self.position_snus = None, []

    def step_order(self, c: Candle) -> None:
        order, status = self.order, self.state.status
        outcome, entry = self.resolve(evaluate_order(order, c, status), c, order, status)
        snus = [entry.snu_id] if entry is not None else []
        ts = c.timestamp
        if outcome is CANCELLED:
            self.event(ts, "ignored", order.id, entry.snu_id)
            self._drop(self.state.advance(OrderStatus.DONE, reason="ignored"))
            return
        k = outcome.kind
        if k in (OutcomeKind.NO_TRIGGER, OutcomeKind.ARMED_ONLY):
            if k is OutcomeKind.ARMED_ONLY and status is OrderStatus.PENDING:
                self.state = self.state.advance(OrderStatus.ARMED, order=order)
            if order.time_in_force is TimeInForce.NEXT_BAR_ONLY:
                self.event(ts, "expired", order.id)
                self._drop(self.state.advance(OrderStatus.DONE, reason="expired"))
            return
        pos = Position(order.side, outcome.entry, order.brackets, ts, order.quantity, order.id)
        filled = self.state.advance(OrderStatus.FILLED, position=pos)
        if k is OutcomeKind.OPEN_AT_CLOSE:
            self.position, self.position_snus = pos, snus
            self._drop(filled)
            return
        reason = {OutcomeKind.EXIT_TARGET: "target", OutcomeKind.EXIT_STOP: "stop",
                  OutcomeKind.IMMEDIATE_ROUND_TRIP: "immediate"}[k]
        self.book(order.side, order.quantity, order.id, ts, outcome.entry, ts, outcome.exit, reason, snus)
        self._drop(filled.advance(OrderStatus.DONE, reason=reason))

    def _drop(self, final_state: OrderState) -> None:
        self.state = final_state
        self.order = None

    def apply(self, c: Candle, action: ScriptAction) -> None:
        ts = c.timestamp
        if action.action == "cancel":
            if self.order is not None and self.order.id == action.order_id:
                self.event(ts, "cancelled", action.order_id)
                self._drop(self.state.advance(OrderStatus.DONE, reason="cancelled"))
            else:
                self.event(ts, "cancel_unknown", action.order_id or "")
            return
        order = action.order
        if self.order is not None or self.position is not None:
            self.event(ts, "rejected", order.id, "OverlappingPositionRequest")
            return
        deg = classify_degenerate(order)
        if deg.kind is DegeneracyKind.CANCEL:
            self.event(ts, "rejected", order.id, f"degenerate order: {deg.condition}")
            return
        self.order, self.state = order, OrderState()


def run(candles: Sequence[Candle], script: SignalScript, policy: SnuPolicy,
        config: RunConfig = RunConfig()) -> BacktestReport:
    if policy.kind is PolicyKind.EXACT and config.refiner is None:
        raise ConfigError("the exact policy needs finer data")
    for c in candles:
        validate_candle(c)
    actions = _script_index(candles, script)
    book = _Book(policy, config)
    for i, c in enumerate(candles):
        if book.position is not None:
            book.step_position(c)
        elif book.order is not None:
            book.step_order(c)
        for a in actions.get(i, ()):
            book.apply(c, a)
    if book.position is not None and candles:
        last = candles[-1]
        pos = book.position
        book.book(pos.side, pos.quantity, pos.order_id, pos.entry_time, pos.entry_price,
                  last.timestamp, last.close, "end_of_data", book.position_snus)
    cfg = {
        "policy": policy.label,
        **config.echo(),
        "data_fingerprint": data_fingerprint(candles),
        "candles": len(candles),
        "tie_break": TIE_BREAK_NOTE,
    }
    return BacktestReport(book.trades, book.snu_log, compute_summary(book.trades), cfg, book.events)


@dataclass
class PolicyComparison:
    reports: dict  # policy label -> BacktestReport
    divergence: dict


def run_policy_comparison(candles: Sequence[Candle], script: SignalScript,
                          policies: Sequence[SnuPolicy], config: RunConfig = RunConfig()) -> PolicyComparison:
    """Run every policy on the same inputs and tabulate where they part ways."""
    reports = {p.label: run(candles, script, p, config) for p in policies}
    per_candle: dict[str, dict] = {}
    for label, rep in reports.items():
        counts = Counter(e.timestamp.isoformat() if e.timestamp else "" for e in rep.snu_log)
        per_candle[label] = dict(sorted(counts.items()))
    totals = {label: rep.summary.net_total for label, rep in reports.items()}
    wc, bc = PolicyKind.WORST_CASE.value, PolicyKind.BEST_CASE.value
    band = totals[bc] - totals[wc] if wc in totals and bc in totals else None
    divergence = {
        "snu_counts": per_candle,
        "trade_counts": {label: rep.summary.trade_count for label, rep in reports.items()},
        "net_totals": totals,
        "band_width": band,
    }
    return PolicyComparison(reports, divergence)
