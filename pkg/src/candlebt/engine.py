"""Per-candle decision procedures for entry orders and open positions.

All evaluators here work on LONG orders. Short orders go through
:func:`evaluate_order` / :func:`evaluate_position`, which reflect the inputs,
evaluate long, and reflect the result back.

Fill conventions (every level fires when traded *at* the level):

* limit buy fills once price is at or below the limit, stop buy once at or
  above the stop, and bracket exits fire at the stop loss / target;
* a candle opening beyond a level fills at the open, not at the level;
* a stop-limit is armed when the stop is touched; from that tick on its limit
  leg behaves like a plain limit order (marketable immediately if the arming
  price is at or below the limit);
* brackets are live from the entry tick onwards, within the entry candle.

An evaluation is either unique, or ambiguous with every outcome some intra-candle
tick path can produce. Ambiguous results carry a stable ``snu_id``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .candles import (
    BracketLevels,
    Candle,
    DegeneracyKind,
    EntryOrder,
    Limit,
    OrderStatus,
    Position,
    Side,
    Stop,
    StopLimit,
    TickValue,
    classify_degenerate,
    mirror,
)
from .errors import DegenerateOrder, NotAPosition


class OutcomeKind(str, Enum):
    NO_TRIGGER = "no_trigger"
    ARMED_ONLY = "armed_only"
    OPEN_AT_CLOSE = "open_at_close"
    EXIT_TARGET = "exit_target"
    EXIT_STOP = "exit_stop"
    IMMEDIATE_ROUND_TRIP = "immediate_round_trip"
    STILL_OPEN = "still_open"
    STOPPED_OUT = "stopped_out"
    TARGET_HIT = "target_hit"


# Kinds that leave a position open at the candle close.
INVESTED_KINDS = frozenset({OutcomeKind.OPEN_AT_CLOSE, OutcomeKind.STILL_OPEN})


@dataclass(frozen=True, slots=True)
class CandleOutcome:
    """What one candle did to an order or position.

    ``entry`` is set for kinds that open a position in this candle, ``exit``
    for kinds that close one. A round trip stores its single price in both.
    """

    kind: OutcomeKind
    entry: Optional[TickValue] = None
    exit: Optional[TickValue] = None

    @property
    def invested(self) -> bool:
        return self.kind in INVESTED_KINDS

    def sort_key(self) -> tuple:
        return (self.kind.value, _k(self.entry), _k(self.exit))

    def __str__(self) -> str:
        args = [str(v) for v in (self.entry, self.exit) if v is not None]
        if self.kind is OutcomeKind.IMMEDIATE_ROUND_TRIP:
            args = args[:1]
        return f"{self.kind.value}({', '.join(args)})" if args else self.kind.value


def _k(v: Optional[int]) -> tuple:
    return (0, 0) if v is None else (1, v)


def no_trigger() -> CandleOutcome:
    return CandleOutcome(OutcomeKind.NO_TRIGGER)


def armed_only() -> CandleOutcome:
    return CandleOutcome(OutcomeKind.ARMED_ONLY)


def open_at_close(entry: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.OPEN_AT_CLOSE, entry)


def exit_target(entry: int, exit: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.EXIT_TARGET, entry, exit)


def exit_stop(entry: int, exit: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.EXIT_STOP, entry, exit)


def round_trip(price: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.IMMEDIATE_ROUND_TRIP, price, price)


def still_open() -> CandleOutcome:
    return CandleOutcome(OutcomeKind.STILL_OPEN)


def stopped_out(exit: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.STOPPED_OUT, None, exit)


def target_hit(exit: int) -> CandleOutcome:
    return CandleOutcome(OutcomeKind.TARGET_HIT, None, exit)


@dataclass(frozen=True, slots=True)
class EvaluationResult:
    outcomes: frozenset
    snu_id: Optional[str] = None

    def __post_init__(self):
        if not self.outcomes:
            raise ValueError("an evaluation needs at least one outcome")
        if len(self.outcomes) == 1 and self.snu_id is not None:
            raise ValueError("unique results carry no SNU id")
        if len(self.outcomes) > 1 and not self.snu_id:
            raise ValueError("ambiguous results need an SNU id")

    @property
    def is_ambiguous(self) -> bool:
        return len(self.outcomes) > 1

    @property
    def outcome(self) -> CandleOutcome:
        if self.is_ambiguous:
            raise ValueError(f"ambiguous result {self.snu_id} has no single outcome")
        return next(iter(self.outcomes))

    def sorted_outcomes(self) -> list[CandleOutcome]:
        return sorted(self.outcomes, key=CandleOutcome.sort_key)

    def __str__(self) -> str:
        body = ", ".join(map(str, self.sorted_outcomes()))
        return f"Ambiguous[{self.snu_id}]{{{body}}}" if self.is_ambiguous else f"Unique({body})"


def unique(outcome: CandleOutcome) -> EvaluationResult:
    return EvaluationResult(frozenset([outcome]))


@mirror.register
def _(o: CandleOutcome) -> CandleOutcome:
    return CandleOutcome(o.kind, None if o.entry is None else -o.entry, None if o.exit is None else -o.exit)


@mirror.register
def _(r: EvaluationResult) -> EvaluationResult:
    return EvaluationResult(frozenset(mirror(o) for o in r.outcomes), r.snu_id)


# -- SNU identifiers -----------------------------------------------------------

_SHORT = {
    OutcomeKind.ARMED_ONLY: "armed",
    OutcomeKind.OPEN_AT_CLOSE: "hold",
    OutcomeKind.EXIT_TARGET: "target",
    OutcomeKind.EXIT_STOP: "stop",
    OutcomeKind.TARGET_HIT: "target",
    OutcomeKind.STOPPED_OUT: "stop",
}

# Leaves with an established letter.
_NAMED_LEAVES = {
    ("LIMIT", "level", "hold+target"): "A",
    ("LIMIT", "level", "stop+target"): "B",
    ("STOPLIMIT", "armed-at-stop", "armed+hold"): "E",
}


def family_tag(base: str, brackets: BracketLevels) -> str:
    tag = base
    if brackets.stop_loss is not None:
        tag += "+STOPLOSS"
    if brackets.target is not None:
        tag += "+TARGET"
    return tag


def _result(outcomes: Iterable[CandleOutcome], base: str, brackets: BracketLevels,
            site: str) -> EvaluationResult:
    outcomes = frozenset(outcomes)
    if len(outcomes) == 1:
        return EvaluationResult(outcomes)
    kinds = "+".join(sorted({_SHORT[o.kind] for o in outcomes}))
    leaf = _NAMED_LEAVES.get((base, site, kinds), f"{site}:{kinds}")
    return EvaluationResult(outcomes, f"{family_tag(base, brackets)}/{leaf}")


# -- shared pieces of the decision trees --------------------------------------

def _after_entry(c: Candle, entry: int, brackets: BracketLevels,
                 need_low: bool, need_high: bool) -> set[CandleOutcome]:
    """Outcomes once a long position sits at ``entry`` strictly between its brackets.

    The remainder of the path runs from ``entry`` to the close inside
    [low, high]; ``need_low`` / ``need_high`` say whether that remainder still
    has to visit the candle's low / high.
    """
    s, t = brackets.stop_loss, brackets.target
    stop_reachable = s is not None and c.low <= s
    target_reachable = t is not None and c.high >= t
    out = set()
    if stop_reachable:
        out.add(exit_stop(entry, s))
    if target_reachable:
        out.add(exit_target(entry, t))
    forced_exit = (need_low and stop_reachable) or (need_high and target_reachable)
    close_inside = (s is None or c.close > s) and (t is None or c.close < t)
    if close_inside and not forced_exit:
        out.add(open_at_close(entry))
    return out


def _fill_at_open(c: Candle, brackets: BracketLevels) -> set[CandleOutcome]:
    """Position opened at the candle's open with the whole candle still ahead."""
    s, t = brackets.stop_loss, brackets.target
    if (s is not None and c.open <= s) or (t is not None and c.open >= t):
        return {round_trip(c.open)}
    return _after_entry(c, c.open, brackets, need_low=True, need_high=True)


def _check(cond: bool, what: str) -> None:
    if not cond:
        raise DegenerateOrder(what)


# -- entry trees ----------------------------------------------------------------

def eval_limit_entry(c: Candle, limit: TickValue, brackets: BracketLevels = BracketLevels(),
                     *, base: str = "LIMIT") -> EvaluationResult:
    s, t = brackets.stop_loss, brackets.target
    _check(s is None or s < limit, "stop loss must lie below the limit")
    _check(t is None or t > limit, "target must lie above the limit")
    if c.low > limit:
        return unique(no_trigger())
    if c.open <= limit:
        return _result(_fill_at_open(c, brackets), base, brackets, "open")
    # Opened above the limit: fill on the way down at the limit. The low is
    # still ahead; the high may already be behind us.
    return _result(_after_entry(c, limit, brackets, need_low=True, need_high=False),
                   base, brackets, "level")


def eval_stop_entry(c: Candle, stop: TickValue, brackets: BracketLevels = BracketLevels()) -> EvaluationResult:
    s, t = brackets.stop_loss, brackets.target
    _check(s is None or s < stop, "stop loss must lie below the entry stop")
    _check(t is None or t > stop, "target must lie above the entry stop")
    if c.high < stop:
        return unique(no_trigger())
    if c.open >= stop:
        return _result(_fill_at_open(c, brackets), "STOP", brackets, "open")
    # Fill on the way up at the stop; the high is still ahead, the low optional.
    return _result(_after_entry(c, stop, brackets, need_low=False, need_high=True),
                   "STOP", brackets, "level")


def eval_stop_limit_entry(c: Candle, stop: TickValue, limit: TickValue,
                          brackets: BracketLevels = BracketLevels(),
                          state: OrderStatus = OrderStatus.PENDING) -> EvaluationResult:
    s, t = brackets.stop_loss, brackets.target
    _check(s is None or s < min(stop, limit), "stop loss must lie below min(stop, limit)")
    _check(t is None or t > limit, "target must lie above the limit")
    if state is OrderStatus.ARMED:
        # Stop leg already consumed; an untouched limit simply stays armed.
        if c.low > limit:
            return unique(armed_only())
        return eval_limit_entry(c, limit, brackets, base="STOPLIMIT(armed)")
    if state is not OrderStatus.PENDING:
        raise ValueError(f"stop-limit evaluation needs a pending or armed order, got {state}")

    if c.high < stop:
        return unique(no_trigger())

    if c.open >= stop:
        # Armed at the open; from here on it is a plain limit order.
        if c.open <= limit:
            return _result(_fill_at_open(c, brackets), "STOPLIMIT", brackets, "fill-open")
        if c.low > limit:
            return unique(armed_only())
        return _result(_after_entry(c, limit, brackets, need_low=True, need_high=False),
                       "STOPLIMIT", brackets, "armed-open")

    if stop <= limit:
        # Arming price is marketable: filled at the stop on the way up.
        return _result(_after_entry(c, stop, brackets, need_low=False, need_high=True),
                       "STOPLIMIT", brackets, "fill-at-stop")

    # Armed at the stop with the limit below. Before arming the path may
    # already have made the low; between arming and the fill it may already
    # have made the high. Staying above the limit needs a close above it.
    out = set()
    if c.close > limit:
        out.add(armed_only())
    if c.low <= limit:
        out |= _after_entry(c, limit, brackets, need_low=False, need_high=False)
    return _result(out, "STOPLIMIT", brackets, "armed-at-stop")


def eval_active_position(c: Candle, p: Position) -> EvaluationResult:
    """Exit tree for a long position carried in from an earlier candle."""
    if p is None:
        raise NotAPosition("no open position")
    s, t = p.brackets.stop_loss, p.brackets.target
    _check(s is None or t is None or s < t, "stop loss must lie below target")
    if s is not None and c.open <= s:
        return unique(stopped_out(c.open))
    if t is not None and c.open >= t:
        return unique(target_hit(c.open))
    stop_reachable = s is not None and c.low <= s
    target_reachable = t is not None and c.high >= t
    if stop_reachable and target_reachable:
        return _result({stopped_out(s), target_hit(t)}, "POSITION", p.brackets, "open")
    if stop_reachable:
        return unique(stopped_out(s))
    if target_reachable:
        return unique(target_hit(t))
    return unique(still_open())


# -- side- and degeneracy-aware entry points ---------------------------------

def _eval_degenerate(order: EntryOrder, c: Candle, kind: DegeneracyKind) -> EvaluationResult:
    trig = order.trigger
    if kind is DegeneracyKind.MARKET_EQUIVALENT:
        return _result(_fill_at_open(c, order.brackets), _base(trig), order.brackets, "market")
    # Immediate exit: the entry fill is also the exit fill.
    if isinstance(trig, Limit):
        return unique(round_trip(min(c.open, trig.limit)) if c.low <= trig.limit else no_trigger())
    return unique(round_trip(max(c.open, trig.stop)) if c.high >= trig.stop else no_trigger())


def _base(trig) -> str:
    return {Limit: "LIMIT", Stop: "STOP", StopLimit: "STOPLIMIT"}[type(trig)]


def evaluate_order(order: EntryOrder, c: Candle,
                   state: OrderStatus = OrderStatus.PENDING) -> EvaluationResult:
    """Evaluate a pending or armed entry order of either side on one candle.

    Raises DegenerateOrder for orders whose level ordering cancels them.
    """
    if order.side is Side.SHORT:
        return mirror(evaluate_order(mirror(order), mirror(c), state))
    deg = classify_degenerate(order, c)
    if deg.kind is DegeneracyKind.CANCEL:
        raise DegenerateOrder(deg.condition)
    if deg.kind is not DegeneracyKind.NORMAL:
        return _eval_degenerate(order, c, deg.kind)
    trig = order.trigger
    if isinstance(trig, Limit):
        return eval_limit_entry(c, trig.limit, order.brackets)
    if isinstance(trig, Stop):
        return eval_stop_entry(c, trig.stop, order.brackets)
    return eval_stop_limit_entry(c, trig.stop, trig.limit, order.brackets, state)


def evaluate_position(p: Position, c: Candle) -> EvaluationResult:
    if p.side is Side.SHORT:
        return mirror(eval_active_position(mirror(c), mirror(p)))
    return eval_active_position(c, p)
