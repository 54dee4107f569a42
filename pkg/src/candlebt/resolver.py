"""Turning ambiguous candles into a single booked outcome.

Four policies: worst case, best case, ignore, and exact (reload finer candles
for the bar and replay the order through them). Worst/best rank candidates by
their value within the current candle only; see :func:`outcome_value`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Optional, Protocol, Sequence, Union

from .candles import Candle, EntryOrder, OrderStatus, Position, Side, validate_candle
from .engine import (
    CandleOutcome,
    EvaluationResult,
    OutcomeKind,
    armed_only,
    evaluate_order,
    evaluate_position,
    exit_stop,
    exit_target,
    no_trigger,
    open_at_close,
    still_open,
)
from .errors import InconsistentOutcome, InconsistentSubCandles, RefinerUnavailable

log = logging.getLogger(__name__)

Subject = Union[EntryOrder, Position]

DEFAULT_MAX_DEPTH = 3

TIE_BREAK_NOTE = (
    "equal-valued candidates: the outcome without an open position wins, "
    "then outcomes are ordered by kind name and prices"
)


class PolicyKind(str, Enum):
    WORST_CASE = "wc"
    BEST_CASE = "bc"
    IGNORE = "ig"
    EXACT = "ex"


@dataclass(frozen=True, slots=True)
class SnuPolicy:
    kind: PolicyKind
    fallback: PolicyKind = PolicyKind.WORST_CASE
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.fallback not in (PolicyKind.WORST_CASE, PolicyKind.BEST_CASE):
            raise ValueError("the exact policy falls back to wc or bc only")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    @classmethod
    def parse(cls, name: str, fallback: str = "wc", max_depth: int = DEFAULT_MAX_DEPTH) -> "SnuPolicy":
        return cls(PolicyKind(name), PolicyKind(fallback), max_depth)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.EXACT:
            return f"ex(fallback={self.fallback.value},max_depth={self.max_depth})"
        return self.kind.value


WORST_CASE = SnuPolicy(PolicyKind.WORST_CASE)
BEST_CASE = SnuPolicy(PolicyKind.BEST_CASE)
IGNORE = SnuPolicy(PolicyKind.IGNORE)


class _Cancelled:
    __slots__ = ()

    def __repr__(self) -> str:
        return "CANCELLED"


CANCELLED = _Cancelled()


class FinerDataSource(Protocol):
    """Supplies the sub-candles that partition a candle's period.

    ``level`` counts refinement steps below the evaluated resolution (1 is
    the next finer one). ``max_level`` is the deepest level available.
    Implementations must tolerate concurrent reads.
    """

    max_level: int

    def sub_candles(self, candle: Candle, level: int) -> Sequence[Candle]: ...


@dataclass(frozen=True, slots=True)
class SnuLogEntry:
    timestamp: Optional[datetime]
    snu_id: str
    candidates: tuple  # of (CandleOutcome, value) pairs
    chosen: Optional[CandleOutcome]  # None when the order was cancelled
    policy: str
    depth: Optional[int] = None
    order_id: str = ""
    note: Optional[str] = None


def outcome_value(o: CandleOutcome, c: Candle, side: Side = Side.LONG,
                  position_entry: Optional[int] = None) -> int:
    """Per-candle trade value in ticks: exit or close minus entry, signed by side."""
    for price in (o.entry, o.exit):
        if price is not None and not c.low <= price <= c.high:
            raise InconsistentOutcome(f"{o} lies outside candle [{c.low}, {c.high}]")
    k = o.kind
    if k in (OutcomeKind.NO_TRIGGER, OutcomeKind.ARMED_ONLY, OutcomeKind.IMMEDIATE_ROUND_TRIP):
        return 0
    if k in (OutcomeKind.EXIT_TARGET, OutcomeKind.EXIT_STOP):
        diff = o.exit - o.entry
    elif k is OutcomeKind.OPEN_AT_CLOSE:
        diff = c.close - o.entry
    else:
        if position_entry is None:
            raise InconsistentOutcome(f"{o} needs the position's entry price")
        diff = (c.close if k is OutcomeKind.STILL_OPEN else o.exit) - position_entry
    return side.sign * diff


def _ranked(candidates, worst: bool):
    # candidates: iterable of (outcome, value)
    sign = 1 if worst else -1
    return min(candidates, key=lambda ov: (sign * ov[1], ov[0].invested, ov[0].sort_key()))[0]


def _subject_side(subject: Subject) -> Side:
    return subject.side


def _position_entry(subject: Subject) -> Optional[int]:
    return subject.entry_price if isinstance(subject, Position) else None


def resolve(result: EvaluationResult, policy: SnuPolicy, *, candle: Candle, subject: Subject,
            state: OrderStatus = OrderStatus.PENDING, refiner: Optional[FinerDataSource] = None,
            timestamp: Optional[datetime] = None):
    """Pick one outcome for ``result``.

    Returns ``(outcome_or_CANCELLED, log_entry_or_None)``; unique results pass
    through without a log entry.
    """
    if not result.is_ambiguous:
        return result.outcome, None
    side = _subject_side(subject)
    entry = _position_entry(subject)
    scored = tuple((o, outcome_value(o, candle, side, entry)) for o in result.sorted_outcomes())
    is_position = isinstance(subject, Position)
    order_id = subject.order_id if is_position else subject.id
    depth = note = None

    if policy.kind is PolicyKind.WORST_CASE:
        chosen = _ranked(scored, worst=True)
    elif policy.kind is PolicyKind.BEST_CASE:
        chosen = _ranked(scored, worst=False)
    elif policy.kind is PolicyKind.IGNORE:
        if is_position:
            chosen = _ranked(scored, worst=True)
            note = "open position cannot be ignored; worst case booked"
        else:
            chosen = CANCELLED
    else:
        if refiner is None:
            raise RefinerUnavailable("exact policy needs a finer data source")
        refined = refine_exact(candle, subject, state, refiner, max_depth=policy.max_depth)
        depth = refined.depth
        if refined.result.is_ambiguous:
            pool = [ov for ov in scored if ov[0] in refined.result.outcomes]
            chosen = _ranked(pool, worst=policy.fallback is PolicyKind.WORST_CASE)
            note = f"still ambiguous after refinement; {policy.fallback.value} fallback"
        else:
            chosen = refined.result.outcome

    log.debug("SNU %s at %s resolved by %s to %s", result.snu_id, timestamp, policy.label, chosen)
    entry_log = SnuLogEntry(timestamp, result.snu_id, scored,
                            None if chosen is CANCELLED else chosen,
                            policy.label, depth, order_id, note)
    return chosen, entry_log


# -- exact refinement -----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Refinement:
    result: EvaluationResult
    depth: int


def check_sub_candles(parent: Candle, subs: Sequence[Candle]) -> None:
    if not subs:
        raise InconsistentSubCandles(f"no sub-candles for {parent}")
    for s in subs:
        validate_candle(s)
    problems = []
    if subs[0].open != parent.open:
        problems.append("first open")
    if subs[-1].close != parent.close:
        problems.append("last close")
    if max(s.high for s in subs) != parent.high:
        problems.append("max high")
    if min(s.low for s in subs) != parent.low:
        problems.append("min low")
    if problems:
        raise InconsistentSubCandles(f"sub-candles disagree with {parent} on {', '.join(problems)}")


# Phases threaded through sub-candles: ("pending",), ("armed",), ("position", entry), ("done", outcome)
_PENDING = ("pending",)
_ARMED = ("armed",)


def refine_exact(c: Candle, subject: Subject, state: OrderStatus, src: FinerDataSource,
                 depth: int = 0, max_depth: int = DEFAULT_MAX_DEPTH) -> Refinement:
    """Re-evaluate ``subject`` on ``c`` by walking the finer candles inside it.

    Sub-candles are evaluated in order with the order state carried across
    them; a sub-candle that is itself ambiguous is refined again, down to
    ``max_depth`` levels below ``c``. Whatever ambiguity survives at the
    finest level is kept, so the caller can apply its fallback.
    """
    if isinstance(subject, Position):
        start = ("position", subject.entry_price)
    else:
        start = _ARMED if state is OrderStatus.ARMED else _PENDING
    original = _evaluate_phase(start, c, subject)
    phases, reached = _refine_phase(start, c, subject, src, depth, depth + max_depth)
    outcomes = frozenset(_final(ph, subject) for ph in phases)
    if len(outcomes) == 1:
        return Refinement(EvaluationResult(outcomes), reached)
    return Refinement(EvaluationResult(outcomes, original.snu_id or "REFINED"), reached)


def _evaluate_phase(phase, c: Candle, subject: Subject) -> EvaluationResult:
    if phase[0] == "position":
        if isinstance(subject, Position):
            pos = subject
        else:
            pos = Position(subject.side, phase[1], subject.brackets, quantity=subject.quantity)
        return evaluate_position(pos, c)
    status = OrderStatus.ARMED if phase == _ARMED else OrderStatus.PENDING
    return evaluate_order(subject, c, status)


def _refine_phase(phase, c: Candle, subject: Subject, src: FinerDataSource, level: int, limit: int):
    if phase[0] == "done":
        return {phase}, level
    r = _evaluate_phase(phase, c, subject)
    if not r.is_ambiguous or level >= min(limit, src.max_level):
        return {_next_phase(phase, o, subject) for o in r.outcomes}, level
    subs = src.sub_candles(c, level + 1)
    check_sub_candles(c, subs)
    frontier, reached = {phase}, level + 1
    for sc in subs:
        nxt = set()
        for ph in frontier:
            got, d = _refine_phase(ph, sc, subject, src, level + 1, limit)
            nxt |= got
            reached = max(reached, d)
        frontier = nxt
    return frontier, reached


def _next_phase(phase, o: CandleOutcome, subject: Subject):
    k = o.kind
    if k is OutcomeKind.NO_TRIGGER:
        return _PENDING
    if k is OutcomeKind.ARMED_ONLY:
        return _ARMED
    if k is OutcomeKind.OPEN_AT_CLOSE:
        return ("position", o.entry)
    if k is OutcomeKind.STILL_OPEN:
        return phase
    if k in (OutcomeKind.STOPPED_OUT, OutcomeKind.TARGET_HIT) and not isinstance(subject, Position):
        # Position opened in an earlier sub-candle of the same parent candle.
        make = exit_stop if k is OutcomeKind.STOPPED_OUT else exit_target
        return ("done", make(phase[1], o.exit))
    return ("done", o)


def _final(phase, subject: Subject) -> CandleOutcome:
    tag = phase[0]
    if tag == "pending":
        return no_trigger()
    if tag == "armed":
        return armed_only()
    if tag == "position":
        return still_open() if isinstance(subject, Position) else open_at_close(phase[1])
    return phase[1]
