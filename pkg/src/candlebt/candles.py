"""Candle, order and position types in integer tick units.

Every price inside the engine is an ``int`` count of ticks. Real prices only
appear at the I/O boundary (``to_ticks`` / ``to_price``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from functools import singledispatch
from typing import Mapping, Optional, Union

from .errors import MalformedCandle, NonPositiveTickSize

TickValue = int

# Tolerance (in ticks) below which a real price counts as already on the grid.
GRID_TOLERANCE = 1e-6


class Side(str, Enum):
    LONG = "long"
    SHORT = "short"

    @property
    def sign(self) -> int:
        return 1 if self is Side.LONG else -1

    @property
    def opposite(self) -> "Side":
        return Side.SHORT if self is Side.LONG else Side.LONG


class TimeInForce(str, Enum):
    NEXT_BAR_ONLY = "next_bar"
    GOOD_TILL_CANCELLED = "gtc"


@dataclass(frozen=True, slots=True)
class Candle:
    open: TickValue
    high: TickValue
    low: TickValue
    close: TickValue
    timestamp: Optional[datetime] = None
    period: Optional[timedelta] = None

    @property
    def range(self) -> int:
        return self.high - self.low

    def ohlc(self) -> tuple[int, int, int, int]:
        return (self.open, self.high, self.low, self.close)


@dataclass(frozen=True, slots=True)
class BracketLevels:
    stop_loss: Optional[TickValue] = None
    target: Optional[TickValue] = None


@dataclass(frozen=True, slots=True)
class Limit:
    limit: TickValue


@dataclass(frozen=True, slots=True)
class Stop:
    stop: TickValue


@dataclass(frozen=True, slots=True)
class StopLimit:
    stop: TickValue
    limit: TickValue


EntryTrigger = Union[Limit, Stop, StopLimit]


@dataclass(frozen=True, slots=True)
class EntryOrder:
    side: Side
    trigger: EntryTrigger
    brackets: BracketLevels = BracketLevels()
    time_in_force: TimeInForce = TimeInForce.GOOD_TILL_CANCELLED
    id: str = ""
    quantity: int = 1

    def __post_init__(self):
        if not isinstance(self.trigger, (Limit, Stop, StopLimit)):
            raise TypeError(f"unsupported trigger {self.trigger!r}")
        if self.quantity <= 0:
            raise ValueError("quantity must be positive")


@dataclass(frozen=True, slots=True)
class Position:
    side: Side
    entry_price: TickValue
    brackets: BracketLevels = BracketLevels()
    entry_time: Optional[datetime] = None
    quantity: int = 1
    order_id: str = ""


class OrderStatus(str, Enum):
    PENDING = "pending"
    ARMED = "armed"
    FILLED = "filled"
    DONE = "done"


_LEGAL = {
    OrderStatus.PENDING: {OrderStatus.ARMED, OrderStatus.FILLED, OrderStatus.DONE},
    OrderStatus.ARMED: {OrderStatus.FILLED, OrderStatus.DONE},
    OrderStatus.FILLED: {OrderStatus.DONE},
    OrderStatus.DONE: set(),
}


@dataclass(frozen=True, slots=True)
class OrderState:
    """Lifecycle of one entry order. Use :meth:`advance` to move forward."""

    status: OrderStatus = OrderStatus.PENDING
    position: Optional[Position] = None
    reason: Optional[str] = None

    def advance(self, status: OrderStatus, *, order: Optional[EntryOrder] = None,
                position: Optional[Position] = None, reason: Optional[str] = None) -> "OrderState":
        if status not in _LEGAL[self.status]:
            raise ValueError(f"illegal transition {self.status.value} -> {status.value}")
        if status is OrderStatus.ARMED and order is not None and not isinstance(order.trigger, StopLimit):
            raise ValueError("only stop-limit orders can be armed")
        if status is OrderStatus.FILLED and position is None:
            raise ValueError("a filled order needs its position")
        return OrderState(status, position if status is OrderStatus.FILLED else self.position, reason)


def validate_candle(c: Candle) -> Candle:
    if c.low > c.high:
        raise MalformedCandle("low > high", c)
    for name in ("open", "close"):
        v = getattr(c, name)
        if not c.low <= v <= c.high:
            raise MalformedCandle(f"{name} outside [low, high]", c)
    return c


# -- price grid ---------------------------------------------------------------

def _check_tick(tick_size: float) -> None:
    if not tick_size > 0:
        raise NonPositiveTickSize(f"tick size must be positive, got {tick_size!r}")


def _round(price: float, tick_size: float, up: bool) -> int:
    q = price / tick_size
    nearest = round(q)
    if abs(q - nearest) <= GRID_TOLERANCE:
        return int(nearest)
    return math.ceil(q) if up else math.floor(q)


def round_up(price: float, tick_size: float) -> TickValue:
    _check_tick(tick_size)
    return _round(price, tick_size, up=True)


def round_down(price: float, tick_size: float) -> TickValue:
    _check_tick(tick_size)
    return _round(price, tick_size, up=False)


def to_ticks(price: float, tick_size: float) -> Optional[TickValue]:
    """Exact conversion, or ``None`` when ``price`` is off the tick grid."""
    _check_tick(tick_size)
    q = price / tick_size
    nearest = round(q)
    return int(nearest) if abs(q - nearest) <= GRID_TOLERANCE else None


def to_price(ticks: TickValue, tick_size: float) -> float:
    return ticks * tick_size


# Long: entry stop and target round up, stop loss and limit round down.
_ROUND_UP_LONG = {"stop": True, "target": True, "stop_loss": False, "limit": False}


def round_levels(raw_levels: Mapping[str, Optional[float]], side: Side,
                 tick_size: float) -> dict[str, Optional[TickValue]]:
    """Snap real-valued order levels to the tick grid, away from the fill side.

    Keys are any of ``stop``, ``limit``, ``stop_loss``, ``target``; ``None``
    values pass through. Short orders use the opposite directions.
    """
    _check_tick(tick_size)
    out: dict[str, Optional[TickValue]] = {}
    for key, value in raw_levels.items():
        if key not in _ROUND_UP_LONG:
            raise KeyError(f"unknown level {key!r}")
        if value is None:
            out[key] = None
            continue
        up = _ROUND_UP_LONG[key] if side is Side.LONG else not _ROUND_UP_LONG[key]
        out[key] = _round(value, tick_size, up)
    return out


# -- degenerate level orderings ----------------------------------------------

class DegeneracyKind(str, Enum):
    NORMAL = "normal"
    CANCEL = "cancel"
    MARKET_EQUIVALENT = "market_equivalent"
    IMMEDIATE_EXIT = "immediate_exit_at_open"
    # Outcome hinges on the next candle's open, which was not supplied.
    CONDITIONAL = "conditional"


@dataclass(frozen=True, slots=True)
class Degeneracy:
    kind: DegeneracyKind
    condition: Optional[str] = None


def classify_degenerate(order: EntryOrder, candle: Optional[Candle] = None) -> Degeneracy:
    """Classify bracket placements that make the order pointless or market-like."""
    if order.side is Side.SHORT:
        return classify_degenerate(mirror(order), None if candle is None else mirror(candle))
    s, t = order.brackets.stop_loss, order.brackets.target
    trig = order.trigger
    if isinstance(trig, Limit):
        l = trig.limit
        if s is not None and s >= l:
            return Degeneracy(DegeneracyKind.CANCEL, "stop loss at or above limit")
        if t is not None and t <= l:
            return _conditional(candle, lambda o: o >= t, "open >= target")
    elif isinstance(trig, Stop):
        b = trig.stop
        if t is not None and t <= b:
            return Degeneracy(DegeneracyKind.CANCEL, "target at or below stop entry")
        if s is not None and b <= s:
            return _conditional(candle, lambda o: o <= b, "open <= stop entry")
    else:
        b, l = trig.stop, trig.limit
        if s is not None and s >= min(l, b):
            return Degeneracy(DegeneracyKind.CANCEL, "stop loss at or above min(stop, limit)")
        if t is not None and t <= l:
            return Degeneracy(DegeneracyKind.CANCEL, "target at or below limit")
    return Degeneracy(DegeneracyKind.NORMAL)


def _conditional(candle, exits_at_open, condition: str) -> Degeneracy:
    if candle is None:
        return Degeneracy(DegeneracyKind.CONDITIONAL, condition)
    if exits_at_open(candle.open):
        return Degeneracy(DegeneracyKind.IMMEDIATE_EXIT, condition)
    return Degeneracy(DegeneracyKind.MARKET_EQUIVALENT, f"not ({condition})")


# -- long/short symmetry ------------------------------------------------------

def _neg(v: Optional[int]) -> Optional[int]:
    return None if v is None else -v


@singledispatch
def mirror(x):
    """Reflect a value through price 0, exchanging long and short."""
    raise TypeError(f"cannot mirror {type(x).__name__}")


@mirror.register
def _(c: Candle) -> Candle:
    return replace(c, open=-c.open, high=-c.low, low=-c.high, close=-c.close)


@mirror.register
def _(b: BracketLevels) -> BracketLevels:
    return BracketLevels(_neg(b.stop_loss), _neg(b.target))


@mirror.register
def _(t: Limit) -> Limit:
    return Limit(-t.limit)


@mirror.register
def _(t: Stop) -> Stop:
    return Stop(-t.stop)


@mirror.register
def _(t: StopLimit) -> StopLimit:
    return StopLimit(-t.stop, -t.limit)


@mirror.register
def _(o: EntryOrder) -> EntryOrder:
    return replace(o, side=o.side.opposite, trigger=mirror(o.trigger), brackets=mirror(o.brackets))


@mirror.register
def _(p: Position) -> Position:
    return replace(p, side=p.side.opposite, entry_price=-p.entry_price, brackets=mirror(p.brackets))
