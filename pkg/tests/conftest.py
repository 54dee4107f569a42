from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from candlebt.candles import BracketLevels, Candle, EntryOrder, Limit, Side
from candlebt.runner import ScriptAction

DAY = timedelta(days=1)
HOUR = timedelta(hours=1)
T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)

# The bracket levels used by every both-brackets fixture: entry 10, stop 6, target 14.
STOP_LOSS, TARGET = 6, 14


class ListFinerSource:
    """In-memory finer data: ``levels[k]`` holds every candle of level k+1."""

    def __init__(self, *levels):
        self.levels = [sorted(lv, key=lambda c: c.timestamp) for lv in levels]
        self.max_level = len(self.levels)
        self.calls = []

    def sub_candles(self, candle, level):
        self.calls.append((candle.timestamp, level))
        start, end = candle.timestamp, candle.timestamp + candle.period
        return [c for c in self.levels[level - 1] if start <= c.timestamp < end]


def daily(i, o, h, l, c):
    return Candle(o, h, l, c, T0 + i * DAY, DAY)


def hourly(day, hour, o, h, l, c):
    return Candle(o, h, l, c, T0 + day * DAY + hour * HOUR, HOUR)


def both_brackets_candles():
    """Entry at 10 on day 1, then day 2 touches both brackets (an SNU on an open position)."""
    return [
        daily(0, 10, 10, 10, 10),
        daily(1, 10, 11, 9, 10),
        daily(2, 10, 15, 5, 9),
        daily(3, 9, 9, 9, 9),
    ]


def both_brackets_script():
    order = EntryOrder(Side.LONG, Limit(10), BracketLevels(STOP_LOSS, TARGET), id="both_brackets")
    return [ScriptAction(0, "submit", order)]


def both_brackets_hourly(low_first=True):
    """24 hourly bars inside day 2: the low in hour 1, the high in hour 3 (or the reverse)."""
    bars = [hourly(2, 0, 10, 10, 10, 10)]
    if low_first:
        bars += [hourly(2, 1, 10, 10, 5, 7), hourly(2, 2, 7, 12, 7, 12), hourly(2, 3, 12, 15, 12, 13)]
    else:
        bars += [hourly(2, 1, 10, 15, 10, 13), hourly(2, 2, 13, 13, 8, 8), hourly(2, 3, 8, 9, 5, 9)]
    last = bars[-1].close
    bars += [hourly(2, h, last, last, last, last) for h in range(4, 23)]
    bars.append(hourly(2, 23, last, last, 9, 9) if last >= 9 else hourly(2, 23, last, 9, last, 9))
    return bars


def snu_free_candles():
    """A quiet series: every order below resolves uniquely on every bar."""
    return [daily(i, 10, 11, 9, 10) for i in range(6)]


@pytest.fixture
def both_brackets():
    return both_brackets_candles(), both_brackets_script()
