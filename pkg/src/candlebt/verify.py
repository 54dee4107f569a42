"""Exhaustive engine-vs-oracle sweep over small candles.

Candles are enumerated up to translation (low fixed at 0), so "every candle
with range <= R" means every (open, close) placement for each high in 0..R.
Order levels range over [low - margin, high + margin].
"""

from __future__ import annotations

import itertools
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .candles import BracketLevels, Candle, EntryOrder, Limit, OrderStatus, Position, Side, Stop, StopLimit
from .engine import EvaluationResult
from .oracle import (
    DEFAULT_MAX_SEGMENTS,
    Discrepancy,
    Evaluator,
    Subject,
    compare,
    engine_evaluate,
    oracle_outcome_sets,
)

BASES = ("LIMIT", "STOP", "STOPLIMIT", "STOPLIMIT(armed)", "POSITION")
ENTRY_BASES = ("LIMIT", "STOP", "STOPLIMIT")


@dataclass(frozen=True, slots=True)
class Family:
    base: str
    stop_loss: bool
    target: bool
    side: Side

    @property
    def state(self) -> OrderStatus:
        return OrderStatus.ARMED if self.base == "STOPLIMIT(armed)" else OrderStatus.PENDING

    def __str__(self) -> str:
        tag = self.base + ("+STOPLOSS" if self.stop_loss else "") + ("+TARGET" if self.target else "")
        return f"{tag} {self.side.value}"


def families(bases=BASES, sides=(Side.LONG, Side.SHORT)) -> list[Family]:
    return [Family(b, sl, tp, side) for b in bases for side in sides
            for sl, tp in ((False, False), (True, False), (False, True), (True, True))]


def sweep_candles(radius: int) -> Iterator[Candle]:
    for high in range(radius + 1):
        for o in range(high + 1):
            for c in range(high + 1):
                yield Candle(o, high, 0, c)


def _long_valid(base: str, entry: Optional[int], limit: Optional[int],
                s: Optional[int], t: Optional[int]) -> bool:
    below = lambda a, b: a is None or b is None or a < b  # noqa: E731
    if base == "LIMIT":
        return below(s, limit) and below(limit, t)
    if base == "STOP":
        return below(s, entry) and below(entry, t)
    if base == "POSITION":
        return below(s, t)
    return below(s, min(entry, limit)) and below(limit, t)


def family_subjects(c: Candle, fam: Family, margin: int = 2) -> list[Subject]:
    """Every valid order (or position) of ``fam`` with levels near ``c``."""
    levels = range(c.low - margin, c.high + margin + 1)
    opt = lambda on: levels if on else (None,)  # noqa: E731
    sign = fam.side.sign
    neg = lambda v: None if v is None else sign * v  # noqa: E731
    out: list[Subject] = []
    two_legs = fam.base.startswith("STOPLIMIT")
    entry_levels = (None,) if fam.base == "POSITION" else levels
    armed = fam.state is OrderStatus.ARMED
    for e in entry_levels:
        # Once armed the stop level is irrelevant; pin it to the limit.
        for l in ((e,) if armed else levels if two_legs else (None,)):
            for s in opt(fam.stop_loss):
                for t in opt(fam.target):
                    base = "STOPLIMIT" if two_legs else fam.base
                    if base == "LIMIT":
                        ok = _long_valid(base, None, neg(e), neg(s), neg(t))
                    else:
                        ok = _long_valid(base, neg(e), neg(l), neg(s), neg(t))
                    if not ok:
                        continue
                    brackets = BracketLevels(s, t)
                    if fam.base == "POSITION":
                        out.append(Position(fam.side, c.open, brackets))
                    elif fam.base == "LIMIT":
                        out.append(EntryOrder(fam.side, Limit(e), brackets))
                    elif fam.base == "STOP":
                        out.append(EntryOrder(fam.side, Stop(e), brackets))
                    else:
                        out.append(EntryOrder(fam.side, StopLimit(e, l), brackets))
    return out


Visitor = Callable[[Family, Candle, Subject, Optional[EvaluationResult], frozenset], None]


@dataclass
class SweepReport:
    radius: int
    max_segments: int
    cases: int = 0
    unique: Counter = field(default_factory=Counter)
    ambiguous: Counter = field(default_factory=Counter)
    discrepancies: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    def table(self) -> list[tuple[str, int, int]]:
        keys = sorted(set(self.unique) | set(self.ambiguous))
        return [(k, self.unique[k], self.ambiguous[k]) for k in keys]


def run_sweep(radius: int, *, max_segments: int = DEFAULT_MAX_SEGMENTS, margin: int = 2,
              fams: Optional[list[Family]] = None, evaluator: Optional[Evaluator] = None,
              visit: Optional[Visitor] = None, keep: int = 50) -> SweepReport:
    """Compare engine and oracle on every sweep case.

    ``visit`` sees each case; ``keep`` caps how many discrepancies are stored.
    """
    evaluator = evaluator or engine_evaluate
    fams = fams if fams is not None else families()
    rep = SweepReport(radius, max_segments)
    started = time.perf_counter()
    for c, fam in itertools.product(list(sweep_candles(radius)), fams):
        subjects = family_subjects(c, fam, margin)
        expected = oracle_outcome_sets(c, subjects, fam.state, max_segments)
        key = str(fam)
        for subject, oracle in zip(subjects, expected):
            rep.cases += 1
            try:
                result, error = evaluator(c, subject, fam.state), None
            except Exception as exc:
                result, error = None, f"{type(exc).__name__}: {exc}"
            verdict = compare(result, oracle, error)
            if isinstance(verdict, Discrepancy):
                if len(rep.discrepancies) < keep:
                    rep.discrepancies.append((key, c, subject, verdict))
                else:
                    rep.discrepancies.append(None)
            elif result.is_ambiguous:
                rep.ambiguous[key] += 1
            else:
                rep.unique[key] += 1
            if visit is not None:
                visit(fam, c, subject, result, oracle)
    rep.seconds = time.perf_counter() - started
    return rep
