"""Brute-force ground truth for the decision engine.

Every admissible intra-candle price path (unit tick steps from the open to the
close, touching both the high and the low) is summarised by its turning
points. Paths with up to ``max_segments`` monotone legs are enumerated, each
is walked tick by tick with the order rules, and the distinct outcomes are
collected. The walker knows nothing about the engine's decision trees.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .candles import Candle, EntryOrder, Limit, OrderStatus, Position, Stop
from .engine import CandleOutcome, EvaluationResult, OutcomeKind, evaluate_order, evaluate_position

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

log = logging.getLogger(__name__)

DEFAULT_MAX_SEGMENTS = 5

Subject = Union[EntryOrder, Position]


@dataclass(frozen=True, slots=True)
class TickPath:
    turning_points: tuple[int, ...]

    def ticks(self) -> np.ndarray:
        pts = self.turning_points
        out = [pts[0]]
        for a, b in zip(pts, pts[1:]):
            step = 1 if b > a else -1
            out.extend(range(a + step, b + step, step))
        return np.asarray(out, dtype=np.int64)

    @property
    def segments(self) -> int:
        return len(self.turning_points) - 1


def enumerate_paths(c: Candle, max_segments: int = DEFAULT_MAX_SEGMENTS) -> frozenset[TickPath]:
    if max_segments < 1:
        raise ValueError("max_segments must be >= 1")
    return frozenset(_paths(c.open, c.high, c.low, c.close, max_segments))


@lru_cache(maxsize=8192)
def _paths(o: int, h: int, l: int, cl: int, max_segments: int) -> tuple[TickPath, ...]:
    if h == l:
        return (TickPath((o,)),)
    found: list[TickPath] = []

    def extend(points, lo, hi, direction):
        cur = points[-1]
        segs = len(points) - 1
        if cur == cl and segs and lo == l and hi == h:
            found.append(TickPath(points))
        if segs == max_segments:
            return
        for v in range(l, h + 1):
            d = (v > cur) - (v < cur)
            if d == 0 or d == direction:
                continue
            extend(points + (v,), min(lo, v), max(hi, v), d)

    extend((o,), o, o, 0)
    return tuple(found)


# -- the tick walker ----------------------------------------------------------
# Parameter vector layout, int64:
#   0 mode (LIMIT/STOP/STOPLIMIT/POSITION), 1 side sign (+1 long, -1 short),
#   2 entry stop, 3 entry limit, 4 stop loss, 5 target, 6 has stop loss,
#   7 has target, 8 start state (pending/armed/in position), 9 entry price.
M_LIMIT, M_STOP, M_STOPLIMIT, M_POSITION = 0, 1, 2, 3
S_PENDING, S_ARMED, S_POSITION, S_DONE = 0, 1, 2, 3

_KINDS = (
    OutcomeKind.NO_TRIGGER,
    OutcomeKind.ARMED_ONLY,
    OutcomeKind.OPEN_AT_CLOSE,
    OutcomeKind.EXIT_TARGET,
    OutcomeKind.EXIT_STOP,
    OutcomeKind.IMMEDIATE_ROUND_TRIP,
    OutcomeKind.STILL_OPEN,
    OutcomeKind.STOPPED_OUT,
    OutcomeKind.TARGET_HIT,
)
K_NO_TRIGGER, K_ARMED, K_OPEN, K_TARGET, K_STOP, K_ROUND_TRIP, K_STILL, K_STOPPED, K_TARGET_HIT = range(9)

MAX_DISTINCT = 8


@njit(cache=True)
def _walk(ticks, n, prm):
    mode = prm[0]
    d = prm[1]
    state = prm[8]
    entry = prm[9]
    entry_at = -1
    kind = -1
    exit_price = 0
    for i in range(n):
        p = ticks[i]
        x = d * p
        if state == S_PENDING:
            if mode == M_LIMIT:
                if x <= d * prm[3]:
                    state = S_POSITION
                    entry = p
                    entry_at = i
            elif mode == M_STOP:
                if x >= d * prm[2]:
                    state = S_POSITION
                    entry = p
                    entry_at = i
            elif mode == M_STOPLIMIT:
                if x >= d * prm[2]:
                    state = S_ARMED
        if state == S_ARMED:
            if x <= d * prm[3]:
                state = S_POSITION
                entry = p
                entry_at = i
        if state == S_POSITION:
            if prm[6] == 1 and x <= d * prm[4]:
                exit_price = p
                state = S_DONE
                if i == entry_at:
                    kind = K_ROUND_TRIP
                elif mode == M_POSITION:
                    kind = K_STOPPED
                else:
                    kind = K_STOP
            elif prm[7] == 1 and x >= d * prm[5]:
                exit_price = p
                state = S_DONE
                if i == entry_at:
                    kind = K_ROUND_TRIP
                elif mode == M_POSITION:
                    kind = K_TARGET_HIT
                else:
                    kind = K_TARGET
        if state == S_DONE:
            break
    if state == S_PENDING:
        kind = K_NO_TRIGGER
    elif state == S_ARMED:
        kind = K_ARMED
    elif state == S_POSITION:
        kind = K_STILL if mode == M_POSITION else K_OPEN
    return kind, entry, exit_price


@njit(cache=True)
def _outcome_sets(ticks2d, lengths, params, out, counts):
    n_paths = ticks2d.shape[0]
    for j in range(params.shape[0]):
        c = 0
        for k in range(n_paths):
            kind, entry, exit_price = _walk(ticks2d[k], lengths[k], params[j])
            seen = False
            for u in range(c):
                if out[j, u, 0] == kind and out[j, u, 1] == entry and out[j, u, 2] == exit_price:
                    seen = True
                    break
            if not seen:
                if c == out.shape[1]:
                    counts[j] = -1
                    break
                out[j, c, 0] = kind
                out[j, c, 1] = entry
                out[j, c, 2] = exit_price
                c += 1
        if counts[j] != -1:
            counts[j] = c


@lru_cache(maxsize=4096)
def _path_matrix(o: int, h: int, l: int, cl: int, max_segments: int):
    paths = sorted(_paths(o, h, l, cl, max_segments), key=lambda p: p.turning_points)
    expanded = [p.ticks() for p in paths]
    width = max(len(t) for t in expanded)
    mat = np.zeros((len(expanded), width), dtype=np.int64)
    lengths = np.zeros(len(expanded), dtype=np.int64)
    for i, t in enumerate(expanded):
        mat[i, : len(t)] = t
        lengths[i] = len(t)
    return mat, lengths


def _params(subject: Subject, state: OrderStatus) -> list[int]:
    if isinstance(subject, Position):
        b = subject.brackets
        return [M_POSITION, subject.side.sign, 0, 0, b.stop_loss or 0, b.target or 0,
                b.stop_loss is not None, b.target is not None, S_POSITION, subject.entry_price]
    trig, b = subject.trigger, subject.brackets
    if isinstance(trig, Limit):
        mode, stop, limit = M_LIMIT, 0, trig.limit
    elif isinstance(trig, Stop):
        mode, stop, limit = M_STOP, trig.stop, 0
    else:
        mode, stop, limit = M_STOPLIMIT, trig.stop, trig.limit
    start = S_ARMED if (mode == M_STOPLIMIT and state is OrderStatus.ARMED) else S_PENDING
    return [mode, subject.side.sign, stop, limit, b.stop_loss or 0, b.target or 0,
            b.stop_loss is not None, b.target is not None, start, 0]


@lru_cache(maxsize=None)
def _decode(kind: int, entry: int, exit_price: int) -> CandleOutcome:
    k = _KINDS[kind]
    if k in (OutcomeKind.NO_TRIGGER, OutcomeKind.ARMED_ONLY, OutcomeKind.STILL_OPEN):
        return CandleOutcome(k)
    if k is OutcomeKind.OPEN_AT_CLOSE:
        return CandleOutcome(k, entry)
    if k in (OutcomeKind.STOPPED_OUT, OutcomeKind.TARGET_HIT):
        return CandleOutcome(k, None, exit_price)
    return CandleOutcome(k, entry, exit_price)


def simulate_path(path: TickPath, subject: Subject,
                  state: OrderStatus = OrderStatus.PENDING) -> CandleOutcome:
    ticks = path.ticks()
    prm = np.asarray(_params(subject, state), dtype=np.int64)
    kind, entry, exit_price = _walk(ticks, len(ticks), prm)
    return _decode(int(kind), int(entry), int(exit_price))


def oracle_outcome_sets(c: Candle, subjects: Sequence[Subject],
                        state: OrderStatus = OrderStatus.PENDING,
                        max_segments: int = DEFAULT_MAX_SEGMENTS) -> list[frozenset[CandleOutcome]]:
    """Realisable outcome set for each subject on candle ``c`` (batched walk)."""
    if not subjects:
        return []
    mat, lengths = _path_matrix(c.open, c.high, c.low, c.close, max_segments)
    params = np.asarray([_params(s, state) for s in subjects], dtype=np.int64)
    out = np.zeros((len(subjects), MAX_DISTINCT, 3), dtype=np.int64)
    counts = np.zeros(len(subjects), dtype=np.int64)
    _outcome_sets(mat, lengths, params, out, counts)
    if (counts < 0).any():
        raise RuntimeError("more distinct outcomes than the walker can hold")
    rows = out.tolist()
    return [frozenset(_decode(*rows[j][u]) for u in range(n)) for j, n in enumerate(counts.tolist())]


def oracle_outcomes(c: Candle, subject: Subject, state: OrderStatus = OrderStatus.PENDING,
                    max_segments: int = DEFAULT_MAX_SEGMENTS) -> frozenset[CandleOutcome]:
    return oracle_outcome_sets(c, [subject], state, max_segments)[0]


# -- engine verification --------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Match:
    outcomes: frozenset


@dataclass(frozen=True, slots=True)
class Discrepancy:
    engine: Optional[EvaluationResult]
    oracle: frozenset
    error: Optional[str] = None


Evaluator = Callable[[Candle, Subject, OrderStatus], EvaluationResult]


def engine_evaluate(c: Candle, subject: Subject, state: OrderStatus = OrderStatus.PENDING) -> EvaluationResult:
    if isinstance(subject, Position):
        return evaluate_position(subject, c)
    return evaluate_order(subject, c, state)


def compare(result: Optional[EvaluationResult], oracle: frozenset, error: Optional[str] = None):
    if result is not None and result.outcomes == oracle:
        return Match(oracle)
    return Discrepancy(result, oracle, error)


def verify_engine(c: Candle, subject: Subject, state: OrderStatus = OrderStatus.PENDING, *,
                  max_segments: int = DEFAULT_MAX_SEGMENTS,
                  evaluator: Optional[Evaluator] = None) -> Union[Match, Discrepancy]:
    """Match iff the engine's outcome set equals the oracle's exactly."""
    evaluator = evaluator or engine_evaluate
    expected = oracle_outcomes(c, subject, state, max_segments)
    try:
        result = evaluator(c, subject, state)
    except Exception as exc:  # a crash on an admissible case is a discrepancy too
        return Discrepancy(None, expected, f"{type(exc).__name__}: {exc}")
    return compare(result, expected)
