from __future__ import annotations

from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from candlebt.candles import BracketLevels, Candle, EntryOrder, Limit, OrderStatus, Position, Side, StopLimit
from candlebt.engine import (
    EvaluationResult,
    armed_only,
    evaluate_order,
    evaluate_position,
    exit_stop,
    exit_target,
    no_trigger,
    open_at_close,
    round_trip,
    still_open,
    stopped_out,
    target_hit,
)
from candlebt.errors import InconsistentOutcome, InconsistentSubCandles, RefinerUnavailable
from candlebt.oracle import enumerate_paths, oracle_outcomes, simulate_path
from candlebt.resolver import (
    BEST_CASE,
    CANCELLED,
    IGNORE,
    WORST_CASE,
    PolicyKind,
    SnuPolicy,
    check_sub_candles,
    outcome_value,
    refine_exact,
    resolve,
)

from conftest import DAY, HOUR, T0, ListFinerSource, daily, both_brackets_hourly

SNU_A_CANDLE = Candle(10, 15, 7, 9, T0, DAY)
SNU_A_ORDER = EntryOrder(Side.LONG, Limit(8), BracketLevels(target=14), id="a")
BOTH_BRACKETS_POSITION = Position(Side.LONG, 10, BracketLevels(6, 14), order_id="p")
BOTH_BRACKETS_DAY = daily(2, 10, 15, 5, 9)


class TestOutcomeValue:
    def test_examples(self):
        c = Candle(10, 15, 7, 9)
        assert outcome_value(exit_target(8, 14), c) == 6
        assert outcome_value(open_at_close(12), Candle(10, 14, 9, 9)) == -3
        assert outcome_value(armed_only(), c) == 0
        assert outcome_value(no_trigger(), c) == 0
        assert outcome_value(round_trip(9), c) == 0

    def test_short_negates(self):
        assert outcome_value(exit_target(12, 6), Candle(10, 13, 5, 11), Side.SHORT) == 6

    def test_positions_use_entry_price(self):
        c = Candle(10, 15, 5, 9)
        assert outcome_value(stopped_out(6), c, Side.LONG, 10) == -4
        assert outcome_value(still_open(), c, Side.LONG, 10) == -1
        with pytest.raises(InconsistentOutcome):
            outcome_value(still_open(), c)

    def test_prices_outside_the_candle_are_rejected(self):
        with pytest.raises(InconsistentOutcome):
            outcome_value(exit_target(8, 20), Candle(10, 15, 7, 9))


class TestResolve:
    result = evaluate_order(SNU_A_ORDER, SNU_A_CANDLE)

    def _resolve(self, policy, **kw):
        return resolve(self.result, policy, candle=SNU_A_CANDLE, subject=SNU_A_ORDER, timestamp=T0, **kw)

    def test_worst_case(self):
        chosen, entry = self._resolve(WORST_CASE)
        assert chosen == open_at_close(8)
        assert entry.snu_id == "LIMIT+TARGET/A" and entry.order_id == "a" and entry.policy == "wc"
        assert dict(entry.candidates) == {exit_target(8, 14): 6, open_at_close(8): 1}

    def test_best_case(self):
        assert self._resolve(BEST_CASE)[0] == exit_target(8, 14)

    def test_ignore_cancels_entry(self):
        chosen, entry = self._resolve(IGNORE)
        assert chosen is CANCELLED and entry.chosen is None

    def test_unique_results_pass_through_unlogged(self):
        r = evaluate_order(SNU_A_ORDER, Candle(10, 12, 9, 11))
        assert resolve(r, WORST_CASE, candle=Candle(10, 12, 9, 11), subject=SNU_A_ORDER) == (no_trigger(), None)

    def test_ignore_on_a_position_books_worst_case(self):
        r = evaluate_position(BOTH_BRACKETS_POSITION, BOTH_BRACKETS_DAY)
        chosen, entry = resolve(r, IGNORE, candle=BOTH_BRACKETS_DAY, subject=BOTH_BRACKETS_POSITION)
        assert chosen == stopped_out(6) and "worst case" in entry.note

    def test_exact_without_refiner(self):
        with pytest.raises(RefinerUnavailable):
            self._resolve(SnuPolicy(PolicyKind.EXACT))

    def test_tie_prefers_the_flat_outcome(self):
        # No trade (0) against a position opened at the close price (0).
        c = Candle(10, 14, 9, 11)
        order = EntryOrder(Side.LONG, Limit(11))
        r = EvaluationResult(frozenset([no_trigger(), open_at_close(11)]), "TIE")
        for policy in (WORST_CASE, BEST_CASE):
            assert resolve(r, policy, candle=c, subject=order)[0] == no_trigger()

    def test_policy_parsing(self):
        p = SnuPolicy.parse("ex", "bc", 2)
        assert p.label == "ex(fallback=bc,max_depth=2)"
        with pytest.raises(ValueError):
            SnuPolicy.parse("ex", "ig")
        with pytest.raises(ValueError):
            SnuPolicy.parse("ex", "wc", 0)


class TestRefineExact:
    def test_low_first_gives_stop(self):
        src = ListFinerSource(both_brackets_hourly(low_first=True))
        ref = refine_exact(BOTH_BRACKETS_DAY, BOTH_BRACKETS_POSITION, OrderStatus.PENDING, src)
        assert ref.result.outcomes == {stopped_out(6)} and ref.depth == 1

    def test_high_first_gives_target(self):
        src = ListFinerSource(both_brackets_hourly(low_first=False))
        ref = refine_exact(BOTH_BRACKETS_DAY, BOTH_BRACKETS_POSITION, OrderStatus.PENDING, src)
        assert ref.result.outcomes == {target_hit(14)}

    def test_exact_policy_logs_depth(self):
        src = ListFinerSource(both_brackets_hourly())
        r = evaluate_position(BOTH_BRACKETS_POSITION, BOTH_BRACKETS_DAY)
        chosen, entry = resolve(r, SnuPolicy(PolicyKind.EXACT), candle=BOTH_BRACKETS_DAY, subject=BOTH_BRACKETS_POSITION,
                                refiner=src)
        assert chosen == stopped_out(6) and entry.depth == 1 and entry.note is None

    def test_persisting_snu_uses_fallback(self):
        # One hourly bar repeating the whole daily range settles nothing.
        sub = Candle(10, 15, 5, 9, BOTH_BRACKETS_DAY.timestamp, DAY)
        src = ListFinerSource([sub])
        r = evaluate_position(BOTH_BRACKETS_POSITION, BOTH_BRACKETS_DAY)
        for fallback, expected in (("wc", stopped_out(6)), ("bc", target_hit(14))):
            chosen, entry = resolve(r, SnuPolicy.parse("ex", fallback), candle=BOTH_BRACKETS_DAY,
                                    subject=BOTH_BRACKETS_POSITION, refiner=src)
            assert chosen == expected and "fallback" in entry.note

    def test_inconsistent_sub_candles(self):
        bars = both_brackets_hourly()
        bars[3] = Candle(12, 14, 12, 13, bars[3].timestamp, HOUR)
        with pytest.raises(InconsistentSubCandles):
            refine_exact(BOTH_BRACKETS_DAY, BOTH_BRACKETS_POSITION, OrderStatus.PENDING, ListFinerSource(bars))

    def test_check_sub_candles_aggregates(self):
        check_sub_candles(BOTH_BRACKETS_DAY, both_brackets_hourly())
        with pytest.raises(InconsistentSubCandles):
            check_sub_candles(BOTH_BRACKETS_DAY, [])

    def test_entry_then_exit_in_later_sub_candle(self):
        # SNU A: hourly data shows the fill at 8 first, the target later.
        day = SNU_A_CANDLE
        subs = [Candle(10, 10, 7, 8, T0, HOUR), Candle(8, 15, 8, 12, T0 + HOUR, HOUR),
                Candle(12, 12, 9, 9, T0 + 2 * HOUR, HOUR)]
        ref = refine_exact(day, SNU_A_ORDER, OrderStatus.PENDING, ListFinerSource(subs))
        assert ref.result.outcomes == {exit_target(8, 14)}

    def test_depth_stops_at_max_depth(self):
        sub = Candle(10, 15, 5, 9, BOTH_BRACKETS_DAY.timestamp, DAY)
        src = ListFinerSource([sub], [sub], [sub], [sub])
        ref = refine_exact(BOTH_BRACKETS_DAY, BOTH_BRACKETS_POSITION, OrderStatus.PENDING, src, max_depth=2)
        assert ref.depth == 2 and ref.result.is_ambiguous


# -- property: cutting a tick path into sub-candles ------------------------------------------

SUBJECTS = [
    SNU_A_ORDER,
    EntryOrder(Side.LONG, Limit(8), BracketLevels(6, 14)),
    EntryOrder(Side.LONG, StopLimit(12, 9), BracketLevels(6, 14)),
    EntryOrder(Side.SHORT, StopLimit(8, 11), BracketLevels(14, 6)),
    BOTH_BRACKETS_POSITION,
    Position(Side.SHORT, 10, BracketLevels(14, 6)),
]
CANDLES = [Candle(10, 15, 5, 9), Candle(10, 15, 7, 9), Candle(13, 15, 5, 6), Candle(7, 14, 5, 13)]


def _cut(ticks, cuts, start, unit):
    bounds = [0, *sorted(cuts), len(ticks)]
    out = []
    for a, b in zip(bounds, bounds[1:]):
        seg = [int(x) for x in ticks[a:b]]
        out.append(Candle(seg[0], max(seg), min(seg), seg[-1], start + a * unit, (b - a) * unit))
    return out


@st.composite
def cut_paths(draw):
    c = draw(st.sampled_from(CANDLES))
    path = draw(st.sampled_from(sorted(enumerate_paths(c, 4), key=lambda p: p.turning_points)))
    ticks = path.ticks()
    cuts = draw(st.sets(st.integers(1, len(ticks) - 1), max_size=4)) if len(ticks) > 1 else set()
    return c, path, ticks, cuts


@settings(max_examples=150, deadline=None)
@given(cut_paths(), st.sampled_from(SUBJECTS))
def test_refinement_narrows_towards_the_true_path(case, subject):
    c, path, ticks, cuts = case
    unit = timedelta(seconds=1)
    parent = Candle(c.open, c.high, c.low, c.close, T0, len(ticks) * unit)
    level1 = _cut(ticks, cuts, T0, unit)
    level2 = _cut(ticks, range(1, len(ticks)), T0, unit)
    truth = simulate_path(path, subject)
    possible = oracle_outcomes(parent, subject)

    coarse = refine_exact(parent, subject, OrderStatus.PENDING, ListFinerSource(level1), max_depth=1)
    assert truth in coarse.result.outcomes
    assert coarse.result.outcomes <= possible

    fine = refine_exact(parent, subject, OrderStatus.PENDING, ListFinerSource(level1, level2))
    assert fine.result.outcomes == {truth}


def test_tick_level_candles_are_never_ambiguous():
    for subject in SUBJECTS:
        for p in range(0, 20):
            r = (evaluate_position(subject, Candle(p, p, p, p)) if isinstance(subject, Position)
                 else evaluate_order(subject, Candle(p, p, p, p)))
            assert not r.is_ambiguous
