from __future__ import annotations

import math

import pytest

from candlebt.candles import BracketLevels, EntryOrder, Limit, Side, Stop, StopLimit, TimeInForce
from candlebt.errors import ConfigError, ScriptOutOfRange
from candlebt.resolver import BEST_CASE, IGNORE, WORST_CASE, PolicyKind, SnuPolicy
from candlebt.runner import (
    RunConfig,
    ScriptAction,
    Summary,
    TradeRecord,
    compute_summary,
    run,
    run_policy_comparison,
)

from conftest import STOP_LOSS, TARGET, T0, ListFinerSource, daily, both_brackets_hourly, snu_free_candles


def _trade(net):
    return TradeRecord("x", Side.LONG, 1, None, 0, None, 0, "target", int(net), float(net))


class TestSummary:
    def test_no_trades(self):
        s = compute_summary([])
        assert s == Summary() and s.profit_factor is None

    def test_arithmetic(self):
        s = compute_summary([_trade(6), _trade(-3)])
        assert s.profit_factor == 2.0 and s.average_trade == 1.5 and s.win_rate == 0.5
        assert s.max_drawdown == 3

    def test_no_losers_is_infinite(self):
        assert math.isinf(compute_summary([_trade(2)]).profit_factor)

    def test_drawdown_from_start(self):
        assert compute_summary([_trade(-2), _trade(1), _trade(-4)]).max_drawdown == 5


class TestRun:
    def test_empty_script(self):
        rep = run(snu_free_candles(), [], WORST_CASE)
        assert rep.trades == [] and rep.snu_log == [] and rep.summary == Summary()

    def test_gtc_limit_waits_for_touch(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 10, 11, 9, 10), daily(2, 10, 12, 9, 11),
                   daily(3, 11, 11, 7, 8), daily(4, 8, 9, 8, 9)]
        order = EntryOrder(Side.LONG, Limit(8), id="g")
        rep = run(candles, [ScriptAction(0, "submit", order)], WORST_CASE)
        (t,) = rep.trades
        assert t.entry_time == candles[3].timestamp and t.entry_price == 8
        assert t.exit_reason == "end_of_data" and t.exit_price == 9

    def test_next_bar_only_expires(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 10, 11, 9, 10), daily(2, 10, 12, 7, 11)]
        order = EntryOrder(Side.LONG, Limit(8), time_in_force=TimeInForce.NEXT_BAR_ONLY, id="n")
        rep = run(candles, [ScriptAction(0, "submit", order)], WORST_CASE)
        assert rep.trades == [] and rep.events[-1]["event"] == "expired"

    def test_both_brackets_worst_vs_best(self, both_brackets):
        candles, script = both_brackets
        wc, bc = run(candles, script, WORST_CASE), run(candles, script, BEST_CASE)
        assert wc.trades[0].entry_price == bc.trades[0].entry_price == 10
        assert (wc.trades[0].exit_reason, bc.trades[0].exit_reason) == ("stop", "target")
        assert bc.summary.net_total - wc.summary.net_total == TARGET - STOP_LOSS
        assert len(wc.snu_log) == 1

    def test_slippage_and_fees(self, both_brackets):
        candles, script = both_brackets
        rep = run(candles, script, BEST_CASE, RunConfig(tick_size=0.25, slippage_ticks=1, fee_ticks=0.5))
        t = rep.trades[0]
        assert t.gross_ticks == 4 and t.net_ticks == 4 - 2 - 0.5
        assert rep.config["slippage_ticks"] == 1 and rep.config["tick_size"] == 0.25

    def test_ignore_drops_an_entry_snu(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 10, 15, 7, 9), daily(2, 9, 9, 9, 9)]
        order = EntryOrder(Side.LONG, Limit(8), BracketLevels(target=14), id="a")
        script = [ScriptAction(0, "submit", order)]
        counts = {p.label: run(candles, script, p).summary.trade_count for p in (WORST_CASE, BEST_CASE, IGNORE)}
        assert counts == {"wc": 1, "bc": 1, "ig": 0}

    def test_overlapping_entry_is_rejected(self):
        candles = [daily(i, 10, 11, 9, 10) for i in range(4)]
        a = EntryOrder(Side.LONG, Limit(10), id="a")
        b = EntryOrder(Side.SHORT, Limit(10), id="b")
        rep = run(candles, [ScriptAction(0, "submit", a), ScriptAction(1, "submit", b)], WORST_CASE)
        assert [t.order_id for t in rep.trades] == ["a"]
        assert {"event": "rejected", "order_id": "b"}.items() <= rep.events[0].items()

    def test_cancel(self):
        candles = [daily(i, 10, 11, 9, 10) for i in range(3)]
        a = EntryOrder(Side.LONG, Limit(5), id="a")
        rep = run(candles, [ScriptAction(0, "submit", a), ScriptAction(1, "cancel", order_id="a")], WORST_CASE)
        assert rep.trades == [] and rep.events[0]["event"] == "cancelled"

    def test_degenerate_order_is_rejected(self):
        candles = [daily(i, 10, 11, 9, 10) for i in range(3)]
        bad = EntryOrder(Side.LONG, Stop(12), BracketLevels(target=11), id="bad")
        rep = run(candles, [ScriptAction(0, "submit", bad)], WORST_CASE)
        assert rep.trades == [] and "degenerate" in rep.events[0]["detail"]

    def test_stop_limit_arms_then_fills_later(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 12, 13, 12, 13), daily(2, 13, 13, 11, 12)]
        o = EntryOrder(Side.LONG, StopLimit(12, 11), id="s")
        rep = run(candles, [ScriptAction(0, "submit", o)], WORST_CASE)
        (t,) = rep.trades
        assert t.entry_price == 11 and t.entry_time == candles[2].timestamp

    def test_same_candle_round_trip_is_booked(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 10, 15, 7, 9), daily(2, 9, 9, 9, 9)]
        o = EntryOrder(Side.LONG, Limit(8), BracketLevels(target=14), id="a")
        rep = run(candles, [ScriptAction(0, "submit", o)], BEST_CASE)
        (t,) = rep.trades
        assert t.exit_reason == "target" and t.entry_time == t.exit_time

    def test_script_out_of_range(self):
        with pytest.raises(ScriptOutOfRange):
            run(snu_free_candles(), [ScriptAction(99, "cancel", order_id="x")], WORST_CASE)
        with pytest.raises(ScriptOutOfRange):
            run(snu_free_candles(), [ScriptAction(T0.replace(year=1999), "cancel", order_id="x")], WORST_CASE)

    def test_exact_needs_refiner(self, both_brackets):
        with pytest.raises(ConfigError):
            run(*both_brackets, SnuPolicy(PolicyKind.EXACT))

    def test_exact_uses_hourly_data(self, both_brackets):
        candles, script = both_brackets
        rep = run(candles, script, SnuPolicy(PolicyKind.EXACT),
                  RunConfig(refiner=ListFinerSource(both_brackets_hourly(low_first=False))))
        assert rep.trades[0].exit_reason == "target" and rep.snu_log[0].depth == 1

    def test_short_trade(self):
        candles = [daily(0, 10, 10, 10, 10), daily(1, 10, 11, 9, 10), daily(2, 10, 15, 5, 9)]
        o = EntryOrder(Side.SHORT, Limit(10), BracketLevels(14, 6), id="s")
        rep = run(candles, [ScriptAction(0, "submit", o)], BEST_CASE)
        assert rep.trades[0].exit_price == 6 and rep.trades[0].gross_ticks == 4

    def test_summary_is_recomputable(self, both_brackets):
        rep = run(*both_brackets, WORST_CASE)
        assert rep.summary == compute_summary(rep.trades)


class TestComparison:
    def test_band_width(self, both_brackets):
        cmp = run_policy_comparison(*both_brackets, [WORST_CASE, BEST_CASE])
        assert cmp.divergence["band_width"] == TARGET - STOP_LOSS

    def test_no_snus_means_identical_trades(self):
        candles = snu_free_candles()
        o = EntryOrder(Side.LONG, Limit(10), BracketLevels(5, 20), id="q")
        cmp = run_policy_comparison(candles, [ScriptAction(0, "submit", o)], [WORST_CASE, BEST_CASE, IGNORE])
        trades = [r.trades for r in cmp.reports.values()]
        assert trades[0] == trades[1] == trades[2] and trades[0]
        assert cmp.divergence["band_width"] == 0

    def test_script_action_validation(self):
        with pytest.raises(ValueError):
            ScriptAction(0, "modify")
        with pytest.raises(ValueError):
            ScriptAction(0, "submit")
