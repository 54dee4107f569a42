"""Candle-chart backtest evaluation with explicit handling of ambiguous candles."""
