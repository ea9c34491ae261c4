import logging
from datetime import date

import numpy as np
import pytest

from market_data import DailySeries, MarketStore, TradingCalendar
from synth_market import GeneratorConfig, generate

START = date(2023, 1, 2)

# Small enough for minute-level backtests in a few seconds
FAST_MARKET = dict(n_days=10, session_length=60, strike_span=0.03, warmup_days=260, iv_vol=0.3,
                   spread=0.005, underlying_spread=1e-5)


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI reconfigures the root logger; put it back after every test."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture(scope="session")
def make_market():
    """Synthetic stores keyed by their generator config, built once per session."""
    cache = {}

    def make(**overrides) -> MarketStore:
        cfg = GeneratorConfig(**{**FAST_MARKET, **overrides})
        if cfg not in cache:
            cache[cfg] = generate(cfg)
        return cache[cfg]

    return make


@pytest.fixture(scope="session")
def build_store():
    """Hand-made store with a flat index and the given (minute index, key, bid, ask) quotes."""

    def build(quotes=(), session_length=60, n_days=1, spot=4000.0, vix=20.0, rate=0.0, div=0.0) -> MarketStore:
        cal = TradingCalendar.business_days(START, n_days, session_length)
        underlying = np.full((cal.n_minutes, 6), float(spot))
        quotes = sorted(quotes, key=lambda q: q[0])
        keys = sorted({q[1] for q in quotes})
        ids = {k: i for i, k in enumerate(keys)}
        return MarketStore(
            cal, underlying, keys,
            np.array([q[0] for q in quotes], dtype=np.int64),
            np.array([ids[q[1]] for q in quotes], dtype=np.int64),
            np.array([q[2] for q in quotes], dtype=float),
            np.array([q[3] for q in quotes], dtype=float),
            DailySeries([cal.dates[0]], [vix], "VIX"),
            DailySeries([cal.dates[0]], [[rate, div]], "rates"),
        )

    return build
