from datetime import date

import numpy as np
import pytest

from backtest import BacktestConfig, EquityCurve, run_backtest, run_buy_and_hold, session_range
from errors import ConfigError, DataError
from hedging import HedgeKind, HedgeSchedule
from market_data import Timestamp
from metrics import asd, daily_returns
from portfolio import ETF, Reason
from strategy import ModelKind, SizingKind, SizingRule, StrategyKind, StrategySpec, vix_rank, vix_size

BETA = 0.1


def config(**overrides):
    values = dict(strategy=StrategySpec(StrategyKind.SHORT_PUT, 0.0, 7), sizing=SizingRule(SizingKind.DELTA))
    values.update(overrides)
    return BacktestConfig(**values)


STRADDLE = StrategySpec(StrategyKind.SHORT_STRADDLE, 0.0, 7)


@pytest.fixture(scope="module")
def market(make_market):
    return make_market(seed=3)


def test_naked_run_never_trades_the_etf(market):
    result = run_backtest(config(), market)
    assert result.equity.dates == market.dates
    assert {f.reason for f in result.trades} == {Reason.OPEN, Reason.SETTLE}
    assert all(f.instrument != ETF for f in result.trades)
    opens = result.trades.by_reason(Reason.OPEN)
    assert [(f.t.date, f.t.minute) for f in opens] == [(date(2023, 1, 2), 30), (date(2023, 1, 9), 30)]
    assert all(f.size < 0 for f in opens)
    assert result.hedge_checks == []


def test_runs_are_deterministic(market):
    cfg = config(strategy=STRADDLE, hedge=HedgeSchedule.parse("20"))
    first, second = run_backtest(cfg, market), run_backtest(cfg, market)
    assert first.equity == second.equity
    assert first.trades.to_frame().equals(second.trades.to_frame())


def test_minute_ledger_reconciles(market):
    cfg = config(strategy=STRADDLE, hedge=HedgeSchedule.parse("20"), record_minutes=True)
    result = run_backtest(cfg, market)
    ledger = result.ledger
    assert len(ledger) == len(market)
    equity = np.concatenate([[cfg.initial_cash], ledger["equity"].to_numpy()])
    explained = (ledger["mtm_pnl"] + ledger["trade_pnl"] - ledger["fees"]).to_numpy()
    np.testing.assert_allclose(np.diff(equity), explained, rtol=0, atol=1e-6)
    closes = ledger[ledger["minute"] == 59]["equity"].to_numpy()
    np.testing.assert_allclose(result.equity.values, closes, rtol=0, atol=1e-9)


def test_every_hedge_leaves_the_book_neutral(market):
    result = run_backtest(config(strategy=STRADDLE, hedge=HedgeSchedule.parse("20")), market)
    assert {t.minute for t, _ in result.hedge_checks} == {0, 20, 40}
    assert max(residual for _, residual in result.hedge_checks) <= BETA / 2 + 1e-9
    hedges = result.trades.by_reason(Reason.HEDGE)
    assert hedges
    assert {f.t.minute for f in hedges} <= {0, 20, 40}
    assert all(f.instrument == ETF for f in hedges)


def test_faster_schedule_checks_at_least_as_often(market):
    fast = run_backtest(config(hedge=HedgeSchedule.parse("10")), market)
    slow = run_backtest(config(hedge=HedgeSchedule.parse("30")), market)
    assert len(fast.hedge_checks) >= len(slow.hedge_checks)


def test_single_schedule_hedges_once_before_close(market):
    result = run_backtest(config(hedge=HedgeSchedule(HedgeKind.SINGLE)), market)
    assert [t.minute for t, _ in result.hedge_checks] == [30] * len(market.dates)


def test_vix_sizing_opens_the_ranked_quantity(market):
    result = run_backtest(config(sizing=SizingRule(SizingKind.VIX)), market)
    first = market.dates[0]
    spot = market.snapshot(Timestamp(first, 30)).spot
    rank = vix_rank(market.vix_history(first), market.vix_close(first), 252)
    expected = vix_size(1_000_000.0, spot, 1.4, rank)
    opened = [f for f in result.trades.by_reason(Reason.OPEN) if f.t.date == first]
    assert sum(-f.size for f in opened) == expected


def test_zero_size_stays_flat(make_market):
    flat_vix = make_market(iv_vol=0.0)
    result = run_backtest(config(sizing=SizingRule(SizingKind.VIX)), flat_vix)
    assert len(result.trades) == 0
    assert np.all(result.equity.values == 1_000_000.0)


def test_expired_premium_is_kept(make_market):
    calm = make_market(sigma_real=1e-4, iv_vol=0.0, spread=0.0, underlying_spread=0.0)
    result = run_backtest(config(strategy=StrategySpec(StrategyKind.SHORT_PUT, 0.05, 7)), calm)
    settles = result.trades.by_reason(Reason.SETTLE)
    assert settles and all(f.price == 0.0 for f in settles)

    premium = sum(-f.size * f.price * 100 for f in result.trades.by_reason(Reason.OPEN))
    fees = sum(f.fee for f in result.trades)
    open_legs = {}
    for f in result.trades:
        open_legs[f.instrument] = open_legs.get(f.instrument, 0) + f.size
    last = Timestamp(calm.dates[-1], 59)
    liability = sum(q * calm.last_quote(k, last).mid * 100 for k, q in open_legs.items() if q)
    assert result.equity.final == pytest.approx(1_000_000.0 + premium - fees + liability, abs=1e-6)


def test_range_beyond_data_names_missing_sessions(market):
    with pytest.raises(DataError, match="2023-01-16"):
        run_backtest(config(end=date(2023, 2, 1)), market)
    with pytest.raises(ConfigError):
        session_range(market, date(2023, 1, 10), date(2023, 1, 5))
    assert session_range(market, date(2023, 1, 4), date(2023, 1, 6)) == [date(2023, 1, 4), date(2023, 1, 5),
                                                                        date(2023, 1, 6)]


def test_buy_and_hold_invests_once(market):
    result = run_buy_and_hold(market)
    (buy,) = list(result.trades)
    assert buy.instrument == ETF and buy.t == Timestamp(market.dates[0], 0)
    cash = 1_000_000.0 - buy.size * buy.price - buy.fee
    assert 0 <= cash < buy.price + 1
    last_close = market.underlying_mid[len(market) - 1]
    assert result.equity.final == pytest.approx(cash + buy.size * BETA * last_close)


def test_equity_csv_round_trip(market, tmp_path):
    curve = run_backtest(config(), market).equity
    assert EquityCurve.read_csv(curve.write_csv(tmp_path / "equity.csv")) == curve


@pytest.mark.slow
def test_vg_hedged_run_stays_neutral(make_market):
    store = make_market(n_days=3, quote_model="vg", iv_vol=0.0, quote_every=10)
    result = run_backtest(config(hedge=HedgeSchedule.parse("20"), model=ModelKind.VG), store)
    assert result.trades.by_reason(Reason.HEDGE)
    assert max(residual for _, residual in result.hedge_checks) <= BETA / 2 + 1e-9


@pytest.mark.slow
def test_short_straddle_earns_the_variance_premium(make_market):
    pnl = []
    for seed in range(20):
        store = make_market(seed=seed, iv_level=0.25, sigma_real=0.10, iv_vol=0.0, spread=0.0,
                            underlying_spread=0.0)
        pnl.append(run_backtest(config(strategy=STRADDLE), store).equity.final - 1_000_000.0)
    assert np.mean(pnl) > 0


@pytest.mark.slow
def test_hedging_reduces_return_volatility(make_market):
    # implied vol five points over realised, frictionless quotes
    wins = 0
    for seed in range(20):
        store = make_market(seed=seed, n_days=20, sigma_real=0.15, iv_level=0.20, iv_vol=0.0, spread=0.0,
                            underlying_spread=0.0, quote_every=30)
        naked = run_backtest(config(strategy=STRADDLE), store)
        hedged = run_backtest(config(strategy=STRADDLE, hedge=HedgeSchedule.parse("30")), store)
        wins += asd(daily_returns(hedged.equity)) < asd(daily_returns(naked.equity))
    assert wins >= 18
