from datetime import date

import numpy as np
import pandas as pd
import pytest

from bsm import bsm_price
from calibration import (
    CalibrationConfig,
    VgCalibrator,
    calibrate,
    calibrate_store,
    calibration_schedule,
    objective,
    write_params_csv,
)
from errors import InsufficientDataError
from market_data import OptionInputs, OptionKey, Right, Timestamp, TradingCalendar
from variance_gamma import PricingGrid, VgParams, vg_prices

MONDAY = date(2023, 1, 2)
EXPIRY = date(2023, 1, 9)
FINE = PricingGrid(n_points=2 ** 14)
CHAIN = dict(n_days=2, strike_span=0.04, iv_vol=0.0, warmup_days=0, spread=0.0, underlying_spread=0.0,
             quote_every=30, grid_points=2 ** 14)


def tuesday_open(store):
    return store.snapshot(Timestamp(store.dates[1], 0))


@pytest.fixture(scope="module")
def vg_chain(make_market):
    return make_market(quote_model="vg", quote_sigma=0.15, quote_nu=0.2, quote_theta=-0.1, **CHAIN)


@pytest.fixture
def bsm_chain(build_store):
    cal = build_store().calendar
    quotes = []
    for minute in (0,):
        t = Timestamp(MONDAY, minute)
        tau = cal.year_fraction(t, EXPIRY)
        for strike in np.arange(3900.0, 4101.0, 25.0):
            for right in Right:
                mid = bsm_price(OptionInputs(4000.0, float(strike), tau, 0.0, 0.0, right), 0.2)
                quotes.append((minute, OptionKey(EXPIRY, float(strike), right), mid, mid))
    return build_store(quotes)


@pytest.mark.parametrize("interval, expected", [
    (30, list(range(0, 390, 30))),
    (390, [0]),
    (130, [0, 130, 260]),
])
def test_refit_schedule(interval, expected):
    cal = TradingCalendar.business_days(MONDAY, 1, 390)
    assert calibration_schedule(cal, interval) == expected


def test_schedule_has_thirteen_points_at_thirty_minutes():
    assert len(calibration_schedule(TradingCalendar.business_days(MONDAY, 1, 390), 30)) == 13


def test_three_quotes_are_not_enough(build_store):
    quotes = [(0, OptionKey(EXPIRY, k, Right.CALL), 30.0, 31.0) for k in (3990.0, 4000.0, 4010.0)]
    store = build_store(quotes)
    with pytest.raises(InsufficientDataError):
        calibrate(store.snapshot(Timestamp(MONDAY, 0)), calendar=store.calendar)


def test_recovers_generator_parameters(vg_chain):
    fit = calibrate(tuesday_open(vg_chain), cfg=CalibrationConfig(grid=FINE), calendar=vg_chain.calendar)
    assert fit.sigma == pytest.approx(0.15, rel=0.01)
    assert fit.nu == pytest.approx(0.2, rel=0.01)
    assert fit.theta == pytest.approx(-0.1, rel=0.01)
    assert fit.fitted_at == Timestamp(vg_chain.dates[1], 0)
    assert not fit.stale


def test_fit_never_ends_worse_than_its_start(vg_chain):
    cfg = CalibrationConfig(grid=FINE)
    snapshot = tuesday_open(vg_chain)
    start = VgParams(0.3, 0.6, 0.05)
    fit = calibrate(snapshot, start, cfg, vg_chain.calendar)
    assert fit.objective_value <= objective(start, snapshot, cfg, vg_chain.calendar)


def test_proportional_spread_keeps_sigma(make_market):
    store = make_market(quote_model="vg", **{**CHAIN, "spread": 0.002})
    fit = calibrate(tuesday_open(store), cfg=CalibrationConfig(grid=FINE), calendar=store.calendar)
    assert fit.sigma == pytest.approx(0.15, rel=0.05)


def test_flat_bsm_chain_drives_nu_down(make_market):
    store = make_market(quote_model="bsm", iv_level=0.2, **CHAIN)
    fit = calibrate(tuesday_open(store), calendar=store.calendar)
    assert fit.nu < 0.05
    assert fit.sigma == pytest.approx(0.2, rel=0.05)


def test_calibrator_serves_latest_refit(vg_chain):
    calibrator = VgCalibrator(vg_chain, CalibrationConfig(grid=FINE))
    t = Timestamp(vg_chain.dates[1], 45)
    assert calibrator.refit_time(t) == Timestamp(vg_chain.dates[1], 30)
    first = calibrator.params_at(t)
    assert calibrator.params_at(Timestamp(vg_chain.dates[1], 31)) is first
    assert first.fitted_at == Timestamp(vg_chain.dates[1], 30)


def test_missing_refit_quotes_keep_previous_parameters(bsm_chain, tmp_path):
    fits = calibrate_store(bsm_chain, CalibrationConfig(refit_interval=30, max_staleness=10))
    assert [t.minute for t, _ in fits] == [0, 30]
    (_, fresh), (_, kept) = fits
    assert not fresh.stale
    assert kept.stale
    assert kept.as_tuple() == fresh.as_tuple()

    frame = pd.read_csv(write_params_csv(fits, tmp_path / "vg_params.csv"), keep_default_na=False)
    assert list(frame.columns) == ["date", "minute", "sigma", "nu", "theta", "objective"]
    assert frame["objective"].tolist()[1] == ""


def test_refit_between_quote_minutes_uses_recent_quotes(make_market):
    store = make_market(quote_model="vg", quote_sigma=0.15, quote_nu=0.2, quote_theta=-0.1,
                        **{**CHAIN, "quote_every": 7})
    t = Timestamp(store.dates[1], 30)
    assert not store.snapshot(t).chain
    fit = VgCalibrator(store, CalibrationConfig(grid=FINE)).params_at(t)
    assert not fit.stale
    assert fit.fitted_at == t
    assert fit.sigma == pytest.approx(0.15, rel=0.1)

    with pytest.raises(InsufficientDataError):
        VgCalibrator(store, CalibrationConfig(grid=FINE, max_staleness=0)).params_at(t)


def vg_snapshot(build_store, truth, noise=0.0, spread=0.0, seed=0):
    """Monday-open chain priced by ``truth``; mids jittered by ``noise`` and quoted ``spread`` wide."""
    cal = build_store().calendar
    tau = cal.year_fraction(Timestamp(MONDAY, 0), EXPIRY)
    strikes = np.arange(3840.0, 4161.0, 10.0)
    rng = np.random.default_rng(seed)
    quotes = []
    for right in Right:
        mids = vg_prices(4000.0, strikes, tau, 0.0, 0.0, right, truth, n_points=2 ** 14)
        mids = mids * (1.0 + noise * rng.standard_normal(len(mids)))
        for strike, mid in zip(strikes, mids):
            key = OptionKey(EXPIRY, float(strike), right)
            quotes.append((0, key, mid * (1 - spread / 2), mid * (1 + spread / 2)))
    store = build_store(quotes)
    return store.snapshot(Timestamp(MONDAY, 0)), store.calendar


@pytest.mark.slow
def test_recovers_random_ground_truths(build_store):
    rng = np.random.default_rng(17)
    recovered = 0
    for _ in range(100):
        truth = VgParams(rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.5), rng.uniform(-0.3, -0.05))
        snapshot, cal = vg_snapshot(build_store, truth)
        fit = calibrate(snapshot, cfg=CalibrationConfig(grid=FINE), calendar=cal)
        recovered += all(abs(f - t) <= 0.01 * abs(t) for f, t in zip(fit.as_tuple(), truth.as_tuple()))
    assert recovered >= 95


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_noisy_quotes_keep_sigma(build_store, seed):
    truth = VgParams(0.15, 0.2, -0.1)
    snapshot, cal = vg_snapshot(build_store, truth, noise=0.001, spread=0.002, seed=seed)
    fit = calibrate(snapshot, cfg=CalibrationConfig(grid=FINE), calendar=cal)
    assert fit.sigma == pytest.approx(0.15, rel=0.05)


def test_calibration_is_deterministic(build_store):
    snapshot, cal = vg_snapshot(build_store, VgParams(0.18, 0.3, -0.15))
    cfg = CalibrationConfig(grid=FINE)
    assert calibrate(snapshot, cfg=cfg, calendar=cal) == calibrate(snapshot, cfg=cfg, calendar=cal)
