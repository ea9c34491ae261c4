from datetime import date

import pytest

from errors import ConfigError
from hedging import (
    BsmDeltaModel,
    HedgeKind,
    HedgeSchedule,
    hedge_order,
    hedge_step,
    make_delta_model,
    net_delta,
)
from market_data import OptionKey, Right, Timestamp
from portfolio import PositionBook
from strategy import ModelKind

EXPIRY = date(2023, 1, 9)
CALL = OptionKey(EXPIRY, 4000.0, Right.CALL)
PUT = OptionKey(EXPIRY, 4000.0, Right.PUT)


def test_short_calls_are_hedged_with_etf_shares():
    book = PositionBook(cash=0.0, legs={CALL: -5})
    assert hedge_order(book, {CALL: 0.5}, 0.1) == 2500


def test_hedged_book_needs_no_order():
    book = PositionBook(cash=0.0, legs={CALL: -5}, etf_shares=2500)
    assert hedge_order(book, {CALL: 0.5}, 0.1) == 0
    assert net_delta(book, {CALL: 0.5}, 0.1) == pytest.approx(0.0)


def test_straddle_deltas_cancel():
    book = PositionBook(cash=0.0, legs={CALL: -3, PUT: -3})
    assert hedge_order(book, {CALL: 0.5, PUT: -0.5}, 0.1) == 0


def test_order_leaves_at_most_half_a_share_of_delta():
    book = PositionBook(cash=0.0, legs={CALL: -7, PUT: -4})
    deltas = {CALL: 0.4137, PUT: -0.6021}
    book.etf_shares += hedge_order(book, deltas, 0.1)
    assert abs(net_delta(book, deltas, 0.1)) <= 0.05 + 1e-12


@pytest.mark.parametrize("text, session, minutes", [
    ("130", 390, [0, 130, 260]),
    ("30min", 390, list(range(0, 390, 30))),
    ("single", 390, [360]),
    ("naked", 390, []),
    ("20", 60, [0, 20, 40]),
])
def test_schedule_minutes(text, session, minutes):
    assert HedgeSchedule.parse(text).minutes(session, 30) == minutes


def test_schedule_labels_and_errors():
    assert HedgeSchedule.parse("single").kind is HedgeKind.SINGLE
    assert HedgeSchedule.parse("130").label == "130 MIN"
    with pytest.raises(ConfigError):
        HedgeSchedule.parse("hourly")
    with pytest.raises(ConfigError):
        HedgeSchedule(HedgeKind.INTERVAL, 0)


def test_bsm_model_uses_previous_minute_implied_vol(make_market):
    store = make_market(iv_vol=0.0, spread=0.0)
    t = Timestamp(store.dates[0], 31)
    snapshot = store.snapshot(Timestamp(store.dates[0], 30))
    key = min((k for k in snapshot.chain if k.right is Right.CALL and k.expiry == date(2023, 1, 9)),
              key=lambda k: abs(k.strike - snapshot.spot))
    model = BsmDeltaModel(store)
    assert model.last_iv(key, t) == pytest.approx(0.2, abs=1e-8)
    assert 0.0 < model.delta(key, t) < 1.0


def test_first_minute_falls_back_to_intrinsic_delta(make_market):
    store = make_market()
    key = OptionKey(date(2023, 1, 9), 3900.0, Right.CALL)
    model = make_delta_model(ModelKind.BSM, store)
    assert model.delta(key, Timestamp(store.dates[0], 0)) == 1.0


def test_hedge_step_neutralises_a_live_book(make_market):
    store = make_market()
    t = Timestamp(store.dates[1], 20)
    snapshot = store.snapshot(t)
    keys = [k for k in snapshot.chain if k.expiry == date(2023, 1, 9) and k.strike in (3980.0, 4020.0)]
    book = PositionBook(cash=0.0, legs={k: -4 for k in keys})
    model = make_delta_model(ModelKind.BSM, store)
    book.etf_shares += hedge_step(book, snapshot, model, 0.1)
    assert abs(net_delta(book, model.deltas(list(book.legs), t), 0.1)) <= 0.05 + 1e-12
