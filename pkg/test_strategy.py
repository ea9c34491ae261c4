from datetime import date

import numpy as np
import pytest

from errors import DegenerateSizeError, InsufficientHistoryError, InvalidInputError, MissingExpiryError
from market_data import OptionKey, Right, Timestamp
from strategy import (
    Leg,
    LegSet,
    SizingRule,
    StrategyKind,
    StrategySpec,
    apply_size,
    delta_size,
    guarded_floor,
    select_strikes,
    vix_rank,
    vix_size,
)

MONDAY = date(2023, 1, 2)
EXPIRY = date(2023, 1, 9)


def chain_store(build_store, strikes, spot=4000.0, day=0, n_days=1):
    quotes = [(day * 60, OptionKey(EXPIRY, float(k), right), 1.0, 1.1) for k in strikes for right in Right]
    return build_store(quotes, spot=spot, n_days=n_days)


def strikes_of(legs):
    return {leg.key.right: leg.key.strike for leg in legs}


def test_strangle_snaps_to_listed_strikes(build_store):
    store = chain_store(build_store, np.arange(3800, 4201, 5))
    snapshot = store.snapshot(Timestamp(MONDAY, 0))
    legs = select_strikes(snapshot, StrategySpec(StrategyKind.SHORT_STRANGLE, 0.02, 7))
    assert strikes_of(legs) == {Right.CALL: 4080.0, Right.PUT: 3920.0}
    assert all(leg.quantity == -1 for leg in legs)
    assert legs.expiry == EXPIRY


def test_ties_round_calls_up_and_puts_down(build_store):
    store = chain_store(build_store, [4000, 4005], spot=4002.5)
    snapshot = store.snapshot(Timestamp(MONDAY, 0))
    call = select_strikes(snapshot, StrategySpec(StrategyKind.SHORT_CALL, 0.0, 7))
    put = select_strikes(snapshot, StrategySpec(StrategyKind.SHORT_PUT, 0.0, 7))
    straddle = select_strikes(snapshot, StrategySpec(StrategyKind.SHORT_STRADDLE, 0.0, 7))
    assert strikes_of(call) == {Right.CALL: 4005.0}
    assert strikes_of(put) == {Right.PUT: 4000.0}
    assert strikes_of(straddle) == {Right.CALL: 4005.0, Right.PUT: 4005.0}


def test_unlisted_expiry_is_an_error(build_store):
    store = chain_store(build_store, [3995, 4000, 4005], day=1, n_days=2)
    snapshot = store.snapshot(Timestamp(date(2023, 1, 3), 0))
    with pytest.raises(MissingExpiryError):
        select_strikes(snapshot, StrategySpec(StrategyKind.SHORT_PUT, 0.0, 7))


def test_strategy_spec_validation():
    with pytest.raises(InvalidInputError):
        StrategySpec(StrategyKind.SHORT_STRADDLE, 0.02)
    with pytest.raises(InvalidInputError):
        StrategySpec(StrategyKind.SHORT_STRANGLE, 0.0)
    with pytest.raises(InvalidInputError):
        SizingRule("vix", rho=0.0)
    assert StrategySpec("short_put").kind is StrategyKind.SHORT_PUT


def one_leg(strike=4000.0, right=Right.CALL):
    return LegSet(StrategyKind.SHORT_CALL if right is Right.CALL else StrategyKind.SHORT_PUT,
                  (Leg(OptionKey(EXPIRY, strike, right), -1),))


def test_delta_size_single_leg():
    assert delta_size(1_000_000, one_leg(), [0.5]) == 5
    assert delta_size(100_000, one_leg(), [0.5]) == 0


def test_delta_size_sums_both_legs():
    straddle = LegSet(StrategyKind.SHORT_STRADDLE, (Leg(OptionKey(EXPIRY, 4000.0, Right.CALL), -1),
                                                    Leg(OptionKey(EXPIRY, 4000.0, Right.PUT), -1)))
    assert delta_size(1_000_000, straddle, [0.5, -0.5]) == 2


def test_delta_size_rejects_zero_deltas():
    with pytest.raises(DegenerateSizeError):
        delta_size(1_000_000, one_leg(), [0.0])


def test_apply_size_shorts_every_leg():
    sized = apply_size(one_leg(), 7)
    assert [leg.quantity for leg in sized] == [-7]
    with pytest.raises(InvalidInputError):
        LegSet(StrategyKind.SHORT_CALL, (Leg(OptionKey(EXPIRY, 4000.0, Right.CALL), 3),))


def test_vix_rank_extremes():
    history = np.arange(252) + 10.0
    assert vix_rank(history, 1000.0) == 1.0
    assert vix_rank(history, 0.0) == 0.0


def test_vix_rank_counts_past_values():
    history = np.linspace(10, 35, 252)
    assert vix_rank(history, 22.5) == np.count_nonzero(history <= 22.5) / 252


def test_vix_rank_uses_only_the_window():
    history = np.concatenate([np.full(100, 50.0), np.linspace(10, 35, 252)])
    assert vix_rank(history, 40.0) == 1.0
    with pytest.raises(InsufficientHistoryError):
        vix_rank(np.ones(100), 1.0)


def test_vix_size():
    assert vix_size(1e6, 4000.0, 1.4, 0.5) == 175
    assert vix_size(1e6, 4000.0, 1.4, 1.0) == 0
    assert vix_size(0.0, 4000.0, 1.4, 0.2) == 0


def test_floor_forgives_only_rounding_error():
    assert guarded_floor(250 * 1.4 * 0.5) == 175
    assert guarded_floor(2.9999999995) == 2
    assert guarded_floor(3.0 - 1e-15) == 3
    assert guarded_floor(0.0) == 0
    assert delta_size(599_999.9999, one_leg(), [0.5]) == 2
