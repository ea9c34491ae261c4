"""Positions, executions and the trade log."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import pandas as pd

from errors import DataError, InvalidInputError
from market_data import MarketSnapshot, OptionKey, QuoteBar, Timestamp

logger = logging.getLogger(__name__)

ETF = "ETF"
TRADE_COLUMNS = ["date", "minute", "instrument", "side", "size", "price", "fee", "reason"]

Instrument = Union[OptionKey, str]


class Reason(str, Enum):
    OPEN = "open"
    SETTLE = "settle"
    HEDGE = "hedge"


@dataclass(frozen=True)
class CommissionModel:
    """Per-unit commissions with a per-order minimum."""
    per_option_contract: float = 0.65
    option_order_minimum: float = 1.00
    per_etf_share: float = 0.005
    etf_order_minimum: float = 1.00
    index_settlement_fee: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise InvalidInputError(f"commission {name} must be non-negative, got {value}")

    def fee(self, instrument: Instrument, size: int) -> float:
        if instrument == ETF:
            return max(self.etf_order_minimum, abs(size) * self.per_etf_share)
        return max(self.option_order_minimum, abs(size) * self.per_option_contract)


@dataclass(frozen=True)
class FillModel:
    """Executions pay ``spread_fraction`` of the half-spread away from mid."""
    spread_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.spread_fraction <= 1:
            raise InvalidInputError(f"spread_fraction must lie in [0, 1], got {self.spread_fraction}")

    def price(self, size: int, quote: QuoteBar) -> float:
        offset = self.spread_fraction * quote.half_spread
        return quote.mid + offset if size > 0 else quote.mid - offset


@dataclass(frozen=True)
class Order:
    instrument: Instrument
    size: int  # positive buys, negative sells


@dataclass(frozen=True)
class Fill:
    t: Timestamp
    instrument: Instrument
    size: int
    price: float
    fee: float
    reason: Reason

    @property
    def side(self) -> str:
        return "BUY" if self.size > 0 else "SELL"

    def row(self) -> dict:
        return {"date": self.t.date.isoformat(), "minute": self.t.minute, "instrument": str(self.instrument),
                "side": self.side, "size": abs(self.size), "price": repr(float(self.price)),
                "fee": repr(float(self.fee)), "reason": self.reason.value}


def apply_fill(order: Order, quote: Optional[QuoteBar], fill: FillModel = FillModel(),
               commission: CommissionModel = CommissionModel()):
    """Execution price and fee for ``order`` against ``quote``.

    Returns:
        tuple: (price, fee) where fee = max(order minimum, |size| * per-unit rate).

    Raises:
        DataError: Missing quote.
        InvalidInputError: Zero-size order.
    """
    if quote is None:
        raise DataError(f"no quote to fill {order.instrument}")
    if order.size == 0:
        raise InvalidInputError("cannot fill an empty order")
    return fill.price(order.size, quote), commission.fee(order.instrument, order.size)


def etf_quote(underlying: QuoteBar, beta: float) -> QuoteBar:
    """ETF proxy quote: beta times the index bid and ask."""
    return QuoteBar(beta * underlying.bid, beta * underlying.ask)


@dataclass
class PositionBook:
    cash: float
    legs: Dict[OptionKey, int] = field(default_factory=dict)
    etf_shares: int = 0
    multiplier: float = 100.0

    def marked_value(self, option_mids: Mapping[OptionKey, float], etf_mid: float) -> float:
        value = self.cash + self.etf_shares * etf_mid
        for key, q in self.legs.items():
            value += q * option_mids[key] * self.multiplier
        return value

    def book(self, fill: Fill) -> None:
        """Apply an executed fill to cash and positions."""
        if fill.instrument == ETF:
            self.cash -= fill.size * fill.price + fill.fee
            self.etf_shares += fill.size
            return
        self.cash -= fill.size * fill.price * self.multiplier + fill.fee
        q = self.legs.get(fill.instrument, 0) + fill.size
        if q:
            self.legs[fill.instrument] = q
        else:
            self.legs.pop(fill.instrument, None)

    def execute(self, t: Timestamp, order: Order, quote: QuoteBar, fill: FillModel,
                commission: CommissionModel, reason: Reason) -> Fill:
        price, fee = apply_fill(order, quote, fill, commission)
        done = Fill(t, order.instrument, order.size, price, fee, reason)
        self.book(done)
        return done


class TradeLog:
    """Ordered record of every fill."""

    def __init__(self) -> None:
        self.fills: List[Fill] = []

    def __len__(self) -> int:
        return len(self.fills)

    def __iter__(self):
        return iter(self.fills)

    def append(self, fill: Fill) -> None:
        self.fills.append(fill)

    def by_reason(self, reason: Reason) -> List[Fill]:
        return [f for f in self.fills if f.reason is reason]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([f.row() for f in self.fills], columns=TRADE_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


def settle_expiry(book: PositionBook, snapshot: MarketSnapshot, commission: CommissionModel = CommissionModel(),
                  log: Optional[TradeLog] = None) -> float:
    """Cash-settle every leg expiring on the snapshot date at the index close mid.

    Each leg pays q * M * payoff (shorts pay out when in the money) and leaves the book.

    Returns:
        float: Net cash change, settlement fees included.
    """
    spot = snapshot.spot
    before = book.cash
    for key in sorted(k for k in book.legs if k.expiry <= snapshot.t.date):
        q = book.legs[key]
        payoff = key.payoff(spot)
        fee = commission.index_settlement_fee * abs(q)
        # closing trade at the settlement value
        done = Fill(snapshot.t, key, -q, payoff, fee, Reason.SETTLE)
        book.book(done)
        if log is not None:
            log.append(done)
        logger.debug(f"Settled {q} x {key} at {spot:.2f}: payoff {payoff:.4f}")
    return book.cash - before
