"""Time-indexed market data: quotes, snapshots, the trading calendar and CSV IO."""
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import (
    CrossedQuoteError,
    DataError,
    InvalidInputError,
    MalformedRowError,
    StaleDataError,
    UnsortedDataError,
)

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
DEFAULT_SESSION_LENGTH = 390
DEFAULT_MAX_STALENESS = 30

UNDERLYING_FILE = "underlying.csv"
OPTIONS_FILE = "options.csv"
VIX_FILE = "vix.csv"
RATES_FILE = "rates.csv"

UNDERLYING_COLUMNS = ["date", "minute", "open", "high", "low", "close", "bid", "ask"]
OPTIONS_COLUMNS = ["date", "minute", "expiry", "strike", "right", "bid", "ask"]
VIX_COLUMNS = ["date", "close"]
RATES_COLUMNS = ["date", "risk_free", "div_yield"]


class Right(str, Enum):
    CALL = "C"
    PUT = "P"

    @property
    def sign(self) -> int:
        return 1 if self is Right.CALL else -1


@dataclass(frozen=True, order=True)
class Timestamp:
    date: date
    minute: int

    def __str__(self) -> str:
        return f"{self.date.isoformat()}@{self.minute}"


@dataclass(frozen=True)
class QuoteBar:
    """Bid/ask quote with optional OHLC bar fields."""
    bid: float
    ask: float
    open: Optional[float] = None
    high: Optional[float] = None
    low: Optional[float] = None
    close: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bid) and math.isfinite(self.ask)):
            raise InvalidInputError(f"non-finite quote bid={self.bid} ask={self.ask}")
        if self.bid > self.ask:
            raise CrossedQuoteError(f"crossed quote: bid {self.bid} > ask {self.ask}")
        if self.bid < 0:
            raise InvalidInputError(f"negative bid {self.bid}")
        bars = (self.open, self.high, self.low, self.close)
        if all(v is not None for v in bars):
            lo, hi = min(self.open, self.close), max(self.open, self.close)
            if not (self.low <= lo and hi <= self.high):
                raise InvalidInputError(f"inconsistent bar o={self.open} h={self.high} l={self.low} c={self.close}")

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0

    @property
    def half_spread(self) -> float:
        return (self.ask - self.bid) / 2.0


@dataclass(frozen=True, order=True)
class OptionKey:
    expiry: date
    strike: float
    right: Right

    def __post_init__(self) -> None:
        if not self.strike > 0:
            raise InvalidInputError(f"strike must be positive, got {self.strike}")

    def payoff(self, spot: float) -> float:
        if self.right is Right.CALL:
            return max(spot - self.strike, 0.0)
        return max(self.strike - spot, 0.0)

    def __str__(self) -> str:
        return f"{self.expiry.isoformat()}:{self.strike:g}{self.right.value}"


@dataclass(frozen=True)
class OptionQuote:
    key: OptionKey
    bar: QuoteBar
    t: Timestamp
    last_iv: Optional[float] = None

    def __post_init__(self) -> None:
        if self.last_iv is not None and not 0 < self.last_iv <= 5:
            raise InvalidInputError(f"implied vol {self.last_iv} outside (0, 5]")

    @property
    def mid(self) -> float:
        return self.bar.mid


@dataclass(frozen=True)
class MarketSnapshot:
    """Every quote visible at one timestamp. ``chain`` is a read-only mapping."""
    t: Timestamp
    underlying: QuoteBar
    chain: Mapping[OptionKey, OptionQuote]
    vix_close: float
    risk_free: float
    div_yield: float

    def __post_init__(self) -> None:
        if not self.vix_close > 0:
            raise DataError(f"VIX close must be positive at {self.t}, got {self.vix_close}")
        if not isinstance(self.chain, MappingProxyType):
            object.__setattr__(self, "chain", MappingProxyType(dict(self.chain)))

    @property
    def spot(self) -> float:
        return self.underlying.mid

    def expiries(self) -> List[date]:
        return sorted({k.expiry for k in self.chain})

    def strikes(self, expiry: date, right: Optional[Right] = None) -> List[float]:
        return sorted({k.strike for k in self.chain
                       if k.expiry == expiry and (right is None or k.right is right)})


@dataclass(frozen=True)
class OptionInputs:
    """Contract and market inputs shared by the pricing engines (volatility excluded)."""
    spot: float
    strike: float
    tau: float
    rate: float = 0.0
    div: float = 0.0
    right: Right = Right.CALL

    def with_spot(self, spot: float) -> "OptionInputs":
        return OptionInputs(spot, self.strike, self.tau, self.rate, self.div, self.right)

    def with_right(self, right: Right) -> "OptionInputs":
        return OptionInputs(self.spot, self.strike, self.tau, self.rate, self.div, right)


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered trading sessions with a fixed number of minutes each."""
    dates: Tuple[date, ...]
    session_length: int = DEFAULT_SESSION_LENGTH
    settlement_minute: Optional[int] = None
    _index: Dict[date, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dates = tuple(self.dates)
        object.__setattr__(self, "dates", dates)
        if self.session_length <= 0:
            raise InvalidInputError(f"session_length must be positive, got {self.session_length}")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise UnsortedDataError("calendar dates must be strictly increasing")
        if self.settlement_minute is None:
            object.__setattr__(self, "settlement_minute", self.session_length - 1)
        if not 0 <= self.settlement_minute < self.session_length:
            raise InvalidInputError(f"settlement_minute {self.settlement_minute} outside the session")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(dates)})

    @classmethod
    def business_days(cls, start: date, n_days: int, session_length: int = DEFAULT_SESSION_LENGTH,
                      settlement_minute: Optional[int] = None) -> "TradingCalendar":
        dates = tuple(d.date() for d in pd.bdate_range(start=start, periods=n_days))
        return cls(dates, session_length, settlement_minute)

    def __len__(self) -> int:
        return len(self.dates)

    def __iter__(self) -> Iterator[date]:
        return iter(self.dates)

    def __contains__(self, d: date) -> bool:
        return d in self._index

    def index(self, d: date) -> int:
        try:
            return self._index[d]
        except KeyError:
            raise DataError(f"{d} is not a trading session") from None

    @property
    def n_minutes(self) -> int:
        return len(self.dates) * self.session_length

    def minute_index(self, t: Timestamp) -> int:
        if not 0 <= t.minute < self.session_length:
            raise DataError(f"minute {t.minute} outside session of {self.session_length}")
        return self.index(t.date) * self.session_length + t.minute

    def timestamp(self, i: int) -> Timestamp:
        day, minute = divmod(int(i), self.session_length)
        return Timestamp(self.dates[day], minute)

    def sessions_between(self, start: date, end: date) -> int:
        """Number of sessions after ``start`` up to and including ``end``."""
        if start in self._index and end in self._index:
            return self._index[end] - self._index[start]
        return int(np.busday_count(start, end))

    def year_fraction(self, t: Timestamp, expiry: date) -> float:
        """Trading-minute time from ``t`` to the settlement minute of ``expiry``.

        Returns 0 once the settlement minute has passed.
        """
        minutes = (self.sessions_between(t.date, expiry) * self.session_length
                   + self.settlement_minute - t.minute)
        return max(minutes, 0) / (TRADING_DAYS * self.session_length)


class DailySeries:
    """Daily values forward-filled onto any later date."""

    def __init__(self, dates: Sequence[date], values: np.ndarray, name: str) -> None:
        self.dates = np.asarray(dates, dtype="datetime64[D]")
        self.values = np.asarray(values, dtype=float)
        self.name = name
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if np.any(np.diff(self.dates.astype(np.int64)) <= 0):
            raise UnsortedDataError(f"{name} dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.dates)

    def _pos(self, d: date) -> int:
        return int(np.searchsorted(self.dates, np.datetime64(d, "D"), side="right")) - 1

    def at(self, d: date) -> np.ndarray:
        pos = self._pos(d)
        if pos < 0:
            raise DataError(f"no {self.name} value on or before {d}")
        return self.values[pos]

    def before(self, d: date) -> np.ndarray:
        """All values strictly before ``d`` (first column)."""
        end = int(np.searchsorted(self.dates, np.datetime64(d, "D"), side="left"))
        return self.values[:end, 0]

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, DailySeries) and np.array_equal(self.dates, other.dates)
                and np.array_equal(self.values, other.values))


class MarketStore:
    """Immutable columnar store of minute quotes answering snapshot and staleness lookups.

    Underlying rows cover every calendar minute. Option rows are sparse and sorted by
    minute index; a missing option minute is simply absent from that minute's chain.
    """

    def __init__(self, calendar: TradingCalendar, underlying: np.ndarray, option_keys: Sequence[OptionKey],
                 opt_minute: np.ndarray, opt_key_id: np.ndarray, opt_bid: np.ndarray, opt_ask: np.ndarray,
                 vix: DailySeries, rates: DailySeries) -> None:
        self.calendar = calendar
        self.underlying = np.asarray(underlying, dtype=float)
        if self.underlying.shape != (calendar.n_minutes, 6):
            raise DataError(f"underlying shape {self.underlying.shape} does not match calendar "
                            f"({calendar.n_minutes} minutes)")
        self.option_keys = list(option_keys)
        self._key_id = {k: i for i, k in enumerate(self.option_keys)}
        self.opt_minute = np.asarray(opt_minute, dtype=np.int64)
        self.opt_key_id = np.asarray(opt_key_id, dtype=np.int64)
        self.opt_bid = np.asarray(opt_bid, dtype=float)
        self.opt_ask = np.asarray(opt_ask, dtype=float)
        if np.any(np.diff(self.opt_minute) < 0):
            raise UnsortedDataError("option rows are not sorted by timestamp")
        if np.any(self.opt_bid > self.opt_ask):
            raise CrossedQuoteError("option quote with bid > ask")
        self.vix = vix
        self.rates = rates
        for arr in (self.underlying, self.opt_minute, self.opt_key_id, self.opt_bid, self.opt_ask):
            arr.setflags(write=False)

        order = np.argsort(self.opt_key_id, kind="stable")
        bounds = np.searchsorted(self.opt_key_id[order], np.arange(len(self.option_keys) + 1))
        self._key_rows = [order[bounds[i]:bounds[i + 1]] for i in range(len(self.option_keys))]
        self._key_minutes = [self.opt_minute[rows] for rows in self._key_rows]
        self._by_expiry: Dict[date, List[int]] = {}
        for i, k in enumerate(self.option_keys):
            self._by_expiry.setdefault(k.expiry, []).append(i)

    def __len__(self) -> int:
        return self.calendar.n_minutes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarketStore):
            return NotImplemented
        return (self.calendar == other.calendar
                and np.array_equal(self.underlying, other.underlying)
                and self.option_rows() == other.option_rows()
                and self.vix == other.vix and self.rates == other.rates)

    def option_rows(self) -> List[Tuple[int, OptionKey, float, float]]:
        return [(int(m), self.option_keys[k], float(b), float(a))
                for m, k, b, a in zip(self.opt_minute, self.opt_key_id, self.opt_bid, self.opt_ask)]

    @property
    def dates(self) -> Tuple[date, ...]:
        return self.calendar.dates

    @property
    def underlying_mid(self) -> np.ndarray:
        return (self.underlying[:, 4] + self.underlying[:, 5]) / 2.0

    def minute_index(self, t: Timestamp) -> int:
        return self.calendar.minute_index(t)

    def timestamp(self, i: int) -> Timestamp:
        return self.calendar.timestamp(i)

    def underlying_bar(self, t: Union[Timestamp, int]) -> QuoteBar:
        i = t if isinstance(t, (int, np.integer)) else self.minute_index(t)
        o, h, l, c, b, a = self.underlying[i]
        return QuoteBar(bid=b, ask=a, open=o, high=h, low=l, close=c)

    def expiries(self) -> List[date]:
        return sorted(self._by_expiry)

    def keys_for_expiry(self, expiry: date) -> List[OptionKey]:
        return [self.option_keys[i] for i in self._by_expiry.get(expiry, [])]

    def vix_close(self, d: date) -> float:
        return float(self.vix.at(d)[0])

    def vix_history(self, d: date) -> np.ndarray:
        """Daily VIX closes strictly before ``d``."""
        return self.vix.before(d)

    def rate_and_yield(self, d: date) -> Tuple[float, float]:
        rf, q = self.rates.at(d)
        return float(rf), float(q)

    def snapshot(self, t: Timestamp, max_staleness: int = 0) -> MarketSnapshot:
        """Quotes visible at ``t``.

        With ``max_staleness`` 0 the chain holds only quotes stamped exactly ``t``; otherwise
        every unexpired contract's last quote no older than ``max_staleness`` minutes.
        """
        i = self.minute_index(t)
        chain = {}
        if max_staleness > 0:
            for expiry, ids in sorted(self._by_expiry.items()):
                if expiry < t.date:
                    continue
                for kid in ids:
                    key = self.option_keys[kid]
                    try:
                        chain[key] = self.last_quote(key, t, max_staleness)
                    except StaleDataError:
                        continue
        else:
            lo, hi = np.searchsorted(self.opt_minute, [i, i + 1])
            for row in range(lo, hi):
                key = self.option_keys[self.opt_key_id[row]]
                if key in chain:
                    raise DataError(f"duplicate quote for {key} at {t}")
                chain[key] = OptionQuote(key, QuoteBar(float(self.opt_bid[row]), float(self.opt_ask[row])), t)
        rf, q = self.rate_and_yield(t.date)
        return MarketSnapshot(t, self.underlying_bar(i), MappingProxyType(chain),
                              self.vix_close(t.date), rf, q)

    def last_quote(self, key: OptionKey, t: Timestamp, max_staleness: int = DEFAULT_MAX_STALENESS) -> OptionQuote:
        """Most recent quote for ``key`` at or before ``t``.

        Args:
            key: Contract to look up.
            t: Query time; must lie inside the store.
            max_staleness: Maximum age of the quote in minutes.

        Returns:
            OptionQuote: The quote, stamped with the time it was observed.

        Raises:
            StaleDataError: If no quote exists within ``max_staleness`` minutes.
        """
        i = self.minute_index(t)
        kid = self._key_id.get(key)
        if kid is None:
            raise StaleDataError(f"no quotes at all for {key}")
        minutes = self._key_minutes[kid]
        pos = int(np.searchsorted(minutes, i, side="right")) - 1
        if pos < 0 or i - minutes[pos] > max_staleness:
            age = "never quoted" if pos < 0 else f"last quote {i - minutes[pos]} minutes old"
            raise StaleDataError(f"stale data for {key} at {t}: {age} (max {max_staleness})")
        row = self._key_rows[kid][pos]
        return OptionQuote(key, QuoteBar(float(self.opt_bid[row]), float(self.opt_ask[row])),
                           self.timestamp(int(minutes[pos])))


def _parse_column(df: pd.DataFrame, column: str, path: Path, kind: str) -> np.ndarray:
    raw = df[column].tolist()
    out = []
    for pos, text in enumerate(raw):
        try:
            if kind == "float":
                value = float(text)
                if not math.isfinite(value):
                    raise ValueError(text)
            elif kind == "int":
                value = int(text)
            else:
                value = date.fromisoformat(text.strip())
        except (TypeError, ValueError):
            raise MalformedRowError(path, pos + 2, f"bad {column} value {text!r}") from None
        out.append(value)
    if kind == "float":
        return np.array(out, dtype=float)
    if kind == "int":
        return np.array(out, dtype=np.int64)
    return np.array(out, dtype="datetime64[D]")


def _read_table(path: Path, columns: List[str], kinds: Dict[str, str]) -> Dict[str, np.ndarray]:
    if not path.exists():
        raise DataError(f"missing data file {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise MalformedRowError(path, 0, f"unreadable CSV: {e}") from None
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise MalformedRowError(path, 1, f"header is missing columns {missing}")
    return {c: _parse_column(df, c, path, kinds.get(c, "str")) if kinds.get(c) else df[c].to_numpy()
            for c in columns}


def _first_failure(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + 2


def _raw_order(dates: np.ndarray, minutes: np.ndarray, calendar: TradingCalendar) -> np.ndarray:
    return dates.astype(np.int64) * calendar.session_length + minutes


def _minute_positions(path: Path, dates: np.ndarray, minutes: np.ndarray,
                      calendar: TradingCalendar, keep: np.ndarray) -> np.ndarray:
    L = calendar.session_length
    bad = (minutes < 0) | (minutes >= L)
    if bad.any():
        line = _first_failure(bad)
        raise MalformedRowError(path, line, f"minute {minutes[line - 2]} outside [0, {L})")
    cal = np.array(calendar.dates, dtype="datetime64[D]")
    day = np.searchsorted(cal, dates)
    day = np.clip(day, 0, max(len(cal) - 1, 0))
    keep &= cal[day] == dates
    return day * L + minutes


def load_market_csv(directory: Union[str, Path], calendar: Optional[TradingCalendar] = None,
                    session_length: int = DEFAULT_SESSION_LENGTH) -> MarketStore:
    """Load the four market-data CSVs into a MarketStore.

    Args:
        directory: Folder holding underlying.csv, options.csv, vix.csv and rates.csv.
        calendar: Trading calendar; derived from the underlying dates when omitted.
        session_length: Minutes per session when the calendar is derived.

    Returns:
        MarketStore: Store covering every (date, minute) of the calendar.

    Raises:
        MalformedRowError: A row cannot be parsed (file and line are reported).
        CrossedQuoteError: A row has bid > ask.
        UnsortedDataError: Timestamps are not in ascending order.
        DataError: A calendar session has no underlying data at all.
    """
    directory = Path(directory)
    up = directory / UNDERLYING_FILE
    u = _read_table(up, UNDERLYING_COLUMNS, {"date": "date", "minute": "int", "open": "float", "high": "float",
                                             "low": "float", "close": "float", "bid": "float", "ask": "float"})
    if len(u["date"]) == 0:
        raise DataError(f"{up} has no data rows")
    if calendar is None:
        calendar = TradingCalendar(tuple(pd.Timestamp(d).date() for d in np.unique(u["date"])), session_length)

    keep = np.ones(len(u["date"]), dtype=bool)
    gi = _minute_positions(up, u["date"], u["minute"], calendar, keep)
    order_bad = np.diff(_raw_order(u["date"], u["minute"], calendar)) <= 0
    if order_bad.any():
        raise UnsortedDataError(f"{up}:{_first_failure(order_bad) + 1}: timestamps not strictly increasing")
    crossed = u["bid"] > u["ask"]
    if crossed.any():
        line = _first_failure(crossed)
        raise CrossedQuoteError(f"{up}:{line}: bid {u['bid'][line - 2]} > ask {u['ask'][line - 2]}")
    prices = np.column_stack([u[c] for c in ("open", "high", "low", "close", "bid", "ask")])
    nonpos = np.any(prices <= 0, axis=1)
    if nonpos.any():
        raise MalformedRowError(up, _first_failure(nonpos), "underlying prices must be positive")
    if (~keep).any():
        logger.debug(f"Ignoring {int((~keep).sum())} underlying rows outside the calendar")

    full = np.full((calendar.n_minutes, 6), np.nan)
    full[gi[keep]] = prices[keep]
    present = ~np.isnan(full[:, 0])
    sessions = present.reshape(len(calendar), calendar.session_length).any(axis=1)
    if not sessions.all():
        missing = [calendar.dates[i].isoformat() for i in np.flatnonzero(~sessions)]
        raise DataError(f"no underlying data for sessions: {', '.join(missing)}")
    if not present[0]:
        raise DataError(f"{up}: first minute of {calendar.dates[0]} is missing and cannot be forward-filled")
    gaps = int((~present).sum())
    if gaps:
        logger.warning(f"Forward-filling {gaps} missing underlying minutes")
        full = pd.DataFrame(full).ffill().to_numpy()

    op = directory / OPTIONS_FILE
    o = _read_table(op, OPTIONS_COLUMNS, {"date": "date", "minute": "int", "expiry": "date",
                                          "strike": "float", "bid": "float", "ask": "float"})
    okeep = np.ones(len(o["date"]), dtype=bool)
    ogi = _minute_positions(op, o["date"], o["minute"], calendar, okeep)
    order_bad = np.diff(_raw_order(o["date"], o["minute"], calendar)) < 0
    if order_bad.any():
        raise UnsortedDataError(f"{op}:{_first_failure(order_bad) + 1}: timestamps not sorted")
    crossed = o["bid"] > o["ask"]
    if crossed.any():
        line = _first_failure(crossed)
        raise CrossedQuoteError(f"{op}:{line}: bid {o['bid'][line - 2]} > ask {o['ask'][line - 2]}")
    bad = (o["bid"] < 0) | (o["strike"] <= 0) | (o["expiry"] < o["date"])
    if bad.any():
        raise MalformedRowError(op, _first_failure(bad), "negative bid, nonpositive strike or expired contract")

    keys: List[OptionKey] = []
    key_id: Dict[OptionKey, int] = {}
    ids = np.empty(len(ogi), dtype=np.int64)
    for pos, (expiry, strike, right) in enumerate(zip(o["expiry"], o["strike"], o["right"])):
        try:
            key = OptionKey(pd.Timestamp(expiry).date(), float(strike), Right(str(right).strip()))
        except ValueError:
            raise MalformedRowError(op, pos + 2, f"bad right {right!r}") from None
        kid = key_id.get(key)
        if kid is None:
            kid = key_id[key] = len(keys)
            keys.append(key)
        ids[pos] = kid
    dup = pd.DataFrame({"m": ogi[okeep], "k": ids[okeep]}).duplicated()
    if dup.any():
        raise DataError(f"{op}: duplicate quote for one contract at one minute "
                        f"(line {int(np.flatnonzero(okeep)[np.flatnonzero(dup.to_numpy())[0]]) + 2})")

    vp = directory / VIX_FILE
    v = _read_table(vp, VIX_COLUMNS, {"date": "date", "close": "float"})
    if np.any(v["close"] <= 0):
        raise MalformedRowError(vp, _first_failure(v["close"] <= 0), "VIX close must be positive")
    rp = directory / RATES_FILE
    r = _read_table(rp, RATES_COLUMNS, {"date": "date", "risk_free": "float", "div_yield": "float"})
    vix = DailySeries(v["date"], v["close"], "VIX")
    rates = DailySeries(r["date"], np.column_stack([r["risk_free"], r["div_yield"]]), "rates")
    vix.at(calendar.dates[0])
    rates.at(calendar.dates[0])

    store = MarketStore(calendar, full, keys, ogi[okeep], ids[okeep], o["bid"][okeep], o["ask"][okeep], vix, rates)
    logger.info(f"Loaded {len(calendar)} sessions, {len(keys)} contracts, {len(store.opt_minute)} option quotes "
                f"from {directory}")
    return store


def _fmt(values: Iterable[float]) -> List[str]:
    return [repr(float(v)) for v in values]


def write_market_csv(store: MarketStore, directory: Union[str, Path]) -> List[Path]:
    """Write the store in the four CSV schemas using shortest round-trip decimals."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cal = store.calendar
    L = cal.session_length
    day_str = [d.isoformat() for d in cal.dates]
    n = cal.n_minutes
    idx = np.arange(n)

    underlying = pd.DataFrame({"date": [day_str[i] for i in idx // L], "minute": idx % L})
    for j, col in enumerate(("open", "high", "low", "close", "bid", "ask")):
        underlying[col] = _fmt(store.underlying[:, j])

    keys = store.option_keys
    options = pd.DataFrame({
        "date": [day_str[i] for i in store.opt_minute // L],
        "minute": store.opt_minute % L,
        "expiry": [keys[k].expiry.isoformat() for k in store.opt_key_id],
        "strike": [repr(keys[k].strike) for k in store.opt_key_id],
        "right": [keys[k].right.value for k in store.opt_key_id],
        "bid": _fmt(store.opt_bid),
        "ask": _fmt(store.opt_ask),
    })
    vdates = [pd.Timestamp(d).date().isoformat() for d in store.vix.dates]
    vix = pd.DataFrame({"date": vdates, "close": _fmt(store.vix.values[:, 0])})
    rdates = [pd.Timestamp(d).date().isoformat() for d in store.rates.dates]
    rates = pd.DataFrame({"date": rdates, "risk_free": _fmt(store.rates.values[:, 0]),
                          "div_yield": _fmt(store.rates.values[:, 1])})

    paths = []
    for name, frame, cols in ((UNDERLYING_FILE, underlying, UNDERLYING_COLUMNS),
                              (OPTIONS_FILE, options, OPTIONS_COLUMNS),
                              (VIX_FILE, vix, VIX_COLUMNS), (RATES_FILE, rates, RATES_COLUMNS)):
        path = directory / name
        frame[cols].to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    logger.info(f"Wrote market data to {directory}")
    return paths
