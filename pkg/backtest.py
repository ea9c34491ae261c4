"""Minute-resolution simulation of the weekly short-option programme."""
import logging
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from calibration import CalibrationConfig, VgCalibrator
from errors import ConfigError, DataError, DegenerateSizeError
from hedging import DeltaModel, HedgeKind, HedgeSchedule, hedge_order, make_delta_model, net_delta
from market_data import DEFAULT_MAX_STALENESS, MarketStore, Timestamp
from portfolio import (
    ETF,
    CommissionModel,
    Fill,
    FillModel,
    Order,
    PositionBook,
    Reason,
    TradeLog,
    etf_quote,
    settle_expiry,
)
from strategy import (
    LegSet,
    ModelKind,
    SizingKind,
    SizingRule,
    StrategySpec,
    apply_size,
    delta_size,
    select_strikes,
    vix_rank,
    vix_size,
)

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = ["date", "minute", "equity", "mtm_pnl", "trade_pnl", "fees"]


@dataclass(frozen=True)
class BacktestConfig:
    strategy: StrategySpec
    sizing: SizingRule
    hedge: HedgeSchedule = field(default_factory=lambda: HedgeSchedule(HedgeKind.NAKED))
    model: ModelKind = ModelKind.BSM
    initial_cash: float = 1_000_000.0
    etf_ratio: float = 0.1
    commission: CommissionModel = field(default_factory=CommissionModel)
    fill: FillModel = field(default_factory=FillModel)
    hedge_minute_before_close: int = 30
    multiplier: float = 100.0
    max_staleness: int = DEFAULT_MAX_STALENESS
    dividend_adjusted_delta: bool = False
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    start: Optional[date] = None
    end: Optional[date] = None
    record_minutes: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", ModelKind(self.model))
        if not self.initial_cash > 0:
            raise ConfigError(f"initial_cash must be positive, got {self.initial_cash}")
        if not self.etf_ratio > 0:
            raise ConfigError(f"etf_ratio must be positive, got {self.etf_ratio}")
        if not self.multiplier > 0:
            raise ConfigError(f"multiplier must be positive, got {self.multiplier}")
        if self.hedge_minute_before_close <= 0:
            raise ConfigError("hedge_minute_before_close must be positive")
        if self.max_staleness < 0:
            raise ConfigError("max_staleness must be non-negative")

    @property
    def sizing_model(self) -> ModelKind:
        return self.sizing.model or self.model

    @property
    def label(self) -> str:
        model = "-" if self.hedge.kind is HedgeKind.NAKED and self.sizing.kind is SizingKind.VIX else self.model.value
        otm = f"{self.strategy.otm_pct * 100:g}%"
        return f"{self.strategy.kind.value} {self.sizing.label} {model.upper()} {self.hedge.label} {otm}"


@dataclass(frozen=True, eq=False)
class EquityCurve:
    """Portfolio value at each session close."""
    dates: Tuple[date, ...]
    values: np.ndarray
    name: str = "equity"

    def __post_init__(self) -> None:
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.dates) != len(self.values):
            raise DataError("equity curve dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("equity curve dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, EquityCurve) and self.dates == other.dates
                and np.array_equal(self.values, other.values))

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": [d.isoformat() for d in self.dates],
                             "equity": [repr(float(v)) for v in self.values]})

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path], name: Optional[str] = None) -> "EquityCurve":
        path = Path(path)
        try:
            df = pd.read_csv(path, dtype=str, keep_default_na=False)
            dates = [date.fromisoformat(d) for d in df["date"]]
            values = [float(v) for v in df["equity"]]
        except (KeyError, ValueError, pd.errors.ParserError) as e:
            raise DataError(f"{path}: not an equity CSV (date,equity): {e}") from None
        return cls(tuple(dates), np.array(values), name or path.stem)


@dataclass
class BacktestResult:
    equity: EquityCurve
    trades: TradeLog
    hedge_checks: List[Tuple[Timestamp, float]] = field(default_factory=list)
    ledger: Optional[pd.DataFrame] = None

    def __iter__(self) -> Iterator:
        return iter((self.equity, self.trades))


def session_range(store: MarketStore, start: Optional[date], end: Optional[date]) -> List[date]:
    """Sessions in [start, end]; a range reaching past the data names the uncovered dates."""
    dates = store.dates
    start = start or dates[0]
    end = end or dates[-1]
    if start > end:
        raise ConfigError(f"start {start} is after end {end}")
    missing = []
    if start < dates[0]:
        missing += [d.date() for d in pd.bdate_range(start, dates[0] - timedelta(days=1))]
    if end > dates[-1]:
        missing += [d.date() for d in pd.bdate_range(dates[-1] + timedelta(days=1), end)]
    if missing:
        shown = ", ".join(d.isoformat() for d in missing[:5])
        more = f" and {len(missing) - 5} more" if len(missing) > 5 else ""
        raise DataError(f"requested range {start}..{end} is not covered by the data; missing sessions {shown}{more}")
    return [d for d in dates if start <= d <= end]


class Backtester:
    """Runs one configuration over one store.

    Each session processes, in minute order: the weekly open (on roll dates), the
    scheduled hedge, settlement of expiring legs, then the close mark.
    """

    def __init__(self, cfg: BacktestConfig, store: MarketStore) -> None:
        self.cfg = cfg
        self.store = store
        cal = store.calendar
        self.L = cal.session_length
        self.settlement_minute = cal.settlement_minute
        self.open_minute = self.L - cfg.hedge_minute_before_close
        if not 0 <= self.open_minute < self.L:
            raise ConfigError(f"hedge_minute_before_close={cfg.hedge_minute_before_close} "
                              f"falls outside a {self.L}-minute session")
        self.hedge_minutes = set(cfg.hedge.minutes(self.L, cfg.hedge_minute_before_close))
        self.beta = cfg.etf_ratio
        self.book = PositionBook(cash=cfg.initial_cash, multiplier=cfg.multiplier)
        self.trades = TradeLog()
        self.hedge_checks: List[Tuple[Timestamp, float]] = []
        self.next_roll: Optional[date] = None

        calibrator = None
        if ModelKind.VG in (cfg.model, cfg.sizing_model):
            calibrator = VgCalibrator(store, replace(cfg.calibration, max_staleness=cfg.max_staleness))
        self.hedge_model: Optional[DeltaModel] = None
        if cfg.hedge.kind is not HedgeKind.NAKED:
            self.hedge_model = self._model(cfg.model, calibrator)
        self.sizing_model: Optional[DeltaModel] = None
        if cfg.sizing.kind is SizingKind.DELTA:
            self.sizing_model = self._model(cfg.sizing_model, calibrator)

    def _model(self, kind: ModelKind, calibrator: Optional[VgCalibrator]) -> DeltaModel:
        return make_delta_model(kind, self.store, self.cfg.calibration, self.cfg.max_staleness,
                                self.cfg.dividend_adjusted_delta, calibrator)

    def _mid(self, instrument, t: Timestamp) -> float:
        if instrument == ETF:
            return self.beta * float(self.store.underlying_mid[self.store.minute_index(t)])
        return self.store.last_quote(instrument, t, self.cfg.max_staleness).mid

    def marked_value(self, t: Timestamp) -> float:
        mids = {key: self._mid(key, t) for key in self.book.legs}
        return self.book.marked_value(mids, self._mid(ETF, t))

    def open_position(self, t: Timestamp) -> List[Fill]:
        snapshot = self.store.snapshot(t, max_staleness=self.cfg.max_staleness)
        legs = select_strikes(snapshot, self.cfg.strategy)
        self.next_roll = legs.expiry
        pv = self.marked_value(t)
        if pv < 0:
            logger.warning(f"Portfolio value {pv:.2f} is negative at {t}; sizing from zero")
            pv = 0.0
        contracts = self.size(snapshot, legs, pv, t)
        if contracts == 0:
            logger.info(f"Sizing gave zero contracts at {t}; flat until {legs.expiry}")
            return []
        fills = []
        for leg in apply_size(legs, contracts):
            quote = snapshot.chain[leg.key].bar
            fills.append(self.book.execute(t, Order(leg.key, leg.quantity), quote, self.cfg.fill,
                                           self.cfg.commission, Reason.OPEN))
        logger.info(f"Opened {contracts} x {', '.join(str(k) for k in legs.keys)} at {t} (PV {pv:,.2f})")
        return fills

    def size(self, snapshot, legs: LegSet, pv: float, t: Timestamp) -> int:
        rule: SizingRule = self.cfg.sizing
        if rule.kind is SizingKind.DELTA:
            deltas = [self.sizing_model.delta(key, t) for key in legs.keys]
            try:
                return delta_size(pv, legs, deltas, self.cfg.multiplier)
            except DegenerateSizeError as e:
                logger.warning(f"{e} at {t}; staying flat")
                return 0
        rank = vix_rank(self.store.vix_history(t.date), snapshot.vix_close, rule.window)
        return vix_size(pv, snapshot.spot, rule.rho, rank)

    def hedge(self, t: Timestamp) -> List[Fill]:
        deltas = self.hedge_model.deltas(list(self.book.legs), t)
        order = hedge_order(self.book, deltas, self.beta)
        fills = []
        if order != 0:
            quote = etf_quote(self.store.underlying_bar(t), self.beta)
            fills.append(self.book.execute(t, Order(ETF, order), quote, self.cfg.fill,
                                           self.cfg.commission, Reason.HEDGE))
        self.hedge_checks.append((t, abs(net_delta(self.book, deltas, self.beta))))
        return fills

    def settle(self, t: Timestamp) -> List[Fill]:
        if not any(k.expiry <= t.date for k in self.book.legs):
            return []
        log = TradeLog()
        settle_expiry(self.book, self.store.snapshot(t), self.cfg.commission, log)
        return log.fills

    def step(self, t: Timestamp, roll: bool) -> List[Fill]:
        fills: List[Fill] = []
        if roll and t.minute == self.open_minute:
            fills += self.open_position(t)
        if t.minute in self.hedge_minutes:
            fills += self.hedge(t)
        if t.minute == self.settlement_minute:
            fills += self.settle(t)
        for f in fills:
            self.trades.append(f)
        return fills

    def run(self, progress: bool = False) -> BacktestResult:
        cfg = self.cfg
        sessions = session_range(self.store, cfg.start, cfg.end)
        events = sorted(self.hedge_minutes | {self.open_minute, self.settlement_minute, self.L - 1})
        minutes = range(self.L) if cfg.record_minutes else events
        closes = []
        ledger = []
        prev_equity = cfg.initial_cash
        prev_marks: Dict = {}
        prev_positions: Dict = {}
        for d in tqdm(sessions, desc=cfg.label, unit="session", disable=not progress):
            roll = self.next_roll is None or d >= self.next_roll
            for m in minutes:
                t = Timestamp(d, m)
                if cfg.record_minutes:
                    mtm = sum(q * (self._mid(k, t) - prev_marks[k]) * (1 if k == ETF else cfg.multiplier)
                              for k, q in prev_positions.items())
                fills = self.step(t, roll)
                if cfg.record_minutes:
                    trade_pnl = sum(f.size * (self._mid(f.instrument, t) - f.price)
                                    * (1 if f.instrument == ETF else cfg.multiplier) for f in fills)
                    fees = sum(f.fee for f in fills)
                    equity = self.marked_value(t)
                    ledger.append((d.isoformat(), m, equity, mtm, trade_pnl, fees))
                    prev_positions = dict(self.book.legs)
                    if self.book.etf_shares:
                        prev_positions[ETF] = self.book.etf_shares
                    prev_marks = {k: self._mid(k, t) for k in prev_positions}
                    prev_equity = equity
                if m == self.L - 1:
                    closes.append(prev_equity if cfg.record_minutes else self.marked_value(t))
        curve = EquityCurve(tuple(sessions), np.array(closes), cfg.label)
        frame = pd.DataFrame(ledger, columns=LEDGER_COLUMNS) if cfg.record_minutes else None
        logger.info(f"Backtest {cfg.label}: {len(sessions)} sessions, {len(self.trades)} fills, "
                    f"final equity {curve.final:,.2f}")
        return BacktestResult(curve, self.trades, self.hedge_checks, frame)


def run_backtest(cfg: BacktestConfig, store: MarketStore, progress: bool = False) -> BacktestResult:
    """Simulate ``cfg`` on ``store``; iterating the result yields (EquityCurve, TradeLog).

    Raises:
        StaleDataError: A decision minute needs a quote older than ``cfg.max_staleness``.
        DataError: The configured date range is not covered by the store.
    """
    return Backtester(cfg, store).run(progress)


def run_buy_and_hold(store: MarketStore, initial_cash: float = 1_000_000.0,
                     commission: CommissionModel = CommissionModel(), fill: FillModel = FillModel(),
                     beta: float = 0.1, start: Optional[date] = None, end: Optional[date] = None) -> BacktestResult:
    """Invest all cash in the ETF proxy at the first open and hold."""
    sessions = session_range(store, start, end)
    t0 = Timestamp(sessions[0], 0)
    quote = etf_quote(store.underlying_bar(t0), beta)
    price = fill.price(1, quote)
    shares = int(initial_cash // (price + commission.per_etf_share))
    while shares > 0 and shares * price + commission.fee(ETF, shares) > initial_cash:
        shares -= 1
    book = PositionBook(cash=initial_cash)
    trades = TradeLog()
    if shares:
        trades.append(book.execute(t0, Order(ETF, shares), quote, fill, commission, Reason.OPEN))
    mids = store.underlying_mid
    L = store.calendar.session_length
    closes = [book.cash + book.etf_shares * beta * float(mids[store.calendar.index(d) * L + L - 1])
              for d in sessions]
    return BacktestResult(EquityCurve(tuple(sessions), np.array(closes), "buy_and_hold"), trades)
