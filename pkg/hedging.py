"""Delta models and ETF hedging decisions."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional

from bsm import bsm_delta, implied_vol, intrinsic_delta
from calibration import CalibrationConfig, VgCalibrator
from errors import ConfigError, NumericError
from market_data import DEFAULT_MAX_STALENESS, MarketSnapshot, MarketStore, OptionInputs, OptionKey, Timestamp
from portfolio import PositionBook
from strategy import ModelKind
from variance_gamma import PricingGrid, vg_delta

logger = logging.getLogger(__name__)


class HedgeKind(str, Enum):
    NAKED = "naked"
    INTERVAL = "interval"
    SINGLE = "single"


@dataclass(frozen=True)
class HedgeSchedule:
    """When hedges happen: never, every ``interval`` minutes from the open, or once a day."""
    kind: HedgeKind
    interval: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", HedgeKind(self.kind))
        if self.kind is HedgeKind.INTERVAL and (self.interval is None or self.interval <= 0):
            raise ConfigError(f"interval hedging needs a positive interval, got {self.interval}")

    @classmethod
    def parse(cls, text: str) -> "HedgeSchedule":
        value = str(text).strip().lower()
        if value in ("naked", "none", "-"):
            return cls(HedgeKind.NAKED)
        if value in ("single", "1d", "1 day", "daily"):
            return cls(HedgeKind.SINGLE)
        value = value.removesuffix("min").strip()
        try:
            return cls(HedgeKind.INTERVAL, int(value))
        except ValueError:
            raise ConfigError(f"unknown hedge schedule {text!r}; use naked, single or a minute interval") from None

    @property
    def label(self) -> str:
        if self.kind is HedgeKind.NAKED:
            return "NAKED"
        if self.kind is HedgeKind.SINGLE:
            return "1 DAY"
        return f"{self.interval} MIN"

    def minutes(self, session_length: int, minutes_before_close: int = 30) -> List[int]:
        """Hedge minutes within one session."""
        if self.kind is HedgeKind.NAKED:
            return []
        if self.kind is HedgeKind.SINGLE:
            return [session_length - minutes_before_close]
        return list(range(0, session_length, self.interval))


class DeltaModel:
    """Per-contract deltas at a decision time."""

    def __init__(self, store: MarketStore) -> None:
        self.store = store

    def inputs(self, key: OptionKey, t: Timestamp) -> OptionInputs:
        i = self.store.minute_index(t)
        rf, q = self.store.rate_and_yield(t.date)
        tau = self.store.calendar.year_fraction(t, key.expiry)
        return OptionInputs(float(self.store.underlying_mid[i]), key.strike, tau, rf, q, key.right)

    def delta(self, key: OptionKey, t: Timestamp) -> float:
        raise NotImplementedError

    def deltas(self, keys: Iterable[OptionKey], t: Timestamp) -> Dict[OptionKey, float]:
        return {key: self.delta(key, t) for key in keys}


class BsmDeltaModel(DeltaModel):
    """BSM delta at the current spot using the implied vol of the previous minute's quote."""

    def __init__(self, store: MarketStore, max_staleness: int = DEFAULT_MAX_STALENESS,
                 dividend_adjusted: bool = False) -> None:
        super().__init__(store)
        self.max_staleness = max_staleness
        self.dividend_adjusted = dividend_adjusted

    def last_iv(self, key: OptionKey, t: Timestamp) -> Optional[float]:
        i = self.store.minute_index(t)
        if i == 0:
            return None
        prev = self.store.timestamp(i - 1)
        quote = self.store.last_quote(key, prev, self.max_staleness)
        inp = self.inputs(key, prev)
        if inp.tau <= 0:
            return None
        try:
            return implied_vol(quote.mid, inp)
        except NumericError as e:
            logger.warning(f"No implied vol for {key} at {prev} (mid {quote.mid:.4f}): {e}; using intrinsic delta")
            return None

    def delta(self, key: OptionKey, t: Timestamp) -> float:
        inp = self.inputs(key, t)
        sigma = self.last_iv(key, t)
        if sigma is None or inp.tau <= 0:
            return intrinsic_delta(inp)
        return bsm_delta(inp, sigma, self.dividend_adjusted)


class VgDeltaModel(DeltaModel):
    """Finite-difference VG delta under the latest calibrated parameters."""

    def __init__(self, store: MarketStore, calibrator: VgCalibrator, grid: Optional[PricingGrid] = None) -> None:
        super().__init__(store)
        self.calibrator = calibrator
        self.grid = grid or calibrator.cfg.grid

    def delta(self, key: OptionKey, t: Timestamp) -> float:
        inp = self.inputs(key, t)
        if inp.tau <= 0:
            return intrinsic_delta(inp)
        return vg_delta(inp, self.calibrator.params_at(t), self.grid)


def make_delta_model(kind: ModelKind, store: MarketStore, calibration: CalibrationConfig = CalibrationConfig(),
                     max_staleness: int = DEFAULT_MAX_STALENESS, dividend_adjusted: bool = False,
                     calibrator: Optional[VgCalibrator] = None) -> DeltaModel:
    if ModelKind(kind) is ModelKind.BSM:
        return BsmDeltaModel(store, max_staleness, dividend_adjusted)
    return VgDeltaModel(store, calibrator or VgCalibrator(store, calibration), calibration.grid)


def net_delta(book: PositionBook, deltas: Mapping[OptionKey, float], beta: float) -> float:
    """Dollars per index point: sum(q_i * delta_i * M) + shares * beta."""
    exposure = book.etf_shares * beta
    for key, q in book.legs.items():
        exposure += q * deltas[key] * book.multiplier
    return exposure


def hedge_order(book: PositionBook, deltas: Mapping[OptionKey, float], beta: float) -> int:
    return -int(round(net_delta(book, deltas, beta) / beta))


def hedge_step(book: PositionBook, snapshot: MarketSnapshot, model: DeltaModel, beta: float) -> int:
    """Signed ETF shares that bring the book's net delta within half a share of zero."""
    deltas = model.deltas(list(book.legs), snapshot.t)
    return hedge_order(book, deltas, beta)
