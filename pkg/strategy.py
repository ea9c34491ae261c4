"""Short option strategies, strike selection and position sizing."""
import logging
import math
from dataclasses import dataclass, replace
from datetime import timedelta
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from errors import DegenerateSizeError, InsufficientHistoryError, InvalidInputError, MissingExpiryError
from market_data import MarketSnapshot, OptionKey, Right

logger = logging.getLogger(__name__)

# relative slack for binary rounding such as 250 * 1.4 landing just under an integer
FLOOR_RTOL = 1e-12


class StrategyKind(str, Enum):
    SHORT_CALL = "short_call"
    SHORT_PUT = "short_put"
    SHORT_STRADDLE = "short_straddle"
    SHORT_STRANGLE = "short_strangle"

    @property
    def n_legs(self) -> int:
        return 1 if self in (StrategyKind.SHORT_CALL, StrategyKind.SHORT_PUT) else 2


class ModelKind(str, Enum):
    BSM = "bsm"
    VG = "vg"


class SizingKind(str, Enum):
    DELTA = "delta"
    VIX = "vix"


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    otm_pct: float = 0.0
    dte: int = 7

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if not 0 <= self.otm_pct < 1:
            raise InvalidInputError(f"otm_pct must lie in [0, 1), got {self.otm_pct}")
        if self.kind is StrategyKind.SHORT_STRADDLE and self.otm_pct != 0:
            raise InvalidInputError("a straddle is at the money; otm_pct must be 0")
        if self.kind is StrategyKind.SHORT_STRANGLE and self.otm_pct <= 0:
            raise InvalidInputError("a strangle needs otm_pct > 0")
        if self.dte < 1:
            raise InvalidInputError(f"dte must be at least 1, got {self.dte}")


@dataclass(frozen=True)
class SizingRule:
    """Delta-based sizing against a pricing model, or VIX-rank sizing with risk factor rho."""
    kind: SizingKind
    model: Optional[ModelKind] = None
    rho: float = 1.4
    window: int = 252

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SizingKind(self.kind))
        if self.model is not None:
            object.__setattr__(self, "model", ModelKind(self.model))
        if not self.rho > 0:
            raise InvalidInputError(f"rho must be positive, got {self.rho}")
        if self.window < 2:
            raise InvalidInputError(f"window must be at least 2, got {self.window}")

    @property
    def label(self) -> str:
        return "DELTA" if self.kind is SizingKind.DELTA else "VIX"


@dataclass(frozen=True)
class Leg:
    key: OptionKey
    quantity: int


@dataclass(frozen=True)
class LegSet:
    kind: StrategyKind
    legs: Tuple[Leg, ...]

    def __post_init__(self) -> None:
        if len(self.legs) != self.kind.n_legs:
            raise InvalidInputError(f"{self.kind.value} needs {self.kind.n_legs} legs, got {len(self.legs)}")
        if any(leg.quantity > 0 for leg in self.legs):
            raise InvalidInputError("only short legs are allowed")
        if len(self.legs) == 2:
            a, b = self.legs[0].key, self.legs[1].key
            if a.expiry != b.expiry:
                raise InvalidInputError("spread legs must share the expiry")
            if self.kind is StrategyKind.SHORT_STRADDLE and a.strike != b.strike:
                raise InvalidInputError("straddle legs must share the strike")

    def __iter__(self) -> Iterator[Leg]:
        return iter(self.legs)

    def __len__(self) -> int:
        return len(self.legs)

    @property
    def expiry(self):
        return self.legs[0].key.expiry

    @property
    def keys(self) -> Tuple[OptionKey, ...]:
        return tuple(leg.key for leg in self.legs)


def nearest_strike(strikes: Sequence[float], target: float, upward: bool) -> float:
    """Listed strike closest to ``target``; exact ties go up when ``upward`` else down."""
    if not strikes:
        raise MissingExpiryError("no strikes listed")
    tie = (lambda k: -k) if upward else (lambda k: k)
    return min(strikes, key=lambda k: (abs(k - target), tie(k)))


def select_strikes(snapshot: MarketSnapshot, spec: StrategySpec) -> LegSet:
    """Pick the legs of ``spec`` from the snapshot chain with placeholder quantity -1.

    Raises:
        MissingExpiryError: No listing expires exactly ``spec.dte`` calendar days after the trade date.
    """
    expiry = snapshot.t.date + timedelta(days=spec.dte)
    calls = snapshot.strikes(expiry, Right.CALL)
    puts = snapshot.strikes(expiry, Right.PUT)
    if not calls and not puts:
        raise MissingExpiryError(f"no {spec.dte}DTE expiry ({expiry}) listed at {snapshot.t}")
    spot = snapshot.spot
    kind = spec.kind
    legs = []
    if kind is StrategyKind.SHORT_STRADDLE:
        both = sorted(set(calls) & set(puts))
        if not both:
            raise MissingExpiryError(f"no strike listed for both rights at {expiry}")
        k = nearest_strike(both, spot, upward=True)
        legs = [Leg(OptionKey(expiry, k, Right.CALL), -1), Leg(OptionKey(expiry, k, Right.PUT), -1)]
    else:
        if kind in (StrategyKind.SHORT_CALL, StrategyKind.SHORT_STRANGLE):
            if not calls:
                raise MissingExpiryError(f"no calls listed at {expiry}")
            legs.append(Leg(OptionKey(expiry, nearest_strike(calls, spot * (1 + spec.otm_pct), True), Right.CALL), -1))
        if kind in (StrategyKind.SHORT_PUT, StrategyKind.SHORT_STRANGLE):
            if not puts:
                raise MissingExpiryError(f"no puts listed at {expiry}")
            legs.append(Leg(OptionKey(expiry, nearest_strike(puts, spot * (1 - spec.otm_pct), False), Right.PUT), -1))
    return LegSet(kind, tuple(legs))


def apply_size(legs: LegSet, contracts: int) -> LegSet:
    """Every leg short ``contracts`` contracts."""
    if contracts < 0:
        raise InvalidInputError(f"contract count must be non-negative, got {contracts}")
    return replace(legs, legs=tuple(Leg(leg.key, -int(contracts)) for leg in legs))


def guarded_floor(x: float) -> int:
    """floor(x) that forgives a relative shortfall of FLOOR_RTOL and nothing larger."""
    return int(math.floor(x * (1.0 + FLOOR_RTOL))) if x > 0 else int(math.floor(x))


def delta_size(pv: float, legs: LegSet, deltas: Sequence[float], multiplier: float = 100) -> int:
    """Contracts Q = floor(PV / sum(K_i |delta_i| M)).

    Raises:
        DegenerateSizeError: If every leg delta is zero.
    """
    if pv < 0:
        raise InvalidInputError(f"portfolio value must be non-negative, got {pv}")
    if len(deltas) != len(legs):
        raise InvalidInputError("one delta per leg is required")
    exposure = sum(leg.key.strike * abs(d) * multiplier for leg, d in zip(legs, deltas))
    if exposure <= 0:
        raise DegenerateSizeError("all leg deltas are zero; delta sizing is undefined")
    return max(guarded_floor(pv / exposure), 0)


def vix_rank(history: Sequence[float], current: float, window: int = 252) -> float:
    """Fraction of the last ``window`` past closes at or below ``current``."""
    history = np.asarray(history, dtype=float)
    if len(history) < window:
        raise InsufficientHistoryError(f"VIX rank needs {window} past closes, have {len(history)}")
    recent = history[-window:]
    return float(np.count_nonzero(recent <= current)) / window


def vix_size(pv: float, spot: float, rho: float, rank: float) -> int:
    """Contracts Q = floor((PV / S) * rho * (1 - rank))."""
    if not spot > 0:
        raise InvalidInputError(f"index level must be positive, got {spot}")
    if pv < 0:
        raise InvalidInputError(f"portfolio value must be non-negative, got {pv}")
    if not 0 <= rank <= 1:
        raise InvalidInputError(f"rank must lie in [0, 1], got {rank}")
    return max(guarded_floor(pv / spot * rho * (1.0 - rank)), 0)
