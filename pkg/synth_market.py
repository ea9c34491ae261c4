"""Deterministic synthetic minute market: index path, weekly option chains, VIX proxy and rates."""
import logging
import math
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from bsm import black_scholes, implied_vol
from errors import ConfigError, InvalidInputError, NumericError
from market_data import (
    DEFAULT_SESSION_LENGTH,
    TRADING_DAYS,
    DailySeries,
    MarketStore,
    OptionInputs,
    OptionKey,
    Right,
    Timestamp,
    TradingCalendar,
)
from variance_gamma import PricingGrid, VgParams, sample_increments, vg_prices

logger = logging.getLogger(__name__)

VIX_TENOR_DAYS = 30
MIN_QUOTE_VOL = 0.01


class ProcessKind(str, Enum):
    GBM = "gbm"
    VG = "vg"


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic market.

    The index follows ``process`` (GBM with ``mu``/``sigma_real`` or VG with
    ``vg_sigma``/``vg_nu``/``vg_theta`` plus drift ``mu``). Options are quoted by
    ``quote_model``: BSM with ``iv_level`` and log-moneyness ``iv_skew``, or VG with
    ``quote_sigma``/``quote_nu``/``quote_theta``.
    """
    seed: int = 0
    n_days: int = 10
    start: date = date(2023, 1, 2)
    s0: float = 4000.0
    session_length: int = DEFAULT_SESSION_LENGTH
    process: ProcessKind = ProcessKind.GBM
    mu: float = 0.0
    sigma_real: float = 0.15
    vg_sigma: float = 0.15
    vg_nu: float = 0.2
    vg_theta: float = -0.1
    quote_model: ProcessKind = ProcessKind.GBM
    iv_level: float = 0.2
    iv_skew: float = 0.0
    quote_sigma: float = 0.15
    quote_nu: float = 0.2
    quote_theta: float = -0.1
    spread: float = 0.0
    underlying_spread: float = 0.0
    strike_spacing: float = 5.0
    strike_span: float = 0.05
    dte_list: Tuple[int, ...] = (7,)
    risk_free: float = 0.0
    div_yield: float = 0.0
    iv_vol: float = 0.0
    iv_persistence: float = 0.97
    warmup_days: int = 252
    quote_every: int = 1
    grid_points: int = 2 ** 12

    def __post_init__(self) -> None:
        object.__setattr__(self, "dte_list", tuple(sorted(int(d) for d in self.dte_list)))
        try:
            object.__setattr__(self, "process", ProcessKind(self.process))
            quote_model = "gbm" if str(getattr(self.quote_model, "value", self.quote_model)) == "bsm" else self.quote_model
            object.__setattr__(self, "quote_model", ProcessKind(quote_model))
        except ValueError as e:
            raise ConfigError(f"unknown model: {e}") from None
        checks = [
            (self.n_days >= 1, "n_days must be at least 1"),
            (self.s0 > 0, "s0 must be positive"),
            (self.session_length > 0, "session_length must be positive"),
            (self.iv_level > 0, "iv_level must be positive"),
            (0 <= self.spread < 1, "spread must lie in [0, 1)"),
            (0 <= self.underlying_spread < 1, "underlying_spread must lie in [0, 1)"),
            (self.strike_spacing > 0, "strike_spacing must be positive"),
            (self.strike_span > 0, "strike_span must be positive"),
            (7 in self.dte_list, "dte_list must include 7"),
            (all(d > 0 and d % 7 == 0 for d in self.dte_list), "dte_list entries must be whole weeks"),
            (self.sigma_real >= 0, "sigma_real must be non-negative"),
            (self.iv_vol >= 0, "iv_vol must be non-negative"),
            (0 <= self.iv_persistence < 1, "iv_persistence must lie in [0, 1)"),
            (self.warmup_days >= 0, "warmup_days must be non-negative"),
            (self.quote_every >= 1, "quote_every must be at least 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        try:
            if self.process is ProcessKind.VG:
                self.process_params()
            if self.quote_model is ProcessKind.VG:
                self.quote_params()
            PricingGrid(self.grid_points)
        except InvalidInputError as e:
            raise ConfigError(str(e)) from None

    def process_params(self) -> VgParams:
        return VgParams(self.vg_sigma, self.vg_nu, self.vg_theta)

    def quote_params(self, multiplier: float = 1.0) -> VgParams:
        return VgParams(self.quote_sigma * multiplier, self.quote_nu, self.quote_theta)


def _streams(seed: int, n_days: int) -> Tuple[np.random.Generator, List[np.random.Generator]]:
    children = np.random.SeedSequence(seed).spawn(n_days + 1)
    regime = np.random.Generator(np.random.Philox(children[0]))
    return regime, [np.random.Generator(np.random.Philox(c)) for c in children[1:]]


def _vol_multipliers(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """AR(1) log multiplier of the quote volatility, one per warmup and live session."""
    n = cfg.warmup_days + cfg.n_days
    shocks = rng.standard_normal(n)
    phi = cfg.iv_persistence
    scale = cfg.iv_vol * math.sqrt(1.0 - phi * phi)
    f = np.empty(n)
    level = 0.0
    for i in range(n):
        level = phi * level + scale * shocks[i]
        f[i] = level
    return np.exp(f)


def _minute_increments(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    L = cfg.session_length
    dt = 1.0 / (TRADING_DAYS * L)
    if cfg.process is ProcessKind.GBM:
        z = rng.standard_normal(L)
        return (cfg.mu - 0.5 * cfg.sigma_real ** 2) * dt + cfg.sigma_real * math.sqrt(dt) * z
    p = cfg.process_params()
    return (cfg.mu + p.omega) * dt + sample_increments(rng, dt, p, L)


class MarketGenerator:
    """Builds a MarketStore day by day from independent per-session random streams."""

    def __init__(self, cfg: GeneratorConfig, calendar: Optional[TradingCalendar] = None) -> None:
        self.cfg = cfg
        if calendar is None:
            calendar = TradingCalendar.business_days(cfg.start, cfg.n_days, cfg.session_length)
        self.calendar = calendar
        if len(self.calendar) != cfg.n_days:
            raise ConfigError(f"calendar has {len(self.calendar)} sessions but n_days={cfg.n_days}")
        if self.calendar.session_length != cfg.session_length:
            raise ConfigError("calendar session_length differs from the generator's")
        self.grid = PricingGrid(cfg.grid_points, max_points=max(cfg.grid_points, 2 ** 16))
        self.keys: List[OptionKey] = []
        self._key_id: Dict[OptionKey, int] = {}
        self._strikes: Dict[date, set] = {}

    def quote_vol(self, multiplier: float) -> float:
        """30-day at-the-money implied volatility of the quote model."""
        cfg = self.cfg
        if cfg.quote_model is ProcessKind.GBM:
            return cfg.iv_level * multiplier
        tau = VIX_TENOR_DAYS / 365.0
        inp = OptionInputs(100.0, 100.0, tau, cfg.risk_free, cfg.div_yield, Right.CALL)
        price = vg_prices(100.0, [100.0], tau, cfg.risk_free, cfg.div_yield, Right.CALL,
                          self._vg_params(multiplier), self.grid)[0]
        try:
            return implied_vol(float(price), inp)
        except NumericError as e:
            raise ConfigError(f"VG quote model has no 30-day implied volatility: {e}") from None

    def _vg_params(self, multiplier: float) -> VgParams:
        try:
            return self.cfg.quote_params(multiplier)
        except InvalidInputError as e:
            raise ConfigError(f"iv_vol pushes the VG quote parameters out of range: {e}") from None

    def listed_expiries(self, d: date) -> List[date]:
        first = self.calendar.dates[0]
        horizon = max(self.cfg.dte_list)
        weeks = (d - first).days // 7
        out = []
        for k in range(weeks, weeks + horizon // 7 + 2):
            expiry = first + timedelta(days=7 * k)
            if 0 <= (expiry - d).days <= horizon:
                out.append(expiry)
        return out

    def _key(self, key: OptionKey) -> int:
        kid = self._key_id.get(key)
        if kid is None:
            kid = self._key_id[key] = len(self.keys)
            self.keys.append(key)
        return kid

    def day_keys(self, d: date, spot_open: float) -> List[OptionKey]:
        cfg = self.cfg
        lo = math.ceil(spot_open * (1 - cfg.strike_span) / cfg.strike_spacing)
        hi = math.floor(spot_open * (1 + cfg.strike_span) / cfg.strike_spacing)
        fresh = {round(k * cfg.strike_spacing, 10) for k in range(lo, hi + 1)}
        keys = []
        for expiry in self.listed_expiries(d):
            strikes = self._strikes.setdefault(expiry, set())
            strikes |= fresh
            for strike in sorted(strikes):
                for right in (Right.CALL, Right.PUT):
                    keys.append(OptionKey(expiry, float(strike), right))
        return keys

    def option_mids(self, d: date, minutes: np.ndarray, spots: np.ndarray, keys: List[OptionKey],
                    multiplier: float) -> np.ndarray:
        """Model mids, shape (len(minutes), len(keys))."""
        cfg = self.cfg
        strikes = np.array([k.strike for k in keys])
        is_call = np.array([k.right is Right.CALL for k in keys])
        by_expiry = {e: np.array([self.calendar.year_fraction(Timestamp(d, int(m)), e) for m in minutes])
                     for e in sorted({k.expiry for k in keys})}
        taus = np.column_stack([by_expiry[k.expiry] for k in keys]) if keys else np.zeros((len(minutes), 0))
        s = spots[:, None]
        if cfg.quote_model is ProcessKind.GBM:
            vol = np.maximum(cfg.iv_level * multiplier + cfg.iv_skew * np.log(strikes[None, :] / s), MIN_QUOTE_VOL)
            return black_scholes(s, strikes[None, :], taus, cfg.risk_free, cfg.div_yield, vol, is_call[None, :])

        p = self._vg_params(multiplier)
        mids = np.maximum(np.where(is_call[None, :], s - strikes[None, :], strikes[None, :] - s), 0.0)
        expiries = np.array([k.expiry for k in keys])
        for row, spot in enumerate(spots):
            for expiry in sorted(set(expiries)):
                cols = np.flatnonzero(expiries == expiry)
                tau = taus[row, cols[0]]
                if tau <= 0:
                    continue
                rights = [keys[c].right for c in cols]
                mids[row, cols] = vg_prices(float(spot), strikes[cols], tau, cfg.risk_free, cfg.div_yield,
                                            rights, p, self.grid)
        return mids

    def generate(self, progress: bool = False) -> MarketStore:
        cfg = self.cfg
        cal = self.calendar
        L = cfg.session_length
        regime, day_streams = _streams(cfg.seed, cfg.n_days)
        multipliers = _vol_multipliers(cfg, regime)

        underlying = np.empty((cal.n_minutes, 6))
        opt_minute, opt_key, opt_bid, opt_ask = [], [], [], []
        quote_minutes = np.array(sorted(set(range(0, L, cfg.quote_every)) | {L - 1}))
        spot = cfg.s0
        for i, d in enumerate(tqdm(cal.dates, desc="Generating", unit="session", disable=not progress)):
            log_path = np.log(spot) + np.concatenate([[0.0], np.cumsum(_minute_increments(cfg, day_streams[i]))])
            path = np.exp(log_path)
            opens, closes = path[:-1], path[1:]
            rows = slice(i * L, (i + 1) * L)
            underlying[rows, 0] = opens
            underlying[rows, 1] = np.maximum(opens, closes)
            underlying[rows, 2] = np.minimum(opens, closes)
            underlying[rows, 3] = closes
            underlying[rows, 4] = closes * (1 - cfg.underlying_spread)
            underlying[rows, 5] = closes * (1 + cfg.underlying_spread)

            keys = self.day_keys(d, spot)
            ids = np.array([self._key(k) for k in keys], dtype=np.int64)
            mult = multipliers[cfg.warmup_days + i]
            mids = self.option_mids(d, quote_minutes, closes[quote_minutes], keys, mult)
            opt_minute.append(np.repeat(i * L + quote_minutes, len(keys)))
            opt_key.append(np.tile(ids, len(quote_minutes)))
            flat = mids.reshape(-1)
            opt_bid.append(flat * (1 - cfg.spread))
            opt_ask.append(flat * (1 + cfg.spread))
            spot = float(closes[-1])

        vix_dates, vix_values = self._vix(multipliers)
        rates = DailySeries(cal.dates, np.column_stack([np.full(len(cal), cfg.risk_free),
                                                        np.full(len(cal), cfg.div_yield)]), "rates")
        store = MarketStore(cal, underlying, self.keys, np.concatenate(opt_minute), np.concatenate(opt_key),
                            np.concatenate(opt_bid), np.concatenate(opt_ask),
                            DailySeries(vix_dates, vix_values, "VIX"), rates)
        logger.info(f"Generated {len(cal)} sessions from seed {cfg.seed}: {len(self.keys)} contracts, "
                    f"{len(store.opt_minute)} option quotes")
        return store

    def _vix(self, multipliers: np.ndarray) -> Tuple[List[date], np.ndarray]:
        cfg = self.cfg
        first = self.calendar.dates[0]
        warmup = []
        if cfg.warmup_days:
            warmup = [ts.date() for ts in pd.bdate_range(end=first - timedelta(days=1), periods=cfg.warmup_days)]
        dates = warmup + list(self.calendar.dates)
        cache: Dict[float, float] = {}
        values = []
        for m in multipliers:
            if m not in cache:
                cache[m] = 100.0 * self.quote_vol(float(m))
            values.append(cache[m])
        return dates, np.array(values)


def generate(cfg: GeneratorConfig, calendar: Optional[TradingCalendar] = None, progress: bool = False) -> MarketStore:
    """Synthetic store; the same config always yields bit-identical data."""
    return MarketGenerator(cfg, calendar).generate(progress)
