"""Least-squares fitting of Variance-Gamma parameters to option-chain snapshots."""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import least_squares
from tqdm import tqdm

from bsm import implied_vol
from errors import (
    CalibrationError,
    GridError,
    InsufficientDataError,
    InvalidInputError,
    NumericError,
    VolWriterError,
)
from market_data import (
    DEFAULT_MAX_STALENESS,
    MarketSnapshot,
    MarketStore,
    OptionInputs,
    OptionQuote,
    Timestamp,
    TradingCalendar,
)
from variance_gamma import PricingGrid, VgParams, martingale_margin, resolve_points, vg_prices

logger = logging.getLogger(__name__)

DEFAULT_NU = 0.2
DEFAULT_THETA = -0.1
PENALTY = 1e6


@dataclass(frozen=True)
class CalibrationConfig:
    refit_interval: int = 30
    max_staleness: int = DEFAULT_MAX_STALENESS
    sigma_bounds: Tuple[float, float] = (0.01, 2.0)
    nu_bounds: Tuple[float, float] = (1e-4, 5.0)
    theta_bounds: Tuple[float, float] = (-2.0, 2.0)
    max_iterations: int = 200
    tolerance: float = 1e-10
    min_bid: float = 0.0
    min_mid: float = 0.05
    moneyness_window: float = 0.15
    min_quotes: int = 5
    grid: PricingGrid = field(default_factory=PricingGrid)

    def __post_init__(self) -> None:
        if self.refit_interval <= 0:
            raise InvalidInputError(f"refit_interval must be positive, got {self.refit_interval}")
        if self.max_staleness < 0:
            raise InvalidInputError(f"max_staleness must be non-negative, got {self.max_staleness}")
        for name, (lo, hi) in (("sigma", self.sigma_bounds), ("nu", self.nu_bounds), ("theta", self.theta_bounds)):
            if not lo < hi:
                raise InvalidInputError(f"{name} bounds must satisfy lower < upper, got ({lo}, {hi})")
        if self.sigma_bounds[0] <= 0 or self.nu_bounds[0] <= 0:
            raise InvalidInputError("sigma and nu bounds must be positive")
        if self.min_quotes < 1 or self.max_iterations < 1:
            raise InvalidInputError("min_quotes and max_iterations must be positive")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.sigma_bounds[0], self.nu_bounds[0], self.theta_bounds[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.sigma_bounds[1], self.nu_bounds[1], self.theta_bounds[1]])


@dataclass
class _Slice:
    tau: float
    strikes: np.ndarray
    rights: list
    mids: np.ndarray
    n_points: int = 0


def calibration_schedule(calendar: TradingCalendar, interval: int) -> List[int]:
    """Refit minutes 0, interval, 2*interval, ... strictly inside one session."""
    if interval <= 0:
        raise InvalidInputError(f"refit interval must be positive, got {interval}")
    return list(range(0, calendar.session_length, interval))


def filter_quotes(snapshot: MarketSnapshot, cfg: CalibrationConfig,
                  calendar: TradingCalendar) -> Dict[float, List[OptionQuote]]:
    """Quotes that enter the fit, grouped by year fraction to expiry."""
    spot = snapshot.spot
    groups: Dict[float, List[OptionQuote]] = {}
    for key in sorted(snapshot.chain):
        quote = snapshot.chain[key]
        tau = calendar.year_fraction(snapshot.t, key.expiry)
        if tau <= 0 or quote.bar.bid <= cfg.min_bid or quote.mid < cfg.min_mid:
            continue
        if abs(math.log(key.strike / spot)) > cfg.moneyness_window:
            continue
        groups.setdefault(tau, []).append(quote)
    return groups


def _atm_vol(snapshot: MarketSnapshot, groups: Dict[float, List[OptionQuote]]) -> Optional[float]:
    tau = min(groups)
    quote = min(groups[tau], key=lambda q: (abs(q.key.strike - snapshot.spot), q.key.strike, q.key.right.value))
    inp = OptionInputs(snapshot.spot, quote.key.strike, tau, snapshot.risk_free, snapshot.div_yield, quote.key.right)
    try:
        return implied_vol(quote.mid, inp)
    except NumericError as e:
        logger.debug(f"ATM implied vol unavailable for the default start: {e}")
        return None


def default_start(snapshot: MarketSnapshot, groups: Dict[float, List[OptionQuote]],
                  cfg: CalibrationConfig) -> np.ndarray:
    sigma = _atm_vol(snapshot, groups) or 0.2
    x0 = np.array([sigma, DEFAULT_NU, DEFAULT_THETA])
    return _inside(x0, cfg)


def _inside(x: np.ndarray, cfg: CalibrationConfig) -> np.ndarray:
    lo, hi = cfg.lower, cfg.upper
    pad = 1e-6 * (hi - lo)
    x = np.clip(np.asarray(x, dtype=float), lo + pad, hi - pad)
    while martingale_margin(*x) <= 0 and x[1] > lo[1] + pad[1]:
        x[1] = max(0.5 * x[1], lo[1] + pad[1])
    return x


def _residuals(x: np.ndarray, snapshot: MarketSnapshot, slices: Sequence[_Slice], grid: PricingGrid) -> np.ndarray:
    size = sum(len(s.mids) for s in slices)
    if martingale_margin(*x) <= 1e-12:
        return np.full(size, PENALTY)
    p = VgParams(*x)
    out = []
    for s in slices:
        try:
            model = vg_prices(snapshot.spot, s.strikes, s.tau, snapshot.risk_free, snapshot.div_yield,
                              s.rights, p, grid, n_points=s.n_points)
        except NumericError:
            return np.full(size, PENALTY)
        out.append(model - s.mids)
    res = np.concatenate(out)
    return res if np.all(np.isfinite(res)) else np.full(size, PENALTY)


def _build_slices(snapshot: MarketSnapshot, groups: Dict[float, List[OptionQuote]], x0: np.ndarray,
                  grid: PricingGrid) -> List[_Slice]:
    p0 = VgParams(*x0)
    slices = []
    for tau in sorted(groups):
        quotes = groups[tau]
        strikes = np.array([q.key.strike for q in quotes])
        s = _Slice(tau, strikes, [q.key.right for q in quotes], np.array([q.mid for q in quotes]))
        try:
            s.n_points = resolve_points(snapshot.spot, float(strikes.max()), tau, snapshot.risk_free,
                                        snapshot.div_yield, p0, grid)
        except GridError:
            s.n_points = grid.max_points
        slices.append(s)
    return slices


def objective(params: VgParams, snapshot: MarketSnapshot, cfg: CalibrationConfig = CalibrationConfig(),
              calendar: Optional[TradingCalendar] = None) -> float:
    """Sum of squared price errors over the filtered chain."""
    calendar = TradingCalendar(()) if calendar is None else calendar
    groups = filter_quotes(snapshot, cfg, calendar)
    x = np.array(params.as_tuple())
    slices = _build_slices(snapshot, groups, _inside(x, cfg), cfg.grid)
    return float(np.sum(_residuals(x, snapshot, slices, cfg.grid) ** 2))


def calibrate(snapshot: MarketSnapshot, warm_start: Optional[VgParams] = None,
              cfg: CalibrationConfig = CalibrationConfig(), calendar: Optional[TradingCalendar] = None) -> VgParams:
    """Fit (sigma, nu, theta) to the snapshot's option mids by bounded least squares.

    Args:
        snapshot: Chain to fit.
        warm_start: Previous fit; also the fallback when the optimiser fails.
        cfg: Bounds, tolerances and quote filter.
        calendar: Clock for time to expiry; business-day counting when omitted.

    Returns:
        VgParams: Fitted parameters stamped with the snapshot time and objective value,
        or ``warm_start`` flagged stale if the optimiser failed.

    Raises:
        InsufficientDataError: Fewer than ``cfg.min_quotes`` quotes pass the filter.
        CalibrationError: The optimiser failed and there is no warm start to fall back to.
    """
    calendar = TradingCalendar(()) if calendar is None else calendar
    groups = filter_quotes(snapshot, cfg, calendar)
    n_quotes = sum(len(v) for v in groups.values())
    if n_quotes < cfg.min_quotes:
        raise InsufficientDataError(f"{n_quotes} quotes pass the calibration filter at {snapshot.t}, "
                                    f"need {cfg.min_quotes}")

    x0 = _inside(warm_start.as_tuple(), cfg) if warm_start is not None else default_start(snapshot, groups, cfg)
    slices = _build_slices(snapshot, groups, x0, cfg.grid)
    start_obj = float(np.sum(_residuals(x0, snapshot, slices, cfg.grid) ** 2))
    try:
        result = least_squares(_residuals, x0, args=(snapshot, slices, cfg.grid), bounds=(cfg.lower, cfg.upper),
                               method="trf", ftol=cfg.tolerance, xtol=cfg.tolerance, gtol=cfg.tolerance,
                               max_nfev=cfg.max_iterations, x_scale="jac")
        x = result.x
        obj = float(2.0 * result.cost)
        if not np.all(np.isfinite(x)) or not math.isfinite(obj) or martingale_margin(*x) <= 0:
            raise CalibrationError(f"optimiser returned an invalid point {x}")
    except (ValueError, VolWriterError) as e:
        if warm_start is None:
            raise CalibrationError(f"calibration failed at {snapshot.t}: {e}") from e
        logger.warning(f"Calibration failed at {snapshot.t}, keeping previous parameters: {e}")
        return warm_start.mark_stale()

    if obj > start_obj:
        x, obj = x0, start_obj
    params = VgParams(float(x[0]), float(x[1]), float(x[2]), fitted_at=snapshot.t, objective_value=obj)
    logger.debug(f"Calibrated at {snapshot.t}: sigma={params.sigma:.5f} nu={params.nu:.5f} "
                 f"theta={params.theta:.5f} objective={obj:.3e} ({n_quotes} quotes, {result.nfev} evaluations)")
    return params


class VgCalibrator:
    """Serves the latest fitted parameters on the refit schedule, fitting lazily in time order."""

    def __init__(self, store: MarketStore, cfg: CalibrationConfig = CalibrationConfig(),
                 initial: Optional[VgParams] = None) -> None:
        self.store = store
        self.cfg = cfg
        self.schedule = calibration_schedule(store.calendar, cfg.refit_interval)
        self._cache: Dict[Tuple, VgParams] = {}
        self._last = initial

    def refit_time(self, t: Timestamp) -> Timestamp:
        idx = int(np.searchsorted(self.schedule, t.minute, side="right")) - 1
        return Timestamp(t.date, self.schedule[max(idx, 0)])

    def params_at(self, t: Timestamp) -> VgParams:
        anchor = self.refit_time(t)
        cached = self._cache.get(anchor)
        if cached is not None:
            return cached
        snapshot = self.store.snapshot(anchor, self.cfg.max_staleness)
        try:
            params = calibrate(snapshot, self._last, self.cfg, self.store.calendar)
        except InsufficientDataError as e:
            if self._last is None:
                raise
            logger.warning(f"Skipping refit at {anchor}: {e}")
            params = self._last.mark_stale()
        if not params.stale:
            logger.info(f"Refit at {anchor}: sigma={params.sigma:.4f} nu={params.nu:.4f} theta={params.theta:.4f}")
        self._cache[anchor] = params
        self._last = replace(params, stale=False)
        return params


def calibrate_store(store: MarketStore, cfg: CalibrationConfig = CalibrationConfig(),
                    progress: bool = False) -> List[Tuple[Timestamp, VgParams]]:
    """Fit every scheduled minute of every session, each fit warm-started from the previous one."""
    calibrator = VgCalibrator(store, cfg)
    fits = []
    for d in tqdm(store.dates, desc="Calibrating", unit="session", disable=not progress):
        for minute in calibrator.schedule:
            t = Timestamp(d, minute)
            fits.append((t, calibrator.params_at(t)))
    return fits


def write_params_csv(fits: Sequence[Tuple[Timestamp, VgParams]], path: Union[str, Path]) -> Path:
    """Write the fitted-parameter series as date,minute,sigma,nu,theta,objective."""
    rows = [{"date": t.date.isoformat(), "minute": t.minute,
             "sigma": repr(p.sigma), "nu": repr(p.nu), "theta": repr(p.theta),
             "objective": "" if p.objective_value is None or p.stale else repr(p.objective_value)}
            for t, p in fits]
    path = Path(path)
    pd.DataFrame(rows, columns=["date", "minute", "sigma", "nu", "theta", "objective"]).to_csv(
        path, index=False, lineterminator="\n")
    return path
