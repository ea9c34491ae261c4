"""Performance and risk statistics of equity curves and daily return series."""
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from backtest import EquityCurve
from errors import MetricError
from market_data import MarketStore

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
PERCENTILES = (0.10, 0.25, 0.50, 0.75, 0.90)

Curve = Union[EquityCurve, Sequence[float], np.ndarray]


def _values(curve: Curve) -> np.ndarray:
    values = curve.values if isinstance(curve, EquityCurve) else curve
    return np.asarray(values, dtype=float)


def daily_returns(curve: Curve) -> np.ndarray:
    """Simple returns r_i = (p_i - p_{i-1}) / p_{i-1}."""
    p = _values(curve)
    if len(p) < 2:
        raise MetricError("daily returns need at least two equity values")
    if np.any(p <= 0):
        raise MetricError(f"equity must stay positive, minimum was {p.min():.6g}")
    return (p[1:] - p[:-1]) / p[:-1]


def arc(r: Sequence[float]) -> float:
    """Annualised compounded return (prod(1 + r))^(252/n) - 1."""
    r = np.asarray(r, dtype=float)
    if len(r) == 0:
        raise MetricError("aRC of an empty series")
    return float(np.prod(1.0 + r) ** (TRADING_DAYS / len(r)) - 1.0)


def asd(r: Sequence[float]) -> float:
    """Annualised sample standard deviation."""
    r = np.asarray(r, dtype=float)
    if len(r) < 2:
        raise MetricError("aSD needs at least two returns")
    return float(np.std(r, ddof=1) * math.sqrt(TRADING_DAYS))


def max_drawdown(curve: Curve) -> Tuple[float, Tuple[int, int]]:
    """Largest (p_x - p_y) / p_x over x <= y, with the (x, y) indices that attain it."""
    p = _values(curve)
    if len(p) == 0:
        raise MetricError("drawdown of an empty curve")
    peak_idx = 0
    best, pair = 0.0, (0, 0)
    for i in range(1, len(p)):
        if p[i] > p[peak_idx]:
            peak_idx = i
            continue
        dd = (p[peak_idx] - p[i]) / p[peak_idx]
        if dd > best:
            best, pair = dd, (peak_idx, i)
    return float(best), pair


def max_loss_duration(curve: Curve) -> float:
    """Longest time in years from a running maximum to the first session strictly above it.

    Sessions at or below the running maximum extend the stretch, so flat equity counts as
    time under water. A new high on the very next session is no loss. A stretch still open
    at the end runs to session n, one past the last index.
    """
    p = _values(curve)
    if len(p) == 0:
        raise MetricError("loss duration of an empty curve")
    peak, peak_idx, longest = p[0], 0, 0
    for i in range(1, len(p)):
        if p[i] > peak:
            if i - peak_idx > 1:
                longest = max(longest, i - peak_idx)
            peak, peak_idx = p[i], i
    if peak_idx < len(p) - 1:
        longest = max(longest, len(p) - peak_idx)
    return longest / TRADING_DAYS


def information_ratios(arc_value: Optional[float], asd_value: Optional[float], md: Optional[float],
                       mld: Optional[float]) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """IR = aRC/aSD, IR** = IR*sign(aRC)*aRC/MD, IR*** = aRC^3/(aSD*MD*MLD)*1000.

    Each ratio is None when its denominator is zero or an input is missing.
    """
    if arc_value is None or asd_value is None or asd_value <= 0:
        return None, None, None
    ir = arc_value / asd_value
    if md is None or md <= 0:
        return ir, None, None
    ir2 = ir * np.sign(arc_value) * arc_value / md
    ir3 = None
    if mld is not None and mld > 0:
        ir3 = arc_value ** 3 / (asd_value * md * mld) * 1000.0
    return float(ir), float(ir2), None if ir3 is None else float(ir3)


def _order_statistic(sorted_r: np.ndarray, q: float) -> Tuple[int, float]:
    k = max(int(math.ceil(q * len(sorted_r) - 1e-9)), 1)
    return k, float(sorted_r[k - 1])


def var_cvar(r: Sequence[float], alpha: float = 0.05) -> Tuple[float, float]:
    """Historical VaR (lower order statistic at ceil(alpha n)) and CVaR (mean of the k lowest).

    Both are signed returns, so losses are negative and cvar <= var.
    """
    r = np.sort(np.asarray(r, dtype=float))
    if len(r) < 20:
        raise MetricError(f"VaR needs at least 20 returns, got {len(r)}")
    if not 0 < alpha < 1:
        raise MetricError(f"alpha must lie in (0, 1), got {alpha}")
    k, var = _order_statistic(r, alpha)
    return var, float(np.mean(r[:k]))


@dataclass(frozen=True)
class SummaryStats:
    """Descriptive block of a return series. Kurtosis is the plain fourth standardised moment."""
    mean: float
    std: Optional[float]
    var: float
    min: float
    p10: float
    p25: float
    p50: float
    p75: float
    p90: float
    max: float
    skew: Optional[float]
    kurtosis: Optional[float]


def summary_stats(r: Sequence[float]) -> SummaryStats:
    r = np.asarray(r, dtype=float)
    if len(r) < 4:
        raise MetricError(f"summary statistics need at least 4 returns, got {len(r)}")
    s = np.sort(r)
    var = float(np.var(r, ddof=1))
    flat = var == 0.0 or float(np.ptp(r)) == 0.0
    pct = [_order_statistic(s, q)[1] for q in PERCENTILES]
    return SummaryStats(
        mean=float(np.mean(r)),
        std=None if flat else math.sqrt(var),
        var=0.0 if flat else var,
        min=float(s[0]),
        p10=pct[0], p25=pct[1], p50=pct[2], p75=pct[3], p90=pct[4],
        max=float(s[-1]),
        skew=None if flat else float(stats.skew(r, bias=False)),
        kurtosis=None if flat else float(stats.kurtosis(r, fisher=False, bias=True)),
    )


def underlying_close_returns(store: MarketStore) -> np.ndarray:
    """Daily returns of the index close mid."""
    L = store.calendar.session_length
    closes = store.underlying_mid[L - 1::L]
    return daily_returns(closes)


@dataclass(frozen=True)
class MetricsReport:
    arc: Optional[float] = None
    asd: Optional[float] = None
    md: Optional[float] = None
    mld: Optional[float] = None
    ir: Optional[float] = None
    ir2: Optional[float] = None
    ir3: Optional[float] = None
    var95: Optional[float] = None
    cvar95: Optional[float] = None
    mean: Optional[float] = None
    std: Optional[float] = None
    min: Optional[float] = None
    p10: Optional[float] = None
    p25: Optional[float] = None
    p50: Optional[float] = None
    p75: Optional[float] = None
    p90: Optional[float] = None
    max: Optional[float] = None
    skew: Optional[float] = None
    kurtosis: Optional[float] = None

    @classmethod
    def from_curve(cls, curve: Curve) -> "MetricsReport":
        """Every metric of the curve; a metric that is undefined for it is left as None."""
        def attempt(fn, *args):
            try:
                return fn(*args)
            except MetricError as e:
                logger.debug(f"{fn.__name__} undefined: {e}")
                return None

        r = attempt(daily_returns, curve)
        if r is None:
            return cls()
        a, s = attempt(arc, r), attempt(asd, r)
        md = attempt(max_drawdown, curve)
        md = md[0] if md is not None else None
        mld = attempt(max_loss_duration, curve)
        ir, ir2, ir3 = information_ratios(a, s, md, mld)
        tail = attempt(var_cvar, r) or (None, None)
        summary = attempt(summary_stats, r)
        extra = {} if summary is None else {k: v for k, v in asdict(summary).items() if k != "var"}
        return cls(arc=a, asd=s, md=md, mld=mld, ir=ir, ir2=ir2, ir3=ir3,
                   var95=tail[0], cvar95=tail[1], **extra)

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path
