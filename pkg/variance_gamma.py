"""Variance-Gamma dynamics: characteristic exponent, cosine-series pricing, deltas and a Monte-Carlo oracle."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from errors import BranchCutError, GridError, InvalidInputError
from market_data import OptionInputs, Right, Timestamp

logger = logging.getLogger(__name__)

PRICE_FLOOR = 1e-10  # relative to spot
MIN_POINTS = 2 ** 8


@dataclass(frozen=True)
class VgParams:
    """Calibrated (sigma, nu, theta) triple plus the metadata of the fit that produced it."""
    sigma: float
    nu: float
    theta: float
    fitted_at: Optional[Timestamp] = None
    objective_value: Optional[float] = None
    stale: bool = False

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.sigma, self.nu, self.theta)):
            raise InvalidInputError(f"non-finite VG parameters {self.as_tuple()}")
        if self.sigma <= 0 or self.nu <= 0:
            raise InvalidInputError(f"VG sigma and nu must be positive, got {self.as_tuple()}")
        if martingale_margin(self.sigma, self.nu, self.theta) <= 0:
            raise InvalidInputError(f"no martingale correction for {self.as_tuple()}: 1 - theta*nu - sigma^2*nu/2 <= 0")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.sigma, self.nu, self.theta)

    @property
    def omega(self) -> float:
        return math.log1p(-self.theta * self.nu - 0.5 * self.sigma ** 2 * self.nu) / self.nu

    def mark_stale(self) -> "VgParams":
        return replace(self, stale=True)


def martingale_margin(sigma: float, nu: float, theta: float) -> float:
    return 1.0 - theta * nu - 0.5 * sigma * sigma * nu


@dataclass(frozen=True)
class PricingGrid:
    """Cosine-series discretisation.

    ``half_width`` of None picks the truncation range from the VG cumulants
    (``width_multiplier`` standard deviations each side).
    """
    n_points: int = 2 ** 12
    half_width: Optional[float] = None
    max_points: int = 2 ** 16
    width_multiplier: float = 10.0

    def __post_init__(self) -> None:
        if self.n_points < MIN_POINTS or self.n_points & (self.n_points - 1):
            raise InvalidInputError(f"n_points must be a power of two >= {MIN_POINTS}, got {self.n_points}")
        if self.half_width is not None and not self.half_width > 0:
            raise InvalidInputError(f"half_width must be positive, got {self.half_width}")
        if self.max_points < self.n_points:
            raise InvalidInputError("max_points must be at least n_points")


def vg_symbol(xi: Union[complex, np.ndarray], p: VgParams) -> Union[complex, np.ndarray]:
    """Levy exponent psi(xi) = -(1/nu) log(1 - i nu theta xi + nu sigma^2 xi^2 / 2).

    Raises:
        BranchCutError: If the log argument leaves the right half plane.
    """
    xi = np.asarray(xi, dtype=complex)
    z = -1j * p.nu * p.theta * xi + 0.5 * p.nu * p.sigma ** 2 * xi * xi
    if np.any(np.real(1.0 + z) <= 0):
        raise BranchCutError(f"VG symbol crosses the log branch cut for {p.as_tuple()}")
    out = -np.log1p(z) / p.nu
    return complex(out) if out.ndim == 0 else out


def convexity_corrected_symbol(xi: Union[complex, np.ndarray], p: VgParams) -> Union[complex, np.ndarray]:
    """psi_C(xi) = i omega xi + psi(xi), so that psi_C(-i) = 0."""
    xi_arr = np.asarray(xi, dtype=complex)
    out = 1j * p.omega * xi_arr + np.asarray(vg_symbol(xi_arr, p))
    return complex(out) if out.ndim == 0 else out


def characteristic_function(u: np.ndarray, tau: float, rate: float, div: float, p: VgParams) -> np.ndarray:
    """Characteristic function of log(S_tau / S_0) under the risk-neutral VG dynamics."""
    u = np.asarray(u, dtype=float)
    return np.exp(1j * u * (rate - div) * tau + tau * np.asarray(convexity_corrected_symbol(u, p)))


def cumulants(tau: float, rate: float, div: float, p: VgParams) -> Tuple[float, float, float]:
    s2, nu, th = p.sigma ** 2, p.nu, p.theta
    c1 = (rate - div + p.omega + th) * tau
    c2 = (s2 + nu * th * th) * tau
    c4 = 3.0 * (s2 * s2 * nu + 2.0 * th ** 4 * nu ** 3 + 4.0 * s2 * th * th * nu * nu) * tau
    return c1, c2, c4


def _half_width(tau: float, rate: float, div: float, p: VgParams, grid: PricingGrid) -> float:
    if grid.half_width is not None:
        return grid.half_width
    _, c2, c4 = cumulants(tau, rate, div, p)
    return grid.width_multiplier * math.sqrt(c2 + math.sqrt(c4))


def series_error(n_points: int, strike: float, half_width: float, tau: float, rate: float, div: float,
                 p: VgParams) -> float:
    """Bound on the cosine-series tail: kink coefficients decay like k^-2 and |phi| like u^(-2 tau/nu)."""
    width = 2.0 * half_width
    u_n = n_points * math.pi / width
    phi = abs(characteristic_function(np.array([u_n]), tau, rate, div, p)[0])
    return 2.0 * strike * width * phi / (math.pi ** 2 * n_points * (1.0 + 2.0 * tau / p.nu))


def resolve_points(spot: float, strike: float, tau: float, rate: float, div: float, p: VgParams,
                   grid: PricingGrid) -> int:
    """Smallest power-of-two point count meeting the price tolerance max(1e-4, 1e-5 S).

    Raises:
        GridError: If even ``grid.max_points`` misses the tolerance.
    """
    tol = max(1e-4, 1e-5 * spot)
    half = _half_width(tau, rate, div, p, grid)
    n = grid.n_points
    while series_error(n, strike, half, tau, rate, div, p) > tol:
        n *= 2
        if n > grid.max_points:
            suggested = n
            while series_error(suggested, strike, half, tau, rate, div, p) > tol and suggested < 2 ** 30:
                suggested *= 2
            raise GridError(f"{grid.max_points} points cannot price strike {strike} at tau={tau:.3g} "
                            f"within {tol:.2g}", suggested_points=suggested)
    if n != grid.n_points:
        logger.debug(f"Refined pricing grid to {n} points for strike {strike}, tau={tau:.3g}")
    return n


def _cos_puts(spot: float, strikes: np.ndarray, tau: float, rate: float, div: float, p: VgParams,
              n_points: int, half: float) -> np.ndarray:
    c1, _, _ = cumulants(tau, rate, div, p)
    width = 2.0 * half
    u = np.arange(n_points) * math.pi / width
    phi = characteristic_function(u, tau, rate, div, p)
    # x - a = half - c1 for every strike because the range is centred on log(S/K) + c1
    f = np.real(phi * np.exp(1j * u * (half - c1)))
    f[0] *= 0.5

    x = np.log(spot / strikes)
    a = x + c1 - half
    delta = np.clip(-a, 0.0, width)  # d - a with d = clip(0, a, b)
    ud = np.outer(u, delta)
    ea, ed = np.exp(a), np.exp(a + delta)
    chi = (np.cos(ud) * ed - ea + u[:, None] * np.sin(ud) * ed) / (1.0 + u[:, None] ** 2)
    psi = np.empty_like(chi)
    psi[0] = delta
    psi[1:] = np.sin(ud[1:]) / u[1:, None]
    coeff = (2.0 / width) * (psi - chi)
    return math.exp(-rate * tau) * strikes * (f @ coeff)


def vg_prices(spot: float, strikes: Sequence[float], tau: float, rate: float, div: float,
              rights: Union[Right, Sequence[Right]], p: VgParams, grid: PricingGrid = PricingGrid(),
              n_points: Optional[int] = None) -> np.ndarray:
    """European prices for many strikes at one maturity.

    Puts come from the cosine series and calls from put-call parity. ``n_points`` pins the
    series length; otherwise it is refined per the error bound on the widest strike.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if isinstance(rights, Right):
        rights = [rights] * len(strikes)
    is_call = np.array([r is Right.CALL for r in rights], dtype=bool)
    if not (math.isfinite(spot) and spot > 0 and np.all(strikes > 0) and tau > 0):
        raise InvalidInputError(f"VG pricing needs spot > 0, strikes > 0 and tau > 0 (spot={spot}, tau={tau})")
    half = _half_width(tau, rate, div, p, grid)
    if n_points is None:
        n_points = resolve_points(spot, float(strikes.max()), tau, rate, div, p, grid)
    puts = _cos_puts(spot, strikes, tau, rate, div, p, n_points, half)
    floor = PRICE_FLOOR * spot
    puts = np.where(puts < floor, 0.0, puts)
    calls = puts + spot * math.exp(-div * tau) - strikes * np.exp(-rate * tau)
    calls = np.where(calls < floor, 0.0, calls)
    return np.where(is_call, calls, puts)


def vg_price(inp: OptionInputs, p: VgParams, grid: PricingGrid = PricingGrid()) -> float:
    return float(vg_prices(inp.spot, [inp.strike], inp.tau, inp.rate, inp.div, inp.right, p, grid)[0])


def vg_delta(inp: OptionInputs, p: VgParams, grid: PricingGrid = PricingGrid(), dS: Optional[float] = None) -> float:
    """Central finite-difference delta, (V(S+dS) - V(S-dS)) / 2dS with default dS = 1e-3 S.

    Both bumps use the series length resolved at the unbumped spot.
    """
    dS = 1e-3 * inp.spot if dS is None else dS
    if not 0 < dS < inp.spot:
        raise InvalidInputError(f"bump dS={dS} must lie in (0, spot)")
    n = resolve_points(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, p, grid)
    up = vg_prices(inp.spot + dS, [inp.strike], inp.tau, inp.rate, inp.div, inp.right, p, grid, n_points=n)[0]
    down = vg_prices(inp.spot - dS, [inp.strike], inp.tau, inp.rate, inp.div, inp.right, p, grid, n_points=n)[0]
    return float((up - down) / (2.0 * dS))


def sample_increments(rng: np.random.Generator, dt: float, p: VgParams, size) -> np.ndarray:
    """VG increments over ``dt`` as Brownian motion with drift run on gamma time."""
    g = rng.gamma(shape=dt / p.nu, scale=p.nu, size=size)
    return p.theta * g + p.sigma * np.sqrt(g) * rng.standard_normal(size)


def vg_monte_carlo(inp: OptionInputs, p: VgParams, n_paths: int = 10 ** 6, seed: int = 0) -> Tuple[float, float]:
    """Antithetic Monte-Carlo price and standard error for a European option."""
    rng = np.random.Generator(np.random.Philox(seed))
    half = n_paths // 2
    g = rng.gamma(shape=inp.tau / p.nu, scale=p.nu, size=half)
    z = rng.standard_normal(half)
    drift = (inp.rate - inp.div + p.omega) * inp.tau + p.theta * g
    shock = p.sigma * np.sqrt(g) * z
    sign = inp.right.sign
    pay = [np.maximum(sign * (inp.spot * np.exp(drift + s) - inp.strike), 0.0) for s in (shock, -shock)]
    pairs = 0.5 * (pay[0] + pay[1]) * math.exp(-inp.rate * inp.tau)
    return float(pairs.mean()), float(pairs.std(ddof=1) / math.sqrt(half))
