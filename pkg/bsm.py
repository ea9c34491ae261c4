"""Black-Scholes-Merton closed forms, deltas and implied-volatility inversion."""
import logging
import math
from typing import Union

import numpy as np
from scipy.special import ndtr

from errors import ConvergenceError, DegenerateInputError, InvalidInputError, NoSolutionError
from market_data import OptionInputs, Right

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

VOL_LOWER = 1e-4
VOL_UPPER = 5.0
MAX_ITERATIONS = 200
PRICE_TOLERANCE = 1e-10  # relative to spot
STEP_TOLERANCE = 1e-12


def _check(inp: OptionInputs, sigma: float = 0.0) -> None:
    values = (inp.spot, inp.strike, inp.tau, inp.rate, inp.div, sigma)
    if not all(math.isfinite(v) for v in values):
        raise InvalidInputError(f"non-finite BSM input {inp} sigma={sigma}")
    if inp.spot <= 0 or inp.strike <= 0 or inp.tau < 0 or sigma < 0:
        raise InvalidInputError(f"BSM input out of domain {inp} sigma={sigma}")


def _npdf(x: ArrayLike) -> ArrayLike:
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _d1(spot, strike, tau, rate, div, sigma):
    return (np.log(spot / strike) + (rate - div + 0.5 * sigma * sigma) * tau) / (sigma * np.sqrt(tau))


def black_scholes(spot: ArrayLike, strike: ArrayLike, tau: ArrayLike, rate: ArrayLike, div: ArrayLike,
                  sigma: ArrayLike, is_call: ArrayLike) -> np.ndarray:
    """Vectorised European prices with the intrinsic and zero-vol limits built in."""
    spot, strike, tau, rate, div, sigma, is_call = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, tau, rate, div, sigma)), np.asarray(is_call, dtype=bool))
    fwd = spot * np.exp(-div * tau)
    disc = strike * np.exp(-rate * tau)
    sign = np.where(is_call, 1.0, -1.0)
    live = (tau > 0) & (sigma > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(live, _d1(spot, strike, tau, rate, div, sigma), 0.0)
        d2 = d1 - np.where(live, sigma * np.sqrt(tau), 0.0)
    priced = sign * (fwd * ndtr(sign * d1) - disc * ndtr(sign * d2))
    zero_vol = np.maximum(sign * (fwd - disc), 0.0)
    expired = np.maximum(sign * (spot - strike), 0.0)
    return np.where(tau <= 0, expired, np.where(sigma <= 0, zero_vol, priced))


def bsm_price(inp: OptionInputs, sigma: float) -> float:
    """European price per the closed form.

    Returns intrinsic value at ``tau = 0`` and the discounted forward intrinsic at
    ``sigma = 0``.
    """
    _check(inp, sigma)
    return float(black_scholes(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, sigma, inp.right is Right.CALL))


def bsm_delta(inp: OptionInputs, sigma: float, dividend_adjusted: bool = False) -> float:
    """Spot delta: N(d1) for calls and N(d1) - 1 for puts.

    Args:
        inp: Contract and market inputs.
        sigma: Volatility.
        dividend_adjusted: Scale by exp(-q t) (the textbook form) instead of the plain form.

    Raises:
        DegenerateInputError: When ``tau`` or ``sigma`` is zero; callers fall back to intrinsic logic.
    """
    _check(inp, sigma)
    if inp.tau <= 0 or sigma <= 0:
        raise DegenerateInputError(f"delta undefined at tau={inp.tau}, sigma={sigma}")
    d1 = float(_d1(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, sigma))
    scale = math.exp(-inp.div * inp.tau) if dividend_adjusted else 1.0
    if inp.right is Right.CALL:
        return scale * float(ndtr(d1))
    return scale * (float(ndtr(d1)) - 1.0)


def bsm_vega(inp: OptionInputs, sigma: float) -> float:
    d1 = float(_d1(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, sigma))
    return inp.spot * math.exp(-inp.div * inp.tau) * float(_npdf(d1)) * math.sqrt(inp.tau)


def intrinsic_delta(inp: OptionInputs) -> float:
    """Delta of the payoff itself: 1/0 for calls, -1/0 for puts (0.5 at the money)."""
    diff = inp.spot - inp.strike
    if diff == 0:
        return 0.5 if inp.right is Right.CALL else -0.5
    if inp.right is Right.CALL:
        return 1.0 if diff > 0 else 0.0
    return -1.0 if diff < 0 else 0.0


def price_bounds(inp: OptionInputs):
    fwd = inp.spot * math.exp(-inp.div * inp.tau)
    disc = inp.strike * math.exp(-inp.rate * inp.tau)
    if inp.right is Right.CALL:
        return max(fwd - disc, 0.0), fwd
    return max(disc - fwd, 0.0), disc


def implied_vol(market_price: float, inp: OptionInputs) -> float:
    """Volatility that reproduces ``market_price``.

    Safeguarded Newton on vega with bisection whenever the Newton step leaves the
    current bracket inside [1e-4, 5].

    Raises:
        NoSolutionError: Price outside the no-arbitrage bounds or the volatility bracket.
        ConvergenceError: No convergence within 200 iterations.
    """
    _check(inp)
    if not math.isfinite(market_price):
        raise InvalidInputError(f"non-finite option price {market_price}")
    if inp.tau <= 0:
        raise DegenerateInputError("implied volatility undefined at expiry")
    tol = PRICE_TOLERANCE * inp.spot
    lower, upper = price_bounds(inp)
    if market_price < lower - tol or market_price > upper + tol:
        raise NoSolutionError(f"price {market_price} outside no-arbitrage bounds [{lower}, {upper}]")

    lo, hi = VOL_LOWER, VOL_UPPER
    f_lo = bsm_price(inp, lo) - market_price
    f_hi = bsm_price(inp, hi) - market_price
    if f_lo > 0:
        if f_lo <= tol:
            return lo
        raise NoSolutionError(f"price {market_price} below the price at volatility {lo}")
    if f_hi < 0:
        if -f_hi <= tol:
            return hi
        raise NoSolutionError(f"price {market_price} above the price at volatility {hi}")

    # Brenner-Subrahmanyam start, kept inside the bracket
    sigma = math.sqrt(2.0 * math.pi / inp.tau) * market_price / inp.spot
    sigma = min(max(sigma, lo), hi)
    for _ in range(MAX_ITERATIONS):
        f = bsm_price(inp, sigma) - market_price
        if f == 0.0:
            return sigma
        if f > 0:
            hi = sigma
        else:
            lo = sigma
        vega = bsm_vega(inp, sigma)
        candidate = sigma - f / vega if vega > 0 else math.nan
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        step = candidate - sigma
        sigma = candidate
        if abs(step) < STEP_TOLERANCE or hi - lo < STEP_TOLERANCE * 1e-3:
            if abs(bsm_price(inp, sigma) - market_price) <= tol:
                return sigma
            break
    raise ConvergenceError(f"implied volatility did not converge for price {market_price}, {inp}")
