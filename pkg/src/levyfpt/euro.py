"""European option prices by Fourier transform of the damped payoff.

With log-price ``x`` and damping ``rho`` the call/put payoff transform is

    Pi_hat(u + i rho) = K^(rho + 1 - i u) / ((rho - i u) (rho + 1 - i u)),

valid for ``rho < -1`` (call) or ``rho > 0`` (put), and

    price = exp(-r T) / pi * Re int_0^inf S0^(i u - rho) exp(T psi(u + i rho)) Pi_hat du.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DampingError, ParameterError, QuadratureError
from .levy import LevyModel
from .quadrature import QuadratureSpec, uniform_half_line

__all__ = [
    "CALL",
    "PUT",
    "MarketSpec",
    "DampedPayoff",
    "DEFAULT_QUADRATURE",
    "default_rho",
    "payoff_transform",
    "price_european",
    "price_strike_grid",
    "black_scholes",
]

CALL = "call"
PUT = "put"

DEFAULT_QUADRATURE = QuadratureSpec(u_max=200.0, n_points=4096, rule="trapezoid", tol=1e-10)
# short maturities under pure-jump models decay slowly in u
_MAX_DOUBLINGS = 6
_RHO_MARGIN = 0.9


@dataclass(frozen=True)
class MarketSpec:
    """Spot level, continuously compounded risk-free rate and dividend yield."""

    spot: float
    rate: float = 0.0
    dividend: float = 0.0

    def __post_init__(self):
        if not (self.spot > 0 and math.isfinite(self.spot)):
            raise ParameterError(f"spot must be positive, got {self.spot!r}")
        if not (math.isfinite(self.rate) and math.isfinite(self.dividend)):
            raise ParameterError("rate and dividend must be finite")

    def forward(self, t: float) -> float:
        return self.spot * math.exp((self.rate - self.dividend) * t)


def _check_kind(kind: str) -> str:
    if kind not in (CALL, PUT):
        raise ParameterError(f"kind must be 'call' or 'put', got {kind!r}")
    return kind


@dataclass(frozen=True)
class DampedPayoff:
    kind: str
    strike: float
    rho: float

    def __post_init__(self):
        _check_kind(self.kind)
        if not self.strike > 0:
            raise ParameterError(f"strike must be positive, got {self.strike!r}")
        check_rho(self.kind, self.rho)


def check_rho(kind: str, rho: float, model: LevyModel | None = None) -> None:
    """Raise :class:`DampingError` unless ``rho`` suits the payoff and the model."""
    if kind == CALL and not rho < -1.0:
        raise DampingError(f"call damping needs rho < -1, got {rho!r}")
    if kind == PUT and not rho > 0.0:
        raise DampingError(f"put damping needs rho > 0, got {rho!r}")
    if model is not None:
        iv = model.moment_interval()
        if not iv.interior(-rho):
            raise DampingError(
                f"-rho = {-rho:g} must lie inside the exponential-moment interval "
                f"({iv.a_min:.6g}, {iv.a_max:.6g})"
            )


def default_rho(kind: str, model: LevyModel) -> float:
    """``-3`` for calls, ``2`` for puts, pulled inside 90% of the moment interval."""
    _check_kind(kind)
    iv = model.moment_interval()
    if kind == CALL:
        rho = -min(3.0, _RHO_MARGIN * iv.a_max)
        if not rho < -1.0:
            raise DampingError(
                f"no admissible call damping: exponential moments end at {iv.a_max:.6g} <= 1/{_RHO_MARGIN}"
            )
    else:
        rho = min(2.0, -_RHO_MARGIN * iv.a_min)
        if not rho > 0.0:
            raise DampingError("no admissible put damping: no negative exponential moments")
    return rho


def payoff_transform(p: DampedPayoff, u):
    """Closed-form ``Pi_hat(u + i rho)`` for the call or put payoff in log-price."""
    u = np.asarray(u, dtype=float)
    rho, k = p.rho, p.strike
    out = np.exp((rho + 1.0 - 1j * u) * math.log(k)) / ((rho - 1j * u) * (rho + 1.0 - 1j * u))
    return out[()] if out.ndim == 0 else out


def _transform_matrix(strikes: np.ndarray, rho: float, u: np.ndarray) -> np.ndarray:
    logk = np.log(strikes)[:, None]
    return np.exp((rho + 1.0 - 1j * u[None, :]) * logk) / ((rho - 1j * u) * (rho + 1.0 - 1j * u))


def _sweep(model: LevyModel, market: MarketSpec, strikes: np.ndarray, T: float, rho: float,
           u_max: float, n: int, rule: str):
    u, w = uniform_half_line(u_max, n, rule)
    xi_w = 1j * u - rho
    chf_part = np.exp(xi_w * math.log(market.spot) + T * model.kappa(xi_w))
    integrand = _transform_matrix(strikes, rho, u) * chf_part[None, :]
    scale = math.exp(-market.rate * T) / math.pi
    prices = scale * (integrand @ w).real
    # the payoff transform decays like u^-2, so the tail beyond U is about U * |g(U)|
    tail = scale * u_max * np.abs(integrand[:, -1]).max()
    return prices, tail


def price_strike_grid(model: LevyModel, market: MarketSpec, kind: str, strikes, T: float,
                      rho: float | None = None, quad: QuadratureSpec | None = None) -> np.ndarray:
    """European prices for several strikes sharing one characteristic-function sweep.

    The truncation ``u_max`` is doubled (keeping the step) while the
    estimated truncated tail exceeds ``quad.tol``.
    """
    _check_kind(kind)
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(strikes <= 0):
        raise ParameterError("strikes must be positive")
    if not T > 0:
        raise ParameterError(f"maturity must be positive, got {T!r}")
    quad = quad or DEFAULT_QUADRATURE
    if quad.rule == "gauss":
        raise ParameterError("European pricing uses a uniform rule (trapezoid or simpson)")
    rho = default_rho(kind, model) if rho is None else float(rho)
    check_rho(kind, rho, model)
    u_max = quad.u_max if quad.u_max is not None else 200.0
    n = quad.n_points or 4096
    for _ in range(_MAX_DOUBLINGS + 1):
        prices, tail = _sweep(model, market, strikes, T, rho, u_max, n, quad.rule)
        if tail <= quad.tol:
            break
        u_max, n = 2.0 * u_max, 2 * n
    else:
        raise QuadratureError(
            f"truncation tail at u_max = {u_max / 2:g} is {tail:.3g}, above tolerance {quad.tol:g}"
        )
    return prices


def price_european(model: LevyModel, market: MarketSpec, kind: str, strike: float, T: float,
                   rho: float | None = None, quad: QuadratureSpec | None = None) -> float:
    """Price of a single European call or put (index points)."""
    return float(price_strike_grid(model, market, kind, [strike], T, rho, quad)[0])


def black_scholes(spot: float, strike, T: float, rate: float, dividend: float, sigma: float,
                  kind: str = CALL):
    """Black-Scholes price with continuous dividend yield."""
    strike = np.asarray(strike, dtype=float)
    sq = sigma * math.sqrt(T)
    d1 = (np.log(spot / strike) + (rate - dividend + 0.5 * sigma * sigma) * T) / sq
    d2 = d1 - sq
    df_s = spot * math.exp(-dividend * T)
    df_k = strike * math.exp(-rate * T)
    if _check_kind(kind) == CALL:
        return df_s * ndtr(d1) - df_k * ndtr(d2)
    return df_k * ndtr(-d2) - df_s * ndtr(-d1)
