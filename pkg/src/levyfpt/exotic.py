"""Perpetual American options and continuously monitored barrier options.

Both pricers consume the first-passage transform ``exp(-l eta(u))``:

* perpetual options need only the real root ``eta(i r)``;
* a knock-in pays the vanilla claim restarted at the barrier, so with
  ``l = log(B / S0)``

      V_in = exp(-r T) / (2 pi)^2 int B^(i u - rho) Pi_hat(u + i rho) H(u) du,
      H(u) = int (exp(T psi) - exp(-i v T)) / (psi + i v) phi_tau(v) dv,

  where ``psi = psi(u + i rho)``.  Knock-outs follow from in + out = vanilla.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BoundaryError, ParameterError, QuadratureError
from .euro import (
    CALL,
    PUT,
    MarketSpec,
    _transform_matrix,
    check_rho,
    default_rho,
    price_strike_grid,
)
from .fpt import DOWN, UP, FptProblem, fpt_chf, fpt_laplace
from .levy import LevyModel
from .quadrature import QuadratureSpec, gauss_half_line, uniform_half_line

__all__ = [
    "PerpetualResult",
    "BarrierSpec",
    "HKernel",
    "BARRIER_QUADRATURE",
    "perpetual_call",
    "perpetual_put",
    "h_kernel",
    "price_knock_in",
    "price_knock_out",
    "knock_in_grid",
    "knock_out_grid",
]

# outer u rule for the barrier integral: step 0.25 keeps aliasing below 1e-8
# for |rho + 1| >= 1, and the tail beyond 1024 is O(1e-6) index points
BARRIER_QUADRATURE = QuadratureSpec(u_max=1024.0, n_points=4096, rule="trapezoid", tol=1e-8)
_SINGULAR_RADIUS = 1e-8
_NEG_CLIP = 1e-6
_CHUNK = 256


# --------------------------------------------------------------------------
# perpetual options


@dataclass(frozen=True)
class PerpetualResult:
    price: float
    exercise_level: float
    immediate: bool
    eta: float


def _laplace_root(model: LevyModel, direction: str, r: float) -> float:
    level = 1.0 if direction == UP else -1.0
    return fpt_laplace(FptProblem(model, level), r)


def perpetual_call(model: LevyModel, market: MarketSpec, strike: float) -> PerpetualResult:
    """Perpetual American call; exercise once ``S >= L+ = eta K / (eta - 1)``."""
    if not strike > 0:
        raise ParameterError(f"strike must be positive, got {strike!r}")
    e = _laplace_root(model, UP, market.rate)
    if not e > 1.0:
        raise BoundaryError(
            f"eta+(ir) = {e:.6g} <= 1: the perpetual call has no finite exercise level"
        )
    level = e * strike / (e - 1.0)
    s = market.spot
    if s >= level:
        return PerpetualResult(s - strike, level, True, e)
    price = strike / (e - 1.0) * (s * (e - 1.0) / (strike * e)) ** e
    return PerpetualResult(price, level, False, e)


def perpetual_put(model: LevyModel, market: MarketSpec, strike: float) -> PerpetualResult:
    """Perpetual American put; exercise once ``S <= L- = eta K / (eta - 1)``."""
    if not strike > 0:
        raise ParameterError(f"strike must be positive, got {strike!r}")
    e = _laplace_root(model, DOWN, market.rate)
    if not e < 0.0:
        raise BoundaryError(
            f"eta-(ir) = {e:.6g} >= 0: the perpetual put has no exercise level (r = 0?)"
        )
    level = e * strike / (e - 1.0)
    s = market.spot
    if s <= level:
        return PerpetualResult(strike - s, level, True, e)
    price = strike / (1.0 - e) * (s * (e - 1.0) / (strike * e)) ** e
    return PerpetualResult(price, level, False, e)


# --------------------------------------------------------------------------
# barrier options


@dataclass(frozen=True)
class BarrierSpec:
    """One barrier contract; ``rho=None`` picks the default damping."""

    kind: str
    direction: str
    inout: str
    strike: float
    barrier: float
    maturity: float
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise ParameterError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if self.direction not in (UP, DOWN):
            raise ParameterError(f"direction must be 'up' or 'down', got {self.direction!r}")
        if self.inout not in ("in", "out"):
            raise ParameterError(f"inout must be 'in' or 'out', got {self.inout!r}")
        for name in ("strike", "barrier", "maturity"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.rho is not None:
            check_rho(self.kind, self.rho)

    def level(self, spot: float) -> float:
        lvl = math.log(self.barrier / spot)
        if self.direction == UP and not lvl > 0:
            raise ParameterError(f"up barrier {self.barrier:g} must exceed the spot {spot:g}")
        if self.direction == DOWN and not lvl < 0:
            raise ParameterError(f"down barrier {self.barrier:g} must lie below the spot {spot:g}")
        return lvl

    def is_vanilla_case(self) -> bool:
        """Up-in call with K >= B or down-in put with K <= B: every payoff needs a touch."""
        if self.kind == CALL and self.direction == UP:
            return self.strike >= self.barrier
        if self.kind == PUT and self.direction == DOWN:
            return self.strike <= self.barrier
        return False


@dataclass(frozen=True)
class HKernel:
    u: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    v_max: float
    rho: float


def _v_nodes(problem: FptProblem, tol: float):
    """Symmetric nodes for the v-integral, truncated where ``|phi_tau| < tol``."""
    v_max = 8.0
    while True:
        tail = np.abs(fpt_chf(problem, np.array([v_max, 1.5 * v_max])))
        if np.all(tail < tol):
            break
        v_max *= 2.0
        if v_max > 2.0**16:
            raise QuadratureError(f"|phi_tau(v)| stays above {tol:g} for |v| < {v_max:g}")
    nodes, weights = gauss_half_line(v_max, 1.0)
    phi = fpt_chf(problem, nodes)
    v = np.concatenate([-nodes[::-1], nodes])
    w = np.concatenate([weights[::-1], weights])
    phi = np.concatenate([np.conj(phi[::-1]), phi])
    return v, w * phi, v_max


def _kernel(psi: np.ndarray, v: np.ndarray, T: float) -> np.ndarray:
    """``(exp(T psi) - exp(-i v T)) / (psi + i v)`` with its removable singularity."""
    z = psi[:, None] + 1j * v[None, :]
    small = np.abs(z) < _SINGULAR_RADIUS
    safe = np.where(small, 1.0, z)
    out = np.exp(-1j * v * T)[None, :] * np.expm1(T * safe) / safe
    if np.any(small):
        out = np.where(small, T * np.exp(-1j * v * T)[None, :], out)
    return out


@lru_cache(maxsize=32)
def _h_cached(model: LevyModel, level: float, T: float, rho: float, u_max: float, n: int,
              rule: str, tol: float) -> HKernel:
    problem = FptProblem(model, level)
    v, wphi, v_max = _v_nodes(problem, tol)
    u, uw = uniform_half_line(u_max, n, rule)
    psi = np.asarray(model.kappa(1j * u - rho))
    vals = np.empty(u.size, dtype=complex)
    for s in range(0, u.size, _CHUNK):
        vals[s:s + _CHUNK] = _kernel(psi[s:s + _CHUNK], v, T) @ wphi
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("H(u) is not finite on the u grid")
    for arr in (u, uw, vals):
        arr.setflags(write=False)
    return HKernel(u=u, weights=uw, values=vals, v_max=v_max, rho=rho)


def h_kernel(model: LevyModel, problem: FptProblem, T: float, rho: float,
             quad: QuadratureSpec | None = None) -> HKernel:
    """``H(u)`` on the outer trapezoid grid; cached per (model, l, T, rho, grid)."""
    if problem.model != model:
        raise ParameterError("problem.model must be the pricing model")
    if not T > 0:
        raise ParameterError(f"maturity must be positive, got {T!r}")
    quad = quad or BARRIER_QUADRATURE
    if quad.rule == "gauss" or quad.u_max is None:
        raise ParameterError("the outer barrier integral needs a uniform rule with fixed u_max")
    return _h_cached(model, float(problem.level), float(T), float(rho), float(quad.u_max),
                     int(quad.n_points or 4096), quad.rule, float(quad.tol))


def _clip(prices: np.ndarray, what: str) -> np.ndarray:
    low = prices.min()
    if low < -_NEG_CLIP:
        raise QuadratureError(f"{what} price {low:.3g} is negative beyond quadrature noise")
    return np.maximum(prices, 0.0)


def knock_in_grid(model: LevyModel, market: MarketSpec, kind: str, direction: str, barrier: float,
                  strikes, T: float, rho: float | None = None,
                  quad: QuadratureSpec | None = None) -> np.ndarray:
    """Knock-in prices over a strike grid sharing one ``H`` kernel."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    specs = [BarrierSpec(kind, direction, "in", float(k), barrier, T, rho) for k in strikes]
    level = specs[0].level(market.spot)
    rho = default_rho(kind, model) if rho is None else float(rho)
    check_rho(kind, rho, model)
    out = np.empty(strikes.size)
    vanilla = np.array([s.is_vanilla_case() for s in specs])
    if vanilla.any():
        out[vanilla] = price_strike_grid(model, market, kind, strikes[vanilla], T)
    if (~vanilla).any():
        h = h_kernel(model, FptProblem(model, level), T, rho, quad)
        xi_w = 1j * h.u - rho
        g = _transform_matrix(strikes[~vanilla], rho, h.u) * (
            np.exp(xi_w * math.log(barrier)) * h.values
        )[None, :]
        case2 = math.exp(-market.rate * T) / (2.0 * math.pi**2) * (g @ h.weights).real
        out[~vanilla] = _clip(case2, "knock-in")
    return out


def knock_out_grid(model: LevyModel, market: MarketSpec, kind: str, direction: str, barrier: float,
                   strikes, T: float, rho: float | None = None,
                   quad: QuadratureSpec | None = None) -> np.ndarray:
    """Knock-out prices as vanilla minus knock-in."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    vanilla = price_strike_grid(model, market, kind, strikes, T)
    out = vanilla - knock_in_grid(model, market, kind, direction, barrier, strikes, T, rho, quad)
    if out.min() < -_NEG_CLIP:
        warnings.warn(f"knock-out price {out.min():.3g} below zero; clipped", RuntimeWarning,
                      stacklevel=2)
    return np.maximum(out, 0.0)


def price_knock_in(model: LevyModel, market: MarketSpec, spec: BarrierSpec,
                   quad: QuadratureSpec | None = None) -> float:
    """Knock-in price; vanilla when the payoff already implies a barrier touch."""
    return float(knock_in_grid(model, market, spec.kind, spec.direction, spec.barrier,
                               [spec.strike], spec.maturity, spec.rho, quad)[0])


def price_knock_out(model: LevyModel, market: MarketSpec, spec: BarrierSpec,
                    quad: QuadratureSpec | None = None) -> float:
    """Knock-out price ``vanilla - knock-in``."""
    return float(knock_out_grid(model, market, spec.kind, spec.direction, spec.barrier,
                                [spec.strike], spec.maturity, spec.rho, quad)[0])
