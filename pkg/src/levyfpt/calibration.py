"""Least-squares calibration of Levy models to European option quotes.

Quotes are stored as ``kind,strike,maturity_days,price`` with ACT/365
maturities.  The fit minimises the unweighted sum of squared price errors
with Nelder-Mead on unconstrained coordinates; the drift is re-derived from
the martingale condition at every evaluation.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import (
    ConvergenceError,
    EmptyChainError,
    LengthMismatchError,
    LevyFptError,
    ParameterError,
    ParseError,
)
from .euro import CALL, PUT, MarketSpec, price_strike_grid
from .levy import FAMILIES, LevyModel, risk_neutral_drift

__all__ = [
    "CHAIN_HEADER",
    "DAYS_PER_YEAR",
    "OptionQuote",
    "OptionChain",
    "ChainFilter",
    "CalibrationResult",
    "PARAMETER_SPACES",
    "load_chain",
    "write_chain",
    "format_float",
    "error_metrics",
    "model_prices",
    "calibrate",
    "synthetic_chain",
]

CHAIN_HEADER = ("kind", "strike", "maturity_days", "price")
DAYS_PER_YEAR = 365.0


def format_float(x: float) -> str:
    """Shortest round-trip text for ``x`` (integers without a decimal point)."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class OptionQuote:
    kind: str
    strike: float
    maturity_days: float
    price: float

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise ParameterError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if not self.strike > 0:
            raise ParameterError(f"strike must be positive, got {self.strike!r}")
        if not self.maturity_days > 0:
            raise ParameterError(f"maturity must be positive, got {self.maturity_days!r}")
        if not (self.price >= 0 and math.isfinite(self.price)):
            raise ParameterError(f"price must be finite and nonnegative, got {self.price!r}")

    @property
    def maturity(self) -> float:
        return self.maturity_days / DAYS_PER_YEAR


@dataclass
class OptionChain:
    quotes: list[OptionQuote] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.quotes)

    def __iter__(self):
        return iter(self.quotes)

    @property
    def prices(self) -> np.ndarray:
        return np.array([q.price for q in self.quotes])

    def subset(self, kind: str) -> "OptionChain":
        return OptionChain([q for q in self.quotes if q.kind == kind])


@dataclass(frozen=True)
class ChainFilter:
    """Moneyness band ``K / S0`` and an optional whitelist of maturities in days."""

    moneyness: tuple[float, float] | None = (0.9, 1.1)
    maturities_days: tuple[float, ...] | None = None

    def accepts(self, q: OptionQuote, spot: float) -> bool:
        if self.moneyness is not None:
            lo, hi = self.moneyness
            if not lo <= q.strike / spot <= hi:
                return False
        if self.maturities_days is not None:
            return any(abs(q.maturity_days - d) < 1e-9 for d in self.maturities_days)
        return True


def _parse_rows(lines: Iterable[str]) -> list[OptionQuote]:
    reader = csv.reader(lines)
    quotes = []
    header_seen = False
    for row in reader:
        lineno = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if not header_seen:
            if tuple(cells) != CHAIN_HEADER:
                raise ParseError(f"expected header {','.join(CHAIN_HEADER)!r}, got {','.join(cells)!r}",
                                 line=lineno)
            header_seen = True
            continue
        if len(cells) != 4:
            raise ParseError(f"expected 4 fields, got {len(cells)}", line=lineno)
        kind = cells[0].lower()
        try:
            strike, days, price = (float(c) for c in cells[1:])
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", line=lineno) from None
        try:
            quotes.append(OptionQuote(kind, strike, days, price))
        except ParameterError as exc:
            raise ParseError(str(exc), line=lineno) from None
    if not header_seen:
        raise ParseError("missing header", line=1)
    return quotes


def load_chain(path, spot: float, filter: ChainFilter | None = ChainFilter()) -> OptionChain:
    """Read a quote file and keep the quotes accepted by ``filter``."""
    with open(path, newline="", encoding="utf-8") as fh:
        quotes = _parse_rows(fh)
    if filter is not None:
        quotes = [q for q in quotes if filter.accepts(q, spot)]
    if not quotes:
        raise EmptyChainError(f"no quotes left in {path} after filtering")
    return OptionChain(quotes)


def write_chain(chain: OptionChain, path=None) -> str:
    """Write ``chain`` as CSV (LF line endings); returns the text."""
    buf = io.StringIO()
    buf.write(",".join(CHAIN_HEADER) + "\n")
    for q in chain:
        buf.write(",".join([q.kind, format_float(q.strike), format_float(q.maturity_days),
                            format_float(q.price)]) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def error_metrics(model_prices: Sequence[float], market_prices: Sequence[float]):
    """``(AAE, APE, RMSE)`` of model against market prices."""
    p_hat = np.asarray(model_prices, dtype=float)
    p = np.asarray(market_prices, dtype=float)
    if p_hat.shape != p.shape or p.ndim != 1:
        raise LengthMismatchError(f"length mismatch: {p_hat.shape} vs {p.shape}")
    if p.size == 0:
        raise LengthMismatchError("empty price vectors")
    err = p - p_hat
    aae = float(np.mean(np.abs(err)))
    mean_p = float(np.mean(p))
    ape = aae / mean_p if mean_p != 0 else (0.0 if aae == 0 else math.inf)
    rmse = float(math.sqrt(np.mean(err * err)))
    return aae, ape, rmse


def model_prices(model: LevyModel, market: MarketSpec, chain: OptionChain) -> np.ndarray:
    """Prices of every quote, one strike-grid sweep per (kind, maturity)."""
    groups: dict[tuple[str, float], list[int]] = defaultdict(list)
    for i, q in enumerate(chain):
        groups[(q.kind, q.maturity)].append(i)
    out = np.empty(len(chain))
    for (kind, T), idx in groups.items():
        strikes = [chain.quotes[i].strike for i in idx]
        out[idx] = price_strike_grid(model, market, kind, strikes, T)
    return out


# --------------------------------------------------------------------------
# parameter transforms


@dataclass(frozen=True)
class _Coord:
    name: str
    kind: str  # "log", "logit" or "free"
    lo: float = 1e-4
    hi: float = 1e4

    def encode(self, x: float) -> float:
        if self.kind == "free":
            return x
        if self.kind == "log":
            return math.log(min(max(x, self.lo), self.hi))
        t = (x - self.lo) / (self.hi - self.lo)
        return float(logit(min(max(t, 1e-12), 1 - 1e-12)))

    def decode(self, y: float) -> float:
        if self.kind == "free":
            return y
        if self.kind == "log":
            return math.exp(min(max(y, math.log(self.lo)), math.log(self.hi)))
        return self.lo + (self.hi - self.lo) * float(expit(y))


PARAMETER_SPACES: dict[str, tuple[_Coord, ...]] = {
    "bm": (_Coord("sigma", "log"),),
    "nig": (_Coord("theta", "log"), _Coord("beta", "free"), _Coord("gamma", "log", 1e-6, 1e4)),
    "nts": (_Coord("alpha", "logit", 0.05, 1.95), _Coord("theta", "log"), _Coord("beta", "free"),
            _Coord("gamma", "log", 1e-6, 1e4)),
    "cgmy": (_Coord("alpha", "logit", 0.05, 1.95), _Coord("c", "log"),
             _Coord("lambda_plus", "log"), _Coord("lambda_minus", "log")),
}


@dataclass
class CalibrationResult:
    model: LevyModel
    aae: float
    ape: float
    rmse: float
    iterations: int
    converged: bool
    objective: float
    initial_objective: float


def _build_model(family: str, shape: Mapping[str, float], market: MarketSpec) -> LevyModel:
    mu = risk_neutral_drift(family, shape, market.rate, market.dividend)
    return FAMILIES[family](**shape, mu=mu)


def calibrate(family: str, chain: OptionChain, market: MarketSpec, init: Mapping[str, float],
              max_evals: int = 2000, xatol: float = 1e-6, restart: bool = True) -> CalibrationResult:
    """Fit ``family`` to ``chain`` by unweighted price least squares.

    Invalid or non-martingale parameter sets score ``+inf``.  One restart
    from a perturbed optimum is made within the evaluation budget.
    """
    if family not in PARAMETER_SPACES:
        raise ParameterError(f"unknown family {family!r}")
    if len(chain) == 0:
        raise EmptyChainError("cannot calibrate to an empty chain")
    coords = PARAMETER_SPACES[family]
    missing = [c.name for c in coords if c.name not in init]
    if missing:
        raise ParameterError(f"initial values missing for {missing}")
    market_p = chain.prices
    evals = 0

    def shape_of(y) -> dict:
        return {c.name: c.decode(v) for c, v in zip(coords, y)}

    def objective(y) -> float:
        nonlocal evals
        evals += 1
        try:
            model = _build_model(family, shape_of(y), market)
            err = model_prices(model, market, chain) - market_p
        except (LevyFptError, ValueError, OverflowError, ZeroDivisionError):
            return math.inf
        val = float(err @ err)
        return val if math.isfinite(val) else math.inf

    y0 = np.array([c.encode(float(init[c.name])) for c in coords])
    f0 = objective(y0)
    if not math.isfinite(f0):
        raise ParameterError("initial parameters give no valid prices (outside bounds or no martingale drift)")
    opts = {"xatol": xatol, "fatol": 1e-14, "maxfev": max_evals - 1, "adaptive": len(coords) > 2}
    res = minimize(objective, y0, method="Nelder-Mead", options=opts)
    best_y, best_f, converged = res.x, float(res.fun), bool(res.success)
    left = max_evals - evals
    if restart and left > 10 * len(coords):
        step = 0.05 * np.maximum(np.abs(best_y), 1.0)
        simplex = np.vstack([best_y] + [best_y + step[i] * np.eye(len(coords))[i]
                                        for i in range(len(coords))])
        res2 = minimize(objective, best_y, method="Nelder-Mead",
                        options={**opts, "maxfev": left, "initial_simplex": simplex})
        if res2.fun <= best_f:
            best_y, best_f = res2.x, float(res2.fun)
        converged = bool(res2.success)
    if not math.isfinite(best_f):
        raise ConvergenceError("no valid parameter set found", best=shape_of(best_y))
    model = _build_model(family, shape_of(best_y), market)
    aae, ape, rmse = error_metrics(model_prices(model, market, chain), market_p)
    return CalibrationResult(model=model, aae=aae, ape=ape, rmse=rmse, iterations=evals,
                             converged=converged, objective=best_f, initial_objective=f0)


def synthetic_chain(model: LevyModel, market: MarketSpec, strikes, maturities,
                    noise_sd: float = 0.0, kinds: Sequence[str] = (CALL,),
                    seed: int | None = 0) -> OptionChain:
    """Model prices for every (kind, maturity, strike) plus optional Gaussian noise.

    ``maturities`` are in years; no moneyness filter is applied.  Noisy
    prices are floored at zero.
    """
    if noise_sd < 0:
        raise ParameterError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    strikes = [float(k) for k in strikes]
    quotes = []
    for kind in kinds:
        for T in maturities:
            prices = price_strike_grid(model, market, kind, strikes, float(T))
            if noise_sd > 0:
                prices = np.maximum(prices + rng.normal(0.0, noise_sd, prices.size), 0.0)
            days = float(T) * DAYS_PER_YEAR
            quotes.extend(OptionQuote(kind, k, days, float(p)) for k, p in zip(strikes, prices))
    return OptionChain(quotes)
