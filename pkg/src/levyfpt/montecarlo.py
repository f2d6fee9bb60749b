"""Monte Carlo simulation of Levy paths on a uniform grid.

Increments of ``X(dt)`` are drawn by inverting a CDF table built once per
(model, dt) from the characteristic function.  Path ``j`` draws from its own
Philox stream keyed by ``(seed, j)``, so results do not depend on chunking.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .errors import ParameterError, TableError
from .euro import CALL, PUT, MarketSpec
from .levy import BrownianMotion, LevyModel

__all__ = [
    "McConfig",
    "HittingSample",
    "PathSummary",
    "McPrice",
    "IncrementTable",
    "increment_table",
    "sample_increments",
    "path_streams",
    "first_hitting_times",
    "relative_histogram",
    "simulate_paths",
    "barrier_payoffs",
    "mc_barrier_price",
]

TABLE_SIZE = 4096
_TAIL_PROB = 1e-12
_MAX_FFT = 2**21
_CHUNK_CELLS = 2**22


@dataclass(frozen=True)
class McConfig:
    """Grid and sample size; defaults follow the hitting-time experiment."""

    dt: float = 1.0 / 48.0
    n_steps: int = 1440
    n_paths: int = 20000
    seed: int = 20140826

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ParameterError("n_steps and n_paths must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass
class HittingSample:
    """First grid times beyond the level; censored paths sit at the horizon."""

    times: np.ndarray
    hit: np.ndarray
    dt: float
    n_steps: int

    @property
    def hit_fraction(self) -> float:
        return float(self.hit.mean())

    @property
    def hit_times(self) -> np.ndarray:
        return self.times[self.hit]


# --------------------------------------------------------------------------
# inverse-CDF table


@dataclass(frozen=True)
class IncrementTable:
    """Quantile of ``X(dt)`` as a monotone cubic in ``z = logit(p)``."""

    z: np.ndarray
    x: np.ndarray
    interp: PchipInterpolator

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.interp(np.clip(z, self.z[0], self.z[-1]))


def _chernoff_range(model: LevyModel, dt: float) -> tuple[float, float]:
    """Interval outside which each tail has probability below ``_TAIL_PROB``."""
    iv = model.moment_interval()
    log_eps = math.log(_TAIL_PROB)

    def bound(side: int) -> float:
        end = iv.a_max if side > 0 else -iv.a_min
        hi = min(end, 50.0 / math.sqrt(dt)) * (1.0 - 1e-9)

        # smallest x with exp(-a x + dt kappa(side a)) <= eps over a in (0, hi)
        def x_of(a: float) -> float:
            return (dt * float(np.real(model.kappa(side * a))) - log_eps) / a

        res = minimize_scalar(x_of, bounds=(1e-6 * hi, hi), method="bounded",
                              options={"xatol": 1e-10 * hi})
        return float(res.fun)

    return -bound(-1), bound(1)


def _chf_cutoff(model: LevyModel, dt: float) -> float:
    """``u`` beyond which ``|chf(dt, u)| < 1e-14``."""
    u = 8.0
    while u < 1e9:
        vals = np.abs(np.exp(dt * np.asarray(model.kappa(1j * np.array([u, 1.5 * u, 2 * u])))))
        if np.all(vals < 1e-14):
            return u
        u *= 2.0
    raise TableError("characteristic function does not decay; cannot build an increment table")


def _density_fft(model: LevyModel, dt: float, x0: float, dx: float, n: int) -> np.ndarray:
    du = 2.0 * math.pi / (n * dx)
    u = (np.arange(n) - n // 2) * du
    phi = np.exp(dt * np.asarray(model.kappa(1j * u)) - 1j * u * x0)
    f = np.fft.fft(phi) * du / (2.0 * math.pi)
    # exp(i (n/2) du j dx) = (-1)^j
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return (f * sign).real


@lru_cache(maxsize=16)
def increment_table(model: LevyModel, dt: float) -> IncrementTable:
    """Inverse-CDF table of ``X(dt)`` from an FFT density on a fine grid."""
    lo, hi = _chernoff_range(model, dt)
    u_cut = _chf_cutoff(model, dt)
    width = hi - lo
    n = 1 << max(14, math.ceil(math.log2(width * u_cut / math.pi)))
    if n > _MAX_FFT:
        raise TableError(f"increment table needs {n} FFT points (cap {_MAX_FFT}); increase dt")
    dx = width / n
    dens = _density_fft(model, dt, lo, dx, n)
    peak = dens.max()
    if dens.min() < -1e-6 * peak:
        raise TableError(
            f"density of X(dt) has negative values down to {dens.min():.3g} (peak {peak:.3g}); "
            "inversion grid too coarse"
        )
    dens = np.maximum(dens, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * dx)])
    total = cdf[-1]
    if abs(total - 1.0) > 1e-6:
        raise TableError(f"increment density integrates to {total:.9g}, not 1")
    cdf /= total
    x = lo + dx * np.arange(n)
    p_lo, p_hi = 1e-10, 1.0 - 1e-10
    z = np.linspace(math.log(p_lo / (1 - p_lo)), math.log(p_hi / (1 - p_hi)), TABLE_SIZE)
    p = 1.0 / (1.0 + np.exp(-z))
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    xq = np.interp(p, cdf[keep], x[keep])
    if np.any(np.diff(xq) < 0):
        raise TableError("quantile table is not monotone")
    z.setflags(write=False)
    xq.setflags(write=False)
    return IncrementTable(z=z, x=xq, interp=PchipInterpolator(z, xq))


def _logit(u: np.ndarray) -> np.ndarray:
    return np.log(u) - np.log1p(-u)


def _draw(model: LevyModel, dt: float, rng: np.random.Generator, shape) -> np.ndarray:
    if isinstance(model, BrownianMotion):
        return model.mu * dt + model.sigma * math.sqrt(dt) * rng.standard_normal(shape)
    u = rng.random(shape)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return increment_table(model, dt)(_logit(u))


def sample_increments(model: LevyModel, dt: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws distributed as ``X(dt)``."""
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt!r}")
    return _draw(model, dt, rng, n)


def path_streams(seed: int, start: int, stop: int):
    """Independent generators for paths ``start .. stop - 1``."""
    return [np.random.Generator(np.random.Philox(key=np.array([seed, j], dtype=np.uint64)))
            for j in range(start, stop)]


def _increments(model: LevyModel, cfg: McConfig, n_steps: int, start: int, stop: int) -> np.ndarray:
    """Increments of paths ``start .. stop - 1``, shape (paths, n_steps)."""
    gens = path_streams(cfg.seed, start, stop)
    if isinstance(model, BrownianMotion):
        z = np.stack([g.standard_normal(n_steps) for g in gens])
        return model.mu * cfg.dt + model.sigma * math.sqrt(cfg.dt) * z
    u = np.stack([g.random(n_steps) for g in gens])
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return increment_table(model, cfg.dt)(_logit(u))


def _for_chunks(model: LevyModel, cfg: McConfig, n_steps: int, work, threads: int = 1) -> None:
    """Call ``work(start, increments)`` for every block of paths.

    Blocks write disjoint slices, so running them on a thread pool gives
    the same result as running them serially.
    """
    if not isinstance(model, BrownianMotion):
        increment_table(model, cfg.dt)
    per = max(1, _CHUNK_CELLS // n_steps)
    ranges = [(a, min(cfg.n_paths, a + per)) for a in range(0, cfg.n_paths, per)]

    def run(r):
        work(r[0], _increments(model, cfg, n_steps, *r))

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, ranges))
    else:
        for r in ranges:
            run(r)


# --------------------------------------------------------------------------
# hitting times


def first_hitting_times(model: LevyModel, level: float, cfg: McConfig,
                        threads: int = 1) -> HittingSample:
    """First grid time with ``X >= l`` (``l > 0``) or ``X <= l`` (``l < 0``)."""
    if not (math.isfinite(level) and level != 0):
        raise ParameterError(f"level must be finite and nonzero, got {level!r}")
    times = np.full(cfg.n_paths, cfg.horizon)
    hit = np.zeros(cfg.n_paths, dtype=bool)

    def work(start, inc):
        x = np.cumsum(inc, axis=1)
        crossed = x >= level if level > 0 else x <= level
        any_hit = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)
        stop = start + inc.shape[0]
        hit[start:stop] = any_hit
        times[start:stop] = np.where(any_hit, (first + 1) * cfg.dt, cfg.horizon)

    _for_chunks(model, cfg, cfg.n_steps, work, threads)
    return HittingSample(times=times, hit=hit, dt=cfg.dt, n_steps=cfg.n_steps)


def relative_histogram(sample: HittingSample, edges) -> np.ndarray:
    """Fraction of all paths whose hitting time falls in each bin ``(a, b]``.

    Censored paths are excluded from the counts but kept in the denominator.
    """
    edges = np.asarray(edges, dtype=float)
    t = sample.hit_times
    idx = np.searchsorted(edges, t, side="left") - 1
    ok = (idx >= 0) & (idx < edges.size - 1)
    counts = np.bincount(idx[ok], minlength=edges.size - 1)
    return counts / sample.times.size


# --------------------------------------------------------------------------
# barrier pricing


@dataclass
class PathSummary:
    """Terminal log-return and running extrema of simulated paths."""

    terminal: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray
    maturity: float


@dataclass(frozen=True)
class McPrice:
    price: float
    std_error: float


def simulate_paths(model: LevyModel, T: float, cfg: McConfig, threads: int = 1) -> PathSummary:
    """Simulate ``X`` on ``[0, T]`` with step ``cfg.dt`` (``cfg.n_steps`` is ignored)."""
    n_steps = int(round(T / cfg.dt))
    if n_steps < 1 or abs(n_steps * cfg.dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError(f"maturity {T!r} is not a multiple of dt = {cfg.dt!r}")
    term = np.empty(cfg.n_paths)
    mx = np.empty(cfg.n_paths)
    mn = np.empty(cfg.n_paths)

    def work(start, inc):
        x = np.cumsum(inc, axis=1)
        stop = start + inc.shape[0]
        term[start:stop] = x[:, -1]
        mx[start:stop] = np.maximum(x.max(axis=1), 0.0)
        mn[start:stop] = np.minimum(x.min(axis=1), 0.0)

    _for_chunks(model, cfg, n_steps, work, threads)
    return PathSummary(terminal=term, running_max=mx, running_min=mn, maturity=T)


def barrier_payoffs(paths: PathSummary, market: MarketSpec, kind: str, direction: str,
                    barrier: float, strike: float):
    """Discounted per-path (knock-in, knock-out, vanilla) payoffs."""
    level = math.log(barrier / market.spot)
    s_t = market.spot * np.exp(paths.terminal)
    if kind == CALL:
        pay = np.maximum(s_t - strike, 0.0)
    elif kind == PUT:
        pay = np.maximum(strike - s_t, 0.0)
    else:
        raise ParameterError(f"kind must be 'call' or 'put', got {kind!r}")
    if direction == "up":
        touched = paths.running_max >= level
    elif direction == "down":
        touched = paths.running_min <= level
    else:
        raise ParameterError(f"direction must be 'up' or 'down', got {direction!r}")
    pay = math.exp(-market.rate * paths.maturity) * pay
    knock_in = np.where(touched, pay, 0.0)
    return knock_in, pay - knock_in, pay


def _mean_se(x: np.ndarray) -> McPrice:
    return McPrice(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan)


def mc_barrier_price(model: LevyModel, market: MarketSpec, spec, cfg: McConfig,
                     paths: PathSummary | None = None) -> dict[str, McPrice]:
    """Discounted MC prices of the knock-in, knock-out and vanilla legs of ``spec``.

    ``spec`` is a :class:`~levyfpt.exotic.BarrierSpec`; the contract's own leg
    is under ``"price"``.  Pass ``paths`` to reuse one simulation.
    """
    paths = paths if paths is not None else simulate_paths(model, spec.maturity, cfg)
    k_in, k_out, van = barrier_payoffs(paths, market, spec.kind, spec.direction,
                                       spec.barrier, spec.strike)
    out = {"in": _mean_se(k_in), "out": _mean_se(k_out), "vanilla": _mean_se(van)}
    out["price"] = out[spec.inout]
    return out
