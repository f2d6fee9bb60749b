"""Lévy process families: symbols, characteristic functions, moments and drifts.

Every model is parameterised so that ``X(1)`` has cumulant generating function
``kappa(w) = log E[exp(w X(1))]``.  The Lévy symbol is ``psi(z) = kappa(i z)``
and ``kappa(eta) = psi(-i eta)`` is exactly the quantity that enters the
first-passage root condition, so each family only implements ``kappa`` and its
derivative.

``kappa`` is analytic on the vertical strip ``a_min <= Re(w) <= a_max`` given
by the exponential-moment interval.  The public :func:`levy_symbol` and
:func:`chf` enforce that strip.  Outside it the root solvers in
:mod:`levyfpt.fpt` continue ``kappa`` analytically, following each fractional
power across its branch cut (see ``_power_terms``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from functools import cached_property
from pathlib import Path
from typing import ClassVar, Mapping

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, MomentError, ParameterError

__all__ = [
    "ExpMomentInterval",
    "LevyModel",
    "BrownianMotion",
    "NIG",
    "NTS",
    "CGMY",
    "FAMILIES",
    "levy_symbol",
    "chf",
    "exp_moment_interval",
    "standardize",
    "risk_neutral_drift",
    "risk_neutral",
    "model_from_config",
    "load_model",
]

# relative slack when testing the strip boundary
_STRIP_TOL = 1e-12


@dataclass(frozen=True)
class ExpMomentInterval:
    """Closed interval of ``a`` with ``E[exp(a X(t))] < inf``."""

    a_min: float
    a_max: float

    def __contains__(self, a: float) -> bool:
        return self.a_min <= a <= self.a_max

    def interior(self, a: float) -> bool:
        return self.a_min < a < self.a_max

    def shrink(self, margin: float) -> "ExpMomentInterval":
        """Interval pulled inward by ``margin`` times its half-width on each side."""
        lo = self.a_min * (1.0 - margin) if math.isfinite(self.a_min) else self.a_min
        hi = self.a_max * (1.0 - margin) if math.isfinite(self.a_max) else self.a_max
        return ExpMomentInterval(lo, hi)


class LevyModel:
    """Base class for the supported families.

    Subclasses are frozen dataclasses carrying their parameters plus a drift
    ``mu``.  ``kappa`` accepts scalars or numpy arrays of complex ``w``.
    """

    family: ClassVar[str] = ""

    def _kappa(self, w):
        raise NotImplementedError

    def _kappa_prime(self, w):
        raise NotImplementedError

    def moment_interval(self) -> ExpMomentInterval:
        raise NotImplementedError

    def _power_terms(self, w):
        """Split ``kappa`` as ``p(w) + sum c_j * b_j(w) ** a_j``.

        Returns ``(p, p', [(c_j, b_j, b_j', a_j), ...])``.  Root continuation
        uses this to follow each fractional power across its branch cut.
        """
        raise NotImplementedError

    def _check_strip(self, w) -> None:
        iv = self.moment_interval()
        re = np.real(w)
        scale = max(1.0, abs(iv.a_min) if math.isfinite(iv.a_min) else 1.0,
                    abs(iv.a_max) if math.isfinite(iv.a_max) else 1.0)
        tol = _STRIP_TOL * scale
        if np.any(re < iv.a_min - tol) or np.any(re > iv.a_max + tol):
            raise DomainError(
                f"{self.family}: Re(w) must lie in [{iv.a_min:.6g}, {iv.a_max:.6g}] "
                f"(exponential-moment strip)"
            )

    def kappa(self, w, check: bool = True):
        """Cumulant generating function ``log E[exp(w X(1))]``."""
        w = np.asarray(w, dtype=complex)
        if check:
            self._check_strip(w)
        out = self._kappa(w)
        return out[()] if out.ndim == 0 else out

    def kappa_prime(self, w, check: bool = True):
        w = np.asarray(w, dtype=complex)
        if check:
            self._check_strip(w)
        out = self._kappa_prime(w)
        return out[()] if out.ndim == 0 else out

    def with_mu(self, mu: float) -> "LevyModel":
        return replace(self, mu=float(mu))

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_config(self) -> dict:
        return {"family": self.family, "params": self.params(), "standard": False}


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")


def _finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BrownianMotion(LevyModel):
    """Arithmetic Brownian motion ``mu t + sigma W(t)``."""

    sigma: float = 1.0
    mu: float = 0.0
    family: ClassVar[str] = "bm"

    def __post_init__(self):
        _positive("sigma", self.sigma)
        _finite("mu", self.mu)

    def _kappa(self, w):
        return self.mu * w + 0.5 * self.sigma**2 * w * w

    def _kappa_prime(self, w):
        return self.mu + self.sigma**2 * w

    def _power_terms(self, w):
        return self._kappa(w), self._kappa_prime(w), []

    def moment_interval(self) -> ExpMomentInterval:
        return ExpMomentInterval(-math.inf, math.inf)


def _nts_interval(theta, beta, gamma) -> ExpMomentInterval:
    disc = math.sqrt(beta * beta + 2.0 * gamma * gamma * theta)
    g2 = gamma * gamma
    return ExpMomentInterval((-beta - disc) / g2, (-beta + disc) / g2)


# The formulas below use ``**`` so they accept both Python complex scalars
# (fast path for the serial root continuation) and complex numpy arrays.
# Both give the principal branch.


def _nts_power_terms(alpha, theta, beta, gamma, mu, w):
    scale = 2.0 * theta ** (1.0 - 0.5 * alpha) / alpha
    base = theta - beta * w - 0.5 * gamma * gamma * w * w
    poly = (mu - beta) * w + scale * theta ** (0.5 * alpha)
    return poly, mu - beta, [(-scale, base, -beta - gamma * gamma * w, 0.5 * alpha)]


def _nts_kappa(alpha, theta, beta, gamma, mu, w):
    base = theta - beta * w - 0.5 * gamma * gamma * w * w
    scale = 2.0 * theta ** (1.0 - 0.5 * alpha) / alpha
    # theta^a through the same complex power as base^a, so kappa(0) is exactly 0
    theta_a = (theta + 0.0 * base) ** (0.5 * alpha)
    return (mu - beta) * w - scale * (base ** (0.5 * alpha) - theta_a)


def _nts_kappa_prime(alpha, theta, beta, gamma, mu, w):
    base = theta - beta * w - 0.5 * gamma * gamma * w * w
    return (mu - beta) + theta ** (1.0 - 0.5 * alpha) * base ** (0.5 * alpha - 1.0) * (
        beta + gamma * gamma * w
    )


@dataclass(frozen=True)
class NTS(LevyModel):
    """Normal tempered stable process NTS(alpha, theta, beta, gamma, mu)."""

    alpha: float
    theta: float
    beta: float
    gamma: float
    mu: float = 0.0
    family: ClassVar[str] = "nts"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        _positive("theta", self.theta)
        _positive("gamma", self.gamma)
        _finite("beta", self.beta)
        _finite("mu", self.mu)

    def _kappa(self, w):
        return _nts_kappa(self.alpha, self.theta, self.beta, self.gamma, self.mu, w)

    def _kappa_prime(self, w):
        return _nts_kappa_prime(self.alpha, self.theta, self.beta, self.gamma, self.mu, w)

    def _power_terms(self, w):
        return _nts_power_terms(self.alpha, self.theta, self.beta, self.gamma, self.mu, w)

    def moment_interval(self) -> ExpMomentInterval:
        return _nts_interval(self.theta, self.beta, self.gamma)


@dataclass(frozen=True)
class NIG(LevyModel):
    """Normal inverse Gaussian process: the ``alpha = 1`` member of NTS."""

    theta: float
    beta: float
    gamma: float
    mu: float = 0.0
    family: ClassVar[str] = "nig"
    alpha: ClassVar[float] = 1.0

    def __post_init__(self):
        _positive("theta", self.theta)
        _positive("gamma", self.gamma)
        _finite("beta", self.beta)
        _finite("mu", self.mu)

    def _kappa(self, w):
        base = self.theta - self.beta * w - 0.5 * self.gamma**2 * w * w
        return (self.mu - self.beta) * w + 2.0 * self.theta - 2.0 * math.sqrt(self.theta) * base**0.5

    def _kappa_prime(self, w):
        return _nts_kappa_prime(1.0, self.theta, self.beta, self.gamma, self.mu, w)

    def _power_terms(self, w):
        return _nts_power_terms(1.0, self.theta, self.beta, self.gamma, self.mu, w)

    def moment_interval(self) -> ExpMomentInterval:
        return _nts_interval(self.theta, self.beta, self.gamma)

    def as_nts(self) -> NTS:
        return NTS(1.0, self.theta, self.beta, self.gamma, self.mu)


@dataclass(frozen=True)
class CGMY(LevyModel):
    """CGMY tempered stable process CGMY(alpha, C, lambda_plus, lambda_minus, mu).

    ``mu`` is the mean of ``X(1)``; the compensating linear term is built in.
    """

    alpha: float
    c: float
    lambda_plus: float
    lambda_minus: float
    mu: float = 0.0
    family: ClassVar[str] = "cgmy"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        if abs(self.alpha - 1.0) < 1e-12:
            raise ParameterError("CGMY alpha = 1 is not supported (Gamma(-alpha) has a pole)")
        _positive("c", self.c)
        _positive("lambda_plus", self.lambda_plus)
        _positive("lambda_minus", self.lambda_minus)
        _finite("mu", self.mu)

    @cached_property
    def linear_drift(self) -> float:
        """Coefficient of ``w`` in ``kappa`` (the drift of the uncompensated jumps)."""
        a, lp, lm = self.alpha, self.lambda_plus, self.lambda_minus
        return self.mu - self.c * gamma_fn(1.0 - a) * (lp ** (a - 1.0) - lm ** (a - 1.0))

    @cached_property
    def _jump_scale(self) -> float:
        return float(self.c * gamma_fn(-self.alpha))

    def _kappa(self, w):
        a, lp, lm = self.alpha, self.lambda_plus, self.lambda_minus
        # complex powers on both sides so that kappa(0) is exactly zero
        jumps = (lp - w) ** a - np.complex128(lp) ** a + (lm + w) ** a - np.complex128(lm) ** a
        return self.linear_drift * w + self._jump_scale * jumps

    def _kappa_prime(self, w):
        a, lp, lm = self.alpha, self.lambda_plus, self.lambda_minus
        return self.linear_drift + self._jump_scale * a * ((lm + w) ** (a - 1.0) - (lp - w) ** (a - 1.0))

    def _power_terms(self, w):
        a, lp, lm, j = self.alpha, self.lambda_plus, self.lambda_minus, self._jump_scale
        poly = self.linear_drift * w - j * (lp**a + lm**a)
        return poly, self.linear_drift, [(j, lp - w, -1.0, a), (j, lm + w, 1.0, a)]

    def moment_interval(self) -> ExpMomentInterval:
        return ExpMomentInterval(-self.lambda_minus, self.lambda_plus)


FAMILIES: dict[str, type[LevyModel]] = {
    "bm": BrownianMotion,
    "nig": NIG,
    "nts": NTS,
    "cgmy": CGMY,
}


def levy_symbol(model: LevyModel, z):
    """Lévy symbol ``psi(z) = log E[exp(i z X(1))]``.

    Raises :class:`DomainError` when ``Im(z)`` leaves ``[-a_max, -a_min]``.
    """
    z = np.asarray(z, dtype=complex)
    return model.kappa(1j * z)


def chf(model: LevyModel, t: float, z):
    """Characteristic function of ``X(t)``: ``exp(t psi(z))``."""
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t!r}")
    return np.exp(t * levy_symbol(model, z))


def exp_moment_interval(model: LevyModel) -> ExpMomentInterval:
    return model.moment_interval()


def standardize(family: str, **shape) -> LevyModel:
    """Build the zero-mean, unit-variance member of ``family``.

    ``nts`` takes ``alpha, theta, beta``; ``nig`` takes ``theta, beta``;
    ``cgmy`` takes ``alpha, lambda_plus, lambda_minus``; ``bm`` takes nothing.
    """
    family = family.lower()
    try:
        if family == "bm":
            return BrownianMotion(sigma=1.0, mu=0.0)
        if family in ("nts", "nig"):
            alpha = 1.0 if family == "nig" else float(shape["alpha"])
            theta, beta = float(shape["theta"]), float(shape["beta"])
            if not 0.0 < alpha < 2.0:
                raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")
            _positive("theta", theta)
            bound = math.sqrt(2.0 * theta / (2.0 - alpha))
            if not abs(beta) < bound:
                raise ParameterError(f"|beta| must be below {bound:.6g} for a standard {family.upper()}")
            gamma = math.sqrt(1.0 - beta * beta * (2.0 - alpha) / (2.0 * theta))
            if family == "nig":
                return NIG(theta, beta, gamma, 0.0)
            return NTS(alpha, theta, beta, gamma, 0.0)
        if family == "cgmy":
            alpha = float(shape["alpha"])
            lp, lm = float(shape["lambda_plus"]), float(shape["lambda_minus"])
            _positive("lambda_plus", lp)
            _positive("lambda_minus", lm)
            if not 0.0 < alpha < 2.0 or abs(alpha - 1.0) < 1e-12:
                raise ParameterError(f"alpha must lie in (0, 2) and differ from 1, got {alpha!r}")
            c = 1.0 / (gamma_fn(2.0 - alpha) * (lp ** (alpha - 2.0) + lm ** (alpha - 2.0)))
            return CGMY(alpha, c, lp, lm, 0.0)
    except KeyError as exc:
        raise ParameterError(f"missing shape parameter {exc.args[0]!r} for {family}") from None
    raise ParameterError(f"unknown family {family!r}")


def _build(family: str, shape: Mapping[str, float], mu: float) -> LevyModel:
    family = family.lower()
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}")
    kwargs = {k: float(v) for k, v in shape.items() if k != "mu"}
    try:
        return FAMILIES[family](**kwargs, mu=mu)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {family}: {exc}") from None


def risk_neutral_drift(family: str, shape: Mapping[str, float], r: float, d: float) -> float:
    """Drift ``mu`` making ``exp(-(r - d) t) S(t)`` a martingale.

    ``kappa`` is affine in ``mu`` with slope ``w``, so the drift solves
    ``mu + kappa_0(1) = r - d`` where ``kappa_0`` is the zero-drift cumulant.
    """
    base = _build(family, shape, 0.0)
    if not base.moment_interval().interior(1.0):
        iv = base.moment_interval()
        raise MomentError(
            f"E[exp(X(1))] is undefined: 1 is not interior to [{iv.a_min:.6g}, {iv.a_max:.6g}]"
        )
    return float(r - d - base.kappa(1.0).real)


def risk_neutral(model: LevyModel, r: float, d: float) -> LevyModel:
    """Copy of ``model`` with its drift replaced by the risk-neutral one."""
    shape = {k: v for k, v in model.params().items() if k != "mu"}
    return model.with_mu(risk_neutral_drift(model.family, shape, r, d))


_CONFIG_KEYS = {
    "bm": ("sigma", "mu"),
    "nig": ("theta", "beta", "gamma", "mu"),
    "nts": ("alpha", "theta", "beta", "gamma", "mu"),
    "cgmy": ("alpha", "c", "lambda_plus", "lambda_minus", "mu"),
}


def model_from_config(config: Mapping) -> LevyModel:
    """Model from ``{"family": ..., "params": {...}, "standard": bool}``."""
    try:
        family = str(config["family"]).lower()
    except KeyError:
        raise ParameterError("config needs a 'family' entry") from None
    params = dict(config.get("params", {}))
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}")
    if config.get("standard", False):
        return standardize(family, **params)
    unknown = set(params) - set(_CONFIG_KEYS[family])
    if unknown:
        raise ParameterError(f"unknown {family} parameters: {sorted(unknown)}")
    mu = float(params.pop("mu", 0.0))
    return _build(family, params, mu)


def load_model(path) -> LevyModel:
    with open(Path(path), encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    return model_from_config(config)
