"""First-passage times through a level via the martingale root condition.

For a level ``l`` the first passage time ``tau(l)`` has approximate
characteristic function ``exp(-l * eta(u))`` where ``eta(u)`` solves

    i u + kappa(eta(u)) = 0,        kappa(w) = log E[exp(w X(1))],

on the branch with ``Re(-l * eta(u)) <= 0``.  Brownian motion and NIG have
closed-form roots; NTS and CGMY are solved by damped complex Newton with
continuation in ``u`` starting from the real root at ``u = 0``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BranchError,
    ConvergenceError,
    DomainError,
    ParameterError,
    QuadratureError,
)
from .levy import NIG, BrownianMotion, LevyModel
from .quadrature import QuadratureSpec, gauss_half_line, uniform_half_line

__all__ = [
    "UP",
    "DOWN",
    "FptProblem",
    "EtaBranch",
    "PdfGrid",
    "eta_bm",
    "eta_nig",
    "eta_numeric",
    "eta",
    "root_residual",
    "eta_with_residual",
    "fpt_chf",
    "fpt_pdf",
    "fpt_laplace",
    "DEFAULT_PDF_QUADRATURE",
]

UP = "up"
DOWN = "down"

# admissibility slack for sign(l) * Re(eta)
BRANCH_TOL = 1e-12
# target for |i u + kappa(eta)|
RESIDUAL_TOL = 1e-10

DEFAULT_PDF_QUADRATURE = QuadratureSpec(u_max=None, n_points=None, rule="gauss", tol=1e-8)


def _direction_sign(direction) -> int:
    if direction in (UP, +1):
        return 1
    if direction in (DOWN, -1):
        return -1
    raise ParameterError(f"direction must be 'up' or 'down', got {direction!r}")


@dataclass(frozen=True)
class FptProblem:
    """First passage of ``model`` through the log-level ``level``."""

    model: LevyModel
    level: float

    def __post_init__(self):
        if not (math.isfinite(self.level) and self.level != 0.0):
            raise ParameterError(f"level must be finite and nonzero, got {self.level!r}")

    @property
    def sign(self) -> int:
        return 1 if self.level > 0 else -1

    @property
    def direction(self) -> str:
        return UP if self.level > 0 else DOWN


@dataclass(frozen=True)
class EtaBranch:
    direction: str
    solver: str
    tolerance: float = RESIDUAL_TOL


@dataclass
class PdfGrid:
    """First-passage density sampled on ``t``.

    ``total_mass`` is ``P(tau < inf) = exp(-l eta(0))``; ``grid_mass`` is the
    trapezoid integral of ``density`` over the supplied grid only.
    """

    t: np.ndarray
    density: np.ndarray
    total_mass: float
    grid_mass: float
    tail_bound: float
    u_max: float


def branch_info(model: LevyModel, direction) -> EtaBranch:
    solver = "closed-form" if isinstance(model, (BrownianMotion, NIG)) else "numeric"
    return EtaBranch(UP if _direction_sign(direction) > 0 else DOWN, solver)


def root_residual(model: LevyModel, eta_value, u):
    """``|i u + kappa(eta)|``; zero for an exact root."""
    return np.abs(1j * np.asarray(u) + model.kappa(eta_value, check=False))


def _check_branch(sign: int, eta_value, what: str) -> None:
    bad = sign * np.real(eta_value) < -BRANCH_TOL * np.maximum(1.0, np.abs(eta_value))
    if np.any(bad):
        worst = np.min(sign * np.real(eta_value))
        raise BranchError(
            f"{what}: root violates Re(-l*eta) <= 0 (sign(l)*Re(eta) reaches {worst:.4g}); "
            "no admissible first-passage root for this direction"
        )


# --------------------------------------------------------------------------
# closed forms


def eta_bm(mu: float, sigma: float, direction, u):
    """Closed-form root for ``mu t + sigma W(t)``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma!r}")
    s = _direction_sign(direction)
    u = np.asarray(u, dtype=complex)
    root = np.sqrt(mu * mu - 2.0 * sigma * sigma * 1j * u)
    out = (-mu + s * root) / (sigma * sigma)
    return out[()] if out.ndim == 0 else out


def eta_nig(model: NIG, direction, u, check_branch: bool = True):
    """Closed-form root of the squared NIG condition (``+`` root up, ``-`` down)."""
    s = _direction_sign(direction)
    theta, beta, gamma, mu = model.theta, model.beta, model.gamma, model.mu
    u = np.asarray(u, dtype=complex)
    # on the real line solve at |u| and reflect, keeping the sqrt off its cut
    flip = (u.imag == 0) & (u.real < 0)
    w = np.where(flip, -u, u)
    lin = 2.0 * mu * theta + (mu - beta) * 1j * w
    quad = (mu - beta) ** 2 + 2.0 * theta * gamma * gamma
    disc = lin * lin + quad * (w * w - 4.0 * theta * 1j * w)
    out = (-lin + s * np.sqrt(disc)) / quad
    out = np.where(flip, np.conj(out), out)
    if check_branch:
        _check_branch(s, out, "eta_nig")
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# real roots on the imaginary axis (u = i r)


def _real_root(model: LevyModel, sign: int, target: float) -> float:
    """Real ``eta`` with ``kappa(eta) = target`` on the side ``sign * eta >= 0``.

    For ``target = 0`` this is the branch rule at ``u = 0``: zero when the
    drift points at the barrier, else the nonzero root of ``kappa``.
    """
    if target < 0:
        raise ParameterError(f"rate must be nonnegative, got {target!r}")

    def k(x: float) -> float:
        return model._kappa(complex(x)).real

    def kp(x: float) -> float:
        return model._kappa_prime(complex(x)).real

    iv = model.moment_interval()
    end = iv.a_max if sign > 0 else iv.a_min
    slope0 = sign * kp(0.0)
    if target == 0.0 and slope0 >= -1e-12:
        return 0.0

    # start of the bracket: a point on the admissible side with kappa < target
    if target > 0.0:
        lo = 0.0
    else:
        # kappa dips below zero on this side; its minimiser is where kappa' = 0
        # kappa' may be singular on the boundary itself
        hi_d = end - sign * 1e-12 * max(1.0, abs(end)) if math.isfinite(end) else sign * 1.0
        while not math.isfinite(end) and sign * kp(hi_d) <= 0:
            hi_d *= 2.0
        if math.isfinite(end) and sign * kp(hi_d) <= 0:
            raise DomainError("kappa has no admissible nonzero root inside the moment strip")
        lo = brentq(kp, 0.0, hi_d, xtol=1e-15, rtol=1e-15)

    hi = end if math.isfinite(end) else sign * max(1.0, 2.0 * abs(lo))
    if math.isfinite(end):
        if k(end) < target:
            raise DomainError(
                f"no admissible root of kappa(eta) = {target:g} inside the moment strip "
                f"(kappa at the boundary {end:.6g} is {k(end):.6g})"
            )
    else:
        while k(hi) < target:
            hi *= 2.0
    f = lambda x: k(x) - target  # noqa: E731
    root = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return float(root)


# --------------------------------------------------------------------------
# Newton continuation for NTS / CGMY
#
# kappa contains fractional powers b(w) ** a.  Along the root path a base
# may cross the negative real axis; the root is continued analytically by
# following arg(b) continuously ("sheet tracking") instead of snapping back
# to the principal branch.  ``ref`` holds the continuous arguments at the
# previously accepted point.

_TWO_PI = 2.0 * math.pi


def _kappa_sheet(model: LevyModel, w: complex, ref):
    """``(kappa, kappa', args)`` on the sheet nearest to the arguments ``ref``."""
    poly, dpoly, terms = model._power_terms(w)
    val, der, args = poly, dpoly, []
    for j, (c, b, db, a) in enumerate(terms):
        lg = cmath.log(b)
        if ref is not None:
            k = round((ref[j] - lg.imag) / _TWO_PI)
            if k:
                lg += 1j * _TWO_PI * k
        args.append(lg.imag)
        e = cmath.exp(a * lg)
        val += c * e
        der += c * a * (e / b) * db
    return complex(val), complex(der), args


def _newton(model: LevyModel, u: float, eta0: complex, ref, maxiter: int = 60):
    """Damped Newton on ``i u + kappa(eta)``; returns (eta, residual, args, converged)."""
    target = 2e-15 + 1e-13 * abs(u)
    eta_k = complex(eta0)
    try:
        kv, kd, args = _kappa_sheet(model, eta_k, ref)
    except (ZeroDivisionError, OverflowError, ValueError):
        return eta_k, math.inf, ref, False
    f = 1j * u + kv
    res = abs(f)
    for _ in range(maxiter):
        if res <= target:
            return eta_k, res, args, True
        if kd == 0:
            return eta_k, res, args, False
        step = f / kd
        lam = 1.0
        while True:
            trial = eta_k - lam * step
            try:
                kv_t, kd_t, args_t = _kappa_sheet(model, trial, ref)
                r_trial = abs(1j * u + kv_t)
            except (ZeroDivisionError, OverflowError, ValueError):
                r_trial = math.inf
            if r_trial < res or lam < 1e-8:
                break
            lam *= 0.5
        if not r_trial < res:
            # stagnation at round-off level
            return eta_k, res, args, res <= 100 * target
        eta_k, kd, args, res = trial, kd_t, args_t, r_trial
        f = 1j * u + kv_t
    return eta_k, res, args, res <= 100 * target


def _second_derivative(model: LevyModel, x: complex) -> complex:
    h = 1e-5 * max(1.0, abs(x))
    return (model._kappa_prime(x + h) - model._kappa_prime(x - h)) / (2.0 * h)


def _seed_from_zero(model: LevyModel, sign: int, eta0: float, u: float) -> complex:
    """Quadratic expansion of the root near ``u = 0`` around the real root ``eta0``."""
    k1 = complex(model._kappa_prime(complex(eta0)))
    k2 = _second_derivative(model, complex(eta0))
    if abs(k2) < 1e-300:
        return eta0 - 1j * u / k1
    disc = cmath.sqrt(k1 * k1 - 2.0 * k2 * 1j * u)
    cands = [(-k1 + disc) / k2, (-k1 - disc) / k2]
    mags = [abs(c) for c in cands]
    if abs(mags[0] - mags[1]) <= 1e-9 * max(mags):
        delta = max(cands, key=lambda c: sign * c.real)
    else:
        delta = cands[int(np.argmin(mags))]
    return eta0 + delta


def _advance(model: LevyModel, u0: float, e0: complex, ref, u1: float, depth: int = 0):
    """Continue a root from ``(u0, e0)`` to ``u1``; returns (eta, residual, args)."""
    try:
        _, kd, _ = _kappa_sheet(model, e0, ref)
        pred = e0 + (u1 - u0) * (-1j / kd)
    except (ZeroDivisionError, OverflowError, ValueError):
        pred = e0
    e1, res, args, ok = _newton(model, u1, pred, ref)
    if ok and abs(e1 - pred) <= 0.3 * abs(pred - e0) + 1e-9 * (1.0 + abs(e1)):
        return e1, res, args
    if depth > 48:
        raise ConvergenceError(f"root continuation stalled near u = {u1:.6g}", best=e1)
    mid = 0.5 * (u0 + u1)
    em, _, ref_m = _advance(model, u0, e0, ref, mid, depth + 1)
    return _advance(model, mid, em, ref_m, u1, depth + 1)


def _start(model: LevyModel, sign: int, eta0: float, ref, u1: float, depth: int = 0):
    """Root at a small positive ``u`` reached from ``u = 0``; returns (u, eta, res, args)."""
    seed = _seed_from_zero(model, sign, eta0, u1)
    e1, res, args, ok = _newton(model, u1, seed, ref)
    if ok and abs(e1 - seed) <= 0.3 * abs(seed - eta0) + 1e-12:
        return u1, e1, res, args
    if depth > 60:
        raise ConvergenceError("could not leave u = 0 on the requested branch", best=e1)
    return _start(model, sign, eta0, ref, 0.5 * u1, depth + 1)


_LOCAL_U = 1e-6


def _continuation(model: LevyModel, sign: int, u_sorted: np.ndarray, eta_at_zero: float):
    """Roots and residuals at increasing nonnegative ``u_sorted``, continued from zero."""
    roots = np.empty(u_sorted.shape, dtype=complex)
    resid = np.empty(u_sorted.shape, dtype=float)
    ref0 = _kappa_sheet(model, complex(eta_at_zero), None)[2]
    u_prev, e_prev, ref = 0.0, complex(eta_at_zero), ref0
    for i, u in enumerate(u_sorted):
        u = float(u)
        if u == 0.0:
            roots[i] = eta_at_zero
            resid[i] = abs(_kappa_sheet(model, complex(eta_at_zero), ref0)[0])
            continue
        if u < _LOCAL_U:
            # local expansion is accurate here; Newton only polishes it
            seed = _seed_from_zero(model, sign, eta_at_zero, u)
            e1, res, _, ok = _newton(model, u, seed, ref0)
            if not (ok and abs(e1 - seed) <= 0.3 * abs(seed - eta_at_zero) + 1e-15):
                e1 = seed
                res = abs(1j * u + _kappa_sheet(model, seed, ref0)[0])
            roots[i], resid[i] = e1, res
            continue
        if u_prev == 0.0:
            u_prev, e_prev, _, ref = _start(model, sign, eta_at_zero, ref0,
                                           max(min(u, 1e-4), _LOCAL_U))
        e_prev, res, ref = _advance(model, u_prev, e_prev, ref, u)
        u_prev = u
        roots[i], resid[i] = e_prev, res
    return roots, resid


def eta_numeric(model: LevyModel, direction, u, warm_start: complex | None = None,
                strict: bool = True, return_residual: bool = False):
    """Numeric root of ``i u + kappa(eta) = 0`` by continuation from ``u = 0``.

    ``u`` is real (scalar or array) or purely imaginary (``u = i r``, real
    root).  With ``warm_start`` a Newton solve on the principal sheet is
    tried first; if it fails or leaves the admissible side, continuation from
    ``u = 0`` is used instead.  ``strict`` enforces the admissible branch
    and raises :class:`BranchError` otherwise.  With ``return_residual`` the
    residual of the analytically continued root condition is returned too.
    """
    if isinstance(model, BrownianMotion):
        raise ParameterError("Brownian motion has a closed-form root; use eta_bm")
    sign = _direction_sign(direction)
    u = np.asarray(u)
    if np.iscomplexobj(u) and np.any(u.imag != 0):
        if np.any(u.real != 0):
            raise DomainError("eta is available on the real line and the imaginary axis only")
        out = np.array([_real_root(model, sign, float(r)) for r in u.imag.ravel()],
                       dtype=complex).reshape(u.shape)
        res = root_residual(model, out, u)
    elif warm_start is not None:
        if u.ndim != 0:
            raise ParameterError("warm_start is only supported for scalar u")
        uf = float(np.real(u))
        e1, r1, _, ok = _newton(model, uf, complex(warm_start), None)
        # principal-sheet Newton is only trusted when it stays admissible and near the hint
        near = abs(e1 - complex(warm_start)) <= 0.5 * max(1.0, abs(complex(warm_start)))
        if ok and r1 <= RESIDUAL_TOL * max(1.0, abs(uf)) and sign * e1.real >= -BRANCH_TOL and near:
            out, res = np.asarray(e1), np.asarray(r1)
        else:
            out, res = _eta_real_grid(model, sign, np.asarray(uf))
    else:
        out, res = _eta_real_grid(model, sign, np.real(u).astype(float))
    if strict:
        _check_branch(sign, out, "eta_numeric")
    if out.ndim == 0:
        out, res = out[()], float(res)
    return (out, res) if return_residual else out


def _eta_real_grid(model: LevyModel, sign: int, u: np.ndarray):
    """Continuation on ``|u|`` and Hermitian symmetry ``eta(-u) = conj(eta(u))``."""
    flat = u.ravel()
    a = np.abs(flat)
    order = np.unique(a)
    eta0 = _real_root(model, sign, 0.0)
    roots, resid = _continuation(model, sign, order, eta0)
    idx = np.searchsorted(order, a)
    vals = np.where(flat < 0, np.conj(roots[idx]), roots[idx])
    res = resid[idx]
    if np.any(res > RESIDUAL_TOL * np.maximum(1.0, a)):
        raise ConvergenceError(f"root residual {res.max():.3g} exceeds tolerance")
    return vals.reshape(u.shape), res.reshape(u.shape)


def eta(model: LevyModel, direction, u, strict: bool = True):
    """Dispatching root solver: closed form for BM and NIG, continuation otherwise."""
    if isinstance(model, BrownianMotion):
        out = eta_bm(model.mu, model.sigma, direction, u)
        if np.iscomplexobj(np.asarray(u)) and np.all(np.real(u) == 0):
            out = np.real(out) + 0j
        return out
    if isinstance(model, NIG):
        uu = np.asarray(u)
        if np.iscomplexobj(uu) and np.any(uu.imag != 0):
            return eta_numeric(model, direction, u, strict=strict)
        return eta_nig(model, direction, u, check_branch=strict)
    return eta_numeric(model, direction, u, strict=strict)


def eta_with_residual(model: LevyModel, direction, u, strict: bool = False):
    """Root on a real ``u`` grid with the residual of the continued root condition."""
    if isinstance(model, BrownianMotion):
        e = eta_bm(model.mu, model.sigma, direction, u)
        if strict:
            _check_branch(_direction_sign(direction), e, "eta_bm")
        return e, root_residual(model, e, u)
    return eta_numeric(model, direction, u, strict=strict, return_residual=True)


# --------------------------------------------------------------------------
# first-passage transforms


def fpt_chf(problem: FptProblem, u, strict: bool = True):
    """``E[exp(i u tau(l))] ~= exp(-l * eta(u))``."""
    e = eta(problem.model, problem.sign, u, strict=strict)
    return np.exp(-problem.level * e)


def fpt_laplace(problem: FptProblem, r: float) -> float:
    """Real root ``eta(i r)`` of ``kappa(eta) = r`` on the admissible side.

    ``exp(-l * eta(i r))`` is the Laplace transform ``E[exp(-r tau(l))]``.
    """
    if r < 0:
        raise ParameterError(f"r must be nonnegative, got {r!r}")
    model = problem.model
    if isinstance(model, BrownianMotion):
        return float(np.real(eta_bm(model.mu, model.sigma, problem.sign, 1j * r)))
    if isinstance(model, NIG):
        val = complex(eta_nig(model, problem.sign, 1j * r, check_branch=False))
        if abs(val.imag) < 1e-12 * max(1.0, abs(val)) and abs(
            complex(model._kappa(complex(val.real))) - r
        ) <= RESIDUAL_TOL * max(1.0, r):
            return float(val.real)
    return _real_root(model, problem.sign, float(r))


def _auto_u_max(problem: FptProblem, tol: float, strict: bool) -> tuple[float, float]:
    """Smallest power-of-two ``U`` with ``|phi(U)| < tol`` (and stays below)."""
    u = 1.0
    while u < 2.0**22:
        vals = np.abs(fpt_chf(problem, np.array([u, 1.5 * u, 2.0 * u]), strict=strict))
        if np.all(vals < tol):
            return u, float(vals[0])
        u *= 2.0
    raise QuadratureError(
        f"|phi_tau(u)| does not fall below {tol:g} for |u| < {u:g}; density inversion not possible"
    )


def fpt_pdf(problem: FptProblem, t_grid, quad: QuadratureSpec | None = None,
            clip: float = 1e-8) -> PdfGrid:
    """Density of ``tau(l)`` on ``t_grid`` by Fourier inversion of ``exp(-l eta)``.

    ``f(t) = (1/pi) Re int_0^inf exp(-i u t - l eta(u)) du``.  The default
    rule is composite Gauss-Legendre graded toward ``u = 0``; ``trapezoid`` and
    ``simpson`` use a uniform grid of ``quad.n_points`` intervals.
    """
    quad = quad or DEFAULT_PDF_QUADRATURE
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ParameterError("t_grid must be a nonempty, positive, strictly increasing 1-d array")
    if quad.u_max is None:
        u_max, _ = _auto_u_max(problem, quad.tol, strict=True)
    else:
        u_max = float(quad.u_max)
    if quad.rule == "gauss":
        width = min(1.0, 8.0 / t[-1])
        nodes, weights = gauss_half_line(u_max, width)
        if quad.n_points is not None and nodes.size > quad.n_points:
            raise QuadratureError(
                f"gauss rule needs {nodes.size} nodes for t up to {t[-1]:g}, budget is {quad.n_points}"
            )
    else:
        n = quad.n_points or 2**14
        nodes, weights = uniform_half_line(u_max, n, quad.rule)
    phi = fpt_chf(problem, nodes)
    tail = float(np.abs(phi[-1]))
    if tail > quad.tol:
        raise QuadratureError(f"|phi_tau(u_max)| = {tail:.3g} exceeds tolerance {quad.tol:g}")
    dens = np.empty_like(t)
    wphi = weights * phi
    for start in range(0, t.size, 512):
        block = t[start:start + 512]
        kern = np.exp(-1j * np.outer(block, nodes))
        dens[start:start + 512] = (kern @ wphi).real / math.pi
    low = dens.min()
    if low < -clip:
        raise QuadratureError(f"density has negative values down to {low:.3g}; refine the quadrature")
    dens = np.maximum(dens, 0.0)
    total = float(np.real(fpt_chf(problem, 0.0)))
    grid_mass = float(np.trapezoid(dens, t)) if t.size > 1 else 0.0
    return PdfGrid(t=t, density=dens, total_mass=total, grid_mass=grid_mass,
                   tail_bound=tail, u_max=u_max)
