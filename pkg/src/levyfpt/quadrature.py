"""Quadrature grids for half-line Fourier integrals.

All integrands handled here are Hermitian (``g(-u) = conj(g(u))``), so the
full-line integral is ``2 Re`` of the half-line one and only ``u >= 0`` is
sampled.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError

RULES = ("trapezoid", "simpson", "gauss")

_GAUSS_ORDER = 16


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation and discretisation of a Fourier integral.

    ``u_max=None`` lets the caller pick the truncation from the decay of the
    integrand (``tol`` bounds the modulus at the cut).  ``n_points`` is the
    grid size for the uniform rules and the node budget for ``gauss``.
    """

    u_max: float | None = 200.0
    n_points: int | None = 4096
    rule: str = "trapezoid"
    tol: float = 1e-8

    def __post_init__(self):
        if self.rule not in RULES:
            raise ParameterError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.u_max is not None and not self.u_max > 0:
            raise ParameterError(f"u_max must be positive, got {self.u_max!r}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol!r}")
        if self.n_points is not None and self.rule != "gauss":
            n = self.n_points
            if n < 64 or n & (n - 1):
                raise ParameterError(f"n_points must be a power of two >= 64, got {n!r}")


def uniform_half_line(u_max: float, n: int, rule: str = "trapezoid"):
    """Nodes/weights on ``[0, u_max]`` with ``n`` intervals."""
    u = np.linspace(0.0, u_max, n + 1)
    h = u_max / n
    if rule == "trapezoid":
        w = np.full(n + 1, h)
        w[0] = w[-1] = 0.5 * h
    elif rule == "simpson":
        w = np.full(n + 1, 2.0 * h / 3.0)
        w[1::2] = 4.0 * h / 3.0
        w[0] = w[-1] = h / 3.0
    else:
        raise ParameterError(f"uniform grid does not support rule {rule!r}")
    return u, w


@lru_cache(maxsize=None)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_half_line(u_max: float, panel_width: float, *, grade_from: float = 1.0,
                    grade_ratio: float = 0.3, grade_levels: int = 22):
    """Composite Gauss-Legendre nodes on ``[0, u_max]``.

    Panels shrink geometrically toward ``u = 0`` so square-root type
    behaviour at the origin is integrated accurately; beyond ``grade_from``
    the panels are uniform with width at most ``panel_width``.
    """
    head = min(grade_from, u_max)
    edges = [head * grade_ratio**k for k in range(grade_levels, 0, -1)]
    edges = [0.0] + edges + [head]
    if u_max > head:
        n_uniform = int(np.ceil((u_max - head) / panel_width))
        edges.extend(np.linspace(head, u_max, n_uniform + 1)[1:].tolist())
    edges = np.asarray(edges)
    x, wx = _legendre(_GAUSS_ORDER)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x[None, :] + 1.0)).ravel()
    weights = (half * wx[None, :]).ravel()
    return nodes, weights
