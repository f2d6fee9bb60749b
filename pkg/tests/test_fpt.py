from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import standard_models
from levyfpt import (
    DOWN,
    NIG,
    NTS,
    UP,
    BrownianMotion,
    BranchError,
    DomainError,
    FptProblem,
    ParameterError,
    QuadratureError,
    QuadratureSpec,
    eta,
    eta_bm,
    eta_nig,
    eta_numeric,
    eta_with_residual,
    fpt_chf,
    fpt_laplace,
    fpt_pdf,
    root_residual,
    standardize,
)
from levyfpt.quadrature import gauss_half_line

U_GRID = np.linspace(-100.0, 100.0, 201)
DIRECTIONS = (UP, DOWN)


def inverse_gaussian(t, level, mu, sigma):
    """Defective first-passage density of ``mu t + sigma W`` through ``level``."""
    return abs(level) / (sigma * np.sqrt(2 * np.pi * t**3)) * np.exp(-(level - mu * t) ** 2 / (2 * sigma**2 * t))


# --------------------------------------------------------------------------
# roots


@pytest.mark.parametrize("name", list(standard_models()))
@pytest.mark.parametrize("direction", DIRECTIONS)
def test_root_residual_and_branch(name, direction):
    model = standard_models()[name]
    e, res = eta_with_residual(model, direction, U_GRID, strict=True)
    assert res.max() < 1e-10
    sign = 1 if direction == UP else -1
    assert np.all(sign * e.real >= -1e-12)


@pytest.mark.parametrize("name", list(standard_models()))
def test_root_is_hermitian(name):
    model = standard_models()[name]
    e = eta(model, UP, U_GRID)
    np.testing.assert_allclose(e[::-1], np.conj(e), rtol=0, atol=1e-12)


def test_bm_closed_form():
    u = U_GRID
    e = eta_bm(0.0, 1.0, UP, u)
    np.testing.assert_allclose(np.exp(-3 * e), np.exp(-3 * np.sqrt(-2j * u)), rtol=1e-12)
    assert np.max(np.abs(root_residual(BrownianMotion(), e, u))) < 1e-12


@pytest.mark.parametrize("mu,sigma", [(0.3, 1.0), (-0.5, 2.0), (0.0, 0.4)])
@pytest.mark.parametrize("direction", DIRECTIONS)
def test_bm_root_condition(mu, sigma, direction):
    model = BrownianMotion(sigma, mu)
    e = eta_bm(mu, sigma, direction, U_GRID)
    assert np.max(np.abs(root_residual(model, e, U_GRID))) < 1e-12


@pytest.mark.parametrize("beta", [-0.6, -0.3, 0.0, 0.3, 0.6])
@pytest.mark.parametrize("direction", DIRECTIONS)
def test_nig_closed_form_matches_continuation(beta, direction):
    model = standardize("nig", theta=1.0, beta=beta).with_mu(0.2 * beta)
    closed = eta_nig(model, direction, U_GRID)
    numeric = eta_numeric(model, direction, U_GRID)
    np.testing.assert_allclose(closed, numeric, rtol=0, atol=1e-8)


def test_nts_alpha_one_continuation_matches_nig():
    nig = NIG(2.0, -0.4, 0.8, 0.1)
    nts = NTS(1.0, 2.0, -0.4, 0.8, 0.1)
    for direction in DIRECTIONS:
        np.testing.assert_allclose(eta_numeric(nts, direction, U_GRID),
                                   eta_nig(nig, direction, U_GRID), atol=1e-8)


@pytest.mark.parametrize("name", ["nts-", "cgmy-a", "cgmy-b"])
def test_warm_start_agrees_with_continuation(name):
    model = standard_models()[name]
    grid = eta_numeric(model, UP, np.array([10.0, 10.5]))
    warm = eta_numeric(model, UP, 10.5, warm_start=grid[0])
    assert abs(warm - grid[1]) < 1e-10


@pytest.mark.parametrize("name", ["nig", "nts-", "cgmy-a"])
@pytest.mark.parametrize("direction", DIRECTIONS)
def test_imaginary_axis_root_is_real(name, direction):
    model = standard_models()[name]
    for r in (0.0, 0.05, 1.0):
        e = complex(eta(model, direction, 1j * r))
        assert abs(e.imag) == 0.0
        assert model.kappa(e.real, check=False).real == pytest.approx(r, abs=1e-11)


def test_eta_numeric_rejects_bm_and_general_complex():
    with pytest.raises(ParameterError):
        eta_numeric(BrownianMotion(), UP, 1.0)
    with pytest.raises(DomainError):
        eta_numeric(standard_models()["nig"], UP, 1.0 + 1.0j)


@pytest.mark.parametrize("model,direction", [
    (standardize("nts", alpha=0.3, theta=1.0, beta=0.0), UP),
    (standardize("nts", alpha=0.3, theta=1.0, beta=0.0), DOWN),
    (standardize("cgmy", alpha=0.2, lambda_plus=3.0, lambda_minus=1.0), DOWN),
])
def test_small_alpha_has_no_admissible_root(model, direction):
    # below alpha = 1/2 the continued root drifts to arg(eta) -> pi / (2 alpha) - pi / 2
    u = np.linspace(0.0, 60.0, 61)
    with pytest.raises(BranchError):
        eta(model, direction, u)
    _, res = eta_with_residual(model, direction, u)
    assert res.max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.5, 1.9), beta=st.floats(-0.6, 0.6), u=st.floats(0.0, 60.0),
       up=st.booleans())
def test_nts_root_property(alpha, beta, u, up):
    model = standardize("nts", alpha=alpha, theta=1.0, beta=beta)
    direction = UP if up else DOWN
    e, res = eta_with_residual(model, direction, np.array([u]), strict=True)
    assert res[0] < 1e-10 * max(1.0, u)
    assert abs(np.exp(-(1.0 if up else -1.0) * e[0])) <= 1.0 + 1e-12


# --------------------------------------------------------------------------
# transforms


def test_fpt_chf_bounded_and_one_at_zero():
    for name, model in standard_models().items():
        for level in (2.0, -2.0):
            phi = fpt_chf(FptProblem(model, level), U_GRID)
            assert np.all(np.abs(phi) <= 1.0 + 1e-12)
            assert phi[100] == pytest.approx(1.0, abs=1e-12), name


@pytest.mark.parametrize("mu,level,sigma", [(-1.0, 3.0, 1.0), (0.5, -2.0, 1.0), (-0.2, 1.0, 0.5)])
def test_bm_defective_mass(mu, level, sigma):
    # P(tau < inf) = exp(-2 |mu l| / sigma^2) when the drift points away from the level
    phi0 = fpt_chf(FptProblem(BrownianMotion(sigma, mu), level), 0.0)
    assert phi0.real == pytest.approx(math.exp(-2 * abs(mu * level) / sigma**2), rel=1e-14)


@pytest.mark.parametrize("mu,sigma,level", [(0.0, 1.0, 3.0), (0.4, 1.0, 2.0), (0.0, 0.5, -1.0),
                                            (-0.3, 1.2, 1.5)])
def test_bm_pdf_matches_inverse_gaussian(mu, sigma, level):
    t = np.linspace(0.1, 30.0, 300)
    grid = fpt_pdf(FptProblem(BrownianMotion(sigma, mu), level), t)
    np.testing.assert_allclose(grid.density, inverse_gaussian(t, level, mu, sigma), rtol=0, atol=1e-7)


def test_pdf_total_mass_and_grid_mass():
    grid = fpt_pdf(FptProblem(BrownianMotion(1.0, -1.0), 3.0), np.linspace(0.01, 40.0, 4000))
    assert grid.total_mass == pytest.approx(math.exp(-6.0), rel=1e-12)
    assert grid.grid_mass == pytest.approx(grid.total_mass, rel=1e-3)


@pytest.mark.parametrize("name,level", [("nig", 1.5), ("nts-", -1.5), ("cgmy-a", -1.5)])
def test_two_sided_laplace_matches_real_root(name, level):
    # the inverse transform of exp(-l eta(u)) is integrated over all t, negative t included,
    # and must reproduce exp(-l eta(i r)) from the independent real-axis root
    model = standard_models()[name]
    problem = FptProblem(model, level)
    nodes, weights = gauss_half_line(300.0, 0.4)
    wphi = weights * fpt_chf(problem, nodes)
    t = np.linspace(-12.0, 40.0, 5201)
    f = np.concatenate([(np.exp(-1j * np.outer(t[i:i + 400], nodes)) @ wphi).real / np.pi
                        for i in range(0, t.size, 400)])
    r = 0.5
    numeric = np.trapezoid(np.exp(-r * t) * f, t)
    assert numeric == pytest.approx(math.exp(-level * fpt_laplace(problem, r)), abs=1e-7)


@pytest.mark.parametrize("name", ["nig", "nts-", "cgmy-a"])
def test_jump_models_leak_mass_to_negative_times(name):
    # exp(-l eta) ignores overshoot and is not the transform of a nonnegative time
    problem = FptProblem(standard_models()[name], -1.5)
    nodes, weights = gauss_half_line(300.0, 0.4)
    wphi = weights * fpt_chf(problem, nodes)
    t = np.linspace(-12.0, 0.0, 1201)
    f = (np.exp(-1j * np.outer(t, nodes)) @ wphi).real / np.pi
    assert np.trapezoid(f, t) > 1e-3


def test_bm_has_no_negative_time_mass():
    problem = FptProblem(BrownianMotion(), -1.5)
    nodes, weights = gauss_half_line(300.0, 0.4)
    wphi = weights * fpt_chf(problem, nodes)
    t = np.linspace(-12.0, -0.05, 200)
    f = (np.exp(-1j * np.outer(t, nodes)) @ wphi).real / np.pi
    assert np.abs(f).max() < 1e-9


def test_laplace_signs():
    model = standard_models()["nts-"]
    assert fpt_laplace(FptProblem(model, 1.0), 0.1) > 0
    assert fpt_laplace(FptProblem(model, -1.0), 0.1) < 0
    with pytest.raises(ParameterError):
        fpt_laplace(FptProblem(model, 1.0), -0.1)


def test_pdf_is_nonnegative_and_proper():
    for name, model in standard_models().items():
        grid = fpt_pdf(FptProblem(model, 3.0), np.linspace(0.01, 30.0, 3000))
        assert grid.density.min() >= -1e-8, name
        assert 0.0 < grid.grid_mass <= grid.total_mass + 1e-6


@pytest.mark.parametrize("rule", ["trapezoid", "simpson"])
def test_uniform_rules_converge_to_gauss(rule):
    # phi_tau has a sqrt(u) cusp at zero, so uniform rules converge like h^1.5
    problem = FptProblem(BrownianMotion(), 3.0)
    t = np.linspace(0.5, 10.0, 20)
    exact = inverse_gaussian(t, 3.0, 0.0, 1.0)
    np.testing.assert_allclose(fpt_pdf(problem, t).density, exact, atol=1e-9)
    errs = [np.abs(fpt_pdf(problem, t, QuadratureSpec(400.0, n, rule, 1e-8)).density - exact).max()
            for n in (2**14, 2**16)]
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 6.0


def test_pdf_errors():
    problem = FptProblem(BrownianMotion(), 3.0)
    with pytest.raises(ParameterError):
        fpt_pdf(problem, np.array([0.0, 1.0]))
    with pytest.raises(ParameterError):
        fpt_pdf(problem, np.array([2.0, 1.0]))
    with pytest.raises(QuadratureError):
        fpt_pdf(problem, np.array([1.0]), QuadratureSpec(u_max=0.5, n_points=64, rule="trapezoid", tol=1e-8))
    with pytest.raises(ParameterError):
        FptProblem(BrownianMotion(), 0.0)
