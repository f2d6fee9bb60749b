from __future__ import annotations

import pytest

from levyfpt import CGMY, NIG, NTS, BrownianMotion, MarketSpec, risk_neutral, standardize

SPOT = 1968.89
RATE = 0.0012
DIVIDEND = 0.0194

# calibrated shape parameters: call-chain fit, then put-chain fit
CALL_FIT = {
    "bm": BrownianMotion(sigma=0.1267),
    "nig": NIG(theta=5.1045, beta=-0.3356, gamma=0.1042),
    "nts": NTS(alpha=1.0808, theta=5.2150, beta=-0.3647, gamma=0.1010),
    "cgmy": CGMY(alpha=0.7250, c=0.5019, lambda_plus=73.5549, lambda_minus=11.5265),
}
PUT_FIT = {
    "bm": BrownianMotion(sigma=0.1396),
    "nig": NIG(theta=4.2571, beta=-0.3466, gamma=0.0984),
    "nts": NTS(alpha=1.0980, theta=4.4348, beta=-0.3864, gamma=0.0930),
    "cgmy": CGMY(alpha=0.7066, c=0.4743, lambda_plus=81.2931, lambda_minus=9.7529),
}

FAMILY_NAMES = ("bm", "nig", "nts", "cgmy")

# one status line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("abc:"))):
            terminalreporter.write_line(line)


def standard_models():
    """The standardized test processes used for root and density checks."""
    return {
        "bm": BrownianMotion(1.0, 0.0),
        "nig": standardize("nig", theta=1.0, beta=-0.3),
        "nts-": standardize("nts", alpha=1.25, theta=1.0, beta=-0.3),
        "nts+": standardize("nts", alpha=1.25, theta=1.0, beta=0.3),
        "cgmy-a": standardize("cgmy", alpha=0.75, lambda_plus=3.0, lambda_minus=1.0),
        "cgmy-b": standardize("cgmy", alpha=0.75, lambda_plus=1.0, lambda_minus=3.0),
    }


@pytest.fixture(scope="session")
def market() -> MarketSpec:
    return MarketSpec(SPOT, RATE, DIVIDEND)


@pytest.fixture(scope="session")
def rn_call_models() -> dict:
    return {k: risk_neutral(m, RATE, DIVIDEND) for k, m in CALL_FIT.items()}


@pytest.fixture(scope="session")
def rn_put_models() -> dict:
    return {k: risk_neutral(m, RATE, DIVIDEND) for k, m in PUT_FIT.items()}


@pytest.fixture(scope="session")
def cgmy_rn(rn_call_models):
    return rn_call_models["cgmy"]
