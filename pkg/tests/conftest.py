from __future__ import annotations

import numpy as np
import pytest

from wpspde import Interval, make_problem


@pytest.fixture
def unit():
    return Interval(0.0, 1.0, 1.0)


def problem(domain=None, G="zero", g="zero", h="zero", b="zero", rho=("zero",)):
    domain = Interval() if domain is None else domain
    return make_problem({"G": G, "g": g, "h": h, "b": b, "rho": list(rho)}, domain)


@pytest.fixture
def allen_cahn(unit):
    return problem(unit, G="allen-cahn", h={"kind": "sine"}, rho=[{"kind": "sine"}])


@pytest.fixture
def linear(unit):
    return problem(unit, h={"kind": "sine"}, rho=[{"kind": "sine"}])


def const(c):
    return {"kind": "constant", "value": float(c)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
