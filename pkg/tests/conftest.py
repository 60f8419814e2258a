import functools

import numpy as np
import pytest

from dimcert.pmatrix import assemble
from dimcert.prep import optimize_preparations
from dimcert.protocol import build_variant

ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def theory(d, variant="convex", weight=None):
    povm = build_variant(d, variant, weight=weight)
    states, t = optimize_preparations(povm)
    return povm, states, t, assemble(states, povm)


@pytest.fixture(params=[3, 5, 7], ids=lambda d: f"d{d}")
def golden(request):
    return theory(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
