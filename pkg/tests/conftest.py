import mpmath
import numpy as np
import pytest
from hypothesis import strategies as st

from atskd.scaling import LogitRecord


def mp_softmax(values, dps=50):
    """Arbitrary-precision softmax, returned as floats."""
    with mpmath.workdps(dps):
        e = [mpmath.e ** mpmath.mpf(float(v)) for v in values]
        s = mpmath.fsum(e)
        return np.array([float(x / s) for x in e])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_record(rng, c=None, scale=None):
    c = c or int(rng.integers(2, 30))
    scale = scale if scale is not None else rng.uniform(0.5, 5.0)
    return LogitRecord(rng.standard_normal(c) * scale, int(rng.integers(c)))


@st.composite
def records(draw, min_classes=2, max_classes=20, bound=20.0):
    c = draw(st.integers(min_classes, max_classes))
    f = draw(st.lists(st.floats(-bound, bound, allow_nan=False), min_size=c, max_size=c))
    y = draw(st.integers(0, c - 1))
    return LogitRecord(np.array(f), y)


temperatures = st.floats(0.1, 20.0)


# filled by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
