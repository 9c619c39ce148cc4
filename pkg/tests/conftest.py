from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from hormlab import symexpr as se
from hormlab.vecfield import FieldSystem, VectorField

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DIM = 2


def expressions(d: int = DIM, max_leaves: int = 10):
    leaves = st.one_of(
        st.fractions(min_value=-5, max_value=5, max_denominator=4).map(se.Const),
        st.integers(1, d).map(se.Coord),
    )

    def extend(children):
        return st.one_of(
            children.map(se.Neg),
            st.lists(children, min_size=2, max_size=3).map(lambda xs: se.Sum(tuple(xs))),
            st.lists(children, min_size=2, max_size=3).map(lambda xs: se.Prod(tuple(xs))),
            children.map(se.Sin),
            children.map(se.Cos),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def trig_expressions(d: int = DIM):
    """Bounded, 2*pi-periodic coefficients: small integer combinations of sin/cos of integer phases."""
    wave = st.tuples(st.sampled_from([se.Sin, se.Cos]), st.lists(st.integers(-2, 2), min_size=d, max_size=d),
                     st.integers(-3, 3))

    def build(waves):
        total = se.ZERO
        for node, ks, c in waves:
            arg = se.ZERO
            for j, k in enumerate(ks, start=1):
                arg = arg + se.Const(Fraction(k)) * se.Coord(j)
            total = total + se.Const(Fraction(c)) * node(se.simplify(arg))
        return se.simplify(total)

    return st.lists(wave, min_size=1, max_size=2).map(build)


def trig_fields(d: int = DIM):
    return st.lists(trig_expressions(d), min_size=d, max_size=d).map(lambda cs: VectorField(tuple(cs)))


@pytest.fixture(scope="session")
def grushin():
    return FieldSystem.from_strings([["1", "0"], ["0", "sin(x1)"]], name="grushin")


@pytest.fixture(scope="session")
def elliptic():
    return FieldSystem.from_strings([["1", "0"], ["0", "1"]], name="elliptic")


@pytest.fixture(scope="session")
def single_field():
    return FieldSystem.from_strings([["1", "0"]], name="single_field")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance verdict lines

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
