import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hormlab import symexpr as se
from hormlab.vecfield import (FieldSystem, VectorField, apply_field, enumerate_multiindices, lie_bracket,
                              multi_commutator)

from conftest import trig_fields

PTS = np.random.default_rng(5).uniform(0, 2 * np.pi, (2, 100))


def values(X):
    return X(PTS)


class TestVectorField:
    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            VectorField.from_strings(["x3", "0"])
        with pytest.raises(ValueError):
            FieldSystem((VectorField.coordinate(1, 2), VectorField.coordinate(1, 3)))
        with pytest.raises(ValueError):
            FieldSystem(())

    def test_call_shape(self, grushin):
        X2 = grushin.fields[1]
        out = X2(PTS)
        assert out.shape == (2, 100)
        assert np.allclose(out[1], np.sin(PTS[0]))

    def test_flags(self, grushin):
        assert all(X.is_bounded() and X.is_periodic() for X in grushin.fields)
        rot = VectorField.from_strings(["-x2", "x1"])
        assert not rot.is_bounded()


class TestBracket:
    def test_coordinate_fields_commute(self):
        assert lie_bracket(VectorField.coordinate(1, 2), VectorField.coordinate(2, 2)).is_zero()

    def test_grushin(self, grushin):
        X1, X2 = grushin.fields
        assert lie_bracket(X1, X2).to_strings() == ["0", "cos(x1)"]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lie_bracket(VectorField.coordinate(1, 2), VectorField.coordinate(1, 3))

    @given(trig_fields())
    def test_self_bracket_vanishes(self, X):
        assert lie_bracket(X, X).is_zero()

    @settings(max_examples=25)
    @given(trig_fields(), trig_fields())
    def test_antisymmetry(self, X, Y):
        assert np.allclose(values(lie_bracket(X, Y)), -values(lie_bracket(Y, X)), atol=1e-10)

    @settings(max_examples=15)
    @given(trig_fields(), trig_fields(), trig_fields())
    def test_jacobi(self, X, Y, Z):
        total = (values(lie_bracket(X, lie_bracket(Y, Z))) + values(lie_bracket(Y, lie_bracket(Z, X)))
                 + values(lie_bracket(Z, lie_bracket(X, Y))))
        assert np.abs(total).max() <= 1e-10

    @settings(max_examples=20)
    @given(trig_fields(), trig_fields(), trig_fields(), st.integers(-3, 3))
    def test_bilinear(self, X, Y, Z, s):
        lhs = values(lie_bracket(X.scaled(s) + Y, Z))
        rhs = s * values(lie_bracket(X, Z)) + values(lie_bracket(Y, Z))
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_matches_operator_commutator(self, grushin):
        # [X,Y] phi == X(Y phi) - Y(X phi) on a test function
        X1, X2 = grushin.fields
        phi = se.parse("sin(x1 + 2*x2)*cos(x2)", 2)
        lhs = apply_field(lie_bracket(X1, X2), phi)
        rhs = se.simplify(apply_field(X1, apply_field(X2, phi)) - apply_field(X2, apply_field(X1, phi)))
        f = se.compile_exprs([lhs, rhs])(PTS)
        assert np.allclose(f[0], f[1], atol=1e-12)


class TestMultiCommutator:
    def test_base_case_is_identity(self, grushin):
        assert multi_commutator(grushin, (2,)) == grushin.fields[1]

    @pytest.mark.parametrize("alpha, expected", [
        ((2,), ["0", "sin(x1)"]),
        ((1, 2), ["0", "cos(x1)"]),
        ((1, 1, 2), ["0", "-sin(x1)"]),
    ])
    def test_grushin(self, grushin, alpha, expected):
        got = multi_commutator(grushin, alpha)
        assert np.allclose(values(got), values(VectorField.from_strings(expected)), atol=1e-15)

    def test_right_nested(self, grushin):
        X1, X2 = grushin.fields
        assert multi_commutator(grushin, (2, 1, 2)) == lie_bracket(X2, lie_bracket(X1, X2))

    def test_bad_index(self, grushin):
        with pytest.raises(ValueError):
            multi_commutator(grushin, (3,))
        with pytest.raises(ValueError):
            multi_commutator(grushin, ())


class TestEnumerate:
    def test_small(self):
        assert enumerate_multiindices(2, 2) == [(1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]
        assert enumerate_multiindices(3, 1) == [(1,), (2,), (3,)]

    @given(st.integers(1, 4), st.integers(1, 4))
    def test_count_and_order(self, n, r):
        idx = enumerate_multiindices(n, r)
        assert len(idx) == sum(n ** k for k in range(1, r + 1))
        assert idx == sorted(idx, key=lambda a: (len(a), a))
        assert len(set(idx)) == len(idx)


class TestApplyField:
    def test_basic(self):
        d1 = VectorField.coordinate(1, 2)
        assert apply_field(d1, se.parse("sin(x1)", 2)) == se.parse("cos(x1)", 2)
        assert se.is_zero(apply_field(VectorField.zero(2), se.parse("sin(x1)*x2", 2)))

    def test_second_power_finite_difference(self, grushin):
        # X^2 phi equals the second derivative along the flow line (straight lines for X1)
        X1 = grushin.fields[0]
        phi = se.parse("sin(2*x1) + cos(x1)", 2)
        second = apply_field(X1, apply_field(X1, phi))
        h = 1e-3
        for x in PTS[:, :10].T:
            e1 = np.array([h, 0.0])
            fd = (se.evaluate(phi, x + e1) - 2 * se.evaluate(phi, x) + se.evaluate(phi, x - e1)) / h ** 2
            assert abs(fd - se.evaluate(second, x)) <= 1e-5
