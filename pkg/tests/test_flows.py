import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hormlab import flows
from hormlab import symexpr as se
from hormlab.grid import TorusGrid
from hormlab.vecfield import FieldSystem, VectorField


def test_constant_field_is_translation():
    X = VectorField.from_strings(["1", "2"])
    assert np.allclose(flows.flow(X, [0.5, 0.0], 0.3), [0.8, 0.6], atol=1e-12)


def test_linear_field_exponential():
    X = VectorField.from_strings(["x1", "0"])
    assert np.isclose(flows.flow(X, [1.0, 0.0], 1.0)[0], math.e, atol=1e-8)


def test_rotation_closed_form():
    X = VectorField.from_strings(["-x2", "x1"])
    t = 0.7
    assert np.allclose(flows.flow(X, [1.0, 0.0], t), [np.cos(t), np.sin(t)], atol=1e-9)


def test_grushin_closed_form(grushin):
    # X2 = sin(x1) d/dx2: x2 moves linearly at speed sin(x1)
    x = np.array([0.4, 1.0])
    assert np.allclose(flows.flow(grushin.fields[1], x, 2.0), [0.4, 1.0 + 2 * np.sin(0.4)], atol=1e-12)


def test_batched_points(grushin):
    pts = np.random.default_rng(0).uniform(0, 6, (2, 7))
    batch = flows.flow(grushin.fields[1], pts, 0.5)
    single = np.stack([flows.flow(grushin.fields[1], p, 0.5) for p in pts.T], axis=1)
    assert np.allclose(batch, single, atol=1e-9)


def test_errors():
    X = VectorField.from_strings(["1", "0"])
    with pytest.raises(ValueError):
        flows.flow(X, [0.0, 0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        flows.flow(X, [0.0, 0.0], 1.0, tol=0)
    with pytest.raises(flows.IntegrationError):
        flows.flow(VectorField.from_strings(["x1*x1", "0"]), [1.0, 0.0], 2.0)


@settings(max_examples=30)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-3, 3), st.floats(-3, 3))
def test_group_law(s, t, a, b):
    X = VectorField.from_strings(["sin(x2)", "cos(x1)"])
    assert flows.check_group_law(X, [a, b], s, t) <= 1e-8


@settings(max_examples=30)
@given(st.floats(-1, 1), st.floats(-3, 3), st.floats(-3, 3))
def test_inverse(t, a, b):
    X = VectorField.from_strings(["sin(x2)", "cos(x1)"])
    x = np.array([a, b])
    assert np.linalg.norm(flows.flow(X, flows.flow(X, x, t), -t) - x) <= 1e-8


def test_taylor_order(grushin):
    X = VectorField.from_strings(["sin(x2)", "cos(x1)"])
    phi = se.parse("sin(x1)*cos(x2)", 2)
    for n in (1, 2, 3):
        fit = flows.taylor_order_fit(X, phi, [0.3, 0.2], n, t_min=1e-2, t_max=2e-1)
        assert abs(fit.slope - (n + 1)) <= 0.2


def test_fit_order_exact():
    t = flows.log_times()
    assert abs(flows.fit_order(t, 3 * t ** 4).slope - 4) < 1e-12
    assert flows.fit_order(t, np.zeros_like(t)).exact


def test_cbh_order_commuting_exact():
    d1, d2 = VectorField.coordinate(1, 2), VectorField.coordinate(2, 2)
    fit = flows.cbh_order_fit(d1, d2, 2, [0.1, 0.2])
    assert fit.exact


def test_cbh_order_grushin(grushin):
    Y1, Y2 = grushin.fields
    fit = flows.cbh_order_fit(Y1, Y2, 2, [0.3, 0.2], t_min=1e-2, t_max=2e-1)
    assert abs(fit.slope - 3) <= 0.3


def test_cbh_cap(grushin):
    with pytest.raises(ValueError):
        flows.cbh_product_map(*grushin.fields, 7, [0.0, 0.0], 0.1)


class TestTransport:
    def test_translation_exact(self):
        g = TorusGrid(2, 16)
        X = VectorField.from_strings(["1", "0"])
        phi = g.sample(se.parse("sin(x1)+cos(2*x2)", 2))
        moved = flows.pullback_transport(X, phi, 0.5, g)
        assert np.allclose(moved, g.sample(se.parse("sin(x1 + 1/2)+cos(2*x2)", 2)), atol=1e-10)

    def test_non_periodic_rejected(self):
        g = TorusGrid(2, 8)
        with pytest.raises(ValueError):
            flows.pullback_transport(VectorField.from_strings(["x1", "0"]), np.zeros(g.shape), 0.1, g)

    def test_cubic_close_to_trig(self, grushin):
        g = TorusGrid(2, 32)
        phi = g.sample(se.parse("sin(x1)*cos(x2)", 2))
        a = flows.pullback_transport(grushin.fields[1], phi, 0.3, g)
        b = flows.pullback_transport(grushin.fields[1], phi, 0.3, g, method="cubic")
        assert np.abs(a - b).max() < 1e-3

    def test_growth_bounded(self, grushin):
        g = TorusGrid(2, 16)
        phi = g.sample(se.parse("sin(x1)*cos(x2)", 2))
        assert flows.transport_growth(grushin.fields[1], phi, g, [0.1, 0.5, 1.0]) <= 1.0 + 1e-8


class TestHolder:
    def test_zero_field_norm_is_l2(self):
        g = TorusGrid(2, 8)
        phi = g.sample(se.parse("sin(x1)", 2))
        assert np.isclose(flows.holder_norm_field(phi, VectorField.zero(2), 0.5, g), g.norm(phi))

    def test_gamma_range(self):
        g = TorusGrid(2, 8)
        with pytest.raises(ValueError):
            flows.holder_norm_universal(np.zeros(g.shape), 1.5, g)

    def test_translation_agreement(self):
        # coordinate-field norm and the universal norm restricted to e1 see the same shifts
        g = TorusGrid(2, 16)
        phi = g.sample(se.parse("sin(x1)*cos(x2)", 2))
        ts = [0.1, 0.5]
        field = flows.holder_norm_field(phi, VectorField.coordinate(1, 2), 0.5, g, ts)
        univ = flows.holder_norm_universal(phi, 0.5, g, ts, np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert np.isclose(field, univ, rtol=1e-8)

    def test_ratio_elliptic_bounded(self, elliptic):
        g = TorusGrid(2, 16)
        rng = np.random.default_rng(0)
        coeffs = rng.normal(size=(3, 5, 5)) + 1j * rng.normal(size=(3, 5, 5))
        phi = g.band_limited(coeffs, 2)
        assert flows.holder_comparison_ratio(elliptic, 1, 0.5, phi, g) <= 2.0
