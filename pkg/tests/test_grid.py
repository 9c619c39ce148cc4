import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hormlab import symexpr as se
from hormlab.grid import TorusGrid


@pytest.mark.parametrize("d, n", [(0, 8), (2, 6), (2, 2)])
def test_invalid(d, n):
    with pytest.raises(ValueError):
        TorusGrid(d, n)


def test_shapes():
    g = TorusGrid(2, 8)
    assert g.mesh.shape == (2, 8, 8) and g.points.shape == (2, 64)
    assert g.freqs_1d[4] == -4
    assert g.k2.shape == (8, 8)


def test_norm_exact_for_trig():
    g = TorusGrid(2, 16)
    phi = g.sample(se.parse("sin(x1)*cos(2*x2)", 2))
    # integral of sin^2 cos^2 over the torus is pi^2
    assert np.isclose(g.norm(phi), np.pi)
    assert np.isclose(g.inner(phi, phi).real, np.pi ** 2)


def test_band_limited_grid_independent():
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    a, b = TorusGrid(2, 8), TorusGrid(2, 16)
    fa, fb = a.band_limited(coeffs, 2), b.band_limited(coeffs, 2)
    assert np.allclose(fa, fb[::2, ::2])
    with pytest.raises(ValueError):
        TorusGrid(2, 4).band_limited(coeffs, 2)


@given(st.integers(0, 2**32 - 1))
def test_interpolation_exact_on_band_limited(seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(2, 16)
    coeffs = rng.normal(size=(2, 7, 7)) + 1j * rng.normal(size=(2, 7, 7))
    phi = g.band_limited(coeffs, 3)
    pts = rng.uniform(-3, 9, size=(2, 20))
    fine = TorusGrid(2, 64)
    # oracle: direct series evaluation via a fine grid nodes is not available, so use the series itself
    ks = np.arange(-3, 4)
    e1 = np.exp(1j * np.outer(ks, pts[0]))
    e2 = np.exp(1j * np.outer(ks, pts[1]))
    exact = np.einsum("bij,ip,jp->bp", coeffs, e1, e2).real
    assert np.allclose(g.interpolate(phi, pts), exact, atol=1e-10)
    assert np.allclose(fine.interpolate(fine.band_limited(coeffs, 3), pts), exact, atol=1e-10)


def test_interpolation_reproduces_nodes():
    g = TorusGrid(2, 8)
    phi = np.random.default_rng(1).normal(size=g.shape)
    assert np.allclose(g.interpolate(phi, g.points), phi.ravel(), atol=1e-12)
