import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bundle_uq.special import expn


def quad_expn(n, x):
    """E_n(x) = int_1^inf exp(-x t) t^-n dt, substituted to t = 1/s on (0, 1]."""
    val, _ = integrate.quad(lambda s: math.exp(-x / s) * s ** (n - 2), 0.0, 1.0,
                            epsabs=0, epsrel=1e-13, limit=400)
    return val


def test_known_values():
    # E_1(1) = 0.21938393439552027 (Abramowitz & Stegun table 5.1)
    assert expn(1, 1.0) == pytest.approx(0.21938393439552027, rel=1e-14)
    assert expn(0, 2.0) == pytest.approx(math.exp(-2.0) / 2.0, rel=1e-15)
    assert expn(3, 0.0) == pytest.approx(0.5)
    assert expn(2, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("n", range(1, 7))
def test_against_quadrature_integer_orders(n):
    xs = np.geomspace(1e-3, 50, 25)
    want = np.array([quad_expn(n, x) for x in xs])
    np.testing.assert_allclose(expn(n, xs), want, rtol=1e-8)


@pytest.mark.parametrize("nu", [0.3, 1.5, 2.0 - 3e-5, 2.0 + 1e-6, 3.7, 5.25])
def test_against_quadrature_real_orders(nu):
    xs = np.geomspace(1e-3, 40, 15)
    want = np.array([quad_expn(nu, x) for x in xs])
    np.testing.assert_allclose(expn(nu, xs), want, rtol=1e-8)


@settings(max_examples=150, deadline=None)
@given(st.floats(0.0, 8.0), st.floats(1e-3, 50.0))
def test_recurrence(nu, x):
    # n E_{n+1}(x) = exp(-x) - x E_n(x)
    lhs = (nu + 1.0) * expn(nu + 2.0, x)
    rhs = math.exp(-x) - x * expn(nu + 1.0, x)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.floats(1e-3, 40.0))
def test_derivative_identity(n, x):
    # d/dx E_n = -E_{n-1}
    h = 1e-6 * max(x, 1e-2)
    fd = (expn(n, x + h) - expn(n, x - h)) / (2 * h)
    assert fd == pytest.approx(-expn(n - 1, x), rel=1e-5)


def test_vectorised_shape_and_errors():
    out = expn(np.array([[1], [2]]), np.array([0.5, 1.0, 2.0]))
    assert out.shape == (2, 3)
    with pytest.raises(ValueError):
        expn(1, -1.0)
    with pytest.raises(ValueError):
        expn(1, 0.0)


def test_negative_orders():
    # E_{-1}(x) = exp(-x) (1 + x) / x^2
    x = 1.7
    assert expn(-1, x) == pytest.approx(math.exp(-x) * (1 + x) / x ** 2, rel=1e-13)
