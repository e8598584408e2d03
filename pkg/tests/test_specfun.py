import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibs2.errors import InvalidArgument, SingularInput
from ibs2.specfun import bessel_j, bessel_y, green, green_array, hankel1


def _j1_series(x, terms=40):
    return sum((-1) ** m * (x / 2) ** (2 * m + 1) / (math.factorial(m) * math.factorial(m + 1))
               for m in range(terms))


def test_bessel_j_examples():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert bessel_j(1, 2.0) == pytest.approx(_j1_series(2.0), abs=1e-12)
    with pytest.raises(InvalidArgument):
        bessel_j(201, 1.0)
    with pytest.raises(InvalidArgument):
        bessel_j(-1, 1.0)


def test_wronskian():
    x = np.linspace(0.1, 100, 2000)
    w = bessel_j(0, x) * bessel_y(1, x) - bessel_j(1, x) * bessel_y(0, x)
    np.testing.assert_allclose(w, -2 / (np.pi * x), rtol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 10, 25, 50])
def test_recurrence(n):
    x = np.linspace(0.5, 80, 400)
    lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x)
    np.testing.assert_allclose(lhs, 2 * n / x * bessel_j(n, x), atol=1e-10)


def test_hankel_envelopes():
    rng = np.random.default_rng(3)
    small = rng.uniform(1e-8, 1.0, 10_000)
    large = rng.uniform(1.0, 200.0, 10_000)
    assert np.all(np.abs(hankel1(0, small)) <= 1 - np.log(small))
    assert np.all(np.abs(hankel1(0, large)) <= np.sqrt(2 / (np.pi * large)))
    assert np.all(np.abs(hankel1(1, small)) <= 3 / (np.pi * small))


def test_hankel_small_argument():
    x = 1e-6
    assert hankel1(1, x) * x == pytest.approx(2 / (1j * np.pi), rel=1e-4)
    with pytest.raises(SingularInput):
        hankel1(0, 0.0)
    with pytest.raises(InvalidArgument):
        hankel1(2, 1.0)


def test_green_definition():
    g = green(2.0, [0.5, 0.0], [0.0, 0.0])
    assert g.value == pytest.approx(0.25j * hankel1(0, 1.0))
    with pytest.raises(SingularInput):
        green(1.0, [0.1, 0.2], [0.1, 0.2])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.6, 20), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(0, 2 * np.pi))
def test_green_symmetries(k, x0, x1, y0, y1, t):
    x, y = np.array([x0, x1]), np.array([y0, y1])
    if np.linalg.norm(x - y) < 1e-3:
        return
    a = green(k, x, y)
    b = green(k, y, x)
    np.testing.assert_allclose(a.gradient_x, -b.gradient_x, rtol=1e-12, atol=1e-14)
    R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    c = green(k, R @ x, R @ y)
    assert c.value == pytest.approx(a.value, rel=1e-12)
    d = x - y
    r = np.linalg.norm(d)
    np.testing.assert_allclose(a.gradient_x, -(1j * k * d / (4 * r)) * hankel1(1, k * r), rtol=1e-12)


def test_green_array_matches_scalar():
    d = np.array([[0.3, -0.2], [1.0, 0.5]])
    v, g = green_array(3.0, d)
    for i in range(2):
        ge = green(3.0, d[i], [0, 0])
        assert v[i] == pytest.approx(ge.value)
        np.testing.assert_allclose(g[i], ge.gradient_x)
