"""Bessel/Hankel evaluation and the 2-D Helmholtz Green's function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidArgument, SingularInput

ORDER_MAX = 200


def bessel_j(order, x):
    """J_order(x) for integer order in [0, ORDER_MAX] and real x >= 0."""
    o = np.asarray(order)
    if np.any(o < 0) or np.any(o > ORDER_MAX) or np.any(o != np.floor(o)):
        raise InvalidArgument(f"order must be an integer in [0, {ORDER_MAX}]")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("x must be finite")
    out = special.jv(o, x)
    return float(out) if np.ndim(out) == 0 else out


def bessel_y(order, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise SingularInput("Y_n is singular at x <= 0")
    out = special.yv(order, x)
    return float(out) if np.ndim(out) == 0 else out


def hankel1(order, x):
    """H^(1)_order(x) for order 0 or 1 and x > 0."""
    if order not in (0, 1):
        raise InvalidArgument("hankel1 supports orders 0 and 1 only")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise SingularInput("H^(1) is singular at x <= 0")
    out = special.hankel1(order, x)
    return complex(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GreenEval:
    k: float
    value: complex
    gradient_x: np.ndarray


def green(k: float, x, y) -> GreenEval:
    """G^k(x, y) = (i/4) H0(k|x-y|) and its x-gradient."""
    if not k > 0:
        raise InvalidArgument("k must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = float(np.hypot(d[0], d[1]))
    if r == 0.0:
        raise SingularInput("Green's function is singular at x = y")
    kr = k * r
    val = 0.25j * special.hankel1(0, kr)
    grad = -(1j * k * d / (4 * r)) * special.hankel1(1, kr)
    return GreenEval(k, complex(val), grad)


def green_array(k: float, d: np.ndarray):
    """Vectorized G and ∇_x G for displacement array ``d[..., 2] = x - y``."""
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r == 0):
        raise SingularInput("Green's function is singular at x = y")
    kr = k * r
    val = 0.25j * special.hankel1(0, kr)
    g = -(1j * k / (4 * r)) * special.hankel1(1, kr)
    return val, g[..., None] * d
