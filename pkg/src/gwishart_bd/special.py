"""Gamma-family constants and closed-form expectations.

Everything is evaluated in log space through :func:`scipy.special.gammaln`
and exponentiated once, which keeps the ratios stable for shape arguments
in the thousands.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sp
from scipy.stats import norm

from .errors import NegativeK, NonPositiveDelta, NonPositiveShape, NonPositiveX

LOG_SQRT_PI = 0.5 * math.log(math.pi)


def _check_delta(delta):
    if not np.all(np.asarray(delta) > 0):
        raise NonPositiveDelta(f"delta must be positive, got {delta}")


def big_r(delta):
    """``Gamma(delta/2) / (sqrt(pi) Gamma((delta+1)/2))``; also ``E|X_1|`` for the
    ratio variable ``X_1 = Z / sqrt(chi2_{delta+1})``."""
    _check_delta(delta)
    delta = np.asarray(delta, dtype=float)
    out = np.exp(sp.gammaln(delta / 2) - sp.gammaln((delta + 1) / 2) - LOG_SQRT_PI)
    return float(out) if out.ndim == 0 else out


def big_r_beta(x):
    """Same quantity as :func:`big_r` through the Beta-function route
    ``B(1, x/2) / B(1/2, (x+1)/2)``.

    With ``x = delta + d - 1`` this is the ratio of the integrals of
    ``|t| (1+t^2)^(-(delta+d+1)/2)`` and ``(1+t^2)^(-(delta+d+1)/2)`` over the line.
    """
    _check_delta(x)
    x = np.asarray(x, dtype=float)
    out = np.exp(sp.betaln(1.0, x / 2) - sp.betaln(0.5, (x + 1) / 2))
    return float(out) if out.ndim == 0 else out


def little_r(delta):
    """``Gamma((delta+1)/2)^2 / (Gamma(delta/2) Gamma((delta+2)/2))``."""
    _check_delta(delta)
    delta = np.asarray(delta, dtype=float)
    out = np.exp(2 * sp.gammaln((delta + 1) / 2) - sp.gammaln(delta / 2) - sp.gammaln((delta + 2) / 2))
    return float(out) if out.ndim == 0 else out


def expect_exp_neg_xy_over_z(a: float, b: float, c: float) -> float:
    """Exact ``E exp(-X Y / Z)`` for independent standard gammas with shapes a, b, c."""
    if min(a, b, c) <= 0:
        raise NonPositiveShape(f"shapes must be positive, got {(a, b, c)}")
    return math.exp(sp.gammaln(a + c) + sp.gammaln(b + c) - sp.gammaln(c) - sp.gammaln(a + b + c))


def expect_exp_neg_quadratic(delta: float, k: int) -> float:
    """``E exp(-(U.V)^2 / (2Q))`` with ``U, V`` standard normal k-vectors and
    ``Q ~ chi2_delta``; equals 1 for ``k = 0``."""
    _check_delta(delta)
    if k < 0:
        raise NegativeK(f"k must be >= 0, got {k}")
    if k == 0:
        return 1.0
    return expect_exp_neg_xy_over_z(k / 2, 0.5, delta / 2)


def log_x1sq_moments(delta: float) -> tuple[float, float]:
    """Mean and variance of ``log X_1^2`` where ``X_1^2`` is beta-prime(1/2, (delta+1)/2)."""
    _check_delta(delta)
    b = (delta + 1) / 2
    mean = float(sp.digamma(0.5) - sp.digamma(b))
    var = float(sp.polygamma(1, 0.5) + sp.polygamma(1, b))
    return mean, var


def b_ell_tail_approx(delta: float, n: int, x: float) -> float:
    """Normal approximation to ``P(U_1 ... U_n < x)`` for iid ``U_i ~ X_1^2``."""
    if x <= 0:
        raise NonPositiveX(f"threshold must be positive, got {x}")
    if n < 1:
        raise ValueError("n must be >= 1")
    m, var = log_x1sq_moments(delta)
    if math.isinf(x):
        return 1.0
    return float(norm.cdf((math.log(x) - n * m) / math.sqrt(var * n)))


def product_difference_bound(a, b) -> float:
    """Right-hand side ``prod|a_i| * sum |a_i - b_i| / |a_i|`` of the telescoping
    bound on ``|prod a - prod b|`` (valid when ``|b_i| <= |a_i|``)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(np.prod(np.abs(a)) * np.sum(np.abs(a - b) / np.abs(a)))
