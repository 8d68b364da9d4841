"""Standard normal tail quantities that stay finite far into the tail."""

import math

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def upper_tail(x):
    """P(Z > x)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=np.float64) / SQRT2)


def two_sided_tail(x):
    """P(|Z| > x) for x >= 0."""
    return special.erfc(np.asarray(x, dtype=np.float64) / SQRT2)


def inverse_mills(x):
    """phi(x) / P(Z > x), via erfcx so it does not degrade to 0/0."""
    return SQRT_2_OVER_PI / special.erfcx(np.asarray(x, dtype=np.float64) / SQRT2)


def conditional_second_moment(x):
    """E(Z^2 | |Z| > x) = 1 + x phi(x) / P(Z > x)."""
    x = np.asarray(x, dtype=np.float64)
    out = 1.0 + x * inverse_mills(x)
    return float(out) if out.ndim == 0 else out
