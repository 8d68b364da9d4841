"""Inner loops shared by the estimator and the Monte Carlo harnesses.

Every kernel has a pure-numpy implementation (``*_np``) and a numba one
(``*_nb``).  The public names point at the numba versions unless numba is
missing or ``SPARSE_DETECT_NO_NUMBA`` is set to a truthy value.  Both
paths take pre-drawn arrays, so random streams never depend on the backend.
"""

import os

import numpy as np

_DISABLE = os.environ.get("SPARSE_DETECT_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLE


# ---------------------------------------------------------------------------
# Thresholded quadratic functional, one row per replicate
# ---------------------------------------------------------------------------


def thresholded_quadratic_np(coords, diag, sigma2, alpha, level, dense):
    sq = coords * coords
    if dense:
        mask = np.ones(coords.shape, dtype=np.bool_)
        return (sq - sigma2 * diag).sum(axis=1), mask
    mask = sq > sigma2 * diag * level
    terms = np.where(mask, sq - sigma2 * diag * alpha, 0.0)
    return terms.sum(axis=1), mask


def _thresholded_quadratic_py(coords, diag, sigma2, alpha, level, dense):
    r, p = coords.shape
    out = np.zeros(r)
    mask = np.zeros((r, p), dtype=np.bool_)
    for k in range(r):
        acc = 0.0
        for i in range(p):
            sq = coords[k, i] * coords[k, i]
            if dense:
                acc += sq - sigma2 * diag[k, i]
                mask[k, i] = True
            elif sq > sigma2 * diag[k, i] * level:
                acc += sq - sigma2 * diag[k, i] * alpha
                mask[k, i] = True
        out[k] = acc
    return out, mask


# ---------------------------------------------------------------------------
# Streaming log-sum-exp: (max, sum exp(l - max), sum exp(2 (l - max)))
# ---------------------------------------------------------------------------


def logsumexp_state_np(logw):
    logw = np.asarray(logw, dtype=np.float64).ravel()
    if logw.size == 0:
        return -np.inf, 0.0, 0.0
    m = float(logw.max())
    if m == -np.inf:
        return m, 0.0, 0.0
    e = np.exp(logw - m)
    return m, float(e.sum()), float((e * e).sum())


def _logsumexp_state_py(logw):
    m = -np.inf
    s1 = 0.0
    s2 = 0.0
    for v in logw.ravel():
        if v == -np.inf:
            continue
        if v > m:
            scale = np.exp(m - v) if m > -np.inf else 0.0
            s1 = s1 * scale + 1.0
            s2 = s2 * scale * scale + 1.0
            m = v
        else:
            e = np.exp(v - m)
            s1 += e
            s2 += e * e
    return m, s1, s2


def merge_logsumexp_state(a, b):
    """Combine two partial states; associative and commutative."""
    ma, s1a, s2a = a
    mb, s1b, s2b = b
    if ma == -np.inf:
        return b
    if mb == -np.inf:
        return a
    m = max(ma, mb)
    fa = np.exp(ma - m)
    fb = np.exp(mb - m)
    return m, s1a * fa + s1b * fb, s2a * fa * fa + s2b * fb * fb


# ---------------------------------------------------------------------------
# Truncated product moment for correlated normal pairs
# ---------------------------------------------------------------------------


def truncated_product_sums_np(eta, zeta, x, alpha):
    hit = (np.abs(eta) > x) & (np.abs(zeta) > x)
    vals = np.where(hit, (eta * eta - alpha) * (zeta * zeta - alpha), 0.0)
    return float(vals.sum()), float((vals * vals).sum())


def _truncated_product_sums_py(eta, zeta, x, alpha):
    s1 = 0.0
    s2 = 0.0
    for k in range(eta.shape[0]):
        a = eta[k]
        b = zeta[k]
        if abs(a) > x and abs(b) > x:
            v = (a * a - alpha) * (b * b - alpha)
            s1 += v
            s2 += v * v
    return s1, s2


if HAVE_NUMBA:
    thresholded_quadratic_nb = njit(cache=False)(_thresholded_quadratic_py)
    logsumexp_state_nb = njit(cache=False)(_logsumexp_state_py)
    truncated_product_sums_nb = njit(cache=False)(_truncated_product_sums_py)
else:  # pragma: no cover
    thresholded_quadratic_nb = thresholded_quadratic_np
    logsumexp_state_nb = logsumexp_state_np
    truncated_product_sums_nb = truncated_product_sums_np


if USE_NUMBA:
    _tq = thresholded_quadratic_nb
    _lse = logsumexp_state_nb
    _tps = truncated_product_sums_nb
else:
    _tq = thresholded_quadratic_np
    _lse = logsumexp_state_np
    _tps = truncated_product_sums_np


def thresholded_quadratic(coords, diag, sigma2, alpha, level, dense):
    """Row-wise thresholded sum; returns (values, selection mask)."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    return _tq(coords, diag, float(sigma2), float(alpha), float(level), bool(dense))


def logsumexp_state(logw):
    state = _lse(np.ascontiguousarray(logw, dtype=np.float64))
    return float(state[0]), float(state[1]), float(state[2])


def truncated_product_sums(eta, zeta, x, alpha):
    s1, s2 = _tps(
        np.ascontiguousarray(eta, dtype=np.float64),
        np.ascontiguousarray(zeta, dtype=np.float64),
        float(x),
        float(alpha),
    )
    return float(s1), float(s2)


def backend():
    return "numba" if USE_NUMBA else "numpy"
