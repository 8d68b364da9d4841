"""Least-squares coordinates and the thresholded quadratic-functional estimator.

Two regimes, split by the exact integer test ``s*s >= p``:

* dense:  Q = sum_i y_i^2 - sigma^2 tr[(X^T X)^{-1}]
* sparse: Q = sum_i [y_i^2 - sigma^2 d_i alpha_s] 1{y_i^2 > 2 sigma^2 d_i log(1 + p/s^2)}

with ``y_i`` the least-squares coordinates and ``d_i`` the diagonal of the
inverse Gram matrix.  The norm estimate is ``sqrt(max(Q, 0))``.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _gauss
from ._kernels import thresholded_quadratic
from .errors import InvalidConfigError, SingularDesignError
from .model import ProblemConfig

PIVOT_RTOL = 1e-10


class Regime(str, enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass(frozen=True)
class LeastSquaresContext:
    gram: np.ndarray
    gram_inverse: np.ndarray
    coords: np.ndarray
    gram_inverse_diag: np.ndarray

    @functools.cached_property
    def min_eigenvalue_gram(self) -> float:
        # diagnostic only; computed on first access
        return float(linalg.eigvalsh(self.gram, subset_by_index=[0, 0])[0])

    @property
    def trace(self) -> float:
        return float(self.gram_inverse_diag.sum())


def cholesky_gram(gram):
    """Lower Cholesky factor of X^T X.

    The pivots are the LDL^T diagonal, L_ii^2; any pivot below 1e-10 of the
    largest is treated as a singular design.
    """
    try:
        chol = linalg.cholesky(gram, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("X^T X is not positive definite") from exc
    piv = np.diag(chol) ** 2
    if piv.min() < PIVOT_RTOL * piv.max():
        raise SingularDesignError(
            f"X^T X is ill-conditioned (pivot ratio {piv.min() / piv.max():.3e})"
        )
    return chol, True


def gram_inverse_diag(x) -> np.ndarray:
    """diag((X^T X)^{-1}) for full-column-rank X with p <= n."""
    x = np.asarray(x, dtype=np.float64)
    chol, _ = cholesky_gram(x.T @ x)
    linv = linalg.solve_triangular(chol, np.eye(x.shape[1]), lower=True)
    return np.einsum("ij,ij->j", linv, linv)


def least_squares(x, y) -> LeastSquaresContext:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InvalidConfigError(f"shape mismatch: x {x.shape}, y {y.shape}")
    n, p = x.shape
    if p >= n:
        raise InvalidConfigError(f"least squares needs p < n, got p={p}, n={n}")
    gram = x.T @ x
    factor = cholesky_gram(gram)
    inv = linalg.cho_solve(factor, np.eye(p))
    inv = 0.5 * (inv + inv.T)
    coords = linalg.cho_solve(factor, x.T @ y)
    return LeastSquaresContext(
        gram=gram,
        gram_inverse=inv,
        coords=coords,
        gram_inverse_diag=np.diag(inv).copy(),
    )


def threshold_level(s: int, p: int) -> float:
    """2 log(1 + p/s^2); the sparse-regime cut in units of sigma^2 d_i."""
    return 2.0 * math.log1p(p / (s * s))


@functools.lru_cache(maxsize=4096)
def alpha_s(s: int, p: int) -> float:
    """E(Z^2 | Z^2 > 2 log(1 + p/s^2)) for a standard normal Z."""
    if not 1 <= s <= p:
        raise InvalidConfigError(f"need 1 <= s <= p, got s={s}, p={p}")
    return _gauss.conditional_second_moment(math.sqrt(threshold_level(s, p)))


@dataclass(frozen=True)
class EstimateResult:
    q_hat: float
    n_hat: float
    regime: Regime
    alpha_s: float
    threshold_level: float
    selected: tuple[int, ...] = ()
    theorem_conditions_met: bool = True
    coords: np.ndarray | None = field(default=None, repr=False, compare=False)


def n_hat(result) -> float:
    q = result.q_hat if isinstance(result, EstimateResult) else float(result)
    return math.sqrt(max(q, 0.0))


def regime_of(s: int, p: int) -> Regime:
    return Regime.DENSE if s * s >= p else Regime.SPARSE


def q_hat_batch(coords, diag, cfg: ProblemConfig):
    """Vectorised Q over rows of (coords, diag); returns (values, mask)."""
    level = threshold_level(cfg.s, cfg.p)
    return thresholded_quadratic(
        np.atleast_2d(coords),
        np.atleast_2d(diag),
        cfg.sigma * cfg.sigma,
        alpha_s(cfg.s, cfg.p),
        level,
        cfg.dense,
    )


def q_hat(ctx: LeastSquaresContext, cfg: ProblemConfig) -> EstimateResult:
    if ctx.coords.shape != (cfg.p,):
        raise InvalidConfigError(f"context has {ctx.coords.size} coordinates, expected p={cfg.p}")
    vals, mask = q_hat_batch(ctx.coords, ctx.gram_inverse_diag, cfg)
    q = float(vals[0])
    regime = regime_of(cfg.s, cfg.p)
    selected = () if regime is Regime.DENSE else tuple(int(i) for i in np.flatnonzero(mask[0]))
    return EstimateResult(
        q_hat=q,
        n_hat=math.sqrt(max(q, 0.0)),
        regime=regime,
        alpha_s=alpha_s(cfg.s, cfg.p),
        threshold_level=threshold_level(cfg.s, cfg.p),
        selected=selected,
        theorem_conditions_met=cfg.theorem_conditions_met(),
        coords=ctx.coords,
    )


def estimate(x, y, cfg: ProblemConfig) -> EstimateResult:
    return q_hat(least_squares(x, y), cfg)
