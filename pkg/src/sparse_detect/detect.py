"""Rate functions, the norm-threshold test and Monte Carlo risk estimates."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .estimator import least_squares, q_hat_batch
from .model import (
    PriorSpec,
    ProblemConfig,
    SeedToken,
    SparseVector,
    derive_seed,
    sample_prior,
    sample_regression,
)

Z95 = 1.959963984540054
DEFAULT_A_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_THRESHOLD_FACTOR = 0.5
_CHUNK = 32


def _check_sp(s: int, p: int, n: int = 1):
    if n < 1 or p < 1 or s < 1:
        raise InvalidConfigError("n, p, s must be positive")
    if s > p:
        raise InvalidConfigError(f"sparsity s={s} exceeds dimension p={p}")


def psi(s: int, p: int, n: int) -> float:
    _check_sp(s, p, n)
    if s * s < p:
        return s * math.log1p(p / (s * s)) / n
    return math.sqrt(p) / n


@dataclass(frozen=True)
class RateBundle:
    psi: float
    lambda_eq5: float
    lambda_eq5a: float
    lambda_eq6: float
    lambda_compact: float
    lambda_itv: float

    def as_dict(self) -> dict[str, float]:
        return dict(
            psi=self.psi,
            lambda_eq5=self.lambda_eq5,
            lambda_eq5a=self.lambda_eq5a,
            lambda_eq6=self.lambda_eq6,
            lambda_compact=self.lambda_compact,
            lambda_itv=self.lambda_itv,
        )


def rates(n: int, p: int, s: int, sigma: float = 1.0) -> RateBundle:
    _check_sp(s, p, n)
    if not sigma >= 0:
        raise InvalidConfigError(f"sigma must be >= 0, got {sigma}")
    ps = psi(s, p, n)
    log_term = math.sqrt(s * math.log(2.0 + p / (s * s)) / n)
    n_quarter = n ** -0.25
    p_term = p**0.25 / math.sqrt(n)
    return RateBundle(
        psi=ps,
        lambda_eq5=sigma * min(log_term, n_quarter, p_term),
        lambda_eq5a=sigma * min(log_term, p_term),
        lambda_eq6=sigma * math.sqrt(ps),
        lambda_compact=sigma * math.sqrt(s * math.log1p(math.sqrt(p) / s) / n),
        lambda_itv=sigma * min(math.sqrt(s * math.log(p) / n), n_quarter, p_term),
    )


def rate_bundle(cfg: ProblemConfig) -> RateBundle:
    return rates(cfg.n, cfg.p, cfg.s, cfg.sigma)


def run_test(n_hat, lam: float, a: float, factor: float = DEFAULT_THRESHOLD_FACTOR) -> int:
    """1 iff N > factor * a * lam (strict)."""
    if lam < 0:
        raise InvalidConfigError(f"lambda must be >= 0, got {lam}")
    value = n_hat.n_hat if hasattr(n_hat, "n_hat") else n_hat
    return int(value > factor * a * lam)


# ---------------------------------------------------------------------------
# Alternatives and replicate machinery
# ---------------------------------------------------------------------------


class AlternativeKind(str, enum.Enum):
    PRIOR_DRAWS = "prior_draws"
    EQUAL_SPREAD = "equal_spread"
    SINGLE_SPIKE = "single_spike"


@dataclass(frozen=True)
class AlternativeFamily:
    """A finite set of members standing in for the sup over Theta(s, tau).

    ``sphere=True`` keeps every member on the l0-sphere (exactly s nonzeros),
    which rules out the single spike when s > 1.
    """

    kinds: tuple[AlternativeKind, ...]
    tau: float
    sphere: bool = False

    def __post_init__(self):
        kinds = self.kinds
        if isinstance(kinds, (str, AlternativeKind)):
            kinds = (kinds,)
        kinds = tuple(AlternativeKind(k) for k in kinds)
        if not kinds:
            raise InvalidConfigError("alternative family needs at least one member")
        if len(set(kinds)) != len(kinds):
            raise InvalidConfigError("duplicate alternative kinds")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise InvalidConfigError(f"alternatives need tau > 0, got {self.tau}")
        object.__setattr__(self, "kinds", kinds)

    def with_tau(self, tau: float) -> AlternativeFamily:
        return AlternativeFamily(self.kinds, tau, self.sphere)

    def describe(self) -> str:
        return "+".join(k.value for k in self.kinds) + ("@sphere" if self.sphere else "")


def _member_theta(kind: AlternativeKind, cfg: ProblemConfig, tau: float, sphere: bool, seed, r):
    if kind is AlternativeKind.PRIOR_DRAWS:
        return sample_prior(PriorSpec(cfg.p, cfg.s, tau), derive_seed(seed, "prior", r))
    if kind is AlternativeKind.EQUAL_SPREAD:
        return SparseVector(cfg.p, np.arange(cfg.s), np.full(cfg.s, tau / math.sqrt(cfg.s)))
    if sphere and cfg.s > 1:
        raise InvalidConfigError("single_spike lies off the l0-sphere when s > 1")
    return SparseVector(cfg.p, np.array([0]), np.array([tau]))


def _chunk_stats(cfg, label, seed, theta_fn, lo, hi):
    p = cfg.p
    coords = np.empty((hi - lo, p))
    diag = np.empty((hi - lo, p))
    norms = np.empty(hi - lo)
    for k, r in enumerate(range(lo, hi)):
        theta = theta_fn(r)
        sample = sample_regression(cfg, theta, derive_seed(seed, label, r))
        ctx = least_squares(sample.x, sample.y)
        coords[k] = ctx.coords
        diag[k] = ctx.gram_inverse_diag
        norms[k] = theta.l2_norm()
    q, _ = q_hat_batch(coords, diag, cfg)
    return np.sqrt(np.maximum(q, 0.0)), norms


def _run_replicates(cfg, label, seed, theta_fn, replicates, threads):
    bounds = [(lo, min(lo + _CHUNK, replicates)) for lo in range(0, replicates, _CHUNK)]
    if threads is None or threads <= 1 or len(bounds) == 1:
        parts = [_chunk_stats(cfg, label, seed, theta_fn, lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda b: _chunk_stats(cfg, label, seed, theta_fn, *b), bounds)
            )
    n_hats = np.concatenate([a for a, _ in parts])
    norms = np.concatenate([b for _, b in parts])
    return n_hats, norms


def null_n_hats(cfg: ProblemConfig, replicates: int, seed: SeedToken, threads: int = 1):
    zero = SparseVector.zeros(cfg.p)
    return _run_replicates(cfg, "null", seed, lambda r: zero, replicates, threads)[0]


def alternative_n_hats(cfg, kind, tau, replicates, seed, threads=1, sphere=False, label="alt"):
    kind = AlternativeKind(kind)
    lab = f"{label}/{kind.value}"
    return _run_replicates(
        cfg, lab, seed, lambda r: _member_theta(kind, cfg, tau, sphere, derive_seed(seed, lab, r), 0),
        replicates, threads,
    )


def binomial_half_width(rate: float, replicates: int) -> float:
    hw = Z95 * math.sqrt(max(rate * (1.0 - rate), 0.0) / replicates)
    return max(hw, 1.0 / replicates)


@dataclass(frozen=True)
class RiskEstimate:
    type1: float
    type2_worst: float
    total: float
    half_width: float
    replicates: int
    alternative_family: str
    type1_half_width: float
    type2_half_width: float
    a: float
    tau: float
    type2_by_member: tuple[tuple[str, float], ...] = ()


def _check_replicates(replicates):
    if isinstance(replicates, bool) or int(replicates) != replicates or replicates < 100:
        raise InvalidConfigError(f"replicates must be an integer >= 100, got {replicates!r}")


def _risk_from(null_nh, alt_by_member, lam, a, factor, family, replicates):
    thr = factor * a * lam
    type1 = float(np.mean(null_nh > thr))
    t2 = tuple((k, float(np.mean(~(nh > thr)))) for k, nh in alt_by_member)
    worst = max(v for _, v in t2)
    hw1 = binomial_half_width(type1, replicates)
    hw2 = binomial_half_width(worst, replicates)
    return RiskEstimate(
        type1=type1,
        type2_worst=worst,
        total=type1 + worst,
        half_width=math.hypot(hw1, hw2),
        replicates=replicates,
        alternative_family=family.describe(),
        type1_half_width=hw1,
        type2_half_width=hw2,
        a=a,
        tau=family.tau,
        type2_by_member=t2,
    )


def estimate_risk(
    cfg: ProblemConfig,
    family: AlternativeFamily,
    a: float,
    replicates: int,
    seed: SeedToken,
    threads: int = 1,
    factor: float = DEFAULT_THRESHOLD_FACTOR,
) -> RiskEstimate:
    """Type-I error at theta = 0 plus worst type-II error over ``family``.

    The test is 1{N > factor * a * lambda} with lambda = sigma sqrt(psi).
    """
    _check_replicates(replicates)
    if not a > 0:
        raise InvalidConfigError(f"a must be positive, got {a}")
    lam = rate_bundle(cfg).lambda_eq6
    null_nh = null_n_hats(cfg, replicates, seed, threads)
    alts = [
        (k.value, alternative_n_hats(cfg, k, family.tau, replicates, seed, threads, family.sphere)[0])
        for k in family.kinds
    ]
    return _risk_from(null_nh, alts, lam, a, factor, family, replicates)


def risk_curve(
    cfg: ProblemConfig,
    kinds,
    a_grid,
    replicates: int,
    seed: SeedToken,
    threads: int = 1,
    factor: float = DEFAULT_THRESHOLD_FACTOR,
    sphere: bool = False,
) -> list[RiskEstimate]:
    """Risk at separation tau = a * lambda for each a, reusing null replicates.

    Identical to calling ``estimate_risk`` per grid point with the same seed.
    """
    _check_replicates(replicates)
    if not a_grid:
        raise InvalidConfigError("empty A grid")
    lam = rate_bundle(cfg).lambda_eq6
    null_nh = null_n_hats(cfg, replicates, seed, threads)
    out = []
    for a in a_grid:
        if not a > 0:
            raise InvalidConfigError(f"a must be positive, got {a}")
        tau = a * lam if lam > 0 else a
        family = AlternativeFamily(kinds, tau, sphere)
        alts = [
            (k.value, alternative_n_hats(cfg, k, tau, replicates, seed, threads, sphere)[0])
            for k in family.kinds
        ]
        out.append(_risk_from(null_nh, alts, lam, a, factor, family, replicates))
    return out


@dataclass(frozen=True)
class NormMse:
    mse: float
    half_width: float
    worst_member: str
    by_member: tuple[tuple[str, float, float], ...]
    replicates: int


def estimate_norm_mse(
    cfg: ProblemConfig,
    family: AlternativeFamily,
    replicates: int,
    seed: SeedToken,
    threads: int = 1,
) -> NormMse:
    """Worst member of ``family`` for the empirical E(N - ||theta||)^2."""
    _check_replicates(replicates)
    members = []
    for k in family.kinds:
        nh, norms = alternative_n_hats(
            cfg, k, family.tau, replicates, seed, threads, family.sphere, label="mse"
        )
        err = (nh - norms) ** 2
        sd = float(err.std(ddof=1)) if replicates > 1 else 0.0
        members.append((k.value, float(err.mean()), Z95 * sd / math.sqrt(replicates)))
    worst = max(members, key=lambda m: m[1])
    return NormMse(
        mse=worst[1],
        half_width=worst[2],
        worst_member=worst[0],
        by_member=tuple(members),
        replicates=replicates,
    )
