"""Problem configuration, random designs, sparse parameters and samples.

Randomness is keyed by integer seed tokens.  ``derive_seed`` hashes a
master token with a stream label and a replicate index, so every
replicate of every experiment owns an independent, order-free stream.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError

SeedToken = int

_MASK64 = (1 << 64) - 1


def derive_seed(master: SeedToken, stream_label: str, replicate: int) -> SeedToken:
    """64-bit token for (master, label, replicate); pure and collision-resistant."""
    msg = f"{int(master) & _MASK64}\x1f{stream_label}\x1f{int(replicate)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def rng_from(seed: SeedToken) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & _MASK64)))


class DesignFamily(str, enum.Enum):
    GAUSSIAN_IID = "gaussian_iid"
    RADEMACHER = "rademacher"
    SCALED_UNIFORM = "scaled_uniform"


# smallest subgaussian constant we vouch for, per family
_SIGMA_X = {
    DesignFamily.GAUSSIAN_IID: 1.0,
    DesignFamily.RADEMACHER: 1.0,
    DesignFamily.SCALED_UNIFORM: math.sqrt(3.0),
}


@dataclass(frozen=True)
class DesignSpec:
    """Row law of X.  All families are isotropic: E[X^T X / n] = I."""

    family: DesignFamily = DesignFamily.GAUSSIAN_IID
    sigma_x: float | None = None

    def __post_init__(self):
        fam = DesignFamily(self.family)
        object.__setattr__(self, "family", fam)
        if self.sigma_x is None:
            object.__setattr__(self, "sigma_x", _SIGMA_X[fam])
        elif not self.sigma_x >= _SIGMA_X[fam]:
            raise InvalidConfigError(
                f"sigma_x={self.sigma_x} is not a valid subgaussian constant for {fam.value}"
            )


@dataclass(frozen=True)
class ProblemConfig:
    n: int
    p: int
    s: int
    sigma: float = 1.0
    design: DesignSpec = field(default_factory=DesignSpec)
    gamma: float = 0.9

    def __post_init__(self):
        for name in ("n", "p", "s"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise InvalidConfigError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.s > self.p:
            raise InvalidConfigError(f"sparsity s={self.s} exceeds dimension p={self.p}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise InvalidConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not 0 < self.gamma < 1:
            raise InvalidConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dense(self) -> bool:
        # exact integer comparison, s >= sqrt(p)
        return self.s * self.s >= self.p

    def theorem_conditions_met(self) -> bool:
        return self.n >= 9 and self.p <= min(self.gamma * self.n, self.n - 8)

    def replace(self, **kw) -> ProblemConfig:
        d = dict(n=self.n, p=self.p, s=self.s, sigma=self.sigma, design=self.design, gamma=self.gamma)
        d.update(kw)
        return ProblemConfig(**d)


@dataclass(frozen=True)
class SparseVector:
    dim: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if support.shape != values.shape or support.ndim != 1:
            raise InvalidConfigError("support and values must be 1-d arrays of equal length")
        order = np.argsort(support, kind="stable")
        support, values = support[order], values[order]
        if support.size and (support[0] < 0 or support[-1] >= self.dim):
            raise InvalidConfigError("support index out of range")
        if np.any(np.diff(support) == 0):
            raise InvalidConfigError("duplicate support index")
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dim: int) -> SparseVector:
        return cls(dim, np.empty(0, dtype=np.int64), np.empty(0))

    @classmethod
    def from_dense(cls, v) -> SparseVector:
        v = np.asarray(v, dtype=np.float64)
        idx = np.flatnonzero(v)
        return cls(v.size, idx, v[idx])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.support] = self.values
        return out

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values * self.values)))

    def l0_norm(self) -> int:
        return int(np.count_nonzero(self.values))

    def scaled(self, factor: float) -> SparseVector:
        return SparseVector(self.dim, self.support, self.values * factor)


@dataclass(frozen=True)
class PriorSpec:
    """Uniform law on s-subsets, every nonzero entry equal to tau / sqrt(s)."""

    p: int
    s: int
    tau: float

    def __post_init__(self):
        if self.p < 1 or self.s < 1:
            raise InvalidConfigError("p and s must be positive")
        if self.s > self.p:
            raise InvalidConfigError(f"sparsity s={self.s} exceeds dimension p={self.p}")
        # tau = 0 is a valid degenerate spec for divergence checks; draws need tau > 0
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise InvalidConfigError(f"tau must be finite and >= 0, got {self.tau}")


@dataclass(frozen=True)
class RegressionSample:
    x: np.ndarray
    y: np.ndarray
    theta: SparseVector
    xi: np.ndarray


def generate_design(cfg: ProblemConfig, seed: SeedToken) -> np.ndarray:
    return draw_design(cfg.design.family, cfg.n, cfg.p, rng_from(seed))


def draw_design(family, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    family = DesignFamily(family)
    if family is DesignFamily.GAUSSIAN_IID:
        return rng.standard_normal((n, p))
    if family is DesignFamily.RADEMACHER:
        return rng.integers(0, 2, size=(n, p)).astype(np.float64) * 2.0 - 1.0
    r3 = math.sqrt(3.0)
    return rng.uniform(-r3, r3, size=(n, p))


def random_support(p: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """First s slots of a partial Fisher-Yates shuffle of range(p), sorted."""
    idx = np.arange(p)
    for k in range(s):
        j = int(rng.integers(k, p))
        idx[k], idx[j] = idx[j], idx[k]
    return np.sort(idx[:s])


def sample_prior(prior: PriorSpec, seed: SeedToken) -> SparseVector:
    if not prior.tau > 0:
        raise InvalidConfigError("prior draws need tau > 0")
    support = random_support(prior.p, prior.s, rng_from(seed))
    return SparseVector(prior.p, support, np.full(prior.s, prior.tau / math.sqrt(prior.s)))


def sample_regression(cfg: ProblemConfig, theta: SparseVector, seed: SeedToken) -> RegressionSample:
    if theta.dim != cfg.p:
        raise InvalidConfigError(f"theta has dimension {theta.dim}, expected p={cfg.p}")
    x = generate_design(cfg, derive_seed(seed, "design", 0))
    xi = rng_from(derive_seed(seed, "noise", 0)).standard_normal(cfg.n)
    signal = x[:, theta.support] @ theta.values
    y = signal + cfg.sigma * xi
    return RegressionSample(x=x, y=y, theta=theta, xi=xi)
