"""JSON experiment configs for the command-line front end.

Unknown keys are rejected, missing keys take the defaults below, and
``to_dict`` / ``load_config`` round-trip losslessly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .detect import DEFAULT_A_GRID, DEFAULT_THRESHOLD_FACTOR, AlternativeKind
from .errors import InvalidConfigError
from .model import DesignFamily

SCHEMA_VERSION = 1


def _default_x_grid():
    return [round(0.05 * k, 10) for k in range(1, 201)]


def _pos_int(name, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise InvalidConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")


def _pos_real(name, v, allow_zero=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InvalidConfigError(f"{name} must be a finite number, got {v!r}")
    if v < 0 or (v == 0 and not allow_zero):
        raise InvalidConfigError(f"{name} must be {'>=' if allow_zero else '>'} 0, got {v!r}")


def _list(name, v, check, allow_empty=False):
    if not isinstance(v, list):
        raise InvalidConfigError(f"{name} must be a list, got {type(v).__name__}")
    if not v and not allow_empty:
        raise InvalidConfigError(f"{name} must not be empty")
    for i, item in enumerate(v):
        check(f"{name}[{i}]", item)


def _design(v):
    try:
        DesignFamily(v)
    except ValueError:
        raise InvalidConfigError(
            f"unknown design {v!r}; expected one of {[f.value for f in DesignFamily]}"
        ) from None


def _kinds(name, v):
    def one(nm, k):
        try:
            AlternativeKind(k)
        except ValueError:
            raise InvalidConfigError(f"{nm}: unknown alternative {k!r}") from None

    _list(name, v, one)


@dataclass
class RatesConfig:
    n: list = field(default_factory=lambda: [1000])
    p: list = field(default_factory=lambda: [100, 10000, 1000000])
    s: list = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    sigma: list = field(default_factory=lambda: [1.0])
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        for name in ("n", "p", "s"):
            _list(name, getattr(self, name), _pos_int)
        _list("sigma", self.sigma, lambda nm, v: _pos_real(nm, v, allow_zero=True))


@dataclass
class RiskConfig:
    n: int = 500
    p: int = 100
    s: int = 5
    sigma: float = 1.0
    design: str = "gaussian_iid"
    alternatives: list = field(default_factory=lambda: ["prior_draws"])
    sphere: bool = False
    a_grid: list = field(default_factory=lambda: list(DEFAULT_A_GRID))
    replicates: int = 500
    threshold_factor: float = DEFAULT_THRESHOLD_FACTOR
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        for name in ("n", "p", "s"):
            _pos_int(name, getattr(self, name))
        _pos_real("sigma", self.sigma, allow_zero=True)
        _design(self.design)
        _kinds("alternatives", self.alternatives)
        _list("a_grid", self.a_grid, _pos_real)
        _pos_int("replicates", self.replicates, 100)
        _pos_real("threshold_factor", self.threshold_factor)
        if not isinstance(self.sphere, bool):
            raise InvalidConfigError("sphere must be a boolean")


@dataclass
class MseConfig:
    n: int = 500
    p: int = 100
    sigma: float = 1.0
    s_grid: list = field(default_factory=lambda: [1, 2, 5, 10, 20])
    design: str = "gaussian_iid"
    alternatives: list = field(default_factory=lambda: ["equal_spread"])
    sphere: bool = False
    tau: float = 1.0
    replicates: int = 500
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        _pos_int("n", self.n)
        _pos_int("p", self.p)
        _pos_real("sigma", self.sigma, allow_zero=True)
        _list("s_grid", self.s_grid, _pos_int)
        _design(self.design)
        _kinds("alternatives", self.alternatives)
        _pos_real("tau", self.tau)
        _pos_int("replicates", self.replicates, 100)


@dataclass
class LowerBoundConfig:
    n: int = 20
    p: int = 10
    s: int = 2
    sigma: float = 1.0
    design: str = "gaussian_iid"
    a_grid: list = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5, 0.75, 0.9])
    pair_samples: int = 400
    design_samples: int = 400
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        for name in ("n", "p", "s"):
            _pos_int(name, getattr(self, name))
        _pos_real("sigma", self.sigma)
        _design(self.design)
        _list("a_grid", self.a_grid, _pos_real)
        _pos_int("pair_samples", self.pair_samples, 100)
        _pos_int("design_samples", self.design_samples, 100)


@dataclass
class VerifyConfig:
    singular_value_cases: list = field(default_factory=lambda: [[100, 10, 4.0], [50, 50, 0.1], [200, 20, 2.0]])
    singular_value_replicates: int = 2000
    gram_identity_designs: int = 20
    gram_identity_n_range: list = field(default_factory=lambda: [30, 100])
    gram_identity_p_range: list = field(default_factory=lambda: [5, 20])
    inverse_moment_d: list = field(default_factory=lambda: [9, 12, 20, 50])
    inverse_moment_m: list = field(default_factory=lambda: [1, 2, 3, 4])
    tail_x: list = field(default_factory=_default_x_grid)
    correlation_rho: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    correlation_x: list = field(default_factory=lambda: [1.0, 1.5, 2.0, 2.5, 3.0])
    correlation_samples: int = 200000
    inner_product_designs: list = field(default_factory=lambda: [f.value for f in DesignFamily])
    inner_product_n: list = field(default_factory=lambda: [50, 100, 200])
    inner_product_p: int = 10
    inner_product_x: list = field(default_factory=lambda: [1.0, 5.0, 10.0, 20.0, 40.0, 80.0])
    inner_product_replicates: int = 2000
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        def case(nm, c):
            if not (isinstance(c, list) and len(c) == 3):
                raise InvalidConfigError(f"{nm} must be [n, p, t]")
            _pos_int(nm + ".n", c[0])
            _pos_int(nm + ".p", c[1])
            _pos_real(nm + ".t", c[2])
            if c[1] > c[0]:
                raise InvalidConfigError(f"{nm}: need p <= n")

        _list("singular_value_cases", self.singular_value_cases, case, allow_empty=True)
        _pos_int("singular_value_replicates", self.singular_value_replicates, 10)
        _pos_int("gram_identity_designs", self.gram_identity_designs, 0)
        for name in ("gram_identity_n_range", "gram_identity_p_range"):
            v = getattr(self, name)
            _list(name, v, _pos_int)
            if len(v) != 2 or v[0] > v[1]:
                raise InvalidConfigError(f"{name} must be [low, high] with low <= high")
        if self.gram_identity_p_range[1] > self.gram_identity_n_range[0]:
            raise InvalidConfigError("gram identity ranges must keep p <= n")
        _list("inverse_moment_d", self.inverse_moment_d, _pos_int, allow_empty=True)
        _list("inverse_moment_m", self.inverse_moment_m, _pos_int, allow_empty=True)
        _list("tail_x", self.tail_x, _pos_real, allow_empty=True)
        _list("correlation_rho", self.correlation_rho, _pos_real, allow_empty=True)
        if any(not r < 1 for r in self.correlation_rho):
            raise InvalidConfigError("correlation_rho entries must lie in (0, 1)")
        _list("correlation_x", self.correlation_x, _pos_real, allow_empty=True)
        if any(x < 1 for x in self.correlation_x):
            raise InvalidConfigError("correlation_x entries must be >= 1")
        _pos_int("correlation_samples", self.correlation_samples, 2)
        _list("inner_product_designs", self.inner_product_designs, lambda nm, v: _design(v), allow_empty=True)
        _list("inner_product_n", self.inner_product_n, _pos_int)
        _pos_int("inner_product_p", self.inner_product_p, 2)
        _list("inner_product_x", self.inner_product_x, _pos_real)
        _pos_int("inner_product_replicates", self.inner_product_replicates, 10)


CONFIGS = {
    "rates": RatesConfig,
    "risk": RiskConfig,
    "mse": MseConfig,
    "lower-bound": LowerBoundConfig,
    "verify-lemmas": VerifyConfig,
}


def config_from_dict(command: str, data: dict[str, Any]):
    cls = CONFIGS[command]
    if not isinstance(data, dict):
        raise InvalidConfigError("config must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidConfigError(f"unknown config field(s) for {command}: {', '.join(unknown)}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise InvalidConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    cfg = cls(**data)
    cfg.validate()
    return cfg


def load_config(command: str, path) -> Any:
    if path is None:
        return config_from_dict(command, {})
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(command, data)


def to_dict(cfg) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def grid_hash(cfg) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
