#!/usr/bin/env python3
"""
Univariate distribution models
Continuous laws backed by scipy.stats plus the F^alpha power transform
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy import stats

from borel_cantelli.errors import DomainError
from borel_cantelli.seeding import make_rng

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _check_level(w: ArrayLike) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError(f"quantile level must lie in (0, 1), got {w!r}")
    return arr


def _unwrap(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


class UnivariateModel(ABC):
    """Continuous distribution on the real line with cdf and quantile access"""

    name: str = "model"

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike:
        ...

    @abstractmethod
    def logcdf(self, x: ArrayLike) -> ArrayLike:
        ...

    @abstractmethod
    def quantile(self, w: ArrayLike) -> ArrayLike:
        """Inverse cdf on (0, 1)"""

    @abstractmethod
    def isf(self, s: ArrayLike) -> ArrayLike:
        """Inverse survival function: the point x with 1 - cdf(x) = s"""

    @property
    @abstractmethod
    def left_extremity(self) -> float:
        ...

    @property
    @abstractmethod
    def right_extremity(self) -> float:
        ...

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name}

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "name")
        return f"{type(self).__name__}({params})"


class ScipyModel(UnivariateModel):
    """Wraps a frozen scipy.stats continuous law"""

    def __init__(self, frozen, name: str, params: Optional[Dict[str, float]] = None):
        self._law = frozen
        self.name = name
        self._params = dict(params or {})
        self._left, self._right = (float(e) for e in frozen.support())

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return _unwrap(np.asarray(self._law.cdf(x), dtype=float), x)

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        return _unwrap(np.asarray(self._law.logcdf(x), dtype=float), x)

    def quantile(self, w: ArrayLike) -> ArrayLike:
        return _unwrap(np.asarray(self._law.ppf(_check_level(w)), dtype=float), w)

    def isf(self, s: ArrayLike) -> ArrayLike:
        return _unwrap(np.asarray(self._law.isf(_check_level(s)), dtype=float), s)

    @property
    def left_extremity(self) -> float:
        return self._left

    @property
    def right_extremity(self) -> float:
        return self._right

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, **self._params}


class Uniform(ScipyModel):
    def __init__(self):
        super().__init__(stats.uniform(loc=0.0, scale=1.0), "uniform")

    # exact forms keep cdf(quantile(w)) == w bit for bit
    def cdf(self, x: ArrayLike) -> ArrayLike:
        return _unwrap(np.clip(np.asarray(x, dtype=float), 0.0, 1.0), x)

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(divide="ignore"):
            return _unwrap(np.log(np.clip(np.asarray(x, dtype=float), 0.0, 1.0)), x)

    def quantile(self, w: ArrayLike) -> ArrayLike:
        return _unwrap(_check_level(w).copy(), w)

    def isf(self, s: ArrayLike) -> ArrayLike:
        return _unwrap(1.0 - _check_level(s), s)


class Exponential(ScipyModel):
    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise DomainError(f"exponential rate must be positive, got {rate}")
        super().__init__(stats.expon(scale=1.0 / rate), "exponential", {"rate": float(rate)})


class Pareto(ScipyModel):
    def __init__(self, shape: float = 1.0):
        if not shape > 0:
            raise DomainError(f"Pareto shape must be positive, got {shape}")
        super().__init__(stats.pareto(b=shape), "pareto", {"shape": float(shape)})


class PowerTransform(UnivariateModel):
    """
    The law F^alpha of a base law F.

    alpha may be given through its logarithm so that exponents like n**(2n)
    stay usable; the cdf is exp(alpha * log F) and the quantile is taken on
    the survival scale, isf(-expm1(log w / alpha)).
    """

    def __init__(self, base: UnivariateModel, alpha: Optional[float] = None,
                 log_alpha: Optional[float] = None):
        if (alpha is None) == (log_alpha is None):
            raise DomainError("give exactly one of alpha and log_alpha")
        if alpha is not None:
            if not alpha > 0 or not math.isfinite(alpha):
                raise DomainError(f"alpha must be positive and finite, got {alpha}")
            log_alpha = math.log(alpha)
        elif not math.isfinite(log_alpha):
            raise DomainError(f"log_alpha must be finite, got {log_alpha}")
        self.base = base
        self.log_alpha = float(log_alpha)
        self.name = f"{base.name}^alpha"

    @classmethod
    def from_log_alpha(cls, base: UnivariateModel, log_alpha: float) -> "PowerTransform":
        return cls(base, log_alpha=log_alpha)

    @property
    def alpha(self) -> float:
        """May be inf when only the log form is representable"""
        return math.exp(self.log_alpha) if self.log_alpha < 709.0 else math.inf

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        base_log = np.asarray(self.base.logcdf(x), dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.where(base_log == 0.0, 0.0, np.exp(self.log_alpha) * base_log)
        return _unwrap(out, x)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return _unwrap(np.exp(np.asarray(self.logcdf(x), dtype=float)), x)

    def _from_log_level(self, log_level: np.ndarray, like: ArrayLike) -> ArrayLike:
        survival = -np.expm1(log_level * math.exp(-self.log_alpha))
        # survival underflows to 0 only past the last representable quantile
        survival = np.clip(survival, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return _unwrap(np.asarray(self.base.isf(survival), dtype=float), like)

    def quantile(self, w: ArrayLike) -> ArrayLike:
        return self._from_log_level(np.log(_check_level(w)), w)

    def quantile_log(self, log_w: ArrayLike) -> ArrayLike:
        """Quantile at level exp(log_w), for levels too close to 1 to store directly"""
        arr = np.asarray(log_w, dtype=float)
        if np.any(~(arr < 0.0)):
            raise DomainError(f"log level must be negative, got {log_w!r}")
        return self._from_log_level(arr, log_w)

    def isf(self, s: ArrayLike) -> ArrayLike:
        return self._from_log_level(np.log1p(-_check_level(s)), s)

    @property
    def left_extremity(self) -> float:
        return self.base.left_extremity

    @property
    def right_extremity(self) -> float:
        return self.base.right_extremity

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "base": self.base.describe(), "log_alpha": self.log_alpha}


def evaluate(model: UnivariateModel, x: ArrayLike) -> ArrayLike:
    return model.cdf(x)


def quantile(model: UnivariateModel, w: ArrayLike) -> ArrayLike:
    return model.quantile(w)


def sample(model: UnivariateModel, seed: int) -> float:
    """Inverse-transform draw from the stream seeded by ``seed``"""
    rng = make_rng(seed)
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return float(model.quantile(u))


def sample_many(model: UnivariateModel, rng: np.random.Generator, size: int) -> np.ndarray:
    u = rng.random(size)
    u[u == 0.0] = np.finfo(float).tiny
    return np.asarray(model.quantile(u), dtype=float)


_BUILTINS = {
    "uniform": lambda params: Uniform(),
    "exponential": lambda params: Exponential(rate=params.get("rate", 1.0)),
    "pareto": lambda params: Pareto(shape=params.get("shape", 1.0)),
}


def make_model(spec: Union[str, Dict[str, Any], UnivariateModel]) -> UnivariateModel:
    """Build a model from a config specifier such as {"name": "exponential", "rate": 2}"""
    if isinstance(spec, UnivariateModel):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    params = dict(spec)
    name = str(params.pop("name", "")).lower()
    if name not in _BUILTINS:
        raise DomainError(f"unknown distribution {name!r}; choose from {sorted(_BUILTINS)}")
    alpha = params.pop("alpha", None)
    model = _BUILTINS[name](params)
    if alpha is not None:
        model = PowerTransform(model, alpha=float(alpha))
    logger.debug(f"Built distribution {model!r}")
    return model
