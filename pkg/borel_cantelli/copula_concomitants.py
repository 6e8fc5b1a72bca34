#!/usr/bin/env python3
"""
Copula Concomitants - concomitants of maxima in bivariate models
Copula families, conditional-inversion sampling, the law of the concomitant
of the maximum and the almost-sure convergence criterion, all on the
copula scale u = H(x), v = G(y)
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from borel_cantelli.distributions import Uniform, UnivariateModel, make_model
from borel_cantelli.errors import ConsistencyError, DomainError, RootFindError
from borel_cantelli.quadrature import IntegrandSpec, integrate
from borel_cantelli.seeding import make_rng
from borel_cantelli.series_engine import Budget, SeriesClass, TermSequence, classify

logger = logging.getLogger(__name__)

QUAD_TOLERANCE = 1e-10
EPSILON_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
BETA_LEVELS = 50
BETA_STABLE = 1e-6
SERIES_BUDGET = Budget(n_max=2000, partial_sum_limit=200)

_TINY = np.finfo(float).tiny
_BELOW_ONE = 1.0 - np.finfo(float).epsneg


class Copula(ABC):
    """Bivariate law on the unit square with uniform margins"""

    family: str = "copula"

    @abstractmethod
    def cdf(self, u, v):
        ...

    @abstractmethod
    def d1(self, u, v):
        """Partial derivative dC/du, the conditional cdf of V given U = u"""

    @abstractmethod
    def cond_quantile(self, w, u):
        """v with d1(u, v) = w"""

    def upper_gap(self, u, v):
        """v - C(u, v)"""
        return v - self.cdf(u, v)

    def one_minus_d1(self, u, v):
        return 1.0 - self.d1(u, v)

    def breakpoints(self, v: float) -> List[float]:
        """Points in (0, 1) where d1(., v) is not smooth"""
        return []

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family}


class IndependenceCopula(Copula):
    family = "independence"

    def cdf(self, u, v):
        return u * v

    def d1(self, u, v):
        return np.broadcast_to(v, np.broadcast(u, v).shape) * 1.0

    def cond_quantile(self, w, u):
        return np.broadcast_to(w, np.broadcast(w, u).shape) * 1.0

    def upper_gap(self, u, v):
        return v * (1.0 - u)

    def one_minus_d1(self, u, v):
        return np.broadcast_to(1.0 - v, np.broadcast(u, v).shape) * 1.0


class FGMCopula(Copula):
    """C(u, v) = uv (1 + lambda (1 - u)(1 - v))"""

    family = "fgm"

    def __init__(self, lam: float):
        if not -1.0 <= lam <= 1.0:
            raise DomainError(f"FGM parameter must lie in [-1, 1], got {lam}")
        self.lam = float(lam)

    def cdf(self, u, v):
        return u * v * (1.0 + self.lam * (1.0 - u) * (1.0 - v))

    def d1(self, u, v):
        return v * (1.0 + self.lam * (1.0 - 2.0 * u) * (1.0 - v))

    def upper_gap(self, u, v):
        return v * (1.0 - u) * (1.0 - self.lam * u * (1.0 - v))

    def one_minus_d1(self, u, v):
        return (1.0 - v) * (1.0 - self.lam * (1.0 - 2.0 * u) * v)

    def cond_quantile(self, w, u):
        # root in [0, 1] of a v^2 - (1 + a) v + w = 0, a = lambda (1 - 2u)
        w = np.asarray(w, dtype=float)
        a = self.lam * (1.0 - 2.0 * np.asarray(u, dtype=float))
        disc = (1.0 + a) ** 2 - 4.0 * a * w
        with np.errstate(invalid="ignore"):
            v = np.where(w > 0.0, 2.0 * w / ((1.0 + a) + np.sqrt(np.maximum(disc, 0.0))), 0.0)
        if np.any(~np.isfinite(v)) or np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise RootFindError(f"FGM conditional quantile left [0, 1] for lambda={self.lam}")
        return np.clip(v, 0.0, 1.0)

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "lambda": self.lam}


class ComonotoneCopula(Copula):
    """C(u, v) = min(u, v); d1 is the a.e. derivative 1[u < v]"""

    family = "comonotone"

    def cdf(self, u, v):
        return np.minimum(u, v)

    def d1(self, u, v):
        return (np.asarray(u) < np.asarray(v)).astype(float)

    def upper_gap(self, u, v):
        return np.maximum(np.asarray(v, dtype=float) - u, 0.0)

    def one_minus_d1(self, u, v):
        return (np.asarray(u) >= np.asarray(v)).astype(float)

    def cond_quantile(self, w, u):
        return np.broadcast_to(np.asarray(u, dtype=float), np.broadcast(w, u).shape) * 1.0

    def breakpoints(self, v: float) -> List[float]:
        return [float(v)] if 0.0 < v < 1.0 else []


def make_copula(spec: Dict[str, Any]) -> Copula:
    params = dict(spec)
    family = params.pop("family", "independence")
    if family == "independence":
        return IndependenceCopula()
    if family == "fgm":
        return FGMCopula(float(params.get("lambda", params.get("lam", 0.0))))
    if family == "comonotone":
        return ComonotoneCopula()
    raise DomainError(f"unknown copula family {family!r}")


@dataclass(frozen=True, eq=False)
class BivariateModel:
    """F(x, y) = C(H(x), G(y))"""
    copula: Copula
    marginal_x: UnivariateModel = field(default_factory=Uniform)
    marginal_y: UnivariateModel = field(default_factory=Uniform)

    def joint_cdf(self, x, y):
        return self.copula.cdf(self.marginal_x.cdf(x), self.marginal_y.cdf(y))

    def level(self, y: float) -> float:
        """v = G(y), required below 1"""
        v = float(self.marginal_y.cdf(y))
        if not 0.0 <= v < 1.0:
            raise DomainError(f"y={y} must lie below the right extremity of G (G(y)={v})")
        return v

    def describe(self) -> Dict[str, Any]:
        return {"copula": self.copula.describe(), "x": self.marginal_x.describe(), "y": self.marginal_y.describe()}


def make_bivariate(copula: Dict[str, Any], marginal_x: Any = "uniform", marginal_y: Any = "uniform") -> BivariateModel:
    return BivariateModel(make_copula(copula), make_model(marginal_x), make_model(marginal_y))


def _open_unit(p: np.ndarray) -> np.ndarray:
    return np.clip(p, _TINY, _BELOW_ONE)


def sample_pair(model: BivariateModel, seed: int) -> Tuple[float, float]:
    """(x, y) by conditional inversion: u, then v = cond_quantile(w, u)"""
    rng = make_rng(seed)
    u, w = rng.random(2)
    v = float(model.copula.cond_quantile(w, u))
    return float(model.marginal_x.quantile(_open_unit(u))), float(model.marginal_y.quantile(_open_unit(v)))


def concomitant_of_max_stream(model: BivariateModel, T: int, seed: int) -> Iterator[Tuple[int, float, float]]:
    """(n, X_{n,n}, Y_[n,n]) for n = 1..T; a tie keeps the earlier maximum"""
    if T < 1:
        raise DomainError(f"horizon T={T} must be >= 1")
    rng = make_rng(seed)
    best_u, best_v = -1.0, 0.0
    for n in range(1, T + 1):
        u, w = rng.random(2)
        if u > best_u:
            best_u, best_v = u, float(model.copula.cond_quantile(w, u))
        yield (n, float(model.marginal_x.quantile(_open_unit(best_u))),
               float(model.marginal_y.quantile(_open_unit(best_v))))


@dataclass
class ConcomitantBatch:
    """Copula-scale running maxima and their concomitants, one row per replication"""
    u_max: np.ndarray
    v_concomitant: np.ndarray

    def y_leq(self, v: float) -> np.ndarray:
        return self.v_concomitant <= v


def concomitant_batch(model: BivariateModel, T: int, seeds: Sequence[int]) -> ConcomitantBatch:
    """Vectorised streams; row r follows concomitant_of_max_stream(model, T, seeds[r])"""
    if T < 1:
        raise DomainError(f"horizon T={T} must be >= 1")
    reps = len(seeds)
    if reps == 0:
        return ConcomitantBatch(np.empty((0, T)), np.empty((0, T)))
    draws = np.stack([make_rng(s).random(2 * T).reshape(T, 2) for s in seeds])
    u, w = draws[:, :, 0], draws[:, :, 1]
    v = model.copula.cond_quantile(w, u)

    running = np.maximum.accumulate(u, axis=1)
    previous = np.concatenate([np.full((reps, 1), -1.0), running[:, :-1]], axis=1)
    is_new = u > previous
    positions = np.where(is_new, np.arange(T)[None, :], 0)
    holder = np.maximum.accumulate(positions, axis=1)
    return ConcomitantBatch(u_max=running, v_concomitant=np.take_along_axis(v, holder, axis=1))


def _weight_breaks(n: int) -> List[float]:
    """Split points that follow the mass of n u^(n-1) towards u = 1"""
    return [1.0 - c / n for c in (30.0, 10.0, 3.0, 1.0) if 0.0 < 1.0 - c / n < 1.0]


def prob_concomitant_leq(model: BivariateModel, n: int, y: float) -> float:
    """P(Y_[n,n] <= y) = n * integral of u^(n-1) d1C(u, G(y)) over [0, 1]"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    v = float(model.marginal_y.cdf(y))
    copula = model.copula

    def f(u):
        return n * u ** (n - 1) * copula.d1(u, v)

    breaks = copula.breakpoints(v) + _weight_breaks(n)
    return integrate(IntegrandSpec(f=f, tolerance=QUAD_TOLERANCE), 0.0, 1.0, breakpoints=breaks).value


def criterion_term(model: BivariateModel, n: int, y: float) -> float:
    """P(Y_[n,n] > y, Y_[n+1,n+1] <= y) = n * integral of u^(n-1) (v - C)(1 - d1C)"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    v = model.level(y)
    copula = model.copula

    def f(u):
        return n * u ** (n - 1) * copula.upper_gap(u, v) * copula.one_minus_d1(u, v)

    breaks = copula.breakpoints(v) + _weight_breaks(n)
    return integrate(IntegrandSpec(f=f, tolerance=QUAD_TOLERANCE), 0.0, 1.0, breakpoints=breaks).value


def criterion_term_sequence(model: BivariateModel, y: float) -> TermSequence:
    return TermSequence(first_index=1, term_at=lambda n: criterion_term(model, n, y),
                        label=f"{model.copula.family}:criterion(y={y:g})")


def criterion_partial_sum(model: BivariateModel, y: float, N: int) -> float:
    return math.fsum(criterion_term(model, n, y) for n in range(1, N + 1))


def _criterion_integrand(copula: Copula, v: float):
    def f(u):
        return copula.upper_gap(u, v) * copula.one_minus_d1(u, v) / (1.0 - u) ** 2
    return f


@dataclass
class CriterionIntegral:
    value: float
    epsilon: float
    slope: float
    intercept: float
    residual: float
    finite: bool
    schedule: List[Tuple[float, float]] = field(default_factory=list)


def _partial_integrals(copula: Copula, v: float, epsilons: Sequence[float]) -> List[float]:
    """Integral over [0, 1 - eps] for decreasing eps, accumulated piecewise"""
    spec = IntegrandSpec(f=_criterion_integrand(copula, v), singular_endpoint="right", tolerance=QUAD_TOLERANCE)
    values = []
    lower, running = 0.0, 0.0
    for eps in sorted(epsilons, reverse=True):
        upper = 1.0 - eps
        if upper > lower:
            running += integrate(spec, lower, upper, breakpoints=copula.breakpoints(v)).value
            lower = upper
        values.append(running)
    return values


def criterion_integral(model: BivariateModel, y: float, epsilon: float = 1e-6) -> CriterionIntegral:
    """
    Truncated criterion integral of (v - C)(1 - d1C)/(1 - u)^2 over [0, 1 - epsilon]
    plus the fit a log(1/eps) + b over eps = 1e-1 .. 1e-6. The integral is
    reported divergent when a > 0 and a exceeds ten times the fit residual.
    """
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    v = model.level(y)
    copula = model.copula
    schedule = sorted(set(EPSILON_SCHEDULE) | {epsilon}, reverse=True)
    values = dict(zip(schedule, _partial_integrals(copula, v, schedule)))

    xs = np.log(1.0 / np.asarray(EPSILON_SCHEDULE))
    ys = np.asarray([values[e] for e in EPSILON_SCHEDULE])
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = float(np.sqrt(np.mean((slope * xs + intercept - ys) ** 2)))
    divergent = bool(slope > 0.0 and slope > 10.0 * residual and slope > 1e-9)
    logger.debug(f"criterion integral {copula.family} v={v:.4g}: slope={slope:.6g} residual={residual:.3g}")
    return CriterionIntegral(value=values[epsilon], epsilon=epsilon, slope=float(slope),
                             intercept=float(intercept), residual=residual, finite=not divergent,
                             schedule=[(e, values[e]) for e in EPSILON_SCHEDULE])


def _series_kernel(N: int, u: np.ndarray) -> np.ndarray:
    """K_N(u) = sum_{n<=N} n u^(n-1) = (1 - u^N - N u^N (1 - u)) / (1 - u)^2"""
    s = 1.0 - u
    with np.errstate(divide="ignore", invalid="ignore"):
        log_power = N * np.log1p(-s)
        closed = (-np.expm1(log_power) - N * s * np.exp(log_power)) / s ** 2
    taylor = N * (N + 1) / 2.0 - s * (N - 1) * N * (N + 1) / 3.0 + s ** 2 * (N - 2) * (N - 1) * N * (N + 1) / 8.0
    return np.where(N * s < 1e-3, taylor, closed)


def matched_partial_integral(model: BivariateModel, y: float, N: int) -> float:
    """Integral route of sum_{n<=N} criterion_term(n, y): weight K_N in place of (1 - u)^-2"""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    v = model.level(y)
    copula = model.copula

    def f(u):
        return _series_kernel(N, u) * copula.upper_gap(u, v) * copula.one_minus_d1(u, v)

    breaks = copula.breakpoints(v) + _weight_breaks(N)
    return integrate(IntegrandSpec(f=f, tolerance=QUAD_TOLERANCE), 0.0, 1.0, breakpoints=breaks).value


@dataclass
class BetaLimit:
    estimate: float
    converged: bool
    values: List[float] = field(default_factory=list)


def beta_limit(model: BivariateModel, y: float) -> BetaLimit:
    """lim (v - C(u, v)) / (1 - u) as u -> 1, from u_j = 1 - 2^-j with one Richardson step"""
    v = model.level(y)
    j = np.arange(1, BETA_LEVELS + 1)
    u = 1.0 - np.ldexp(1.0, -j)
    ratios = np.asarray(model.copula.upper_gap(u, v), dtype=float) / np.ldexp(1.0, -j)
    extrapolated = 2.0 * ratios[1:] - ratios[:-1]
    converged = bool(np.all(np.abs(np.diff(ratios[-5:])) < BETA_STABLE))
    if not converged:
        logger.info(f"beta limit for {model.copula.family} at v={v:.4g} did not stabilise")
    return BetaLimit(estimate=float(extrapolated[-1]), converged=converged, values=ratios.tolist())


class AsVerdict(str, Enum):
    CONVERGES_AS = "ConvergesAS"
    DOES_NOT_CONVERGE_AS = "DoesNotConvergeAS"
    INDETERMINATE = "Indeterminate"


@dataclass
class LevelVerdict:
    y: float
    v: float
    verdict: AsVerdict
    integral: CriterionIntegral
    series_verdict: SeriesClass
    beta: BetaLimit


@dataclass
class Theorem31Report:
    """Verdict of Y_[n,n] -> r_G almost surely, certified only on the tested y grid"""
    overall: AsVerdict
    levels: List[LevelVerdict]
    note: str = "criterion checked on a finite y grid only"


def _level_verdict(model: BivariateModel, y: float) -> LevelVerdict:
    v = model.level(y)
    integral = criterion_integral(model, y)
    series = classify(criterion_term_sequence(model, y), SERIES_BUDGET)
    beta = beta_limit(model, y)

    integral_class = SeriesClass.CONVERGENT if integral.finite else SeriesClass.DIVERGENT
    if series.verdict is SeriesClass.INDETERMINATE:
        verdict = AsVerdict.INDETERMINATE
    elif series.verdict is not integral_class:
        raise ConsistencyError(
            f"{model.copula.family} at y={y}: integral route says {integral_class.value}, "
            f"series route says {series.verdict.value}"
        )
    else:
        verdict = AsVerdict.CONVERGES_AS if integral.finite else AsVerdict.DOES_NOT_CONVERGE_AS

    if integral.finite and abs(beta.estimate) > BETA_STABLE:
        logger.warning(f"{model.copula.family} at y={y}: finite criterion but beta={beta.estimate:.3g} is not 0")
    return LevelVerdict(y=y, v=v, verdict=verdict, integral=integral, series_verdict=series.verdict, beta=beta)


def theorem31_verdict(model: BivariateModel, y_grid: Sequence[float]) -> Theorem31Report:
    """ConvergesAS iff the criterion integral is finite at every grid level"""
    if len(y_grid) == 0:
        raise DomainError("y grid is empty")
    levels = [_level_verdict(model, float(y)) for y in y_grid]
    verdicts = {level.verdict for level in levels}
    if AsVerdict.DOES_NOT_CONVERGE_AS in verdicts:
        overall = AsVerdict.DOES_NOT_CONVERGE_AS
    elif AsVerdict.INDETERMINATE in verdicts:
        overall = AsVerdict.INDETERMINATE
    else:
        overall = AsVerdict.CONVERGES_AS
    logger.info(f"{model.copula.family}: {overall.value} on y grid {list(y_grid)}")
    return Theorem31Report(overall=overall, levels=levels)
