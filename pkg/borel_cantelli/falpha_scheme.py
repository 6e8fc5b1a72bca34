#!/usr/bin/env python3
"""
F^alpha Scheme - maxima of independent F^{alpha_i} variables
Cumulative exponents, P(M_n <= x_n), the event kernels of {M_n <= x_n}
and of the newcomer events, criterion series and seeded simulation
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from borel_cantelli.distributions import PowerTransform, Uniform, UnivariateModel, make_model
from borel_cantelli.errors import (
    DegenerateEventError,
    DomainError,
    PreconditionError,
)
from borel_cantelli.markov_indicators import IndicatorKernel
from borel_cantelli.seeding import derive_seed, make_rng
from borel_cantelli.series_engine import DeclaredClass, SeriesClass, TermSequence, geometric_schedule

logger = logging.getLogger(__name__)

PROBE_LIMIT = 10_000
HYPOTHESIS_LEVEL = 0.01
MIN_TABLE = 1024
SIMULATION_CHUNK = 4096


def log_cdf_power(log_weight: np.ndarray, log_cdf: np.ndarray) -> np.ndarray:
    """log F^w = w log F, computed as -exp(log w + log(-log F)) so huge w stays finite"""
    log_weight = np.asarray(log_weight, dtype=float)
    log_cdf = np.asarray(log_cdf, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.exp(log_weight + np.log(-log_cdf))
    return np.where(log_cdf == 0.0, 0.0, out)


@dataclass(frozen=True, eq=False)
class ExponentSequence:
    """alpha_n > 0 with alpha_1 = 1, held through its log so n**(2n) is usable"""
    family: str
    log_alpha_fn: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, Any] = field(default_factory=dict)
    length: Optional[int] = None

    def __post_init__(self):
        first = float(np.asarray(self.log_alpha_fn(np.array([1], dtype=np.int64)), dtype=float).reshape(-1)[0])
        if first != 0.0:
            raise DomainError(f"alpha_1 must equal 1, got {math.exp(first)!r}")

    def log_alphas(self, ns: Sequence[int]) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size and int(ns.min()) < 1:
            raise DomainError("exponents are indexed from n = 1")
        if self.length is not None and ns.size and int(ns.max()) > self.length:
            raise DomainError(f"{self.family} exponents are defined only up to n={self.length}")
        values = np.broadcast_to(np.asarray(self.log_alpha_fn(ns), dtype=float), ns.shape).astype(float)
        if np.any(~np.isfinite(values)):
            raise DomainError(f"{self.family}: alpha_n must be positive and finite in log form")
        return values

    def alphas(self, ns: Sequence[int]) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_alphas(ns))

    def alpha_at(self, n: int) -> float:
        return float(self.alphas([n])[0])

    def log_alpha_at(self, n: int) -> float:
        return float(self.log_alphas([n])[0])

    @classmethod
    def constant(cls, value: float = 1.0) -> "ExponentSequence":
        if not value > 0:
            raise DomainError(f"constant exponent must be positive, got {value}")
        log_value = math.log(value)
        return cls("constant", lambda ns: np.where(ns == 1, 0.0, log_value), {"value": value})

    @classmethod
    def example41(cls, gamma: float) -> "ExponentSequence":
        """alpha_1 = 1, alpha_n = gamma (1 + 1/n)"""
        if not gamma > 0:
            raise DomainError(f"gamma must be positive, got {gamma}")
        log_gamma = math.log(gamma)
        return cls("example41",
                   lambda ns: np.where(ns == 1, 0.0, log_gamma + np.log1p(1.0 / ns)),
                   {"gamma": gamma})

    @classmethod
    def power(cls, c: float) -> "ExponentSequence":
        """alpha_n = n**c"""
        return cls("power", lambda ns: c * np.log(ns.astype(float)), {"c": c})

    @classmethod
    def superexp(cls) -> "ExponentSequence":
        """alpha_n = n**(2n)"""
        return cls("superexp", lambda ns: 2.0 * ns * np.log(ns.astype(float)))

    @classmethod
    def table(cls, values: Sequence[float]) -> "ExponentSequence":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0 or np.any(~(arr > 0)):
            raise DomainError("exponent table must hold positive values")
        logs = np.log(arr)
        return cls("table", lambda ns: logs[np.asarray(ns) - 1], {"values": arr.tolist()}, length=len(arr))


def make_exponents(spec: Dict[str, Any]) -> ExponentSequence:
    """Exponent family from a config block such as {"family": "power", "c": -2}"""
    params = dict(spec)
    family = params.pop("family", "constant")
    if family == "constant":
        return ExponentSequence.constant(float(params.get("value", 1.0)))
    if family == "example41":
        return ExponentSequence.example41(float(params["gamma"]))
    if family == "power":
        return ExponentSequence.power(float(params["c"]))
    if family == "superexp":
        return ExponentSequence.superexp()
    if family == "table":
        return ExponentSequence.table(params["values"])
    raise DomainError(f"unknown exponent family {family!r}")


class CumulativeExponent:
    """S_n = alpha_1 + ... + alpha_n in linear and log-sum-exp form, grown on demand"""

    def __init__(self, exponents: ExponentSequence):
        self.exponents = exponents
        self._lock = threading.Lock()
        self._linear = np.empty(0)
        self._log = np.empty(0)

    def _grow(self, n: int) -> None:
        have = len(self._log)
        if n <= have:
            return
        target = max(n, 2 * have, MIN_TABLE)
        if self.exponents.length is not None:
            if n > self.exponents.length:
                raise DomainError(f"S_n needs alpha_{n} but the table stops at n={self.exponents.length}")
            target = min(target, self.exponents.length)
        ns = np.arange(have + 1, target + 1, dtype=np.int64)
        log_alpha = self.exponents.log_alphas(ns)
        last_log = self._log[-1] if have else -math.inf
        last_linear = self._linear[-1] if have else 0.0
        with np.errstate(over="ignore"):
            linear = np.cumsum(np.concatenate([[last_linear], np.exp(log_alpha)]))[1:]
        logs = np.logaddexp.accumulate(np.concatenate([[last_log], log_alpha]))[1:]
        self._linear = np.concatenate([self._linear, linear])
        self._log = np.concatenate([self._log, logs])

    def _rows(self, ns: Sequence[int], which: str) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size == 0:
            return np.empty(0)
        if int(ns.min()) < 1:
            raise DomainError("S_n is indexed from n = 1")
        with self._lock:
            self._grow(int(ns.max()))
            arr = self._linear if which == "linear" else self._log
        return arr[ns - 1]

    def log_values(self, ns: Sequence[int]) -> np.ndarray:
        return self._rows(ns, "log")

    def values(self, ns: Sequence[int]) -> np.ndarray:
        """Linear S_n where representable, exp of the log form otherwise (may be inf)"""
        linear = self._rows(ns, "linear")
        with np.errstate(over="ignore"):
            return np.where(np.isfinite(linear), linear, np.exp(self._rows(ns, "log")))

    def ratio(self, ns: Sequence[int]) -> np.ndarray:
        """S_n / S_{n+1}"""
        ns = np.asarray(ns, dtype=np.int64)
        lo, hi = self._rows(ns, "linear"), self._rows(ns + 1, "linear")
        exact = np.isfinite(hi)
        with np.errstate(invalid="ignore"):
            linear_ratio = lo / hi
        return np.where(exact, linear_ratio, np.exp(self._rows(ns, "log") - self._rows(ns + 1, "log")))


ThresholdFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class MaximaScenario:
    """
    Base law F, exponents alpha_n and nondecreasing thresholds x_n.

    Indices below first_index get the left extremity of F as threshold, so
    the events {M_n <= x_n} are impossible there.
    """
    base: UnivariateModel
    exponents: ExponentSequence
    x_at: ThresholdFn
    first_index: int = 1
    label: str = "falpha"
    threshold_family: str = "custom"

    @cached_property
    def cumulative(self) -> CumulativeExponent:
        return CumulativeExponent(self.exponents)

    def thresholds(self, ns: Sequence[int]) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        active = ns >= self.first_index
        safe = np.where(active, ns, max(self.first_index, 1))
        values = np.broadcast_to(np.asarray(self.x_at(safe), dtype=float), ns.shape)
        return np.where(active, values, self.base.left_extremity)

    def log_cdf_at(self, ns: Sequence[int]) -> np.ndarray:
        """log F(x_n)"""
        x = self.thresholds(ns)
        return np.asarray(self.base.logcdf(x), dtype=float).reshape(np.shape(x))

    def log_prob_max_leq(self, ns: Sequence[int]) -> np.ndarray:
        """log F^{S_n}(x_n)"""
        ns = np.asarray(ns, dtype=np.int64)
        return log_cdf_power(self.cumulative.log_values(ns), self.log_cdf_at(ns))

    def threshold_keys(self, ns: Sequence[int]) -> np.ndarray:
        """-log(-log F(x_n)): M_n <= x_n iff the largest simulation key is <= this"""
        with np.errstate(divide="ignore"):
            return -np.log(-self.log_cdf_at(ns))


def cumulative(scenario: MaximaScenario, n: int) -> float:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return float(scenario.cumulative.values([n])[0])


def log_cumulative(scenario: MaximaScenario, n: int) -> float:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return float(scenario.cumulative.log_values([n])[0])


def prob_max_leq(scenario: MaximaScenario, n: int) -> float:
    """P(M_n <= x_n) = F^{S_n}(x_n)"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return float(np.exp(scenario.log_prob_max_leq([n])[0]))


class MaximaSeries(str, Enum):
    BC_CLASSIC = "bc_classic"
    PROP41 = "prop41"
    PROP51 = "prop51"
    PROP52 = "prop52"


def _probe_grid(start: int = 10) -> np.ndarray:
    return geometric_schedule(start, PROBE_LIMIT, 1.25)


def _tail_vanishes(values: np.ndarray) -> bool:
    tail = values[-8:]
    return bool(tail[-1] < HYPOTHESIS_LEVEL and np.all(np.diff(tail) <= 1e-15))


def _hypothesis(condition: str, holds: bool, detail: str, strict: bool) -> None:
    if holds:
        return
    if strict:
        raise PreconditionError(condition, detail)
    logger.warning(f"precondition violated: {condition} ({detail}); continuing without it")


def _check_prop51(scenario: MaximaScenario, strict: bool) -> None:
    grid = _probe_grid()
    log_alpha = scenario.exponents.log_alphas(grid)
    diverges = bool(np.all(np.diff(log_alpha[-8:]) > 0) and log_alpha[-1] > math.log(1e3))
    _hypothesis("alpha_n -> infinity", diverges,
                f"alpha at n={int(grid[-1])} is exp({log_alpha[-1]:.3g})", strict)
    ratios = scenario.cumulative.ratio(grid)
    _hypothesis("S_n / S_{n+1} -> 0", _tail_vanishes(ratios),
                f"S_n/S_(n+1) at n={int(grid[-1])} is {ratios[-1]:.3g}", strict)


def _check_prop52(scenario: MaximaScenario, strict: bool) -> None:
    grid = _probe_grid()
    shares = np.exp(scenario.exponents.log_alphas(grid) - scenario.cumulative.log_values(grid))
    _hypothesis("alpha_n / S_n -> 0", _tail_vanishes(shares),
                f"alpha_n/S_n at n={int(grid[-1])} is {shares[-1]:.3g}", strict)


def _declared_class(scenario: MaximaScenario, kind: MaximaSeries) -> Optional[DeclaredClass]:
    family = scenario.exponents.family
    params = scenario.exponents.params
    if family == "example41" and scenario.threshold_family == "example41":
        gamma = params["gamma"]
        if kind is MaximaSeries.BC_CLASSIC:
            return DeclaredClass(SeriesClass.DIVERGENT, "F^{S_n}(x_n) ~ (log n)^-gamma, not summable for any gamma > 0")
        if kind is MaximaSeries.PROP41:
            verdict = SeriesClass.CONVERGENT if gamma > 1 else SeriesClass.DIVERGENT
            return DeclaredClass(verdict, f"terms ~ gamma loglog n / (n (log n)^gamma), gamma={gamma}")
    if family == "superexp":
        if kind is MaximaSeries.PROP51:
            return DeclaredClass(SeriesClass.CONVERGENT, "S_n/S_(n+1) ~ e^-2 n^-2")
        if kind is MaximaSeries.PROP52:
            return DeclaredClass(SeriesClass.DIVERGENT, "alpha_n/S_n -> 1")
    if family == "power":
        c = params["c"]
        if kind is MaximaSeries.PROP52:
            verdict = SeriesClass.CONVERGENT if c < -1 else SeriesClass.DIVERGENT
            return DeclaredClass(verdict, f"alpha_n/S_n ~ n^c with bounded S_n iff c < -1, c={c}")
        if kind is MaximaSeries.PROP51:
            return DeclaredClass(SeriesClass.DIVERGENT, "S_n/S_(n+1) -> 1 for polynomial exponents")
    if family == "constant":
        if kind is MaximaSeries.PROP51:
            return DeclaredClass(SeriesClass.DIVERGENT, "S_n/S_(n+1) -> 1")
        if kind is MaximaSeries.PROP52:
            return DeclaredClass(SeriesClass.DIVERGENT, "alpha_n/S_n ~ 1/n")
    return None


def series_terms(scenario: MaximaScenario, kind: MaximaSeries, strict: bool = True) -> TermSequence:
    """
    Criterion series of the scheme, exact and log-domain capable.

    PROP51 and PROP52 check their hypotheses on a probe grid up to n = 10**4;
    with strict=False a failed check is logged instead of raised.
    """
    kind = MaximaSeries(kind)
    label = f"{scenario.label}:{kind.value}"
    first = 1

    if kind is MaximaSeries.BC_CLASSIC:
        def log_terms(ns):
            return scenario.log_prob_max_leq(ns)
        first = scenario.first_index
    elif kind is MaximaSeries.PROP41:
        def log_terms(ns):
            ns = np.asarray(ns, dtype=np.int64)
            lc = log_cdf_power(scenario.exponents.log_alphas(ns + 1), scenario.log_cdf_at(ns + 1))
            with np.errstate(divide="ignore"):
                return scenario.log_prob_max_leq(ns) + np.log(-np.expm1(lc))
        first = scenario.first_index
    elif kind is MaximaSeries.PROP51:
        _check_prop51(scenario, strict)

        def log_terms(ns):
            ns = np.asarray(ns, dtype=np.int64)
            return scenario.cumulative.log_values(ns) - scenario.cumulative.log_values(ns + 1)
    else:
        _check_prop52(scenario, strict)

        def log_terms(ns):
            ns = np.asarray(ns, dtype=np.int64)
            return scenario.exponents.log_alphas(ns) - scenario.cumulative.log_values(ns)

    def terms(ns):
        return np.exp(log_terms(ns))

    return TermSequence.from_vectorized(terms, first_index=first, log_fn=log_terms, label=label,
                                        exact_class=_declared_class(scenario, kind))


def exact_event_probs(scenario: MaximaScenario, n: int) -> Tuple[float, float]:
    """(P(B_n), P(B_n B_{n+1}^c)); the newcomer indicators are independent, so both are exact"""
    if n < 2:
        raise DomainError(f"newcomer events need n >= 2, got {n}")
    log_s = scenario.cumulative.log_values([n - 1, n, n + 1])
    log_b = log_s[0] - log_s[1]
    log_new_max = scenario.exponents.log_alpha_at(n + 1) - log_s[2]
    return math.exp(log_b), math.exp(log_b + log_new_max)


def _check_thresholds(scenario: MaximaScenario) -> None:
    grid = np.unique(np.concatenate([np.arange(1, 2001), _probe_grid(1)]))
    x = scenario.thresholds(grid)
    x_next = scenario.thresholds(grid + 1)
    drops = x_next < x
    if np.any(drops):
        n = int(grid[int(np.argmax(drops))])
        raise PreconditionError("thresholds nondecreasing", f"x_{n + 1} < x_{n}")


def maxima_event_kernel(scenario: MaximaScenario) -> IndicatorKernel:
    """
    Order-1 kernel of A_n = {M_n <= x_n}.

    P(A_{n+1} | A_n) = F^{alpha_{n+1}}(x_{n+1}) and
    P(A_{n+1} | A_n^c) = F^{alpha_{n+1}}(x_{n+1}) (F^{S_n}(x_{n+1}) - F^{S_n}(x_n)) / (1 - F^{S_n}(x_n)).
    Marginals and consecutive joint laws of the chain equal those of the
    scheme; longer joint laws are those of the Markov chain with this kernel.
    """
    _check_thresholds(scenario)
    cum = scenario.cumulative

    def p(ns):
        ns = np.asarray(ns, dtype=np.int64)
        return np.exp(log_cdf_power(scenario.exponents.log_alphas(ns + 1), scenario.log_cdf_at(ns + 1)))

    def q(ns):
        ns = np.asarray(ns, dtype=np.int64)
        log_s = cum.log_values(ns)
        lb = log_cdf_power(log_s, scenario.log_cdf_at(ns))
        la = log_cdf_power(log_s, scenario.log_cdf_at(ns + 1))
        lc = log_cdf_power(scenario.exponents.log_alphas(ns + 1), scenario.log_cdf_at(ns + 1))
        certain = lb == 0.0
        if np.any(certain):
            n = int(ns[int(np.argmax(certain))])
            raise DegenerateEventError(f"{scenario.label}: P(M_{n} <= x_{n}) = 1")
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            gained = np.exp(lb + lc) * np.expm1(la - lb) / -np.expm1(lb)
        return np.where(np.isneginf(lb), np.exp(la + lc), gained)

    def marginal(ns):
        return np.exp(scenario.log_prob_max_leq(ns))

    p1 = float(np.exp(scenario.log_prob_max_leq([1])[0]))
    return IndicatorKernel.order_one(p, q, p1, vectorized=True, marginal_hint=marginal,
                                     label=f"{scenario.label}:maxima")


def newcomer_event_kernel(scenario: MaximaScenario, event: str = "B") -> IndicatorKernel:
    """Kernel of B_n (X_n is not the maximum) or C_n (it is); the indicators are independent"""
    cum = scenario.cumulative
    if event == "B":
        def prob(ns):
            return cum.ratio(np.asarray(ns, dtype=np.int64))

        def marginal(ns):
            ns = np.asarray(ns, dtype=np.int64)
            return np.where(ns > 1, cum.ratio(np.maximum(ns - 1, 1)), 0.0)
        p1, safe = 0.0, 1
    elif event == "C":
        def prob(ns):
            ns = np.asarray(ns, dtype=np.int64)
            return np.exp(scenario.exponents.log_alphas(ns + 1) - cum.log_values(ns + 1))

        def marginal(ns):
            ns = np.asarray(ns, dtype=np.int64)
            return np.exp(scenario.exponents.log_alphas(ns) - cum.log_values(ns))
        # C_1 is certain
        p1, safe = 1.0, 2
    else:
        raise DomainError(f"event must be 'B' or 'C', got {event!r}")
    return IndicatorKernel.order_one(prob, prob, p1, vectorized=True, marginal_hint=marginal,
                                     safe_start_index=safe, label=f"{scenario.label}:{event}")


@dataclass(frozen=True)
class SchemeStep:
    n: int
    x: float
    m: float
    a: int
    b: int
    c: int


@dataclass
class SchemeBatch:
    """Indicator rows (replication x index) of A_n, B_n; C_n = 1 - B_n"""
    a: np.ndarray
    b: np.ndarray
    ties: int = 0

    @property
    def c(self) -> np.ndarray:
        return (1 - self.b).astype(np.int8)


def _exponential_from_uniform(u: np.ndarray) -> np.ndarray:
    e = -np.log1p(-np.asarray(u, dtype=float))
    return np.maximum(e, np.finfo(float).tiny)


def simulate_scheme(scenario: MaximaScenario, T: int, seed: int) -> Iterator[SchemeStep]:
    """
    Stream (n, X_n, M_n, I_A, I_B, I_C) for n = 1..T.

    X_n is the F^{alpha_n} quantile at level exp(-E_n), E_n standard exponential; ranks
    use the key log alpha_n - log E_n, and a key equal to the running
    maximum counts as a new maximum.
    """
    if T < 1:
        raise DomainError(f"horizon T={T} must be >= 1")
    rng = make_rng(seed)
    ns = np.arange(1, T + 1, dtype=np.int64)
    log_alpha = scenario.exponents.log_alphas(ns)
    thresholds = scenario.threshold_keys(ns)
    best_key = -math.inf
    best_x = math.nan
    ties = 0
    for i, n in enumerate(ns):
        e = float(_exponential_from_uniform(rng.random()))
        key = float(log_alpha[i]) - math.log(e)
        x = float(PowerTransform.from_log_alpha(scenario.base, float(log_alpha[i])).quantile_log(-e))
        if key == best_key:
            ties += 1
        b = int(key < best_key)
        if not b:
            best_key, best_x = key, x
        a = int(best_key <= thresholds[i])
        yield SchemeStep(n=int(n), x=x, m=best_x, a=a, b=b, c=1 - b)
    if ties:
        logger.warning(f"{scenario.label}: {ties} floating-point key ties counted as new maxima")


def simulate_scheme_batch(scenario: MaximaScenario, T: int, seeds: Sequence[int]) -> SchemeBatch:
    """Indicator rows for every seed; row r matches simulate_scheme(scenario, T, seeds[r])"""
    if T < 1:
        raise DomainError(f"horizon T={T} must be >= 1")
    rngs = [make_rng(s) for s in seeds]
    reps = len(rngs)
    a_rows = np.zeros((reps, T), dtype=np.int8)
    b_rows = np.zeros((reps, T), dtype=np.int8)
    running = np.full(reps, -np.inf)
    ties = 0
    for start in range(0, T, SIMULATION_CHUNK):
        stop = min(start + SIMULATION_CHUNK, T)
        ns = np.arange(start + 1, stop + 1, dtype=np.int64)
        uniforms = np.stack([rng.random(stop - start) for rng in rngs]) if reps else np.empty((0, stop - start))
        keys = scenario.exponents.log_alphas(ns)[None, :] - np.log(_exponential_from_uniform(uniforms))
        best = np.maximum.accumulate(np.concatenate([running[:, None], keys], axis=1), axis=1)
        previous, current = best[:, :-1], best[:, 1:]
        ties += int(np.count_nonzero(keys == previous))
        b_rows[:, start:stop] = keys < previous
        a_rows[:, start:stop] = current <= scenario.threshold_keys(ns)[None, :]
        running = current[:, -1] if stop > start else running
    if ties:
        logger.warning(f"{scenario.label}: {ties} floating-point key ties counted as new maxima")
    return SchemeBatch(a=a_rows, b=b_rows, ties=ties)


def example41_thresholds(ns: np.ndarray) -> np.ndarray:
    """x_n = 1 - log(log n) / n"""
    n = np.asarray(ns, dtype=float)
    return 1.0 - np.log(np.log(n)) / n


def example41_scenario(gamma: float) -> MaximaScenario:
    """
    Uniform base, alpha_n = gamma (1 + 1/n), x_n = 1 - log(log n)/n.

    x_n decreases up to n = 6, so events start at n = 6.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    return MaximaScenario(base=Uniform(), exponents=ExponentSequence.example41(gamma),
                          x_at=example41_thresholds, first_index=6,
                          label=f"example41(gamma={gamma:g})", threshold_family="example41")


def make_thresholds(spec: Dict[str, Any]) -> Tuple[ThresholdFn, int, str]:
    """(x_at, first_index, family) from a config block"""
    params = dict(spec)
    family = params.pop("family", "constant")
    if family == "constant":
        value = float(params["value"])
        return (lambda ns: np.full(np.shape(ns), value)), int(params.get("first_index", 1)), family
    if family == "example41":
        return example41_thresholds, int(params.get("first_index", 6)), family
    if family == "table":
        values = np.asarray(params["values"], dtype=float)
        first = int(params.get("first_index", 1))

        def lookup(ns):
            idx = np.asarray(ns, dtype=np.int64) - first
            # constant beyond the table
            return values[np.clip(idx, 0, len(values) - 1)]
        return lookup, first, family
    raise DomainError(f"unknown threshold family {family!r}")


def make_scenario(base: Any, exponents: Dict[str, Any], thresholds: Optional[Dict[str, Any]] = None,
                  label: str = "falpha") -> MaximaScenario:
    x_at, first, family = make_thresholds(thresholds or {"family": "constant", "value": 0.5})
    return MaximaScenario(base=make_model(base), exponents=make_exponents(exponents), x_at=x_at,
                          first_index=first, label=label, threshold_family=family)


@dataclass
class MarkovDiagnostic:
    """Empirical P(A_{n+1} | A_n^c, A_{n-1} = j) against the kernel value P(A_{n+1} | A_n^c)"""
    n: int
    kernel_value: float
    counts: Dict[int, int]
    frequencies: Dict[int, float]
    z_scores: Dict[int, float]

    @property
    def consistent(self) -> bool:
        return all(abs(z) <= 4.0 for z in self.z_scores.values())


def markov_property_diagnostic(scenario: MaximaScenario, n: int, reps: int, seed: int) -> MarkovDiagnostic:
    """Compare second-order conditional frequencies with the order-1 kernel at index n"""
    if n < 2:
        raise DomainError(f"diagnostic needs n >= 2, got {n}")
    batch = simulate_scheme_batch(scenario, n + 1, [derive_seed(seed, i) for i in range(reps)])
    prev, cur, nxt = batch.a[:, n - 2], batch.a[:, n - 1], batch.a[:, n]
    kernel_value = float(maxima_event_kernel(scenario).kernel_values(np.array([n]), 0)[0])

    counts, freqs, zs = {}, {}, {}
    for j in (0, 1):
        sel = (cur == 0) & (prev == j)
        count = int(sel.sum())
        counts[j] = count
        if count == 0:
            freqs[j], zs[j] = math.nan, 0.0
            continue
        freq = float(nxt[sel].mean())
        sd = math.sqrt(max(kernel_value * (1.0 - kernel_value), 1e-12) / count)
        freqs[j], zs[j] = freq, (freq - kernel_value) / sd
    return MarkovDiagnostic(n=n, kernel_value=kernel_value, counts=counts, frequencies=freqs, z_scores=zs)
