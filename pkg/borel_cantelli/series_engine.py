#!/usr/bin/env python3
"""
Series Engine - nonnegative series and their convergence verdicts
Term generators, compensated partial sums and a log-regression classifier
that decides Convergent / Divergent / Indeterminate at desk scale
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from borel_cantelli.errors import DomainError, InvalidSequenceError

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
FLAT_TAIL_RATIO = 0.99


class SeriesClass(str, Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class DeclaredClass:
    """Analytically known classification and where it comes from"""
    verdict: SeriesClass
    note: str = ""


@dataclass(frozen=True)
class TermSequence:
    """A nonnegative series t_n, n >= first_index"""
    first_index: int
    term_at: Callable[[int], float]
    log_term_at: Optional[Callable[[int], float]] = None
    exact_class: Optional[DeclaredClass] = None
    batch_term_at: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_log_term_at: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        if self.first_index < 1:
            raise DomainError(f"first_index must be >= 1, got {self.first_index}")

    def values(self, ns: Sequence[int]) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if self.batch_term_at is not None:
            return np.asarray(self.batch_term_at(ns), dtype=float).reshape(ns.shape)
        return np.fromiter((self.term_at(int(n)) for n in ns), dtype=float, count=len(ns))

    def log_values(self, ns: Sequence[int]) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if self.batch_log_term_at is not None:
            return np.asarray(self.batch_log_term_at(ns), dtype=float).reshape(ns.shape)
        if self.log_term_at is not None:
            return np.fromiter((self.log_term_at(int(n)) for n in ns), dtype=float, count=len(ns))
        with np.errstate(divide="ignore"):
            return np.log(self.values(ns))

    @property
    def has_log_form(self) -> bool:
        return self.log_term_at is not None or self.batch_log_term_at is not None

    def with_declared(self, verdict: SeriesClass, note: str) -> "TermSequence":
        return TermSequence(
            first_index=self.first_index, term_at=self.term_at, log_term_at=self.log_term_at,
            exact_class=DeclaredClass(verdict, note), batch_term_at=self.batch_term_at,
            batch_log_term_at=self.batch_log_term_at, label=self.label,
        )

    @classmethod
    def from_vectorized(cls, fn: Callable[[np.ndarray], np.ndarray], first_index: int = 1,
                        log_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                        label: str = "", exact_class: Optional[DeclaredClass] = None) -> "TermSequence":
        """Build from numpy-vectorised term (and optional log-term) functions"""
        def scalar(n: int) -> float:
            return float(np.asarray(fn(np.array([n], dtype=np.int64)), dtype=float)[0])

        log_scalar = None
        if log_fn is not None:
            def log_scalar(n: int) -> float:
                return float(np.asarray(log_fn(np.array([n], dtype=np.int64)), dtype=float)[0])

        return cls(first_index=first_index, term_at=scalar, log_term_at=log_scalar,
                   exact_class=exact_class, batch_term_at=fn, batch_log_term_at=log_fn, label=label)


@dataclass(frozen=True)
class Budget:
    """Evaluation budget and decision constants of the classifier"""
    n_max: int = 10 ** 6
    growth: float = 1.25
    delta: float = 0.05
    vanish_floor: float = 1e-8
    tail_points: int = 10
    min_points: int = 8
    partial_sum_limit: Optional[int] = None
    fit_start: int = 16


@dataclass
class SeriesVerdict:
    verdict: SeriesClass
    fitted_exponents: Optional[Tuple[float, float, float]] = None
    partial_sums: List[Tuple[int, float]] = field(default_factory=list)
    tests_applied: List[Tuple[str, str]] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    declared: Optional[DeclaredClass] = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "fitted_exponents": list(self.fitted_exponents) if self.fitted_exponents else None,
            "partial_sums": [[n, s] for n, s in self.partial_sums],
            "tests_applied": [[name, vote] for name, vote in self.tests_applied],
            "diagnostics": list(self.diagnostics),
            "declared": self.declared.note if self.declared else None,
        }


def _checked(seq: TermSequence, ns: np.ndarray, values: np.ndarray) -> np.ndarray:
    bad = ~(values >= 0.0) | np.isinf(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidSequenceError(f"term at n={int(ns[i])} is {values[i]!r}", index=int(ns[i]))
    return values


def _linear_sum(seq: TermSequence, lo: int, hi: int) -> float:
    """fsum of t_lo..t_hi, chunked"""
    chunk_sums = []
    for start in range(lo, hi + 1, CHUNK):
        ns = np.arange(start, min(start + CHUNK, hi + 1), dtype=np.int64)
        chunk_sums.append(math.fsum(_checked(seq, ns, seq.values(ns))))
    return math.fsum(chunk_sums)


def log_partial_sum(seq: TermSequence, N: int) -> float:
    """log of t_first + ... + t_N, accumulated with logsumexp"""
    if N < seq.first_index:
        raise DomainError(f"N={N} is below first_index={seq.first_index}")
    total = -math.inf
    for start in range(seq.first_index, N + 1, CHUNK):
        ns = np.arange(start, min(start + CHUNK, N + 1), dtype=np.int64)
        logs = seq.log_values(ns)
        if np.any(np.isnan(logs)) or np.any(logs == math.inf):
            i = int(np.argmax(np.isnan(logs) | (logs == math.inf)))
            raise InvalidSequenceError(f"log term at n={int(ns[i])} is {logs[i]!r}", index=int(ns[i]))
        total = float(np.logaddexp(total, logsumexp(logs)))
    return total


def partial_sum(seq: TermSequence, N: int) -> float:
    """Compensated sum of t_first..t_N; falls back to the log form when linear terms underflow"""
    if N < seq.first_index:
        raise DomainError(f"N={N} is below first_index={seq.first_index}")
    total = _linear_sum(seq, seq.first_index, N)
    if total < np.finfo(float).tiny and seq.has_log_form:
        return math.exp(log_partial_sum(seq, N))
    return total


def geometric_schedule(first_index: int, n_max: int, growth: float) -> np.ndarray:
    """ceil(first * growth**j) for j = 0, 1, ... up to n_max, deduplicated"""
    points = []
    j = 0
    while True:
        n = math.ceil(first_index * growth ** j)
        if n > n_max:
            break
        points.append(n)
        j += 1
    if points and points[-1] != n_max:
        points.append(n_max)
    return np.unique(np.asarray(points, dtype=np.int64))


def terms_do_not_vanish(tail: np.ndarray, floor: float = 1e-8) -> bool:
    """True when the sampled tail stays above the floor without decaying"""
    tail = np.asarray(tail, dtype=float)
    if tail.size == 0 or not np.all(tail > floor):
        return False
    return float(tail.min()) / float(tail.max()) >= FLAT_TAIL_RATIO


def partial_sum_checkpoints(seq: TermSequence, limit: int) -> List[Tuple[int, float]]:
    """Partial sums at powers of ten and at ``limit``"""
    marks = [10 ** e for e in range(1, 12) if seq.first_index <= 10 ** e < limit] + [limit]
    checkpoints = []
    running = []
    previous = seq.first_index - 1
    for mark in marks:
        if mark > previous:
            running.append(_linear_sum(seq, previous + 1, mark))
            previous = mark
        checkpoints.append((mark, math.fsum(running)))
    return checkpoints


def _log_regression(ns: np.ndarray, log_terms: np.ndarray) -> Tuple[Tuple[float, float, float], float]:
    """Fit log t = log C - p log n - q log log n + r log log log n"""
    log_n = np.log(ns.astype(float))
    loglog_n = np.log(log_n)
    design = np.column_stack([np.ones_like(log_n), -log_n, -loglog_n, np.log(loglog_n)])
    coef, _, _, _ = np.linalg.lstsq(design, log_terms, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - log_terms) ** 2)))
    return (float(coef[1]), float(coef[2]), float(coef[3])), residual


def _band_vote(exponent: float, delta: float) -> Optional[SeriesClass]:
    if exponent > 1.0 + delta:
        return SeriesClass.CONVERGENT
    if exponent < 1.0 - delta:
        return SeriesClass.DIVERGENT
    return None


def _regression_vote(p: float, q: float, r: float, delta: float) -> SeriesClass:
    vote = _band_vote(p, delta)
    if vote is not None:
        return vote
    vote = _band_vote(q, delta)
    if vote is not None:
        return vote
    # n^-1 (log n)^-1 (log log n)^r converges iff r < -1
    if r < -1.0 - delta:
        return SeriesClass.CONVERGENT
    if r > -1.0 + delta:
        return SeriesClass.DIVERGENT
    return SeriesClass.INDETERMINATE


def classify(seq: TermSequence, budget: Budget = Budget()) -> SeriesVerdict:
    """
    Decide convergence of a nonnegative series from sampled terms.

    Tests run in order and the first decisive one wins: eventually-zero,
    vanishing, super-polynomial decay, then the (p, q, r) log-regression
    with the boundary band delta. A declared exact class overrides the
    heuristic outcome and is listed last in tests_applied.
    """
    result = SeriesVerdict(verdict=SeriesClass.INDETERMINATE, declared=seq.exact_class)
    label = seq.label or "series"

    if budget.n_max < 1000:
        result.diagnostics.append(f"budget n_max={budget.n_max} is below 1000; nothing fitted")
        return _apply_declared(result, label)

    schedule = geometric_schedule(seq.first_index, budget.n_max, budget.growth)
    if len(schedule) < budget.min_points:
        result.diagnostics.append(f"only {len(schedule)} schedule points; need {budget.min_points}")
        return _apply_declared(result, label)

    terms = _checked(seq, schedule, seq.values(schedule))
    log_terms = seq.log_values(schedule) if seq.has_log_form else None
    if log_terms is None:
        with np.errstate(divide="ignore"):
            log_terms = np.log(terms)

    limit = min(budget.n_max, budget.partial_sum_limit or budget.n_max)
    if limit >= seq.first_index:
        result.partial_sums = partial_sum_checkpoints(seq, limit)

    verdict = _heuristic(result, schedule, terms, log_terms, budget)
    result.verdict = verdict
    logger.debug(f"{label}: heuristic verdict {verdict.value} via {result.tests_applied}")
    return _apply_declared(result, label)


def _heuristic(result: SeriesVerdict, schedule: np.ndarray, terms: np.ndarray,
               log_terms: np.ndarray, budget: Budget) -> SeriesClass:
    if log_terms[-1] == -math.inf:
        result.tests_applied.append(("eventually-zero", SeriesClass.CONVERGENT.value))
        return SeriesClass.CONVERGENT

    tail = terms[-budget.tail_points:]
    if terms_do_not_vanish(tail, budget.vanish_floor):
        result.tests_applied.append(("vanishing", SeriesClass.DIVERGENT.value))
        result.diagnostics.append(f"tail terms stay in [{tail.min():.3e}, {tail.max():.3e}]")
        return SeriesClass.DIVERGENT
    result.tests_applied.append(("vanishing", "pass"))

    finite = np.isfinite(log_terms)
    if finite[-4:].all():
        elasticity = np.diff(log_terms[-4:]) / np.diff(np.log(schedule[-4:].astype(float)))
        if np.all(elasticity < -50.0):
            result.tests_applied.append(("super-polynomial", SeriesClass.CONVERGENT.value))
            result.diagnostics.append(f"tail log-elasticity {float(elasticity.max()):.1f}")
            return SeriesClass.CONVERGENT

    mask = finite & (schedule >= budget.fit_start)
    if mask.sum() < budget.min_points:
        result.diagnostics.append(f"only {int(mask.sum())} usable points for the regression")
        result.tests_applied.append(("log-regression", SeriesClass.INDETERMINATE.value))
        return SeriesClass.INDETERMINATE

    (p, q, r), residual = _log_regression(schedule[mask], log_terms[mask])
    result.fitted_exponents = (p, q, r)
    result.diagnostics.append(f"fit p={p:.4f} q={q:.4f} r={r:.4f} rms={residual:.2e}")
    vote = _regression_vote(p, q, r, budget.delta)
    result.tests_applied.append(("log-regression", vote.value))
    return vote


def _apply_declared(result: SeriesVerdict, label: str) -> SeriesVerdict:
    declared = result.declared
    if declared is None:
        return result
    if result.verdict not in (declared.verdict, SeriesClass.INDETERMINATE):
        logger.warning(f"{label}: heuristic says {result.verdict.value}, declared {declared.verdict.value} ({declared.note})")
    result.tests_applied.append(("declared", declared.verdict.value))
    result.verdict = declared.verdict
    return result
