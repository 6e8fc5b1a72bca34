#!/usr/bin/env python3
"""
Markov Indicators - exact and simulated computation for Markov sequences of events
Forward marginals, tail-union windows through the chain rule, criterion
series terms, seeded trajectories and the conditional-sum diagnostic
"""

import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from borel_cantelli.errors import (
    BudgetError,
    DegenerateWindowError,
    DomainError,
    UndefinedTermError,
)
from borel_cantelli.seeding import make_rng
from borel_cantelli.series_engine import (
    Budget,
    SeriesClass,
    SeriesVerdict,
    TermSequence,
    classify,
    geometric_schedule,
    terms_do_not_vanish,
)

logger = logging.getLogger(__name__)

NULL_EVENT = 1e-300
KERNEL_SLACK = 1e-12
BRUTE_FORCE_MAX_SPAN = 20
SIMULATION_CHUNK = 4096
MIN_TABLE_ROWS = 1024


@dataclass(frozen=True, eq=False)
class IndicatorKernel:
    """
    Time-inhomogeneous order-k law of an indicator chain.

    Histories are k-bit integers holding I_{n-k+1} .. I_n with the oldest bit
    most significant, so stepping with a new bit b is ((h << 1) | b) & mask.
    ``kernel(n, h)`` is P(A_{n+1} = 1 | history h at index n), defined for
    n >= order; ``initial_dist`` is the law of the history at index order.
    """
    order: int
    kernel: Callable[[int, int], float]
    initial_dist: np.ndarray
    safe_start_index: int = 1
    batch: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    marginal_hint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    horizon: Optional[int] = None
    label: str = "chain"

    def __post_init__(self):
        if self.order < 1:
            raise DomainError(f"order must be >= 1, got {self.order}")
        dist = np.asarray(self.initial_dist, dtype=float)
        if dist.shape != (1 << self.order,):
            raise DomainError(f"initial_dist needs {1 << self.order} entries, got shape {dist.shape}")
        if np.any(dist < 0.0) or np.any(dist > 1.0) or abs(math.fsum(dist) - 1.0) > 1e-12:
            raise DomainError(f"initial_dist is not a probability vector: {dist.tolist()}")
        if self.marginal_hint is not None and self.order != 1:
            raise DomainError("marginal_hint is only meaningful for order 1")
        object.__setattr__(self, "initial_dist", dist)

    @property
    def n_histories(self) -> int:
        return 1 << self.order

    @property
    def mask(self) -> int:
        return self.n_histories - 1

    def kernel_values(self, ns: np.ndarray, history: int) -> np.ndarray:
        """P(A_{n+1} | history) for every n in ns, range-checked"""
        ns = np.asarray(ns, dtype=np.int64)
        if self.batch is not None:
            values = np.broadcast_to(np.asarray(self.batch(ns, history), dtype=float), ns.shape).astype(float)
        else:
            values = np.fromiter((self.kernel(int(n), history) for n in ns), dtype=float, count=len(ns))
        bad = ~((values >= -KERNEL_SLACK) & (values <= 1.0 + KERNEL_SLACK))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainError(f"{self.label}: kernel value {values[i]!r} at n={int(ns[i])}, history={history} is not a probability")
        return np.clip(values, 0.0, 1.0)

    @cached_property
    def forward_table(self) -> "ForwardTable":
        return ForwardTable(self)

    @classmethod
    def order_one(cls, p: Callable, q: Callable, p1: float, vectorized: bool = False,
                  marginal_hint: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  safe_start_index: int = 1, label: str = "chain") -> "IndicatorKernel":
        """Order-1 kernel from p(n) = P(A_{n+1} | A_n) and q(n) = P(A_{n+1} | A_n^c)"""
        def kernel(n: int, history: int) -> float:
            return float(p(n) if history & 1 else q(n))

        batch = None
        if vectorized:
            def batch(ns: np.ndarray, history: int) -> np.ndarray:
                return p(ns) if history & 1 else q(ns)

        return cls(order=1, kernel=kernel, initial_dist=np.array([1.0 - p1, p1]),
                   safe_start_index=safe_start_index, batch=batch,
                   marginal_hint=marginal_hint, label=label)

    @classmethod
    def from_table(cls, table: Sequence[Sequence[float]], initial_dist: Sequence[float],
                   safe_start_index: int = 1, label: str = "table") -> "IndicatorKernel":
        """Kernel from rows table[n - k][h], n = k .. k + len(table) - 1"""
        rows = np.asarray(table, dtype=float)
        if rows.ndim != 2 or rows.shape[1] < 2 or rows.shape[1] & (rows.shape[1] - 1):
            raise DomainError(f"kernel table must have 2**k columns, got shape {rows.shape}")
        order = int(rows.shape[1]).bit_length() - 1

        def lookup(ns: np.ndarray, history: int) -> np.ndarray:
            idx = np.asarray(ns, dtype=np.int64) - order
            if np.any(idx < 0) or np.any(idx >= len(rows)):
                raise DomainError(f"{label}: kernel table covers n in [{order}, {order + len(rows) - 1}]")
            return rows[idx, history]

        return cls(order=order, kernel=lambda n, h: float(lookup(np.array([n]), h)[0]),
                   initial_dist=np.asarray(initial_dist, dtype=float), safe_start_index=safe_start_index,
                   batch=lookup, horizon=order + len(rows) - 1, label=label)


class ForwardTable:
    """Kernel values and history laws by index, grown on demand by doubling"""

    def __init__(self, kernel: IndicatorKernel):
        self.kernel = kernel
        self._lock = threading.RLock()
        width = kernel.n_histories
        self._kernel_rows = np.empty((0, width))
        self._state_rows = np.empty((0, width))

    def _row_limit(self, rows: int, extra: int) -> int:
        if self.kernel.horizon is None:
            return rows
        return min(rows, self.kernel.horizon - self.kernel.order + 1 + extra)

    def _grow_kernel(self, hi: int) -> None:
        k = self.kernel.order
        needed = hi - k + 1
        have = len(self._kernel_rows)
        if needed <= have:
            return
        if self.kernel.horizon is not None and hi > self.kernel.horizon:
            raise DomainError(f"{self.kernel.label}: kernel defined only up to n={self.kernel.horizon}")
        target = self._row_limit(max(needed, 2 * have, MIN_TABLE_ROWS), 0)
        ns = np.arange(k + have, k + target, dtype=np.int64)
        block = np.column_stack([self.kernel.kernel_values(ns, h) for h in range(self.kernel.n_histories)])
        self._kernel_rows = np.concatenate([self._kernel_rows, block])

    def _grow_states(self, hi: int) -> None:
        k = self.kernel.order
        needed = hi - k + 1
        have = len(self._state_rows)
        if needed <= have:
            return
        target = self._row_limit(max(needed, 2 * have, MIN_TABLE_ROWS), 1)
        if target < needed:
            raise DomainError(f"{self.kernel.label}: history law defined only up to n={k + target - 1}")
        ns = np.arange(k + have, k + target, dtype=np.int64)

        if self.kernel.marginal_hint is not None:
            m = np.broadcast_to(np.asarray(self.kernel.marginal_hint(ns), dtype=float), ns.shape)
            if np.any(~((m >= 0.0) & (m <= 1.0))):
                raise DomainError(f"{self.kernel.label}: marginal hint left [0, 1]")
            block = np.column_stack([1.0 - m, m])
        else:
            if target > 1:
                self._grow_kernel(k + target - 2)
            block = self._propagate(have, target)
        self._state_rows = np.concatenate([self._state_rows, block])

    def _propagate(self, have: int, target: int) -> np.ndarray:
        width = self.kernel.n_histories
        block = np.empty((target - have, width))
        current = self.kernel.initial_dist if have == 0 else self._state_rows[have - 1]
        start = 0
        if have == 0:
            block[0] = current
            start = 1

        if self.kernel.order == 1:
            q_col = self._kernel_rows[:, 0].tolist()
            p_col = self._kernel_rows[:, 1].tolist()
            m = float(current[1])
            for offset in range(start, target - have):
                r = have + offset - 1
                m = p_col[r] * m + q_col[r] * (1.0 - m)
                block[offset, 0] = 1.0 - m
                block[offset, 1] = m
            return block

        mask = self.kernel.mask
        shifted = (np.arange(width) << 1) & mask
        for offset in range(start, target - have):
            kv = self._kernel_rows[have + offset - 1]
            current = (np.bincount(shifted, weights=current * (1.0 - kv), minlength=width)
                       + np.bincount(shifted | 1, weights=current * kv, minlength=width))
            block[offset] = current
        return block

    def kernel_rows(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size == 0:
            return np.empty((0, self.kernel.n_histories))
        with self._lock:
            self._grow_kernel(int(ns.max()))
            rows = self._kernel_rows
        return rows[ns - self.kernel.order]

    def state_rows(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size == 0:
            return np.empty((0, self.kernel.n_histories))
        if int(ns.min()) < self.kernel.order:
            raise DomainError(f"history law starts at n={self.kernel.order}")
        with self._lock:
            self._grow_states(int(ns.max()))
            rows = self._state_rows
        return rows[ns - self.kernel.order]


@dataclass(frozen=True)
class ChainMarginals:
    n: int
    state_probs: np.ndarray
    marginal: float


def _newest_one(width: int) -> np.ndarray:
    return (np.arange(width) & 1).astype(bool)


def forward_marginals(kernel: IndicatorKernel, n: int) -> ChainMarginals:
    """Law of the history at index n and P(A_n)"""
    if n < kernel.order:
        raise DomainError(f"n={n} is below the chain order {kernel.order}")
    state = kernel.forward_table.state_rows(np.array([n]))[0].copy()
    marginal = math.fsum(state[_newest_one(kernel.n_histories)])
    return ChainMarginals(n=n, state_probs=state, marginal=marginal)


def marginal_probs(kernel: IndicatorKernel, ns: Sequence[int]) -> np.ndarray:
    """P(A_n) for every n in ns (n >= order)"""
    rows = kernel.forward_table.state_rows(np.asarray(ns, dtype=np.int64))
    return rows[:, _newest_one(kernel.n_histories)].sum(axis=1)


def _complement_probs(kernel: IndicatorKernel, rows: np.ndarray) -> np.ndarray:
    return rows[:, ~_newest_one(kernel.n_histories)].sum(axis=1)


def _zero_step(v: np.ndarray, kv: np.ndarray, mask: int) -> np.ndarray:
    """Advance history laws (rows) by one step along a 0 bit"""
    out = np.zeros_like(v)
    for h in range(v.shape[-1]):
        out[..., (h << 1) & mask] += v[..., h] * (1.0 - kv[..., h])
    return out


def _check_window(kernel: IndicatorKernel, n: int, T: int) -> None:
    if not kernel.order <= n <= T:
        raise DomainError(f"window [{n}, {T}] needs order={kernel.order} <= n <= T")
    if n < kernel.safe_start_index:
        raise DomainError(f"window start {n} is below safe_start_index={kernel.safe_start_index}")


def log_all_zero_probability(kernel: IndicatorKernel, n: int, T: int) -> float:
    """log P(A_n^c ... A_T^c) by the chain rule, renormalised step by step"""
    _check_window(kernel, n, T)
    table = kernel.forward_table
    indices = np.arange(n, T + 1, dtype=np.int64)
    states = table.state_rows(indices)
    complements = _complement_probs(kernel, states)
    if np.any(complements < NULL_EVENT):
        i = int(np.argmax(complements < NULL_EVENT))
        raise DegenerateWindowError(f"{kernel.label}: P(A_{int(indices[i])}) = 1 inside window [{n}, {T}]")

    if kernel.order == 1:
        q = table.kernel_rows(indices[:-1])[:, 0]
        with np.errstate(divide="ignore"):
            steps = np.log1p(-q)
        return math.log(complements[0]) + math.fsum(steps)

    mask = kernel.mask
    v = np.where(_newest_one(kernel.n_histories), 0.0, states[0])
    total = float(v.sum())
    log_p = math.log(total)
    v = v / total
    kernel_rows = table.kernel_rows(indices[:-1])
    for row in kernel_rows:
        v = _zero_step(v, row, mask)
        total = float(v.sum())
        if total == 0.0:
            return -math.inf
        log_p += math.log(total)
        v = v / total
    return log_p


def conditional_tail_probability(kernel: IndicatorKernel, n: int, T: int) -> float:
    """P(A_n^c A_{n+1}^c ... A_T^c)"""
    return math.exp(log_all_zero_probability(kernel, n, T))


def tail_union_window(kernel: IndicatorKernel, n: int, T: int) -> float:
    """P(A_n or ... or A_T) = 1 - P(no event in [n, T])"""
    return -math.expm1(log_all_zero_probability(kernel, n, T))


def brute_force_window(kernel: IndicatorKernel, n: int, T: int) -> float:
    """Union probability by summing every 0/1 path over [n, T]"""
    if T - n > BRUTE_FORCE_MAX_SPAN:
        raise BudgetError(f"window [{n}, {T}] spans more than {BRUTE_FORCE_MAX_SPAN + 1} indices")
    if not kernel.order <= n <= T:
        raise DomainError(f"window [{n}, {T}] needs order={kernel.order} <= n <= T")
    table = kernel.forward_table
    width = T - n + 1
    mask = kernel.mask
    patterns = np.arange(1 << width, dtype=np.int64)[:, None]
    histories = np.broadcast_to(np.arange(kernel.n_histories, dtype=np.int64), (1 << width, kernel.n_histories))

    first_bit = (patterns >> (width - 1)) & 1
    prob = np.where((histories & 1) == first_bit, table.state_rows(np.array([n]))[0], 0.0)
    for j, index in enumerate(range(n, T), start=1):
        bit = (patterns >> (width - 1 - j)) & 1
        kv = table.kernel_rows(np.array([index]))[0][histories]
        prob = prob * np.where(bit == 1, kv, 1.0 - kv)
        histories = ((histories << 1) | bit) & mask
    return math.fsum(prob[1:].ravel())


class CriterionKind(str, Enum):
    COND_PREV_COMPLEMENT = "cond_prev_complement"
    JOINT_COMPLEMENT_THEN = "joint_complement_then"
    JOINT_THEN_COMPLEMENT = "joint_then_complement"
    ORDER_K = "order_k"
    ORDER_K_CONDITIONAL = "order_k_conditional"
    BN_SHIFTED = "bn_shifted"


def _zero_run_then_one(kernel: IndicatorKernel, ns: np.ndarray, m: int) -> np.ndarray:
    """P(A_n^c ... A_{n+m-1}^c A_{n+m}) for n >= order; m = 0 gives P(A_n)"""
    table = kernel.forward_table
    states = table.state_rows(ns)
    newest = _newest_one(kernel.n_histories)
    if m == 0:
        return states[:, newest].sum(axis=1)
    v = np.where(newest, 0.0, states)
    for j in range(m - 1):
        v = _zero_step(v, table.kernel_rows(ns + j), kernel.mask)
    return (v * table.kernel_rows(ns + m - 1)).sum(axis=1)


def _one_then_zero(kernel: IndicatorKernel, ns: np.ndarray) -> np.ndarray:
    """P(A_n A_{n+1}^c)"""
    table = kernel.forward_table
    states = table.state_rows(ns)
    newest = _newest_one(kernel.n_histories)
    return np.where(newest, states * (1.0 - table.kernel_rows(ns)), 0.0).sum(axis=1)


def _require_positive(ns: np.ndarray, denominators: np.ndarray, what: str) -> None:
    null = denominators < NULL_EVENT
    if np.any(null):
        n = int(ns[int(np.argmax(null))])
        raise UndefinedTermError(f"{what} is null at n={n}", index=n)


def criterion_terms(kernel: IndicatorKernel, kind: CriterionKind, shift: int = 0) -> TermSequence:
    """
    Summands of the lemma criteria as an exactly evaluated TermSequence.

    Joint kinds start at n = order (the finitely many earlier terms do not
    change convergence); conditional kinds start at max(order, safe_start_index).
    ``shift`` is the m of BN_SHIFTED.
    """
    kind = CriterionKind(kind)
    k = kernel.order
    conditional_start = max(k, kernel.safe_start_index)
    label = f"{kernel.label}:{kind.value}"

    if kind is CriterionKind.COND_PREV_COMPLEMENT:
        def terms(ns):
            ns = np.asarray(ns, dtype=np.int64)
            complement = _complement_probs(kernel, kernel.forward_table.state_rows(ns))
            _require_positive(ns, complement, "P(A_n^c)")
            if k == 1:
                return kernel.forward_table.kernel_rows(ns)[:, 0]
            return _zero_run_then_one(kernel, ns, 1) / complement
        first = conditional_start
    elif kind is CriterionKind.ORDER_K_CONDITIONAL:
        def terms(ns):
            ns = np.asarray(ns, dtype=np.int64)
            _require_positive(ns, kernel.forward_table.state_rows(ns)[:, 0], "P(A_{n-k+1}^c ... A_n^c)")
            return kernel.forward_table.kernel_rows(ns)[:, 0]
        first = conditional_start
    elif kind is CriterionKind.JOINT_THEN_COMPLEMENT:
        def terms(ns):
            return _one_then_zero(kernel, np.asarray(ns, dtype=np.int64))
        first = k
    else:
        if kind is CriterionKind.JOINT_COMPLEMENT_THEN:
            run = 1
        elif kind is CriterionKind.ORDER_K:
            run = k
        else:
            if shift < 0:
                raise DomainError(f"shift must be >= 0, got {shift}")
            run = shift
            label = f"{label}({shift})"

        def terms(ns):
            return _zero_run_then_one(kernel, np.asarray(ns, dtype=np.int64), run)
        first = k

    return TermSequence.from_vectorized(terms, first_index=first, label=label)


def simulate_replications(kernel: IndicatorKernel, T: int, seeds: Sequence[int]) -> np.ndarray:
    """
    Indicator trajectories I_1..I_T, one row per seed.

    Each replication consumes its own stream: one uniform for the initial
    history, then one uniform per step with I_{n+1} = [u < kernel(n, h)].
    Row r equals simulate_chain(kernel, T, seeds[r]).
    """
    k = kernel.order
    if T < k:
        raise DomainError(f"horizon T={T} is below the chain order {k}")
    rngs = [make_rng(s) for s in seeds]
    reps = len(rngs)
    out = np.zeros((reps, T), dtype=np.int8)
    if reps == 0:
        return out

    cumulative = np.cumsum(kernel.initial_dist)
    first = np.array([rng.random() for rng in rngs])
    histories = np.minimum(np.searchsorted(cumulative, first, side="right"), kernel.mask).astype(np.int64)
    for j in range(k):
        out[:, j] = (histories >> (k - 1 - j)) & 1

    table = kernel.forward_table
    mask = kernel.mask
    for start in range(k, T, SIMULATION_CHUNK):
        stop = min(start + SIMULATION_CHUNK, T)
        uniforms = np.stack([rng.random(stop - start) for rng in rngs])
        kernel_rows = table.kernel_rows(np.arange(start, stop, dtype=np.int64))
        for j in range(stop - start):
            bits = (uniforms[:, j] < kernel_rows[j][histories]).astype(np.int64)
            out[:, start + j] = bits
            histories = ((histories << 1) | bits) & mask
    return out


def simulate_chain(kernel: IndicatorKernel, T: int, seed: int) -> np.ndarray:
    """Trajectory I_1..I_T; deterministic given seed"""
    return simulate_replications(kernel, T, [seed])[0]


def _initial_block_sum(kernel: IndicatorKernel, bits: np.ndarray) -> float:
    """sum over j <= k of P(I_j = 1 | realized I_1..I_{j-1}) under initial_dist"""
    k = kernel.order
    histories = np.arange(kernel.n_histories)
    total = 0.0
    alive = np.ones(kernel.n_histories, dtype=bool)
    for j in range(k):
        shift = k - 1 - j
        prefix_mass = math.fsum(kernel.initial_dist[alive])
        if prefix_mass <= 0.0:
            raise DomainError("trajectory starts with a history that has probability zero")
        ones = alive & (((histories >> shift) & 1) == 1)
        total += math.fsum(kernel.initial_dist[ones]) / prefix_mass
        alive &= ((histories >> shift) & 1) == int(bits[j])
    return total


def levy_conditional_sum(kernel: IndicatorKernel, trajectory: Sequence[int]) -> float:
    """Sum of P(A_n = 1 | realized past) along a trajectory, n = 1..T"""
    bits = np.asarray(trajectory, dtype=np.int64)
    k = kernel.order
    if bits.ndim != 1 or len(bits) < k:
        raise DomainError(f"trajectory of length {len(bits)} is shorter than the chain order {k}")
    if np.any((bits != 0) & (bits != 1)):
        raise DomainError("trajectory must hold 0/1 indicators")

    total = _initial_block_sum(kernel, bits)
    T = len(bits)
    if T == k:
        return total
    # history at index n (1-based) is bits[n-k .. n-1]
    histories = np.zeros(T - k, dtype=np.int64)
    for j in range(k):
        histories |= bits[k - 1 - j:T - 1 - j] << j
    kv = kernel.forward_table.kernel_rows(np.arange(k, T, dtype=np.int64))
    return total + math.fsum(kv[np.arange(T - k), histories])


class IOVerdict(str, Enum):
    IO_ZERO = "IO_Zero"
    IO_ONE = "IO_One"
    NOT_APPLICABLE = "NotApplicable"
    INDETERMINATE = "Indeterminate"


def dichotomy_report(kernel: IndicatorKernel, kind: CriterionKind,
                     budget: Budget = Budget(), shift: int = 0) -> Tuple[IOVerdict, Optional[SeriesVerdict]]:
    """Verdict plus the series verdict it rests on (None when the lemmas do not apply)"""
    start = max(kernel.order, kernel.safe_start_index)
    schedule = geometric_schedule(start, budget.n_max, budget.growth)
    marginals = marginal_probs(kernel, schedule)
    if terms_do_not_vanish(marginals[-budget.tail_points:], budget.vanish_floor):
        logger.info(f"{kernel.label}: P(A_n) does not tend to 0, so P(A_n i.o.) > 0 and the criteria do not apply")
        return IOVerdict.NOT_APPLICABLE, None

    series = classify(criterion_terms(kernel, kind, shift=shift), budget)
    mapping = {
        SeriesClass.CONVERGENT: IOVerdict.IO_ZERO,
        SeriesClass.DIVERGENT: IOVerdict.IO_ONE,
        SeriesClass.INDETERMINATE: IOVerdict.INDETERMINATE,
    }
    return mapping[series.verdict], series


def dichotomy_verdict(kernel: IndicatorKernel, kind: CriterionKind,
                      budget: Budget = Budget(), shift: int = 0) -> IOVerdict:
    return dichotomy_report(kernel, kind, budget, shift)[0]


def occurrence_frequencies(trajectories: np.ndarray, ns: Sequence[int]) -> List[float]:
    """Empirical P(A_n) across replication rows at 1-based indices ns"""
    cols = np.asarray(ns, dtype=np.int64) - 1
    return [float(x) for x in trajectories[:, cols].mean(axis=0)]
