#!/usr/bin/env python3
"""
Tests for Markov sequences of events: marginals, windows, criteria, simulation
"""

import itertools
import math

import numpy as np
import pytest

from borel_cantelli.errors import (
    BudgetError,
    DegenerateWindowError,
    DomainError,
    UndefinedTermError,
)
from borel_cantelli.markov_indicators import (
    CriterionKind,
    IndicatorKernel,
    IOVerdict,
    brute_force_window,
    conditional_tail_probability,
    criterion_terms,
    dichotomy_report,
    dichotomy_verdict,
    forward_marginals,
    levy_conditional_sum,
    marginal_probs,
    occurrence_frequencies,
    simulate_chain,
    simulate_replications,
    tail_union_window,
)
from borel_cantelli.seeding import derive_seed
from borel_cantelli.series_engine import SeriesClass


def random_table(seed: int, order: int, rows: int = 40):
    rng = np.random.default_rng(seed)
    table = rng.uniform(0.05, 0.95, size=(rows, 1 << order))
    initial = rng.dirichlet(np.ones(1 << order))
    return table, initial / initial.sum()


def random_table_kernel(seed: int, order: int, rows: int = 40) -> IndicatorKernel:
    table, initial = random_table(seed, order, rows)
    return IndicatorKernel.from_table(table, initial, label=f"random(k={order}, seed={seed})")


def path_probability(table: np.ndarray, initial: np.ndarray, order: int, last: int, event) -> float:
    """Sum of P(I_1..I_last) over the 0/1 paths with event(path) true; path[i] is I_{i+1}"""
    mask = (1 << order) - 1
    total = []
    for path in itertools.product((0, 1), repeat=last):
        if not event(path):
            continue
        history = 0
        for bit in path[:order]:
            history = (history << 1) | bit
        prob = initial[history]
        for index in range(order, last):
            kv = table[index - order][history]
            prob *= kv if path[index] else 1.0 - kv
            history = ((history << 1) | path[index]) & mask
        total.append(prob)
    return math.fsum(total)


def random_order_one_kernel(seed: int) -> IndicatorKernel:
    rng = np.random.default_rng(seed)
    p_base, q_base, p1 = rng.uniform(0.05, 0.95, size=3)

    def p(n):
        return p_base * (1.0 + 0.5 * math.sin(n)) / 1.5

    def q(n):
        return q_base / (1.0 + 0.1 * n)

    return IndicatorKernel.order_one(p, q, p1, label=f"random(k=1, seed={seed})")


class TestForwardMarginals:

    def test_fair_coin(self, fair_coin):
        assert np.allclose(marginal_probs(fair_coin, [1, 2, 10, 1000]), 0.5, atol=1e-15)

    def test_one_step_recursion(self):
        kernel = IndicatorKernel.order_one(lambda n: 0.5, lambda n: 1.0 / (n + 1) ** 2, 0.0)
        assert forward_marginals(kernel, 2).marginal == pytest.approx(0.25, abs=1e-15)

    def test_state_law_sums_to_one(self):
        kernel = random_table_kernel(3, order=2)
        for n in (2, 10, 40):
            state = forward_marginals(kernel, n).state_probs
            assert state.sum() == pytest.approx(1.0, abs=1e-12)

    def test_below_order(self):
        with pytest.raises(DomainError):
            forward_marginals(random_table_kernel(1, order=2), 1)


class TestWindows:

    def test_iid_union(self, fair_coin):
        assert tail_union_window(fair_coin, 1, 3) == pytest.approx(0.875, abs=1e-12)

    def test_sticky_chain_union(self, sticky_chain):
        assert tail_union_window(sticky_chain, 2, 4) == pytest.approx(0.3115, abs=1e-12)
        assert brute_force_window(sticky_chain, 2, 4) == pytest.approx(0.3115, abs=1e-12)

    def test_chain_rule_matches_path_enumeration(self):
        kernels = [random_order_one_kernel(s) for s in range(10)]
        kernels += [random_table_kernel(100 + s, order=2) for s in range(10)]
        for kernel in kernels:
            for n, T in [(kernel.order, kernel.order), (2, 9), (3, 15), (5, 17)]:
                exact = tail_union_window(kernel, n, T)
                assert abs(exact - brute_force_window(kernel, n, T)) <= 1e-12, kernel.label

    def test_telescoping(self):
        kernel = random_order_one_kernel(4)
        joint = criterion_terms(kernel, CriterionKind.JOINT_COMPLEMENT_THEN)
        for n in range(1, 30):
            complement = 1.0 - forward_marginals(kernel, n).marginal
            both_zero = conditional_tail_probability(kernel, n, n + 1)
            assert joint.term_at(n) + both_zero == pytest.approx(complement, abs=1e-12)

    def test_tail_monotonicity(self, sticky_chain):
        T = 60
        by_start = [tail_union_window(sticky_chain, n, T) for n in range(1, T + 1)]
        assert all(a >= b - 1e-15 for a, b in zip(by_start, by_start[1:]))
        by_end = [tail_union_window(sticky_chain, 5, T) for T in range(5, 60)]
        assert all(a <= b + 1e-15 for a, b in zip(by_end, by_end[1:]))

    def test_convergent_window_is_small(self, convergent_chain):
        assert tail_union_window(convergent_chain, 1000, 10 ** 6) < 0.01

    def test_divergent_window_is_large(self, divergent_chain):
        assert tail_union_window(divergent_chain, 10 ** 4, 10 ** 6) > 0.99

    def test_certain_event_inside_window(self):
        kernel = IndicatorKernel.order_one(lambda n: 1.0, lambda n: 1.0, 1.0)
        with pytest.raises(DegenerateWindowError):
            tail_union_window(kernel, 2, 5)

    def test_brute_force_span_limit(self, fair_coin):
        with pytest.raises(BudgetError):
            brute_force_window(fair_coin, 1, 30)


class TestCriterionTerms:

    def test_iid_joint(self, fair_coin):
        terms = criterion_terms(fair_coin, CriterionKind.JOINT_COMPLEMENT_THEN)
        assert np.allclose(terms.values(np.arange(1, 20)), 0.25, atol=1e-15)

    def test_conditional_reads_kernel(self):
        kernel = IndicatorKernel.order_one(lambda n: 0.5, lambda n: 1.0 / (n + 1) ** 2, 0.0)
        terms = criterion_terms(kernel, CriterionKind.COND_PREV_COMPLEMENT)
        ns = np.arange(1, 50)
        assert np.allclose(terms.values(ns), 1.0 / (ns + 1.0) ** 2, rtol=1e-14)

    def test_shifted_zero_is_classical(self, sticky_chain):
        classical = criterion_terms(sticky_chain, CriterionKind.BN_SHIFTED, shift=0)
        ns = np.arange(1, 20)
        assert np.allclose(classical.values(ns), marginal_probs(sticky_chain, ns), atol=1e-15)

    def test_order_two_kinds(self):
        kernel = random_table_kernel(9, order=2)
        ns = np.arange(2, 30)
        conditional = criterion_terms(kernel, CriterionKind.ORDER_K_CONDITIONAL).values(ns)
        assert np.allclose(conditional, kernel.forward_table.kernel_rows(ns)[:, 0])
        joint = criterion_terms(kernel, CriterionKind.ORDER_K).values(ns)
        # P(A_n^c A_{n+1}^c A_{n+2}) <= P(A_{n+2})
        assert np.all(joint <= marginal_probs(kernel, ns + 2) + 1e-15)
        assert np.all(joint <= np.array([conditional_tail_probability(kernel, n, n + 1) for n in ns]) + 1e-15)

    @pytest.mark.parametrize("seed", [9, 23])
    def test_order_two_joint_matches_paths(self, seed):
        table, initial = random_table(seed, order=2)
        kernel = IndicatorKernel.from_table(table, initial)
        terms = criterion_terms(kernel, CriterionKind.ORDER_K)
        for n in range(2, 8):
            # P(A_n^c A_{n+1}^c A_{n+2})
            exact = path_probability(table, initial, 2, n + 2,
                                     lambda path: path[n - 1] == 0 and path[n] == 0 and path[n + 1] == 1)
            assert abs(terms.term_at(n) - exact) <= 1e-12

    def test_order_two_first_term(self):
        table, initial = random_table(31, order=2)
        kernel = IndicatorKernel.from_table(table, initial)
        # histories (I_1, I_2) = (0, 0) and (1, 0) both step to 00 before A_4
        exact = (initial[0] * (1.0 - table[0][0]) + initial[2] * (1.0 - table[0][2])) * table[1][0]
        assert abs(criterion_terms(kernel, CriterionKind.ORDER_K).term_at(2) - exact) <= 1e-12

    def test_undefined_conditional_term(self):
        kernel = IndicatorKernel.order_one(lambda n: 1.0, lambda n: 1.0, 1.0)
        with pytest.raises(UndefinedTermError):
            criterion_terms(kernel, CriterionKind.COND_PREV_COMPLEMENT).values(np.array([3]))

    def test_negative_shift(self, fair_coin):
        with pytest.raises(DomainError):
            criterion_terms(fair_coin, CriterionKind.BN_SHIFTED, shift=-1)


class TestDichotomy:

    def test_convergent_chain(self, convergent_chain):
        verdict, series = dichotomy_report(convergent_chain, CriterionKind.COND_PREV_COMPLEMENT)
        assert verdict is IOVerdict.IO_ZERO
        assert series.verdict is SeriesClass.CONVERGENT

    def test_divergent_chain(self, divergent_chain):
        assert dichotomy_verdict(divergent_chain, CriterionKind.COND_PREV_COMPLEMENT) is IOVerdict.IO_ONE

    def test_non_vanishing_marginals(self, fair_coin):
        verdict, series = dichotomy_report(fair_coin, CriterionKind.COND_PREV_COMPLEMENT)
        assert verdict is IOVerdict.NOT_APPLICABLE
        assert series is None


class TestSimulation:

    def test_ones_fraction(self, fair_coin):
        T = 10 ** 5
        path = simulate_chain(fair_coin, T, seed=12345)
        assert abs(path.mean() - 0.5) <= 4.0 * math.sqrt(0.25 / T)

    def test_deterministic_per_seed(self, sticky_chain):
        assert np.array_equal(simulate_chain(sticky_chain, 500, 9), simulate_chain(sticky_chain, 500, 9))

    def test_batch_rows_match_single_streams(self):
        kernel = random_table_kernel(5, order=2, rows=200)
        seeds = [derive_seed(77, i) for i in range(6)]
        batch = simulate_replications(kernel, 150, seeds)
        for row, seed in zip(batch, seeds):
            assert np.array_equal(row, simulate_chain(kernel, 150, seed))

    def test_frequencies_match_marginals(self, sticky_chain):
        reps = 10 ** 4
        seeds = [derive_seed(2024, i) for i in range(reps)]
        paths = simulate_replications(sticky_chain, 20, seeds)
        for n, freq in zip((1, 5, 20), occurrence_frequencies(paths, [1, 5, 20])):
            m = forward_marginals(sticky_chain, n).marginal
            assert abs(freq - m) <= 4.0 * math.sqrt(m * (1.0 - m) / reps)


class TestLevyConditionalSum:

    def test_constant_conditionals(self, fair_coin):
        path = simulate_chain(fair_coin, 101, seed=3)
        assert levy_conditional_sum(fair_coin, path) == pytest.approx(50.5, abs=1e-12)

    def test_bounded_on_convergent_chain(self, convergent_chain):
        sums = [levy_conditional_sum(convergent_chain, row)
                for row in simulate_replications(convergent_chain, 10 ** 4, [derive_seed(1, i) for i in range(20)])]
        assert max(sums) < 0.65

    def test_grows_on_divergent_chain(self, divergent_chain):
        sums = [levy_conditional_sum(divergent_chain, row)
                for row in simulate_replications(divergent_chain, 10 ** 4, [derive_seed(1, i) for i in range(20)])]
        assert min(sums) > 5.0

    def test_rejects_non_indicator_path(self, fair_coin):
        with pytest.raises(DomainError):
            levy_conditional_sum(fair_coin, [0, 2, 1])


def test_invalid_initial_distribution():
    with pytest.raises(DomainError):
        IndicatorKernel(order=1, kernel=lambda n, h: 0.5, initial_dist=np.array([0.7, 0.7]))


def test_kernel_value_out_of_range():
    kernel = IndicatorKernel.order_one(lambda n: 1.5, lambda n: 0.5, 0.5)
    with pytest.raises(DomainError):
        marginal_probs(kernel, [3])
