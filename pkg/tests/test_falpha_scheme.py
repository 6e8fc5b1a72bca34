#!/usr/bin/env python3
"""
Tests for the F^alpha scheme: cumulative exponents, criterion series, event kernels, simulation
"""

import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from borel_cantelli.distributions import Exponential, Uniform
from borel_cantelli.errors import DomainError, PreconditionError
from borel_cantelli.falpha_scheme import (
    ExponentSequence,
    MaximaScenario,
    MaximaSeries,
    cumulative,
    example41_scenario,
    exact_event_probs,
    log_cumulative,
    make_exponents,
    make_scenario,
    markov_property_diagnostic,
    maxima_event_kernel,
    newcomer_event_kernel,
    prob_max_leq,
    series_terms,
    simulate_scheme,
    simulate_scheme_batch,
)
from borel_cantelli.markov_indicators import CriterionKind, criterion_terms, marginal_probs, tail_union_window
from borel_cantelli.seeding import derive_seed
from borel_cantelli.series_engine import SeriesClass, classify, partial_sum


@pytest.fixture
def iid_uniform():
    """alpha = 1, uniform base, constant threshold 0.5"""
    return make_scenario("uniform", {"family": "constant"}, label="iid")


def scenario_with(exponents: ExponentSequence) -> MaximaScenario:
    return MaximaScenario(base=Uniform(), exponents=exponents, x_at=lambda ns: np.full(np.shape(ns), 0.5),
                          label=exponents.family)


class TestExponents:

    def test_alpha_one_is_one(self):
        for seq in (ExponentSequence.example41(3.0), ExponentSequence.power(-2.0), ExponentSequence.superexp()):
            assert seq.alpha_at(1) == 1.0

    def test_table_must_start_at_one(self):
        with pytest.raises(DomainError):
            ExponentSequence.table([2.0, 1.0])

    def test_table_is_bounded(self):
        seq = ExponentSequence.table([1.0, 2.0, 3.0])
        with pytest.raises(DomainError):
            seq.alphas([4])

    def test_make_exponents(self):
        assert make_exponents({"family": "power", "c": -2}).alpha_at(2) == pytest.approx(0.25)
        with pytest.raises(DomainError):
            make_exponents({"family": "geometric"})


class TestCumulative:

    def test_example41_sum(self):
        # S_10 = 1 + sum_{n=2}^{10} (1 + 1/n) = 9 + H_10
        harmonic = math.fsum(1.0 / n for n in range(1, 11))
        assert cumulative(example41_scenario(1.0), 10) == pytest.approx(9.0 + harmonic, abs=1e-12)

    def test_superexp_log_form(self):
        scenario = scenario_with(ExponentSequence.superexp())
        assert cumulative(scenario, 1000) == math.inf
        assert log_cumulative(scenario, 1000) == pytest.approx(2000.0 * math.log(1000.0), abs=1e-6)

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 3.0])
    def test_example41_sum_tracks_n_plus_log_n(self, gamma):
        scenario = example41_scenario(gamma)
        gaps = [cumulative(scenario, n) / gamma - (n + math.log(n)) for n in (10, 10 ** 3, 10 ** 5, 10 ** 6)]
        assert max(abs(g) for g in gaps) <= 2.5
        # S_n / gamma = 1 / gamma + n + H_n - 2
        assert gaps[-1] == pytest.approx(1.0 / gamma + np.euler_gamma - 2.0, abs=1e-3)

    def test_iid_maximum(self, iid_uniform):
        assert prob_max_leq(iid_uniform, 3) == pytest.approx(0.125, abs=1e-15)

    def test_index_below_one(self, iid_uniform):
        with pytest.raises(DomainError):
            prob_max_leq(iid_uniform, 0)


class TestNewcomerEvents:

    def test_iid_probabilities(self, iid_uniform):
        p_b2, p_b2_not_b3 = exact_event_probs(iid_uniform, 2)
        assert p_b2 == pytest.approx(0.5, abs=1e-15)
        assert p_b2_not_b3 == pytest.approx(1.0 / 6.0, abs=1e-15)
        assert exact_event_probs(iid_uniform, 3)[0] == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_kernel_marginals(self, iid_uniform):
        b = newcomer_event_kernel(iid_uniform, "B")
        c = newcomer_event_kernel(iid_uniform, "C")
        ns = np.arange(2, 12)
        assert np.allclose(marginal_probs(b, ns), (ns - 1.0) / ns, atol=1e-14)
        assert np.allclose(marginal_probs(c, ns), 1.0 / ns, atol=1e-14)

    def test_needs_two_indices(self, iid_uniform):
        with pytest.raises(DomainError):
            exact_event_probs(iid_uniform, 1)

    def test_unknown_event(self, iid_uniform):
        with pytest.raises(DomainError):
            newcomer_event_kernel(iid_uniform, "D")


class TestSeries:

    @pytest.mark.parametrize("gamma, expected", [
        (0.5, SeriesClass.DIVERGENT),
        (1.0, SeriesClass.DIVERGENT),
        (2.0, SeriesClass.CONVERGENT),
        (3.0, SeriesClass.CONVERGENT),
    ])
    def test_example41_joint_series(self, gamma, expected):
        terms = series_terms(example41_scenario(gamma), MaximaSeries.PROP41)
        assert terms.exact_class is not None
        assert classify(dataclasses.replace(terms, exact_class=None)).verdict is expected
        assert classify(terms).verdict is expected

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 3.0])
    def test_example41_classic_series_diverges(self, gamma):
        terms = series_terms(example41_scenario(gamma), MaximaSeries.BC_CLASSIC)
        assert classify(dataclasses.replace(terms, exact_class=None)).verdict is SeriesClass.DIVERGENT
        sums = [partial_sum(terms, 10 ** k) for k in (3, 4, 5)]
        # terms stay above (log n)^-gamma / 2 on each decade
        assert sums[1] - sums[0] > 0.5 * 9000 * math.log(10 ** 4) ** -gamma
        assert sums[2] - sums[1] > 0.5 * 90000 * math.log(10 ** 5) ** -gamma

    @pytest.mark.parametrize("gamma", [0.5, 3.0])
    def test_kernel_terms_match_closed_form(self, gamma):
        scenario = example41_scenario(gamma)
        from_kernel = criterion_terms(maxima_event_kernel(scenario), CriterionKind.JOINT_THEN_COMPLEMENT)
        closed = series_terms(scenario, MaximaSeries.PROP41)
        for n in (10, 100, 10 ** 3, 10 ** 4):
            assert abs(from_kernel.term_at(n) - closed.term_at(n)) <= 1e-10

    @pytest.mark.parametrize("gamma", [0.5, 3.0])
    def test_example41_term_shape(self, gamma):
        n = 10 ** 5
        log_n = math.log(n)
        classic = series_terms(example41_scenario(gamma), MaximaSeries.BC_CLASSIC).term_at(n)
        assert 0.5 <= classic * log_n ** gamma <= 2.0
        joint = series_terms(example41_scenario(gamma), MaximaSeries.PROP41).term_at(n)
        assert 0.5 <= joint / (gamma * math.log(log_n) / (n * log_n ** gamma)) <= 2.0

    def test_superexp_ratio(self):
        terms = series_terms(scenario_with(ExponentSequence.superexp()), MaximaSeries.PROP51)
        assert abs(terms.term_at(100) * 100 ** 2 - math.exp(-2.0)) <= 0.003
        assert classify(terms).verdict is SeriesClass.CONVERGENT

    def test_superexp_newest_share_diverges(self):
        scenario = scenario_with(ExponentSequence.superexp())
        with pytest.raises(PreconditionError):
            series_terms(scenario, MaximaSeries.PROP52)
        terms = series_terms(scenario, MaximaSeries.PROP52, strict=False)
        assert terms.term_at(50) == pytest.approx(1.0, abs=1e-3)
        assert classify(terms).verdict is SeriesClass.DIVERGENT

    def test_power_share_converges(self):
        terms = series_terms(scenario_with(ExponentSequence.power(-2.0)), MaximaSeries.PROP52)
        assert partial_sum(terms, 10 ** 5) <= math.pi ** 2 / 6.0
        assert classify(terms).verdict is SeriesClass.CONVERGENT

    def test_bounded_exponents_fail_growth_hypothesis(self, iid_uniform):
        with pytest.raises(PreconditionError) as info:
            series_terms(iid_uniform, MaximaSeries.PROP51)
        assert info.value.condition == "alpha_n -> infinity"

    def test_non_strict_mode_continues(self, iid_uniform):
        terms = series_terms(iid_uniform, MaximaSeries.PROP51, strict=False)
        assert terms.term_at(9) == pytest.approx(0.9, abs=1e-15)
        assert classify(terms).verdict is SeriesClass.DIVERGENT


class TestMaximaKernel:

    def test_marginals_match_closed_form(self):
        scenario = example41_scenario(2.0)
        kernel = maxima_event_kernel(scenario)
        for n in (6, 7, 50, 2000):
            assert marginal_probs(kernel, [n])[0] == pytest.approx(prob_max_leq(scenario, n), rel=1e-9)

    def test_events_start_at_first_index(self):
        scenario = example41_scenario(1.0)
        assert prob_max_leq(scenario, 5) == 0.0
        assert prob_max_leq(scenario, 6) > 0.0

    def test_window_separation(self):
        small = maxima_event_kernel(example41_scenario(3.0))
        tails = [tail_union_window(small, 10 ** k, 10 ** 6) for k in (3, 4, 5)]
        assert tails[0] < 0.1
        assert tails[0] > tails[1] > tails[2]
        large = maxima_event_kernel(example41_scenario(0.5))
        assert tail_union_window(large, 10 ** 3, 10 ** 6) > 0.9

    def test_decreasing_thresholds_rejected(self):
        scenario = make_scenario("uniform", {"family": "constant"}, {"family": "table", "values": [0.9, 0.5]})
        with pytest.raises(PreconditionError):
            maxima_event_kernel(scenario)

    def test_constant_threshold_never_returns(self, iid_uniform):
        diagnostic = markov_property_diagnostic(iid_uniform, 4, reps=2000, seed=11)
        assert diagnostic.kernel_value == 0.0
        assert diagnostic.consistent


class TestSimulation:

    def test_batch_matches_stream(self):
        scenario = example41_scenario(1.0)
        seeds = [derive_seed(5, i) for i in range(4)]
        batch = simulate_scheme_batch(scenario, 300, seeds)
        for r, seed in enumerate(seeds):
            steps = list(simulate_scheme(scenario, 300, seed))
            assert [s.a for s in steps] == batch.a[r].tolist()
            assert [s.b for s in steps] == batch.b[r].tolist()

    def test_running_maximum(self, iid_uniform):
        steps = list(simulate_scheme(iid_uniform, 200, seed=8))
        maxima = [s.m for s in steps]
        assert maxima == sorted(maxima)
        assert all(s.b + s.c == 1 for s in steps)
        assert steps[0].c == 1

    def test_frequencies(self, iid_uniform):
        reps = 10 ** 4
        batch = simulate_scheme_batch(iid_uniform, 5, [derive_seed(99, i) for i in range(reps)])
        checks = [(batch.b[:, 2].mean(), 2.0 / 3.0), (batch.a[:, 2].mean(), 0.125), (batch.c[:, 4].mean(), 0.2)]
        for freq, p in checks:
            assert abs(freq - p) <= 4.0 * math.sqrt(p * (1.0 - p) / reps)
        assert batch.ties == 0

    def test_invalid_horizon(self, iid_uniform):
        with pytest.raises(DomainError):
            simulate_scheme_batch(iid_uniform, 0, [1])

    def test_values_follow_powered_law(self):
        scenario = MaximaScenario(base=Exponential(), exponents=ExponentSequence.power(1.0),
                                  x_at=lambda ns: np.full(np.shape(ns), 1.0), label="power(1)")
        draws = [list(simulate_scheme(scenario, 3, derive_seed(12, i)))[2].x for i in range(2000)]
        result = stats.kstest(draws, lambda x: Exponential().cdf(x) ** 3.0)
        assert result.pvalue > 1e-3

    def test_superexp_newcomer_is_always_maximal(self):
        scenario = scenario_with(ExponentSequence.superexp())
        batch = simulate_scheme_batch(scenario, 200, [derive_seed(41, i) for i in range(200)])
        always_new = np.all(batch.b[:, 19:] == 0, axis=1)
        assert always_new.mean() >= 0.9

    def test_power_newcomer_is_rarely_maximal(self):
        scenario = scenario_with(ExponentSequence.power(-2.0))
        batch = simulate_scheme_batch(scenario, 200, [derive_seed(43, i) for i in range(200)])
        never_new = np.all(batch.c[:, 19:] == 0, axis=1)
        assert never_new.mean() >= 0.9

    @pytest.mark.parametrize("exponents", [
        ExponentSequence.example41(2.0),
        ExponentSequence.power(-2.0),
        ExponentSequence.superexp(),
    ], ids=["example41", "power", "superexp"])
    @pytest.mark.parametrize("n", [2, 4])
    def test_newcomer_frequencies(self, exponents, n):
        scenario = scenario_with(exponents)
        reps = 10 ** 4
        batch = simulate_scheme_batch(scenario, n + 1, [derive_seed(61, i) for i in range(reps)])
        p_b, p_b_then_c = exact_event_probs(scenario, n)
        checks = [(batch.b[:, n - 1].mean(), p_b), ((batch.b[:, n - 1] * batch.c[:, n]).mean(), p_b_then_c)]
        for freq, p in checks:
            assert abs(freq - p) <= 4.0 * math.sqrt(p * (1.0 - p) / reps)

    def test_maxima_kernel_conditional_frequencies(self):
        scenario = example41_scenario(1.0)
        rows = maxima_event_kernel(scenario).forward_table.kernel_rows(np.array([5, 50, 500]))
        batch = simulate_scheme_batch(scenario, 501, [derive_seed(77, i) for i in range(20_000)])
        checked = 0
        for n, row in zip((5, 50, 500), rows):
            for history in (0, 1):
                given = batch.a[:, n - 1] == history
                count = int(given.sum())
                if count < 1000:
                    continue
                # P(A_{n+1} | A_n = history)
                freq = float(batch.a[given, n].mean())
                p = float(row[history])
                assert abs(freq - p) <= 4.0 * math.sqrt(p * (1.0 - p) / count) + 1e-12
                checked += 1
        assert checked >= 5
