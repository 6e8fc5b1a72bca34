#!/usr/bin/env python3
"""
Scenario builders
Turn validated config blocks into kernels, scheme scenarios, bivariate models and term sequences
"""

import logging
import math

import numpy as np
from scipy.special import zeta

from borel_cantelli.copula_concomitants import BivariateModel, make_bivariate
from borel_cantelli.falpha_scheme import MaximaScenario, example41_scenario, make_scenario
from borel_cantelli.markov_indicators import IndicatorKernel
from borel_cantelli.series_engine import DeclaredClass, SeriesClass, TermSequence
from harness.config import (
    ConcomitantParams,
    FalphaMaximaParams,
    FalphaNewcomerParams,
    MarkovChainParams,
    SeriesParams,
)

logger = logging.getLogger(__name__)


def build_markov_kernel(params: MarkovChainParams) -> IndicatorKernel:
    if params.kernel_table is not None:
        kernel = IndicatorKernel.from_table(params.kernel_table, params.initial_dist,
                                            safe_start_index=params.safe_start_index, label="markov_chain")
    else:
        kernel = IndicatorKernel.order_one(params.p.evaluate, params.q.evaluate, params.p1, vectorized=True,
                                           safe_start_index=params.safe_start_index, label="markov_chain")
    logger.debug(f"Built order-{kernel.order} kernel for the markov_chain scenario")
    return kernel


def build_maxima_scenario(params: FalphaMaximaParams) -> MaximaScenario:
    if params.example41_gamma is not None:
        return example41_scenario(params.example41_gamma)
    return make_scenario(params.base.as_spec(), params.exponents.as_spec(), params.thresholds.as_spec(),
                         label="falpha_maxima")


def build_newcomer_scenario(params: FalphaNewcomerParams) -> MaximaScenario:
    # thresholds play no part in the newcomer events
    return make_scenario(params.base.as_spec(), params.exponents.as_spec(), label="falpha_newcomer")


def newcomer_event(params: FalphaNewcomerParams) -> str:
    """B_n (X_n not maximal) goes with the S_n/S_(n+1) series, C_n (X_n maximal) with alpha_n/S_n"""
    return "B" if params.proposition == "prop51" else "C"


def build_bivariate(params: ConcomitantParams) -> BivariateModel:
    return make_bivariate(params.copula.as_spec(), params.marginal_x.as_spec(), params.marginal_y.as_spec())


def build_series(params: SeriesParams) -> TermSequence:
    """Built-in families, each with its analytic class declared"""
    if params.family == "p_series":
        p = params.p
        verdict = SeriesClass.CONVERGENT if p > 1 else SeriesClass.DIVERGENT
        note = f"p-series with p={p:g}" + (f", sum zeta(p)={float(zeta(p)):.6g}" if p > 1 else "")
        return TermSequence.from_vectorized(
            lambda ns: np.asarray(ns, dtype=float) ** -p, first_index=1,
            log_fn=lambda ns: -p * np.log(np.asarray(ns, dtype=float)),
            label=f"p_series(p={p:g})", exact_class=DeclaredClass(verdict, note))

    if params.family == "geometric":
        log_ratio = math.log(params.ratio)
        return TermSequence.from_vectorized(
            lambda ns: np.exp(log_ratio * np.asarray(ns, dtype=float)), first_index=1,
            log_fn=lambda ns: log_ratio * np.asarray(ns, dtype=float),
            label=f"geometric(r={params.ratio:g})",
            exact_class=DeclaredClass(SeriesClass.CONVERGENT, "ratio below 1"))

    if params.family == "log_power":
        q = params.q

        def log_terms(ns):
            n = np.asarray(ns, dtype=float)
            return -np.log(n) - q * np.log(np.log(n))
        verdict = SeriesClass.CONVERGENT if q > 1 else SeriesClass.DIVERGENT
        return TermSequence.from_vectorized(
            lambda ns: np.exp(log_terms(ns)), first_index=2, log_fn=log_terms,
            label=f"log_power(q={q:g})",
            exact_class=DeclaredClass(verdict, f"integral test on 1/(n (log n)^q), q={q:g}"))

    gamma = params.gamma

    def shape_log_terms(ns):
        n = np.asarray(ns, dtype=float)
        log_n = np.log(n)
        return np.log(np.log(log_n)) - np.log(n) - gamma * np.log(log_n)
    verdict = SeriesClass.CONVERGENT if gamma > 1 else SeriesClass.DIVERGENT
    return TermSequence.from_vectorized(
        lambda ns: np.exp(shape_log_terms(ns)), first_index=16, log_fn=shape_log_terms,
        label=f"example41_terms(gamma={gamma:g})",
        exact_class=DeclaredClass(verdict, f"log log n / (n (log n)^gamma), gamma={gamma:g}"))
