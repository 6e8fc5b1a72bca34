#!/usr/bin/env python3
"""
Replication runner
Exact-value tables plus seeded Monte Carlo replications for every scenario kind
"""

import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from borel_cantelli.copula_concomitants import (
    concomitant_batch,
    criterion_term,
    prob_concomitant_leq,
    theorem31_verdict,
)
from borel_cantelli.errors import DegenerateWindowError, DomainError
from borel_cantelli.falpha_scheme import (
    MaximaSeries,
    exact_event_probs,
    maxima_event_kernel,
    newcomer_event_kernel,
    prob_max_leq,
    series_terms,
    simulate_scheme_batch,
)
from borel_cantelli.markov_indicators import (
    CriterionKind,
    IndicatorKernel,
    dichotomy_report,
    levy_conditional_sum,
    marginal_probs,
    simulate_replications,
    tail_union_window,
)
from borel_cantelli.seeding import derive_seed
from borel_cantelli.series_engine import Budget, classify, partial_sum
from harness import scenarios
from harness.config import ExperimentConfig
from harness.occurrence import OccurrenceStats

logger = logging.getLogger(__name__)

BLOCK_SIZE = 50


@dataclass
class ResultRow:
    scenario: str
    quantity: str
    n_or_window: str = ""
    exact_value: Optional[float] = None
    mc_estimate: Optional[float] = None
    mc_stderr: Optional[float] = None
    verdict: Optional[str] = None


@dataclass
class BlockResult:
    """Simulation output of one block of consecutive replications"""
    occurrence: OccurrenceStats
    samples: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def concat(cls, parts: Sequence["BlockResult"]) -> "BlockResult":
        keys = parts[0].samples.keys()
        return cls(occurrence=OccurrenceStats.concat([p.occurrence for p in parts]),
                   samples={k: np.concatenate([p.samples[k] for p in parts]) for k in keys})


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: List[ResultRow]
    occurrence: Optional[OccurrenceStats] = None
    details: Dict[str, Any] = field(default_factory=dict)


def replication_seeds(master_seed: int, count: int) -> List[int]:
    return [derive_seed(master_seed, i) for i in range(count)]


def replication_blocks(count: int, size: int = BLOCK_SIZE) -> List[Tuple[int, int]]:
    """Fixed partition of replication indices; independent of the worker count"""
    return [(start, min(start + size, count)) for start in range(0, count, size)]


def binomial_stderr(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def mean_stderr(values: np.ndarray) -> Optional[float]:
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def window_label(start: int, end: int) -> str:
    return f"{start}-{end}"


def _frequency_row(scenario: str, quantity: str, where: str, exact: Optional[float], hits: np.ndarray) -> ResultRow:
    p = float(np.mean(hits))
    return ResultRow(scenario, quantity, where, exact, p, binomial_stderr(p, len(hits)))


def _safe_window(kernel: IndicatorKernel, start: int, end: int) -> Optional[float]:
    if start < max(kernel.order, kernel.safe_start_index):
        return None
    try:
        return tail_union_window(kernel, start, end)
    except DegenerateWindowError:
        return 1.0


class ScenarioRun:
    """Exact table first, then per-block simulation, then rows that pair the two"""
    name = "scenario"
    simulates = True

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.params = config.params()
        self.details: Dict[str, Any] = {}

    def exact_rows(self) -> List[ResultRow]:
        return []

    def simulate_block(self, seeds: Sequence[int]) -> BlockResult:
        raise NotImplementedError

    def summary_rows(self, merged: BlockResult) -> List[ResultRow]:
        return []

    def occurrence_rows(self, occ: OccurrenceStats, exact_windows: Dict[Tuple[int, int], Optional[float]]) -> List[ResultRow]:
        rows = [ResultRow(self.name, f"mean_count({occ.label})", window_label(1, occ.horizon), None,
                          occ.mean_total, mean_stderr(occ.totals.astype(float)))]
        for j, (start, end) in enumerate(occ.windows):
            hits = occ.window_counts[:, j] > 0
            rows.append(_frequency_row(self.name, f"P(union {occ.label})", window_label(start, end),
                                       exact_windows.get((start, end)), hits))
        for q, value in occ.last_index_quantiles().items():
            rows.append(ResultRow(self.name, f"last_occurrence_q{q:g}({occ.label})", window_label(1, occ.horizon),
                                  mc_estimate=value))
        return rows


class MarkovChainRun(ScenarioRun):
    name = "markov_chain"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.kernel = scenarios.build_markov_kernel(self.params)
        self.windows: Dict[Tuple[int, int], Optional[float]] = {}
        self.marginals: Dict[int, float] = {}
        self.expected_total = math.nan

    def _initial_marginal(self, n: int) -> float:
        k = self.kernel.order
        bits = (np.arange(self.kernel.n_histories) >> (k - n)) & 1
        return math.fsum(self.kernel.initial_dist[bits == 1])

    def _marginal(self, ns: np.ndarray) -> np.ndarray:
        k = self.kernel.order
        early = [self._initial_marginal(int(n)) for n in ns if n < k]
        late = marginal_probs(self.kernel, ns[ns >= k]) if np.any(ns >= k) else np.empty(0)
        return np.concatenate([np.asarray(early, dtype=float), late])

    def exact_rows(self) -> List[ResultRow]:
        T = self.config.horizon
        kind = CriterionKind(self.params.criterion)
        budget = Budget() if self.kernel.horizon is None else Budget(n_max=self.kernel.horizon)
        verdict, series = dichotomy_report(self.kernel, kind, budget, shift=self.params.shift)
        if series is not None:
            self.details["criterion_series"] = series.to_dict()

        self.expected_total = math.fsum(self._marginal(np.arange(1, T + 1, dtype=np.int64)))
        for n in self.config.marginal_indices:
            self.marginals[n] = float(self._marginal(np.array([n], dtype=np.int64))[0])
        for start, end in self.config.window_pairs():
            self.windows[(start, end)] = _safe_window(self.kernel, start, end)
        return [ResultRow(self.name, f"io_verdict({kind.value})", verdict=verdict.value)]

    def simulate_block(self, seeds: Sequence[int]) -> BlockResult:
        trajectories = simulate_replications(self.kernel, self.config.horizon, seeds)
        levy = np.array([levy_conditional_sum(self.kernel, row) for row in trajectories])
        cols = np.asarray(self.config.marginal_indices, dtype=np.int64) - 1
        return BlockResult(
            occurrence=OccurrenceStats.from_indicators(trajectories, self.config.window_pairs(), label="A"),
            samples={"levy": levy, "marginal_hits": trajectories[:, cols]},
        )

    def summary_rows(self, merged: BlockResult) -> List[ResultRow]:
        T = self.config.horizon
        rows = []
        for j, n in enumerate(self.config.marginal_indices):
            rows.append(_frequency_row(self.name, "P(A_n)", str(n), self.marginals[n],
                                       merged.samples["marginal_hits"][:, j]))
        totals = merged.occurrence.totals.astype(float)
        rows.append(ResultRow(self.name, "expected_count(A)", window_label(1, T), self.expected_total,
                              float(totals.mean()), mean_stderr(totals)))
        levy = merged.samples["levy"]
        # E[sum of P(A_n | past)] = sum of P(A_n)
        rows.append(ResultRow(self.name, "levy_conditional_sum", window_label(1, T), self.expected_total,
                              float(levy.mean()), mean_stderr(levy)))
        return rows + self.occurrence_rows(merged.occurrence, self.windows)


class FalphaMaximaRun(ScenarioRun):
    name = "falpha_maxima"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.scenario = scenarios.build_maxima_scenario(self.params)
        self.kernel = maxima_event_kernel(self.scenario)
        self.windows: Dict[Tuple[int, int], Optional[float]] = {}

    def exact_rows(self) -> List[ResultRow]:
        T = self.config.horizon
        rows = []
        for kind in self.params.series:
            seq = series_terms(self.scenario, MaximaSeries(kind), strict=False)
            verdict = classify(seq)
            self.details[f"series_{MaximaSeries(kind).value}"] = verdict.to_dict()
            total = partial_sum(seq, T) if T >= seq.first_index else None
            rows.append(ResultRow(self.name, f"series({MaximaSeries(kind).value})", str(T), total,
                                  verdict=verdict.verdict.value))

        io_verdict, _ = dichotomy_report(self.kernel, CriterionKind.JOINT_THEN_COMPLEMENT)
        rows.append(ResultRow(self.name, f"io_verdict({CriterionKind.JOINT_THEN_COMPLEMENT.value})",
                              verdict=io_verdict.value))
        for start, end in self.config.window_pairs():
            self.windows[(start, end)] = _safe_window(self.kernel, start, end)
        return rows

    def simulate_block(self, seeds: Sequence[int]) -> BlockResult:
        batch = simulate_scheme_batch(self.scenario, self.config.horizon, seeds)
        occurrence = OccurrenceStats.from_indicators(batch.a, self.config.window_pairs(), label="M_n<=x_n")
        occurrence.ties = batch.ties
        cols = np.asarray(self.config.marginal_indices, dtype=np.int64) - 1
        return BlockResult(occurrence=occurrence, samples={"marginal_hits": batch.a[:, cols]})

    def summary_rows(self, merged: BlockResult) -> List[ResultRow]:
        rows = [_frequency_row(self.name, "P(M_n<=x_n)", str(n), prob_max_leq(self.scenario, n),
                               merged.samples["marginal_hits"][:, j])
                for j, n in enumerate(self.config.marginal_indices)]
        return rows + self.occurrence_rows(merged.occurrence, self.windows)


class FalphaNewcomerRun(ScenarioRun):
    name = "falpha_newcomer"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.scenario = scenarios.build_newcomer_scenario(self.params)
        self.event = scenarios.newcomer_event(self.params)
        self.kernel = newcomer_event_kernel(self.scenario, self.event)
        self.probes = [n for n in self.params.probe_indices if n + 1 <= config.horizon]
        skipped = sorted(set(self.params.probe_indices) - set(self.probes))
        if skipped:
            logger.info(f"Probe indices {skipped} need n + 1 <= horizon; skipped")
        self.windows: Dict[Tuple[int, int], Optional[float]] = {}

    def exact_rows(self) -> List[ResultRow]:
        T = self.config.horizon
        kind = MaximaSeries(self.params.proposition)
        seq = series_terms(self.scenario, kind, strict=self.params.strict)
        verdict = classify(seq)
        self.details[f"series_{kind.value}"] = verdict.to_dict()
        rows = [ResultRow(self.name, f"series({kind.value})", str(T), partial_sum(seq, T),
                          verdict=verdict.verdict.value)]
        io_verdict, _ = dichotomy_report(self.kernel, CriterionKind.COND_PREV_COMPLEMENT)
        rows.append(ResultRow(self.name, f"io_verdict({self.event}_n)", verdict=io_verdict.value))
        for start, end in self.config.window_pairs():
            self.windows[(start, end)] = _safe_window(self.kernel, start, end)
        return rows

    def simulate_block(self, seeds: Sequence[int]) -> BlockResult:
        batch = simulate_scheme_batch(self.scenario, self.config.horizon, seeds)
        events = batch.b if self.event == "B" else batch.c
        occurrence = OccurrenceStats.from_indicators(events, self.config.window_pairs(), label=f"{self.event}_n")
        occurrence.ties = batch.ties
        probes = np.asarray(self.probes, dtype=np.int64)
        joint = batch.b[:, probes - 1] * (1 - batch.b[:, probes])
        cols = np.asarray(self.config.marginal_indices, dtype=np.int64) - 1
        return BlockResult(occurrence=occurrence, samples={
            "b_probe": batch.b[:, probes - 1], "b_joint": joint, "marginal_hits": events[:, cols]})

    def summary_rows(self, merged: BlockResult) -> List[ResultRow]:
        rows = []
        for j, n in enumerate(self.probes):
            b, joint = exact_event_probs(self.scenario, n)
            rows.append(_frequency_row(self.name, "P(B_n)", str(n), b, merged.samples["b_probe"][:, j]))
            rows.append(_frequency_row(self.name, "P(B_n B_n+1^c)", str(n), joint, merged.samples["b_joint"][:, j]))
        for j, n in enumerate(self.config.marginal_indices):
            exact = float(self.kernel.marginal_hint(np.array([n], dtype=np.int64))[0])
            rows.append(_frequency_row(self.name, f"P({self.event}_n)", str(n), exact,
                                       merged.samples["marginal_hits"][:, j]))
        return rows + self.occurrence_rows(merged.occurrence, self.windows)


class ConcomitantRun(ScenarioRun):
    name = "concomitant"

    def __init__(self, config: ExperimentConfig):
        super().__init__(config)
        self.model = scenarios.build_bivariate(self.params)
        self.levels = [float(self.model.marginal_y.cdf(y)) for y in self.params.y_grid]
        self.exact: Dict[Tuple[str, float, int], float] = {}

    def exact_rows(self) -> List[ResultRow]:
        for y in self.params.y_grid:
            for n in self.params.n_values:
                self.exact[("leq", y, n)] = prob_concomitant_leq(self.model, n, y)
                self.exact[("crit", y, n)] = criterion_term(self.model, n, y)
        if not self.params.verdict:
            return []
        report = theorem31_verdict(self.model, self.params.y_grid)
        rows = []
        for level in report.levels:
            rows.append(ResultRow(self.name, f"beta(y={level.y:g})", exact_value=level.beta.estimate,
                                  verdict=level.verdict.value))
            self.details[f"criterion_integral(y={level.y:g})"] = {
                "value": level.integral.value, "slope": level.integral.slope,
                "residual": level.integral.residual, "finite": level.integral.finite,
                "series_verdict": level.series_verdict.value,
            }
        rows.append(ResultRow(self.name, "as_convergence", verdict=report.overall.value))
        self.details["as_convergence_note"] = report.note
        return rows

    def simulate_block(self, seeds: Sequence[int]) -> BlockResult:
        batch = concomitant_batch(self.model, self.config.horizon, seeds)
        ns = np.asarray(self.params.n_values, dtype=np.int64)
        samples = {}
        for i, v in enumerate(self.levels):
            below = batch.v_concomitant <= v
            samples[f"leq_{i}"] = below[:, ns - 1]
            samples[f"crit_{i}"] = ~below[:, ns - 1] & below[:, ns]
        occurrence = OccurrenceStats.from_indicators(batch.y_leq(self.levels[0]), self.config.window_pairs(),
                                                     label=f"Y_[n,n]<={self.params.y_grid[0]:g}")
        return BlockResult(occurrence=occurrence, samples=samples)

    def summary_rows(self, merged: BlockResult) -> List[ResultRow]:
        rows = []
        for i, y in enumerate(self.params.y_grid):
            for j, n in enumerate(self.params.n_values):
                rows.append(_frequency_row(self.name, f"P(Y_[n,n]<={y:g})", str(n), self.exact[("leq", y, n)],
                                           merged.samples[f"leq_{i}"][:, j]))
                rows.append(_frequency_row(self.name, f"P(Y_[n,n]>{y:g},Y_[n+1,n+1]<={y:g})", str(n),
                                           self.exact[("crit", y, n)], merged.samples[f"crit_{i}"][:, j]))
        return rows + self.occurrence_rows(merged.occurrence, {})


class SeriesRun(ScenarioRun):
    name = "series"
    simulates = False

    def exact_rows(self) -> List[ResultRow]:
        seq = scenarios.build_series(self.params)
        verdict = classify(seq, Budget(n_max=self.params.n_max))
        self.details["series"] = verdict.to_dict()
        rows = [ResultRow(self.name, f"partial_sum({seq.label})", str(n), total)
                for n, total in verdict.partial_sums]
        rows.append(ResultRow(self.name, f"classify({seq.label})", str(self.params.n_max),
                              verdict=verdict.verdict.value))
        return rows


RUNS = {run.name: run for run in (MarkovChainRun, FalphaMaximaRun, FalphaNewcomerRun, ConcomitantRun, SeriesRun)}


def make_run(config: ExperimentConfig) -> ScenarioRun:
    if config.scenario not in RUNS:
        raise DomainError(f"unknown scenario {config.scenario!r}")
    return RUNS[config.scenario](config)


async def run_replications_async(config: ExperimentConfig) -> RunResult:
    """Exact values, then replications in fixed blocks on a pool of config.workers threads"""
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        run = await loop.run_in_executor(pool, make_run, config)
        rows = await loop.run_in_executor(pool, run.exact_rows)
        if not run.simulates:
            return RunResult(config=config, rows=rows, details=run.details)

        seeds = replication_seeds(config.master_seed, config.replications)
        blocks = replication_blocks(config.replications)

        def simulate(index: int, start: int, stop: int) -> BlockResult:
            result = run.simulate_block(seeds[start:stop])
            logger.info(f"{run.name}: block {index + 1}/{len(blocks)} (replications {start}..{stop - 1}) done")
            return result

        parts = await asyncio.gather(*[
            loop.run_in_executor(pool, simulate, i, start, stop) for i, (start, stop) in enumerate(blocks)
        ])

    merged = BlockResult.concat(parts)
    if merged.occurrence.ties:
        logger.warning(f"{run.name}: {merged.occurrence.ties} key ties across all replications")
    rows.extend(run.summary_rows(merged))
    return RunResult(config=config, rows=rows, occurrence=merged.occurrence, details=run.details)


def run_replications(config: ExperimentConfig) -> RunResult:
    return asyncio.run(run_replications_async(config))
