#!/usr/bin/env python3
"""
Experiment configuration schema
One JSON or YAML document per experiment; unknown keys are rejected
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from borel_cantelli.errors import ConfigError
from borel_cantelli.falpha_scheme import MaximaSeries
from borel_cantelli.markov_indicators import CriterionKind

logger = logging.getLogger(__name__)

SCENARIOS = ("markov_chain", "falpha_maxima", "falpha_newcomer", "concomitant", "series")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DistributionSpec(StrictModel):
    name: Literal["uniform", "exponential", "pareto"] = "uniform"
    rate: Optional[float] = Field(None, gt=0)
    shape: Optional[float] = Field(None, gt=0)

    def as_spec(self) -> Dict[str, Any]:
        return self.model_dump(exclude_none=True)


class RateSpec(StrictModel):
    """A probability sequence indexed by n: constant, scale (n + shift)^exponent, or a table"""
    family: Literal["constant", "power", "table"] = "constant"
    value: float = Field(0.5, ge=0, le=1)
    scale: float = Field(1.0, ge=0)
    exponent: float = -1.0
    shift: float = 0.0
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_table(self) -> "RateSpec":
        if self.family == "table":
            if not self.values:
                raise ValueError("table rates need a non-empty 'values' list")
            if any(not 0.0 <= x <= 1.0 for x in self.values):
                raise ValueError("table rates must lie in [0, 1]")
        return self

    def evaluate(self, ns: np.ndarray) -> np.ndarray:
        n = np.asarray(ns, dtype=float)
        if self.family == "constant":
            return np.full(n.shape, self.value)
        if self.family == "power":
            return self.scale * (n + self.shift) ** self.exponent
        values = np.asarray(self.values, dtype=float)
        # last value repeats beyond the table
        return values[np.clip(np.asarray(ns, dtype=np.int64) - 1, 0, len(values) - 1)]


class MarkovChainParams(StrictModel):
    p: RateSpec = Field(default_factory=RateSpec)
    q: RateSpec = Field(default_factory=RateSpec)
    p1: float = Field(0.0, ge=0, le=1)
    kernel_table: Optional[List[List[float]]] = None
    initial_dist: Optional[List[float]] = None
    safe_start_index: int = Field(1, ge=1)
    criterion: CriterionKind = CriterionKind.COND_PREV_COMPLEMENT
    shift: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_table(self) -> "MarkovChainParams":
        if (self.kernel_table is None) != (self.initial_dist is None):
            raise ValueError("kernel_table and initial_dist go together")
        return self


class ExponentSpec(StrictModel):
    family: Literal["constant", "example41", "power", "superexp", "table"] = "constant"
    value: Optional[float] = Field(None, gt=0)
    gamma: Optional[float] = Field(None, gt=0)
    c: Optional[float] = None
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_params(self) -> "ExponentSpec":
        required = {"example41": "gamma", "power": "c", "table": "values"}.get(self.family)
        if required and getattr(self, required) is None:
            raise ValueError(f"exponent family {self.family!r} needs {required!r}")
        return self

    def as_spec(self) -> Dict[str, Any]:
        return self.model_dump(exclude_none=True)


class ThresholdSpec(StrictModel):
    family: Literal["constant", "example41", "table"] = "constant"
    value: Optional[float] = None
    values: Optional[List[float]] = None
    first_index: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_params(self) -> "ThresholdSpec":
        if self.family == "constant" and self.value is None:
            raise ValueError("constant thresholds need 'value'")
        if self.family == "table" and not self.values:
            raise ValueError("table thresholds need 'values'")
        return self

    def as_spec(self) -> Dict[str, Any]:
        return self.model_dump(exclude_none=True)


class FalphaMaximaParams(StrictModel):
    base: DistributionSpec = Field(default_factory=DistributionSpec)
    exponents: ExponentSpec = Field(default_factory=ExponentSpec)
    thresholds: ThresholdSpec = Field(default_factory=lambda: ThresholdSpec(family="constant", value=0.5))
    example41_gamma: Optional[float] = Field(None, gt=0)
    series: List[MaximaSeries] = Field(default_factory=lambda: [MaximaSeries.BC_CLASSIC, MaximaSeries.PROP41])


class FalphaNewcomerParams(StrictModel):
    base: DistributionSpec = Field(default_factory=DistributionSpec)
    exponents: ExponentSpec = Field(default_factory=ExponentSpec)
    proposition: Literal["prop51", "prop52"] = "prop51"
    strict: bool = True
    probe_indices: List[int] = Field(default_factory=lambda: [2, 3, 5, 10])

    @model_validator(mode="after")
    def _check_probes(self) -> "FalphaNewcomerParams":
        if any(n < 2 for n in self.probe_indices):
            raise ValueError("probe indices must be >= 2")
        return self


class CopulaSpec(StrictModel):
    family: Literal["independence", "fgm", "comonotone"] = "independence"
    lam: float = Field(0.0, ge=-1, le=1, alias="lambda")

    def as_spec(self) -> Dict[str, Any]:
        return {"family": self.family, "lambda": self.lam}


class ConcomitantParams(StrictModel):
    copula: CopulaSpec = Field(default_factory=CopulaSpec)
    marginal_x: DistributionSpec = Field(default_factory=DistributionSpec)
    marginal_y: DistributionSpec = Field(default_factory=DistributionSpec)
    y_grid: List[float] = Field(default_factory=lambda: [0.5])
    n_values: List[int] = Field(default_factory=lambda: [1, 2, 5, 10])
    verdict: bool = True

    @model_validator(mode="after")
    def _check_grid(self) -> "ConcomitantParams":
        if not self.y_grid:
            raise ValueError("y_grid must not be empty")
        if any(n < 1 for n in self.n_values):
            raise ValueError("n_values must be >= 1")
        return self


class SeriesParams(StrictModel):
    """Built-in term families: p-series, geometric, n^-1 (log n)^-q, log-log threshold shape"""
    family: Literal["p_series", "geometric", "log_power", "example41_terms"] = "p_series"
    p: float = 2.0
    ratio: float = Field(0.9, gt=0, lt=1)
    q: float = 2.0
    gamma: float = Field(1.0, gt=0)
    n_max: int = Field(10 ** 6, ge=1)


class WindowSpec(StrictModel):
    start: int = Field(..., ge=1)
    end: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _ordered(self) -> "WindowSpec":
        if self.end < self.start:
            raise ValueError(f"window [{self.start}, {self.end}] is empty")
        return self


class ExperimentConfig(StrictModel):
    scenario: Literal["markov_chain", "falpha_maxima", "falpha_newcomer", "concomitant", "series"]
    horizon: int = Field(1000, ge=1)
    replications: int = Field(100, ge=1)
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    output_format: Literal["csv", "json"] = "csv"
    windows: List[WindowSpec] = Field(default_factory=list)
    marginal_indices: List[int] = Field(default_factory=list)
    workers: int = Field(1, ge=1)

    markov_chain: Optional[MarkovChainParams] = None
    falpha_maxima: Optional[FalphaMaximaParams] = None
    falpha_newcomer: Optional[FalphaNewcomerParams] = None
    concomitant: Optional[ConcomitantParams] = None
    series: Optional[SeriesParams] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        for other in SCENARIOS:
            if other != self.scenario and getattr(self, other) is not None:
                raise ValueError(f"block {other!r} given for scenario {self.scenario!r}")
        previous_end = 0
        for window in self.windows:
            if window.end > self.horizon:
                raise ValueError(f"window [{window.start}, {window.end}] exceeds horizon {self.horizon}")
            if window.start <= previous_end:
                raise ValueError("windows must be sorted and disjoint")
            previous_end = window.end
        if any(not 1 <= n <= self.horizon for n in self.marginal_indices):
            raise ValueError(f"marginal indices must lie in [1, {self.horizon}]")
        if self.scenario == "concomitant":
            params = self.params()
            if max(params.n_values) + 1 > self.horizon:
                raise ValueError("concomitant horizon must exceed the largest n in n_values")
        return self

    def params(self) -> Any:
        """Parameter block of the selected scenario, defaults when omitted"""
        block = getattr(self, self.scenario)
        if block is not None:
            return block
        defaults = {
            "markov_chain": MarkovChainParams,
            "falpha_maxima": FalphaMaximaParams,
            "falpha_newcomer": FalphaNewcomerParams,
            "concomitant": ConcomitantParams,
            "series": SeriesParams,
        }
        return defaults[self.scenario]()

    def window_pairs(self) -> List[tuple]:
        return [(w.start, w.end) for w in self.windows]


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a JSON or YAML config file into a mapping"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping at the top level")
    return data


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read, merge top-level overrides and validate; pydantic.ValidationError propagates"""
    data = read_document(path)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = ExperimentConfig.model_validate(data)
    logger.info(f"Loaded {config.scenario} config from {path}")
    return config
