#!/usr/bin/env python3
"""
Tests for the experiment harness: config schema, occurrence statistics, runner and emitter
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from borel_cantelli.errors import ConfigError, DomainError
from harness.config import (
    CopulaSpec,
    ExperimentConfig,
    ExponentSpec,
    RateSpec,
    load_config,
    read_document,
)
from harness.emitter import CSV_HEADER, EmitError, emit, render_csv, render_json
from harness.occurrence import OccurrenceStats
from harness.runner import (
    ResultRow,
    RunResult,
    replication_blocks,
    replication_seeds,
    run_replications,
    run_replications_async,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def sticky_config(**overrides) -> ExperimentConfig:
    data = {
        "scenario": "markov_chain",
        "horizon": 60,
        "replications": 120,
        "master_seed": 42,
        "windows": [{"start": 10, "end": 30}, {"start": 31, "end": 60}],
        "marginal_indices": [1, 20],
        "markov_chain": {
            "p": {"family": "constant", "value": 0.2},
            "q": {"family": "constant", "value": 0.1},
            "p1": 0.5,
        },
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def rows_by_quantity(result: RunResult):
    return {(r.quantity, r.n_or_window): r for r in result.rows}


class TestConfig:

    def test_defaults(self):
        config = ExperimentConfig(scenario="series")
        assert config.horizon == 1000
        assert config.params().family == "p_series"

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "series", "horizn": 10})

    def test_foreign_block_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "series", "concomitant": {}})

    @pytest.mark.parametrize("windows", [
        [{"start": 5, "end": 2000}],
        [{"start": 50, "end": 60}, {"start": 10, "end": 20}],
        [{"start": 10, "end": 30}, {"start": 30, "end": 40}],
        [{"start": 9, "end": 3}],
    ])
    def test_bad_windows(self, windows):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "markov_chain", "horizon": 1000, "windows": windows})

    def test_marginal_index_outside_horizon(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "markov_chain", "horizon": 10, "marginal_indices": [11]})

    def test_concomitant_needs_room_for_n_plus_one(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "concomitant", "horizon": 10,
                                             "concomitant": {"n_values": [10]}})

    def test_seed_range(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "series", "master_seed": 2 ** 64})

    def test_copula_lambda_alias(self):
        spec = CopulaSpec.model_validate({"family": "fgm", "lambda": 0.4})
        assert spec.lam == 0.4
        assert spec.as_spec() == {"family": "fgm", "lambda": 0.4}
        with pytest.raises(ValidationError):
            CopulaSpec.model_validate({"family": "fgm", "lambda": 1.5})

    def test_exponent_family_parameters(self):
        with pytest.raises(ValidationError):
            ExponentSpec(family="example41")
        assert ExponentSpec(family="power", c=-2.0).as_spec() == {"family": "power", "c": -2.0}

    def test_rate_spec(self):
        ns = np.array([1, 2, 3, 9])
        assert np.allclose(RateSpec(family="power", exponent=-2.0, shift=1.0).evaluate(ns), 1.0 / (ns + 1.0) ** 2)
        assert RateSpec(family="table", values=[0.1, 0.2]).evaluate(ns).tolist() == [0.1, 0.2, 0.2, 0.2]
        with pytest.raises(ValidationError):
            RateSpec(family="table", values=[0.5, 1.5])

    def test_kernel_table_needs_initial_dist(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"scenario": "markov_chain",
                                             "markov_chain": {"kernel_table": [[0.5, 0.5]]}})

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.*")), ids=lambda p: p.name)
    def test_shipped_configs_validate(self, path):
        config = load_config(path)
        assert config.params() is not None

    def test_yaml_and_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("scenario: series\nmaster_seed: 5\nseries: {family: geometric, ratio: 0.5}\n")
        config = load_config(path, {"master_seed": 9, "workers": None})
        assert config.master_seed == 9
        assert config.workers == 1
        assert config.params().ratio == 0.5

    def test_unreadable_documents(self, tmp_path):
        with pytest.raises(ConfigError):
            read_document(tmp_path / "missing.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(ConfigError):
            read_document(broken)
        listing = tmp_path / "list.yaml"
        listing.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            read_document(listing)


class TestOccurrenceStats:

    @pytest.fixture
    def stats(self):
        rows = np.array([[0, 1, 0, 1],
                         [0, 0, 0, 0],
                         [1, 0, 0, 0]], dtype=np.int8)
        return OccurrenceStats.from_indicators(rows, [(1, 2), (3, 4)])

    def test_counts(self, stats):
        assert stats.totals.tolist() == [2, 0, 1]
        assert stats.last_index.tolist() == [4, 0, 1]
        assert stats.window_counts.tolist() == [[1, 1], [0, 0], [1, 0]]

    def test_aggregates(self, stats):
        assert stats.mean_total == pytest.approx(1.0)
        assert stats.window_hit_fraction.tolist() == pytest.approx([2 / 3, 1 / 3])
        assert stats.last_index_quantiles((0.5,)) == {0.5: 1.0}

    def test_window_counts_never_exceed_totals(self):
        rows = (np.random.default_rng(0).random((40, 100)) < 0.1).astype(np.int8)
        stats = OccurrenceStats.from_indicators(rows, [(1, 50), (51, 100)])
        assert np.all(stats.window_counts.sum(axis=1) <= stats.totals)
        assert np.all(stats.last_index <= 100)

    def test_concat_keeps_order(self, stats):
        joined = OccurrenceStats.concat([stats, stats])
        assert joined.replications == 6
        assert joined.totals.tolist() == [2, 0, 1, 2, 0, 1]

    def test_window_outside_horizon(self):
        with pytest.raises(DomainError):
            OccurrenceStats.from_indicators(np.zeros((2, 5)), [(3, 6)])

    def test_to_dict(self, stats):
        data = stats.to_dict()
        assert data["replications"] == 3
        assert data["windows"][0] == {"start": 1, "end": 2, "mean_count": pytest.approx(2 / 3),
                                      "hit_fraction": pytest.approx(2 / 3)}


class TestRunner:

    def test_blocks_partition_replications(self):
        assert replication_blocks(120) == [(0, 50), (50, 100), (100, 120)]
        assert replication_blocks(0) == []

    def test_seeds_do_not_depend_on_count(self):
        assert replication_seeds(7, 10)[:4] == replication_seeds(7, 4)

    def test_worker_count_does_not_change_output(self):
        one = run_replications(sticky_config(workers=1))
        four = run_replications(sticky_config(workers=4))
        assert render_csv(one.rows) == render_csv(four.rows)
        assert render_json(one) != ""
        assert json.loads(render_json(one))["rows"] == json.loads(render_json(four))["rows"]

    def test_markov_rows(self):
        result = run_replications(sticky_config())
        rows = rows_by_quantity(result)
        assert rows[("io_verdict(cond_prev_complement)", "")].verdict == "NotApplicable"

        first = rows[("P(A_n)", "1")]
        assert first.exact_value == pytest.approx(0.5)
        assert abs(first.mc_estimate - 0.5) <= 5.0 * math.sqrt(0.25 / 120)

        count = rows[("expected_count(A)", "1-60")]
        levy = rows[("levy_conditional_sum", "1-60")]
        assert levy.exact_value == count.exact_value
        assert abs(count.mc_estimate - count.exact_value) <= 5.0 * count.mc_stderr

        window = rows[("P(union A)", "10-30")]
        assert 0.0 < window.exact_value < 1.0
        assert result.occurrence.replications == 120

    def test_newcomer_rows(self):
        config = ExperimentConfig.model_validate({
            "scenario": "falpha_newcomer", "horizon": 20, "replications": 100, "master_seed": 1,
            "falpha_newcomer": {"exponents": {"family": "constant"}, "proposition": "prop52",
                                "probe_indices": [2, 3]},
        })
        rows = rows_by_quantity(run_replications(config))
        assert rows[("P(B_n)", "2")].exact_value == pytest.approx(0.5)
        assert rows[("P(B_n B_n+1^c)", "2")].exact_value == pytest.approx(1.0 / 6.0)
        assert rows[("series(prop52)", "20")].verdict == "Divergent"

    def test_maxima_rows(self):
        config = ExperimentConfig.model_validate({
            "scenario": "falpha_maxima", "horizon": 20, "replications": 60, "marginal_indices": [3],
            "falpha_maxima": {"series": ["bc_classic"]},
        })
        rows = rows_by_quantity(run_replications(config))
        assert rows[("series(bc_classic)", "20")].exact_value == pytest.approx(1.0 - 2.0 ** -20)
        assert rows[("P(M_n<=x_n)", "3")].exact_value == pytest.approx(0.125)

    def test_concomitant_rows(self):
        config = ExperimentConfig.model_validate({
            "scenario": "concomitant", "horizon": 6, "replications": 200,
            "concomitant": {"y_grid": [0.5], "n_values": [1, 5], "verdict": False},
        })
        rows = rows_by_quantity(run_replications(config))
        assert rows[("P(Y_[n,n]<=0.5)", "5")].exact_value == pytest.approx(0.5, abs=1e-8)
        assert rows[("P(Y_[n,n]>0.5,Y_[n+1,n+1]<=0.5)", "1")].exact_value == pytest.approx(0.125, abs=1e-8)

    async def test_series_run_async(self):
        config = ExperimentConfig.model_validate({"scenario": "series",
                                                  "series": {"family": "p_series", "p": 2.0, "n_max": 1000}})
        result = await run_replications_async(config)
        rows = rows_by_quantity(result)
        assert rows[("classify(p_series(p=2))", "1000")].verdict == "Convergent"
        assert rows[("partial_sum(p_series(p=2))", "10")].exact_value == pytest.approx(
            math.fsum(1.0 / n ** 2 for n in range(1, 11)))
        assert result.occurrence is None


class TestEmitter:

    @pytest.fixture
    def result(self):
        rows = [
            ResultRow("series", "classify(x)", "1000", verdict="Convergent"),
            ResultRow("markov_chain", "P(A_n)", "3", 0.25, 0.3, 0.01),
            ResultRow("markov_chain", "beta", "", float("nan")),
        ]
        return RunResult(config=ExperimentConfig(scenario="series"), rows=rows)

    def test_empty_csv_is_header_only(self):
        assert render_csv([]) == ",".join(CSV_HEADER) + "\n"

    def test_csv_rows(self, result):
        lines = render_csv(result.rows).splitlines()
        assert lines[1] == "series/classify(x),1000,,,,Convergent"
        assert lines[2] == "markov_chain/P(A_n),3,0.25,0.29999999999999999,0.01,"

    def test_json_has_no_nan(self, result):
        document = json.loads(render_json(result))
        assert document["rows"][2]["exact_value"] is None
        assert document["config"]["scenario"] == "series"

    def test_emit_to_file(self, result, tmp_path):
        target = tmp_path / "out" / "rows.csv"
        text = emit(result, "csv", target)
        assert target.read_text() == text

    def test_emit_failure(self, result, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(EmitError):
            emit(result, "json", blocker / "rows.json")
