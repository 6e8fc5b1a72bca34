#!/usr/bin/env python3
"""
Result emission
CSV rows with a fixed header or a single JSON document; byte-stable for identical results
"""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from borel_cantelli.errors import BorelCantelliError
from harness.runner import ResultRow, RunResult

logger = logging.getLogger(__name__)

CSV_HEADER = ("scenario", "n_or_window", "exact_value", "mc_estimate", "mc_stderr", "verdict")


class EmitError(BorelCantelliError, OSError):
    """Writing the result document failed"""


def format_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def csv_rows(rows: Sequence[ResultRow]) -> List[List[str]]:
    """Scenario column carries the quantity as scenario/quantity"""
    return [[f"{r.scenario}/{r.quantity}", r.n_or_window, format_number(r.exact_value),
             format_number(r.mc_estimate), format_number(r.mc_stderr), r.verdict or ""] for r in rows]


def render_csv(rows: Sequence[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(csv_rows(rows))
    return buffer.getvalue()


def _clean(value: Any) -> Any:
    """NaN and infinities become null so the document stays valid JSON"""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def result_document(result: RunResult) -> Dict[str, Any]:
    return {
        "config": result.config.model_dump(mode="json", by_alias=True),
        "rows": [
            {
                "scenario": r.scenario,
                "quantity": r.quantity,
                "n_or_window": r.n_or_window,
                "exact_value": r.exact_value,
                "mc_estimate": r.mc_estimate,
                "mc_stderr": r.mc_stderr,
                "verdict": r.verdict,
            }
            for r in result.rows
        ],
        "occurrence": result.occurrence.to_dict() if result.occurrence is not None else None,
        "details": result.details,
    }


def render_json(result: RunResult) -> str:
    return json.dumps(_clean(result_document(result)), sort_keys=True, indent=2, allow_nan=False) + "\n"


def render(result: RunResult, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(result.rows)
    if fmt == "json":
        return render_json(result)
    raise ValueError(f"unknown output format {fmt!r}")


def emit(result: RunResult, fmt: str, path: Optional[Union[str, Path]] = None) -> str:
    """Render and write to path (returned text only when path is None)"""
    text = render(result, fmt)
    if path is None:
        return text
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    except OSError as e:
        raise EmitError(f"cannot write {target}: {e}") from e
    logger.info(f"Wrote {len(result.rows)} rows to {target} as {fmt}")
    return text
