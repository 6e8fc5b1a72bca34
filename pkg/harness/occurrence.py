#!/usr/bin/env python3
"""
Occurrence statistics
Per-replication counts, last-occurrence indices and window counts of indicator trajectories
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from borel_cantelli.errors import DomainError

logger = logging.getLogger(__name__)

LAST_OCCURRENCE_QUANTILES = (0.5, 0.9, 0.99)


@dataclass
class OccurrenceStats:
    """
    Finite-horizon view of "A_n infinitely often".

    ``last_index`` is 0 for a replication with no occurrence at all. Rows are
    ordered by replication index, so aggregates never depend on how the
    replications were scheduled.
    """
    horizon: int
    windows: List[Tuple[int, int]]
    totals: np.ndarray
    last_index: np.ndarray
    window_counts: np.ndarray
    label: str = "A"
    ties: int = field(default=0)

    @classmethod
    def from_indicators(cls, rows: np.ndarray, windows: Sequence[Tuple[int, int]], label: str = "A") -> "OccurrenceStats":
        rows = np.asarray(rows)
        if rows.ndim != 2:
            raise DomainError(f"indicator rows must be 2-d, got shape {rows.shape}")
        horizon = rows.shape[1]
        for start, end in windows:
            if not 1 <= start <= end <= horizon:
                raise DomainError(f"window [{start}, {end}] is outside [1, {horizon}]")
        hits = rows != 0
        totals = hits.sum(axis=1).astype(np.int64)
        # 1-based index of the last True, 0 when none
        reversed_first = np.argmax(hits[:, ::-1], axis=1)
        last = np.where(totals > 0, horizon - reversed_first, 0).astype(np.int64)
        counts = np.zeros((rows.shape[0], len(windows)), dtype=np.int64)
        for j, (start, end) in enumerate(windows):
            counts[:, j] = hits[:, start - 1:end].sum(axis=1)
        return cls(horizon=horizon, windows=list(windows), totals=totals, last_index=last,
                   window_counts=counts, label=label)

    @classmethod
    def concat(cls, parts: Sequence["OccurrenceStats"]) -> "OccurrenceStats":
        """Join blocks given in replication order"""
        if not parts:
            raise DomainError("nothing to concatenate")
        first = parts[0]
        return cls(horizon=first.horizon, windows=first.windows,
                   totals=np.concatenate([p.totals for p in parts]),
                   last_index=np.concatenate([p.last_index for p in parts]),
                   window_counts=np.concatenate([p.window_counts for p in parts]),
                   label=first.label, ties=sum(p.ties for p in parts))

    @property
    def replications(self) -> int:
        return len(self.totals)

    @property
    def mean_total(self) -> float:
        return float(self.totals.mean()) if self.replications else float("nan")

    @property
    def mean_window_counts(self) -> np.ndarray:
        return self.window_counts.mean(axis=0)

    @property
    def window_hit_fraction(self) -> np.ndarray:
        """Fraction of replications with at least one occurrence in each window"""
        return (self.window_counts > 0).mean(axis=0)

    def last_index_quantiles(self, qs: Sequence[float] = LAST_OCCURRENCE_QUANTILES) -> Dict[float, float]:
        values = np.quantile(self.last_index, qs) if self.replications else np.full(len(qs), np.nan)
        return {float(q): float(v) for q, v in zip(qs, values)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "horizon": self.horizon,
            "replications": self.replications,
            "mean_total": self.mean_total,
            "last_index_quantiles": {f"{q:g}": v for q, v in self.last_index_quantiles().items()},
            "windows": [
                {"start": s, "end": e, "mean_count": float(m), "hit_fraction": float(f)}
                for (s, e), m, f in zip(self.windows, self.mean_window_counts, self.window_hit_fraction)
            ],
            "ties": self.ties,
        }
