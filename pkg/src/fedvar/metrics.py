"""Fairness statistics over per-client test accuracies.

All accuracies are in percentage points (0-100).  Tail statistics use
ceil(k% * n) clients, so the tail never rounds down to empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FairnessReport:
    """Distributional summary of per-client accuracies (percent)."""

    accuracies: tuple[float, ...]
    mean: float
    std: float
    worst: float
    worst_10pct: float
    worst_20pct: float
    best_10pct: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "worst": self.worst,
            "worst_10pct": self.worst_10pct,
            "worst_20pct": self.worst_20pct,
            "best_10pct": self.best_10pct,
            "accuracies": list(self.accuracies),
        }


def _tail_mean(sorted_acc: np.ndarray, k_pct: float, lowest: bool) -> float:
    count = math.ceil(k_pct / 100.0 * sorted_acc.size)
    count = max(count, 1)
    tail = sorted_acc[:count] if lowest else sorted_acc[-count:]
    return float(tail.mean())


def fairness_report(accuracies: np.ndarray | list[float]) -> FairnessReport:
    """Summary statistics; population (not sample) standard deviation."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("need at least one accuracy")
    s = np.sort(acc)
    return FairnessReport(
        accuracies=tuple(float(a) for a in acc),
        mean=float(acc.mean()),
        std=float(acc.std()),
        worst=float(s[0]),
        worst_10pct=_tail_mean(s, 10.0, lowest=True),
        worst_20pct=_tail_mean(s, 20.0, lowest=True),
        best_10pct=_tail_mean(s, 10.0, lowest=False),
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Per-client change of a candidate run against a baseline run.

    Clients are split by the *baseline* run's mean accuracy: ``suffering``
    clients sit strictly below it, ``well_performing`` at or above it.
    "Improved" / "degraded" mean strictly greater / strictly smaller
    candidate accuracy; ties count as neither.  Mean deltas average over
    the whole group, improved or not.
    """

    n_clients: int
    suffering: tuple[int, ...]
    well_performing: tuple[int, ...]
    pct_suffering_improved: float
    suffering_mean_delta: float
    pct_wellperforming_degraded: float
    wellperforming_mean_delta: float
    overall_mean_delta: float

    def to_dict(self) -> dict:
        return {
            "n_clients": self.n_clients,
            "suffering": list(self.suffering),
            "well_performing": list(self.well_performing),
            "pct_suffering_improved": self.pct_suffering_improved,
            "suffering_mean_delta": self.suffering_mean_delta,
            "pct_wellperforming_degraded": self.pct_wellperforming_degraded,
            "wellperforming_mean_delta": self.wellperforming_mean_delta,
            "overall_mean_delta": self.overall_mean_delta,
        }


def comparison_report(
    baseline: np.ndarray | list[float], candidate: np.ndarray | list[float]
) -> ComparisonReport:
    """Compare candidate accuracies to baseline accuracies client by client
    (same client ordering in both vectors)."""
    base = np.asarray(baseline, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if base.shape != cand.shape or base.ndim != 1 or base.size == 0:
        raise ValueError(f"mismatched accuracy vectors: {base.shape} vs {cand.shape}")
    mean = base.mean()
    suffering = np.flatnonzero(base < mean)
    well = np.flatnonzero(base >= mean)
    delta = cand - base

    def pct(mask_count: int, group_size: int) -> float:
        return 100.0 * mask_count / group_size if group_size else 0.0

    return ComparisonReport(
        n_clients=base.size,
        suffering=tuple(int(i) for i in suffering),
        well_performing=tuple(int(i) for i in well),
        pct_suffering_improved=pct(int((delta[suffering] > 0).sum()), suffering.size),
        suffering_mean_delta=float(delta[suffering].mean()) if suffering.size else 0.0,
        pct_wellperforming_degraded=pct(int((delta[well] < 0).sum()), well.size),
        wellperforming_mean_delta=float(delta[well].mean()) if well.size else 0.0,
        overall_mean_delta=float(delta.mean()),
    )
