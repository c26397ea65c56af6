"""Run scoreboard: top-k quality, reliability, regret and explored regions."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import EvaluationRecord, ParameterSpace, rank_key
from ..fom import FOM_FLOOR
from .hdbscan import NOISE, hdbscan

__all__ = [
    "EmptyReportError",
    "MetricsReport",
    "compute_report",
    "count_regions",
    "hdbscan",
    "regret",
    "reliability_rates",
    "round_series",
    "top_k_summary",
]


class EmptyReportError(ValueError):
    pass


@dataclass(frozen=True)
class TopK:
    k: int
    gain_db: float
    ugbw_hz: float
    pm_deg: float
    power_w: float
    fom: float


def top_k_summary(records: Sequence[EvaluationRecord], k: int = 10) -> TopK:
    valid = sorted((r for r in records if r.fom is not None), key=rank_key)
    if not valid:
        raise EmptyReportError("no valid records to summarize")
    top = valid[:k]
    return TopK(
        k=len(top),
        gain_db=float(np.mean([r.meas.gain_db for r in top])),
        ugbw_hz=float(np.mean([r.meas.ugbw_hz for r in top])),
        pm_deg=float(np.mean([r.meas.pm_deg for r in top])),
        power_w=float(np.mean([r.meas.power_w for r in top])),
        fom=float(np.mean([r.fom for r in top])),
    )


def regret(records: Sequence[EvaluationRecord], include_seed: bool = True) -> float:
    """Mean gap between 0 and the best-so-far fom, one term per step.

    Steps before the first valid fom count as the floor gap. With
    ``include_seed=False`` the seeding steps still set the running best but
    do not enter the average.
    """
    best = None
    gaps = []
    for r in sorted(records, key=lambda r: r.step):
        if r.fom is not None and (best is None or r.fom > best):
            best = r.fom
        if include_seed or r.round > 0:
            gaps.append(-FOM_FLOOR if best is None else 0.0 - best)
    return float(np.mean(gaps)) if gaps else 0.0


def reliability_rates(records: Sequence[EvaluationRecord]) -> tuple[float, float]:
    n = len(records)
    if n == 0:
        return 0.0, 0.0
    valid = sum(r.meas.sim_valid for r in records)
    feasible = sum(r.phys_feasible for r in records)
    return valid / n, feasible / n


def count_regions(records: Sequence[EvaluationRecord], space: ParameterSpace, min_cluster_size: int = 10,
                  min_samples: int = 5) -> int:
    if not records:
        return 0
    Z = np.clip(space.to_unit(np.array([r.point.values for r in records])), 0.0, 1.0)
    labels = hdbscan(Z, min_cluster_size, min_samples)
    return len(set(labels.tolist()) - {NOISE})


def round_series(records: Sequence[EvaluationRecord]) -> list[dict]:
    out = []
    running = None
    for rnd in sorted({r.round for r in records}):
        foms = [r.fom for r in records if r.round == rnd and r.fom is not None]
        best = max(foms) if foms else None
        if best is not None and (running is None or best > running):
            running = best
        out.append({
            "round": rnd,
            "best": best,
            "mean": float(np.mean(foms)) if foms else None,
            "best_so_far": running,
        })
    return out


@dataclass(frozen=True)
class MetricsReport:
    top_k: Optional[TopK]
    sim_valid_rate: float
    phys_feasible_rate: float
    regret: float
    regions: int
    n_records: int
    min_cluster_size: int
    min_samples: int
    regret_includes_seed: bool
    series: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> dict:
        """Flat single-run row in display units (MHz, mW, %)."""
        t = self.top_k
        return {
            "Gain (dB)": None if t is None else round(t.gain_db, 2),
            "UGBW (MHz)": None if t is None else round(t.ugbw_hz / 1e6, 2),
            "PM (deg)": None if t is None else round(t.pm_deg, 2),
            "Power (mW)": None if t is None else round(t.power_w * 1e3, 3),
            "FoM": None if t is None else round(t.fom, 2),
            "Sim. Valid (%)": round(100 * self.sim_valid_rate, 1),
            "Phys. Feasible (%)": round(100 * self.phys_feasible_rate, 1),
            "Regions": self.regions,
            "Regret": round(self.regret, 2),
        }


def compute_report(records: Sequence[EvaluationRecord], space: ParameterSpace, k: int = 10,
                   min_cluster_size: int = 10, min_samples: int = 5, include_seed: bool = True) -> MetricsReport:
    records = sorted(records, key=lambda r: r.step)
    try:
        top = top_k_summary(records, k)
    except EmptyReportError:
        top = None
    sv, pf = reliability_rates(records)
    return MetricsReport(
        top_k=top,
        sim_valid_rate=sv,
        phys_feasible_rate=pf,
        regret=regret(records, include_seed),
        regions=count_regions(records, space, min_cluster_size, min_samples),
        n_records=len(records),
        min_cluster_size=min_cluster_size,
        min_samples=min_samples,
        regret_includes_seed=include_seed,
        series=round_series(records),
    )
