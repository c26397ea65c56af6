"""Deterministic actor/critic used for reproducible runs and as the LLM fallback."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import EvaluationRecord, ParameterSpace, Region, clip_region, rank_key
from ..fom import FOM_FLOOR
from .base import AgentContext, AuditResult, ProposedRegion

EPS_MIN = 0.01
STAGNATION_TOL = 0.01
# widening target is nudged up so native-unit widths clear the floor after rounding
_EPS_PAD = 1.0 + 1e-9


def _fit_interval(zlo: float, zhi: float, width: float) -> tuple[float, float]:
    """Interval of ``width`` centered like [zlo, zhi], shifted to stay inside [0, 1]."""
    width = min(width, 1.0)
    c = 0.5 * (zlo + zhi)
    lo, hi = c - width / 2, c + width / 2
    if lo < 0.0:
        lo, hi = 0.0, width
    elif hi > 1.0:
        lo, hi = 1.0 - width, 1.0
    return lo, hi


def repair_region(region: Region, space: ParameterSpace, eps_min: float = EPS_MIN,
                  widen: bool = False, zero_width_only: bool = False) -> tuple[Region, list[tuple[str, str]]]:
    """Make a region legal with every normalized width >= eps_min.

    Dimensions that need no change keep their exact input values. With
    ``widen`` every range is doubled about its center first (stagnation).
    ``zero_width_only`` restricts the width floor to degenerate ranges.
    """
    clipped = clip_region(region, space)
    zlo_all, zhi_all = clipped.unit_bounds(space)
    out = []
    repairs = []
    for i, p in enumerate(space):
        raw_lo, raw_hi = region.ranges[i]
        lo, hi = clipped.ranges[i]
        reasons = []
        if raw_lo > raw_hi:
            reasons.append("reversed range swapped")
        if (min(raw_lo, raw_hi), max(raw_lo, raw_hi)) != (lo, hi):
            reasons.append("clamped to legal bounds")
        zlo, zhi = float(np.clip(zlo_all[i], 0, 1)), float(np.clip(zhi_all[i], 0, 1))
        new_z = None
        if widen:
            cand = _fit_interval(zlo, zhi, 2 * (zhi - zlo))
            if cand != (zlo, zhi):
                new_z = cand
                reasons.append("stagnation: width doubled")
        w = (new_z[1] - new_z[0]) if new_z else (zhi - zlo)
        too_narrow = w <= 0 if zero_width_only else w < eps_min
        if too_narrow:
            base = new_z or (zlo, zhi)
            new_z = _fit_interval(base[0], base[1], eps_min * _EPS_PAD)
            reasons.append(f"width below floor, widened to {eps_min:g} of range")
        if new_z is not None:
            lo = float(np.clip(_denorm1(space, i, new_z[0]), p.lower, p.upper))
            hi = float(np.clip(_denorm1(space, i, new_z[1]), p.lower, p.upper))
        if reasons:
            repairs.append((p.name, "; ".join(reasons)))
            out.append((lo, hi))
        else:
            out.append(region.ranges[i])
    return Region(tuple(out)), repairs


def _denorm1(space: ParameterSpace, i: int, z: float) -> float:
    p = space.params[i]
    if z <= 0.0:
        return p.lower
    if z >= 1.0:
        return p.upper
    if p.scale == "log":
        return float(np.exp(np.log(p.lower) + z * (np.log(p.upper) - np.log(p.lower))))
    return p.lower + z * (p.upper - p.lower)


def _evidence(ctx: AgentContext) -> list[EvaluationRecord]:
    if ctx.calibration_records is not None:
        pool = list(ctx.calibration_records)
    else:
        s = ctx.previous_summary
        pool = list(s.top_records)
        if s.best_record is not None and all(r.step != s.best_record.step for r in pool):
            pool.append(s.best_record)
    feasible = [r for r in pool if r.phys_feasible]
    if not feasible:
        feasible = [r for r in pool if r.fom is not None]
    return sorted(feasible, key=rank_key)


class HeuristicActor:
    """Bounding box of the top-k evidence designs, padded by a margin of the global range."""

    def __init__(self, top_k: int = 10, margin: float = 0.2):
        self.top_k = top_k
        self.margin = margin

    def propose(self, ctx: AgentContext) -> ProposedRegion:
        space = ctx.space
        top = _evidence(ctx)[: self.top_k]
        if not top:
            return ProposedRegion(space.full_region(), "no valid evidence yet; searching the full domain")
        Z = space.to_unit(np.array([r.point.values for r in top]))
        zlo = Z.min(axis=0) - self.margin
        zhi = Z.max(axis=0) + self.margin
        lo = space.from_unit(zlo)
        hi = space.from_unit(zhi)
        rationale = (
            f"box around the top {len(top)} designs (best fom {top[0].fom:.4g}), "
            f"padded by {self.margin:g} of each range"
        )
        return ProposedRegion(Region(tuple(zip(lo.tolist(), hi.tolist()))), rationale)


def stagnated(history, tol: float = STAGNATION_TOL) -> bool:
    if len(history) < 2:
        return False
    prev, last = (FOM_FLOOR if h is None else h for h in history[-2:])
    return last - prev < tol


class HeuristicCritic:
    def __init__(self, eps_min: float = EPS_MIN, stagnation_tol: Optional[float] = STAGNATION_TOL):
        self.eps_min = eps_min
        self.stagnation_tol = stagnation_tol

    def audit(self, proposal: ProposedRegion, ctx: AgentContext) -> AuditResult:
        widen = self.stagnation_tol is not None and stagnated(ctx.best_history, self.stagnation_tol)
        region, repairs = repair_region(proposal.region, ctx.space, self.eps_min, widen=widen)
        if not repairs:
            memo = "proposal is legal and wide enough; approved as is"
        else:
            memo = f"repaired {len(repairs)} range(s): " + ", ".join(n for n, _ in repairs)
            if widen:
                memo += "; best fom stalled last round, widened the search"
        return AuditResult(not repairs, region, memo, tuple(repairs))
