from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import EvaluationRecord, ParameterSpace, RoundSummary, rank_key


def best_record(records: Sequence[EvaluationRecord]):
    valid = [r for r in records if r.fom is not None]
    return min(valid, key=rank_key) if valid else None


def summarize_round(round_records: Sequence[EvaluationRecord], all_records: Sequence[EvaluationRecord],
                    memo: str, s: int = 10, space: ParameterSpace = None) -> RoundSummary:
    """Digest one round for the next actor prompt.

    ``top_records`` come from this round only, phys-feasible first (falling
    back to any sim-valid record); ``best_record`` is the global best.
    """
    if not round_records:
        raise ValueError("round has no records")
    feasible = [r for r in round_records if r.phys_feasible]
    pool = feasible or [r for r in round_records if r.fom is not None]
    top = tuple(sorted(pool, key=rank_key)[:s])
    stats = {}
    if feasible:
        X = np.array([r.point.values for r in feasible])
        names = space.names if space is not None else [f"x{i}" for i in range(X.shape[1])]
        for j, name in enumerate(names):
            col = X[:, j]
            stats[name] = (float(col.min()), float(col.max()), float(col.mean()))
    counts = (
        len(round_records),
        sum(r.meas.sim_valid for r in round_records),
        len(feasible),
    )
    return RoundSummary(
        round=round_records[0].round,
        best_record=best_record(all_records),
        top_records=top,
        critic_memo=memo,
        stats=stats,
        counts=counts,
    )
