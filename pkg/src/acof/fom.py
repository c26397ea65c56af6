"""Figure of merit: one-sided, clamped relative-shortfall scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Measurements, SpecTargets

GAIN_WEIGHT = 3.0
# lowest attainable total: every component clamped at -1
FOM_FLOOR = -(GAIN_WEIGHT + 3.0)


class InvalidMeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class FomScore:
    s_gain: float
    s_bw: float
    s_pm: float
    s_power: float
    total: float


def _clamp(v: float) -> float:
    return min(0.0, max(-1.0, v))


def score_maximize(value: float, target: float) -> float:
    if not target > 0:
        raise ValueError(f"target must be > 0, got {target}")
    return _clamp((value - target) / target)


def score_minimize(value: float, target: float) -> float:
    if not target > 0:
        raise ValueError(f"target must be > 0, got {target}")
    return _clamp((target - value) / target)


def fom(meas: Measurements, targets: SpecTargets) -> FomScore:
    if not meas.sim_valid:
        raise InvalidMeasurementError("cannot score an invalid simulation")
    values = (meas.gain_db, meas.ugbw_hz, meas.pm_deg, meas.power_w)
    if any(math.isnan(v) for v in values):
        raise InvalidMeasurementError("measurement contains NaN")
    s_g = score_maximize(meas.gain_db, targets.gain_db)
    s_bw = score_maximize(meas.ugbw_hz, targets.ugbw_hz)
    s_pm = score_maximize(meas.pm_deg, targets.pm_deg)
    s_w = score_minimize(meas.power_w, targets.power_w)
    total = GAIN_WEIGHT * s_g + s_bw + s_pm + s_w
    return FomScore(s_g, s_bw, s_pm, s_w, total)


def phys_feasible(meas: Measurements) -> bool:
    return bool(
        meas.sim_valid
        and meas.ugbw_hz > 0
        and meas.pm_deg > 0
        and meas.power_w > 0
        and meas.gain_db >= 0
    )
