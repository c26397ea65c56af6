"""Small builders shared by several test modules."""

import numpy as np

from acof.core import DesignPoint, EvaluationRecord, Measurements, ParameterSpace, Region
from acof.fom import fom, phys_feasible

from conftest import TARGETS


def record(step, rnd, space: ParameterSpace, z, meas=None):
    p = DesignPoint(tuple(space.from_unit(np.asarray(z, float)).tolist()))
    meas = meas or Measurements(60.0 + 10 * float(np.mean(z)), 5e8, 80.0, 4e-4, True)
    score = fom(meas, TARGETS).total if meas.sim_valid else None
    return EvaluationRecord(step, rnd, p, meas, score, phys_feasible(meas))


def unit_widths(region: Region, space: ParameterSpace):
    lo, hi = region.unit_bounds(space)
    return hi - lo


def adversarial_region(rng, space: ParameterSpace) -> Region:
    """Out of bounds, reversed or zero-width ranges mixed with ordinary ones."""
    ranges = []
    for p in space:
        span = p.upper - p.lower
        kind = rng.integers(5)
        a = p.lower + span * rng.uniform(-2, 3)
        b = p.lower + span * rng.uniform(-2, 3)
        if p.scale == "log":
            a, b = abs(a) + 1e-30, abs(b) + 1e-30
        if kind == 0:
            ranges.append((max(a, b), min(a, b)))  # reversed
        elif kind == 1:
            ranges.append((a, a))  # zero width
        elif kind == 2:
            ranges.append((p.upper + span, p.upper + 2 * span))  # wholly above
        elif kind == 3:
            z = rng.uniform(0, 1)
            v = float(space.from_unit(np.where(np.arange(space.dim) == space.index(p.name), z, 0.5))[space.index(p.name)])
            ranges.append((v, v))  # zero width inside the domain
        else:
            ranges.append((min(a, b), max(a, b)))
    return Region(tuple(ranges))
