"""Domain types shared across the optimizer, agents and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class StructuralError(ValueError):
    """Vector/region length does not match the parameter space."""


class ValidationError(ValueError):
    """A domain-type invariant was violated at construction."""


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    lower: float
    upper: float
    unit: str = ""
    scale: str = "linear"

    def __post_init__(self):
        if not self.name or not self.name.isidentifier():
            raise ValidationError(f"parameter name {self.name!r} is not an identifier")
        if self.scale not in ("linear", "log"):
            raise ValidationError(f"{self.name}: scale must be 'linear' or 'log', got {self.scale!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValidationError(f"{self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValidationError(f"{self.name}: lower ({self.lower}) must be < upper ({self.upper})")
        if self.scale == "log" and self.lower <= 0:
            raise ValidationError(f"{self.name}: log-scaled parameter needs lower > 0")


class ParameterSpace:
    """Ordered, immutable collection of parameter bounds (the global domain)."""

    def __init__(self, params: Iterable[ParameterSpec]):
        self._params = tuple(params)
        if not self._params:
            raise ValidationError("parameter space needs at least one parameter")
        names = [p.name for p in self._params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"duplicate parameter name(s): {', '.join(dupes)}")
        self.lower = np.array([p.lower for p in self._params], dtype=float)
        self.upper = np.array([p.upper for p in self._params], dtype=float)
        self._log = np.array([p.scale == "log" for p in self._params])
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def params(self) -> tuple[ParameterSpec, ...]:
        return self._params

    @property
    def names(self) -> list[str]:
        return [p.name for p in self._params]

    @property
    def dim(self) -> int:
        return len(self._params)

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def __eq__(self, other):
        return isinstance(other, ParameterSpace) and self._params == other._params

    def __hash__(self):
        return hash(self._params)

    def __repr__(self):
        return f"ParameterSpace({list(self._params)!r})"

    def index(self, name: str) -> int:
        for i, p in enumerate(self._params):
            if p.name == name:
                return i
        raise KeyError(name)

    def _check(self, n: int, what: str):
        if n != self.dim:
            raise StructuralError(f"{what} has length {n}, space has dimension {self.dim}")

    def to_unit(self, values) -> np.ndarray:
        """Map native values to normalized coordinates without clamping.

        Works on a single vector or a stack of row vectors. Out-of-bounds
        inputs map outside [0, 1] (used for unaudited regions).
        """
        x = np.asarray(values, dtype=float)
        self._check(x.shape[-1], "vector")
        lo, hi = self.lower, self.upper
        z = (x - lo) / (hi - lo)
        if self._log.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                zl = (np.log(x) - np.log(lo)) / (np.log(hi) - np.log(lo))
            z = np.where(self._log, zl, z)
        return z

    def from_unit(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check(z.shape[-1], "vector")
        lo, hi = self.lower, self.upper
        x = lo + z * (hi - lo)
        if self._log.any():
            xl = np.exp(np.log(lo) + z * (np.log(hi) - np.log(lo)))
            x = np.where(self._log, xl, x)
        return x

    def full_region(self) -> "Region":
        return Region(tuple(zip(self.lower.tolist(), self.upper.tolist())))


@dataclass(frozen=True)
class Region:
    """Per-parameter (lo, hi) ranges, aligned with a ParameterSpace.

    A region may be unaudited (anything goes) or legal; ``is_legal`` tells.
    """

    ranges: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "ranges", tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        )

    def __len__(self):
        return len(self.ranges)

    @property
    def lows(self) -> np.ndarray:
        return np.array([r[0] for r in self.ranges])

    @property
    def highs(self) -> np.ndarray:
        return np.array([r[1] for r in self.ranges])

    def is_legal(self, space: ParameterSpace) -> bool:
        if len(self) != space.dim:
            return False
        lo, hi = self.lows, self.highs
        return bool(np.all(space.lower <= lo) and np.all(lo <= hi) and np.all(hi <= space.upper))

    def contains(self, point: "DesignPoint") -> bool:
        v = np.asarray(point.values)
        return bool(np.all(self.lows <= v) and np.all(v <= self.highs))

    def unit_bounds(self, space: ParameterSpace) -> tuple[np.ndarray, np.ndarray]:
        space._check(len(self), "region")
        return space.to_unit(self.lows), space.to_unit(self.highs)

    def to_dict(self, space: ParameterSpace) -> dict[str, list[float]]:
        return {n: [lo, hi] for n, (lo, hi) in zip(space.names, self.ranges)}


@dataclass(frozen=True)
class DesignPoint:
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    @classmethod
    def checked(cls, values: Sequence[float], space: ParameterSpace) -> "DesignPoint":
        point = cls(tuple(values))
        space._check(len(point), "design point")
        v = np.asarray(point.values)
        if not (np.all(space.lower <= v) and np.all(v <= space.upper)):
            bad = [n for n, x, lo, hi in zip(space.names, v, space.lower, space.upper) if not lo <= x <= hi]
            raise ValidationError(f"design point out of global bounds on: {', '.join(bad)}")
        return point


@dataclass(frozen=True)
class Measurements:
    gain_db: float
    ugbw_hz: float
    pm_deg: float
    power_w: float
    sim_valid: bool
    # short failure reason when sim_valid is false
    reason: str = ""

    @classmethod
    def invalid(cls, reason: str) -> "Measurements":
        nan = float("nan")
        return cls(nan, nan, nan, nan, False, reason)

    def to_dict(self) -> dict:
        d = {
            "gain_db": self.gain_db,
            "ugbw_hz": self.ugbw_hz,
            "pm_deg": self.pm_deg,
            "power_w": self.power_w,
            "sim_valid": self.sim_valid,
        }
        if not self.sim_valid:
            d = {k: (None if k != "sim_valid" else False) for k in d}
            d["reason"] = self.reason
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Measurements":
        if not d["sim_valid"]:
            return cls.invalid(d.get("reason", ""))
        return cls(d["gain_db"], d["ugbw_hz"], d["pm_deg"], d["power_w"], True)


@dataclass(frozen=True)
class SpecTargets:
    gain_db: float
    ugbw_hz: float
    pm_deg: float
    power_w: float

    def __post_init__(self):
        for name in ("gain_db", "ugbw_hz", "pm_deg", "power_w"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"target {name} must be strictly positive, got {v}")

    def to_dict(self) -> dict:
        return {
            "gain_db": self.gain_db,
            "ugbw_hz": self.ugbw_hz,
            "pm_deg": self.pm_deg,
            "power_w": self.power_w,
        }


@dataclass(frozen=True)
class EvaluationRecord:
    step: int
    round: int
    point: DesignPoint
    meas: Measurements
    fom: Optional[float]
    phys_feasible: bool

    def __post_init__(self):
        if (self.fom is not None) != self.meas.sim_valid:
            raise ValidationError(f"step {self.step}: fom must be present iff the simulation is valid")
        if self.phys_feasible and not self.meas.sim_valid:
            raise ValidationError(f"step {self.step}: physically feasible record must be sim-valid")

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "round": self.round,
            "values": list(self.point.values),
            "meas": self.meas.to_dict(),
            "fom": self.fom,
            "phys_feasible": self.phys_feasible,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(
            step=d["step"],
            round=d["round"],
            point=DesignPoint(tuple(d["values"])),
            meas=Measurements.from_dict(d["meas"]),
            fom=d["fom"],
            phys_feasible=d["phys_feasible"],
        )


def rank_key(rec: EvaluationRecord):
    """Sort key: higher fom first, earlier step wins ties."""
    return (-rec.fom, rec.step)


@dataclass(frozen=True)
class RoundSummary:
    round: int
    best_record: Optional[EvaluationRecord]
    top_records: tuple[EvaluationRecord, ...]
    critic_memo: str
    # name -> (min, max, mean) over the round's feasible points
    stats: dict = field(default_factory=dict)
    # (attempted, sim_valid, phys_feasible)
    counts: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        foms = [r.fom for r in self.top_records]
        if any(f is None for f in foms) or foms != sorted(foms, reverse=True):
            raise ValidationError("top_records must be valid and sorted by descending fom")

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "best_record": self.best_record.to_dict() if self.best_record else None,
            "top_records": [r.to_dict() for r in self.top_records],
            "critic_memo": self.critic_memo,
            "stats": {k: list(v) for k, v in self.stats.items()},
            "counts": list(self.counts),
        }


def normalize(point: DesignPoint, space: ParameterSpace) -> np.ndarray:
    """Map an in-bounds design point onto the unit cube."""
    space._check(len(point), "design point")
    z = space.to_unit(point.values)
    # absorb rounding at the edges so the [0, 1] contract holds exactly
    return np.clip(z, 0.0, 1.0)


def denormalize(z, space: ParameterSpace) -> DesignPoint:
    x = space.from_unit(np.clip(np.asarray(z, dtype=float), 0.0, 1.0))
    x = np.clip(x, space.lower, space.upper)
    return DesignPoint(tuple(x.tolist()))


def clip_region(region: Region, space: ParameterSpace) -> Region:
    """Swap reversed pairs, then clamp every range into the global bounds.

    The result is legal except that a range may have zero width.
    """
    space._check(len(region), "region")
    out = []
    for (lo, hi), p in zip(region.ranges, space):
        if lo > hi:
            lo, hi = hi, lo
        lo = min(max(lo, p.lower), p.upper)
        hi = min(max(hi, p.lower), p.upper)
        out.append((lo, hi))
    return Region(tuple(out))
