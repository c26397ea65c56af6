"""Design-point evaluators: synthetic surrogates and an ngspice batch adapter.

Every evaluator maps a ``DesignPoint`` to ``Measurements``. Simulation
pathologies never raise; they come back as ``sim_valid=False`` with a reason.
Only structural problems (wrong vector length) raise.
"""

from __future__ import annotations

import math
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .core import DesignPoint, Measurements, ParameterSpace, SpecTargets, StructuralError

MEAS_FIELDS = ("gain_db", "ugbw_hz", "pm_deg", "power_w")
EVALUATOR_KINDS = ("synthetic_opamp", "multi_pocket", "ngspice")


class TemplateError(ValueError):
    pass


class EvaluatorUnavailable(RuntimeError):
    """The evaluator cannot run at all (e.g. simulator binary missing)."""


class Evaluator:
    """Base class. Subclasses implement ``_measure`` on normalized input."""

    replayable = True

    def __init__(self, space: ParameterSpace):
        self.space = space

    def evaluate(self, point: DesignPoint) -> Measurements:
        return self.evaluate_with_transcript(point)[0]

    def evaluate_with_transcript(self, point: DesignPoint) -> tuple[Measurements, Optional[str]]:
        if len(point) != self.space.dim:
            raise StructuralError(f"design point has length {len(point)}, space has {self.space.dim}")
        return self._measure(point), None

    def _measure(self, point: DesignPoint) -> Measurements:
        raise NotImplementedError

    def check_available(self):
        pass


def _group_means(z: np.ndarray, groups: int = 3) -> list[float]:
    return [float(np.mean(z[g::groups])) for g in range(groups)]


class SyntheticOpamp(Evaluator):
    """Smooth op-amp-like surrogate with coupled gain/bandwidth/power trade-offs.

    Parameters are split round-robin into three groups whose normalized means
    a, b, c act as gain, bias and compensation knobs. ``a < 0.05`` is a hard
    simulator-failure pocket.
    """

    def __init__(self, space: ParameterSpace):
        if space.dim < 3:
            raise StructuralError("synthetic_opamp needs at least 3 parameters")
        super().__init__(space)

    def _measure(self, point):
        z = np.clip(self.space.to_unit(point.values), 0.0, 1.0)
        a, b, c = _group_means(z)
        if a < 0.05:
            return Measurements.invalid("synthetic failure trap (a < 0.05)")
        gain = 110.0 * a - 20.0 * a * b
        ugbw = 1e9 * b * (0.5 + c)
        pm = 160.0 * c * (1.0 - 0.4 * b)
        power = 1e-3 * (0.1 + 0.9 * b + 0.2 * a)
        return Measurements(gain, ugbw, pm, power, True)


class MultiPocket(Evaluator):
    """Everything at target except gain, which peaks in three separated pockets."""

    width = 0.15

    def __init__(self, space: ParameterSpace, targets: SpecTargets):
        super().__init__(space)
        self.targets = targets
        d = space.dim
        alt = np.arange(d) % 2 == 0
        self.centers = np.array(
            [
                np.full(d, 0.2),
                np.where(alt, 0.8, 0.2),
                np.where(alt, 0.5, 0.9),
            ]
        )

    def _measure(self, point):
        z = np.clip(self.space.to_unit(point.values), 0.0, 1.0)
        sq = np.sum((z - self.centers) ** 2, axis=1)
        g = float(np.max(np.exp(-sq / (2 * self.width**2))))
        t = self.targets
        return Measurements(t.gain_db * g, t.ugbw_hz, t.pm_deg, t.power_w, True)


_PLACEHOLDER = re.compile(r"\{([A-Za-z_]\w*)\}")


@dataclass(frozen=True)
class NetlistTemplate:
    body: str
    # simulator measurement name -> (Measurements field, multiplier)
    measurement_map: Mapping[str, tuple[str, float]]
    required_params: frozenset = field(default=frozenset())

    def __post_init__(self):
        found = frozenset(_PLACEHOLDER.findall(self.body))
        if not self.required_params:
            object.__setattr__(self, "required_params", found)
        missing = set(self.required_params) - found
        if missing:
            raise TemplateError(f"required params not in template body: {', '.join(sorted(missing))}")
        mmap = normalize_measurement_map(self.measurement_map)
        object.__setattr__(self, "measurement_map", mmap)

    @classmethod
    def from_file(cls, path, measurement_map) -> "NetlistTemplate":
        return cls(Path(path).read_text(), measurement_map)


def normalize_measurement_map(mmap) -> dict[str, tuple[str, float]]:
    """Accept ``{sim_name: field}`` or ``{sim_name: [field, multiplier]}``."""
    out = {}
    for name, spec in mmap.items():
        if isinstance(spec, str):
            fld, mult = spec, 1.0
        elif isinstance(spec, Mapping):
            fld, mult = spec["field"], float(spec.get("scale", 1.0))
        else:
            fld, mult = spec[0], float(spec[1])
        if fld not in MEAS_FIELDS:
            raise TemplateError(f"measurement {name!r} maps to unknown field {fld!r}")
        out[str(name).lower()] = (fld, mult)
    covered = {f for f, _ in out.values()}
    if covered != set(MEAS_FIELDS):
        raise TemplateError(f"measurement map does not cover: {', '.join(sorted(set(MEAS_FIELDS) - covered))}")
    return out


def format_value(v: float) -> str:
    """Shortest round-trip scientific notation, e.g. 2e-6, 1.5e-7."""
    return np.format_float_scientific(float(v), trim="-", exp_digits=1)


def render_netlist(template: NetlistTemplate, point: DesignPoint, space: ParameterSpace) -> str:
    if len(point) != space.dim:
        raise StructuralError(f"design point has length {len(point)}, space has {space.dim}")
    values = dict(zip(space.names, point.values))

    def sub(m):
        name = m.group(1)
        if name not in values:
            raise TemplateError(name)
        return format_value(values[name])

    return _PLACEHOLDER.sub(sub, template.body)


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?nan|[-+]?inf(?:inity)?"
_MEAS_LINE = re.compile(rf"^\s*([A-Za-z_][\w.]*)\s*=\s*({_NUM})", re.IGNORECASE | re.MULTILINE)


def parse_measurements(simulator_output: str, measurement_map) -> Measurements:
    """Read ``name = value`` lines (ngspice ``.meas`` style). Never raises."""
    try:
        mmap = normalize_measurement_map(measurement_map)
    except (TemplateError, KeyError, TypeError, ValueError) as exc:
        return Measurements.invalid(f"bad measurement map: {exc}")
    seen: dict[str, float] = {}
    for m in _MEAS_LINE.finditer(simulator_output or ""):
        name = m.group(1).lower()
        # first occurrence wins
        if name in mmap and name not in seen:
            seen[name] = float(m.group(2))
    fields = {}
    for name, (fld, mult) in mmap.items():
        if name not in seen:
            return Measurements.invalid(f"missing measurement: {name}")
        v = seen[name] * mult
        if not math.isfinite(v):
            return Measurements.invalid(f"non-finite measurement: {name}")
        fields[fld] = v
    return Measurements(fields["gain_db"], fields["ugbw_hz"], fields["pm_deg"], fields["power_w"], True)


class NgspiceEvaluator(Evaluator):
    """Run ngspice in batch mode on a rendered netlist, one temp dir per call."""

    replayable = False

    def __init__(self, space: ParameterSpace, template: NetlistTemplate,
                 executable: str = "ngspice", timeout: float = 60.0):
        super().__init__(space)
        if not timeout > 0:
            raise ValueError("ngspice timeout must be > 0")
        missing = set(template.required_params) - set(space.names)
        if missing:
            raise TemplateError(", ".join(sorted(missing)))
        self.template = template
        self.executable = executable
        self.timeout = timeout

    def check_available(self):
        if shutil.which(self.executable) is None:
            raise EvaluatorUnavailable(f"simulator executable not found: {self.executable}")

    def evaluate_with_transcript(self, point):
        if len(point) != self.space.dim:
            raise StructuralError(f"design point has length {len(point)}, space has {self.space.dim}")
        netlist = render_netlist(self.template, point, self.space)
        with tempfile.TemporaryDirectory(prefix="acof-sim-") as tmp:
            path = Path(tmp) / "circuit.cir"
            path.write_text(netlist)
            try:
                proc = subprocess.run(
                    [self.executable, "-b", str(path)],
                    cwd=tmp,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except subprocess.TimeoutExpired as exc:
                out = (exc.stdout or b"")
                out = out.decode(errors="replace") if isinstance(out, bytes) else out
                return Measurements.invalid(f"timeout after {self.timeout}s"), out
            except OSError as exc:
                return Measurements.invalid(f"could not start simulator: {exc}"), ""
        transcript = proc.stdout + proc.stderr
        if proc.returncode != 0:
            return Measurements.invalid(f"simulator exited with status {proc.returncode}"), transcript
        return parse_measurements(proc.stdout, self.template.measurement_map), transcript


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str
    settings: Mapping = field(default_factory=dict)
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.kind not in EVALUATOR_KINDS:
            raise ValueError(f"unknown evaluator kind {self.kind!r}")
        if self.kind == "ngspice" and not (self.timeout and self.timeout > 0):
            raise ValueError("ngspice evaluator needs timeout > 0")


def make_evaluator(spec: EvaluatorSpec, space: ParameterSpace, targets: SpecTargets) -> Evaluator:
    if spec.kind == "synthetic_opamp":
        return SyntheticOpamp(space)
    if spec.kind == "multi_pocket":
        return MultiPocket(space, targets)
    s = spec.settings
    template = NetlistTemplate.from_file(s["template"], s["measurement_map"])
    return NgspiceEvaluator(space, template, s.get("executable", "ngspice"), spec.timeout)
