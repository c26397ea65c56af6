import os
import stat
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acof.core import DesignPoint, ParameterSpace, ParameterSpec, StructuralError
from acof.evaluators import (
    EvaluatorSpec,
    EvaluatorUnavailable,
    MultiPocket,
    NetlistTemplate,
    NgspiceEvaluator,
    SyntheticOpamp,
    TemplateError,
    format_value,
    make_evaluator,
    parse_measurements,
    render_netlist,
)

from conftest import TARGETS, unit_space

MMAP = {"gain": "gain_db", "ugbw": "ugbw_hz", "pm": "pm_deg", "pwr": ["power_w", -1.0]}
BODY = "* amp\nM1 d g s b nmos W={w1} L={l1}\nIb x 0 {ib}\n.end\n"


def point(space, z):
    return DesignPoint(tuple(space.from_unit(np.asarray(z, dtype=float)).tolist()))


def test_format_value_is_shortest():
    assert format_value(2e-6) == "2e-6"
    assert format_value(1.5e-7) == "1.5e-7"
    assert float(format_value(0.1 + 0.2)) == 0.1 + 0.2


def test_render_substitutes_and_reports_missing():
    space = ParameterSpace([ParameterSpec("w1", 1e-6, 1e-5), ParameterSpec("l1", 1e-7, 1e-6),
                            ParameterSpec("ib", 1e-6, 1e-4)])
    t = NetlistTemplate(BODY, MMAP)
    assert t.required_params == {"w1", "l1", "ib"}
    text = render_netlist(t, DesignPoint((2e-6, 1.5e-7, 1e-5)), space)
    assert "W=2e-6 L=1.5e-7" in text and "{" not in text
    other = ParameterSpace([ParameterSpec("w1", 1e-6, 1e-5), ParameterSpec("l1", 1e-7, 1e-6),
                            ParameterSpec("rz", 1, 2)])
    with pytest.raises(TemplateError, match="ib"):
        render_netlist(t, DesignPoint((2e-6, 1.5e-7, 1.5)), other)
    with pytest.raises(StructuralError):
        render_netlist(t, DesignPoint((2e-6,)), space)


def test_measurement_map_must_cover_all_fields():
    with pytest.raises(TemplateError, match="power_w"):
        NetlistTemplate(BODY, {"gain": "gain_db", "ugbw": "ugbw_hz", "pm": "pm_deg"})


def test_parse_measurements_cases():
    out = "noise\ngain = 6.5e1\nUGBW = 1.2e+08 at=3\npm = 75\npwr = -2.0e-4\npm = 10\n"
    m = parse_measurements(out, MMAP)
    assert m.sim_valid
    assert (m.gain_db, m.ugbw_hz, m.pm_deg, m.power_w) == (65.0, 1.2e8, 75.0, 2.0e-4)
    m = parse_measurements("gain = 60\nugbw = 1e8\npwr = -1e-4\n", MMAP)
    assert not m.sim_valid and m.reason == "missing measurement: pm"
    m = parse_measurements("gain = nan\nugbw = 1e8\npm = 3\npwr = -1e-4\n", MMAP)
    assert not m.sim_valid and "non-finite" in m.reason
    assert not parse_measurements("", MMAP).sim_valid
    assert not parse_measurements(None, MMAP).sim_valid


@given(st.text(max_size=400))
@settings(max_examples=200, deadline=None)
def test_parse_never_raises(text):
    parse_measurements(text, MMAP)


def test_synthetic_opamp_closed_form():
    space = unit_space(6)
    ev = SyntheticOpamp(space)
    # groups: a=(z0,z3), b=(z1,z4), c=(z2,z5)
    m = ev.evaluate(point(space, [0.6, 0.5, 0.25, 0.4, 0.3, 0.75]))
    a, b, c = 0.5, 0.4, 0.5
    assert m.gain_db == pytest.approx(110 * a - 20 * a * b)
    assert m.ugbw_hz == pytest.approx(1e9 * b * (0.5 + c))
    assert m.pm_deg == pytest.approx(160 * c * (1 - 0.4 * b))
    assert m.power_w == pytest.approx(1e-3 * (0.1 + 0.9 * b + 0.2 * a))
    trapped = ev.evaluate(point(space, [0.01, 0.5, 0.5, 0.02, 0.5, 0.5]))
    assert not trapped.sim_valid


def test_synthetic_needs_three_params():
    with pytest.raises(StructuralError):
        SyntheticOpamp(unit_space(2))


def test_multi_pocket_peaks_at_centers():
    space = unit_space(12)
    ev = MultiPocket(space, TARGETS)
    for c in ev.centers:
        m = ev.evaluate(point(space, c))
        assert m.gain_db == pytest.approx(TARGETS.gain_db)
        assert m.ugbw_hz == TARGETS.ugbw_hz and m.power_w == TARGETS.power_w
    far = ev.evaluate(point(space, np.full(12, 0.99)))
    assert far.gain_db < 0.01 * TARGETS.gain_db


def test_evaluate_rejects_wrong_dimension():
    ev = SyntheticOpamp(unit_space(6))
    with pytest.raises(StructuralError):
        ev.evaluate(DesignPoint((0.5, 0.5)))


FAKE = """\
#!{python}
import sys, re, time
text = open(sys.argv[-1]).read()
w = float(re.search(r"W=(\\S+)", text).group(1))
if "MODE=fail" in text:
    print("fatal error"); sys.exit(1)
if "MODE=hang" in text:
    time.sleep(10)
if "MODE=partial" in text:
    print("gain = 50"); sys.exit(0)
print("gain = %r" % (1e7 * w))
print("ugbw = 1e8")
print("pm = 60")
print("pwr = -1e-4")
"""


@pytest.fixture
def fake_ngspice(tmp_path):
    exe = tmp_path / "fake-ngspice"
    exe.write_text(FAKE.format(python=sys.executable))
    exe.chmod(exe.stat().st_mode | stat.S_IEXEC)
    return str(exe)


def _ngspice(exe, mode="ok", timeout=5.0):
    space = ParameterSpace([ParameterSpec("w1", 1e-6, 1e-5), ParameterSpec("l1", 1e-7, 1e-6),
                            ParameterSpec("ib", 1e-6, 1e-4)])
    body = f"* MODE={mode}\n" + BODY
    return space, NgspiceEvaluator(space, NetlistTemplate(body, MMAP), exe, timeout)


def test_ngspice_adapter_success(fake_ngspice):
    space, ev = _ngspice(fake_ngspice)
    ev.check_available()
    m, transcript = ev.evaluate_with_transcript(DesignPoint((5e-6, 2e-7, 1e-5)))
    assert m.sim_valid and m.gain_db == pytest.approx(50.0) and m.power_w == 1e-4
    assert "gain" in transcript
    assert not ev.replayable


@pytest.mark.parametrize("mode,reason", [("fail", "status 1"), ("partial", "missing measurement"),
                                         ("hang", "timeout")])
def test_ngspice_adapter_failures(fake_ngspice, mode, reason):
    space, ev = _ngspice(fake_ngspice, mode, timeout=1.0)
    m = ev.evaluate(DesignPoint((5e-6, 2e-7, 1e-5)))
    assert not m.sim_valid and reason in m.reason


def test_ngspice_missing_executable():
    space, ev = _ngspice("/nonexistent/ngspice-xyz")
    with pytest.raises(EvaluatorUnavailable):
        ev.check_available()


def test_template_param_not_in_space(fake_ngspice):
    space = ParameterSpace([ParameterSpec("w1", 1e-6, 1e-5)])
    with pytest.raises(TemplateError, match="ib"):
        NgspiceEvaluator(space, NetlistTemplate(BODY, MMAP), fake_ngspice, 5.0)


def test_make_evaluator_and_spec_validation(tmp_path, fake_ngspice):
    space = unit_space(6)
    assert isinstance(make_evaluator(EvaluatorSpec("synthetic_opamp"), space, TARGETS), SyntheticOpamp)
    assert isinstance(make_evaluator(EvaluatorSpec("multi_pocket"), space, TARGETS), MultiPocket)
    with pytest.raises(ValueError):
        EvaluatorSpec("ngspice", {}, None)
    with pytest.raises(ValueError):
        EvaluatorSpec("hspice")
    tpl = tmp_path / "amp.cir"
    tpl.write_text("* {x0} {x1}\n")
    ev = make_evaluator(EvaluatorSpec("ngspice", {"template": str(tpl), "measurement_map": MMAP,
                                                  "executable": fake_ngspice}, 2.0), space, TARGETS)
    assert isinstance(ev, NgspiceEvaluator)
