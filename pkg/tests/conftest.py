import pytest

from acof.core import ParameterSpace, ParameterSpec, SpecTargets
from acof.evaluators import EvaluatorSpec
from acof.orchestrator import RunConfig

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[str, str] = {}


def opamp_space(dim: int = 6) -> ParameterSpace:
    specs = []
    for i in range(dim):
        if i % 3 == 2:
            specs.append(ParameterSpec(f"i{i}", 1e-6, 1e-4, "A", "log"))
        else:
            specs.append(ParameterSpec(f"w{i}", 1e-6, 2e-5, "m"))
    return ParameterSpace(specs)


def unit_space(dim: int) -> ParameterSpace:
    return ParameterSpace([ParameterSpec(f"x{i}", 0.0, 1.0) for i in range(dim)])


TARGETS = SpecTargets(85.0, 9.0e8, 100.0, 5.54e-4)


def small_config(mode="acof", seed=0, rounds=2, seed_budget=40, round_budget=20, kind="synthetic_opamp",
                 space=None, **kw) -> RunConfig:
    return RunConfig(
        mode=mode,
        space=space or opamp_space(),
        targets=TARGETS,
        evaluator=EvaluatorSpec(kind),
        seed_budget=seed_budget,
        round_budget=round_budget,
        rounds=rounds,
        batch=10,
        pool_size=256,
        seed=seed,
        **kw,
    )


@pytest.fixture
def space6():
    return opamp_space(6)


@pytest.fixture
def targets():
    return TARGETS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
