from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

from ..core import EvaluationRecord, ParameterSpace, Region, RoundSummary, SpecTargets


class AgentFailure(RuntimeError):
    """An agent could not produce a usable answer; carries the last raw reply."""

    def __init__(self, message: str, last_response: Optional[str] = None):
        super().__init__(message)
        self.last_response = last_response


class ActorFailure(AgentFailure):
    pass


class CriticFailure(AgentFailure):
    pass


@dataclass(frozen=True)
class ProposedRegion:
    region: Region  # unaudited
    rationale: str = ""


@dataclass(frozen=True)
class AuditResult:
    approved_as_is: bool
    region: Region  # legal
    memo: str
    repairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.approved_as_is != (not self.repairs):
            raise ValueError("approved_as_is must hold exactly when no repairs were made")


@dataclass(frozen=True)
class AgentContext:
    space: ParameterSpace
    targets: SpecTargets
    round: int
    previous_summary: Optional[RoundSummary] = None
    calibration_records: Optional[tuple[EvaluationRecord, ...]] = None
    accumulated_memos: tuple[str, ...] = ()
    # global best fom at the end of seeding and of each completed round
    best_history: tuple[Optional[float], ...] = field(default=())

    def __post_init__(self):
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if (self.round == 1) != (self.calibration_records is not None):
            raise ValueError("calibration records are given in round 1 and only then")
        if self.round > 1 and self.previous_summary is None:
            raise ValueError("rounds after the first need the previous summary")


class Actor(Protocol):
    def propose(self, ctx: AgentContext) -> ProposedRegion: ...


class Critic(Protocol):
    def audit(self, proposal: ProposedRegion, ctx: AgentContext) -> AuditResult: ...
