from .base import (
    ActorFailure,
    AgentContext,
    AgentFailure,
    AuditResult,
    CriticFailure,
    ProposedRegion,
)
from .heuristic import EPS_MIN, HeuristicActor, HeuristicCritic, repair_region, stagnated
from .llm import LLMActor, LLMCritic
from .prompts import (
    ParseError,
    PromptTemplates,
    build_actor_prompt,
    build_critic_prompt,
    parse_audit_response,
    parse_region_response,
)
from .summary import summarize_round

__all__ = [
    "ActorFailure",
    "AgentContext",
    "AgentFailure",
    "AuditResult",
    "CriticFailure",
    "EPS_MIN",
    "HeuristicActor",
    "HeuristicCritic",
    "LLMActor",
    "LLMCritic",
    "ParseError",
    "PromptTemplates",
    "ProposedRegion",
    "build_actor_prompt",
    "build_critic_prompt",
    "parse_audit_response",
    "parse_region_response",
    "repair_region",
    "stagnated",
    "summarize_round",
]
