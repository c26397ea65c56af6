"""LLM-backed actor and critic with parse-retry."""

from __future__ import annotations

from typing import Optional

from ..llmclient import LLMClient, TranscriptEntry, TransportError
from .base import ActorFailure, AgentContext, AuditResult, CriticFailure, ProposedRegion
from .heuristic import EPS_MIN, repair_region
from .prompts import (
    MEMO_WINDOW,
    ParseError,
    PromptTemplates,
    build_actor_prompt,
    build_critic_prompt,
    parse_audit_response,
    parse_region_response,
)


class _LLMAgent:
    failure = RuntimeError

    def __init__(self, client: LLMClient, templates: Optional[PromptTemplates] = None, max_retries: int = 3,
                 memo_window: int = MEMO_WINDOW, circuit: str = ""):
        self.client = client
        self.templates = templates or PromptTemplates.load()
        self.max_retries = max_retries
        self.memo_window = memo_window
        self.circuit = circuit

    def _ask(self, messages: list[dict], parse):
        messages = list(messages)
        raw = None
        for _ in range(self.max_retries):
            req = self.client.request(messages)
            try:
                raw = self.client.complete(req)
            except TransportError as exc:
                raise self.failure(str(exc), raw) from exc
            try:
                return parse(raw)
            except ParseError as exc:
                self.client.transcript.append(TranscriptEntry(req.digest(), raw, 0.0, "parse_retry"))
                messages += [
                    {"role": "assistant", "content": raw},
                    {"role": "user", "content": f"Your reply could not be used ({exc}). "
                                                "Reply with only the JSON object described above."},
                ]
        raise self.failure(f"no parseable reply after {self.max_retries} attempts", raw)


class LLMActor(_LLMAgent):
    failure = ActorFailure

    def propose(self, ctx: AgentContext) -> ProposedRegion:
        messages = build_actor_prompt(ctx, self.templates, self.memo_window, self.circuit)
        return self._ask(messages, lambda text: parse_region_response(text, ctx.space))


class LLMCritic(_LLMAgent):
    """The reply is never trusted to be legal: it goes through the same repair."""

    failure = CriticFailure

    def __init__(self, *args, eps_min: float = EPS_MIN, **kwargs):
        super().__init__(*args, **kwargs)
        self.eps_min = eps_min

    def audit(self, proposal: ProposedRegion, ctx: AgentContext) -> AuditResult:
        messages = build_critic_prompt(proposal, ctx, self.templates, self.memo_window, self.circuit)
        payload = self._ask(messages, lambda text: parse_audit_response(text, ctx.space))
        corrected = payload.region or proposal.region
        region, legality = repair_region(corrected, ctx.space, self.eps_min)
        legality = dict(legality)
        repairs = []
        for name, new, old, asked in zip(ctx.space.names, region.ranges, proposal.region.ranges, corrected.ranges):
            if new == old:
                continue
            reasons = []
            if asked != old:
                reasons.append("critic correction")
            if name in legality:
                reasons.append(legality[name])
            repairs.append((name, "; ".join(reasons) or "critic correction"))
        return AuditResult(not repairs, region, payload.memo, tuple(repairs))
