"""Prompt construction and structured-response parsing for LLM agents."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional

from ..core import EvaluationRecord, ParameterSpace, Region, RoundSummary, rank_key
from .base import AgentContext, ProposedRegion

TEMPLATE_NAMES = ("actor_system", "actor_user", "critic_system", "critic_user")
MEMO_WINDOW = 5
MEAS_COLUMNS = ("gain_db", "ugbw_hz", "pm_deg", "power_w")


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplates:
    texts: dict

    @classmethod
    def load(cls, directory: Optional[str] = None) -> "PromptTemplates":
        texts = {}
        for name in TEMPLATE_NAMES:
            if directory is None:
                texts[name] = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text()
            else:
                texts[name] = (Path(directory) / f"{name}.txt").read_text()
        return cls(texts)

    def hashes(self) -> dict[str, str]:
        return {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(self.texts.items())}

    def render(self, name: str, **values) -> str:
        return Template(self.texts[name]).substitute(values)


def fmt(x) -> str:
    """Four significant digits."""
    if x is None:
        return "n/a"
    return f"{x:.4g}"


def param_table(space: ParameterSpace) -> str:
    return "\n".join(f"{p.name} | {p.unit or '-'} | {p.scale} | {fmt(p.lower)} | {fmt(p.upper)}" for p in space)


def targets_line(ctx: AgentContext) -> str:
    t = ctx.targets
    return (
        f"gain >= {fmt(t.gain_db)} dB, UGBW >= {fmt(t.ugbw_hz)} Hz, "
        f"PM >= {fmt(t.pm_deg)} deg, power <= {fmt(t.power_w)} W"
    )


def design_table(records, space: ParameterSpace) -> str:
    header = " | ".join(["step", *space.names, *MEAS_COLUMNS, "fom"])
    rows = [header]
    for r in records:
        meas = [getattr(r.meas, c) for c in MEAS_COLUMNS]
        rows.append(" | ".join([str(r.step), *map(fmt, r.point.values), *map(fmt, meas), fmt(r.fom)]))
    return "\n".join(rows)


def evidence_block(ctx: AgentContext, top_k: int = 10) -> str:
    if ctx.calibration_records is not None:
        valid = sorted((r for r in ctx.calibration_records if r.fom is not None), key=rank_key)[:top_k]
        n = len(ctx.calibration_records)
        if not valid:
            return f"Calibration set: {n} designs, none simulated successfully."
        return f"Top calibration designs ({len(valid)} of {n}):\n" + design_table(valid, ctx.space)
    s: RoundSummary = ctx.previous_summary
    attempted, valid, feasible = s.counts
    lines = [f"Round {s.round} summary: {attempted} attempted, {valid} sim-valid, {feasible} physically feasible."]
    if s.best_record is not None:
        lines.append(f"Best design so far (fom {fmt(s.best_record.fom)}):")
        lines.append(design_table([s.best_record], ctx.space))
    if s.top_records:
        lines.append(f"Strongest designs of round {s.round}:")
        lines.append(design_table(s.top_records, ctx.space))
    else:
        lines.append(f"No usable designs in round {s.round}.")
    return "\n".join(lines)


def memo_block(ctx: AgentContext, window: int) -> str:
    memos = list(ctx.accumulated_memos)[-window:] if window > 0 else []
    return "\n".join(f"- {m}" for m in memos) if memos else "(none)"


def build_actor_prompt(ctx: AgentContext, templates: Optional[PromptTemplates] = None,
                       memo_window: int = MEMO_WINDOW, circuit: str = "") -> list[dict]:
    templates = templates or PromptTemplates.load()
    user = templates.render(
        "actor_user",
        circuit=circuit or "(unspecified topology)",
        round=ctx.round,
        param_table=param_table(ctx.space),
        targets=targets_line(ctx),
        evidence=evidence_block(ctx),
        memos=memo_block(ctx, memo_window),
    )
    return [
        {"role": "system", "content": templates.texts["actor_system"]},
        {"role": "user", "content": user},
    ]


def build_critic_prompt(proposal: ProposedRegion, ctx: AgentContext, templates: Optional[PromptTemplates] = None,
                        memo_window: int = MEMO_WINDOW, circuit: str = "") -> list[dict]:
    templates = templates or PromptTemplates.load()
    rows = []
    for p, (lo, hi) in zip(ctx.space, proposal.region.ranges):
        rows.append(f"{p.name} | {p.unit or '-'} | {fmt(p.lower)} | {fmt(p.upper)} | {fmt(lo)} | {fmt(hi)}")
    user = templates.render(
        "critic_user",
        circuit=circuit or "(unspecified topology)",
        round=ctx.round,
        proposal_table="\n".join(rows),
        rationale=proposal.rationale or "(none)",
        targets=targets_line(ctx),
        evidence=evidence_block(ctx),
        memos=memo_block(ctx, memo_window),
    )
    return [
        {"role": "system", "content": templates.texts["critic_system"]},
        {"role": "user", "content": user},
    ]


def extract_json_object(text: str) -> dict:
    """First top-level JSON object in free text (prose and code fences tolerated)."""
    decoder = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            return obj
        i = text.find("{", i + 1)
    raise ParseError("no JSON object found")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _ranges(obj, space: ParameterSpace, key: str) -> Region:
    ranges = obj.get(key)
    if not isinstance(ranges, dict):
        raise ParseError(f"missing: {key}")
    out = []
    for name in space.names:
        if name not in ranges:
            raise ParseError(f"missing: {name}")
        pair = ranges[name]
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise ParseError(f"{name}: expected a two-element array")
        if not all(_is_number(v) for v in pair):
            raise ParseError(f"{name}: non-numeric entry")
        out.append((float(pair[0]), float(pair[1])))
    return Region(tuple(out))


def parse_region_response(text: str, space: ParameterSpace) -> ProposedRegion:
    obj = extract_json_object(text)
    region = _ranges(obj, space, "ranges")
    rationale = obj.get("rationale", "")
    return ProposedRegion(region, rationale if isinstance(rationale, str) else json.dumps(rationale))


@dataclass(frozen=True)
class AuditPayload:
    approved: bool
    # None when an approving critic omitted the ranges
    region: Optional[Region]
    memo: str


def parse_audit_response(text: str, space: ParameterSpace) -> AuditPayload:
    obj = extract_json_object(text)
    if "approved" not in obj:
        raise ParseError("missing: approved")
    if not isinstance(obj["approved"], bool):
        raise ParseError("approved: expected a boolean")
    if "memo" not in obj:
        raise ParseError("missing: memo")
    region = None
    if obj["approved"] and "corrected_ranges" not in obj:
        region = None
    else:
        region = _ranges(obj, space, "corrected_ranges")
    return AuditPayload(obj["approved"], region, str(obj["memo"]))
