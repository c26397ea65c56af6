"""Append-only JSON-lines run log."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import EvaluationRecord

logger = logging.getLogger(__name__)

EVENT_KINDS = (
    "config_snapshot",
    "seed_eval",
    "round_start",
    "actor_proposal",
    "critic_audit",
    "batch",
    "eval",
    "round_summary",
    "agent_fallback",
    "run_end",
)
EVAL_KINDS = ("seed_eval", "eval")


class LogError(ValueError):
    pass


class RunLogWriter:
    """Single writer; every line is flushed before the next event is accepted."""

    def __init__(self, path, timestamps: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")
        self.timestamps = timestamps
        self.seq = 0

    def write(self, kind: str, payload: dict):
        if kind not in EVENT_KINDS:
            raise LogError(f"unknown event kind {kind!r}")
        self.seq += 1
        rec = {"seq": self.seq, "kind": kind}
        if self.timestamps:
            rec["ts"] = round(time.time(), 6)
        rec["payload"] = payload
        self._fh.write(json.dumps(rec, allow_nan=False, default=_default) + "\n")
        self._fh.flush()

    __call__ = write

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


@dataclass
class ParsedLog:
    events: list[dict]
    warnings: list[str] = field(default_factory=list)

    @property
    def snapshot(self) -> Optional[dict]:
        if self.events and self.events[0]["kind"] == "config_snapshot":
            return self.events[0]["payload"]
        return None

    def of_kind(self, *kinds) -> list[dict]:
        return [e for e in self.events if e["kind"] in kinds]

    def eval_events(self) -> list[dict]:
        return self.of_kind(*EVAL_KINDS)

    def records(self) -> list[EvaluationRecord]:
        return [EvaluationRecord.from_dict(e["payload"]) for e in self.eval_events()]

    @property
    def complete(self) -> bool:
        return bool(self.events) and self.events[-1]["kind"] == "run_end"


def read_log(path) -> ParsedLog:
    """Parse a log, keeping the longest valid prefix of records."""
    events: list[dict] = []
    warnings: list[str] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ok = isinstance(rec, dict) and rec.get("kind") in EVENT_KINDS and "payload" in rec
            except json.JSONDecodeError:
                ok = False
            if not ok:
                warnings.append(f"line {lineno}: unparseable record; using the {len(events)} records before it")
                break
            if rec["seq"] != len(events) + 1:
                warnings.append(f"line {lineno}: sequence gap (expected {len(events) + 1}, got {rec['seq']})")
                break
            events.append(rec)
    if not events or events[0]["kind"] != "config_snapshot":
        raise LogError(f"{path}: log does not start with a config snapshot")
    if events[-1]["kind"] != "run_end":
        warnings.append("log has no run_end record (truncated or aborted run)")
    for w in warnings:
        logger.warning("%s: %s", path, w)
    return ParsedLog(events, warnings)
