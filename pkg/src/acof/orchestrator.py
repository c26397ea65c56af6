"""Run loop: seed with pure BO, then rounds of proposal -> audit -> BO -> summary."""

from __future__ import annotations

import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import bayesopt
from .agents import (
    AgentContext,
    AgentFailure,
    AuditResult,
    HeuristicActor,
    HeuristicCritic,
    LLMActor,
    LLMCritic,
    PromptTemplates,
    ProposedRegion,
    repair_region,
    summarize_round,
)
from .agents.summary import best_record
from .core import (
    DesignPoint,
    EvaluationRecord,
    ParameterSpace,
    Region,
    RoundSummary,
    SpecTargets,
    denormalize,
    normalize,
)
from .evaluators import Evaluator, EvaluatorSpec, make_evaluator
from .fom import FOM_FLOOR, InvalidMeasurementError, fom, phys_feasible
from .metrics import MetricsReport, compute_report

MODES = ("acof", "single_llm", "pure_bo")
STREAMS = ("seed_uniform", "pool", "tiebreak")


@dataclass(frozen=True)
class LLMSettings:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    temperature: float = 0.2
    max_tokens: int = 2048
    timeout: float = 120.0


@dataclass(frozen=True)
class AgentSettings:
    kind: str = "heuristic"  # heuristic | llm
    top_k: int = 10
    margin: float = 0.2
    eps_min: float = 0.01
    stagnation_tol: float = 0.01
    memo_window: int = 5
    summary_size: int = 10
    max_retries: int = 3
    circuit: str = ""
    templates_dir: Optional[str] = None
    llm: LLMSettings = field(default_factory=LLMSettings)


@dataclass(frozen=True)
class MetricsSettings:
    k: int = 10
    min_cluster_size: int = 10
    min_samples: int = 5
    regret_include_seed: bool = True


@dataclass(frozen=True)
class RunConfig:
    mode: str
    space: ParameterSpace
    targets: SpecTargets
    evaluator: EvaluatorSpec
    seed_budget: int = 200
    round_budget: int = 100
    rounds: int = 0
    batch: int = 10
    pool_size: int = 1024
    xi: float = 0.01
    min_pairwise_distance: float = 0.05
    gp: bayesopt.GPSettings = field(default_factory=bayesopt.GPSettings)
    penalize_invalid: bool = False
    agents: AgentSettings = field(default_factory=AgentSettings)
    metrics: MetricsSettings = field(default_factory=MetricsSettings)
    seed: int = 0
    parallel: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.seed_budget < 2:
            raise ValueError("seed_budget must be >= 2")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.batch < 1 or self.round_budget < self.batch:
            raise ValueError("need round_budget >= batch >= 1")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")
        if self.agents.kind not in ("heuristic", "llm"):
            raise ValueError("agents.kind must be 'heuristic' or 'llm'")

    @property
    def total_budget(self) -> int:
        return self.seed_budget + self.rounds * self.round_budget

    @property
    def acquisition(self) -> bayesopt.AcquisitionParams:
        return bayesopt.AcquisitionParams(self.pool_size, self.batch, self.xi, self.min_pairwise_distance)


@dataclass
class RunResult:
    records: list[EvaluationRecord]
    summaries: list[RoundSummary]
    audits: list[AuditResult]
    regions: list[Region]
    report: MetricsReport
    wall_clock: float
    agent_calls: dict = field(default_factory=dict)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent named stream derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def fallback_region(previous: Optional[Region], space: ParameterSpace) -> Region:
    return previous if previous is not None else space.full_region()


def make_record(step: int, rnd: int, point: DesignPoint, meas, targets: SpecTargets) -> EvaluationRecord:
    score = None
    if meas.sim_valid:
        try:
            score = fom(meas, targets).total
        except InvalidMeasurementError as exc:
            meas = type(meas).invalid(str(exc))
    return EvaluationRecord(step, rnd, point, meas, score, phys_feasible(meas))


class Runner:
    def __init__(self, config: RunConfig, evaluator: Optional[Evaluator] = None, actor=None, critic=None,
                 client=None, on_event: Optional[Callable[[str, dict], None]] = None):
        self.config = config
        self.space = config.space
        self.evaluator = evaluator or make_evaluator(config.evaluator, config.space, config.targets)
        self.evaluator.check_available()
        self.on_event = on_event or (lambda kind, payload: None)
        self.client = client
        self.templates = None
        a = config.agents
        if config.mode != "pure_bo":
            if a.kind == "llm":
                self.templates = PromptTemplates.load(a.templates_dir)
                if client is None and (actor is None or critic is None):
                    from .llmclient import LLMClient

                    self.client = LLMClient.from_env(
                        a.llm.base_url, a.llm.model, temperature=a.llm.temperature,
                        max_tokens=a.llm.max_tokens, timeout=a.llm.timeout,
                    )
                common = dict(templates=self.templates, max_retries=a.max_retries,
                              memo_window=a.memo_window, circuit=a.circuit)
                actor = actor or LLMActor(self.client, **common)
                critic = critic or LLMCritic(self.client, eps_min=a.eps_min, **common)
            actor = actor or HeuristicActor(a.top_k, a.margin)
            critic = critic or HeuristicCritic(a.eps_min, a.stagnation_tol)
        self.actor = actor
        self.critic = critic
        self.backup_critic = HeuristicCritic(a.eps_min, a.stagnation_tol)
        self.streams = {name: rng_stream(config.seed, name) for name in STREAMS}
        self.records: list[EvaluationRecord] = []
        self._obs: list[tuple[np.ndarray, float]] = []
        self.agent_calls = {"actor": 0, "critic": 0}

    # -- plumbing -----------------------------------------------------------

    def _emit(self, kind, payload):
        self.on_event(kind, payload)

    def _transcript_since(self, mark: int) -> list[dict]:
        if self.client is None:
            return []
        return [e.to_dict() for e in self.client.transcript.entries[mark:]]

    def _mark(self) -> int:
        return len(self.client.transcript) if self.client is not None else 0

    def _evaluate(self, points: list[DesignPoint], rnd: int, region: Region) -> list[EvaluationRecord]:
        for p in points:
            if not region.contains(p):
                raise RuntimeError(f"round {rnd}: proposed point escapes the search region")
        self._emit("batch", {"round": rnd, "size": len(points)})
        if self.config.parallel > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=self.config.parallel) as pool:
                results = list(pool.map(self.evaluator.evaluate_with_transcript, points))
        else:
            results = [self.evaluator.evaluate_with_transcript(p) for p in points]
        out = []
        for p, (meas, transcript) in zip(points, results):
            rec = make_record(len(self.records) + 1, rnd, p, meas, self.config.targets)
            self.records.append(rec)
            payload = rec.to_dict()
            if transcript is not None:
                payload["transcript"] = transcript
            self._emit("seed_eval" if rnd == 0 else "eval", payload)
            score = rec.fom
            if score is None and self.config.penalize_invalid:
                score = FOM_FLOOR
            if score is not None:
                self._obs.append((normalize(p, self.space), score))
            out.append(rec)
        return out

    def _bo_batch(self, region: Region, n: int) -> list[DesignPoint]:
        if len(self._obs) < 2:
            # not enough data for a surrogate yet: uniform in the region
            Z = bayesopt.sample_region(region, self.space, n, self.streams["seed_uniform"])
            return bayesopt.to_points(Z, region, self.space)
        model = bayesopt.fit_gp(self._obs, self.config.gp)
        return bayesopt.propose_batch(model, region, self.space, self.config.acquisition,
                                      self.streams["pool"], q=n, tie_rng=self.streams["tiebreak"])

    def _spend(self, region: Region, budget: int, rnd: int) -> list[EvaluationRecord]:
        out = []
        q = self.config.batch
        while len(out) < budget:
            n = min(q, budget - len(out))
            out += self._evaluate(self._bo_batch(region, n), rnd, region)
        return out

    # -- phases -------------------------------------------------------------

    def seed(self) -> list[EvaluationRecord]:
        c = self.config
        full = self.space.full_region()
        n_init = min(c.seed_budget, max(2 * c.batch, 20))
        Z = self.streams["seed_uniform"].random((n_init, self.space.dim))
        points = [denormalize(z, self.space) for z in Z]
        out = []
        for i in range(0, n_init, c.batch):
            out += self._evaluate(points[i:i + c.batch], 0, full)
        out += self._spend(full, c.seed_budget - n_init, 0)
        return out

    def _propose(self, ctx: AgentContext, previous: Optional[Region]) -> tuple[Optional[ProposedRegion], Optional[Region]]:
        mark = self._mark()
        self.agent_calls["actor"] += 1
        try:
            proposal = self.actor.propose(ctx)
        except AgentFailure as exc:
            region = fallback_region(previous, self.space)
            self._emit("agent_fallback", {
                "round": ctx.round, "agent": "actor", "reason": str(exc),
                "region": region.to_dict(self.space), "transcript": self._transcript_since(mark),
            })
            return None, region
        self._emit("actor_proposal", {
            "round": ctx.round, "region": proposal.region.to_dict(self.space),
            "rationale": proposal.rationale, "transcript": self._transcript_since(mark),
        })
        return proposal, None

    def _audit(self, proposal: ProposedRegion, ctx: AgentContext) -> AuditResult:
        mark = self._mark()
        self.agent_calls["critic"] += 1
        try:
            audit = self.critic.audit(proposal, ctx)
        except AgentFailure as exc:
            self._emit("agent_fallback", {
                "round": ctx.round, "agent": "critic", "reason": str(exc),
                "transcript": self._transcript_since(mark),
            })
            audit = self.backup_critic.audit(proposal, ctx)
            mark = self._mark()
        self._emit("critic_audit", {
            "round": ctx.round, "approved_as_is": audit.approved_as_is,
            "region": audit.region.to_dict(self.space), "memo": audit.memo,
            "repairs": [list(r) for r in audit.repairs], "transcript": self._transcript_since(mark),
        })
        return audit

    def run(self) -> RunResult:
        c = self.config
        t0 = time.perf_counter()
        from .config import config_to_dict

        snapshot = {"config": config_to_dict(c), "seed": c.seed, "streams": list(STREAMS),
                    "replayable": is_replayable(c) and self.evaluator.replayable}
        if self.templates is not None:
            snapshot["template_hashes"] = self.templates.hashes()
        self._emit("config_snapshot", snapshot)

        calibration = tuple(self.seed())
        history = [best_fom(self.records)]
        summaries: list[RoundSummary] = []
        audits: list[AuditResult] = []
        regions: list[Region] = []
        memos: list[str] = []
        previous_region = None
        full = self.space.full_region()

        for rnd in range(1, c.rounds + 1):
            self._emit("round_start", {"round": rnd})
            memo = ""
            if c.mode == "pure_bo":
                region = full
            else:
                ctx = AgentContext(
                    space=self.space,
                    targets=c.targets,
                    round=rnd,
                    previous_summary=summaries[-1] if summaries else None,
                    calibration_records=calibration if rnd == 1 else None,
                    accumulated_memos=tuple(memos[-c.agents.memo_window:]) if c.agents.memo_window > 0 else (),
                    best_history=tuple(history),
                )
                proposal, region = self._propose(ctx, previous_region)
                if proposal is not None:
                    if c.mode == "acof":
                        audit = self._audit(proposal, ctx)
                        audits.append(audit)
                        region = audit.region
                        memo = audit.memo
                        memos.append(memo)
                    else:
                        # clamp plus a degeneracy floor only; no critic-style repair
                        region, _ = repair_region(proposal.region, self.space, c.agents.eps_min,
                                                  zero_width_only=True)
            regions.append(region)
            round_records = self._spend(region, c.round_budget, rnd)
            history.append(best_fom(self.records))
            summary = summarize_round(round_records, self.records, memo, c.agents.summary_size, self.space)
            summaries.append(summary)
            self._emit("round_summary", {**summary.to_dict(), "region": region.to_dict(self.space)})
            previous_region = region

        m = c.metrics
        report = compute_report(self.records, self.space, m.k, m.min_cluster_size, m.min_samples,
                                m.regret_include_seed)
        elapsed = time.perf_counter() - t0
        self._emit("run_end", {"n_records": len(self.records), "report": report.to_dict()})
        return RunResult(self.records, summaries, audits, regions, report, elapsed, dict(self.agent_calls))


def best_fom(records) -> Optional[float]:
    rec = best_record(records)
    return None if rec is None else rec.fom


def run(config: RunConfig, **kwargs) -> RunResult:
    return Runner(config, **kwargs).run()


def is_replayable(config: RunConfig) -> bool:
    """Deterministic stack: no LLM in the loop and a pure evaluator."""
    agents_ok = config.mode == "pure_bo" or config.agents.kind == "heuristic"
    return agents_ok and config.evaluator.kind != "ngspice"
