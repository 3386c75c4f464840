"""Orchestration: dataset ingestion, the online replay loop and run reports.

``replay_match`` drives one match end to end: snapshot the memory, assemble
the prompt, call the configured commentary client, sanity-check the result,
then advance the memory (evictions consolidate into the statistic lines).
Client failures mark the rally as failed and the run continues; the rally's
metadata still reaches memory so match statistics stay complete.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import corpus_metrics, CorpusTooSmall, sanity_check
from .event_stream import (
    SchemaViolation,
    rally_from_json,
    validate_rally,
)
from .match_model import ScoringConfig, validate_scoreboard
from .memory import MatchMemory, MemoryEntry
from .prompt_engine import (
    BudgetExceeded,
    GenerationRequest,
    HttpCommentaryClient,
    MalformedResponse,
    MockCommentaryClient,
    PersonaConfig,
    TransportFailure,
    build_commentary_prompt,
    estimate_prompt,
    estimate_tokens,
    generate,
)
from .segmentation import SegmentationParams

CLIENT_KINDS = ("mock", "http")


class ConfigError(ValueError):
    """Configuration file or flag values are unusable."""


@dataclass(frozen=True)
class PipelineConfig:
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    memory_window: int = 4
    token_cap: int = 16_000
    client: str = "mock"
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    persona: PersonaConfig = field(default_factory=PersonaConfig)
    log_requests: str | None = None

    def __post_init__(self):
        if self.memory_window < 1:
            raise ConfigError("memory window must be >= 1")
        if self.token_cap <= 0:
            raise ConfigError("token cap must be > 0")
        if self.client not in CLIENT_KINDS:
            raise ConfigError(f"client must be one of {CLIENT_KINDS}")

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        try:
            scoring = ScoringConfig(**obj.get("scoring", {}))
            segmentation = SegmentationParams(**obj.get("segmentation", {}))
            persona = PersonaConfig(**obj.get("persona", {}))
            return cls(
                scoring=scoring,
                memory_window=obj.get("memory_window", 4),
                token_cap=obj.get("token_cap", 16_000),
                client=obj.get("client", "mock"),
                segmentation=segmentation,
                persona=persona,
                log_requests=obj.get("log_requests"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            obj = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(obj)

    def summary(self) -> dict:
        return {
            "scoring": {
                "best_of": self.scoring.best_of,
                "set_trigger_games": self.scoring.set_trigger_games,
                "tiebreak_points": self.scoring.tiebreak_points,
                "final_set_tiebreak_points": self.scoring.final_set_tiebreak_points,
                "ad_scoring": self.scoring.ad_scoring,
            },
            "memory_window": self.memory_window,
            "token_cap": self.token_cap,
            "client": self.client,
        }


def make_client(config: PipelineConfig):
    if config.client == "mock":
        return MockCommentaryClient(token_cap=config.token_cap)
    try:
        return HttpCommentaryClient(token_cap=config.token_cap,
                                    log_path=config.log_requests)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------


def load_dataset(path, config: ScoringConfig | None = None, errors=None,
                 deep_validate: bool = True):
    """Stream schema-valid rally records from a JSONL file, in file order.

    Malformed lines are appended to ``errors`` as ``(line_number, message)``
    and skipped, so one bad line never sinks the stream.  ``deep_validate``
    additionally runs the event and scoreboard validators per record.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                if errors is None:
                    raise SchemaViolation(f"line {line_no}: invalid JSON: {exc}") from None
                errors.append((line_no, f"invalid JSON: {exc}"))
                continue
            try:
                record = rally_from_json(obj, config)
            except SchemaViolation as exc:
                if errors is None:
                    raise SchemaViolation(f"line {line_no}: {exc}") from None
                errors.append((line_no, str(exc)))
                continue
            if deep_validate:
                problems = (validate_rally(record).violations
                            + validate_scoreboard(record.initial_score).violations)
                if problems:
                    message = f"{record.clip_id}: " + "; ".join(problems)
                    if errors is None:
                        raise SchemaViolation(f"line {line_no}: {message}")
                    errors.append((line_no, message))
                    continue
            yield record


# ---------------------------------------------------------------------------
# Replay loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RallyRunRecord:
    rally_index: int
    clip_id: str
    prompt_tokens: int
    context_tokens: int
    commentary: str | None
    sanity_passed: bool | None
    failed: bool
    failure: str | None
    engine_ms: float
    client_ms: float

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            "rally_index": self.rally_index,
            "clip_id": self.clip_id,
            "prompt_tokens": self.prompt_tokens,
            "context_tokens": self.context_tokens,
            "commentary": self.commentary,
            "sanity_passed": self.sanity_passed,
            "failed": self.failed,
            "failure": self.failure,
        }
        if include_timing:
            out["engine_ms"] = self.engine_ms
            out["client_ms"] = self.client_ms
        return out


@dataclass(frozen=True)
class RunReport:
    rallies: tuple[RallyRunRecord, ...]
    final_stats: dict
    evaluation: dict | None
    config: dict

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rallies if r.failed)

    def as_dict(self, include_timing: bool = True) -> dict:
        return {
            "config": self.config,
            "rallies": [r.as_dict(include_timing) for r in self.rallies],
            "rally_count": len(self.rallies),
            "failures": self.failures,
            "final_stats": self.final_stats,
            "evaluation": self.evaluation,
        }


_CLIENT_ERRORS = (TransportFailure, MalformedResponse, BudgetExceeded)


def replay_match(records, config: PipelineConfig | None = None,
                 client=None) -> RunReport:
    """Run the online loop over one match's records, in order.

    The snapshot handed to prompt assembly never contains the current rally;
    after generation the rally (with its commentary, or none on failure)
    enters the window and evictions consolidate.  References present on the
    records are scored against the generated commentary at the end.
    """
    config = config or PipelineConfig()
    client = client or make_client(config)
    memory = MatchMemory(capacity=config.memory_window)
    prior: tuple[str, str] | None = None

    run_records: list[RallyRunRecord] = []
    generated: list[tuple[str, str]] = []  # (generated, reference) pairs

    for index, rally in enumerate(records):
        engine_started = time.perf_counter()
        bundle = build_commentary_prompt(rally, memory.snapshot(),
                                         persona=config.persona, prior=prior)
        prompt_tokens = estimate_tokens(
            bundle.system_text + "\n" + bundle.user_text).count
        context_tokens = estimate_prompt(bundle).count
        request = GenerationRequest(bundle=bundle, clip_ref=rally.clip_id)

        commentary = None
        failure = None
        client_s = 0.0
        client_started = time.perf_counter()
        try:
            response = generate(client, request)
            commentary = response.text
            client_s = time.perf_counter() - client_started
        except _CLIENT_ERRORS as exc:
            client_s = time.perf_counter() - client_started
            failure = f"{type(exc).__name__}: {exc}"

        sanity_passed = None
        if commentary is not None:
            sanity_passed = sanity_check(commentary, rally).passed
            prior = (bundle.user_text, commentary)
            if rally.commentary:
                generated.append((commentary, rally.commentary))

        memory.observe(MemoryEntry(rally_index=index, rally_ref=rally.clip_id,
                                   metadata=rally, commentary=commentary))
        engine_s = (time.perf_counter() - engine_started) - client_s
        run_records.append(RallyRunRecord(
            rally_index=index, clip_id=rally.clip_id,
            prompt_tokens=prompt_tokens, context_tokens=context_tokens,
            commentary=commentary, sanity_passed=sanity_passed,
            failed=failure is not None, failure=failure,
            engine_ms=engine_s * 1000.0, client_ms=client_s * 1000.0,
        ))

    memory.flush()

    evaluation = None
    if generated:
        try:
            report = corpus_metrics((g, [r]) for g, r in generated)
            evaluation = report.as_dict()
        except CorpusTooSmall:
            evaluation = None

    return RunReport(
        rallies=tuple(run_records),
        final_stats=memory.long.report(),
        evaluation=evaluation,
        config=config.summary(),
    )
