"""Prompt assembly and the pluggable commentary-model client boundary.

Rally metadata and the memory snapshot are serialized into a bounded-size
text prompt; the prompt plus decoding hints form a request for a commentary
client.  The HTTP client speaks a minimal chat-completion JSON shape; the
mock client is a pure function of its request and is used for tests and
offline runs.  Conversation context keeps at most the single most recent
interaction, so context size stays constant as a match progresses.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
from dataclasses import dataclass, replace

import requests

from .event_stream import (
    BounceEvent,
    MatchInfo,
    RallyOutcome,
    RallyRecord,
    SchemaViolation,
    ShotEvent,
)
from .match_model import (
    AD,
    MatchScore,
    PLAYER_1,
    PLAYER_2,
    PlayerRef,
    ScoringConfig,
    advance_point,
    synthesize_completed_sets,
)
from .memory import ContextView, PlayerStatLine

COMMENTATOR_SYSTEM_PROMPT = """\
I want you to act as a professional tennis commentator and coach. I will give \
you descriptions of tennis matches in progress, which include both detailed \
shot-by-shot data and real broadcast transcripts. You will commentate on the \
match, providing your analysis on what has happened thus far and predicting \
how the match will go.

You should be knowledgeable of tennis terminology, tactics, players involved \
in each match. Your commentary must be factually accurate based on the shot \
data. Explicitly use the broadcast transcripts to extract long-term match \
context, tactical shifts, and any rolling match statistics mentioned by the \
original commentators (e.g., serve percentages, error counts). Weave these \
macro trends into your commentary naturally when they add strategic depth to \
the current point.

Be professionally insightful, engaging the audience, and maintain narrative \
coherence by connecting the current rally to the momentum of the recent \
points and the overall match story. Ensure the length is appropriate and use \
natural pauses (ellipses...) and transitions. Focus on intelligent analysis \
rather than just narrating play-by-play.\
"""

USER_INSTRUCTION_TEMPLATE = (
    "Here is the metadata for the current rally. Provide a commentary for the "
    "rally between {min_words} and {max_words} words, adjusting the length "
    "based on rally duration and importance. Return the output strictly as "
    "plain text."
)

_METADATA_MARKER = "Metadata:"
_CONTEXT_MARKER = "Match context:"

DEFAULT_TOKEN_CAP = 16_000


class TransportFailure(RuntimeError):
    """Network-level failure talking to the commentary endpoint; retryable."""


class MalformedResponse(RuntimeError):
    """The endpoint answered, but not in the agreed shape."""


class BudgetExceeded(RuntimeError):
    """The assembled prompt overruns the configured token cap."""


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    prior_interaction: tuple[str, str] | None = None

    def __post_init__(self):
        if not self.system_text:
            raise ValueError("system_text must be non-empty")

    def context_text(self) -> str:
        parts = [self.system_text]
        if self.prior_interaction is not None:
            parts.extend(self.prior_interaction)
        parts.append(self.user_text)
        return "\n".join(parts)


@dataclass(frozen=True)
class PersonaConfig:
    system_text: str = COMMENTATOR_SYSTEM_PROMPT
    min_words: int = 5
    max_words: int = 60


@dataclass(frozen=True)
class GenerationRequest:
    bundle: PromptBundle
    clip_ref: str | None = None
    attachment: dict | None = None
    max_tokens: int | None = None
    temperature: float | None = None


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    usage: dict
    latency_s: float = 0.0


@dataclass(frozen=True)
class TokenEstimate:
    count: int
    method: str = "chars/4 heuristic"


def estimate_tokens(text: str) -> TokenEstimate:
    """Model-agnostic size proxy: one token per four characters, rounded up."""
    return TokenEstimate(count=math.ceil(len(text) / 4))


def estimate_prompt(bundle: PromptBundle) -> TokenEstimate:
    return estimate_tokens(bundle.context_text())


# ---------------------------------------------------------------------------
# Metadata serialization
# ---------------------------------------------------------------------------


def describe_shot(shot: ShotEvent, hitter: PlayerRef) -> str:
    """Readable yet machine-invertible one-line shot description."""
    if shot.stroke == "serve":
        head = f"{shot.serve_attempt}-serve"
    else:
        head = f"{hitter.handedness}-handed {shot.stroke}"
    return f"{head} {shot.technique} {shot.direction} ({shot.outcome})"


_SERVE_DESC_RE = re.compile(r"^(first|second)-serve (\S+) (\S+) \((\w+)\)$")
_SHOT_DESC_RE = re.compile(r"^(left|right)-handed (forehand|backhand) (\S+) (\S+) \((\w+)\)$")


def _parse_shot_description(desc: str) -> dict:
    m = _SERVE_DESC_RE.match(desc)
    if m:
        return {"stroke": "serve", "serve_attempt": m.group(1),
                "technique": m.group(2), "direction": m.group(3),
                "outcome": m.group(4)}
    m = _SHOT_DESC_RE.match(desc)
    if m:
        return {"stroke": m.group(2), "serve_attempt": None,
                "technique": m.group(3), "direction": m.group(4),
                "outcome": m.group(5)}
    raise SchemaViolation(f"unparsable shot description: {desc!r}")


def _score_cell(value):
    return value if value == AD else int(value)


def metadata_object(rally: RallyRecord) -> dict:
    """The structured metadata block, with commentary-facing display names."""
    info = rally.match_info
    score = rally.initial_score
    p1, p2 = info.player_1, info.player_2
    sets_won = score.sets_won()

    score_state = {
        "server": info.name_of(score.server),
        "returner": info.name_of(score.returner),
        "sets": {p1.name: sets_won[0], p2.name: sets_won[1]},
        "games_in_current_set": {p1.name: score.games[0], p2.name: score.games[1]},
        "points_in_current_game": {p1.name: _score_cell(score.points[0]),
                                   p2.name: _score_cell(score.points[1])},
    }
    if score.in_tiebreak:
        score_state["tiebreak"] = True

    rally_block = []
    for shot in rally.shots:
        hitter = info.player(shot.hitter)
        entry = {
            "shot_index": shot.index,
            "hitter": hitter.name,
            "shot_description": describe_shot(shot, hitter),
            "timestamp": shot.timestamp,
        }
        if shot.hitter_position is not None:
            entry["hitter_position"] = list(shot.hitter_position)
        if shot.ball_position is not None:
            entry["ball_position"] = list(shot.ball_position)
        rally_block.append(entry)

    obj = {
        "clip_id": rally.clip_id,
        "match_info": {
            "tournament": info.tournament,
            "round": info.round,
            "surface": info.surface,
            "player_1": {"name": p1.name, "handedness": p1.handedness},
            "player_2": {"name": p2.name, "handedness": p2.handedness},
        },
        "score_state (initial)": score_state,
        "rally": rally_block,
        "outcome": {
            "point_winner": info.name_of(rally.outcome.point_winner),
            "point_loser": info.name_of(rally.outcome.point_loser),
            "reason": rally.outcome.reason,
        },
        "audio_transcription (background context)": rally.transcript,
    }
    if rally.bounces:
        obj["bounces"] = [
            {"timestamp": b.timestamp, "court_half": b.court_half,
             **({"position": list(b.position)} if b.position is not None else {})}
            for b in rally.bounces
        ]
    return obj


def serialize_metadata(rally: RallyRecord) -> str:
    """Deterministic JSON rendering of the metadata block."""
    return json.dumps(metadata_object(rally), indent=2, ensure_ascii=False)


def parse_metadata(text: str | dict,
                   config: ScoringConfig | None = None) -> RallyRecord:
    """Invert :func:`serialize_metadata` (commentary is never carried)."""
    config = config or ScoringConfig()
    obj = json.loads(text) if isinstance(text, str) else text

    info_obj = obj["match_info"]
    players = {}
    for pid in (PLAYER_1, PLAYER_2):
        blob = info_obj[pid]
        players[pid] = PlayerRef(id=pid, name=blob["name"],
                                 handedness=blob["handedness"])
    info = MatchInfo(tournament=info_obj["tournament"], round=info_obj["round"],
                     surface=info_obj["surface"], player_1=players[PLAYER_1],
                     player_2=players[PLAYER_2])

    def pid_of(name: str) -> str:
        pid = info.id_of_name(name)
        if pid is None:
            raise SchemaViolation(f"unknown player name: {name!r}")
        return pid

    state = obj["score_state (initial)"]
    p1_name, p2_name = players[PLAYER_1].name, players[PLAYER_2].name
    trigger = config.set_trigger_games
    completed = synthesize_completed_sets(state["sets"][p1_name],
                                          state["sets"][p2_name], trigger)
    games = (state["games_in_current_set"][p1_name],
             state["games_in_current_set"][p2_name])
    in_tiebreak = games == (trigger, trigger)
    raw_points = (state["points_in_current_game"][p1_name],
                  state["points_in_current_game"][p2_name])
    if in_tiebreak:
        points: tuple = (int(raw_points[0]), int(raw_points[1]))
    else:
        points = tuple(p if p == AD else str(p) for p in raw_points)
    score = MatchScore(completed_sets=completed, games=games, points=points,
                       server=pid_of(state["server"]), in_tiebreak=in_tiebreak,
                       config=config)

    shots = []
    for entry in obj["rally"]:
        fields_ = _parse_shot_description(entry["shot_description"])
        shots.append(ShotEvent(
            index=entry["shot_index"], hitter=pid_of(entry["hitter"]),
            timestamp=entry["timestamp"],
            hitter_position=tuple(entry["hitter_position"])
            if "hitter_position" in entry else None,
            ball_position=tuple(entry["ball_position"])
            if "ball_position" in entry else None,
            **fields_,
        ))

    bounces = tuple(
        BounceEvent(timestamp=b["timestamp"], court_half=b["court_half"],
                    position=tuple(b["position"]) if "position" in b else None)
        for b in obj.get("bounces", []))

    outcome = RallyOutcome(
        point_winner=pid_of(obj["outcome"]["point_winner"]),
        point_loser=pid_of(obj["outcome"]["point_loser"]),
        reason=obj["outcome"]["reason"],
    )
    return RallyRecord(
        clip_id=obj["clip_id"], match_info=info, initial_score=score,
        shots=tuple(shots), outcome=outcome,
        transcript=obj["audio_transcription (background context)"],
        bounces=bounces, commentary=None,
    )


# ---------------------------------------------------------------------------
# Memory serialization
# ---------------------------------------------------------------------------

_STAT_ROWS = (
    "aces", "double_faults", "first_serves_in", "serve_points",
    "serve_points_won", "return_points", "return_points_won", "winners",
    "unforced_errors", "forced_errors_conceded", "break_points_faced",
    "break_points_saved", "break_points_converted", "points_won",
    "games_won", "total_shots",
)
_PCT_ROWS = ("first_serve_pct", "serve_points_won_pct", "return_points_won_pct")

COMMENTARY_PLACEHOLDER = "[commentary unavailable]"


def _digest_line(index: int, rally: RallyRecord, commentary: str | None) -> str:
    info = rally.match_info
    score = rally.initial_score
    sets_won = score.sets_won()
    winner = info.player(rally.outcome.point_winner).surname
    server = info.player(score.server).surname
    line = (f"{index}. [sets {sets_won[0]}-{sets_won[1]}, games "
            f"{score.games[0]}-{score.games[1]}, points "
            f"{score.points[0]}:{score.points[1]}, {server} serving] "
            f"{winner} won ({rally.outcome.reason}) -- ")
    line += f'"{commentary}"' if commentary is not None else COMMENTARY_PLACEHOLDER
    return line


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}%"


def _stats_table(lines: tuple[PlayerStatLine, PlayerStatLine],
                 names: tuple[str, str]) -> str:
    width = max(len(names[0]), len(names[1]), 10) + 2
    header = f"{'statistic':<26}{names[0]:>{width}}{names[1]:>{width}}"
    rows = [header]
    for name in _STAT_ROWS:
        rows.append(f"{name:<26}{getattr(lines[0], name):>{width}}"
                    f"{getattr(lines[1], name):>{width}}")
    for name in _PCT_ROWS:
        rows.append(f"{name:<26}{_pct(getattr(lines[0], name)):>{width}}"
                    f"{_pct(getattr(lines[1], name)):>{width}}")
    return "\n".join(rows)


def serialize_memory(view: ContextView, names: tuple[str, str] | None = None) -> str:
    """Recent-rally digest plus the consolidated two-column statistics table."""
    if names is None and view.recent:
        info = view.recent[0][0].match_info
        names = (info.player_1.name, info.player_2.name)
    names = names or ("player_1", "player_2")

    lines = ["RECENT RALLIES (oldest first):"]
    if view.recent:
        for i, (rally, commentary) in enumerate(view.recent, start=1):
            lines.append(_digest_line(i, rally, commentary))
    else:
        lines.append("(none yet)")
    lines.append("")
    lines.append(f"MATCH STATISTICS (consolidated over "
                 f"{view.rallies_consolidated} rallies):")
    lines.append(_stats_table(view.stat_lines, names))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def build_commentary_prompt(rally: RallyRecord, view: ContextView,
                            persona: PersonaConfig | None = None,
                            prior: tuple[str, str] | None = None) -> PromptBundle:
    """Assemble the full request prompt for one rally.

    ``prior`` carries the most recent (user, assistant) exchange; older
    interactions are deliberately dropped.
    """
    persona = persona or PersonaConfig()
    info = rally.match_info
    instruction = USER_INSTRUCTION_TEMPLATE.format(
        min_words=persona.min_words, max_words=persona.max_words)
    user_text = "\n\n".join([
        instruction,
        f"{_METADATA_MARKER}\n{serialize_metadata(rally)}",
        f"{_CONTEXT_MARKER}\n"
        f"{serialize_memory(view, (info.player_1.name, info.player_2.name))}",
    ])
    return PromptBundle(system_text=persona.system_text, user_text=user_text,
                        prior_interaction=prior)


def _extract_metadata_block(user_text: str) -> str:
    try:
        after = user_text.split(_METADATA_MARKER + "\n", 1)[1]
        return after.split("\n\n" + _CONTEXT_MARKER, 1)[0]
    except IndexError:
        raise MalformedResponse("prompt does not carry a metadata block") from None


_CONSOLIDATED_RE = re.compile(r"consolidated over (\d+) rallies")


def _extract_stat_row(user_text: str, row: str) -> tuple[int, int] | None:
    m = re.search(rf"^{row}\s+(\d+)\s+(\d+)\s*$", user_text, flags=re.MULTILINE)
    if m is None:
        return None
    return int(m.group(1)), int(m.group(2))


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------


class MockCommentaryClient:
    """Deterministic offline stand-in for the commentary model.

    The produced sentence is a pure function of the request: it names the
    point winner, the rally-ending reason, the score the point started at,
    and folds in the consolidated tally once history exists.
    """

    name = "mock"

    def __init__(self, token_cap: int = DEFAULT_TOKEN_CAP):
        self.token_cap = token_cap

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        rally = parse_metadata(_extract_metadata_block(request.bundle.user_text))
        text = self._commentary(rally, request.bundle.user_text)
        usage = {
            "prompt_tokens": estimate_prompt(request.bundle).count,
            "completion_tokens": estimate_tokens(text).count,
        }
        return GenerationResponse(text=text, usage=usage)

    def _commentary(self, rally: RallyRecord, user_text: str) -> str:
        info = rally.match_info
        outcome = rally.outcome
        score = rally.initial_score
        win = info.player(outcome.point_winner).surname
        lose = info.player(outcome.point_loser).surname
        pa, pb = score.points
        at = f"at {pa}-{pb}"
        final = rally.shots[-1]

        reason = outcome.reason
        if reason == "ace":
            sentence = f"{win} fires an ace {at}."
        elif reason == "double_fault":
            sentence = f"A double fault from {lose} {at} hands the point to {win}."
        elif reason == "service_winner":
            sentence = f"{win} lands an unreturnable serve {at}."
        elif reason == "winner":
            sentence = (f"{win} ends it with a {final.stroke} {final.technique} "
                        f"winner {at}.")
        elif reason == "unforced_error":
            sentence = (f"An unforced error from {lose} {at} gives {win} "
                        f"the point.")
        else:
            sentence = f"{win} wrestles the point away {at}, forcing the miss."

        after = advance_point(score, outcome.point_winner)
        games_now = sum(p[0] + p[1] for p in after.completed_sets) + sum(after.games)
        games_before = (sum(p[0] + p[1] for p in score.completed_sets)
                        + sum(score.games))
        if games_now > games_before:
            sentence += " That seals the game."

        consolidated = _CONSOLIDATED_RE.search(user_text)
        if consolidated and int(consolidated.group(1)) > 0:
            winners_row = _extract_stat_row(user_text, "winners")
            errors_row = _extract_stat_row(user_text, "unforced_errors")
            if winners_row and errors_row:
                totals = (winners_row[0] + errors_row[0],
                          winners_row[1] + errors_row[1])
                idx = 0 if outcome.point_winner == PLAYER_1 else 1
                sentence += (f" Tally so far puts {win} on {winners_row[idx]} "
                             f"winners against {totals[1 - idx]} decisive "
                             f"moments for {lose}.")
        return sentence


class HttpCommentaryClient:
    """Thin chat-completion client over the minimal JSON wire shape.

    Request body: ``{system, messages, max_tokens, temperature, clip_ref}``;
    expected reply: ``{"text": ..., "usage": {...}}``.  Endpoint and
    credential come from the environment unless given explicitly.
    """

    name = "http"

    ENDPOINT_ENV = "COMMENTARY_API_URL"
    API_KEY_ENV = "COMMENTARY_API_KEY"

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 token_cap: int = DEFAULT_TOKEN_CAP, timeout_s: float = 30.0,
                 session=None, log_path: str | None = None):
        self.endpoint = endpoint or os.environ.get(self.ENDPOINT_ENV)
        self.api_key = api_key or os.environ.get(self.API_KEY_ENV)
        if not self.endpoint:
            raise ValueError(
                f"no endpoint configured; set {self.ENDPOINT_ENV} or pass one")
        self.token_cap = token_cap
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self.log_path = log_path

    def _messages(self, bundle: PromptBundle) -> list[dict]:
        messages = []
        if bundle.prior_interaction is not None:
            prior_user, prior_assistant = bundle.prior_interaction
            messages.append({"role": "user", "content": prior_user})
            messages.append({"role": "assistant", "content": prior_assistant})
        messages.append({"role": "user", "content": bundle.user_text})
        return messages

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        body = {
            "system": request.bundle.system_text,
            "messages": self._messages(request.bundle),
        }
        if request.max_tokens is not None:
            body["max_tokens"] = request.max_tokens
        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.clip_ref is not None:
            body["clip_ref"] = request.clip_ref
        if request.attachment is not None:
            body["attachment"] = request.attachment

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            http_response = self.session.post(
                self.endpoint, json=body, headers=headers, timeout=self.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportFailure(str(exc)) from exc

        self._log(body, http_response)
        if http_response.status_code >= 500:
            raise TransportFailure(f"server error {http_response.status_code}")
        if http_response.status_code >= 400:
            raise MalformedResponse(
                f"request rejected with status {http_response.status_code}")
        try:
            payload = http_response.json()
        except ValueError as exc:
            raise MalformedResponse(f"non-JSON reply: {exc}") from exc
        text = payload.get("text")
        if not text or not isinstance(text, str):
            raise MalformedResponse("reply carries no text")
        return GenerationResponse(text=text, usage=payload.get("usage", {}))

    def _log(self, body: dict, http_response) -> None:
        if not self.log_path:
            return
        entry = {
            "endpoint": self.endpoint,
            "request": body,
            "status": http_response.status_code,
            "response": http_response.text[:10_000],
            "credential": "redacted" if self.api_key else None,
        }
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


def generate(client, request: GenerationRequest, retries: int = 3,
             backoff_s: float = 0.5, sleep=time.sleep) -> GenerationResponse:
    """Run one generation call with budget guard and bounded retries.

    The token budget is checked before anything leaves the process.  Only
    transport-level failures are retried (exponential backoff); malformed
    replies are not.
    """
    cap = getattr(client, "token_cap", None)
    if cap is not None:
        estimate = estimate_prompt(request.bundle)
        if estimate.count > cap:
            raise BudgetExceeded(
                f"prompt estimate {estimate.count} tokens exceeds cap {cap}")

    attempt = 0
    while True:
        started = time.perf_counter()
        try:
            response = client.complete(request)
        except TransportFailure:
            if attempt >= retries:
                raise
            sleep(backoff_s * (2 ** attempt))
            attempt += 1
            continue
        latency = time.perf_counter() - started
        if not response.text:
            raise MalformedResponse("empty commentary text")
        return replace(response, latency_s=latency)
