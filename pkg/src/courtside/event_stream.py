"""Fine-grained rally event sequences: validation, outcomes and statistics.

A rally is a list of :class:`ShotEvent` (serve first, hitters alternating,
timestamps strictly increasing) plus optional ball bounces.  The module
derives the rally outcome from the final events, turns a rally into per-player
statistic increments, and scores predicted event sequences against references
with the normalized edit-distance metric.
"""

from __future__ import annotations

from dataclasses import dataclass

from .match_model import (
    AD,
    MatchScore,
    PLAYER_IDS,
    PlayerRef,
    POINT_LADDER,
    ScoringConfig,
    is_break_point,
    other_player,
    synthesize_completed_sets,
)
from .validity import ValidityReport

STROKES = ("serve", "forehand", "backhand")
DIRECTIONS = ("cross-court", "down-the-line", "down-the-middle", "inside-out",
              "inside-in", "body", "wide", "T")
SHOT_OUTCOMES = ("in", "winner", "forced_error", "unforced_error", "fault",
                 "let", "net")
OUTCOME_REASONS = ("ace", "double_fault", "winner", "forced_error",
                   "unforced_error", "service_winner")
SERVE_ATTEMPTS = ("first", "second")

STAT_FIELDS = (
    "aces", "double_faults", "first_serves_in", "serve_points",
    "serve_points_won", "return_points", "return_points_won", "winners",
    "unforced_errors", "forced_errors_conceded", "break_points_faced",
    "break_points_saved", "break_points_converted", "points_won",
    "games_won", "total_shots",
)


class IncompleteRally(ValueError):
    """The shot sequence does not end in a point-deciding event."""


class SchemaViolation(ValueError):
    """A serialized rally record does not match the dataset schema."""


@dataclass(frozen=True)
class ShotEvent:
    """One hit in the rally event sequence.

    ``timestamp`` is seconds from clip start.  ``serve_attempt`` must be set
    exactly when the stroke is a serve.  Pixel positions are optional samples
    of the hitter and ball at the moment of contact.
    """

    index: int
    hitter: str
    stroke: str
    technique: str
    direction: str
    outcome: str
    timestamp: float
    serve_attempt: str | None = None
    hitter_position: tuple[float, float] | None = None
    ball_position: tuple[float, float] | None = None

    def __post_init__(self):
        if self.hitter not in PLAYER_IDS:
            raise ValueError(f"unknown hitter: {self.hitter!r}")
        if self.stroke not in STROKES:
            raise ValueError(f"unknown stroke: {self.stroke!r}")
        if self.outcome not in SHOT_OUTCOMES:
            raise ValueError(f"unknown shot outcome: {self.outcome!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction: {self.direction!r}")
        if self.serve_attempt is not None and self.serve_attempt not in SERVE_ATTEMPTS:
            raise ValueError(f"serve_attempt must be first or second, got {self.serve_attempt!r}")


@dataclass(frozen=True)
class BounceEvent:
    timestamp: float
    court_half: str
    position: tuple[float, float] | None = None

    def __post_init__(self):
        if self.court_half not in ("near", "far"):
            raise ValueError(f"court_half must be near or far, got {self.court_half!r}")


@dataclass(frozen=True)
class RallyOutcome:
    point_winner: str
    point_loser: str
    reason: str

    def __post_init__(self):
        if self.point_winner == self.point_loser:
            raise ValueError("point winner and loser must differ")
        if self.point_winner not in PLAYER_IDS or self.point_loser not in PLAYER_IDS:
            raise ValueError("outcome players must be player_1/player_2")
        if self.reason not in OUTCOME_REASONS:
            raise ValueError(f"unknown outcome reason: {self.reason!r}")


@dataclass(frozen=True)
class MatchInfo:
    tournament: str
    round: str
    surface: str
    player_1: PlayerRef
    player_2: PlayerRef

    def player(self, player_id: str) -> PlayerRef:
        return self.player_1 if player_id == "player_1" else self.player_2

    def name_of(self, player_id: str) -> str:
        return self.player(player_id).name

    def id_of_name(self, name: str) -> str | None:
        if name == self.player_1.name:
            return "player_1"
        if name == self.player_2.name:
            return "player_2"
        return None


@dataclass(frozen=True)
class RallyRecord:
    """One annotated rally: identity, context, events, outcome and text."""

    clip_id: str
    match_info: MatchInfo
    initial_score: MatchScore
    shots: tuple[ShotEvent, ...]
    outcome: RallyOutcome
    transcript: str = ""
    bounces: tuple[BounceEvent, ...] = ()
    commentary: str | None = None


def parse_clip_id(clip_id: str) -> tuple[str, float, float]:
    """Split ``matchID_start_end`` into its parts; start/end are seconds."""
    parts = clip_id.rsplit("_", 2)
    if len(parts) != 3 or not parts[0]:
        raise ValueError(f"clip_id must look like matchID_start_end: {clip_id!r}")
    try:
        start, end = float(parts[1]), float(parts[2])
    except ValueError:
        raise ValueError(f"clip_id boundaries must be numeric: {clip_id!r}") from None
    if not start < end:
        raise ValueError(f"clip_id start must precede end: {clip_id!r}")
    return parts[0], start, end


# ---------------------------------------------------------------------------
# Outcome derivation
# ---------------------------------------------------------------------------


def _touched_service_winner(shots) -> bool:
    # A winning serve followed by a recorded touch that never came back.
    return (len(shots) >= 2
            and shots[-2].stroke == "serve"
            and shots[-2].outcome == "winner"
            and shots[-1].hitter == other_player(shots[-2].hitter))


def derive_outcome(shots) -> RallyOutcome:
    """Decide the point from the final events of a structurally valid rally.

    Dispatch is on the last shot: a winner credits its hitter (an ace when the
    winning shot is an untouched serve, a service winner when the dataset
    records a failed touch after it); errors credit the opponent; a second
    fault is a double fault.  Netted shots count as unforced errors.
    """
    if not shots:
        raise IncompleteRally("empty shot sequence")
    last = shots[-1]

    if last.outcome in ("in", "let"):
        raise IncompleteRally(f"rally still live after {last.outcome!r}")

    if last.outcome == "fault":
        if last.stroke != "serve":
            raise ValueError("fault outcome on a non-serve event")
        if last.serve_attempt == "second":
            winner = other_player(last.hitter)
            return RallyOutcome(winner, last.hitter, "double_fault")
        raise IncompleteRally("first-serve fault awaits the second serve")

    if _touched_service_winner(shots):
        server = shots[-2].hitter
        return RallyOutcome(server, other_player(server), "service_winner")

    if last.outcome == "winner":
        reason = "ace" if last.stroke == "serve" else "winner"
        return RallyOutcome(last.hitter, other_player(last.hitter), reason)

    if last.outcome == "forced_error":
        return RallyOutcome(other_player(last.hitter), last.hitter, "forced_error")

    # unforced_error, plus net which is treated as an unforced miss
    return RallyOutcome(other_player(last.hitter), last.hitter, "unforced_error")


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def _shot_violations(shots) -> list[str]:
    v: list[str] = []
    if not shots:
        return ["shot sequence is empty"]
    if shots[0].stroke != "serve":
        v.append(f"first event must be a serve, got {shots[0].stroke!r}")
    elif shots[0].serve_attempt != "first":
        v.append("the opening serve must be a first-serve attempt")

    for i, shot in enumerate(shots):
        if shot.index != i:
            v.append(f"shot {i} carries index {shot.index}")
        if (shot.serve_attempt is not None) != (shot.stroke == "serve"):
            v.append(f"shot {i}: serve_attempt present iff the stroke is a serve")

    for i in range(1, len(shots)):
        prev, cur = shots[i - 1], shots[i]
        if not cur.timestamp > prev.timestamp:
            v.append(f"timestamps must strictly increase at shot {i}")
        if prev.outcome in ("fault", "let"):
            if cur.hitter != prev.hitter or cur.stroke != "serve":
                v.append(f"shot {i}: expected a serve retry by the same player")
            elif prev.outcome == "fault" and cur.serve_attempt != "second":
                v.append(f"shot {i}: retry after a fault must be a second serve")
        else:
            if cur.hitter == prev.hitter:
                v.append(f"shot {i}: hitter alternation violated")
            if cur.stroke == "serve":
                v.append(f"shot {i}: serve in the middle of a rally")
        if prev.outcome not in ("in", "fault", "let"):
            # one trailing touch after a winning serve is a recorded fact,
            # not continued play
            touch = (prev.stroke == "serve" and prev.outcome == "winner"
                     and i == len(shots) - 1 and cur.hitter != prev.hitter)
            if not touch:
                v.append(f"shot {i}: play continued after a point-ending "
                         f"{prev.outcome!r}")
    return v


def validate_rally(rally: RallyRecord) -> ValidityReport:
    """Structural checks for one record: events, identity and outcome."""
    v = _shot_violations(rally.shots)

    try:
        _, start, end = parse_clip_id(rally.clip_id)
        duration = end - start
    except ValueError as exc:
        v.append(str(exc))
        duration = None

    if duration is not None:
        for i, bounce in enumerate(rally.bounces):
            if not 0.0 <= bounce.timestamp <= duration:
                v.append(f"bounce {i} at {bounce.timestamp}s is outside the clip")

    if rally.shots and rally.shots[0].stroke == "serve":
        if rally.shots[0].hitter != rally.initial_score.server:
            v.append("opening server does not match the scoreboard server")

    if not v:
        try:
            derived = derive_outcome(rally.shots)
        except (IncompleteRally, ValueError) as exc:
            v.append(f"outcome cannot be derived: {exc}")
        else:
            if derived != rally.outcome:
                v.append(
                    f"recorded outcome {rally.outcome} disagrees with "
                    f"derived {derived}")
    return ValidityReport(tuple(v))


# ---------------------------------------------------------------------------
# Edit Score
# ---------------------------------------------------------------------------


def _levenshtein(a, b) -> int:
    # Two-row DP; tokens only need equality.
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        current = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1,
                               previous[j - 1] + cost))
        previous = current
    return previous[-1]


def edit_score(predicted, reference) -> float:
    """100 * (1 - edit distance / max length); two empty sequences score 100."""
    predicted = list(predicted)
    reference = list(reference)
    longest = max(len(predicted), len(reference))
    if longest == 0:
        return 100.0
    return 100.0 * (1.0 - _levenshtein(predicted, reference) / longest)


# ---------------------------------------------------------------------------
# Statistic increments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatContribution:
    """Sparse per-player statistic increments extracted from one rally."""

    per_player: dict[str, dict[str, int]]
    point_winner: str

    def of(self, player_id: str) -> dict[str, int]:
        return self.per_player[player_id]


def classify_point(rally: RallyRecord) -> StatContribution:
    """Break one rally down into broadcast-statistic increments.

    Covers service, return, shot-ending and break-point categories; every
    rally yields exactly one point won, one serve point and one return point.
    """
    shots = rally.shots
    server = shots[0].hitter
    returner = other_player(server)
    outcome = rally.outcome
    inc = {server: {"serve_points": 1}, returner: {"return_points": 1}}

    def bump(player, name, by=1):
        inc[player][name] = inc[player].get(name, 0) + by

    if any(s.stroke == "serve" and s.serve_attempt == "first"
           and s.outcome in ("in", "winner") for s in shots):
        bump(server, "first_serves_in")

    reason = outcome.reason
    if reason == "ace":
        bump(server, "aces")
    elif reason == "double_fault":
        bump(server, "double_faults")
    elif reason == "winner":
        bump(outcome.point_winner, "winners")
    elif reason == "unforced_error":
        bump(outcome.point_loser, "unforced_errors")
    elif reason == "forced_error":
        bump(outcome.point_loser, "forced_errors_conceded")

    bump(outcome.point_winner, "points_won")
    if outcome.point_winner == server:
        bump(server, "serve_points_won")
    else:
        bump(returner, "return_points_won")

    if is_break_point(rally.initial_score):
        bump(server, "break_points_faced")
        if outcome.point_winner == server:
            bump(server, "break_points_saved")
        else:
            bump(returner, "break_points_converted")

    for shot in shots:
        bump(shot.hitter, "total_shots")

    return StatContribution(per_player=inc, point_winner=outcome.point_winner)


# ---------------------------------------------------------------------------
# Dataset (JSONL) serialization
# ---------------------------------------------------------------------------


def _score_cell(value):
    return value if value == AD else int(value)


def rally_to_json(rally: RallyRecord) -> dict:
    """Render one record as the dataset's JSON object.

    The scoreboard block uses the on-screen shape: per-player
    ``[sets won, games, points]`` plus the server's display name.
    """
    info = rally.match_info
    score = rally.initial_score
    p1_sets, p2_sets = score.sets_won()
    scoreboard = {
        info.player_1.name: [p1_sets, score.games[0], _score_cell(score.points[0])],
        info.player_2.name: [p2_sets, score.games[1], _score_cell(score.points[1])],
        "server": info.name_of(score.server),
    }
    shot_sequence = []
    for shot in rally.shots:
        entry = {
            "shot_index": shot.index,
            "hitter": shot.hitter,
            "stroke": shot.stroke,
            "technique": shot.technique,
            "direction": shot.direction,
            "outcome": shot.outcome,
            "timestamp": shot.timestamp,
        }
        if shot.serve_attempt is not None:
            entry["serve_attempt"] = shot.serve_attempt
        if shot.hitter_position is not None:
            entry["hitter_position"] = list(shot.hitter_position)
        if shot.ball_position is not None:
            entry["ball_position"] = list(shot.ball_position)
        shot_sequence.append(entry)

    obj = {
        "clip_id": rally.clip_id,
        "match_info": {
            "tournament": info.tournament,
            "round": info.round,
            "surface": info.surface,
            "player_1": {"name": info.player_1.name,
                         "handedness": info.player_1.handedness},
            "player_2": {"name": info.player_2.name,
                         "handedness": info.player_2.handedness},
        },
        "scoreboard": scoreboard,
        "audio_transcript": rally.transcript,
        "shot_sequence": shot_sequence,
        "outcome": {
            "point_winner": rally.outcome.point_winner,
            "point_loser": rally.outcome.point_loser,
            "reason": rally.outcome.reason,
        },
    }
    if rally.bounces:
        obj["bounces"] = [
            {"timestamp": b.timestamp, "court_half": b.court_half,
             **({"position": list(b.position)} if b.position is not None else {})}
            for b in rally.bounces
        ]
    if rally.commentary is not None:
        obj["commentary"] = rally.commentary
    return obj


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise SchemaViolation(f"{context}: missing field {key!r}")
    return obj[key]


def _pair(value, context: str) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(x, (int, float)) for x in value)):
        raise SchemaViolation(f"{context}: expected an [x, y] pair, got {value!r}")
    return float(value[0]), float(value[1])


def _points_from_json(cells, games, config: ScoringConfig):
    trigger = config.set_trigger_games
    in_tiebreak = games == (trigger, trigger)
    points = []
    for cell in cells:
        if in_tiebreak:
            if cell == AD or not isinstance(cell, int) or cell < 0:
                raise SchemaViolation(f"tiebreak point value must be a non-negative int: {cell!r}")
            points.append(cell)
        else:
            token = cell if cell == AD else str(cell)
            if token not in POINT_LADDER and token != AD:
                raise SchemaViolation(f"illegal point value: {cell!r}")
            points.append(token)
    return tuple(points), in_tiebreak


def rally_from_json(obj: dict, config: ScoringConfig | None = None) -> RallyRecord:
    """Parse one dataset JSON object; raises SchemaViolation on bad shape.

    Finished sets appear on the board only as a per-player count, so they are
    reconstructed as synthetic ``trigger-0`` results for the winner.
    """
    config = config or ScoringConfig()
    if not isinstance(obj, dict):
        raise SchemaViolation(f"record must be a JSON object, got {type(obj).__name__}")
    clip_id = _require(obj, "clip_id", "record")
    try:
        parse_clip_id(str(clip_id))
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from None

    info_obj = _require(obj, "match_info", clip_id)
    players = []
    for pid in ("player_1", "player_2"):
        p = _require(info_obj, pid, f"{clip_id} match_info")
        players.append(PlayerRef(id=pid, name=str(_require(p, "name", pid)),
                                 handedness=p.get("handedness", "right")))
    info = MatchInfo(
        tournament=str(info_obj.get("tournament", "")),
        round=str(info_obj.get("round", "")),
        surface=str(info_obj.get("surface", "")),
        player_1=players[0], player_2=players[1],
    )

    board = _require(obj, "scoreboard", clip_id)
    rows = {}
    for ref in players:
        if ref.name not in board:
            raise SchemaViolation(f"{clip_id}: scoreboard row for {ref.name!r} missing")
        row = board[ref.name]
        if not isinstance(row, list) or len(row) != 3:
            raise SchemaViolation(
                f"{clip_id}: scoreboard row must be [sets, games, points], got {row!r}")
        rows[ref.id] = row
    server_name = _require(board, "server", clip_id)
    server = info.id_of_name(str(server_name))
    if server is None:
        raise SchemaViolation(f"{clip_id}: server {server_name!r} is not a match player")

    for pid in ("player_1", "player_2"):
        if not isinstance(rows[pid][0], int) or not isinstance(rows[pid][1], int):
            raise SchemaViolation(f"{clip_id}: sets and games must be integers")
    completed = synthesize_completed_sets(
        rows["player_1"][0], rows["player_2"][0], config.set_trigger_games)
    games = (rows["player_1"][1], rows["player_2"][1])
    try:
        points, in_tiebreak = _points_from_json(
            (rows["player_1"][2], rows["player_2"][2]), games, config)
    except SchemaViolation as exc:
        raise SchemaViolation(f"{clip_id}: {exc}") from None
    score = MatchScore(completed_sets=completed, games=games, points=points,
                       server=server, in_tiebreak=in_tiebreak, config=config)

    raw_shots = _require(obj, "shot_sequence", clip_id)
    if not isinstance(raw_shots, list) or not raw_shots:
        raise SchemaViolation(f"{clip_id}: shot_sequence must be a non-empty list")
    shots = []
    for i, s in enumerate(raw_shots):
        try:
            shots.append(ShotEvent(
                index=int(_require(s, "shot_index", f"{clip_id} shot {i}")),
                hitter=str(_require(s, "hitter", f"{clip_id} shot {i}")),
                stroke=str(_require(s, "stroke", f"{clip_id} shot {i}")),
                technique=str(_require(s, "technique", f"{clip_id} shot {i}")),
                direction=str(_require(s, "direction", f"{clip_id} shot {i}")),
                outcome=str(_require(s, "outcome", f"{clip_id} shot {i}")),
                timestamp=float(_require(s, "timestamp", f"{clip_id} shot {i}")),
                serve_attempt=s.get("serve_attempt"),
                hitter_position=_pair(s["hitter_position"], f"{clip_id} shot {i}")
                if "hitter_position" in s else None,
                ball_position=_pair(s["ball_position"], f"{clip_id} shot {i}")
                if "ball_position" in s else None,
            ))
        except ValueError as exc:
            raise SchemaViolation(f"{clip_id} shot {i}: {exc}") from None

    bounces = []
    for i, b in enumerate(obj.get("bounces", [])):
        try:
            bounces.append(BounceEvent(
                timestamp=float(_require(b, "timestamp", f"{clip_id} bounce {i}")),
                court_half=str(_require(b, "court_half", f"{clip_id} bounce {i}")),
                position=_pair(b["position"], f"{clip_id} bounce {i}")
                if "position" in b else None,
            ))
        except ValueError as exc:
            raise SchemaViolation(f"{clip_id} bounce {i}: {exc}") from None

    outcome_obj = _require(obj, "outcome", clip_id)
    try:
        outcome = RallyOutcome(
            point_winner=str(_require(outcome_obj, "point_winner", clip_id)),
            point_loser=str(_require(outcome_obj, "point_loser", clip_id)),
            reason=str(_require(outcome_obj, "reason", clip_id)),
        )
    except ValueError as exc:
        raise SchemaViolation(f"{clip_id} outcome: {exc}") from None

    commentary = obj.get("commentary")
    return RallyRecord(
        clip_id=str(clip_id), match_info=info, initial_score=score,
        shots=tuple(shots), outcome=outcome,
        transcript=str(obj.get("audio_transcript", "")),
        bounces=tuple(bounces),
        commentary=str(commentary) if commentary is not None else None,
    )
