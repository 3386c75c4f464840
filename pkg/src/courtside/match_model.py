"""Tennis scoring state machine and tournament scoreboard parsing.

The match state lives in :class:`MatchScore`: completed sets, games in the
current set, points in the current game (``0/15/30/40/AD`` strings, or plain
integers inside a tiebreak) and the current server.  ``advance_point`` is the
only legal transition; everything else (break-point detection, terminal
checks, reachability validation, scoreboard ingestion) is derived from it.

All values are immutable; operations return new instances.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field, replace

from .validity import ValidityReport

PLAYER_1 = "player_1"
PLAYER_2 = "player_2"
PLAYER_IDS = (PLAYER_1, PLAYER_2)

POINT_LADDER = ("0", "15", "30", "40")
AD = "AD"

LAYOUT_AO_USO = "AO_USO"
LAYOUT_RG = "RG"
LAYOUT_WIMBLEDON = "WIMBLEDON"
LAYOUTS = (LAYOUT_AO_USO, LAYOUT_RG, LAYOUT_WIMBLEDON)

# Serve-indicator tokens as they appear per tournament layout.
SERVER_MARKERS = {
    LAYOUT_AO_USO: ("icon",),
    LAYOUT_RG: ("/", "//"),
    LAYOUT_WIMBLEDON: ("<",),
}


class ScoreboardError(ValueError):
    """Base class for scoreboard ingestion failures."""


class UnknownLayout(ScoreboardError):
    pass


class RowLengthMismatch(ScoreboardError):
    pass


class IllegalToken(ScoreboardError):
    pass


class AmbiguousServer(ScoreboardError):
    pass


class TerminalState(ValueError):
    """The match is already decided; no further points may be played."""


class InvalidState(ValueError):
    """The score value is structurally broken and cannot be advanced."""


def other_player(player_id: str) -> str:
    if player_id == PLAYER_1:
        return PLAYER_2
    if player_id == PLAYER_2:
        return PLAYER_1
    raise ValueError(f"unknown player id: {player_id!r}")


@dataclass(frozen=True)
class PlayerRef:
    """One of the two competitors, as referenced by metadata and prompts."""

    id: str
    name: str
    handedness: str = "right"

    def __post_init__(self):
        if self.id not in PLAYER_IDS:
            raise ValueError(f"player id must be one of {PLAYER_IDS}, got {self.id!r}")
        if not self.name:
            raise ValueError("player name must be non-empty")
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be left or right, got {self.handedness!r}")

    @property
    def surname(self) -> str:
        return self.name.split()[-1]


@dataclass(frozen=True)
class ScoringConfig:
    """Match format: set count, set trigger games and tiebreak targets.

    Defaults follow the harmonised Grand Slam format: best of 3, tiebreak to 7
    at 6-6, and a 10-point tiebreak at 6-6 in the deciding set.
    """

    best_of: int = 3
    set_trigger_games: int = 6
    tiebreak_points: int = 7
    final_set_tiebreak_points: int = 10
    ad_scoring: bool = True

    def __post_init__(self):
        if self.best_of not in (3, 5):
            raise ValueError("best_of must be 3 or 5")
        if self.set_trigger_games < 1:
            raise ValueError("set_trigger_games must be >= 1")
        if self.tiebreak_points < 1 or self.final_set_tiebreak_points < 1:
            raise ValueError("tiebreak targets must be >= 1")

    @property
    def sets_to_win(self) -> int:
        return self.best_of // 2 + 1

    def cache_key(self) -> tuple:
        return (
            self.set_trigger_games,
            self.tiebreak_points,
            self.final_set_tiebreak_points,
            self.ad_scoring,
        )


@dataclass(frozen=True)
class MatchScore:
    """Full scoring state: finished sets, current games, points and server.

    ``completed_sets`` lists ``(player_1 games, player_2 games)`` per finished
    set, oldest first.  ``points`` holds ladder strings in a standard game and
    non-negative integers when ``in_tiebreak`` is set.
    """

    completed_sets: tuple[tuple[int, int], ...] = ()
    games: tuple[int, int] = (0, 0)
    points: tuple = ("0", "0")
    server: str = PLAYER_1
    in_tiebreak: bool = False
    config: ScoringConfig = field(default_factory=ScoringConfig)

    def sets_won(self) -> tuple[int, int]:
        p1 = sum(1 for a, b in self.completed_sets if a > b)
        p2 = sum(1 for a, b in self.completed_sets if b > a)
        return p1, p2

    def in_final_set(self) -> bool:
        need = self.config.best_of // 2
        return self.sets_won() == (need, need)

    def tiebreak_target(self) -> int:
        if self.in_final_set():
            return self.config.final_set_tiebreak_points
        return self.config.tiebreak_points

    def point_of(self, player_id: str):
        return self.points[_index(player_id)]

    def games_of(self, player_id: str) -> int:
        return self.games[_index(player_id)]

    @property
    def returner(self) -> str:
        return other_player(self.server)


def _index(player_id: str) -> int:
    if player_id == PLAYER_1:
        return 0
    if player_id == PLAYER_2:
        return 1
    raise ValueError(f"unknown player id: {player_id!r}")


def _player_of(winner) -> str:
    # Accept a PlayerRef or a bare id string.
    return getattr(winner, "id", winner)


# ---------------------------------------------------------------------------
# Set-level transition kernel
# ---------------------------------------------------------------------------

# Result of one point inside a set:
#   (games, in_tiebreak, points, game_ended, set_result)
# where set_result is None while the set is live, else the final games pair.
_SetStep = tuple[tuple[int, int], bool, tuple, bool, "tuple[int, int] | None"]


def _advance_set_state(
    games: tuple[int, int],
    in_tiebreak: bool,
    points: tuple,
    winner_idx: int,
    config: ScoringConfig,
    tiebreak_target: int,
) -> _SetStep:
    loser_idx = 1 - winner_idx
    trigger = config.set_trigger_games

    if in_tiebreak:
        pts = list(points)
        pts[winner_idx] += 1
        if pts[winner_idx] >= tiebreak_target and pts[winner_idx] - pts[loser_idx] >= 2:
            final = [0, 0]
            final[winner_idx] = trigger + 1
            final[loser_idx] = trigger
            return games, False, ("0", "0"), True, tuple(final)
        return games, True, tuple(pts), False, None

    w, l = points[winner_idx], points[loser_idx]
    if w == AD:
        game_won = True
    elif w == "40":
        if l == AD:
            new = ["40", "40"]
            return games, False, tuple(new), False, None
        if l == "40" and config.ad_scoring:
            new = list(points)
            new[winner_idx] = AD
            return games, False, tuple(new), False, None
        game_won = True
    else:
        new = list(points)
        new[winner_idx] = POINT_LADDER[POINT_LADDER.index(w) + 1]
        return games, False, tuple(new), False, None

    if game_won:
        g = list(games)
        g[winner_idx] += 1
        if g[winner_idx] >= trigger and g[winner_idx] - g[loser_idx] >= 2:
            return tuple(g), False, ("0", "0"), True, tuple(g)
        if g[winner_idx] == trigger and g[loser_idx] == trigger:
            return tuple(g), True, (0, 0), True, None
        return tuple(g), False, ("0", "0"), True, None
    raise AssertionError("unreachable")


def _tiebreak_first_server(current_server: str, points_played: int) -> str:
    """Recover who served point 0 of the tiebreak from the current state."""
    if ((points_played + 1) // 2) % 2 == 0:
        return current_server
    return other_player(current_server)


def _tiebreak_server_at(first_server: str, k: int) -> str:
    """Server of tiebreak point k (0-indexed): one serve, then two each."""
    if ((k + 1) // 2) % 2 == 0:
        return first_server
    return other_player(first_server)


# ---------------------------------------------------------------------------
# Public transitions
# ---------------------------------------------------------------------------


def is_terminal(score: MatchScore) -> str | None:
    """Return the match winner's player id, or None while the match is live."""
    p1, p2 = score.sets_won()
    if p1 >= score.config.sets_to_win:
        return PLAYER_1
    if p2 >= score.config.sets_to_win:
        return PLAYER_2
    return None


def advance_point(score: MatchScore, winner) -> MatchScore:
    """Apply one point won by ``winner`` and return the next state.

    Handles the full progression: point ladder, deuce/advantage (or sudden
    death when ad scoring is off), game and set closure, tiebreak entry at
    trigger-trigger with the one-then-two serve rotation, and the deciding-set
    tiebreak target.
    """
    winner_id = _player_of(winner)
    winner_idx = _index(winner_id)
    if is_terminal(score) is not None:
        raise TerminalState("match already decided")
    _check_structure(score)

    points_before = sum(score.points) if score.in_tiebreak else 0
    games, in_tb, points, game_ended, set_result = _advance_set_state(
        score.games, score.in_tiebreak, score.points, winner_idx,
        score.config, score.tiebreak_target(),
    )

    if set_result is not None:
        if score.in_tiebreak:
            first = _tiebreak_first_server(score.server, points_before)
            next_server = other_player(first)
        else:
            next_server = other_player(score.server)
        return replace(
            score,
            completed_sets=score.completed_sets + (set_result,),
            games=(0, 0),
            points=("0", "0"),
            in_tiebreak=False,
            server=next_server,
        )

    if game_ended:
        # Covers both a normal game and entry into a tiebreak: the next
        # game's server (the tiebreak's first server) alternates as usual.
        return replace(
            score, games=games, points=points, in_tiebreak=in_tb,
            server=other_player(score.server),
        )

    if score.in_tiebreak:
        first = _tiebreak_first_server(score.server, points_before)
        server = _tiebreak_server_at(first, points_before + 1)
        return replace(score, points=points, server=server)

    return replace(score, points=points)


def is_break_point(score: MatchScore) -> bool:
    """True iff the returner takes the game by winning the next point.

    Defined for standard games only; inside a tiebreak there is no game to
    break and the answer is False.
    """
    if score.in_tiebreak:
        return False
    ret = score.point_of(score.returner)
    srv = score.point_of(score.server)
    if ret == AD:
        return True
    return ret == "40" and srv in ("0", "15", "30")


def _check_structure(score: MatchScore) -> None:
    if score.in_tiebreak:
        if not all(isinstance(p, int) and p >= 0 for p in score.points):
            raise InvalidState(f"tiebreak points must be non-negative ints: {score.points!r}")
    else:
        for p in score.points:
            if p not in POINT_LADDER and p != AD:
                raise InvalidState(f"illegal point value: {p!r}")
        if score.points == (AD, AD):
            raise InvalidState("both players at AD")
    if any(g < 0 for g in score.games):
        raise InvalidState(f"negative games: {score.games!r}")


# ---------------------------------------------------------------------------
# Reachability validation
# ---------------------------------------------------------------------------


def _canonical_tb(points: tuple[int, int], target: int) -> tuple[int, int]:
    # Beyond target-all the win-by-two loop repeats; fold it down so the
    # reachable-state closure stays finite.
    a, b = points
    while a > target and b > target:
        a, b = a - 1, b - 1
    return a, b


@functools.lru_cache(maxsize=None)
def _set_closure(config_key: tuple, trigger: int, target: int, ad: bool) -> frozenset:
    """All live (games, in_tiebreak, points) states reachable from 0-0."""
    config = ScoringConfig(
        best_of=3, set_trigger_games=trigger, tiebreak_points=target,
        final_set_tiebreak_points=target, ad_scoring=ad,
    )
    start = ((0, 0), False, ("0", "0"))
    seen = {start}
    frontier = [start]
    while frontier:
        games, in_tb, points = frontier.pop()
        for winner_idx in (0, 1):
            g, tb, pts, _, set_result = _advance_set_state(
                games, in_tb, points, winner_idx, config, target)
            if set_result is not None:
                continue
            if tb:
                pts = _canonical_tb(pts, target)
            state = (g, tb, pts)
            if state not in seen:
                seen.add(state)
                frontier.append(state)
    return frozenset(seen)


def _set_state_reachable(score: MatchScore) -> bool:
    config = score.config
    target = score.tiebreak_target()
    closure = _set_closure(config.cache_key(), config.set_trigger_games, target,
                           config.ad_scoring)
    points = score.points
    if score.in_tiebreak:
        a, b = points
        if min(a, b) > target:
            points = _canonical_tb(points, target)
    return (score.games, score.in_tiebreak, points) in closure


def synthesize_completed_sets(p1_sets: int, p2_sets: int,
                              trigger: int) -> tuple[tuple[int, int], ...]:
    """Reconstruct per-set game pairs from bare won-set counts.

    Boards and dataset rows carry only how many sets each player holds, so
    each won set becomes a synthetic trigger-0 result.  Sets alternate before
    the leader's surplus so the sequence never continues past a clinched
    match when the counts themselves are legal.
    """
    win_1, win_2 = (trigger, 0), (0, trigger)
    shared = min(p1_sets, p2_sets)
    sets: list[tuple[int, int]] = []
    for _ in range(shared):
        sets.extend((win_1, win_2))
    sets.extend([win_1] * (p1_sets - shared))
    sets.extend([win_2] * (p2_sets - shared))
    return tuple(sets)


def _valid_set_result(pair: tuple[int, int], trigger: int) -> bool:
    w, l = max(pair), min(pair)
    if w == l:
        return False
    return (w == trigger and w - l >= 2) or (w == trigger + 1 and l in (trigger - 1, trigger))


def validate_scoreboard(score: MatchScore) -> ValidityReport:
    """Check every MatchScore invariant, including exact reachability.

    A state passes iff it can be produced by ``advance_point`` transitions
    from a fresh match under the score's own config.
    """
    v: list[str] = []
    config = score.config
    trigger = config.set_trigger_games

    if score.server not in PLAYER_IDS:
        v.append(f"unknown server: {score.server!r}")

    if score.in_tiebreak:
        if not all(isinstance(p, int) and p >= 0 for p in score.points):
            v.append(f"tiebreak points must be non-negative integers: {score.points!r}")
        if score.games != (trigger, trigger):
            v.append(f"tiebreak flagged at games {score.games}, expected {trigger}-{trigger}")
    else:
        bad = [p for p in score.points if p not in POINT_LADDER and p != AD]
        if bad:
            v.append(f"illegal point values: {bad!r}")
        if score.points == (AD, AD):
            v.append("both players at AD")
        elif AD in score.points:
            opp = score.points[1] if score.points[0] == AD else score.points[0]
            if opp != "40":
                v.append(f"AD with opponent at {opp!r}, expected 40")
            if not config.ad_scoring:
                v.append("AD under no-ad scoring")

    if any(not isinstance(g, int) or g < 0 for g in score.games):
        v.append(f"games must be non-negative integers: {score.games!r}")
    elif any(g > trigger + 1 for g in score.games):
        v.append(f"games exceed trigger+1: {score.games!r}")

    if len(score.completed_sets) > config.best_of:
        v.append(f"{len(score.completed_sets)} completed sets exceeds best-of-{config.best_of}")
    for i, pair in enumerate(score.completed_sets):
        if not _valid_set_result(pair, trigger):
            v.append(f"set {i + 1} result {pair} violates set-winning rules")

    need = config.sets_to_win
    p1 = p2 = 0
    for i, (a, b) in enumerate(score.completed_sets):
        decided_before = p1 >= need or p2 >= need
        if decided_before:
            v.append(f"set {i + 1} played after the match was decided")
            break
        p1 += 1 if a > b else 0
        p2 += 1 if b > a else 0

    if not v:
        if is_terminal(score) is not None:
            if score.games != (0, 0) or score.points != ("0", "0") or score.in_tiebreak:
                v.append("live games/points on a decided match")
        elif not _set_state_reachable(score):
            v.append(
                f"state games={score.games} points={score.points} "
                f"in_tiebreak={score.in_tiebreak} unreachable from 0-0"
            )

    return ValidityReport(tuple(v))


# ---------------------------------------------------------------------------
# Canonical text rendering
# ---------------------------------------------------------------------------


def score_summary(score: MatchScore) -> str:
    """Lossless one-line rendering: sets, games, points, server.

    ``parse_summary`` inverts it exactly (given the same config).
    """
    if score.completed_sets:
        sets_part = " ".join(f"{a}-{b}" for a, b in score.completed_sets)
    else:
        sets_part = "0-0"
    games_part = f"{score.games[0]}-{score.games[1]}"
    pa, pb = score.points
    points_part = f"{pa}:{pb}"
    if score.in_tiebreak:
        points_part += " TB"
    return f"{sets_part}, {games_part}, {points_part}, server {score.server}"


_SUMMARY_RE = re.compile(
    r"^(?P<sets>[\d\- ]+), (?P<games>\d+-\d+), "
    r"(?P<pa>\w+):(?P<pb>\w+)(?P<tb> TB)?, server (?P<server>player_[12])$"
)


def parse_summary(text: str, config: ScoringConfig | None = None) -> MatchScore:
    """Inverse of :func:`score_summary`."""
    m = _SUMMARY_RE.match(text.strip())
    if m is None:
        raise ValueError(f"unparsable score summary: {text!r}")
    config = config or ScoringConfig()
    set_tokens = m.group("sets").split()
    completed: tuple[tuple[int, int], ...] = ()
    if set_tokens != ["0-0"]:
        completed = tuple(
            (int(a), int(b)) for a, b in (tok.split("-") for tok in set_tokens)
        )
    ga, gb = (int(x) for x in m.group("games").split("-"))
    in_tb = m.group("tb") is not None
    if in_tb:
        points: tuple = (int(m.group("pa")), int(m.group("pb")))
    else:
        points = (m.group("pa"), m.group("pb"))
    return MatchScore(
        completed_sets=completed, games=(ga, gb), points=points,
        server=m.group("server"), in_tiebreak=in_tb, config=config,
    )


# ---------------------------------------------------------------------------
# Scoreboard ingestion (tournament layouts)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawScoreboard:
    """Extracted scoreboard columns for both players, before interpretation.

    ``rows`` are ordered top row first; ``server_row`` is the row carrying the
    serve indicator (None when the marker was missing or on both rows).
    """

    layout: str
    names: tuple[str, str]
    rows: tuple[tuple[str, ...], tuple[str, ...]]
    server_row: int | None

    @classmethod
    def from_json(cls, layout: str, obj: dict) -> "RawScoreboard":
        """Build from ``{"NAME1": [cols], "NAME2": [cols], "server": name}``."""
        names = [k for k in obj if k != "server"]
        if len(names) != 2:
            raise RowLengthMismatch(f"expected exactly two player rows, got {names!r}")
        rows = tuple(tuple(str(c) for c in obj[n]) for n in names)
        server_row: int | None = None
        server_name = obj.get("server")
        if server_name in names:
            server_row = names.index(server_name)
        return cls(layout=layout, names=(names[0], names[1]), rows=rows,
                   server_row=server_row)


def server_row_from_markers(layout: str, marker_cells: tuple[str, str]) -> int | None:
    """Normalize per-layout serve-indicator cells to a row index."""
    if layout not in LAYOUTS:
        raise UnknownLayout(f"unknown scoreboard layout: {layout!r}")
    tokens = SERVER_MARKERS[layout]
    flags = [cell.strip() in tokens for cell in marker_cells]
    if flags == [True, False]:
        return 0
    if flags == [False, True]:
        return 1
    return None


def _normalize_rows(layout: str, rows) -> tuple[list[str], list[str]]:
    top = [str(c).strip() for c in rows[0]]
    bottom = [str(c).strip() for c in rows[1]]

    if layout == LAYOUT_WIMBLEDON and len(top) == 2 and len(bottom) == 2:
        # Points column absent between games: both players at 0.
        top.append("0")
        bottom.append("0")

    if len(top) != len(bottom):
        raise RowLengthMismatch(f"row lengths differ: {len(top)} vs {len(bottom)}")
    if not top:
        raise RowLengthMismatch("empty scoreboard rows")

    # One row shows AD in the last column, the other is left blank: fill 40.
    last = (top[-1], bottom[-1])
    if last[0] == AD and last[1] == "":
        bottom[-1] = "40"
    elif last[1] == AD and last[0] == "":
        top[-1] = "40"

    return top, bottom


def _parse_int(token: str, what: str) -> int:
    if not token.isdigit():
        raise IllegalToken(f"{what} column must be a non-negative integer, got {token!r}")
    return int(token)


def parse_scoreboard(raw: RawScoreboard, config: ScoringConfig | None = None) -> MatchScore:
    """Interpret extracted scoreboard columns as a MatchScore.

    AO/US Open and Roland Garros rows read left-to-right as completed-set
    games, current-set games, then points; Wimbledon rows are the fixed
    ``[sets won, games, points]`` triple (sets won are stored as synthetic
    ``trigger-0`` set results, since the board does not show per-set games).
    Integer point columns at trigger-trigger games are read as a tiebreak.
    """
    if raw.layout not in LAYOUTS:
        raise UnknownLayout(f"unknown scoreboard layout: {raw.layout!r}")
    config = config or ScoringConfig()
    top, bottom = _normalize_rows(raw.layout, raw.rows)

    if raw.server_row not in (0, 1):
        raise AmbiguousServer("serve indicator missing or not attributable to one row")
    server = PLAYER_IDS[raw.server_row]

    if raw.layout == LAYOUT_WIMBLEDON:
        if len(top) != 3:
            raise RowLengthMismatch(
                f"Wimbledon rows must have 3 columns after normalization, got {len(top)}")
        sets_top = _parse_int(top[0], "sets-won")
        sets_bottom = _parse_int(bottom[0], "sets-won")
        completed = synthesize_completed_sets(sets_top, sets_bottom,
                                              config.set_trigger_games)
        games = (_parse_int(top[1], "games"), _parse_int(bottom[1], "games"))
        point_tokens = (top[2], bottom[2])
    else:
        if len(top) < 2:
            raise RowLengthMismatch("need at least games and points columns")
        completed = tuple(
            (_parse_int(a, "set games"), _parse_int(b, "set games"))
            for a, b in zip(top[:-2], bottom[:-2])
        )
        games = (_parse_int(top[-2], "games"), _parse_int(bottom[-2], "games"))
        point_tokens = (top[-1], bottom[-1])

    trigger = config.set_trigger_games
    in_tiebreak = games == (trigger, trigger)
    if in_tiebreak and any(t == AD for t in point_tokens):
        raise IllegalToken("AD is not a legal tiebreak point value")
    if in_tiebreak:
        points: tuple = tuple(_parse_int(t, "tiebreak points") for t in point_tokens)
    else:
        for t in point_tokens:
            if t not in POINT_LADDER and t != AD:
                raise IllegalToken(f"illegal point value: {t!r}")
        points = point_tokens

    return MatchScore(
        completed_sets=completed, games=games, points=points,
        server=server, in_tiebreak=in_tiebreak, config=config,
    )


def render_scoreboard(score: MatchScore, layout: str, names: tuple[str, str]) -> dict:
    """Render a MatchScore back into the per-layout JSON column format."""
    if layout not in LAYOUTS:
        raise UnknownLayout(f"unknown scoreboard layout: {layout!r}")
    if layout == LAYOUT_WIMBLEDON:
        p1_sets, p2_sets = score.sets_won()
        top = [str(p1_sets), str(score.games[0]), str(score.points[0])]
        bottom = [str(p2_sets), str(score.games[1]), str(score.points[1])]
    else:
        top = [str(a) for a, _ in score.completed_sets]
        bottom = [str(b) for _, b in score.completed_sets]
        top += [str(score.games[0]), str(score.points[0])]
        bottom += [str(score.games[1]), str(score.points[1])]
    server_name = names[0] if score.server == PLAYER_1 else names[1]
    return {names[0]: top, names[1]: bottom, "server": server_name}
