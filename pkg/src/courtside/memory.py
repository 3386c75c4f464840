"""Hierarchical match memory: a bounded FIFO of recent rallies plus
consolidated per-player statistics.

New rallies enter the short-term window; once the window overflows, the
oldest rally is evicted and folded into the long-term statistic lines, so at
any instant every past rally is represented in exactly one of the two tiers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .event_stream import RallyRecord, classify_point
from .match_model import (
    MatchScore,
    PLAYER_1,
    PLAYER_2,
    advance_point,
    score_summary,
)

DEFAULT_WINDOW = 4


class OutOfOrderEntry(ValueError):
    """A pushed rally does not extend the stored sequence."""


class NonSequentialConsolidation(ValueError):
    """Rallies must be consolidated in stream order, without gaps."""


@dataclass(frozen=True)
class PlayerStatLine:
    """Cumulative broadcast statistics for one player."""

    aces: int = 0
    double_faults: int = 0
    first_serves_in: int = 0
    serve_points: int = 0
    serve_points_won: int = 0
    return_points: int = 0
    return_points_won: int = 0
    winners: int = 0
    unforced_errors: int = 0
    forced_errors_conceded: int = 0
    break_points_faced: int = 0
    break_points_saved: int = 0
    break_points_converted: int = 0
    points_won: int = 0
    games_won: int = 0
    total_shots: int = 0

    def add(self, increments: dict[str, int]) -> "PlayerStatLine":
        unknown = set(increments) - {f.name for f in fields(self)}
        if unknown:
            raise ValueError(f"unknown statistic fields: {sorted(unknown)}")
        return replace(self, **{
            k: getattr(self, k) + n for k, n in increments.items()
        })

    def bound_violations(self) -> list[str]:
        v = []
        for name in (f.name for f in fields(self)):
            if getattr(self, name) < 0:
                v.append(f"{name} is negative")
        if self.first_serves_in > self.serve_points:
            v.append("first_serves_in exceeds serve_points")
        if self.serve_points_won > self.serve_points:
            v.append("serve_points_won exceeds serve_points")
        if self.return_points_won > self.return_points:
            v.append("return_points_won exceeds return_points")
        if self.break_points_saved > self.break_points_faced:
            v.append("break_points_saved exceeds break_points_faced")
        return v

    # Ratios are views; with a zero denominator they are absent, never 0.
    @property
    def first_serve_pct(self) -> float | None:
        if self.serve_points == 0:
            return None
        return self.first_serves_in / self.serve_points

    @property
    def serve_points_won_pct(self) -> float | None:
        if self.serve_points == 0:
            return None
        return self.serve_points_won / self.serve_points

    @property
    def return_points_won_pct(self) -> float | None:
        if self.return_points == 0:
            return None
        return self.return_points_won / self.return_points

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["first_serve_pct"] = self.first_serve_pct
        out["serve_points_won_pct"] = self.serve_points_won_pct
        out["return_points_won_pct"] = self.return_points_won_pct
        return out


@dataclass(frozen=True)
class MemoryEntry:
    """One remembered rally: clip reference, metadata and its commentary."""

    rally_index: int
    rally_ref: str
    metadata: RallyRecord
    commentary: str | None

    def __post_init__(self):
        if not self.rally_ref:
            raise ValueError("rally_ref must be non-empty")
        if self.rally_index < 0:
            raise ValueError("rally_index must be non-negative")


@dataclass(frozen=True)
class ShortTermMemory:
    capacity: int = DEFAULT_WINDOW
    entries: tuple[MemoryEntry, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LongTermMemory:
    stat_lines: tuple[PlayerStatLine, PlayerStatLine] = (PlayerStatLine(),
                                                         PlayerStatLine())
    rallies_consolidated: int = 0
    last_consolidated_score: MatchScore | None = None

    def line_of(self, player_id: str) -> PlayerStatLine:
        return self.stat_lines[0 if player_id == PLAYER_1 else 1]

    def report(self) -> dict:
        """Stable JSON-serializable statistics report."""
        return {
            "player_1": self.stat_lines[0].as_dict(),
            "player_2": self.stat_lines[1].as_dict(),
            "rallies_consolidated": self.rallies_consolidated,
            "last_consolidated_score": (
                score_summary(self.last_consolidated_score)
                if self.last_consolidated_score is not None else None),
        }


def push_rally(short: ShortTermMemory,
               entry: MemoryEntry) -> tuple[ShortTermMemory, MemoryEntry | None]:
    """Append an entry; return the evicted oldest entry once over capacity."""
    if short.entries and entry.rally_index <= short.entries[-1].rally_index:
        raise OutOfOrderEntry(
            f"rally index {entry.rally_index} does not exceed stored "
            f"{short.entries[-1].rally_index}")
    entries = short.entries + (entry,)
    evicted = None
    if len(entries) > short.capacity:
        evicted, entries = entries[0], entries[1:]
    return replace(short, entries=entries), evicted


def _total_games(score: MatchScore, idx: int) -> int:
    return sum(pair[idx] for pair in score.completed_sets) + score.games[idx]


def consolidate(long: LongTermMemory, evicted: MemoryEntry) -> LongTermMemory:
    """Fold one evicted rally into the cumulative statistic lines.

    Rallies must arrive in stream order.  Game wins are detected by replaying
    the point on the rally's initial score, so the counter stays correct on
    partial streams.
    """
    if evicted.rally_index != long.rallies_consolidated:
        raise NonSequentialConsolidation(
            f"expected rally {long.rallies_consolidated}, got {evicted.rally_index}")

    contribution = classify_point(evicted.metadata)
    before = evicted.metadata.initial_score
    after = advance_point(before, evicted.metadata.outcome.point_winner)

    lines = []
    for idx, pid in enumerate((PLAYER_1, PLAYER_2)):
        increments = dict(contribution.per_player.get(pid, {}))
        games_delta = _total_games(after, idx) - _total_games(before, idx)
        if games_delta:
            increments["games_won"] = increments.get("games_won", 0) + games_delta
        lines.append(long.stat_lines[idx].add(increments))

    return LongTermMemory(
        stat_lines=(lines[0], lines[1]),
        rallies_consolidated=long.rallies_consolidated + 1,
        last_consolidated_score=after,
    )


def flush_memory(short: ShortTermMemory,
                 long: LongTermMemory) -> tuple[ShortTermMemory, LongTermMemory]:
    """Consolidate everything left in the window (used at match end)."""
    for entry in short.entries:
        long = consolidate(long, entry)
    return replace(short, entries=()), long


@dataclass(frozen=True)
class ContextView:
    """Immutable snapshot handed to prompt assembly: the recent window plus
    the consolidated statistic lines."""

    recent: tuple[tuple[RallyRecord, str | None], ...]
    stat_lines: tuple[PlayerStatLine, PlayerStatLine]
    rallies_consolidated: int

    def stats_report(self) -> dict:
        return {
            "player_1": self.stat_lines[0].as_dict(),
            "player_2": self.stat_lines[1].as_dict(),
            "rallies_consolidated": self.rallies_consolidated,
        }


def memory_snapshot(short: ShortTermMemory, long: LongTermMemory) -> ContextView:
    return ContextView(
        recent=tuple((e.metadata, e.commentary) for e in short.entries),
        stat_lines=long.stat_lines,
        rallies_consolidated=long.rallies_consolidated,
    )


class MatchMemory:
    """Single-writer convenience wrapper pairing the two memory tiers.

    Rally order is semantically meaningful, so one instance serves one match;
    snapshots are immutable and safe to share.
    """

    def __init__(self, capacity: int = DEFAULT_WINDOW):
        self.short = ShortTermMemory(capacity=capacity)
        self.long = LongTermMemory()

    def snapshot(self) -> ContextView:
        return memory_snapshot(self.short, self.long)

    def observe(self, entry: MemoryEntry) -> MemoryEntry | None:
        self.short, evicted = push_rally(self.short, entry)
        if evicted is not None:
            self.long = consolidate(self.long, evicted)
        return evicted

    def flush(self) -> None:
        self.short, self.long = flush_memory(self.short, self.long)
