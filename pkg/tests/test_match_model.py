"""Scoring state machine and scoreboard parsing tests."""

import random

import pytest

from courtside.match_model import (
    AD,
    AmbiguousServer,
    IllegalToken,
    MatchScore,
    PLAYER_1,
    PLAYER_2,
    RawScoreboard,
    RowLengthMismatch,
    ScoringConfig,
    TerminalState,
    UnknownLayout,
    advance_point,
    is_break_point,
    is_terminal,
    other_player,
    parse_scoreboard,
    parse_summary,
    render_scoreboard,
    score_summary,
    validate_scoreboard,
    _set_closure,
)

import oracles

DEFAULT = ScoringConfig()
NO_AD = ScoringConfig(ad_scoring=False)


def fresh(server=PLAYER_1, config=DEFAULT):
    return MatchScore(server=server, config=config)


def play(score, *winners):
    for w in winners:
        score = advance_point(score, w)
    return score


def win_game(score, player):
    start_games = score.games
    while score.games == start_games and not score.in_tiebreak:
        score = advance_point(score, player)
    return score


class TestAdvancePoint:
    def test_first_point_of_game(self):
        s = advance_point(fresh(), PLAYER_1)
        assert s.points == ("15", "0")
        assert s.server == PLAYER_1

    def test_ladder_progression(self):
        s = play(fresh(), PLAYER_1, PLAYER_1, PLAYER_1)
        assert s.points == ("40", "0")

    def test_game_win_resets_and_swaps_server(self):
        s = play(fresh(), *[PLAYER_1] * 4)
        assert s.games == (1, 0)
        assert s.points == ("0", "0")
        assert s.server == PLAYER_2

    def test_deuce_then_advantage(self):
        s = play(fresh(), *([PLAYER_1] * 3 + [PLAYER_2] * 3))
        assert s.points == ("40", "40")
        s = advance_point(s, PLAYER_2)
        assert s.points == ("40", AD)

    def test_advantage_lost_returns_to_deuce(self):
        s = play(fresh(), *([PLAYER_1] * 3 + [PLAYER_2] * 4))
        s = advance_point(s, PLAYER_1)
        assert s.points == ("40", "40")

    def test_receiver_converts_advantage(self):
        s = play(fresh(), *([PLAYER_1] * 3 + [PLAYER_2] * 4))
        assert s.points == ("40", AD)
        s = advance_point(s, PLAYER_2)
        assert s.games == (0, 1)
        assert s.points == ("0", "0")
        assert s.server == PLAYER_2

    def test_no_ad_sudden_death(self):
        s = play(fresh(config=NO_AD), *([PLAYER_1] * 3 + [PLAYER_2] * 3))
        assert s.points == ("40", "40")
        s = advance_point(s, PLAYER_2)
        assert s.games == (0, 1)

    def test_set_win_at_six_four(self):
        s = fresh()
        for _ in range(4):
            s = win_game(s, PLAYER_1)
            s = win_game(s, PLAYER_2)
        s = win_game(s, PLAYER_1)
        s = win_game(s, PLAYER_1)
        assert s.completed_sets == ((6, 4),)
        assert s.games == (0, 0)

    def test_no_set_at_six_five(self):
        s = fresh()
        for _ in range(5):
            s = win_game(s, PLAYER_1)
            s = win_game(s, PLAYER_2)
        s = win_game(s, PLAYER_1)
        assert s.completed_sets == ()
        assert s.games == (6, 5)

    def test_tiebreak_entry_and_integer_points(self):
        s = fresh()
        for _ in range(6):
            s = win_game(s, PLAYER_1)
            s = win_game(s, PLAYER_2)
        assert s.in_tiebreak
        assert s.points == (0, 0)
        assert s.games == (6, 6)

    def test_tiebreak_no_two_point_margin_continues(self):
        s = _tiebreak_at(6, 6)
        s = advance_point(s, PLAYER_1)
        assert s.in_tiebreak
        assert s.points == (7, 6)

    def test_tiebreak_win_closes_set_seven_six(self):
        s = _tiebreak_at(6, 5)
        s = advance_point(s, PLAYER_1)
        assert not s.in_tiebreak
        assert s.completed_sets[-1] == (7, 6)
        assert s.games == (0, 0)

    def test_terminal_state_raises(self):
        s = MatchScore(completed_sets=((6, 0), (6, 0)))
        with pytest.raises(TerminalState):
            advance_point(s, PLAYER_1)

    def test_final_set_uses_ten_point_target(self):
        s = MatchScore(completed_sets=((6, 0), (0, 6)), games=(6, 6),
                       points=(7, 5), in_tiebreak=True)
        s = advance_point(s, PLAYER_1)
        assert s.in_tiebreak  # 8-5 is short of the 10-point target
        assert s.points == (8, 5)

    def test_game_transitions_match_count_oracle(self):
        for ad in (True, False):
            config = DEFAULT if ad else NO_AD
            for disp, winner, expected in oracles.enumerate_game_transitions(ad):
                s = MatchScore(points=disp, config=config)
                nxt = advance_point(s, PLAYER_1 if winner == 0 else PLAYER_2)
                if expected == "GAME":
                    assert nxt.games != (0, 0), (disp, winner)
                else:
                    assert nxt.points == expected, (disp, winner)


def _tiebreak_at(a, b, config=DEFAULT):
    s = MatchScore(games=(6, 6), points=(0, 0), in_tiebreak=True, config=config)
    order = [PLAYER_1] * a + [PLAYER_2] * b
    # interleave to keep both sides short of the target mid-way
    mixed = []
    for i in range(max(a, b)):
        if i < a:
            mixed.append(PLAYER_1)
        if i < b:
            mixed.append(PLAYER_2)
    return play(s, *mixed)


class TestServerRotation:
    def test_server_constant_within_game(self):
        s = fresh()
        for _ in range(3):
            s = advance_point(s, PLAYER_1)
            assert s.server == PLAYER_1

    def test_server_alternates_across_games(self):
        s = fresh()
        servers = [s.server]
        for _ in range(5):
            s = win_game(s, PLAYER_1)
            servers.append(s.server)
        assert servers == [PLAYER_1, PLAYER_2, PLAYER_1, PLAYER_2, PLAYER_1, PLAYER_2]

    def test_tiebreak_one_then_two_each(self):
        s = _tiebreak_at(0, 0)
        first = s.server
        seen = []
        rng = random.Random(7)
        for _ in range(12):
            seen.append(s.server)
            s = advance_point(s, rng.choice([PLAYER_1, PLAYER_2]))
            if not s.in_tiebreak:
                break
        expected = []
        for k in range(len(seen)):
            expected.append(first if ((k + 1) // 2) % 2 == 0 else other_player(first))
        assert seen == expected

    def test_set_after_tiebreak_server_is_opponent_of_tb_first(self):
        s = _tiebreak_at(0, 0)
        first = s.server
        s = play(s, *[PLAYER_1] * 7)
        assert s.completed_sets[-1] == (7, 6)
        assert s.server == other_player(first)


class TestBreakAndTerminal:
    def test_returner_at_game_point(self):
        s = MatchScore(points=("30", "40"), server=PLAYER_1)
        assert is_break_point(s)

    def test_deuce_is_not_break_point(self):
        s = MatchScore(points=("40", "40"), server=PLAYER_1)
        assert not is_break_point(s)

    def test_returner_advantage_is_break_point(self):
        s = MatchScore(points=("40", AD), server=PLAYER_1)
        assert is_break_point(s)
        # oracle: the returner's next point must close the game
        nxt = advance_point(s, PLAYER_2)
        assert nxt.games == (0, 1)

    def test_server_advantage_is_not(self):
        s = MatchScore(points=(AD, "40"), server=PLAYER_1)
        assert not is_break_point(s)

    def test_break_point_means_returner_point_breaks(self):
        rng = random.Random(3)
        s = fresh()
        for _ in range(4000):
            if is_terminal(s):
                break
            if is_break_point(s):
                nxt = advance_point(s, s.returner)
                total = lambda sc, i: sum(p[i] for p in sc.completed_sets) + sc.games[i]
                idx = 0 if s.returner == PLAYER_1 else 1
                assert total(nxt, idx) == total(s, idx) + 1
            s = advance_point(s, rng.choice([PLAYER_1, PLAYER_2]))

    def test_terminal_majority(self):
        assert is_terminal(MatchScore(completed_sets=((6, 0), (6, 1)))) == PLAYER_1
        assert is_terminal(fresh()) is None
        bo5 = ScoringConfig(best_of=5)
        split = MatchScore(completed_sets=((6, 0), (0, 6), (6, 0), (0, 6)), config=bo5)
        assert is_terminal(split) is None


class TestValidation:
    def test_fresh_match_valid(self):
        assert validate_scoreboard(fresh()).passed

    def test_double_advantage_flagged(self):
        report = validate_scoreboard(MatchScore(points=(AD, AD)))
        assert not report.passed
        assert any("both players at AD" in v for v in report.violations)

    def test_unreachable_games_flagged(self):
        report = validate_scoreboard(MatchScore(games=(8, 2)))
        assert not report.passed

    def test_finished_set_as_current_games_flagged(self):
        report = validate_scoreboard(MatchScore(games=(6, 1)))
        assert not report.passed

    def test_ad_without_forty_flagged(self):
        report = validate_scoreboard(MatchScore(points=(AD, "30")))
        assert not report.passed

    def test_invalid_completed_set(self):
        report = validate_scoreboard(MatchScore(completed_sets=((6, 5),)))
        assert not report.passed

    def test_play_after_clinch_flagged(self):
        report = validate_scoreboard(
            MatchScore(completed_sets=((6, 0), (6, 0), (0, 6))))
        assert not report.passed

    def test_closure_matches_bfs_oracle(self):
        impl = _set_closure(DEFAULT.cache_key(), 6, 7, True)
        oracle = oracles.reachable_set_states(trigger=6, tb_target=7, ad=True)
        assert impl == oracle

    def test_closure_matches_oracle_no_ad_and_ten_point(self):
        impl = _set_closure(NO_AD.cache_key(), 6, 10, False)
        oracle = oracles.reachable_set_states(trigger=6, tb_target=10, ad=False)
        assert impl == oracle

    def test_advance_preserves_validity(self):
        rng = random.Random(11)
        for config in (DEFAULT, ScoringConfig(best_of=5), NO_AD):
            s = fresh(config=config)
            for _ in range(2500):
                if is_terminal(s):
                    break
                s = advance_point(s, rng.choice([PLAYER_1, PLAYER_2]))
                assert validate_scoreboard(s).passed, score_summary(s)

    def test_random_matches_terminate(self):
        rng = random.Random(5)
        for _ in range(20):
            s = fresh()
            for _ in range(3000):
                if is_terminal(s):
                    break
                s = advance_point(s, rng.choice([PLAYER_1, PLAYER_2]))
            assert is_terminal(s) is not None


class TestSummaryRoundTrip:
    def test_fresh_canonical_form(self):
        assert score_summary(fresh()) == "0-0, 0-0, 0:0, server player_1"
        assert parse_summary("0-0, 0-0, 0:0, server player_1") == fresh()

    def test_listing_like_state_round_trips(self):
        s = MatchScore(completed_sets=((6, 0),), games=(2, 3),
                       points=("30", "15"), server=PLAYER_1)
        assert parse_summary(score_summary(s)) == s

    def test_tiebreak_state_round_trips(self):
        s = MatchScore(games=(6, 6), points=(5, 3), in_tiebreak=True,
                       server=PLAYER_2)
        assert parse_summary(score_summary(s)) == s

    def test_random_walk_states_round_trip(self):
        rng = random.Random(23)
        s = fresh()
        for _ in range(500):
            if is_terminal(s):
                s = fresh(config=DEFAULT)
            s = advance_point(s, rng.choice([PLAYER_1, PLAYER_2]))
            assert parse_summary(score_summary(s)) == s


AO_EXAMPLE = {
    "Alice": ["6", "1", "1", ""],
    "Bob": ["4", "6", "2", "AD"],
    "server": "Bob",
}
RG_EXAMPLE = {
    "Alice": ["6", "1", "40"],
    "Bob": ["4", "6", "AD"],
    "server": "Alice",
}
WIMBLEDON_VISIBLE = {
    "Alice": ["1", "2", "15"],
    "Bob": ["1", "2", "30"],
    "server": "Alice",
}
WIMBLEDON_HIDDEN = {
    "Alice": ["0", "2"],
    "Bob": ["1", "2"],
    "server": "Alice",
}


class TestScoreboardParsing:
    def test_ao_uso_ad_fill(self):
        raw = RawScoreboard.from_json("AO_USO", AO_EXAMPLE)
        score = parse_scoreboard(raw)
        assert score.completed_sets == ((6, 4), (1, 6))
        assert score.games == (1, 2)
        assert score.points == ("40", AD)
        assert score.server == PLAYER_2
        rendered = render_scoreboard(score, "AO_USO", ("Alice", "Bob"))
        assert rendered == {
            "Alice": ["6", "1", "1", "40"],
            "Bob": ["4", "6", "2", "AD"],
            "server": "Bob",
        }

    def test_rg_server_from_slash_row(self):
        raw = RawScoreboard.from_json("RG", RG_EXAMPLE)
        score = parse_scoreboard(raw)
        assert score.server == PLAYER_1
        assert score.points == ("40", AD)
        rendered = render_scoreboard(score, "RG", ("Alice", "Bob"))
        assert rendered == {
            "Alice": ["6", "1", "40"],
            "Bob": ["4", "6", "AD"],
            "server": "Alice",
        }

    def test_wimbledon_points_visible(self):
        score = parse_scoreboard(RawScoreboard.from_json("WIMBLEDON", WIMBLEDON_VISIBLE))
        assert score.sets_won() == (1, 1)
        assert score.games == (2, 2)
        assert score.points == ("15", "30")
        assert score.server == PLAYER_1
        rendered = render_scoreboard(score, "WIMBLEDON", ("Alice", "Bob"))
        assert rendered == {
            "Alice": ["1", "2", "15"],
            "Bob": ["1", "2", "30"],
            "server": "Alice",
        }

    def test_wimbledon_hidden_points_column(self):
        score = parse_scoreboard(RawScoreboard.from_json("WIMBLEDON", WIMBLEDON_HIDDEN))
        assert score.sets_won() == (0, 1)
        assert score.games == (2, 2)
        assert score.points == ("0", "0")
        assert score.server == PLAYER_1
        rendered = render_scoreboard(score, "WIMBLEDON", ("Alice", "Bob"))
        assert rendered == {
            "Alice": ["0", "2", "0"],
            "Bob": ["1", "2", "0"],
            "server": "Alice",
        }

    def test_tiebreak_columns_parse_as_integers(self):
        raw = RawScoreboard.from_json(
            "AO_USO", {"A": ["6", "5"], "B": ["6", "3"], "server": "A"})
        score = parse_scoreboard(raw)
        assert score.in_tiebreak
        assert score.points == (5, 3)

    def test_trigger_trigger_is_always_a_tiebreak(self):
        raw = RawScoreboard.from_json(
            "AO_USO", {"A": ["6", "0"], "B": ["6", "0"], "server": "A"})
        score = parse_scoreboard(raw)
        assert score.in_tiebreak
        assert score.points == (0, 0)
        assert validate_scoreboard(score).passed

    def test_unknown_layout(self):
        raw = RawScoreboard(layout="ATP_FINALS", names=("A", "B"),
                            rows=(("0", "0"), ("0", "0")), server_row=0)
        with pytest.raises(UnknownLayout):
            parse_scoreboard(raw)

    def test_row_length_mismatch(self):
        raw = RawScoreboard.from_json(
            "AO_USO", {"A": ["6", "1", "0"], "B": ["4", "0"], "server": "A"})
        with pytest.raises(RowLengthMismatch):
            parse_scoreboard(raw)

    def test_illegal_token(self):
        raw = RawScoreboard.from_json(
            "AO_USO", {"A": ["6", "love"], "B": ["4", "15"], "server": "A"})
        with pytest.raises(IllegalToken):
            parse_scoreboard(raw)

    def test_missing_server_is_ambiguous(self):
        raw = RawScoreboard.from_json(
            "AO_USO", {"A": ["1", "0"], "B": ["2", "15"], "server": "Carol"})
        with pytest.raises(AmbiguousServer):
            parse_scoreboard(raw)

    def test_finished_match_board_synthesizes_valid_set_order(self):
        from courtside.match_model import synthesize_completed_sets
        # a 2-1 board in best-of-3 must not read as play past the clinch
        assert synthesize_completed_sets(2, 1, 6) == ((6, 0), (0, 6), (6, 0))
        raw = RawScoreboard.from_json(
            "WIMBLEDON", {"A": ["2", "0", "0"], "B": ["1", "0", "0"],
                          "server": "A"})
        score = parse_scoreboard(raw)
        assert is_terminal(score) == PLAYER_1
        assert validate_scoreboard(score).passed

    def test_marker_tokens_normalized_per_layout(self):
        from courtside.match_model import server_row_from_markers
        assert server_row_from_markers("AO_USO", ("icon", "")) == 0
        assert server_row_from_markers("AO_USO", ("", "icon")) == 1
        assert server_row_from_markers("RG", ("", "/")) == 1
        assert server_row_from_markers("RG", ("//", "")) == 0
        assert server_row_from_markers("WIMBLEDON", ("<", "")) == 0
        assert server_row_from_markers("AO_USO", ("", "")) is None
        assert server_row_from_markers("AO_USO", ("icon", "icon")) is None
        with pytest.raises(UnknownLayout):
            server_row_from_markers("ATP_FINALS", ("icon", ""))

    def test_tournament_examples_summary_round_trip(self):
        for layout, obj in (("AO_USO", AO_EXAMPLE), ("RG", RG_EXAMPLE),
                            ("WIMBLEDON", WIMBLEDON_VISIBLE),
                            ("WIMBLEDON", WIMBLEDON_HIDDEN)):
            score = parse_scoreboard(RawScoreboard.from_json(layout, obj))
            assert parse_summary(score_summary(score)) == score
