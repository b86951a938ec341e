import datetime as dt

import pytest
from hypothesis import given, settings, strategies as st

from cfxg.errors import AmbiguityError, ConfigError, ParseError, RowError, SchemaError
from cfxg.ingest import (
    SHOT_COLUMNS, BodyPart, FmRating, FmRatingTable, FramePlayer, IngestReport, Technique,
    filter_min_shots, load_aliases, load_fm_ratings, match_players, normalize_name,
    parse_event_files, parse_shots_csv, write_shots_csv,
)

from conftest import KEEPER, make_shot, shot_event, write_events

HEADER = ",".join(SHOT_COLUMNS) + "\n"


# -- event files ------------------------------------------------------------

def test_file_without_shots_gives_empty_list(events_dir):
    write_events(events_dir, "m1.json", [{"id": "p", "type": {"name": "Pass"}}])
    assert parse_event_files(events_dir) == []


def test_missing_keeper_is_excluded_and_counted(events_dir):
    outfield = {"location": [115.0, 40.0], "teammate": False, "position": {"name": "Center Back"}}
    write_events(events_dir, "m1.json", [shot_event("a", frame=(outfield,))])
    report = IngestReport()
    assert parse_event_files(events_dir, report) == []
    assert report.missing_keeper == 1
    assert report.excluded == 1


def test_penalty_dropped_open_play_kept(events_dir):
    events = [
        shot_event("a"),
        shot_event("b", shot_type="Penalty"),
        shot_event("c", location=(100.0, 30.0)),
    ]
    write_events(events_dir, "m1.json", events)
    report = IngestReport()
    shots = parse_event_files(events_dir, report)
    assert [s.shot_id for s in shots] == ["a", "c"]
    assert report.penalties == 1


def test_missing_freeze_frame_excluded(events_dir):
    write_events(events_dir, "m1.json", [shot_event("a", frame=())])
    report = IngestReport()
    assert parse_event_files(events_dir, report) == []
    assert report.missing_freeze_frame == 1


def test_event_fields_are_decoded(events_dir):
    teammate = {"location": [100.0, 50.0], "teammate": True, "position": {"name": "Left Wing"}}
    write_events(events_dir, "m1.json", [shot_event(
        "a", body="Head", technique="Diving Header", frame=(KEEPER, teammate),
        under_pressure=True, one_on_one=True)])
    (s,) = parse_event_files(events_dir)
    assert s.outcome is True
    assert s.body_part is BodyPart.OTHER
    assert s.technique is Technique.DIVING_HEADER
    assert s.under_pressure and s.one_on_one and not s.first_time
    assert len(s.freeze_frame) == 2 and s.freeze_frame[1].is_teammate


def test_unknown_label_warns_and_excludes(events_dir):
    write_events(events_dir, "m1.json", [shot_event("a", body="Elbow"), shot_event("b")])
    report = IngestReport()
    shots = parse_event_files(events_dir, report)
    assert [s.shot_id for s in shots] == ["b"]
    assert report.unknown_label == 1
    assert report.warnings


def test_backheel_maps_to_normal(events_dir):
    write_events(events_dir, "m1.json", [shot_event("a", technique="Backheel")])
    report = IngestReport()
    (s,) = parse_event_files(events_dir, report)
    assert s.technique is Technique.NORMAL
    assert report.technique_remapped == 1


def test_malformed_json_names_file_and_offset(events_dir):
    events_dir.mkdir()
    (events_dir / "bad.json").write_text('[{"id": 1}, {"id": ]', encoding="utf-8")
    with pytest.raises(ParseError) as err:
        parse_event_files(events_dir)
    assert str(err.value.path).endswith("bad.json")
    assert err.value.offset == 19
    assert "bad.json" in str(err.value)


def test_files_read_in_name_order(events_dir):
    write_events(events_dir, "b.json", [shot_event("second")])
    write_events(events_dir, "a.json", [shot_event("first")])
    assert [s.shot_id for s in parse_event_files(events_dir)] == ["first", "second"]


# -- shots.csv --------------------------------------------------------------

def test_header_only_csv_is_empty(tmp_path):
    p = tmp_path / "shots.csv"
    p.write_text(HEADER)
    assert parse_shots_csv(p) == []


def test_csv_row_decodes_goal(tmp_path):
    p = tmp_path / "shots.csv"
    p.write_text(HEADER + "s1,Ann,Reds,108,40,1,RightFoot,Normal,0,0,0,\"118,40,0,1\"\n")
    (s,) = parse_shots_csv(p)
    assert s.location == (108.0, 40.0)
    assert s.outcome is True
    assert s.freeze_frame == (FramePlayer((118.0, 40.0), False, True),)


def test_csv_out_of_pitch_is_row_error(tmp_path):
    p = tmp_path / "shots.csv"
    p.write_text(HEADER + "s1,Ann,Reds,130,40,1,RightFoot,Normal,0,0,0,\"118,40,0,1\"\n")
    with pytest.raises(RowError) as err:
        parse_shots_csv(p)
    assert err.value.line == 2


def test_csv_non_numeric_coordinate_reports_line(tmp_path):
    p = tmp_path / "shots.csv"
    rows = ["s1,Ann,Reds,108,40,1,RightFoot,Normal,0,0,0,\"118,40,0,1\"",
            "s2,Ann,Reds,abc,40,1,RightFoot,Normal,0,0,0,\"118,40,0,1\""]
    p.write_text(HEADER + "\n".join(rows) + "\n")
    with pytest.raises(RowError) as err:
        parse_shots_csv(p)
    assert err.value.line == 3


def test_csv_missing_column_is_schema_error(tmp_path):
    p = tmp_path / "shots.csv"
    p.write_text("shot_id,player_name,x,y\n")
    with pytest.raises(SchemaError, match="team_name"):
        parse_shots_csv(p)


coord = st.floats(0.0, 120.0, allow_nan=False)
ycoord = st.floats(0.0, 80.0, allow_nan=False)
frame_player = st.builds(FramePlayer, st.tuples(coord, ycoord), st.booleans(), st.just(False))


@settings(max_examples=60, deadline=None)
@given(
    loc=st.tuples(coord, ycoord),
    others=st.lists(frame_player, max_size=6),
    flags=st.tuples(st.booleans(), st.booleans(), st.booleans(), st.booleans()),
    body=st.sampled_from(list(BodyPart)),
    tech=st.sampled_from(list(Technique)),
    name=st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=12),
)
def test_csv_round_trip_is_identity(tmp_path_factory, loc, others, flags, body, tech, name):
    keeper = FramePlayer((118.5, 39.25), False, True)
    shot = make_shot("id,1", player=name, location=loc, frame=(keeper, *others),
                     outcome=flags[0], under_pressure=flags[1], first_time=flags[2],
                     one_on_one=flags[3], body_part=body, technique=tech)
    path = tmp_path_factory.mktemp("rt") / "shots.csv"
    write_shots_csv([shot], path)
    assert parse_shots_csv(path) == [shot]


def test_event_to_csv_round_trip(events_dir, tmp_path):
    write_events(events_dir, "m1.json", [shot_event("a", under_pressure=True),
                                         shot_event("b", body="Left Foot", technique="Lob")])
    shots = parse_event_files(events_dir)
    write_shots_csv(shots, tmp_path / "shots.csv")
    assert parse_shots_csv(tmp_path / "shots.csv") == shots


# -- ratings ----------------------------------------------------------------

def _ratings_file(tmp_path, rows, birth=False):
    head = "name,finishing,technique,long_shots,heading" + (",birth_date" if birth else "")
    p = tmp_path / "fm.csv"
    p.write_text(head + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return p


def test_rating_row_accepted(tmp_path):
    table = load_fm_ratings(_ratings_file(tmp_path, ["X,17,14,15,12"]))
    (r,) = table
    assert (r.finishing, r.technique, r.long_shots, r.heading) == (17, 14, 15, 12)


@pytest.mark.parametrize("bad", ["0", "21", "25"])
def test_rating_out_of_range_rejected(tmp_path, bad):
    with pytest.raises(RowError):
        load_fm_ratings(_ratings_file(tmp_path, [f"X,{bad},14,15,12"]))


def test_same_name_with_distinct_birth_dates(tmp_path):
    rows = ["Luis Suárez,18,17,15,10,1987-01-24", "Luis Suárez,8,9,7,6,1997-06-26"]
    table = load_fm_ratings(_ratings_file(tmp_path, rows, birth=True))
    assert len(table) == 2
    (hit,) = table.find("Luis Suárez", dt.date(1997, 6, 26))
    assert hit.finishing == 8


def test_same_name_without_birth_date_is_ambiguous(tmp_path):
    with pytest.raises(AmbiguityError):
        load_fm_ratings(_ratings_file(tmp_path, ["Luis Suárez,18,17,15,10", "Luis Suarez,8,9,7,6"]))


# -- matching ---------------------------------------------------------------

def _rating(name, f=10, birth=None):
    return FmRating(name, f, 10, 10, 10, birth)


def test_normalize_name():
    assert normalize_name("  Sergio   AGÜERO ") == "sergio aguero"


def test_alias_match():
    shots = [make_shot(player="Sergio Agüero")]
    ratings = FmRatingTable([_rating("Sergio Leonel Agüero del Castillo", 17)])
    table, report = match_players(
        shots, ratings, {"Sergio Agüero": ("Sergio Leonel Agüero del Castillo", None)})
    assert table.ratings[0].finishing == 17
    assert report.via_alias == ["Sergio Agüero"]
    assert table.index("Sergio Leonel Agüero del Castillo") == 0


def test_identical_names_match_without_alias():
    table, report = match_players([make_shot(player="Jamie Vardy")],
                                  FmRatingTable([_rating("Jamie Vardy")]))
    assert table.rated(0) and report.unmatched_players == [] and report.via_alias == []


def test_unmatched_player_retained():
    shots = [make_shot("a", player="Nobody"), make_shot("b", player="Jamie Vardy")]
    table, report = match_players(shots, FmRatingTable([_rating("Jamie Vardy"), _rating("Spare")]))
    assert table.names == ["Jamie Vardy", "Nobody"]
    assert not table.rated(1)
    assert report.unmatched_players == ["Nobody"]
    assert report.unused_ratings == ["Spare"]


def test_alias_to_missing_row_is_config_error():
    with pytest.raises(ConfigError):
        match_players([make_shot()], FmRatingTable([]), {"Ann Striker": ("Ghost", None)})


def test_alias_file_with_birth_date(tmp_path):
    p = tmp_path / "aliases.csv"
    p.write_text("event_name,rating_name,birth_date\nLuis,Luis Suárez,1987-01-24\n", encoding="utf-8")
    assert load_aliases(p) == {"Luis": ("Luis Suárez", dt.date(1987, 1, 24))}


def test_player_indices_contiguous():
    shots = [make_shot(str(k), player=p) for k, p in enumerate("CABCA")]
    table, _ = match_players(shots, FmRatingTable([]))
    assert [table.index(n) for n in table.names] == list(range(3))
    assert table.shot_counts == [2, 1, 2]


# -- threshold --------------------------------------------------------------

def _shots_for(counts):
    shots = []
    for name, n in counts.items():
        shots += [make_shot(f"{name}{k}", player=name) for k in range(n)]
    return shots


def test_threshold_boundaries():
    assert filter_min_shots(_shots_for({"a": 29}), 30) == []
    assert len(filter_min_shots(_shots_for({"a": 30}), 30)) == 30


def test_mixed_fixture_keeps_105():
    shots = _shots_for({"five": 5, "thirty": 30, "seventy_five": 75})
    assert len(filter_min_shots(shots, 30)) == 105


def test_threshold_must_be_positive():
    with pytest.raises(ConfigError):
        filter_min_shots([], 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from("abcdef"), max_size=80), st.integers(1, 15))
def test_filter_idempotent_and_order_preserving(players, threshold):
    shots = [make_shot(str(k), player=p) for k, p in enumerate(players)]
    once = filter_min_shots(shots, threshold)
    assert filter_min_shots(once, threshold) == once
    ids = [s.shot_id for s in once]
    assert ids == sorted(ids, key=int)
    table, _ = match_players(once, FmRatingTable([]))
    assert all(c >= threshold for c in table.shot_counts)
