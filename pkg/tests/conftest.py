import json

import pytest

from cfxg.ingest import BodyPart, FramePlayer, ShotRecord, Technique

KEEPER = {"location": [118.0, 40.0], "teammate": False, "position": {"name": "Goalkeeper"}}


def shot_event(shot_id, player="Ann Striker", team="Reds", location=(108.0, 40.0), outcome="Goal",
               body="Right Foot", technique="Normal", frame=(KEEPER,), shot_type="Open Play",
               **flags):
    event = {
        "id": shot_id,
        "type": {"name": "Shot"},
        "player": {"name": player},
        "team": {"name": team},
        "location": list(location),
        "shot": {
            "type": {"name": shot_type},
            "outcome": {"name": outcome},
            "body_part": {"name": body},
            "technique": {"name": technique},
            "freeze_frame": [dict(p) for p in frame],
        },
    }
    if flags.get("under_pressure"):
        event["under_pressure"] = True
    for key in ("first_time", "one_on_one"):
        if flags.get(key):
            event["shot"][key] = True
    return event


def write_events(directory, name, events):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(json.dumps(events), encoding="utf-8")
    return path


def make_shot(shot_id="s1", player="Ann Striker", location=(108.0, 40.0), frame=None, **kw):
    if frame is None:
        frame = (FramePlayer((118.0, 40.0), False, True),)
    base = dict(team_name="Reds", outcome=False, body_part=BodyPart.RIGHT_FOOT,
                technique=Technique.NORMAL, under_pressure=False, first_time=False,
                one_on_one=False)
    base.update(kw)
    return ShotRecord(shot_id=shot_id, player_name=player, location=location,
                      freeze_frame=tuple(frame), **base)


@pytest.fixture
def events_dir(tmp_path):
    return tmp_path / "events"


# -- acceptance reporting -----------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n)`` feed one summary line per criterion.

_CRITERIA = {}


@pytest.fixture
def detail(request):
    """Attach a short measurement string to the current criterion test."""
    def note(text):
        request.node.user_properties.append(("detail", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if hasattr(report, "wasxfail"):
            status = "FAIL (known, see xfail reason)"
        elif report.skipped:
            status = "SKIPPED"
        else:
            status = "PASS" if report.passed else "FAIL"
        details = [v for k, v in item.user_properties if k == "detail"]
        _CRITERIA.setdefault(marker.args[0], []).append((item.name, status, details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        statuses = {s for _, s, _ in parts}
        overall = "PASS" if statuses == {"PASS"} else next(
            s for s in ("FAIL", "FAIL (known, see xfail reason)", "SKIPPED") if s in statuses)
        terminalreporter.write_line(f"criterion {number:>2}: {overall}")
        for name, status, details in parts:
            info = "; ".join(details)
            terminalreporter.write_line(f"    {name}: {status}" + (f" [{info}]" if info else ""))
