"""Shot-event and expert-rating ingestion.

Event documents follow the StatsBomb open-data layout: one JSON array of
event objects per match file. Pitch coordinates are 120 x 80 with the
attacking goal at ``x = 120``.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ._io import atomic_open
from .errors import AmbiguityError, ConfigError, DataError, ParseError, RowError, SchemaError

logger = logging.getLogger(__name__)

PITCH_LENGTH = 120.0
PITCH_WIDTH = 80.0

SHOT_COLUMNS = (
    "shot_id", "player_name", "team_name", "x", "y", "outcome", "body_part",
    "technique", "under_pressure", "first_time", "one_on_one", "freeze_frame",
)
RATING_COLUMNS = ("name", "finishing", "technique", "long_shots", "heading")
RATING_ATTRIBUTES = ("finishing", "technique", "long_shots", "heading")


class BodyPart(str, enum.Enum):
    LEFT_FOOT = "LeftFoot"
    RIGHT_FOOT = "RightFoot"
    OTHER = "Other"


class Technique(str, enum.Enum):
    NORMAL = "Normal"
    VOLLEY = "Volley"
    HALF_VOLLEY = "HalfVolley"
    LOB = "Lob"
    DIVING_HEADER = "DivingHeader"
    OVERHEAD_KICK = "OverheadKick"


# Provider labels (and our own canonical labels) -> enum members.
_BODY_PART_LABELS = {
    "right foot": BodyPart.RIGHT_FOOT,
    "rightfoot": BodyPart.RIGHT_FOOT,
    "left foot": BodyPart.LEFT_FOOT,
    "leftfoot": BodyPart.LEFT_FOOT,
    "head": BodyPart.OTHER,
    "other": BodyPart.OTHER,
    "no touch": BodyPart.OTHER,
}
_TECHNIQUE_LABELS = {
    "normal": Technique.NORMAL,
    "volley": Technique.VOLLEY,
    "half volley": Technique.HALF_VOLLEY,
    "halfvolley": Technique.HALF_VOLLEY,
    "lob": Technique.LOB,
    "diving header": Technique.DIVING_HEADER,
    "divingheader": Technique.DIVING_HEADER,
    "overhead kick": Technique.OVERHEAD_KICK,
    "overheadkick": Technique.OVERHEAD_KICK,
}
# Known provider techniques outside the modelled set fall back to Normal.
_RESIDUAL_TECHNIQUES = {"backheel"}


@dataclass(frozen=True)
class FramePlayer:
    position: tuple[float, float]
    is_teammate: bool
    is_keeper: bool


@dataclass(frozen=True)
class ShotRecord:
    shot_id: str
    player_name: str
    team_name: str
    location: tuple[float, float]
    outcome: bool
    body_part: BodyPart
    technique: Technique
    under_pressure: bool
    first_time: bool
    one_on_one: bool
    freeze_frame: tuple[FramePlayer, ...] = ()

    def opposing_keepers(self):
        return [p for p in self.freeze_frame if p.is_keeper and not p.is_teammate]


@dataclass
class IngestReport:
    """Counters describing what an ingest pass kept and dropped."""

    files: int = 0
    events: int = 0
    shots_seen: int = 0
    penalties: int = 0
    missing_freeze_frame: int = 0
    missing_keeper: int = 0
    multiple_keepers: int = 0
    unknown_label: int = 0
    out_of_bounds: int = 0
    technique_remapped: int = 0
    kept: int = 0
    warnings: list = field(default_factory=list)

    @property
    def excluded(self):
        return (self.missing_freeze_frame + self.missing_keeper + self.multiple_keepers
                + self.unknown_label + self.out_of_bounds)

    def warn(self, message):
        logger.warning(message)
        self.warnings.append(message)

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "files", "events", "shots_seen", "penalties", "missing_freeze_frame",
            "missing_keeper", "multiple_keepers", "unknown_label", "out_of_bounds",
            "technique_remapped", "kept")}
        out["excluded"] = self.excluded
        out["warnings"] = list(self.warnings)
        return out


def normalize_name(name):
    """Case-folded, accent-stripped, whitespace-collapsed form of a name."""
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return " ".join(stripped.casefold().split())


def in_pitch(x, y):
    return 0.0 <= x <= PITCH_LENGTH and 0.0 <= y <= PITCH_WIDTH


def _parse_body_part(label):
    return _BODY_PART_LABELS.get(str(label).strip().casefold())


def _parse_technique(label, report, shot_id):
    key = str(label).strip().casefold()
    if key in _TECHNIQUE_LABELS:
        return _TECHNIQUE_LABELS[key]
    if key in _RESIDUAL_TECHNIQUES:
        report.technique_remapped += 1
        report.warn(f"shot {shot_id}: technique {label!r} mapped to Normal")
        return Technique.NORMAL
    return None


def _admit(record, report):
    """Apply the record-level exclusion rules shared by every input format."""
    if not record.freeze_frame:
        report.missing_freeze_frame += 1
        return False
    keepers = record.opposing_keepers()
    if not keepers:
        report.missing_keeper += 1
        return False
    if len(keepers) > 1:
        report.multiple_keepers += 1
        return False
    if not all(in_pitch(*p.position) for p in record.freeze_frame):
        report.out_of_bounds += 1
        return False
    report.kept += 1
    return True


def _name(obj, key):
    value = obj.get(key)
    if isinstance(value, dict):
        return value.get("name")
    return value


def _shot_from_event(event, fallback_id, report):
    shot = event.get("shot") or {}
    shot_id = str(event.get("id", fallback_id))
    loc = event.get("location")
    if not loc or len(loc) < 2:
        report.out_of_bounds += 1
        report.warn(f"shot {shot_id}: missing location")
        return None
    x, y = float(loc[0]), float(loc[1])
    if not in_pitch(x, y):
        report.out_of_bounds += 1
        report.warn(f"shot {shot_id}: location ({x}, {y}) outside the pitch")
        return None

    body_label = _name(shot, "body_part")
    body = _parse_body_part(body_label)
    technique = _parse_technique(_name(shot, "technique") or "Normal", report, shot_id)
    if body is None or technique is None:
        report.unknown_label += 1
        report.warn(f"shot {shot_id}: unknown label (body_part={body_label!r}, "
                    f"technique={_name(shot, 'technique')!r})")
        return None

    frame = []
    for entry in shot.get("freeze_frame") or ():
        ploc = entry.get("location") or (None, None)
        frame.append(FramePlayer(
            position=(float(ploc[0]), float(ploc[1])),
            is_teammate=bool(entry.get("teammate", False)),
            is_keeper=_name(entry, "position") == "Goalkeeper",
        ))
    return ShotRecord(
        shot_id=shot_id,
        player_name=_name(event, "player") or "",
        team_name=_name(event, "team") or "",
        location=(x, y),
        outcome=_name(shot, "outcome") == "Goal",
        body_part=body,
        technique=technique,
        under_pressure=bool(event.get("under_pressure", False)),
        first_time=bool(shot.get("first_time", False)),
        one_on_one=bool(shot.get("one_on_one", False)),
        freeze_frame=tuple(frame),
    )


def _load_json(path):
    raw = path.read_bytes()
    text = raw.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise ParseError(path, offset, exc.msg) from None


def parse_event_files(directory, report=None):
    """Read every ``*.json`` event file in `directory` and return its shots.

    Files are visited in name order. Penalties are dropped, as are shots
    whose freeze frame is missing or lacks exactly one opposing goalkeeper.

    Parameters
    ----------
    directory : path-like
        Folder holding one JSON array of events per file.
    report : IngestReport, optional
        Filled in place with counts of kept and excluded records.

    Returns
    -------
    list of ShotRecord
    """
    report = report if report is not None else IngestReport()
    shots = []
    seen = set()
    for path in sorted(Path(directory).glob("*.json")):
        events = _load_json(path)
        if not isinstance(events, list):
            raise ParseError(path, 0, "expected a JSON array of events")
        report.files += 1
        for k, event in enumerate(events):
            report.events += 1
            if _name(event, "type") != "Shot":
                continue
            report.shots_seen += 1
            if _name(event.get("shot") or {}, "type") == "Penalty":
                report.penalties += 1
                continue
            record = _shot_from_event(event, f"{path.stem}:{k}", report)
            if record is None or not _admit(record, report):
                continue
            if record.shot_id in seen:
                raise DataError(f"{path}: duplicate shot id {record.shot_id}")
            seen.add(record.shot_id)
            shots.append(record)
    return shots


def _encode_bool(value):
    return "1" if value else "0"


def _parse_bool(text, path, line, column):
    key = text.strip().casefold()
    if key in ("1", "true", "t", "yes"):
        return True
    if key in ("0", "false", "f", "no", ""):
        return False
    raise RowError(path, line, f"column {column}: not a boolean: {text!r}")


def _parse_float(text, path, line, column):
    try:
        return float(text)
    except ValueError:
        raise RowError(path, line, f"column {column}: not a number: {text!r}") from None


def encode_freeze_frame(frame):
    return ";".join(
        f"{p.position[0]!r},{p.position[1]!r},{_encode_bool(p.is_teammate)},"
        f"{_encode_bool(p.is_keeper)}"
        for p in frame
    )


def _decode_freeze_frame(text, path, line):
    players = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = chunk.split(",")
        if len(parts) != 4:
            raise RowError(path, line, f"freeze_frame entry {chunk!r} is not x,y,teammate,keeper")
        px = _parse_float(parts[0], path, line, "freeze_frame")
        py = _parse_float(parts[1], path, line, "freeze_frame")
        players.append(FramePlayer(
            (px, py),
            _parse_bool(parts[2], path, line, "freeze_frame"),
            _parse_bool(parts[3], path, line, "freeze_frame"),
        ))
    return tuple(players)


def shot_to_row(shot):
    return {
        "shot_id": shot.shot_id,
        "player_name": shot.player_name,
        "team_name": shot.team_name,
        "x": repr(shot.location[0]),
        "y": repr(shot.location[1]),
        "outcome": _encode_bool(shot.outcome),
        "body_part": shot.body_part.value,
        "technique": shot.technique.value,
        "under_pressure": _encode_bool(shot.under_pressure),
        "first_time": _encode_bool(shot.first_time),
        "one_on_one": _encode_bool(shot.one_on_one),
        "freeze_frame": encode_freeze_frame(shot.freeze_frame),
    }


def write_shots_csv(shots, path):
    with atomic_open(path) as fh:
        writer = csv.DictWriter(fh, fieldnames=SHOT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for shot in shots:
            writer.writerow(shot_to_row(shot))


def _require_columns(path, header, required):
    missing = [c for c in required if c not in (header or ())]
    if missing:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")


def parse_shots_csv(path, report=None):
    """Read shots from the flat ``shots.csv`` layout.

    Coordinates outside the pitch raise :class:`RowError`; freeze-frame
    exclusions follow :func:`parse_event_files`.
    """
    report = report if report is not None else IngestReport()
    shots = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(path, reader.fieldnames, SHOT_COLUMNS)
        for row in reader:
            line = reader.line_num
            report.events += 1
            report.shots_seen += 1
            x = _parse_float(row["x"], path, line, "x")
            y = _parse_float(row["y"], path, line, "y")
            if not in_pitch(x, y):
                raise RowError(path, line, f"location ({x}, {y}) outside the pitch")
            body = _parse_body_part(row["body_part"])
            technique = _parse_technique(row["technique"], report, row["shot_id"])
            if body is None or technique is None:
                report.unknown_label += 1
                report.warn(f"{path}:{line}: unknown label (body_part={row['body_part']!r}, "
                            f"technique={row['technique']!r})")
                continue
            record = ShotRecord(
                shot_id=row["shot_id"],
                player_name=row["player_name"],
                team_name=row["team_name"],
                location=(x, y),
                outcome=_parse_bool(row["outcome"], path, line, "outcome"),
                body_part=body,
                technique=technique,
                under_pressure=_parse_bool(row["under_pressure"], path, line, "under_pressure"),
                first_time=_parse_bool(row["first_time"], path, line, "first_time"),
                one_on_one=_parse_bool(row["one_on_one"], path, line, "one_on_one"),
                freeze_frame=_decode_freeze_frame(row["freeze_frame"] or "", path, line),
            )
            if not _admit(record, report):
                continue
            if record.shot_id in seen:
                raise RowError(path, line, f"duplicate shot id {record.shot_id}")
            seen.add(record.shot_id)
            shots.append(record)
    report.files += 1
    return shots


# --------------------------------------------------------------------------
# Expert ratings


@dataclass(frozen=True)
class FmRating:
    name: str
    finishing: int
    technique: int
    long_shots: int
    heading: int
    birth_date: dt.date | None = None

    @property
    def key(self):
        return (self.name, self.birth_date)

    def label(self):
        if self.birth_date is None:
            return self.name
        return f"{self.name} ({self.birth_date.isoformat()})"


@dataclass
class FmRatingTable:
    rows: list

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def find(self, name, birth_date=None):
        norm = normalize_name(name)
        return [r for r in self.rows
                if normalize_name(r.name) == norm
                and (birth_date is None or r.birth_date == birth_date)]

    def subset(self, keys):
        keys = set(keys)
        return FmRatingTable([r for r in self.rows if r.key in keys])


def _parse_date(text, path, line):
    text = (text or "").strip()
    if not text:
        return None
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise RowError(path, line, f"birth_date not ISO formatted: {text!r}") from None


def load_fm_ratings(path):
    """Load ``fm_ratings.csv`` and validate every rating against 1-20."""
    rows = []
    seen = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(path, reader.fieldnames, RATING_COLUMNS)
        for row in reader:
            line = reader.line_num
            values = {}
            for attr in RATING_ATTRIBUTES:
                text = row[attr].strip()
                try:
                    value = int(text)
                except ValueError:
                    raise RowError(path, line, f"{attr}: not an integer: {text!r}") from None
                if not 1 <= value <= 20:
                    raise RowError(path, line, f"{attr}={value} outside 1-20")
                values[attr] = value
            birth = _parse_date(row.get("birth_date"), path, line)
            rating = FmRating(name=row["name"].strip(), birth_date=birth, **values)
            norm = normalize_name(rating.name)
            for other in seen.get(norm, ()):
                if other.birth_date is None or birth is None or other.birth_date == birth:
                    raise AmbiguityError(
                        f"{path}:{line}: duplicate rating for {rating.name!r} "
                        "without a distinguishing birth_date")
            seen.setdefault(norm, []).append(rating)
            rows.append(rating)
    return FmRatingTable(rows)


def write_fm_ratings(table, path):
    with atomic_open(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATING_COLUMNS + ("birth_date",))
        for r in table:
            writer.writerow([r.name, r.finishing, r.technique, r.long_shots, r.heading,
                             r.birth_date.isoformat() if r.birth_date else ""])


def load_aliases(path):
    """Read ``aliases.csv`` into ``{event_name: (rating_name, birth_date)}``.

    An optional ``birth_date`` column picks between rating rows sharing a name.
    """
    aliases = {}
    if path is None:
        return aliases
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(path, reader.fieldnames, ("event_name", "rating_name"))
        for row in reader:
            birth = _parse_date(row.get("birth_date"), path, reader.line_num)
            aliases[row["event_name"].strip()] = (row["rating_name"].strip(), birth)
    return aliases


# --------------------------------------------------------------------------
# Player linkage


@dataclass
class PlayerTable:
    """Contiguous player indices for the shooters in a dataset."""

    names: list
    shot_counts: list
    ratings: list  # FmRating or None, aligned with names
    aliases: list = field(default_factory=list)

    def __post_init__(self):
        if not self.aliases:
            self.aliases = [[] for _ in self.names]
        self._lookup = {}
        for i, name in enumerate(self.names):
            self._lookup[name] = i
            self._lookup.setdefault(normalize_name(name), i)
            for alias in self.aliases[i]:
                self._lookup.setdefault(normalize_name(alias), i)

    def __len__(self):
        return len(self.names)

    def index(self, name):
        """Index of a player by event name, rating name or normalized form."""
        if name in self._lookup:
            return self._lookup[name]
        try:
            return self._lookup[normalize_name(name)]
        except KeyError:
            raise KeyError(f"unknown player: {name!r}") from None

    def rated(self, i):
        return self.ratings[i] is not None

    def to_rows(self):
        for i, name in enumerate(self.names):
            r = self.ratings[i]
            yield {
                "player_index": i,
                "name": name,
                "shot_count": self.shot_counts[i],
                "rating_name": r.name if r else "",
                "rating_birth_date": r.birth_date.isoformat() if r and r.birth_date else "",
            }

    def write_csv(self, path):
        with atomic_open(path) as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["player_index", "name", "shot_count", "rating_name",
                                "rating_birth_date"], lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.to_rows())

    @classmethod
    def read_csv(cls, path, ratings=None):
        """Rebuild a table written by :meth:`write_csv`.

        Rating rows are re-attached from `ratings` when supplied; otherwise a
        placeholder rating with only the name is kept so `rated` still works.
        """
        names, counts, rated = [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                names.append(row["name"])
                counts.append(int(row["shot_count"]))
                key = None
                if row["rating_name"]:
                    birth = row["rating_birth_date"] or None
                    key = (row["rating_name"], dt.date.fromisoformat(birth) if birth else None)
                rated.append(key)
        by_key = {r.key: r for r in ratings} if ratings is not None else {}
        resolved = []
        for key in rated:
            if key is None:
                resolved.append(None)
            elif key in by_key:
                resolved.append(by_key[key])
            else:
                resolved.append(FmRating(key[0], 0, 0, 0, 0, key[1]))
        aliases = [[k[0]] if k and k[0] != n else [] for n, k in zip(names, rated)]
        return cls(names, counts, resolved, aliases)


@dataclass
class MatchReport:
    unmatched_players: list = field(default_factory=list)
    unused_ratings: list = field(default_factory=list)
    ambiguous: list = field(default_factory=list)
    via_alias: list = field(default_factory=list)

    def to_dict(self):
        return {
            "unmatched_players": self.unmatched_players,
            "unused_ratings": self.unused_ratings,
            "ambiguous": self.ambiguous,
            "via_alias": self.via_alias,
        }


def match_players(shots, ratings, aliases=None):
    """Index the shooters in `shots` and link them to rating rows.

    Exact normalized-name matches are tried first, then the alias map.
    Unmatched shooters stay in the table with no rating.

    Returns
    -------
    (PlayerTable, MatchReport)
    """
    aliases = aliases or {}
    resolved_aliases = {}
    for event_name, (rating_name, birth) in aliases.items():
        hits = ratings.find(rating_name, birth)
        if not hits:
            raise ConfigError(f"alias {event_name!r} -> {rating_name!r} names no rating row")
        if len(hits) > 1:
            raise AmbiguityError(
                f"alias {event_name!r} -> {rating_name!r} matches {len(hits)} rating rows; "
                "add a birth_date")
        resolved_aliases[normalize_name(event_name)] = hits[0]

    counts = Counter(s.player_name for s in shots)
    names = sorted(counts)
    report = MatchReport()
    linked = []
    alias_lists = []
    for name in names:
        hits = ratings.find(name)
        rating = hits[0] if len(hits) == 1 else None
        if rating is None and normalize_name(name) in resolved_aliases:
            rating = resolved_aliases[normalize_name(name)]
            report.via_alias.append(name)
        if rating is None:
            if len(hits) > 1:
                report.ambiguous.append(name)
            report.unmatched_players.append(name)
        linked.append(rating)
        alias_lists.append([rating.name] if rating is not None and rating.name != name else [])

    used = {r.key for r in linked if r is not None}
    report.unused_ratings = [r.label() for r in ratings if r.key not in used]
    table = PlayerTable(names, [counts[n] for n in names], linked, alias_lists)
    return table, report


def filter_min_shots(shots, threshold=30):
    """Drop every shot by a player with fewer than `threshold` shots in total."""
    if threshold < 1:
        raise ConfigError("threshold must be at least 1")
    counts = Counter(s.player_name for s in shots)
    return [s for s in shots if counts[s.player_name] >= threshold]
