"""Shot geometry and the 17-column design matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_open
from .errors import DataError, GeometryError
from .ingest import BodyPart, Technique

GOAL_CENTER = np.array([120.0, 40.0])
LEFT_POST = np.array([120.0, 36.0])
RIGHT_POST = np.array([120.0, 44.0])
TRIANGLE_TOL = 1e-9

FEATURE_NAMES = (
    "shot_distance", "gk_distance", "shot_angle", "defenders_in_triangle",
    "penalty_area", "under_pressure", "first_time", "one_on_one",
    "body_left", "body_right", "body_other",
    "tech_normal", "tech_volley", "tech_halfvolley", "tech_lob", "tech_dive",
    "tech_overhead",
)
GEOMETRIC_FEATURES = ("shot_distance", "gk_distance", "shot_angle")
BODY_FEATURES = ("body_left", "body_right", "body_other")
TECHNIQUE_FEATURES = ("tech_normal", "tech_volley", "tech_halfvolley", "tech_lob",
                      "tech_dive", "tech_overhead")
CONTEXT_FLAGS = ("under_pressure", "first_time", "one_on_one", "penalty_area")

_BODY_COLUMN = {
    BodyPart.LEFT_FOOT: "body_left",
    BodyPart.RIGHT_FOOT: "body_right",
    BodyPart.OTHER: "body_other",
}
_TECH_COLUMN = {
    Technique.NORMAL: "tech_normal",
    Technique.VOLLEY: "tech_volley",
    Technique.HALF_VOLLEY: "tech_halfvolley",
    Technique.LOB: "tech_lob",
    Technique.DIVING_HEADER: "tech_dive",
    Technique.OVERHEAD_KICK: "tech_overhead",
}
_COL = {name: i for i, name in enumerate(FEATURE_NAMES)}


def shot_distance(location):
    """Euclidean distance from the shot to the goal centre."""
    return float(np.hypot(location[0] - GOAL_CENTER[0], location[1] - GOAL_CENTER[1]))


def shot_angle(location):
    """Angle (radians) subtended at the shooter by the two goal posts."""
    loc = np.asarray(location, dtype=float)
    a = LEFT_POST - loc
    b = RIGHT_POST - loc
    na, nb = np.hypot(*a), np.hypot(*b)
    if na == 0.0 or nb == 0.0:
        raise GeometryError(f"shot location {tuple(loc)} coincides with a goal post")
    cos = np.dot(a, b) / (na * nb)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def goalkeeper(freeze_frame):
    keepers = [p for p in freeze_frame if p.is_keeper and not p.is_teammate]
    if len(keepers) != 1:
        raise DataError(f"expected one opposing goalkeeper in freeze frame, found {len(keepers)}")
    return keepers[0]


def gk_distance(freeze_frame):
    """Distance from the opposing goalkeeper to the goal centre."""
    pos = goalkeeper(freeze_frame).position
    return float(np.hypot(pos[0] - GOAL_CENTER[0], pos[1] - GOAL_CENTER[1]))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def in_triangle(point, a, b, c, tol=TRIANGLE_TOL):
    """Whether `point` lies inside or on triangle (a, b, c)."""
    d1 = _cross(a, b, point)
    d2 = _cross(b, c, point)
    d3 = _cross(c, a, point)
    has_neg = d1 < -tol or d2 < -tol or d3 < -tol
    has_pos = d1 > tol or d2 > tol or d3 > tol
    return not (has_neg and has_pos)


def defenders_in_triangle(location, freeze_frame):
    """Count opposing outfielders inside the shooter-post-post triangle."""
    count = 0
    for p in freeze_frame:
        if p.is_teammate or p.is_keeper:
            continue
        if in_triangle(p.position, location, LEFT_POST, RIGHT_POST):
            count += 1
    return count


def in_penalty_area(location):
    x, y = location
    return int(x >= 102.0 and 18.0 <= y <= 62.0)


def raw_geometry(shots):
    """Unscaled (distance, gk distance, angle) for each shot, shape (N, 3)."""
    out = np.empty((len(shots), 3))
    for k, s in enumerate(shots):
        out[k] = (shot_distance(s.location), gk_distance(s.freeze_frame), shot_angle(s.location))
    return out


@dataclass
class Scaler:
    """Z-score parameters for the geometric columns."""

    mean: np.ndarray
    sd: np.ndarray
    columns: tuple = GEOMETRIC_FEATURES

    def transform(self, raw):
        return (np.asarray(raw, dtype=float) - self.mean) / self.sd

    def inverse_transform(self, scaled):
        return np.asarray(scaled, dtype=float) * self.sd + self.mean

    def to_dict(self):
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["sd"], dtype=float),
                   tuple(d["columns"]))


def fit_scaler(raw, columns=GEOMETRIC_FEATURES):
    """Population mean and standard deviation per column of `raw`."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape[0] < 2:
        raise DataError("at least two rows are needed to fit a scaler")
    mean = raw.mean(axis=0)
    sd = raw.std(axis=0)
    for j, s in enumerate(sd):
        if not s > 0:
            raise DataError(f"column {columns[j]!r} has zero variance")
    return Scaler(mean, sd, tuple(columns))


@dataclass
class FeatureMatrix:
    """Design matrix with aligned outcomes, player indices and raw context flags."""

    X: np.ndarray
    y: np.ndarray
    player_idx: np.ndarray
    context_flags: dict
    shot_ids: list = field(default_factory=list)
    teams: np.ndarray = None
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        n = self.X.shape[0]
        if self.teams is None:
            self.teams = np.array([""] * n, dtype=object)
        if not self.shot_ids:
            self.shot_ids = [str(k) for k in range(n)]
        if not (len(self.y) == len(self.player_idx) == n):
            raise DataError("X, y and player_idx lengths differ")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, mask):
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return FeatureMatrix(
            X=self.X[idx], y=self.y[idx], player_idx=self.player_idx[idx],
            context_flags={k: v[idx] for k, v in self.context_flags.items()},
            shot_ids=[self.shot_ids[i] for i in idx], teams=self.teams[idx],
            feature_names=self.feature_names,
        )

    def for_player(self, player):
        return self.subset(self.player_idx == player)

    def for_team(self, team):
        return self.subset(self.teams == team)

    def write_csv(self, path):
        with atomic_open(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["shot_id", *self.feature_names, "outcome", "player_index", "team"])
            for k in range(len(self)):
                writer.writerow([self.shot_ids[k], *(repr(float(v)) for v in self.X[k]),
                                 int(self.y[k]), int(self.player_idx[k]), self.teams[k]])


def build_design_matrix(shots, scaler, player_table):
    """Encode `shots` as a :class:`FeatureMatrix` using a fitted scaler."""
    n = len(shots)
    X = np.zeros((n, len(FEATURE_NAMES)))
    y = np.zeros(n, dtype=np.int8)
    pidx = np.zeros(n, dtype=np.intp)
    flags = {name: np.zeros(n, dtype=bool) for name in CONTEXT_FLAGS}
    teams = np.empty(n, dtype=object)
    if n:
        X[:, :3] = scaler.transform(raw_geometry(shots))
    for k, s in enumerate(shots):
        try:
            pidx[k] = player_table.index(s.player_name)
        except KeyError:
            raise DataError(f"shot {s.shot_id}: player {s.player_name!r} not in player table") from None
        box = in_penalty_area(s.location)
        X[k, _COL["defenders_in_triangle"]] = defenders_in_triangle(s.location, s.freeze_frame)
        X[k, _COL["penalty_area"]] = box
        X[k, _COL["under_pressure"]] = s.under_pressure
        X[k, _COL["first_time"]] = s.first_time
        X[k, _COL["one_on_one"]] = s.one_on_one
        X[k, _COL[_BODY_COLUMN[s.body_part]]] = 1.0
        X[k, _COL[_TECH_COLUMN[s.technique]]] = 1.0
        y[k] = s.outcome
        flags["under_pressure"][k] = s.under_pressure
        flags["first_time"][k] = s.first_time
        flags["one_on_one"][k] = s.one_on_one
        flags["penalty_area"][k] = bool(box)
        teams[k] = s.team_name
    return FeatureMatrix(X, y, pidx, flags, [s.shot_id for s in shots], teams)


def read_features_csv(path):
    """Load ``features.csv``; context flags are recovered from the binary columns."""
    import pandas as pd

    df = pd.read_csv(path, dtype={"shot_id": str, "team": str}, keep_default_na=False,
                     float_precision="round_trip")
    X = df[list(FEATURE_NAMES)].to_numpy(dtype=float)
    flags = {name: df[name].to_numpy() > 0.5 for name in CONTEXT_FLAGS}
    return FeatureMatrix(X, df["outcome"].to_numpy(dtype=np.int8),
                         df["player_index"].to_numpy(dtype=np.intp), flags,
                         df["shot_id"].tolist(), df["team"].to_numpy(dtype=object))
