"""Expert-rating prior means and coefficient groups."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._io import atomic_open
from .errors import DataError
from .features import FEATURE_NAMES
from .ingest import RATING_ATTRIBUTES

GROUPS = ("physics", "situation", "common_techniques", "rare_techniques")

_GROUP_MEMBERS = {
    "physics": ("shot_distance", "gk_distance", "shot_angle"),
    "situation": ("under_pressure", "penalty_area", "one_on_one", "first_time",
                  "defenders_in_triangle"),
    "common_techniques": ("tech_normal", "body_left", "body_right", "body_other"),
    "rare_techniques": ("tech_volley", "tech_halfvolley", "tech_lob", "tech_dive",
                        "tech_overhead"),
}

# feature -> rating attribute supplying its prior mean
ATTRIBUTE_MAP = {
    "one_on_one": "finishing",
    "penalty_area": "finishing",
    "shot_distance": "long_shots",
    "tech_normal": "technique",
    "body_other": "heading",
}


def group_assignment():
    """Map every feature to its hyperparameter group."""
    return {f: g for g, members in _GROUP_MEMBERS.items() for f in members}


@dataclass
class ZScoredRatings:
    keys: list  # rating keys, (name, birth_date)
    z: np.ndarray  # shape (n, 4), columns ordered as RATING_ATTRIBUTES
    attributes: tuple = RATING_ATTRIBUTES

    def row(self, key):
        return self.z[self.keys.index(key)]

    def column(self, attribute):
        return self.z[:, self.attributes.index(attribute)]


def zscore_ratings(ratings):
    """Standardize each rating attribute over the rows of `ratings`.

    Uses the population standard deviation. The caller chooses the
    population by passing only the rows it wants standardized together.
    """
    rows = list(ratings)
    if len(rows) < 2:
        raise DataError("at least two rated players are needed to z-score ratings")
    raw = np.array([[getattr(r, a) for a in RATING_ATTRIBUTES] for r in rows], dtype=float)
    sd = raw.std(axis=0)
    for a, s in zip(RATING_ATTRIBUTES, sd):
        if not s > 0:
            raise DataError(f"rating attribute {a!r} has zero variance")
    return ZScoredRatings([r.key for r in rows], (raw - raw.mean(axis=0)) / sd)


@dataclass
class PriorMeanMatrix:
    mu: np.ndarray  # (P, F)
    player_names: list
    feature_names: tuple = FEATURE_NAMES

    def write_csv(self, path):
        with atomic_open(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["player_name", *self.feature_names])
            for name, row in zip(self.player_names, self.mu):
                writer.writerow([name, *(repr(float(v)) for v in row)])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            names, rows = [], []
            for row in reader:
                names.append(row[0])
                rows.append([float(v) for v in row[1:]])
        mu = np.array(rows, dtype=float).reshape(len(names), len(header) - 1)
        return cls(mu, names, tuple(header[1:]))


def build_prior_means(zscores, player_table, feature_names=FEATURE_NAMES):
    """Per-player prior means for the player deviation vectors.

    Mapped features take the z-score of their rating attribute; every other
    entry, and every entry of an unrated player, is zero.
    """
    col = {f: j for j, f in enumerate(feature_names)}
    mu = np.zeros((len(player_table), len(feature_names)))
    for i, rating in enumerate(player_table.ratings):
        if rating is None:
            continue
        z = zscores.row(rating.key)
        for feature, attr in ATTRIBUTE_MAP.items():
            if feature in col:
                mu[i, col[feature]] = z[zscores.attributes.index(attr)]
    return PriorMeanMatrix(mu, list(player_table.names), tuple(feature_names))


def weakly_informative_means(player_table, feature_names=FEATURE_NAMES):
    return PriorMeanMatrix(np.zeros((len(player_table), len(feature_names))),
                           list(player_table.names), tuple(feature_names))
