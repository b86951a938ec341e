"""Synthetic shot data with known generating parameters.

Two levels are provided. Feature-level generators draw design matrices
directly and are used to check parameter recovery and pooling. The league
generator builds event documents with freeze frames and rating tables, so
the whole pipeline can run on inputs with planted player effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import atomic_open
from .features import FEATURE_NAMES, build_design_matrix, fit_scaler, raw_geometry
from .ingest import (
    RATING_ATTRIBUTES, BodyPart, FmRating, FmRatingTable, FramePlayer, ShotRecord, Technique,
    match_players, write_fm_ratings,
)
from .model import GROUP_SCALES, inv_logit
from .priors import ATTRIBUTE_MAP, GROUPS, group_assignment, zscore_ratings

TRUE_ALPHA = -3.0
TRUE_BETA = {
    "shot_distance": -0.8, "gk_distance": 0.5, "shot_angle": 0.6,
    "defenders_in_triangle": -0.4, "penalty_area": 0.3, "under_pressure": -0.3,
    "first_time": 0.1, "one_on_one": 0.9,
    "body_left": 0.1, "body_right": 0.2, "body_other": -0.4,
    "tech_normal": 0.0, "tech_volley": -0.3, "tech_halfvolley": -0.2, "tech_lob": 0.3,
    "tech_dive": -0.2, "tech_overhead": -0.5,
}
BODY_PROBS = {"body_left": 0.3, "body_right": 0.5, "body_other": 0.2}
TECH_PROBS = {"tech_normal": 0.8, "tech_volley": 0.07, "tech_halfvolley": 0.08,
              "tech_lob": 0.02, "tech_dive": 0.015, "tech_overhead": 0.015}


def true_beta(features=FEATURE_NAMES):
    return np.array([TRUE_BETA[f] for f in features])


def simulate_design(n, rng):
    """Draw an (n, 17) design matrix with plausible marginals.

    Geometric columns are standardized with shot angle falling as distance
    grows; binary flags and one-hot blocks follow fixed frequencies.
    """
    col = {f: j for j, f in enumerate(FEATURE_NAMES)}
    X = np.zeros((n, len(FEATURE_NAMES)))
    d = rng.standard_normal(n)
    X[:, col["shot_distance"]] = d
    X[:, col["gk_distance"]] = rng.standard_normal(n)
    X[:, col["shot_angle"]] = -0.75 * d + 0.66 * rng.standard_normal(n)
    X[:, col["defenders_in_triangle"]] = rng.poisson(1.2, n)
    X[:, col["penalty_area"]] = (d + 0.5 * rng.standard_normal(n)) < 0.3
    X[:, col["under_pressure"]] = rng.uniform(size=n) < 0.3
    X[:, col["first_time"]] = rng.uniform(size=n) < 0.3
    X[:, col["one_on_one"]] = rng.uniform(size=n) < 0.08
    for probs in (BODY_PROBS, TECH_PROBS):
        names = list(probs)
        pick = rng.choice(len(names), size=n, p=np.array(list(probs.values())))
        for k, name in enumerate(names):
            X[:, col[name]] = pick == k
    return X


@dataclass
class SyntheticData:
    X: np.ndarray
    y: np.ndarray
    alpha: float
    beta: np.ndarray
    player_idx: np.ndarray = None
    gamma: np.ndarray = None  # (P, F) true player deviations
    mu: np.ndarray = None  # (P, F) prior means implied by the ratings
    sigma: np.ndarray = None  # per-group true scales, ordered as GROUPS
    ratings: FmRatingTable = None
    feature_names: tuple = FEATURE_NAMES
    extra: dict = field(default_factory=dict)

    @property
    def n_players(self):
        return 0 if self.gamma is None else self.gamma.shape[0]


def simulate_baseline(n=2000, seed=0, alpha=TRUE_ALPHA, beta=None):
    rng = np.random.default_rng(seed)
    beta = true_beta() if beta is None else np.asarray(beta, dtype=float)
    X = simulate_design(n, rng)
    y = (rng.uniform(size=n) < inv_logit(alpha + X @ beta)).astype(np.int8)
    return SyntheticData(X, y, alpha, beta)


def random_ratings(n, rng, prefix="Player"):
    rows = [
        FmRating(f"{prefix} {i:03d}", *(int(v) for v in rng.integers(1, 21, size=4)))
        for i in range(n)
    ]
    return FmRatingTable(rows)


def ratings_to_mu(ratings, features=FEATURE_NAMES):
    """Prior means for players in rating-row order."""
    z = zscore_ratings(ratings)
    col = {f: j for j, f in enumerate(features)}
    mu = np.zeros((len(ratings), len(features)))
    for f, attr in ATTRIBUTE_MAP.items():
        if f in col:
            mu[:, col[f]] = z.column(attr)
    return mu


def simulate_hierarchical(shot_counts, seed=0, sigma_fraction=0.5, alpha=TRUE_ALPHA, beta=None):
    """Players with the given shot counts and deviations centred on rating-based means.

    True group scales are `sigma_fraction` times the prior group scales; each
    player's deviation is ``mu_i + sigma[group] * z``.
    """
    rng = np.random.default_rng(seed)
    counts = np.asarray(shot_counts, dtype=int)
    P = counts.size
    beta = true_beta() if beta is None else np.asarray(beta, dtype=float)
    ratings = random_ratings(P, rng)
    mu = ratings_to_mu(ratings)
    groups = group_assignment()
    gidx = np.array([GROUPS.index(groups[f]) for f in FEATURE_NAMES])
    sigma = sigma_fraction * np.array([GROUP_SCALES[g] for g in GROUPS])
    gamma = mu + sigma[gidx] * rng.standard_normal(mu.shape)
    pidx = np.repeat(np.arange(P), counts)
    X = simulate_design(pidx.size, rng)
    eta = alpha + X @ beta + np.einsum("ij,ij->i", X, gamma[pidx])
    y = (rng.uniform(size=pidx.size) < inv_logit(eta)).astype(np.int8)
    return SyntheticData(X, y, alpha, beta, pidx, gamma, mu, sigma, ratings)


def league_shot_counts(n_players=148, n_shots=9970, min_shots=30, seed=0):
    """Right-skewed per-player shot counts, each at least `min_shots`, summing to `n_shots`."""
    spare = n_shots - n_players * min_shots
    if spare < 0:
        raise ValueError("n_shots too small for the minimum per player")
    w = np.random.default_rng(seed).gamma(1.5, size=n_players)
    share = w / w.sum() * spare
    counts = min_shots + np.floor(share).astype(int)
    short = n_shots - counts.sum()
    counts[np.argsort(np.floor(share) - share)[:short]] += 1
    return counts


# --------------------------------------------------------------------------
# Event-level league


@dataclass
class LeaguePlayer:
    name: str
    team: str
    n_shots: int
    rating: FmRating
    gamma: dict  # feature -> planted deviation


_BODY_LABEL = {BodyPart.LEFT_FOOT: "Left Foot", BodyPart.RIGHT_FOOT: "Right Foot",
               BodyPart.OTHER: "Head"}
_TECH_LABEL = {Technique.NORMAL: "Normal", Technique.VOLLEY: "Volley",
               Technique.HALF_VOLLEY: "Half Volley", Technique.LOB: "Lob",
               Technique.DIVING_HEADER: "Diving Header", Technique.OVERHEAD_KICK: "Overhead Kick"}


def _random_shot(rng, shot_id, player):
    dist = min(5.0 + rng.gamma(2.0, 5.0), 38.0)
    phi = rng.uniform(-1.1, 1.1)
    x = 120.0 - dist * np.cos(phi)
    y = float(np.clip(40.0 + dist * np.sin(phi), 1.0, 79.0))
    gk = (120.0 - rng.uniform(0.3, 4.0), 40.0 + rng.uniform(-3.0, 3.0))
    frame = [FramePlayer(gk, False, True)]
    one_on_one = rng.uniform() < 0.06
    for _ in range(0 if one_on_one else rng.poisson(3.0)):
        px = rng.uniform(x, 119.5)
        py = float(np.clip(y + rng.normal(0.0, 6.0), 0.5, 79.5))
        frame.append(FramePlayer((float(px), py), False, False))
    for _ in range(rng.poisson(1.5)):
        frame.append(FramePlayer((float(rng.uniform(x - 10, 119.0)),
                                  float(rng.uniform(10.0, 70.0))), True, False))
    parts = (BodyPart.LEFT_FOOT, BodyPart.RIGHT_FOOT, BodyPart.OTHER)
    body = parts[rng.choice(3, p=[0.3, 0.5, 0.2])]
    techs = list(_TECH_LABEL)
    tech = techs[rng.choice(len(techs), p=[0.8, 0.07, 0.08, 0.02, 0.015, 0.015])]
    if tech == Technique.DIVING_HEADER:
        body = BodyPart.OTHER
    return ShotRecord(
        shot_id=shot_id, player_name=player.name, team_name=player.team,
        location=(float(x), y), outcome=False, body_part=body, technique=tech,
        under_pressure=bool(rng.uniform() < 0.3), first_time=bool(rng.uniform() < 0.3),
        one_on_one=bool(one_on_one), freeze_frame=tuple(frame),
    )


@dataclass
class League:
    players: list
    shots: list
    ratings: FmRatingTable
    planted: dict  # role -> player name
    gamma: dict  # player name -> (F,) true deviations
    extra: dict = field(default_factory=dict)

    def write(self, directory, n_files=10):
        """Write ``events/`` (StatsBomb-style JSON), ``fm_ratings.csv`` and ``aliases.csv``."""
        directory = Path(directory)
        events_dir = directory / "events"
        events_dir.mkdir(parents=True, exist_ok=True)
        chunks = np.array_split(np.arange(len(self.shots)), n_files)
        for k, idx in enumerate(chunks):
            events = [{"id": f"kickoff-{k}", "type": {"name": "Pass"},
                       "player": {"name": self.shots[idx[0]].player_name} if len(idx) else None}]
            events += [_shot_event(self.shots[i]) for i in idx]
            if k == 0 and len(idx):
                events.append(_penalty_event(self.shots[idx[0]]))
            with atomic_open(events_dir / f"match_{k:03d}.json") as fh:
                json.dump(events, fh, indent=1)
        write_fm_ratings(self.ratings, directory / "fm_ratings.csv")
        with atomic_open(directory / "aliases.csv") as fh:
            fh.write("event_name,rating_name,birth_date\n")
            for alias, target in self.extra.get("aliases", {}).items():
                fh.write(f"{alias},{target},\n")
        return directory


def _shot_event(s):
    frame = [{"location": list(p.position), "teammate": p.is_teammate,
              "position": {"name": "Goalkeeper" if p.is_keeper else "Center Back"}}
             for p in s.freeze_frame]
    ev = {
        "id": s.shot_id,
        "type": {"name": "Shot"},
        "player": {"name": s.player_name},
        "team": {"name": s.team_name},
        "location": list(s.location),
        "shot": {
            "type": {"name": "Open Play"},
            "outcome": {"name": "Goal" if s.outcome else "Saved"},
            "body_part": {"name": _BODY_LABEL[s.body_part]},
            "technique": {"name": _TECH_LABEL[s.technique]},
            "freeze_frame": frame,
        },
    }
    if s.under_pressure:
        ev["under_pressure"] = True
    if s.first_time:
        ev["shot"]["first_time"] = True
    if s.one_on_one:
        ev["shot"]["one_on_one"] = True
    return ev


def _penalty_event(s):
    return {"id": f"pen-{s.shot_id}", "type": {"name": "Shot"}, "player": {"name": s.player_name},
            "team": {"name": s.team_name}, "location": [108.0, 40.0],
            "shot": {"type": {"name": "Penalty"}, "outcome": {"name": "Goal"},
                     "body_part": {"name": "Right Foot"}, "technique": {"name": "Normal"}}}


def synthetic_league(seed=0, n_teams=4, players_per_team=3, shots_range=(40, 90),
                     finisher_effect=0.8, alpha=TRUE_ALPHA):
    """Event-level league with a planted strong finisher and a planted weak one.

    The finisher's true deviation is ``+finisher_effect`` on penalty_area and
    tech_normal (and the weak finisher's is the negative), with ratings
    that point the same way. Every other player's deviation is zero and
    their ratings are drawn at random. Outcomes come from the hierarchical
    model applied to features computed by the library's own pipeline.
    """
    rng = np.random.default_rng(seed)
    players = []
    for t in range(n_teams):
        for k in range(players_per_team):
            players.append(LeaguePlayer(
                name=f"Team{t} Forward {k}", team=f"Team {t}",
                n_shots=int(rng.integers(shots_range[0], shots_range[1] + 1)),
                rating=None, gamma={}))
    finisher, weak = players[0], players[players_per_team]
    finisher.n_shots = weak.n_shots = shots_range[1] + 40
    strong_cols = ("penalty_area", "tech_normal")
    finisher.gamma = {f: finisher_effect for f in strong_cols}
    weak.gamma = {f: -finisher_effect for f in strong_cols}

    for p in players:
        vals = dict(zip(RATING_ATTRIBUTES, (int(v) for v in rng.integers(7, 15, size=4))))
        if p is finisher:
            vals.update(finishing=19, technique=18)
        elif p is weak:
            vals.update(finishing=3, technique=4)
        p.rating = FmRating(p.name, **vals)
    # one rating row under a different spelling, reachable only via an alias
    aliased = players[1]
    rating_rows = [p.rating for p in players]
    rating_rows[1] = FmRating(aliased.name.upper().replace(" ", "  ") + " Jr", aliased.rating.finishing,
                              aliased.rating.technique, aliased.rating.long_shots,
                              aliased.rating.heading)
    ratings = FmRatingTable(rating_rows)

    shots = []
    for p in players:
        for j in range(p.n_shots):
            shots.append(_random_shot(rng, f"{p.name.replace(' ', '_')}-{j:03d}", p))
    order = rng.permutation(len(shots))
    shots = [shots[i] for i in order]

    table, _ = match_players(shots, FmRatingTable([p.rating for p in players]))
    fm = build_design_matrix(shots, fit_scaler(raw_geometry(shots)), table)
    gamma = {p.name: np.array([p.gamma.get(f, 0.0) for f in FEATURE_NAMES]) for p in players}
    G = np.stack([gamma[n] for n in table.names])
    eta = alpha + fm.X @ true_beta() + np.einsum("ij,ij->i", fm.X, G[fm.player_idx])
    goals = rng.uniform(size=len(shots)) < inv_logit(eta)
    shots = [replace(s, outcome=bool(g)) for s, g in zip(shots, goals)]
    return League(players, shots, ratings, {"finisher": finisher.name, "weak": weak.name}, gamma,
                  extra={"aliases": {aliased.name: rating_rows[1].name}})

