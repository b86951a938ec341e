"""Run configuration and the staged pipeline behind the command line.

Every stage reads and writes plain files under one output directory, so a
stage can be rerun on its own or fed hand-made inputs.
"""

from __future__ import annotations

import csv
import difflib
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ._io import atomic_open, read_json, write_json
from .counterfactual import (
    DEFAULT_CONTEXT_FLAG, PosteriorEffects, c3t_decompose, fats_for_substitution, flag_partition,
    team_context_weights, write_per_draw_csv,
)
from .diagnostics import convergence_report
from .draws import PosteriorDraws
from .errors import ConfigError, DataError
from .features import (
    CONTEXT_FLAGS, FEATURE_NAMES, build_design_matrix, fit_scaler, raw_geometry,
    read_features_csv,
)
from .ingest import (
    IngestReport, PlayerTable, filter_min_shots, load_aliases, load_fm_ratings, match_players,
    parse_event_files, parse_shots_csv, write_shots_csv,
)
from .model import EXPERT_INFORMED, HIERARCHICAL, ModelSpec, XGModel, inv_logit
from .nuts import SamplerConfig, sample
from .priors import PriorMeanMatrix, build_prior_means, weakly_informative_means, zscore_ratings

logger = logging.getLogger(__name__)

SHOTS_CSV = "shots.csv"
PLAYERS_CSV = "players.csv"
INGEST_REPORT = "ingest_report.json"
FEATURES_CSV = "features.csv"
SCALER_JSON = "scaler.json"
PRIOR_MEANS_CSV = "prior_means.csv"
DRAWS_DIR = "draws"
GAMMA_SUMMARY_CSV = "gamma_summary.csv"
DIAGNOSTICS_JSON = "diagnostics.json"
XG_SHOTS_CSV = "xg_shots.csv"
XG_PLAYERS_CSV = "xg_players.csv"
REPORT_JSON = "counterfactual_report.json"
REPORT_DRAWS_CSV = "counterfactual_draws.csv"


class NoShotsError(DataError):
    """The inputs contain no usable shot events."""


@dataclass
class RunConfig:
    events_dir: str = None
    shots_csv: str = None
    ratings: str = None
    aliases: str = None
    min_shots: int = 30
    kind: str = HIERARCHICAL
    prior_mode: str = EXPERT_INFORMED
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    out: str = "cfxg_out"
    context_flag: str = DEFAULT_CONTEXT_FLAG

    def __post_init__(self):
        if isinstance(self.sampler, dict):
            self.sampler = SamplerConfig(**self.sampler)
        if self.context_flag not in CONTEXT_FLAGS:
            raise ConfigError(f"context flag must be one of {CONTEXT_FLAGS}")
        ModelSpec(self.kind, self.prior_mode)

    @property
    def out_dir(self):
        return Path(self.out)

    def model_spec(self):
        return ModelSpec(self.kind, self.prior_mode, FEATURE_NAMES)

    def check_inputs(self):
        for name in ("events_dir", "shots_csv", "ratings", "aliases"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name}: path does not exist: {p}")

    def to_dict(self):
        d = asdict(self)
        d["sampler"] = self.sampler.to_dict()
        return d

    @classmethod
    def load(cls, path=None, **overrides):
        """Build a config from an optional JSON file plus non-None overrides.

        Relative input paths in the file resolve against the file's folder.
        """
        data = {}
        if path is not None:
            data = read_json(path)
            base = Path(path).parent
            for key in ("events_dir", "shots_csv", "ratings", "aliases", "out"):
                if data.get(key) is not None and not Path(data[key]).is_absolute():
                    data[key] = str(base / data[key])
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sampler = dict(data.pop("sampler", {}) or {})
        for key, value in overrides.items():
            if value is None:
                continue
            if key in known:
                data[key] = value
            else:
                sampler[key] = value
        return cls(**data, sampler=SamplerConfig(**sampler))


# --------------------------------------------------------------------------
# Stages


def run_ingest(cfg):
    """Parse inputs, apply the shot threshold, link ratings and persist the results."""
    cfg.check_inputs()
    report = IngestReport()
    if cfg.events_dir is not None:
        shots = parse_event_files(cfg.events_dir, report)
    elif cfg.shots_csv is not None:
        shots = parse_shots_csv(cfg.shots_csv, report)
    else:
        raise ConfigError("either events_dir or shots_csv is required")
    if not shots:
        raise NoShotsError("no shot events")
    kept = filter_min_shots(shots, cfg.min_shots)
    if not kept:
        raise NoShotsError(f"no shot events left after the {cfg.min_shots}-shot threshold")
    if cfg.ratings is None:
        raise ConfigError("a ratings file is required")
    ratings = load_fm_ratings(cfg.ratings)
    table, match = match_players(kept, ratings, load_aliases(cfg.aliases))

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_shots_csv(kept, out / SHOTS_CSV)
    table.write_csv(out / PLAYERS_CSV)
    summary = {
        "parsed": report.to_dict(),
        "min_shots": cfg.min_shots,
        "shots_before_threshold": len(shots),
        "shots_retained": len(kept),
        "players_retained": len(table),
        "players_dropped": len({s.player_name for s in shots}) - len(table),
        "matching": match.to_dict(),
    }
    write_json(out / INGEST_REPORT, summary)
    return kept, table, summary


def _load_ingested(cfg):
    out = cfg.out_dir
    if not (out / SHOTS_CSV).exists():
        run_ingest(cfg)
    shots = parse_shots_csv(out / SHOTS_CSV)
    ratings = load_fm_ratings(cfg.ratings) if cfg.ratings else None
    table = PlayerTable.read_csv(out / PLAYERS_CSV, ratings)
    return shots, table, ratings


def run_features(cfg):
    """Build the design matrix, scaler and prior means from ingested shots."""
    shots, table, ratings = _load_ingested(cfg)
    scaler = fit_scaler(raw_geometry(shots))
    fm = build_design_matrix(shots, scaler, table)
    rated = [r for r in table.ratings if r is not None]
    # Rating-based means are stored whenever ratings exist; the weakly
    # informative model ignores them.
    if ratings is not None and len(rated) >= 2:
        prior = build_prior_means(zscore_ratings(rated), table)
    elif cfg.prior_mode == EXPERT_INFORMED:
        raise ConfigError("expert-informed priors need at least two rated players")
    else:
        prior = weakly_informative_means(table)
    out = cfg.out_dir
    fm.write_csv(out / FEATURES_CSV)
    write_json(out / SCALER_JSON, scaler.to_dict())
    prior.write_csv(out / PRIOR_MEANS_CSV)
    return fm, scaler, prior, table


def _load_features(cfg):
    out = cfg.out_dir
    if not (out / FEATURES_CSV).exists():
        run_features(cfg)
    fm = read_features_csv(out / FEATURES_CSV)
    prior = PriorMeanMatrix.read_csv(out / PRIOR_MEANS_CSV)
    table = PlayerTable.read_csv(out / PLAYERS_CSV)
    return fm, prior, table


def run_fit(cfg):
    fm, prior, table = _load_features(cfg)
    spec = cfg.model_spec()
    model = XGModel.from_features(spec, fm, n_players=len(table), prior_means=prior)
    logger.info("fitting %s model with %d parameters", spec.kind, model.dim)
    draws = sample(model, cfg.sampler)
    draws.model = {**spec.to_dict(), "n_players": len(table)}
    draws.to_directory(cfg.out_dir / DRAWS_DIR)
    if spec.hierarchical:
        write_gamma_summary(cfg.out_dir / GAMMA_SUMMARY_CSV, model, draws, table)
    return draws, model


def write_gamma_summary(path, model, draws, table):
    """Posterior summaries of the derived player deviations ``gamma[i,f]``."""
    flat = draws.flat()
    with atomic_open(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter", "player_index", "player_name", "feature",
                         "mean", "sd", "q025", "q975"])
        for i in range(model.n_players):
            g = model.player_gamma(flat, i)
            lo, hi = np.quantile(g, [0.025, 0.975], axis=0)
            for j, f in enumerate(model.features):
                writer.writerow([f"gamma[{i},{f}]", i, table.names[i], f,
                                 *(repr(float(v)) for v in (g[:, j].mean(), g[:, j].std(),
                                                            lo[j], hi[j]))])


def run_diagnose(cfg, draws_dir=None):
    draws = PosteriorDraws.from_directory(draws_dir or cfg.out_dir / DRAWS_DIR)
    if draws.n_chains < 2:
        raise DataError("diagnostics need at least two chains")
    population = None
    if draws.model is not None:
        model = _structure_model(draws, None)
        population = model.population_indices
    diag = convergence_report(draws, population=population)
    write_json(cfg.out_dir / DIAGNOSTICS_JSON, diag.to_dict())
    return diag


def _structure_model(draws, prior):
    if not draws.model:
        raise DataError("draws carry no model description")
    spec = ModelSpec.from_dict(draws.model)
    P = int(draws.model.get("n_players", 0))
    F = len(spec.features)
    mu = None
    if spec.hierarchical:
        mu = prior.mu if prior is not None else np.zeros((P, F))
    model = XGModel(spec, np.zeros((0, F)), np.zeros(0), np.zeros(0, dtype=np.intp), P, mu)
    if model.dim != draws.dim:
        raise DataError(f"draws have dimension {draws.dim}, model layout needs {model.dim}")
    return model


def load_fitted(cfg, draws_dir=None):
    """Features, player table and posterior effects from a finished fit."""
    fm, prior, table = _load_features(cfg)
    draws = PosteriorDraws.from_directory(draws_dir or cfg.out_dir / DRAWS_DIR)
    model = _structure_model(draws, prior)
    return fm, table, PosteriorEffects.from_draws(model, draws)


def resolve_player(table, name):
    try:
        return table.index(name)
    except KeyError:
        close = difflib.get_close_matches(name, table.names, n=3, cutoff=0.5)
        hint = f"; did you mean: {', '.join(close)}" if close else ""
        raise ConfigError(f"unknown player {name!r}{hint}") from None


def run_xg(cfg, draws_dir=None):
    """Posterior mean xG per shot and per player for the fitted shots."""
    fm, table, effects = load_fitted(cfg, draws_dir)
    model = effects.model
    S = effects.n_draws
    shot_xg = np.zeros(len(fm))
    player_rows = []
    for i, name in enumerate(table.names):
        mask = fm.player_idx == i
        if not mask.any():
            continue
        X = fm.X[mask]
        if model.spec.hierarchical:
            p = effects.shot_probs(X, i)
        else:
            p = inv_logit(effects.alpha[:, None] + effects.beta @ X.T)
        shot_xg[mask] = p.mean(axis=0)
        totals = p.sum(axis=1)
        lo, hi = np.quantile(totals, [0.025, 0.975])
        player_rows.append((i, name, int(mask.sum()), int(fm.y[mask].sum()),
                            float(totals.mean()), float(lo), float(hi)))
    with atomic_open(cfg.out_dir / XG_SHOTS_CSV) as fh:
        fh.write("shot_id,player_index,outcome,xg\n")
        for k in range(len(fm)):
            fh.write(f"{fm.shot_ids[k]},{int(fm.player_idx[k])},{int(fm.y[k])},"
                     f"{float(shot_xg[k])!r}\n")
    with atomic_open(cfg.out_dir / XG_PLAYERS_CSV) as fh:
        fh.write("player_index,name,shots,goals,xg_mean,xg_q025,xg_q975\n")
        for i, name, n, g, m, lo, hi in player_rows:
            fh.write(f"{i},{name},{n},{g},{m!r},{lo!r},{hi!r}\n")
    return shot_xg, player_rows, S


def run_counterfactual(cfg, player_from, player_to, context_flag=None, team=None,
                       per_draw=False, draws_dir=None):
    """Substitute `player_to` into `player_from`'s shots and write the report."""
    fm, table, effects = load_fitted(cfg, draws_dir)
    a = resolve_player(table, player_from)
    b = resolve_player(table, player_to)
    flag = context_flag or cfg.context_flag
    shots = fm.for_player(a)
    if len(shots) == 0:
        raise DataError(f"player {player_from!r} has no shots in the fitted data")
    partition = flag_partition(shots, flag)
    summary = c3t_decompose(effects, shots, b, partition, player_a=a)
    report = {
        "query": {
            "from_player": table.names[a],
            "to_player": table.names[b],
            "shot_set": {"player": table.names[a], "n_shots": len(shots),
                         "source": str(cfg.out_dir / FEATURES_CSV)},
            "context_partition": {"flag": flag, "contexts": list(partition),
                                  "counts": {k: int(v.sum()) for k, v in partition.items()}},
            "n_draws": effects.n_draws,
        },
        "total": summary.to_dict(),
    }
    if team is not None:
        team_shots = fm.for_team(team)
        if len(team_shots) == 0:
            teams = sorted(set(fm.teams.tolist()) - {""})
            close = difflib.get_close_matches(team, teams, n=3, cutoff=0.5)
            hint = f"; did you mean: {', '.join(close)}" if close else ""
            raise DataError(f"team {team!r} has no shots{hint}")
        weights = team_context_weights(team_shots, flag_partition(team_shots, flag))
        report["fats"] = {"team": team, "n_team_shots": len(team_shots),
                          **fats_for_substitution(summary, weights).to_dict()}
    write_json(cfg.out_dir / REPORT_JSON, report)
    if per_draw:
        write_per_draw_csv(cfg.out_dir / REPORT_DRAWS_CSV, summary)
    return report, summary

