"""Command-line interface: ``cfxg <subcommand> [options]``.

Exit codes: 0 success, 1 error (or diagnostics below the acceptance score),
2 no usable shot events or bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .diagnostics import SCORE_PASS
from .errors import CfxgError
from .pipeline import (
    NoShotsError, RunConfig, run_counterfactual, run_diagnose, run_features, run_fit,
    run_ingest, run_xg,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SHOTS = 2


def _common(parser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="sampler seed")
    parser.add_argument("--out", help="output directory")


def _inputs(parser):
    parser.add_argument("--events", dest="events_dir", help="folder of event JSON files")
    parser.add_argument("--shots", dest="shots_csv", help="canonical shots.csv instead of events")
    parser.add_argument("--ratings", help="fm_ratings.csv")
    parser.add_argument("--aliases", help="aliases.csv")
    parser.add_argument("--min-shots", type=int, dest="min_shots")


def _model(parser):
    parser.add_argument("--kind", choices=["baseline", "hierarchical"])
    parser.add_argument("--prior-mode", dest="prior_mode",
                        choices=["expert_informed", "weakly_informative"])


def _sampler(parser):
    parser.add_argument("--chains", type=int)
    parser.add_argument("--warmup", type=int)
    parser.add_argument("--draws", type=int)
    parser.add_argument("--target-accept", type=float, dest="target_accept")
    parser.add_argument("--max-tree-depth", type=int, dest="max_tree_depth")
    parser.add_argument("--init", choices=["map", "zero", "jitter"])
    parser.add_argument("--jobs", type=int, dest="n_jobs", help="chains run in parallel")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfxg", description="Bayesian xG fitting and counterfactual player substitution.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse events and ratings, link players")
    _common(p)
    _inputs(p)

    p = sub.add_parser("features", help="build the design matrix and prior means")
    _common(p)
    _inputs(p)
    _model(p)

    p = sub.add_parser("fit", help="sample the posterior")
    _common(p)
    _inputs(p)
    _model(p)
    _sampler(p)

    p = sub.add_parser("diagnose", help="convergence diagnostics for saved draws")
    _common(p)
    p.add_argument("--draws-dir", help="defaults to <out>/draws")

    p = sub.add_parser("xg", help="posterior xG per shot and per player")
    _common(p)
    p.add_argument("--draws-dir")

    p = sub.add_parser("counterfactual", help="substitute one player into another's shots")
    _common(p)
    p.add_argument("--from", dest="player_from", required=True, help="original shooter")
    p.add_argument("--to", dest="player_to", required=True, help="substituted player")
    p.add_argument("--context", dest="context_flag", help="boolean flag splitting contexts")
    p.add_argument("--team", help="team whose shot mix weights FATS")
    p.add_argument("--per-draw", action="store_true", help="also write per-draw deltas")
    p.add_argument("--draws-dir")
    return parser


_CONFIG_KEYS = ("events_dir", "shots_csv", "ratings", "aliases", "min_shots", "kind",
                "prior_mode", "out", "seed", "chains", "warmup", "draws", "target_accept",
                "max_tree_depth", "init", "n_jobs")


def _config(args):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return RunConfig.load(args.config, **overrides)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "ingest":
            _, table, summary = run_ingest(cfg)
            _emit({"shots_retained": summary["shots_retained"],
                   "players_retained": summary["players_retained"],
                   "unmatched_players": len(summary["matching"]["unmatched_players"])})
        elif args.command == "features":
            fm, _, _, table = run_features(cfg)
            _emit({"shots": len(fm), "players": len(table), "features": len(fm.feature_names)})
        elif args.command == "fit":
            draws, model = run_fit(cfg)
            _emit({"dimension": model.dim, "chains": draws.n_chains, "draws": draws.n_draws,
                   "map_log_posterior": draws.map_logp, "wall_time_s": round(draws.wall_time, 3),
                   "divergences": draws.divergences})
        elif args.command == "diagnose":
            diag = run_diagnose(cfg, args.draws_dir)
            _emit({"convergence_score": diag.convergence_score,
                   "components": {k: v["passed"] for k, v in diag.components.items()}})
            return EXIT_OK if diag.convergence_score >= SCORE_PASS else EXIT_ERROR
        elif args.command == "xg":
            _, rows, _ = run_xg(cfg, args.draws_dir)
            _emit({"players": len(rows)})
        elif args.command == "counterfactual":
            report, _ = run_counterfactual(cfg, args.player_from, args.player_to,
                                           args.context_flag, args.team, args.per_draw,
                                           args.draws_dir)
            _emit({k: report["total"][k] for k in ("mean_delta", "hdi_low", "hdi_high",
                                                   "prob_positive")}
                  | ({"fats": report["fats"]["fats"]} if "fats" in report else {}))
    except NoShotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SHOTS
    except (CfxgError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
