"""Walk a synthetic league through every stage of the pipeline.

The league has one planted strong finisher and one planted weak finisher.
After a short fit we substitute the strong finisher into an ordinary
player's shots and print the context-split gain and the FATS score.

    python3 demos/league_walkthrough.py [output_dir]
"""

import json
import sys
import tempfile
from pathlib import Path

from cfxg.cli import main
from cfxg.synthetic import synthetic_league

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cfxg_demo_"))
league = synthetic_league(seed=0)
league.write(root)
print(f"wrote {len(league.shots)} shots for {len(league.players)} players under {root}")

common = ["--events", str(root / "events"), "--ratings", str(root / "fm_ratings.csv"),
          "--aliases", str(root / "aliases.csv"), "--out", str(root / "out")]
main(["ingest", *common])
main(["features", *common])
# short chains keep the demo to a couple of minutes; use the defaults for real work
main(["fit", *common, "--chains", "2", "--warmup", "500", "--draws", "500", "--seed", "1"])
main(["diagnose", "--out", str(root / "out")])

finisher = league.planted["finisher"]
ordinary = next(p for p in league.players if not any(league.gamma[p.name]) and p.team != "Team 0")
main(["counterfactual", "--out", str(root / "out"), "--from", ordinary.name, "--to", finisher,
      "--team", ordinary.team, "--per-draw"])

report = json.loads((root / "out" / "counterfactual_report.json").read_text())
print(f"\n{finisher} taking {ordinary.name}'s {report['query']['shot_set']['n_shots']} shots:")
for label, ctx in report["total"]["per_context"].items():
    print(f"  {label:10s} delta xG {ctx['mean_delta']:+.2f} "
          f"[{ctx['hdi_low']:+.2f}, {ctx['hdi_high']:+.2f}]  Pr(>0) {ctx['prob_positive']:.3f}")
print(f"  FATS for {ordinary.team}: {report['fats']['fats']:.3f}")
