"""Convergence diagnostics on healthy and deliberately broken chains."""

import numpy as np

from cfxg.diagnostics import convergence_report
from cfxg.draws import PosteriorDraws
from cfxg.nuts import StandardNormal, sample

draws = sample(StandardNormal(5), chains=4, warmup=500, draws=500, seed=0)
rep = convergence_report(draws)
print("healthy:", rep.convergence_score, "/ 5")

stuck = PosteriorDraws(draws.samples.copy(), draws.energy, draws.stats, draws.param_names)
stuck.samples[0, :, 2] += 5.0  # chain 0 wanders off on one coordinate
rep = convergence_report(stuck)
print("one stuck chain:", rep.convergence_score, "/ 5")
for name, comp in rep.components.items():
    if not comp["passed"]:
        print(f"  {name} fails (threshold {comp['threshold']}): {comp['failing']}")

rng = np.random.default_rng(1)
energy = draws.energy.copy()
energy[3] = np.cumsum(rng.standard_normal(draws.n_draws))  # energy random walk
rep = convergence_report(PosteriorDraws(draws.samples, energy, draws.stats, draws.param_names))
print("random-walk energy in chain 3:", rep.convergence_score, "/ 5, BFMI", np.round(rep.bfmi, 3))
