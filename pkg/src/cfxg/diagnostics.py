"""Convergence diagnostics: rank-normalized split R-hat, bulk/tail ESS, BFMI."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

RHAT_MAX = 1.1
ESS_MIN = 100.0
BFMI_MIN = 0.2
ESS_CAP = 1.5
SCORE_PASS = 4


def _chains(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def rank_normalize(x):
    """Normal scores of the pooled average ranks, shape preserved."""
    x = np.asarray(x, dtype=float)
    r = rankdata(x, method="average", axis=None).reshape(x.shape)
    return ndtri((r - 0.375) / (x.size + 0.25))


def _rhat(x):
    n = x.shape[1]
    w = np.mean(np.var(x, axis=1, ddof=1))
    if not w > 0:
        warnings.warn("zero within-chain variance; R-hat undefined")
        return np.nan
    b = n * np.var(np.mean(x, axis=1), ddof=1)
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def split_rhat(draws, rank=True):
    """Split R-hat over half-chains; rank-normalized unless ``rank=False``."""
    x = _chains(draws)
    if x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("split R-hat needs at least 2 chains of 4 draws")
    x = _split(x)
    if rank:
        if np.ptp(x) == 0:
            warnings.warn("constant draws; R-hat undefined")
            return np.nan
        x = rank_normalize(x)
    return _rhat(x)


def _autocov(x):
    """Biased autocovariance of each row, lags 0..n-1, via FFT."""
    n = x.shape[1]
    size = 1 << (2 * n - 1).bit_length()
    c = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(c, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def _ess(x):
    """ESS of already split chains using Geyer's initial monotone sequence."""
    m, n = x.shape
    total = m * n
    if np.ptp(x) == 0:
        warnings.warn("constant draws; ESS undefined")
        return np.nan
    acov = _autocov(x)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    lag = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus

    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = even_odd = lag[1]
    even = 1.0
    t = 1
    while t < n - 3 and even + even_odd > 0.0:
        even, even_odd = lag[t + 1], lag[t + 2]
        if even + even_odd >= 0.0:
            rho[t + 1], rho[t + 2] = even, even_odd
        t += 2
    max_t = t - 2
    if even > 0.0:
        rho[max_t + 1] = even
    # enforce monotone decrease of the paired sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t + 1].sum() + rho[max_t + 1:max_t + 2].sum()
    tau = max(tau, 1.0 / np.log10(total))
    return float(min(total / tau, ESS_CAP * total))


def _ess_input(draws):
    x = _chains(draws)
    if x.shape[1] < 4:
        raise ValueError("ESS needs at least 4 draws per chain")
    return _split(x)


def ess_bulk(draws):
    x = _ess_input(draws)
    if np.ptp(x) == 0:
        warnings.warn("constant draws; ESS undefined")
        return np.nan
    return _ess(rank_normalize(x))


def ess_tail(draws):
    """Smaller ESS of the 5% and 95% quantile indicator series."""
    x = _ess_input(draws)
    if np.ptp(x) == 0:
        warnings.warn("constant draws; ESS undefined")
        return np.nan
    lo, hi = np.quantile(x, [0.05, 0.95])
    vals = []
    for ind in (x <= lo, x <= hi):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals.append(_ess(ind.astype(float)))
    return float(np.nanmin(vals)) if not np.all(np.isnan(vals)) else np.nan


def bfmi(energy):
    """Energy BFMI; a (chains, draws) input gives one value per chain."""
    e = np.asarray(energy, dtype=float)
    if e.ndim == 2:
        return np.array([bfmi(row) for row in e])
    if e.size < 3:
        raise ValueError("BFMI needs at least 3 energies")
    denom = np.sum((e - e.mean()) ** 2)
    if not denom > 0:
        warnings.warn("zero energy variance; BFMI undefined")
        return np.nan
    return float(np.sum(np.diff(e) ** 2) / denom)


@dataclass
class ChainDiagnostics:
    param_names: list
    rhat: np.ndarray
    ess_bulk: np.ndarray
    ess_tail: np.ndarray
    bfmi: np.ndarray
    divergences: int
    components: dict
    population: list = field(default_factory=list)

    @property
    def convergence_score(self):
        return sum(int(c["passed"]) for c in self.components.values())

    @property
    def passed(self):
        return self.convergence_score >= SCORE_PASS

    def _summary(self, idx):
        idx = list(idx)

        def worst(a, fn):
            v = a[idx]
            v = v[np.isfinite(v)]
            return float(fn(v)) if v.size else None

        return {
            "n_parameters": len(idx),
            "max_rhat": worst(self.rhat, np.max),
            "min_ess_bulk": worst(self.ess_bulk, np.min),
            "min_ess_tail": worst(self.ess_tail, np.min),
        }

    def to_dict(self):
        def num(v):
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "convergence_score": self.convergence_score,
            "max_score": len(self.components),
            "passed": self.passed,
            "components": self.components,
            "divergences": self.divergences,
            "bfmi": [num(v) for v in self.bfmi],
            "all_parameters": self._summary(range(len(self.param_names))),
            "population_parameters": {
                **self._summary(self.population),
                "names": [self.param_names[i] for i in self.population],
            },
            "parameters": [
                {"name": n, "rhat": num(r), "ess_bulk": num(b), "ess_tail": num(t)}
                for n, r, b, t in zip(self.param_names, self.rhat, self.ess_bulk, self.ess_tail)
            ],
        }


def _failing(names, values, ok):
    return [n for n, v in zip(names, values) if not (np.isfinite(v) and ok(v))]


def convergence_report(draws, population=None, rhat_max=RHAT_MAX, ess_min=ESS_MIN,
                       bfmi_min=BFMI_MIN):
    """Diagnose every parameter and score the run out of five.

    One point each for: every R-hat below `rhat_max`, every bulk ESS and
    every tail ESS above `ess_min`, every chain's BFMI above `bfmi_min`,
    and no divergent transitions. Non-finite diagnostics count as failures.

    Parameters
    ----------
    draws : PosteriorDraws
    population : list of int, optional
        Indices summarized separately as population-level parameters.
    """
    names = list(draws.param_names)
    d = draws.dim
    rh, eb, et = np.empty(d), np.empty(d), np.empty(d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j in range(d):
            x = draws.samples[:, :, j]
            rh[j] = split_rhat(x)
            eb[j] = ess_bulk(x)
            et[j] = ess_tail(x)
        bf = np.atleast_1d(bfmi(draws.energy))
    n_div = draws.divergences
    chains = [f"chain {c}" for c in range(len(bf))]
    bad_rhat = _failing(names, rh, lambda v: v < rhat_max)
    bad_bulk = _failing(names, eb, lambda v: v > ess_min)
    bad_tail = _failing(names, et, lambda v: v > ess_min)
    bad_bfmi = _failing(chains, bf, lambda v: v > bfmi_min)
    div_by_chain = np.asarray(draws.stats.get("divergent", np.zeros((len(bf), 1)))).sum(axis=1)
    components = {
        "rhat": {"passed": not bad_rhat, "threshold": rhat_max, "failing": bad_rhat},
        "ess_bulk": {"passed": not bad_bulk, "threshold": ess_min, "failing": bad_bulk},
        "ess_tail": {"passed": not bad_tail, "threshold": ess_min, "failing": bad_tail},
        "bfmi": {"passed": not bad_bfmi, "threshold": bfmi_min, "failing": bad_bfmi},
        "divergences": {
            "passed": n_div == 0, "threshold": 0,
            "failing": [f"chain {c}" for c, k in enumerate(div_by_chain) if k > 0],
        },
    }
    if population is None:
        population = [i for i, n in enumerate(names) if not n.startswith("gamma")]
    return ChainDiagnostics(names, rh, eb, et, bf, n_div, components, list(population))
