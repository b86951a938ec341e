"""Player-substitution counterfactuals, context decomposition and FATS.

A substitution keeps every shot's context fixed and swaps only the
shooter's deviation vector: for draw ``s`` the counterfactual total is
``sum_i sigmoid(alpha_s + (beta_s + gamma_{B,s}) @ x_i)``. All quantities
reuse the same posterior draws, so differences are paired per draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_open
from .errors import ConfigError, DataError
from .model import inv_logit

DEFAULT_CONTEXT_FLAG = "under_pressure"
DEFAULT_CONTEXT_LABELS = ("Open-Play", "Pressure")  # (flag false, flag true)
HDI_MASS = 0.95


class PosteriorEffects:
    """Per-draw intercept, population coefficients and player deviations.

    Parameters
    ----------
    model : XGModel
        Supplies the parameter layout and prior means.
    samples : ndarray, shape (S, D)
        Flattened posterior draws.
    """

    def __init__(self, model, samples):
        self.model = model
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if self.samples.shape[1] != model.dim:
            raise DataError(f"draws have dimension {self.samples.shape[1]}, model expects {model.dim}")
        self.alpha = self.samples[:, 0]
        self.beta = self.samples[:, 1:1 + model.n_features]

    @classmethod
    def from_draws(cls, model, draws):
        return cls(model, draws.flat())

    @property
    def n_draws(self):
        return self.samples.shape[0]

    @property
    def n_players(self):
        return self.model.n_players

    def gamma(self, player):
        """Deviation vectors of `player`, shape (S, F)."""
        if not self.model.spec.hierarchical:
            raise ConfigError("substitution needs a hierarchical model")
        if not 0 <= player < self.model.n_players:
            raise KeyError(f"player index {player} not in fitted model")
        return self.model.player_gamma(self.samples, player)

    def shot_probs(self, X, player):
        """Per-draw, per-shot scoring probabilities, shape (S, N)."""
        coef = self.beta + self.gamma(player)
        return inv_logit(self.alpha[:, None] + coef @ np.asarray(X, dtype=float).T)


def _design(shots):
    return shots.X if hasattr(shots, "X") else np.atleast_2d(np.asarray(shots, dtype=float))


def counterfactual_xg(effects, shots, player):
    """Total xG of `shots` had `player` taken all of them, per draw (S,)."""
    X = _design(shots)
    if X.shape[0] == 0:
        raise DataError("empty shot set")
    return effects.shot_probs(X, player).sum(axis=1)


def hdi(samples, mass=HDI_MASS):
    """Shortest interval holding ``ceil(mass * S)`` of the sorted samples.

    Ties go to the lowest interval.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2 or not np.all(np.isfinite(x)):
        raise ValueError("hdi needs at least two finite samples")
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie strictly between 0 and 1")
    k = min(n, max(1, math.ceil(mass * n - 1e-9)))
    widths = x[k - 1:] - x[:n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def prob_positive(deltas):
    """Share of strictly positive draws; exact zeros count one half."""
    d = np.asarray(deltas, dtype=float)
    return float((np.count_nonzero(d > 0) + 0.5 * np.count_nonzero(d == 0)) / d.size)


@dataclass
class DeltaSummary:
    mean_delta: float
    hdi_low: float
    hdi_high: float
    prob_positive: float
    per_draw_deltas: np.ndarray
    factual_mean: float
    counterfactual_mean: float
    n_shots: int
    per_context: dict = field(default_factory=dict)
    absent_contexts: list = field(default_factory=list)

    @classmethod
    def from_totals(cls, factual, counterfactual, n_shots, mass=HDI_MASS):
        deltas = counterfactual - factual
        return cls.from_deltas(deltas, factual, counterfactual, n_shots, mass)

    @classmethod
    def from_deltas(cls, deltas, factual, counterfactual, n_shots, mass=HDI_MASS):
        lo, hi = hdi(deltas, mass)
        return cls(float(np.mean(deltas)), lo, hi, prob_positive(deltas), deltas,
                   float(np.mean(factual)), float(np.mean(counterfactual)), int(n_shots))

    def to_dict(self, include_draws=False):
        out = {
            "mean_delta": self.mean_delta,
            "hdi_low": self.hdi_low,
            "hdi_high": self.hdi_high,
            "hdi_mass": HDI_MASS,
            "prob_positive": self.prob_positive,
            "factual_xg_mean": self.factual_mean,
            "counterfactual_xg_mean": self.counterfactual_mean,
            "n_shots": self.n_shots,
        }
        if self.per_context or self.absent_contexts:
            out["per_context"] = {k: v.to_dict() for k, v in self.per_context.items()}
            out["absent_contexts"] = list(self.absent_contexts)
        if include_draws:
            out["per_draw_deltas"] = self.per_draw_deltas.tolist()
        return out


def validate_partition(partition, n):
    """Check that boolean masks cover each of `n` shots exactly once."""
    if not partition:
        raise ConfigError("context partition is empty")
    masks = {}
    cover = np.zeros(n, dtype=np.int64)
    for label, mask in partition.items():
        m = np.asarray(mask, dtype=bool)
        if m.shape != (n,):
            raise ConfigError(f"context {label!r}: mask length {m.size}, expected {n}")
        masks[label] = m
        cover += m
    if np.any(cover == 0):
        raise ConfigError(f"context partition leaves {int(np.sum(cover == 0))} shots uncovered")
    if np.any(cover > 1):
        raise ConfigError(f"context partition assigns {int(np.sum(cover > 1))} shots twice")
    return masks


def flag_partition(shots, flag=DEFAULT_CONTEXT_FLAG, labels=None):
    """Two contexts from one boolean raw flag: ``{false_label: ~f, true_label: f}``."""
    if flag not in shots.context_flags:
        raise ConfigError(f"unknown context flag {flag!r}; choose from {sorted(shots.context_flags)}")
    if labels is None:
        labels = DEFAULT_CONTEXT_LABELS if flag == DEFAULT_CONTEXT_FLAG else (f"not_{flag}", flag)
    f = np.asarray(shots.context_flags[flag], dtype=bool)
    return {labels[0]: ~f, labels[1]: f}


def _single_player(shots):
    players = np.unique(shots.player_idx)
    if players.size != 1:
        raise ConfigError("shot set has several original players; pass player_a explicitly")
    return int(players[0])


def c3t_decompose(effects, shots, player_b, partition, player_a=None, mass=HDI_MASS):
    """Per-context substitution summaries on one shot set.

    Returns a :class:`DeltaSummary` for the whole set whose per-draw total
    is the sum of the per-context deltas taken in partition order, so the
    decomposition is additive draw by draw. Empty contexts are listed in
    ``absent_contexts`` and contribute nothing.
    """
    X = _design(shots)
    n = X.shape[0]
    if n == 0:
        raise DataError("empty shot set")
    if player_a is None:
        player_a = _single_player(shots)
    masks = validate_partition(partition, n)
    pa = effects.shot_probs(X, player_a)
    pb = pa if player_b == player_a else effects.shot_probs(X, player_b)

    per_context, absent = {}, []
    total_delta = None
    total_f = None
    total_c = None
    for label, m in masks.items():
        if not m.any():
            absent.append(label)
            continue
        f = pa[:, m].sum(axis=1)
        c = pb[:, m].sum(axis=1)
        d = c - f
        per_context[label] = DeltaSummary.from_deltas(d, f, c, int(m.sum()), mass)
        if total_delta is None:
            total_delta, total_f, total_c = d.copy(), f.copy(), c.copy()
        else:
            total_delta += d
            total_f += f
            total_c += c
    out = DeltaSummary.from_deltas(total_delta, total_f, total_c, n, mass)
    out.per_context = per_context
    out.absent_contexts = absent
    return out


def delta_xg(effects, shots, player_b, player_a=None, partition=None, mass=HDI_MASS):
    """Paired per-draw gain from letting `player_b` take `player_a`'s shots.

    Without a partition the whole set is one context. With one, the total
    is assembled from the per-context deltas (see :func:`c3t_decompose`).
    """
    X = _design(shots)
    if X.shape[0] == 0:
        raise DataError("empty shot set")
    if partition is None:
        if player_a is None:
            player_a = _single_player(shots)
        f = counterfactual_xg(effects, X, player_a)
        c = f if player_b == player_a else counterfactual_xg(effects, X, player_b)
        return DeltaSummary.from_deltas(c - f, f, c, X.shape[0], mass)
    return c3t_decompose(effects, shots, player_b, partition, player_a, mass)


def team_context_weights(team_shots, partition):
    """Empirical share of each context in a team's shots."""
    n = len(team_shots) if hasattr(team_shots, "X") else int(team_shots)
    if n == 0:
        raise DataError("team has no shots")
    masks = validate_partition(partition, n)
    return {label: float(m.sum()) / n for label, m in masks.items()}


@dataclass
class FatsReport:
    weights: dict
    upgrade_probs: dict
    fats: float

    def to_dict(self):
        return {"weights": self.weights, "upgrade_probs": self.upgrade_probs, "fats": self.fats}


def fats(upgrade_probs, weights):
    """Weighted upgrade probability ``sum_c w_c * Pr(delta_c > 0)``.

    Contexts with zero weight may be missing from `upgrade_probs`.
    """
    total = math.fsum(weights.values())
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"context weights sum to {total!r}, not 1")
    score = 0.0
    used = {}
    for label, w in weights.items():
        if not 0.0 <= w <= 1.0:
            raise ConfigError(f"weight for {label!r} outside [0, 1]")
        if w == 0.0:
            continue
        if label not in upgrade_probs:
            raise ConfigError(f"no upgrade probability for weighted context {label!r}")
        p = upgrade_probs[label]
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"upgrade probability for {label!r} outside [0, 1]")
        used[label] = p
        score += w * p
    return FatsReport(dict(weights), used, score)


def fats_for_substitution(summary, weights):
    """FATS from a decomposed :class:`DeltaSummary` and team context weights."""
    probs = {k: v.prob_positive for k, v in summary.per_context.items()}
    return fats(probs, weights)


def write_per_draw_csv(path, summary):
    """One row per draw: total delta, then each present context's delta."""
    labels = list(summary.per_context)
    with atomic_open(path) as fh:
        fh.write(",".join(["draw", "delta", *labels]) + "\n")
        for s, d in enumerate(summary.per_draw_deltas):
            row = [str(s), repr(float(d))]
            row += [repr(float(summary.per_context[k].per_draw_deltas[s])) for k in labels]
            fh.write(",".join(row) + "\n")
