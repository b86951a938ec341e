"""Log-posterior, analytic gradient and MAP search for the xG models.

Both models share the logistic likelihood ``y ~ Bernoulli(sigmoid(eta))``.
The baseline uses ``eta = alpha + beta @ x``; the hierarchical model adds a
player deviation, ``eta = alpha + (beta + gamma[player]) @ x`` with the
non-centred form ``gamma = mu + gamma_raw * sigma[group]`` and
``sigma = exp(log_sigma)``.

Flat parameter layout: ``alpha``, ``beta`` (F), ``gamma_raw`` (P x F,
row-major by player) and ``log_sigma`` (4 groups), the last two only for
the hierarchical model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import erfc

from .errors import ConfigError, NonFiniteError
from .features import FEATURE_NAMES
from .priors import GROUPS, group_assignment

BASELINE = "baseline"
HIERARCHICAL = "hierarchical"
WEAKLY_INFORMATIVE = "weakly_informative"
EXPERT_INFORMED = "expert_informed"

INTERCEPT_PRIOR = (-3.0, 0.5)
# (location, scale, shape) of the skew-normal priors on geometric coefficients
SKEW_NORMAL_PRIORS = {
    "shot_distance": (-0.5, 1.0, -4.0),
    "gk_distance": (0.3, 1.0, 4.0),
    "shot_angle": (0.3, 1.0, 3.0),
}
COEF_PRIOR = (0.0, 5.0)
GROUP_SCALES = {
    "physics": 0.3,
    "situation": 0.5,
    "common_techniques": 0.7,
    "rare_techniques": 2.0,
}

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
_TAIL = -8.0
_SERIES_TERMS = 24


# --------------------------------------------------------------------------
# Scalar building blocks


def inv_logit(eta):
    """Logistic function, evaluated without overflow for any finite input."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _mills_series(z):
    """Asymptotic series S with Phi(z) ~ phi(z) / (-z) * S for z << 0."""
    z2 = z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(1, _SERIES_TERMS + 1):
        term = -term * (2 * k - 1) / z2
        total = total + term
    return total


def log_ndtr(z):
    """log of the standard normal CDF, accurate far into the lower tail."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    tail = z < _TAIL
    upper = z > 0
    mid = ~tail & ~upper
    if tail.any():
        zt = z[tail]
        out[tail] = -0.5 * zt * zt - np.log(-zt) - 0.5 * LOG_2PI + np.log(_mills_series(zt))
    if mid.any():
        out[mid] = np.log(0.5 * erfc(-z[mid] / math.sqrt(2.0)))
    if upper.any():
        out[upper] = np.log1p(-0.5 * erfc(z[upper] / math.sqrt(2.0)))
    return out if out.ndim else float(out)


def inv_mills(z):
    """phi(z) / Phi(z), the derivative of :func:`log_ndtr`."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    tail = z < _TAIL
    if tail.any():
        zt = z[tail]
        out[tail] = -zt / _mills_series(zt)
    if not tail.all():
        zr = z[~tail]
        out[~tail] = np.exp(-0.5 * zr * zr - 0.5 * LOG_2PI - log_ndtr(zr))
    return out if out.ndim else float(out)


def normal_logpdf(v, loc, scale):
    z = (v - loc) / scale
    return -0.5 * z * z - np.log(scale) - 0.5 * LOG_2PI


def skew_normal_logpdf(v, loc, scale, shape):
    z = (np.asarray(v, dtype=float) - loc) / scale
    return LOG_2 - 0.5 * LOG_2PI - 0.5 * z * z - np.log(scale) + log_ndtr(shape * z)


def skew_normal_dlogpdf(v, loc, scale, shape):
    z = (np.asarray(v, dtype=float) - loc) / scale
    return (-z + shape * inv_mills(shape * z)) / scale


def _skew_normal_scalar(v, loc, scale, shape):
    """Skew-normal log density and its derivative at one point.

    Same formulas as the array versions; a scalar path avoids numpy
    overhead for the handful of skew-normal coefficients.
    """
    z = (v - loc) / scale
    w = shape * z
    if w < _TAIL:
        s = 1.0
        term = 1.0
        for k in range(1, _SERIES_TERMS + 1):
            term = -term * (2 * k - 1) / (w * w)
            s += term
        lnd = -0.5 * w * w - math.log(-w) - 0.5 * LOG_2PI + math.log(s)
        mills = -w / s
    else:
        if w > 0:
            lnd = math.log1p(-0.5 * math.erfc(w / math.sqrt(2.0)))
        else:
            lnd = math.log(0.5 * math.erfc(-w / math.sqrt(2.0)))
        mills = math.exp(-0.5 * w * w - 0.5 * LOG_2PI - lnd)
    logp = LOG_2 - 0.5 * LOG_2PI - 0.5 * z * z - math.log(scale) + lnd
    return logp, (-z + shape * mills) / scale


def half_normal_log_sigma(u, scale):
    """log HalfNormal(exp(u); scale) plus the log-Jacobian ``u``."""
    s2 = np.exp(2.0 * np.asarray(u, dtype=float))
    return LOG_2 - 0.5 * np.log(2.0 * math.pi * scale * scale) - s2 / (2.0 * scale * scale) + u


def pooling_factor(tau2, sigma2):
    """Weight on the data-driven estimate in the partial-pooling average."""
    if tau2 < 0 or not sigma2 > 0:
        raise ValueError("need tau2 >= 0 and sigma2 > 0")
    return tau2 / (tau2 + sigma2)


# --------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class ModelSpec:
    kind: str = HIERARCHICAL
    prior_mode: str = EXPERT_INFORMED
    features: tuple = FEATURE_NAMES

    def __post_init__(self):
        if self.kind not in (BASELINE, HIERARCHICAL):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.prior_mode not in (WEAKLY_INFORMATIVE, EXPERT_INFORMED):
            raise ConfigError(f"unknown prior mode {self.prior_mode!r}")
        unknown = set(self.features) - set(FEATURE_NAMES)
        if unknown:
            raise ConfigError(f"unknown features: {sorted(unknown)}")

    @property
    def hierarchical(self):
        return self.kind == HIERARCHICAL

    def to_dict(self):
        return {"kind": self.kind, "prior_mode": self.prior_mode, "features": list(self.features)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["prior_mode"], tuple(d.get("features", FEATURE_NAMES)))


class XGModel:
    """Log-posterior of the baseline or hierarchical xG model on fixed data.

    Parameters
    ----------
    spec : ModelSpec
    X : ndarray, shape (N, F)
    y : ndarray, shape (N,)
    player_idx : ndarray of int, shape (N,), optional
        Required for the hierarchical model.
    n_players : int, optional
        Defaults to ``player_idx.max() + 1``.
    prior_means : ndarray (P, F) or PriorMeanMatrix, optional
        Required when ``spec.prior_mode`` is expert-informed.
    """

    def __init__(self, spec, X, y, player_idx=None, n_players=None, prior_means=None):
        self.spec = spec
        self.features = tuple(spec.features)
        F = len(self.features)
        self.X = np.ascontiguousarray(X, dtype=float).reshape(-1, F)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ConfigError("X and y lengths differ")
        self.n_features = F

        groups = group_assignment()
        self.group_index = np.array([GROUPS.index(groups[f]) for f in self.features])
        self.group_scales = np.array([GROUP_SCALES[g] for g in GROUPS])

        skew = [(j, *SKEW_NORMAL_PRIORS[f]) for j, f in enumerate(self.features)
                if f in SKEW_NORMAL_PRIORS]
        self._skew = [(int(j), float(a), float(b), float(c)) for j, a, b, c in skew]
        self._normal = np.array([j for j, f in enumerate(self.features)
                                 if f not in SKEW_NORMAL_PRIORS], dtype=np.intp)

        if spec.hierarchical:
            if player_idx is None:
                raise ConfigError("the hierarchical model needs player indices")
            self.player_idx = np.asarray(player_idx, dtype=np.intp).reshape(-1)
            if n_players is None:
                n_players = int(self.player_idx.max()) + 1 if self.player_idx.size else 0
            if self.player_idx.size and (self.player_idx.min() < 0 or self.player_idx.max() >= n_players):
                raise ConfigError("player index out of range")
            self.n_players = int(n_players)
            mu = getattr(prior_means, "mu", prior_means)
            if spec.prior_mode == EXPERT_INFORMED:
                if mu is None:
                    raise ConfigError("expert-informed priors need a prior mean matrix")
                self.mu = np.asarray(mu, dtype=float).reshape(self.n_players, F)
            else:
                self.mu = np.zeros((self.n_players, F))
            # row n holds x_n in the column block of its shooter, so the player
            # term of eta is B @ vec(gamma) and its gradient is B.T @ r
            n = self.X.shape[0]
            cols = self.player_idx[:, None] * F + np.arange(F)
            rows = np.repeat(np.arange(n), F)
            self._B = sparse.csr_matrix((self.X.ravel(), (rows, cols.ravel())),
                                        shape=(n, self.n_players * F))
            self._BT = self._B.T.tocsr()
        else:
            self.player_idx = None if player_idx is None else np.asarray(player_idx, dtype=np.intp)
            self.n_players = 0
            self.mu = np.zeros((0, F))

        self._o_gamma = 1 + F
        self._o_u = self._o_gamma + self.n_players * F
        self.dim = self._o_u + (len(GROUPS) if spec.hierarchical else 0)

    @classmethod
    def from_features(cls, spec, fm, n_players=None, prior_means=None):
        cols = [fm.feature_names.index(f) for f in spec.features]
        return cls(spec, fm.X[:, cols], fm.y, fm.player_idx, n_players, prior_means)

    # -- layout ------------------------------------------------------------

    @property
    def param_names(self):
        names = ["alpha"] + [f"beta[{f}]" for f in self.features]
        if self.spec.hierarchical:
            names += [f"gamma_raw[{i},{f}]" for i in range(self.n_players) for f in self.features]
            names += [f"log_sigma[{g}]" for g in GROUPS]
        return names

    @property
    def population_indices(self):
        """Indices of alpha, beta and log_sigma in the flat vector."""
        idx = list(range(self._o_gamma))
        if self.spec.hierarchical:
            idx += list(range(self._o_u, self.dim))
        return idx

    def initial_point(self):
        theta = np.zeros(self.dim)
        theta[0] = INTERCEPT_PRIOR[0]
        return theta

    def unpack(self, theta):
        """Split a flat vector (or a stack of them) into named blocks.

        Leading axes of `theta` are preserved, so a (S, D) array of draws
        yields ``alpha`` of shape (S,), ``beta`` (S, F), ``gamma`` (S, P, F).
        """
        theta = np.asarray(theta, dtype=float)
        F, P = self.n_features, self.n_players
        lead = theta.shape[:-1]
        out = {"alpha": theta[..., 0], "beta": theta[..., 1:1 + F]}
        if self.spec.hierarchical:
            graw = theta[..., self._o_gamma:self._o_u].reshape(*lead, P, F)
            u = theta[..., self._o_u:]
            sig = np.exp(u)[..., self.group_index]
            out.update(gamma_raw=graw, log_sigma=u, sigma=sig,
                       gamma=self.mu + graw * sig[..., None, :])
        return out

    def player_gamma(self, theta, player):
        """Player deviation vector(s) for one player; zeros for the baseline."""
        theta = np.asarray(theta, dtype=float)
        F = self.n_features
        if not self.spec.hierarchical:
            return np.zeros(theta.shape[:-1] + (F,))
        if not 0 <= player < self.n_players:
            raise IndexError(f"player index {player} out of range")
        start = self._o_gamma + player * F
        sig = np.exp(theta[..., self._o_u:])[..., self.group_index]
        return self.mu[player] + theta[..., start:start + F] * sig

    def linear_predictor(self, theta, x, player=None):
        """Log-odds for design row(s) `x`; the baseline ignores `player`."""
        theta = np.asarray(theta, dtype=float)
        coef = theta[1:1 + self.n_features]
        if self.spec.hierarchical:
            if player is None:
                raise ValueError("the hierarchical model needs a player index")
            coef = coef + self.player_gamma(theta, player)
        return theta[0] + np.asarray(x, dtype=float) @ coef

    # -- densities ---------------------------------------------------------

    def _eta(self, theta):
        F = self.n_features
        eta = theta[0] + self.X @ theta[1:1 + F]
        if not self.spec.hierarchical:
            return eta, {}
        graw = theta[self._o_gamma:self._o_u].reshape(self.n_players, F)
        sig = np.exp(theta[self._o_u:])[self.group_index]
        # kept separate from X @ beta so gamma = 0 reproduces the baseline exactly
        gamma = self.mu + graw * sig
        return eta + self._B @ gamma.ravel(), {"graw": graw, "sig": sig}

    def log_likelihood(self, theta):
        eta, _ = self._eta(np.asarray(theta, dtype=float))
        return float(np.sum(self.y * eta - np.logaddexp(0.0, eta)))

    def _prior(self, theta, grad):
        F = self.n_features
        a = float(theta[0])
        m, s = INTERCEPT_PRIOR
        lp = -0.5 * ((a - m) / s) ** 2 - math.log(s) - 0.5 * LOG_2PI
        grad[0] += -(a - m) / (s * s)

        beta = theta[1:1 + F]
        m, s = COEF_PRIOR
        z = (beta[self._normal] - m) / s
        lp += -0.5 * float(z @ z) - z.size * (math.log(s) + 0.5 * LOG_2PI)
        grad[1 + self._normal] += -z / s
        for j, loc, scale, shape in self._skew:
            v, dv = _skew_normal_scalar(beta[j], loc, scale, shape)
            lp += v
            grad[1 + j] += dv

        if self.spec.hierarchical:
            graw = theta[self._o_gamma:self._o_u]
            lp += -0.5 * float(graw @ graw) - 0.5 * LOG_2PI * graw.size
            grad[self._o_gamma:self._o_u] += -graw
            u = theta[self._o_u:]
            sc = self.group_scales
            lp += float(np.sum(half_normal_log_sigma(u, sc)))
            grad[self._o_u:] += 1.0 - np.exp(2.0 * u) / (sc * sc)
        return lp

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self._prior(theta, np.zeros(self.dim))

    def log_prob(self, theta):
        return self.logp_and_grad(theta)[0]

    def logp_and_grad(self, theta):
        """Log-posterior (up to a constant) and its exact gradient.

        Raises
        ------
        NonFiniteError
            If the value or any gradient entry is not finite.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got {theta.shape}")
        F = self.n_features
        grad = np.zeros(self.dim)
        with np.errstate(over="ignore", invalid="ignore"):
            eta, parts = self._eta(theta)
            # one exp serves both softplus(eta) and sigmoid(eta)
            e = np.exp(-np.abs(eta))
            lp = float(self.y @ eta - np.sum(np.maximum(eta, 0.0) + np.log1p(e)))
            r = self.y - np.where(eta >= 0, 1.0, e) / (1.0 + e)
            grad[0] = r.sum()
            if self.spec.hierarchical:
                sig, graw = parts["sig"], parts["graw"]
                dgamma = (self._BT @ r).reshape(self.n_players, F)
                grad[1:1 + F] = dgamma.sum(axis=0)
                grad[self._o_gamma:self._o_u] = (dgamma * sig).ravel()
                dsig = np.einsum("ij,ij->j", dgamma, graw) * sig
                grad[self._o_u:] = np.bincount(self.group_index, weights=dsig,
                                               minlength=len(GROUPS))
            else:
                grad[1:1 + F] = self.X.T @ r
            lp += self._prior(theta, grad)
        if not np.isfinite(lp) or not np.all(np.isfinite(grad)):
            bad = np.flatnonzero(~np.isfinite(grad))
            if bad.size == 0:
                bad = np.flatnonzero(~np.isfinite(theta))
            raise NonFiniteError(int(bad[0]) if bad.size else -1,
                                 "non-finite log-posterior or gradient")
        return lp, grad


# --------------------------------------------------------------------------
# MAP


@dataclass
class MapResult:
    x: np.ndarray
    logp: float
    n_iter: int
    converged: bool
    grad_norm: float


def map_estimate(model, init=None, max_iter=2000, tol=1e-5, armijo=1e-4):
    """Maximise the log-posterior by gradient ascent with backtracking.

    Each iteration starts from twice the previous accepted step and halves
    it until the Armijo condition holds. Stops when the gradient's
    infinity-norm drops below `tol` or after `max_iter` iterations.

    Raises
    ------
    NonFiniteError
        If the objective is not finite at `init`.
    """
    x = model.initial_point() if init is None else np.array(init, dtype=float)
    f, g = model.logp_and_grad(x)
    step = 1.0
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    it = 0
    while it < max_iter and gnorm >= tol:
        it += 1
        gg = float(g @ g)
        while True:
            trial = x + step * g
            try:
                ft, gt = model.logp_and_grad(trial)
            except (NonFiniteError, FloatingPointError):
                ft = -np.inf
            if ft >= f + armijo * step * gg:
                break
            step *= 0.5
            if step < 1e-30:
                return MapResult(x, f, it, False, gnorm)
        x, f, g = trial, ft, gt
        gnorm = float(np.max(np.abs(g)))
        step *= 2.0
    return MapResult(x, f, it, gnorm < tol, gnorm)


def predict_xg(model, samples, x, player=None):
    """Posterior predictive scoring probability for one shot.

    Returns
    -------
    (float, ndarray)
        Mean probability and the per-draw probabilities.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    coef = samples[:, 1:1 + model.n_features]
    if model.spec.hierarchical:
        coef = coef + model.player_gamma(samples, player)
    p = inv_logit(samples[:, 0] + coef @ np.asarray(x, dtype=float))
    p = np.atleast_1d(p)
    return float(p.mean()), p
