"""No-U-Turn sampler with dual-averaging step size and diagonal metric adaptation.

The kernel is the multinomial variant: every state of the doubled
trajectory is a candidate, weighted by ``exp(-H)``, and expansion stops on
the generalized U-turn criterion evaluated over whole subtrees and across
their junctions.

`inv_mass` below is the diagonal of the inverse mass matrix. After
adaptation it estimates the posterior variance of each coordinate, so a
coordinate with scale 10 ends up with an entry near 100.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .draws import PosteriorDraws
from .errors import ConfigError, NonFiniteError
from .model import map_estimate

logger = logging.getLogger(__name__)

INIT_BUFFER = 75
TERM_BUFFER = 50
BASE_WINDOW = 25
MIN_WARMUP = INIT_BUFFER + BASE_WINDOW + TERM_BUFFER
PROGRESS_EVERY = 500


@dataclass
class SamplerConfig:
    chains: int = 4
    warmup: int = 2000
    draws: int = 2000
    target_accept: float = 0.95
    max_tree_depth: int = 10
    seed: int = 0
    init: str = "map"
    max_energy_error: float = 1000.0
    jitter: float = 0.1
    map_max_iter: int = 2000
    n_jobs: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.warmup < 1 or self.draws < 1:
            raise ConfigError("warmup and draws must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must lie strictly between 0 and 1")
        if self.max_tree_depth < 0:
            raise ConfigError("max_tree_depth must be >= 0")
        if self.init not in ("map", "zero", "jitter"):
            raise ConfigError(f"unknown init {self.init!r}")

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# Targets


class Target:
    """Wrap a ``theta -> (logp, grad)`` callable as a sampler target."""

    def __init__(self, logp_and_grad, dim, param_names=None, initial=None):
        self._fn = logp_and_grad
        self.dim = int(dim)
        self.param_names = list(param_names) if param_names else [f"x[{i}]" for i in range(dim)]
        self._initial = np.zeros(dim) if initial is None else np.asarray(initial, dtype=float)

    def logp_and_grad(self, theta):
        return self._fn(theta)

    def initial_point(self):
        return self._initial.copy()


class StandardNormal:
    """Independent normal target with optional per-coordinate scales."""

    def __init__(self, dim, scale=1.0):
        self.dim = dim
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,)).copy()
        self.param_names = [f"x[{i}]" for i in range(dim)]

    def logp_and_grad(self, theta):
        z = theta / self.scale
        return -0.5 * float(z @ z), -z / self.scale

    def initial_point(self):
        return np.zeros(self.dim)


def _evaluate(target, q):
    try:
        logp, grad = target.logp_and_grad(q)
    except (NonFiniteError, FloatingPointError):
        return -np.inf, np.zeros_like(q)
    if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
        return -np.inf, np.zeros_like(q)
    return float(logp), np.asarray(grad, dtype=float)


# --------------------------------------------------------------------------
# Integrator


@dataclass(slots=True)
class HmcState:
    """Phase-space point with its cached gradient and log density.

    ``p_sharp`` caches ``inv_mass * p`` (the velocity) once it is known.
    """

    q: np.ndarray
    p: np.ndarray
    grad: np.ndarray
    logp: float
    p_sharp: np.ndarray = None

    def velocity(self, inv_mass):
        if self.p_sharp is None:
            self.p_sharp = inv_mass * self.p
        return self.p_sharp

    def energy(self, inv_mass):
        return -self.logp + 0.5 * float(self.p @ self.velocity(inv_mass))


def leapfrog(state, step_size, inv_mass, target):
    """One leapfrog step; evaluates the gradient once, at the new position."""
    p_half = state.p + (0.5 * step_size) * state.grad
    q = state.q + step_size * (inv_mass * p_half)
    logp, grad = _evaluate(target, q)
    p = p_half + (0.5 * step_size) * grad
    return HmcState(q, p, grad, logp, inv_mass * p)


def _no_uturn(p_sharp_minus, p_sharp_plus, rho):
    return float(p_sharp_plus @ rho) > 0.0 and float(p_sharp_minus @ rho) > 0.0


class _Tree:
    __slots__ = ("left", "right", "proposal", "rho", "log_weight", "valid")

    def __init__(self, left, right, proposal, rho, log_weight, valid):
        self.left = left
        self.right = right
        self.proposal = proposal
        self.rho = rho
        self.log_weight = log_weight
        self.valid = valid


class _Counters:
    __slots__ = ("n_leapfrog", "sum_accept", "divergent")

    def __init__(self):
        self.n_leapfrog = 0
        self.sum_accept = 0.0
        self.divergent = False


def _merged_no_uturn(a, b, inv_mass):
    """U-turn checks for spatially adjacent trees a (left) and b (right)."""
    rho = a.rho + b.rho
    al, ar = a.left.velocity(inv_mass), a.right.velocity(inv_mass)
    bl, br = b.left.velocity(inv_mass), b.right.velocity(inv_mass)
    ok = (_no_uturn(al, br, rho)
          and _no_uturn(al, bl, a.rho + b.left.p)
          and _no_uturn(ar, br, b.rho + a.right.p))
    return rho, ok


class NutsKernel:
    def __init__(self, target, max_tree_depth=10, max_energy_error=1000.0):
        self.target = target
        self.max_tree_depth = max_tree_depth
        self.max_energy_error = max_energy_error

    def _build(self, z, depth, direction, eps, inv_mass, H0, rng, acc):
        if depth == 0:
            z1 = leapfrog(z, direction * eps, inv_mass, self.target)
            H = z1.energy(inv_mass)
            if math.isnan(H):
                H = math.inf
            acc.n_leapfrog += 1
            valid = True
            if H - H0 > self.max_energy_error:
                acc.divergent = True
                valid = False
            log_w = H0 - H
            acc.sum_accept += 1.0 if log_w > 0 else math.exp(log_w)
            return _Tree(z1, z1, z1, z1.p, log_w, valid)

        t1 = self._build(z, depth - 1, direction, eps, inv_mass, H0, rng, acc)
        if not t1.valid:
            return t1
        edge = t1.right if direction > 0 else t1.left
        t2 = self._build(edge, depth - 1, direction, eps, inv_mass, H0, rng, acc)
        if not t2.valid:
            return t2
        log_w = np.logaddexp(t1.log_weight, t2.log_weight)
        proposal = t2.proposal if rng.uniform() < math.exp(t2.log_weight - log_w) else t1.proposal
        a, b = (t1, t2) if direction > 0 else (t2, t1)
        rho, ok = _merged_no_uturn(a, b, inv_mass)
        return _Tree(a.left, b.right, proposal, rho, log_w, ok)

    def transition(self, state, step_size, inv_mass, rng):
        """One NUTS transition from `state` (its momentum is ignored).

        Returns
        -------
        (HmcState, dict)
            The selected state and its statistics: ``tree_depth``,
            ``n_leapfrog``, ``accept_stat``, ``divergent``, ``energy``,
            ``energy_error``.
        """
        p0 = rng.standard_normal(state.q.shape[0]) / np.sqrt(inv_mass)
        z0 = HmcState(state.q, p0, state.grad, state.logp)
        H0 = z0.energy(inv_mass)
        tree = _Tree(z0, z0, z0, p0, 0.0, True)
        sample = z0
        acc = _Counters()
        depth = 0
        while depth < self.max_tree_depth:
            direction = 1 if rng.uniform() > 0.5 else -1
            edge = tree.right if direction > 0 else tree.left
            sub = self._build(edge, depth, direction, step_size, inv_mass, H0, rng, acc)
            if not sub.valid:
                break
            depth += 1
            if sub.log_weight > tree.log_weight:
                sample = sub.proposal
            elif rng.uniform() < math.exp(sub.log_weight - tree.log_weight):
                sample = sub.proposal
            a, b = (tree, sub) if direction > 0 else (sub, tree)
            rho, ok = _merged_no_uturn(a, b, inv_mass)
            tree = _Tree(a.left, b.right, None, rho,
                         np.logaddexp(tree.log_weight, sub.log_weight), ok)
            if not ok:
                break
        energy = sample.energy(inv_mass)
        stats = {
            "tree_depth": depth,
            "n_leapfrog": acc.n_leapfrog,
            "accept_stat": acc.sum_accept / acc.n_leapfrog if acc.n_leapfrog else 1.0,
            "divergent": acc.divergent,
            "energy": energy,
            "energy_error": energy - H0,
        }
        return sample, stats


def nuts_transition(state, step_size, inv_mass, rng, target, max_tree_depth=10,
                    max_energy_error=1000.0):
    """Functional form of :meth:`NutsKernel.transition`."""
    kernel = NutsKernel(target, max_tree_depth, max_energy_error)
    return kernel.transition(state, step_size, inv_mass, rng)


# --------------------------------------------------------------------------
# Adaptation


class DualAveraging:
    """Step-size controller driving the mean acceptance statistic to a target."""

    def __init__(self, step_size, target_accept, gamma=0.05, t0=10.0, kappa=0.75):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.t = 0
        self.h_bar = 0.0
        self.log_step = math.log(step_size)
        self.log_step_bar = 0.0

    def update(self, accept_stat):
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target_accept - accept_stat)
        self.log_step = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        eta = self.t ** (-self.kappa)
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def step_size(self):
        return math.exp(self.log_step)

    @property
    def final_step_size(self):
        return math.exp(self.log_step_bar)


def adaptation_windows(warmup):
    """Metric-estimation windows as ``(start, end)`` iteration ranges.

    A 75-iteration step-size-only buffer comes first and 50 such iterations
    close warmup. In between, windows double from 25 iterations; a window
    that could not be followed by one twice its size absorbs the remainder.
    """
    if warmup < MIN_WARMUP:
        raise ConfigError(f"warmup must be at least {MIN_WARMUP} iterations, got {warmup}")
    end = warmup - TERM_BUFFER
    windows = []
    start, size = INIT_BUFFER, BASE_WINDOW
    while start < end:
        stop = start + size
        if stop + 2 * size > end:
            stop = end
        windows.append((start, stop))
        start, size = stop, 2 * size
    return windows


def regularized_variance(samples):
    """Per-coordinate sample variance shrunk toward 1 with weight 5 / (n + 5)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1) if n > 1 else np.ones(samples.shape[1])
    return (n / (n + 5.0)) * var + 5.0 / (n + 5.0)


def find_step_size(state, step_size, inv_mass, target, rng):
    """Double or halve `step_size` until one-step acceptance crosses 0.8."""
    threshold = math.log(0.8)

    def delta(eps):
        p = rng.standard_normal(state.q.shape[0]) / np.sqrt(inv_mass)
        z = HmcState(state.q, p, state.grad, state.logp)
        z1 = leapfrog(z, eps, inv_mass, target)
        d = z.energy(inv_mass) - z1.energy(inv_mass)
        return -math.inf if math.isnan(d) else d

    direction = 1 if delta(step_size) > threshold else -1
    for _ in range(100):
        d = delta(step_size)
        if direction == 1 and not d > threshold:
            break
        if direction == -1 and not d < threshold:
            break
        step_size = step_size * 2.0 if direction == 1 else step_size * 0.5
        if step_size > 1e7 or step_size < 1e-12:
            break
    return step_size


class WarmupAdapter:
    """Step-size and diagonal-metric adaptation across the warmup phase."""

    def __init__(self, warmup, dim, step_size, target_accept):
        self.windows = adaptation_windows(warmup)
        self.ends = {stop: start for start, stop in self.windows}
        self.inv_mass = np.ones(dim)
        self.dual = DualAveraging(step_size, target_accept)
        self._buffer = []
        self.iteration = 0

    def in_window(self, it):
        return any(start <= it < stop for start, stop in self.windows)

    def update(self, q, accept_stat):
        """Record one warmup iteration.

        Returns
        -------
        bool
            True when a window just closed and the metric changed; the
            caller should then re-initialize the step size.
        """
        it = self.iteration
        self.iteration += 1
        self.dual.update(accept_stat)
        if self.in_window(it):
            self._buffer.append(np.array(q, copy=True))
        if self.iteration in self.ends:
            self.inv_mass = regularized_variance(np.array(self._buffer))
            self._buffer = []
            return True
        return False

    def adapt(self, q_trace, accept_trace):
        """Run the whole schedule over recorded traces; returns (step_size, inv_mass).

        The step size here is the averaged iterate from the final window, so
        this offline form is meant for inspecting a schedule, not sampling.
        """
        for q, a in zip(q_trace, accept_trace):
            if self.update(q, a):
                self.dual.restart(self.dual.step_size)
        return self.dual.final_step_size, self.inv_mass


# --------------------------------------------------------------------------
# Chains


def _initial_position(target, config, map_point, rng):
    if config.init == "zero":
        if hasattr(target, "initial_point"):
            return np.asarray(target.initial_point(), dtype=float)
        return np.zeros(target.dim)
    q = np.array(map_point, dtype=float)
    if config.init == "jitter":
        q = q + rng.uniform(-1.0, 1.0, size=q.shape) * config.jitter
    return q


def run_chain(target, config, chain, map_point):
    """Warm up and sample one chain; its generator is seeded ``seed + chain``."""
    rng = np.random.default_rng(config.seed + chain)
    q = _initial_position(target, config, map_point, rng)
    logp, grad = _evaluate(target, q)
    if not np.isfinite(logp):
        raise NonFiniteError(-1, f"chain {chain}: initial point has non-finite log density")
    state = HmcState(q, np.zeros_like(q), grad, logp)
    kernel = NutsKernel(target, config.max_tree_depth, config.max_energy_error)

    inv_mass = np.ones(target.dim)
    step = find_step_size(state, 1.0, inv_mass, target, rng)
    adapter = WarmupAdapter(config.warmup, target.dim, step, config.target_accept)
    warm_accept = np.empty(config.warmup)
    warm_div = 0
    for it in range(config.warmup):
        state, stats = kernel.transition(state, step, inv_mass, rng)
        warm_accept[it] = stats["accept_stat"]
        warm_div += stats["divergent"]
        if adapter.update(state.q, stats["accept_stat"]):
            inv_mass = adapter.inv_mass
            step = find_step_size(state, adapter.dual.step_size, inv_mass, target, rng)
            adapter.dual.restart(step)
        else:
            step = adapter.dual.step_size
        if (it + 1) % PROGRESS_EVERY == 0:
            logger.info("chain %d: warmup %d/%d", chain, it + 1, config.warmup)
    step = adapter.dual.final_step_size

    n = config.draws
    samples = np.empty((n, target.dim))
    stats_out = {
        "energy": np.empty(n),
        "tree_depth": np.empty(n, dtype=np.int64),
        "accept_stat": np.empty(n),
        "divergent": np.empty(n, dtype=bool),
        "step_size": np.full(n, step),
        "n_leapfrog": np.empty(n, dtype=np.int64),
        "energy_error": np.empty(n),
    }
    for k in range(n):
        state, stats = kernel.transition(state, step, inv_mass, rng)
        samples[k] = state.q
        for key in ("energy", "tree_depth", "accept_stat", "divergent", "n_leapfrog",
                    "energy_error"):
            stats_out[key][k] = stats[key]
        if (k + 1) % PROGRESS_EVERY == 0:
            logger.info("chain %d: draw %d/%d", chain, k + 1, n)
    return {
        "samples": samples,
        "stats": stats_out,
        "step_size": step,
        "inv_mass": inv_mass,
        "warmup_accept": warm_accept,
        "warmup_divergences": warm_div,
    }


def _run_chain_star(args):
    return run_chain(*args)


def sample(target, config=None, **overrides):
    """Draw posterior samples from `target` with multiple NUTS chains.

    Parameters
    ----------
    target : object
        Exposes ``dim``, ``param_names`` and ``logp_and_grad(theta)``;
        ``initial_point()`` is used for MAP and zero initialization when
        present.
    config : SamplerConfig, optional
    **overrides
        Field overrides applied on top of `config`.

    Returns
    -------
    PosteriorDraws
    """
    config = config or SamplerConfig()
    if overrides:
        config = SamplerConfig(**{**config.to_dict(), **overrides})
    adaptation_windows(config.warmup)
    start = time.perf_counter()

    map_point = None
    map_logp = None
    if config.init in ("map", "jitter"):
        init = target.initial_point() if hasattr(target, "initial_point") else np.zeros(target.dim)
        try:
            result = map_estimate(target, init, max_iter=config.map_max_iter)
            map_point, map_logp = result.x, result.logp
        except (NonFiniteError, FloatingPointError) as exc:
            warnings.warn(f"MAP initialization failed ({exc}); falling back to zero init")
            config = SamplerConfig(**{**config.to_dict(), "init": "zero"})

    jobs = [(target, config, c, map_point) for c in range(config.chains)]
    if config.n_jobs > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.chains)) as pool:
            results = list(pool.map(_run_chain_star, jobs))
    else:
        results = [run_chain(*job) for job in jobs]

    stats = {key: np.stack([r["stats"][key] for r in results])
             for key in results[0]["stats"] if key != "energy"}
    return PosteriorDraws(
        samples=np.stack([r["samples"] for r in results]),
        energy=np.stack([r["stats"]["energy"] for r in results]),
        stats=stats,
        param_names=list(target.param_names),
        config=config.to_dict(),
        step_size=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
        warmup_accept=np.stack([r["warmup_accept"] for r in results]),
        wall_time=time.perf_counter() - start,
        map_logp=map_logp,
    )
