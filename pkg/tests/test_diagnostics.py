import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfxg.diagnostics import (
    ESS_CAP, bfmi, convergence_report, ess_bulk, ess_tail, rank_normalize, split_rhat,
)
from cfxg.draws import PosteriorDraws


def ar1(phi, n, chains=1, seed=0):
    rng = np.random.default_rng(seed)
    x = np.empty((chains, n))
    x[:, 0] = rng.standard_normal(chains) / np.sqrt(1 - phi ** 2)
    e = rng.standard_normal((chains, n))
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + e[:, t]
    return x


def make_draws(samples, energy=None, divergent=None, names=None, seed=0):
    samples = np.asarray(samples, dtype=float)
    c, n, d = samples.shape
    rng = np.random.default_rng(seed)
    if energy is None:
        energy = rng.standard_normal((c, n))
    div = np.zeros((c, n), dtype=bool) if divergent is None else divergent
    stats = {"tree_depth": np.ones((c, n), dtype=int), "accept_stat": np.full((c, n), 0.9),
             "divergent": div, "step_size": np.full((c, n), 0.5)}
    return PosteriorDraws(samples, energy, stats, names or [f"x[{j}]" for j in range(d)])


def good_samples(chains=4, n=1000, d=3, seed=0):
    return np.random.default_rng(seed).standard_normal((chains, n, d))


# -- R-hat ------------------------------------------------------------------

def test_duplicated_chain_rhat():
    x = np.random.default_rng(0).standard_normal(1000)
    assert split_rhat(np.stack([x, x])) < 1.001


def test_shifted_chains_rhat():
    x = np.random.default_rng(1).standard_normal((2, 1000))
    x[1] += 5.0
    assert split_rhat(x) > 1.5
    assert split_rhat(x, rank=False) > 1.5


def test_classic_rhat_closed_form():
    # two half-chains per chain with means +-d and unit within variance
    n = 500
    base = np.random.default_rng(2).standard_normal(2 * n)
    base = (base - base.mean()) / base.std(ddof=1)
    x = np.stack([base, base + 5.0])
    halves = np.concatenate([x[:, :n], x[:, n:]])
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    expected = np.sqrt(((n - 1) / n * w + b / n) / w)
    assert split_rhat(x, rank=False) == pytest.approx(expected, rel=1e-12)


def test_rhat_needs_two_chains():
    with pytest.raises(ValueError):
        split_rhat(np.zeros((1, 100)))
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 3)))


def test_constant_draws_rhat_nan():
    with pytest.warns(UserWarning):
        assert np.isnan(split_rhat(np.ones((2, 50))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["cube", "exp", "affine", "arctan"]))
def test_rhat_monotone_invariance(seed, kind):
    x = np.random.default_rng(seed).standard_normal((3, 200))
    x[1] += 0.3
    f = {"cube": lambda v: v ** 3 + v, "exp": np.exp, "affine": lambda v: 3 * v - 7,
         "arctan": np.arctan}[kind]
    assert split_rhat(f(x)) == split_rhat(x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_permuted_chain_order_identical(seed):
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((4, 100, 2)) + rng.normal(size=(4, 1, 1)) * 0.2
    energy = rng.standard_normal((4, 100))
    perm = rng.permutation(4)
    a = convergence_report(make_draws(samples, energy))
    b = convergence_report(make_draws(samples[perm], energy[perm]))
    assert np.allclose(a.rhat, b.rhat, rtol=1e-12)
    assert np.allclose(a.ess_bulk, b.ess_bulk, rtol=1e-9)
    assert np.allclose(a.ess_tail, b.ess_tail, rtol=1e-9)
    assert np.allclose(np.sort(a.bfmi), np.sort(b.bfmi), rtol=1e-12)
    assert a.convergence_score == b.convergence_score


# -- ESS --------------------------------------------------------------------

def test_iid_ess_within_20_percent():
    x = np.random.default_rng(3).standard_normal((4, 1000))
    assert 3200 <= ess_bulk(x) <= 4800
    assert 3200 <= ess_tail(x) <= 4800


def test_ar1_ess_near_analytic():
    phi, n = 0.9, 10_000
    x = ar1(phi, n, seed=4)
    analytic = n * (1 - phi) / (1 + phi)
    assert analytic / 1.5 <= ess_bulk(x) <= analytic * 1.5
    x4 = ar1(phi, 2500, chains=4, seed=5)
    assert analytic / 1.5 <= ess_bulk(x4) <= analytic * 1.5


def test_constant_chain_ess_nan():
    with pytest.warns(UserWarning):
        assert np.isnan(ess_bulk(np.full((2, 40), 3.0)))
    with pytest.warns(UserWarning):
        assert np.isnan(ess_tail(np.full((2, 40), 3.0)))


def test_tail_sticky_chain():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 2000))
    lo, hi = np.quantile(x, [0.05, 0.95])
    for c in range(4):
        t = 0
        while t < x.shape[1]:
            if x[c, t] > hi or x[c, t] < lo:
                x[c, t:t + 25] = x[c, t]
                t += 25
            else:
                t += 1
    assert ess_tail(x) < ess_bulk(x)


def test_ess_cap():
    x = ar1(-0.9, 4000, chains=2, seed=7)  # antithetic draws push raw ESS far above N
    assert ess_bulk(x) == pytest.approx(ESS_CAP * x.size)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.95, 0.95))
def test_ess_never_exceeds_cap(seed, phi):
    x = ar1(phi, 300, chains=2, seed=seed)
    assert 0 <= ess_bulk(x) <= ESS_CAP * x.size
    assert 0 <= ess_tail(x) <= ESS_CAP * x.size


def test_rank_normalize_shape_and_order():
    x = np.random.default_rng(8).standard_normal((3, 50))
    z = rank_normalize(x)
    assert z.shape == x.shape
    assert np.array_equal(np.argsort(z, axis=None), np.argsort(x, axis=None))


# -- BFMI -------------------------------------------------------------------

def test_bfmi_iid_near_two():
    e = np.random.default_rng(9).standard_normal(4000)
    assert abs(bfmi(e) - 2.0) < 0.3


def test_bfmi_random_walk_small():
    e = np.cumsum(np.random.default_rng(10).standard_normal(4000))
    assert bfmi(e) < 0.2


def test_bfmi_constant_nan():
    with pytest.warns(UserWarning):
        assert np.isnan(bfmi(np.ones(10)))
    with pytest.raises(ValueError):
        bfmi([1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e4, 1e4))
def test_bfmi_shift_invariant(seed, c):
    e = np.random.default_rng(seed).standard_normal(200)
    assert bfmi(e + c) == pytest.approx(bfmi(e), rel=1e-8)


def test_bfmi_per_chain():
    e = np.random.default_rng(11).standard_normal((3, 500))
    assert np.allclose(bfmi(e), [bfmi(row) for row in e])


# -- score ------------------------------------------------------------------

def test_all_pass_scores_five():
    rep = convergence_report(make_draws(good_samples()))
    assert rep.convergence_score == 5 and rep.passed
    assert all(not c["failing"] for c in rep.components.values())


def test_one_low_bfmi_chain():
    energy = np.random.default_rng(12).standard_normal((4, 1000))
    energy[2] = ar1(0.95, 1000, seed=13)[0]
    rep = convergence_report(make_draws(good_samples(), energy))
    assert rep.bfmi[2] < 0.2
    assert rep.convergence_score == 4
    assert rep.components["bfmi"]["failing"] == ["chain 2"]
    assert rep.passed


def test_three_divergences_lose_one_point():
    div = np.zeros((4, 1000), dtype=bool)
    div[1, [5, 50, 500]] = True
    rep = convergence_report(make_draws(good_samples(), divergent=div))
    assert rep.divergences == 3
    assert rep.convergence_score == 4
    assert not rep.components["divergences"]["passed"]
    assert rep.components["divergences"]["failing"] == ["chain 1"]
    assert all(rep.components[k]["passed"] for k in ("rhat", "ess_bulk", "ess_tail", "bfmi"))


def test_three_of_five_fixture():
    energy = np.random.default_rng(15).standard_normal((4, 400))
    energy[3] = ar1(0.97, 400, seed=16)[0]
    div = np.zeros((4, 400), dtype=bool)
    div[0, 0] = True
    rep = convergence_report(make_draws(good_samples(n=400), energy, divergent=div))
    assert rep.components["bfmi"]["failing"] == ["chain 3"]
    assert rep.components["divergences"]["failing"] == ["chain 0"]
    assert rep.convergence_score == 3 and not rep.passed


def test_stuck_chain_fails_rhat_and_ess():
    s = good_samples(n=400)
    s[0, :, 1] += 4.0
    rep = convergence_report(make_draws(s))
    for k in ("rhat", "ess_bulk", "ess_tail"):
        assert rep.components[k]["failing"] == ["x[1]"]
    assert rep.convergence_score == 2


def test_low_ess_fails_both_ess_points():
    s = ar1(0.995, 400, chains=4, seed=14)[:, :, None]
    rep = convergence_report(make_draws(s))
    assert not rep.components["ess_bulk"]["passed"]
    assert not rep.components["ess_tail"]["passed"]


def test_report_dict_has_population_summary():
    names = ["alpha", "beta[a]", "gamma_raw[0,a]"]
    rep = convergence_report(make_draws(good_samples(), names=names))
    d = rep.to_dict()
    assert d["population_parameters"]["names"] == ["alpha", "beta[a]"]
    assert d["population_parameters"]["n_parameters"] == 2
    assert d["all_parameters"]["n_parameters"] == 3
    assert [p["name"] for p in d["parameters"]] == names
    assert d["max_score"] == 5


def test_report_ignores_warnings_quietly():
    s = good_samples()
    s[:, :, 0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = convergence_report(make_draws(s))
    assert np.isnan(rep.rhat[0])
    assert rep.components["rhat"]["failing"] == ["x[0]"]
