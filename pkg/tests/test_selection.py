import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from compatpriors.compat import derive, derive_uc
from compatpriors.core_model import Dataset, ModelId, enumerate_models
from compatpriors.errors import ImproperPriorError
from compatpriors.priors import NigPrior, PriorMeanChoice, log_marginal_likelihood, posterior_update, resolve_prior_mean
from compatpriors.selection import (
    BayesFactorMatrix,
    bayes_factor,
    bayes_factor_matrix,
    classify_trajectory,
    compare_models,
    gelfand_ghosh,
    info_paradox_probe,
    posterior_model_probs,
    savage_ratio,
)

from conftest import random_dataset

NULL = ModelId(())


def _random_prior(r, size):
    return NigPrior(r.normal(size=size), float(r.uniform(0.5, 40.0)), float(r.uniform(0.5, 15.0)),
                    float(r.uniform(0.1, 20.0)))


def test_same_model_same_prior_is_zero(rng):
    data = random_dataset(rng, 10, 3)
    prior = NigPrior([0.1, 0.2, 0.3], 5.0, 3.0, 2.0)
    m = ModelId.full(3)
    assert bayes_factor(prior, prior, m, m, data) == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_bayes_factor_equals_marginal_ratio(seed):
    r = np.random.default_rng(seed)
    data = random_dataset(r, 10, 3, corr=0.4)
    models = enumerate_models(3)
    mk, ms = models[int(r.integers(0, 4))], models[int(r.integers(0, 4))]
    pk, ps = _random_prior(r, mk.size), _random_prior(r, ms.size)
    lb = bayes_factor(pk, ps, mk, ms, data)
    ref = log_marginal_likelihood(pk, data, mk) - log_marginal_likelihood(ps, data, ms)
    assert abs(lb - ref) <= 1e-8 * max(1.0, abs(ref))


def test_bayes_factor_transitive(rng):
    data = random_dataset(rng, 12, 4)
    ms = enumerate_models(4)[:3]
    ps = [_random_prior(rng, m.size) for m in ms]
    b01 = bayes_factor(ps[0], ps[1], ms[0], ms[1], data)
    b12 = bayes_factor(ps[1], ps[2], ms[1], ms[2], data)
    b02 = bayes_factor(ps[0], ps[2], ms[0], ms[2], data)
    assert b01 + b12 == pytest.approx(b02, rel=1e-12, abs=1e-12)


def test_improper_is_limit_of_proper(rng):
    data = random_dataset(rng, 12, 3)
    mk, ms = ModelId.of(0, 1), ModelId.full(3)
    bk, bs = np.array([0.2, 0.1]), np.array([0.2, 0.1, 0.0])
    imp = bayes_factor(NigPrior.improper(bk, 6.0), NigPrior.improper(bs, 6.0), mk, ms, data)
    eps = 1e-9
    prop = bayes_factor(NigPrior(bk, 6.0, eps, eps), NigPrior(bs, 6.0, eps, eps), mk, ms, data)
    assert imp == pytest.approx(prop, abs=1e-6)


def test_mixed_proper_improper_rejected(rng):
    data = random_dataset(rng, 8, 2)
    m = ModelId.full(2)
    with pytest.raises(ImproperPriorError):
        bayes_factor(NigPrior.improper([0, 0], 1.0), NigPrior([0, 0], 1.0, 1.0, 1.0), m, m, data)


def test_improper_needs_n_above_p():
    data = Dataset([1.0, 2.0], np.column_stack([np.ones(2), [0.0, 1.0]]))
    with pytest.raises(ImproperPriorError):
        bayes_factor(NigPrior.improper([0.0], 1.0), NigPrior.improper([0.0, 0.0], 1.0),
                     ModelId.of(0), ModelId.full(2), data)


# ----------------------------------------------------------------- Savage


def test_savage_equals_uc_bayes_factor():
    r = np.random.default_rng(77)
    for _ in range(30):
        p = int(r.integers(2, 5))
        n = int(r.integers(p + 2, 21))
        data = random_dataset(r, n, p, corr=0.5)
        prior = _random_prior(r, p)
        m = enumerate_models(p)[int(r.integers(0, 2 ** (p - 1) - 1))]
        lb = bayes_factor(derive_uc(prior, m, data.X).prior, prior, m, ModelId.full(p), data)
        assert abs(lb - savage_ratio(prior, m, data)) < 1e-8 * (1 + abs(lb))


def test_savage_one_coefficient_quadrature(rng):
    data = random_dataset(rng, 9, 2)
    prior = NigPrior([0.3, -0.5], 4.0, 5.0, 2.0)
    post = posterior_update(prior, data, ModelId.full(2))
    V = prior.g * np.linalg.inv(data.X.T @ data.X)

    def density_at_zero(mean, var, d, a):
        f = lambda s2: stats.norm.pdf(0.0, mean, math.sqrt(s2 * var)) * stats.invgamma.pdf(s2, d / 2, scale=a / 2)
        return integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=400)[0]

    ref = math.log(density_at_zero(post.b_n[1], post.V_n[1, 1], post.d_n, post.a_n)
                   / density_at_zero(prior.b[1], V[1, 1], prior.d, prior.a))
    assert savage_ratio(prior, ModelId.of(0), data) == pytest.approx(ref, abs=1e-6)


def test_savage_favours_full_model_with_strong_signal():
    r = np.random.default_rng(8)
    n = 200
    X = np.column_stack([np.ones(n), r.normal(size=n)])
    data = Dataset(X @ np.array([1.0, 3.0]) + r.normal(size=n), X)
    assert savage_ratio(NigPrior([0.0, 0.0], n, 5.0, 1.0), ModelId.of(0), data) < -50


def test_savage_full_model_and_improper(rng):
    data = random_dataset(rng, 8, 2)
    assert savage_ratio(NigPrior([0, 0], 1.0, 1.0, 1.0), ModelId.full(2), data) == 0.0
    with pytest.raises(ImproperPriorError):
        savage_ratio(NigPrior.improper([0, 0], 1.0), ModelId.of(0), data)


# ----------------------------------------------------------------- probabilities


def _bfm(logs):
    models = [ModelId.of(0), ModelId.of(0, 1)]
    return BayesFactorMatrix(models, np.array(logs, float), models[1])


def test_two_model_probabilities():
    assert posterior_model_probs(_bfm([0.0, 0.0])) == pytest.approx([0.5, 0.5])
    # B* = 3 in favour of the larger model
    assert posterior_model_probs(_bfm([-math.log(3.0), 0.0]))[0] == pytest.approx(0.25, rel=1e-14)


def test_probabilities_shift_invariant_and_normalized(rng):
    logs = rng.normal(scale=30, size=8)
    models = enumerate_models(4)
    a = posterior_model_probs(BayesFactorMatrix(models, logs, models[-1]))
    b = posterior_model_probs(BayesFactorMatrix(models, logs + 1234.5, models[-1]))
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-300)


def test_prior_model_probabilities():
    probs = posterior_model_probs(_bfm([0.0, 0.0]), [0.2, 0.8])
    assert probs == pytest.approx([0.2, 0.8])
    assert posterior_model_probs(_bfm([0.0, 5.0]), [1.0, 0.0])[0] == 1.0
    with pytest.raises(ValueError):
        posterior_model_probs(_bfm([0.0, 0.0]), [0.5, 0.6])


def test_bayes_factor_matrix_antisymmetric(rng):
    data = random_dataset(rng, 12, 3)
    prior = NigPrior([0.0, 1.0, 0.5], 12.0, 4.0, 2.0)
    priors = {m: derive("S", prior, m, data.X).prior for m in enumerate_models(3)}
    bfm = bayes_factor_matrix(priors, data)
    M = bfm.matrix()
    np.testing.assert_allclose(M, -M.T, atol=1e-12)
    assert bfm.log_bf(ModelId.of(0), ModelId.of(0, 2)) == pytest.approx(M[0, 2])
    with pytest.raises(ValueError):
        bayes_factor_matrix({ModelId.of(0): priors[ModelId.of(0)]}, data)


def test_hald_standard_top_model(hald):
    b = resolve_prior_mean(PriorMeanChoice("ybar"), hald)
    cmp = compare_models("S", NigPrior(b, 13.0, 25.0, 125.0), hald)
    assert cmp.top() == ModelId.of(0, 1, 2)
    assert cmp.prob(ModelId.of(0, 1, 2)) == pytest.approx(0.340, abs=0.005)
    assert sum(p for _, p in cmp.ranked()) == pytest.approx(1.0, abs=1e-12)
    assert ModelId.of(0, 1, 2).issubset(cmp.median_model())


def test_compare_models_improper_full_model(hald):
    b = resolve_prior_mean(PriorMeanChoice("ybar"), hald)
    cmp = compare_models("I", NigPrior(b, 13.0, 25.0, 125.0), hald)
    assert all(not dp.prior.proper for dp in cmp.derived.values())
    assert cmp.probs.sum() == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------------- Gelfand-Ghosh


def test_gg_mean_model_null():
    r = np.random.default_rng(12)
    n = 25
    y = r.normal(size=n) - 0.5
    data = Dataset(y, np.ones((n, 1)))
    full = NigPrior([0.0], 25.0, 5.0, 1.0)
    scores = {}
    for proc in ("S", "UC"):
        pk = derive(proc, full, NULL, data.X).prior
        gg = gelfand_ghosh(pk, NULL, data)
        assert gg.G == pytest.approx(float(y @ y), rel=1e-14)
        a_n, d_n = pk.a + float(y @ y), pk.d + n
        assert gg.P == pytest.approx(n * a_n / (d_n - 2), rel=1e-14)
        scores[proc] = gg
    assert scores["UC"].P < scores["S"].P


def test_gg_decomposition(rng):
    data = random_dataset(rng, 10, 3)
    prior = NigPrior([0, 0], 10.0, 4.0, 2.0)
    gg = gelfand_ghosh(prior, ModelId.of(0, 2), data, c=3.0)
    assert gg.D == pytest.approx(0.75 * gg.G + gg.P, rel=1e-14)
    with pytest.raises(ValueError):
        gelfand_ghosh(prior, ModelId.of(0, 2), data, c=0.0)
    with pytest.raises(ValueError):
        gelfand_ghosh(NigPrior([0, 0, 0], 10.0, 4.0, 2.0), ModelId.of(0, 2), data)


def test_gg_predictive_moments_monte_carlo():
    r = np.random.default_rng(13)
    X = np.column_stack([np.ones(4), [-1.0, 0.3, 0.8, 1.9]])
    data = Dataset([0.2, 1.0, 1.1, 2.4], X)
    prior = NigPrior([0.0, 0.5], 4.0, 6.0, 2.0)
    m = ModelId.full(2)
    post = posterior_update(prior, data, m)
    N = 1_000_000
    s2 = (post.a_n / 2) / r.gamma(post.d_n / 2, size=N)
    beta = post.b_n + (r.standard_normal((N, 2)) @ np.linalg.cholesky(post.V_n).T) * np.sqrt(s2)[:, None]
    yrep = beta @ X.T + np.sqrt(s2)[:, None] * r.standard_normal((N, 4))
    mu = yrep.mean(axis=0)
    var = yrep.var(axis=0)
    gg = gelfand_ghosh(prior, m, data)
    exact_mu = X @ post.b_n
    exact_var = post.a_n / (post.d_n - 2) * (1 + np.einsum("ij,jk,ik->i", X, post.V_n, X))
    assert np.all(np.abs(mu - exact_mu) < 3 * np.sqrt(exact_var / N))
    # sample-variance SE from the fourth central moment
    m4 = ((yrep - mu) ** 4).mean(axis=0)
    assert np.all(np.abs(var - exact_var) < 3 * np.sqrt((m4 - var**2) / N))
    assert gg.P == pytest.approx(exact_var.sum(), rel=1e-12)
    assert gg.G == pytest.approx(float(np.sum((exact_mu - data.y) ** 2)), rel=1e-12)


# ----------------------------------------------------------------- paradox probe


@pytest.mark.parametrize("proc,mean,want", [("S", "zero", "bounded"), ("UC", "zero", "diverging"),
                                            ("KL", "zero", "bounded"), ("UC", "ols", "diverging"),
                                            ("KL", "ols", "diverging")])
def test_paradox_probe_classification(correlated_data, proc, mean, want):
    t = info_paradox_probe(proc, PriorMeanChoice(mean), correlated_data, ModelId.of(0, 1, 3))
    assert t.classification == want
    assert t.scales.tolist() == [10.0**k for k in range(7)]


def test_paradox_uc_rate_converges(correlated_data):
    t = info_paradox_probe("UC", PriorMeanChoice("ols"), correlated_data, ModelId.of(0, 1, 3), a=1.0)
    assert abs(t.a_k[-1] - 1.0) < 1e-3


def test_paradox_fixed_noise_keeps_uc_rate_gap(correlated_data):
    t = info_paradox_probe("UC", PriorMeanChoice("ols"), correlated_data, ModelId.of(0, 1, 3), fixed_noise=True)
    assert np.ptp(t.a_k) < 1e-6 * t.a_k[0]
    assert t.a_k[0] > 1.0


def test_paradox_rejects_improper(correlated_data):
    with pytest.raises(ValueError):
        info_paradox_probe("I", PriorMeanChoice("zero"), correlated_data, ModelId.of(0, 1))


def test_classify_trajectory_rules():
    s = [10.0**k for k in range(7)]
    assert classify_trajectory(s, [0, 1, 2, 3, 4, 5, 6]) == "diverging"
    assert classify_trajectory(s, [0, 1, 2, 2.5, 2.52, 2.53, 2.53]) == "bounded"
    assert classify_trajectory(s, [0, 1, 2, 1, -5, -11, -17]) == "bounded"
    assert classify_trajectory(s, [0, 1, 2, 3, 1, 3, 1]) == "indeterminate"
