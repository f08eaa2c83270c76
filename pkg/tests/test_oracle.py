"""The forward machinery against independent brute-force enumeration."""

import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from abchmm import oracle, rng, sampling
from abchmm.models import PerturbationSpec, builtin_model


@pytest.fixture(scope="module")
def gauss():
    return builtin_model("finite_gaussian", hyper={"param": "mean_scale"})


@pytest.fixture(scope="module")
def short_data(gauss):
    return sampling.simulate(gauss, [0.7, 1.1], 6, seed=21)


def test_forward_matches_brute_force(gauss, short_data):
    g = rng.stream(0, "theta-draws")
    for _ in range(5):
        theta = np.array([g.uniform(-2, 2), g.uniform(0.3, 2.5)])
        for pert in (None, PerturbationSpec(epsilon=0.4),
                     PerturbationSpec(epsilon=0.4, kernel="gaussian")):
            ll = oracle.forward_loglik(gauss, theta, short_data, pert)
            bf = oracle.brute_force_loglik(gauss, theta, short_data, pert)
            assert ll == pytest.approx(bf, rel=1e-10)


def test_brute_force_guard(gauss):
    with pytest.raises(ValueError, match="infeasible"):
        oracle.brute_force_loglik(gauss, [0.0, 1.0], np.zeros(40))


def test_grid_matches_loop(gauss, short_data):
    thetas = np.array([[0.1, 0.8], [0.7, 1.1], [-1.0, 2.0]])
    pert = PerturbationSpec(epsilon=0.3)
    grid = oracle.forward_loglik_grid(gauss, thetas, short_data, pert)
    loop = [oracle.forward_loglik(gauss, t, short_data, pert) for t in thetas]
    np.testing.assert_allclose(grid, loop, rtol=1e-12)


def test_exact_smc_target_shift(gauss, short_data):
    pert = PerturbationSpec(epsilon=0.4)
    n = short_data.observations.shape[0]
    target = oracle.exact_smc_target(gauss, [0.7, 1.1], short_data, pert)
    ll = oracle.forward_loglik(gauss, [0.7, 1.1], short_data, pert)
    assert target == pytest.approx(ll + n * math.log(2 * 0.4), rel=1e-12)
    # gaussian kernel: the scale is log eps per observation, not log 2 eps
    pg = PerturbationSpec(epsilon=0.4, kernel="gaussian")
    tg = oracle.exact_smc_target(gauss, [0.7, 1.1], short_data, pg)
    lg = oracle.forward_loglik(gauss, [0.7, 1.1], short_data, pg)
    assert tg == pytest.approx(lg + n * math.log(0.4), rel=1e-12)


def test_score_matches_fd(gauss):
    data = sampling.simulate(gauss, [0.7, 1.1], 200, seed=4)
    for pert in (None, PerturbationSpec(epsilon=0.3),
                 PerturbationSpec(epsilon=0.3, kernel="gaussian")):
        theta = np.array([0.55, 0.95])
        score = oracle.forward_score(gauss, theta, data, pert)
        h = 1e-5
        fd = np.empty_like(score)
        for j in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (oracle.forward_loglik(gauss, up, data, pert)
                     - oracle.forward_loglik(gauss, dn, data, pert)) / (2 * h)
        np.testing.assert_allclose(score, fd, rtol=1e-4)


def test_score_on_many_random_instances(gauss):
    g = rng.stream(1, "instances")
    for i in range(10):
        theta = np.array([g.uniform(-1.5, 1.5), g.uniform(0.4, 2.0)])
        data = sampling.simulate(gauss, theta, 60, seed=100 + i)
        eps = float(g.uniform(0.1, 0.8))
        pert = PerturbationSpec(epsilon=eps)
        score = oracle.forward_score(gauss, theta, data, pert)
        h = 1e-5
        for j in range(2):
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            fd = (oracle.forward_loglik(gauss, up, data, pert)
                  - oracle.forward_loglik(gauss, dn, data, pert)) / (2 * h)
            assert score[j] == pytest.approx(fd, rel=2e-4, abs=1e-6)


def _mixed_brute_force(model, theta, ys, pert, noisy_mask):
    """Path enumeration with per-step emission channel chosen by the mask."""
    theta = np.asarray(theta, dtype=float)
    n, k = ys.shape[0], model.n_states
    e_clean = oracle.emission_matrix(model, theta, ys, None)
    e_noisy = oracle.emission_matrix(model, theta, ys, pert)
    emis = np.where(noisy_mask[:, None], e_noisy, e_clean)
    p = np.asarray(model.transition_matrix(theta), dtype=float)
    init = np.asarray(model.initial_dist(theta), dtype=float)
    total = []
    for path in itertools.product(range(k), repeat=n):
        path = np.asarray(path)
        lp = math.log(init[path[0]]) \
            + np.log(p[path[:-1], path[1:]]).sum() \
            + np.log(emis[np.arange(n), path]).sum()
        total.append(lp)
    return float(logsumexp(np.asarray(total)))


def test_mixed_channel_score_batch(gauss):
    pert = PerturbationSpec(epsilon=0.5)
    g = rng.stream(3, "mixed")
    ys = np.stack([g.normal(size=5), g.normal(size=5)])        # (R=2, n=5)
    mask = np.array([False, True, True, False, True])
    theta = np.array([0.4, 1.2])
    ll, score = oracle.forward_score_batch(gauss, theta, ys, pert=pert,
                                           perturbed_steps=mask)
    for r in range(2):
        bf = _mixed_brute_force(gauss, theta, ys[r], pert, mask)
        assert ll[r] == pytest.approx(bf, rel=1e-10)
    # score against central differences of the mixed log-likelihood
    h = 1e-5
    for j in range(2):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        ll_up, _ = oracle.forward_score_batch(gauss, up, ys, pert=pert,
                                              perturbed_steps=mask)
        ll_dn, _ = oracle.forward_score_batch(gauss, dn, ys, pert=pert,
                                              perturbed_steps=mask)
        np.testing.assert_allclose(score[:, j], (ll_up - ll_dn) / (2 * h),
                                   rtol=2e-4)


def test_score_batch_extremes_match_single(gauss, short_data):
    pert = PerturbationSpec(epsilon=0.5)
    ys = short_data.observations[:, 0][None, :]
    theta = [0.7, 1.1]
    n = ys.shape[1]
    ll_all, sc_all = oracle.forward_score_batch(
        gauss, theta, ys, pert=pert, perturbed_steps=np.ones(n, dtype=bool))
    assert ll_all[0] == pytest.approx(
        oracle.forward_loglik(gauss, theta, short_data, pert), rel=1e-12)
    np.testing.assert_allclose(
        sc_all[0], oracle.forward_score(gauss, theta, short_data, pert),
        rtol=1e-10)
    ll_none, sc_none = oracle.forward_score_batch(
        gauss, theta, ys, pert=pert, perturbed_steps=np.zeros(n, dtype=bool))
    assert ll_none[0] == pytest.approx(
        oracle.forward_loglik(gauss, theta, short_data, None), rel=1e-12)
    np.testing.assert_allclose(
        sc_none[0], oracle.forward_score(gauss, theta, short_data, None),
        rtol=1e-10)


def test_long_series_stability():
    model = builtin_model("finite_gaussian")
    data = sampling.simulate(model, [1.0], 1_000_000, seed=8,
                             with_hidden=False)
    ll = oracle.forward_loglik(model, [1.0], data, None)
    assert math.isfinite(ll)
    # per observation the log-likelihood sits near the entropy rate
    assert -2.5 < ll / 1e6 < -1.0


def test_filter_matches_brute_force_posterior(gauss, short_data):
    theta = np.array([0.7, 1.1])
    filters, incr = oracle.forward_filter(gauss, theta, short_data)
    ys = short_data.observations[:, 0]
    n, k = ys.shape[0], 2
    e = oracle.emission_matrix(gauss, theta, ys, None)
    p = gauss.transition_matrix(theta)
    init = gauss.initial_dist(theta)
    # posterior of X_t given y_{0:t} by enumeration over prefix paths
    for t in (0, 2, 5):
        post = np.zeros(k)
        for path in itertools.product(range(k), repeat=t + 1):
            path = np.asarray(path)
            w = init[path[0]] * np.prod(p[path[:-1], path[1:]]) \
                * np.prod(e[np.arange(t + 1), path])
            post[path[-1]] += w
        post /= post.sum()
        np.testing.assert_allclose(filters[t], post, rtol=1e-10)
    # log-normalizer increments accumulate to the log-likelihood
    assert incr.sum() == pytest.approx(
        oracle.forward_loglik(gauss, theta, short_data, None), rel=1e-12)


def test_point_mass_init(gauss, short_data):
    filters, _ = oracle.forward_filter(gauss, [0.7, 1.1], short_data, init=1)
    assert filters.shape[1] == 2


def test_iid_closed_form():
    data = np.array([1.0, -1.0, 1.0, 1.0])
    # per observation: half mass at theta, half at -theta
    assert oracle.iid_abc_log_likelihood(0.0, data, 1.5) == 0.0
    assert oracle.iid_abc_log_likelihood(1.0, data, 1.5) == pytest.approx(
        4 * math.log(0.5))
    assert oracle.iid_abc_log_likelihood(3.0, data, 0.5) == -math.inf
    grid = oracle.iid_abc_log_likelihood_grid(np.array([0.0, 1.0, 3.0]),
                                              data, 1.5)
    assert grid[0] == 0.0
    assert grid[1] == pytest.approx(4 * math.log(0.5))
    assert grid[2] == -math.inf


def test_filter_forgetting_bound(gauss):
    data = sampling.simulate(gauss, [0.7, 1.1], 60, seed=2)
    out = oracle.filter_tv_forgetting(gauss, [0.7, 1.1], data)
    assert 0 < out.rho_hat < 1
    assert out.tv.shape == (60,)
    bound = out.rho_hat ** np.arange(1, 61)
    assert np.all(out.tv <= bound + 1e-12)
    # forgetting is geometric: far past initializations are irrelevant
    assert out.tv[-1] < 1e-6
