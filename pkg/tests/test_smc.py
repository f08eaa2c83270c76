import math

import numpy as np
import pytest

from abchmm import oracle, rng, sampling, smc
from abchmm.models import PerturbationSpec, builtin_model


def test_systematic_resampling_counts():
    w = np.array([0.5, 0.25, 0.125, 0.125])
    g = rng.stream(0, "sys")
    for _ in range(20):
        idx = smc._systematic_indices(w, 8, g)
        counts = np.bincount(idx, minlength=4)
        # systematic resampling leaves each count within one of N * w
        np.testing.assert_array_equal(counts, 8 * w)


def test_systematic_resampling_fractional():
    w = np.array([0.6, 0.4])
    g = rng.stream(1, "sys")
    for _ in range(50):
        counts = np.bincount(smc._systematic_indices(w, 5, g), minlength=2)
        assert counts[0] in (3, 4) and counts.sum() == 5


def test_multinomial_resampling_frequencies():
    w = np.array([0.7, 0.2, 0.1])
    g = rng.stream(2, "mult")
    idx = smc._multinomial_indices(w, 100_000, g)
    freq = np.bincount(idx, minlength=3) / 100_000
    np.testing.assert_allclose(freq, w, atol=5e-3)


def test_resample_op():
    ens = smc.ParticleEnsemble(states=np.array([0, 1, 2, 3]),
                               weights=np.array([0.0, 1.0, 0.0, 0.0]))
    out = smc.resample(ens, rng.stream(0, "r"))
    np.testing.assert_array_equal(out.states, [1, 1, 1, 1])
    np.testing.assert_allclose(out.weights, 0.25)


def _pm_data(n=30, seed=7):
    model = builtin_model("iid_pm_theta")
    return model, sampling.simulate(model, [1.0], n, seed=seed,
                                    with_hidden=False)


def test_all_accept_gives_exact_zero():
    model, data = _pm_data()
    pert = PerturbationSpec(epsilon=1.5)
    res = smc.smc_abc_likelihood(model, [0.0], data, pert, 200, seed=3)
    # every particle lands inside every ball: the estimate must be exactly
    # log 1 = 0.0, with no float drift from the weight normalization
    assert res.log_value == 0.0
    assert res.collapsed_at is None
    np.testing.assert_array_equal(res.step_acceptance, 1.0)
    assert res.se_proxy == 0.0


def test_collapse_reported():
    model, data = _pm_data()
    pert = PerturbationSpec(epsilon=0.5)
    res = smc.smc_abc_likelihood(model, [3.0], data, pert, 200, seed=3)
    assert res.log_value == -math.inf
    assert res.collapsed_at == 0
    assert math.isnan(res.se_proxy) or res.se_proxy == math.inf


def test_same_seed_same_value():
    model = builtin_model("finite_gaussian")
    data = sampling.simulate(model, [0.8], 25, seed=5, with_hidden=False)
    pert = PerturbationSpec(epsilon=0.5)
    a = smc.smc_abc_likelihood(model, [0.8], data, pert, 500, seed=11)
    b = smc.smc_abc_likelihood(model, [0.8], data, pert, 500, seed=11)
    assert a.log_value == b.log_value
    c = smc.smc_abc_likelihood(model, [0.8], data, pert, 500, seed=12)
    assert a.log_value != c.log_value


def test_unbiased_against_oracle():
    model = builtin_model("finite_gaussian")
    data = sampling.simulate(model, [0.8], 20, seed=5, with_hidden=False)
    pert = PerturbationSpec(epsilon=0.5)
    target = oracle.exact_smc_target(model, [0.8], data, pert)
    ratios = []
    for rep in range(60):
        res = smc.smc_abc_likelihood(model, [0.8], data, pert, 1000,
                                     seed=rng.derive_seed(100, rep))
        ratios.append(math.exp(res.log_value - target))
    ratios = np.asarray(ratios)
    se = ratios.std(ddof=1) / math.sqrt(ratios.size)
    assert abs(ratios.mean() - 1.0) < 3 * se + 1e-3


def test_gaussian_kernel_against_oracle():
    model = builtin_model("finite_gaussian")
    data = sampling.simulate(model, [0.8], 15, seed=6, with_hidden=False)
    pert = PerturbationSpec(epsilon=0.4, kernel="gaussian")
    target = oracle.exact_smc_target(model, [0.8], data, pert)
    ratios = []
    for rep in range(60):
        res = smc.smc_abc_likelihood(model, [0.8], data, pert, 1000,
                                     seed=rng.derive_seed(200, rep))
        ratios.append(math.exp(res.log_value - target))
    ratios = np.asarray(ratios)
    se = ratios.std(ddof=1) / math.sqrt(ratios.size)
    assert abs(ratios.mean() - 1.0) < 3 * se + 1e-3


def test_systematic_ess_scheme_runs():
    model = builtin_model("finite_gaussian")
    data = sampling.simulate(model, [0.8], 25, seed=5, with_hidden=False)
    pert = PerturbationSpec(epsilon=0.5)
    res = smc.smc_abc_likelihood(model, [0.8], data, pert, 500, seed=11,
                                 resampling="systematic_ess",
                                 ess_threshold=0.5)
    assert math.isfinite(res.log_value)
    assert res.ess_trace.shape == (25,)
    exact = oracle.exact_smc_target(model, [0.8], data, pert)
    assert abs(res.log_value - exact) < 2.0


def test_unknown_scheme_rejected():
    model, data = _pm_data()
    with pytest.raises(ValueError, match="resampling"):
        smc.smc_abc_likelihood(model, [0.0], data,
                               PerturbationSpec(epsilon=1.5), 100, seed=0,
                               resampling="stratified")


def test_perturbed_model_rejected():
    from abchmm.models import perturb_model
    model, data = _pm_data()
    pert = PerturbationSpec(epsilon=1.5)
    with pytest.raises(ValueError, match="base model"):
        smc.smc_abc_likelihood(perturb_model(model, pert), [0.0], data, pert,
                               100, seed=0)


def test_estimate_metadata():
    model, data = _pm_data()
    pert = PerturbationSpec(epsilon=1.5)
    res = smc.smc_abc_likelihood(model, [0.5], data, pert, 128, seed=9)
    assert res.n == 30
    assert res.n_particles == 128
    assert res.epsilon == 1.5
    assert res.seed == 9
