"""Exact likelihood computations for tractable finite-state models.

The workhorse is the scaled forward recursion: per step the one-step
predictive is normalized and the log normalizer accumulated, which keeps the
computation stable for sequences of length 10^6 and returns the exact
log-likelihood.  Everything is written batched -- one pass updates a whole
grid of parameter candidates, or a whole batch of replicate data sets --
because a Python-level loop over time with vectorized numpy steps is the
only tight loop in the package.

Perturbed quantities: passing a :class:`PerturbationSpec` evaluates the
perturbed model (observation channel convolved with the epsilon-kernel).
``forward_loglik`` uses normalized perturbed densities; ``exact_smc_target``
additionally applies the kernel mass (ball volume for the uniform kernel) so
that it equals the quantity the particle estimator in :mod:`abchmm.smc`
targets, whose all-accept value is probability one.

``forward_score`` propagates filter derivatives alongside the filter (exact
sensitivity recursion), never differencing the log-likelihood itself; finite
differences of ``forward_loglik`` therefore remain an independent check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import ModelSpec, PerturbationSpec, check_theta
from .sampling import Trajectory

Array = np.ndarray


# ---------------------------------------------------------------------------
# observation plumbing


def as_obs_1d(data) -> Array:
    """Extract a 1-D observation series from a Trajectory or array."""
    if isinstance(data, Trajectory):
        if data.obs_dim != 1:
            raise ValueError("exact computations support 1-D observations only")
        return data.observations[:, 0].copy()
    obs = np.asarray(data, dtype=float)
    if obs.ndim == 2 and obs.shape[1] == 1:
        obs = obs[:, 0]
    if obs.ndim != 1:
        raise ValueError(f"expected a 1-D observation series, got shape {obs.shape}")
    return obs


def _resolve_pert(model: ModelSpec, pert: PerturbationSpec | None):
    """Reconcile an explicit perturbation with a possibly-perturbed model."""
    if pert is not None and model.perturbation is not None:
        raise ValueError("pass a perturbation for a base model, or a perturbed "
                         "model, not both")
    if model.perturbation is not None:
        # densities installed on the model are already the perturbed ones
        return "plain", model.perturbation
    if pert is None or pert.is_exact:
        return "plain", pert
    return pert.kernel, pert


def emission_matrix(model: ModelSpec, theta, ys: Array,
                    pert: PerturbationSpec | None = None) -> Array:
    """Per-step emission weights, one column per state: shape (n, K)."""
    theta = check_theta(model, theta)
    mode, pert = _resolve_pert(model, pert)
    if mode == "plain":
        if model.emission_density is None:
            raise ValueError(f"model {model.name!r} has no tractable emission "
                             "density")
        return model.emission_density(theta, ys)
    if model.obs_dim != 1:
        raise ValueError("closed-form perturbed emissions require 1-D observations")
    eps = pert.epsilon
    if mode == "uniform":
        if model.emission_interval_prob is None:
            raise ValueError(f"model {model.name!r} has no closed-form emission "
                             "interval probability")
        return model.emission_interval_prob(theta, ys - eps, ys + eps) / (2.0 * eps)
    if model.emission_smooth_density is None:
        raise ValueError(f"model {model.name!r} has no closed-form smoothed "
                         "emission density")
    return model.emission_smooth_density(theta, ys, eps)


def emission_matrix_jac(model: ModelSpec, theta, ys: Array,
                        pert: PerturbationSpec | None = None) -> Array | None:
    """Analytic (d, n, K) Jacobian of :func:`emission_matrix`, if registered."""
    theta = check_theta(model, theta)
    mode, pert = _resolve_pert(model, pert)
    if mode == "plain":
        if model.emission_density_jac is None:
            return None
        return model.emission_density_jac(theta, ys)
    eps = pert.epsilon
    if mode == "uniform":
        if model.emission_interval_prob_jac is None:
            return None
        return model.emission_interval_prob_jac(theta, ys - eps, ys + eps) \
            / (2.0 * eps)
    if model.emission_smooth_density_jac is None:
        return None
    return model.emission_smooth_density_jac(theta, ys, eps)


def log_weight_scale(model: ModelSpec, pert: PerturbationSpec | None) -> float:
    """Per-observation log factor between normalized perturbed densities and
    the unnormalized kernel weights the particle estimator accumulates."""
    if pert is None and model.perturbation is not None:
        pert = model.perturbation
    if pert is None or pert.is_exact:
        return 0.0
    if pert.kernel == "uniform":
        return pert.log_ball_volume(model.obs_dim)
    # gaussian kernel weight pdf((yhat-y)/eps) = eps^m * (density of the
    # eps-convolution), per coordinate
    return model.obs_dim * math.log(pert.epsilon)


# ---------------------------------------------------------------------------
# forward recursions (batched)


def _forward_batch(p: Array, init: Array, emis: Array,
                   keep_filters: bool = False):
    """Scaled forward pass for a batch.

    p: (K, K) or (G, K, K); init: (K,) or (G, K); emis: (G, n, K).
    Returns (loglik (G,), filters (G, n, K) or None, log_increments (G, n)).
    """
    g, n, k = emis.shape
    shared_p = p.ndim == 2
    alpha = np.broadcast_to(init, (g, k)).copy()
    ll = np.zeros(g)
    dead = np.zeros(g, dtype=bool)
    filters = np.empty((g, n, k)) if keep_filters else None
    incr = np.empty((g, n))
    for t in range(n):
        pred = alpha @ p if shared_p else np.einsum("gk,gkj->gj", alpha, p)
        b = pred * emis[:, t]
        c = b.sum(axis=1)
        newly_dead = (c <= 0.0) & ~dead
        dead |= newly_dead
        safe_c = np.where(c > 0.0, c, 1.0)
        alpha = np.where(c[:, None] > 0.0, b / safe_c[:, None], 1.0 / k)
        with np.errstate(divide="ignore"):
            step_log = np.where(c > 0.0, np.log(safe_c), -np.inf)
        incr[:, t] = step_log
        ll = ll + np.where(dead, 0.0, step_log)
        if keep_filters:
            filters[:, t] = alpha
    ll[dead] = -np.inf
    return ll, filters, incr


def _forward_sens_batch(p: Array, dp: Array, init: Array, dinit: Array,
                        emis: Array, demis: Array):
    """Forward pass with parameter sensitivities.

    p: (K, K); dp: (d, K, K); init: (K,); dinit: (d, K);
    emis: (G, n, K); demis: (G, n, d, K).
    Returns (loglik (G,), score (G, d)).
    """
    g, n, k = emis.shape
    d = dp.shape[0]
    alpha = np.broadcast_to(init, (g, k)).copy()
    dalpha = np.broadcast_to(dinit, (g, d, k)).copy()
    ll = np.zeros(g)
    score = np.zeros((g, d))
    dead = np.zeros(g, dtype=bool)
    for t in range(n):
        e_t = emis[:, t]                       # (G, K)
        de_t = demis[:, t]                     # (G, d, K)
        pred = alpha @ p                       # (G, K)
        dpred = dalpha @ p + np.einsum("gk,dkj->gdj", alpha, dp)
        b = pred * e_t
        db = dpred * e_t[:, None, :] + pred[:, None, :] * de_t
        c = b.sum(axis=1)                      # (G,)
        dc = db.sum(axis=2)                    # (G, d)
        newly_dead = (c <= 0.0) & ~dead
        dead |= newly_dead
        safe_c = np.where(c > 0.0, c, 1.0)
        ratio = dc / safe_c[:, None]
        alpha = np.where(c[:, None] > 0.0, b / safe_c[:, None], 1.0 / k)
        dalpha = np.where(c[:, None, None] > 0.0,
                          db / safe_c[:, None, None]
                          - alpha[:, None, :] * ratio[:, :, None],
                          0.0)
        with np.errstate(divide="ignore"):
            step_log = np.where(c > 0.0, np.log(safe_c), -np.inf)
        live = ~dead
        ll = ll + np.where(live, step_log, 0.0)
        score = score + np.where(live[:, None], ratio, 0.0)
    ll[dead] = -np.inf
    score[dead] = np.nan
    return ll, score


def _transition_and_init(model: ModelSpec, theta: Array):
    p = model.transition_matrix(theta)
    init = model.initial_dist(theta)
    return np.asarray(p, dtype=float), np.asarray(init, dtype=float)


def forward_loglik(model: ModelSpec, theta, data,
                   pert: PerturbationSpec | None = None) -> float:
    """Exact log-likelihood (perturbed when ``pert`` is given)."""
    theta = check_theta(model, theta)
    ys = as_obs_1d(data)
    emis = emission_matrix(model, theta, ys, pert)[None]
    p, init = _transition_and_init(model, theta)
    ll, _, _ = _forward_batch(p, init, emis)
    return float(ll[0])


def forward_loglik_grid(model: ModelSpec, thetas, data,
                        pert: PerturbationSpec | None = None) -> Array:
    """Vectorized :func:`forward_loglik` over a (G, d) grid of parameters."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    ys = as_obs_1d(data)
    emis = np.stack([emission_matrix(model, th, ys, pert) for th in thetas])
    ps = [model.transition_matrix(check_theta(model, th)) for th in thetas]
    inits = np.stack([model.initial_dist(th) for th in thetas])
    same_p = all(p is ps[0] for p in ps)
    p = np.asarray(ps[0], float) if same_p else np.stack(ps).astype(float)
    ll, _, _ = _forward_batch(p, inits, emis)
    return ll


@dataclass
class ForwardState:
    """Filter distribution and accumulated log-normalizer after ``step`` obs."""

    step: int
    log_norm: float
    filter: Array


def forward_filter(model: ModelSpec, theta, data,
                   pert: PerturbationSpec | None = None,
                   init=None):
    """Run the filter, returning per-step filters and log increments.

    ``init`` overrides the model's initial distribution; an integer is
    interpreted as a point mass on that state.
    """
    theta = check_theta(model, theta)
    ys = as_obs_1d(data)
    emis = emission_matrix(model, theta, ys, pert)[None]
    p, init_dist = _transition_and_init(model, theta)
    if init is not None:
        if np.isscalar(init):
            point = np.zeros(model.n_states)
            point[int(init)] = 1.0
            init_dist = point
        else:
            init_dist = np.asarray(init, dtype=float)
    _, filters, incr = _forward_batch(p, init_dist, emis, keep_filters=True)
    return filters[0], incr[0]


def exact_smc_target(model: ModelSpec, theta, data,
                     pert: PerturbationSpec | None = None) -> float:
    """Exact value of the quantity the particle ABC estimator targets.

    For the uniform kernel this is the log probability that a fresh model
    trajectory lands inside every acceptance ball (forward log-likelihood of
    the perturbed model plus n times the log ball volume); for the gaussian
    kernel, the log expectation of the accumulated smooth weights.
    """
    ys = as_obs_1d(data)
    return forward_loglik(model, theta, data, pert) \
        + ys.shape[0] * log_weight_scale(model, pert)


# ---------------------------------------------------------------------------
# scores


def _fd_step(x: float) -> float:
    return 1e-6 * max(1.0, abs(x))


def _emission_jac_or_fd(model, theta, ys, pert):
    jac = emission_matrix_jac(model, theta, ys, pert)
    if jac is not None:
        return np.transpose(jac, (1, 0, 2))          # (n, d, K)
    d = model.param_dim
    cols = []
    for j in range(d):
        h = _fd_step(theta[j])
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        cols.append((emission_matrix(model, up, ys, pert)
                     - emission_matrix(model, dn, ys, pert)) / (2.0 * h))
    return np.stack(cols, axis=1)                    # (n, d, K)


def _transition_jac_or_fd(model, theta):
    if model.transition_matrix_jac is not None:
        return np.asarray(model.transition_matrix_jac(theta), dtype=float)
    d = model.param_dim
    rows = []
    for j in range(d):
        h = _fd_step(theta[j])
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        rows.append((np.asarray(model.transition_matrix(up), float)
                     - np.asarray(model.transition_matrix(dn), float)) / (2.0 * h))
    return np.stack(rows)


def _initial_jac_or_fd(model, theta):
    if model.initial_dist_jac is not None:
        return np.asarray(model.initial_dist_jac(theta), dtype=float)
    d = model.param_dim
    rows = []
    for j in range(d):
        h = _fd_step(theta[j])
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        rows.append((np.asarray(model.initial_dist(up), float)
                     - np.asarray(model.initial_dist(dn), float)) / (2.0 * h))
    return np.stack(rows)


def forward_score(model: ModelSpec, theta, data,
                  pert: PerturbationSpec | None = None) -> Array:
    """Score (gradient of the exact log-likelihood) via sensitivity propagation."""
    theta = check_theta(model, theta)
    ys = as_obs_1d(data)
    emis = emission_matrix(model, theta, ys, pert)[None]
    demis = _emission_jac_or_fd(model, theta, ys, pert)[None]
    p, init = _transition_and_init(model, theta)
    dp = _transition_jac_or_fd(model, theta)
    dinit = _initial_jac_or_fd(model, theta)
    _, score = _forward_sens_batch(p, dp, init, dinit, emis, demis)
    return score[0]


def forward_score_batch(model: ModelSpec, theta, obs_batch: Array,
                        pert: PerturbationSpec | None = None,
                        perturbed_steps: Array | None = None):
    """Log-likelihood and score for a batch of replicate series (R, n).

    ``perturbed_steps`` (length n, bool) evaluates a mixed sequence: steps
    flagged True use the perturbed emission channel, the rest the exact one.
    Without it, the channel is perturbed everywhere when ``pert`` is given.
    Returns ``(loglik (R,), score (R, d))``.
    """
    theta = check_theta(model, theta)
    obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=float))
    r, n = obs_batch.shape
    flat = obs_batch.reshape(-1)

    def emis_and_jac(use_pert):
        pp = pert if use_pert else None
        e = emission_matrix(model, theta, flat, pp).reshape(r, n, -1)
        de = _emission_jac_or_fd(model, theta, flat, pp)
        de = de.reshape(r, n, de.shape[1], de.shape[2])
        return e, de

    if perturbed_steps is None:
        emis, demis = emis_and_jac(pert is not None)
    else:
        perturbed_steps = np.asarray(perturbed_steps, dtype=bool)
        if perturbed_steps.shape != (n,):
            raise ValueError("perturbed_steps must have one flag per step")
        e_ex, de_ex = emis_and_jac(False)
        e_pe, de_pe = emis_and_jac(True)
        emis = np.where(perturbed_steps[None, :, None], e_pe, e_ex)
        demis = np.where(perturbed_steps[None, :, None, None], de_pe, de_ex)
    p, init = _transition_and_init(model, theta)
    dp = _transition_jac_or_fd(model, theta)
    dinit = _initial_jac_or_fd(model, theta)
    return _forward_sens_batch(p, dp, init, dinit, emis, demis)


# ---------------------------------------------------------------------------
# independent brute-force route


def brute_force_loglik(model: ModelSpec, theta, data,
                       pert: PerturbationSpec | None = None,
                       chunk: int = 1 << 16) -> float:
    """Log-likelihood by explicit enumeration of every hidden path.

    Exponential in n -- guarded to K^n <= ~3.2e6 -- and deliberately free of
    the forward recursion's scaling machinery, so it serves as an independent
    oracle for it.
    """
    theta = check_theta(model, theta)
    ys = as_obs_1d(data)
    n, k = ys.shape[0], model.n_states
    if k ** n > 3_200_000:
        raise ValueError(f"path enumeration infeasible for K={k}, n={n}")
    with np.errstate(divide="ignore"):
        log_e = np.log(emission_matrix(model, theta, ys, pert))   # (n, K)
        p, init = _transition_and_init(model, theta)
        log_p = np.log(p)
        log_init = np.log(init)
    t_idx = np.arange(n)
    chunks = []
    paths_iter = itertools.product(range(k), repeat=n)
    while True:
        block = list(itertools.islice(paths_iter, chunk))
        if not block:
            break
        paths = np.asarray(block, dtype=np.int64)                 # (B, n)
        lp = log_init[paths[:, 0]] \
            + log_p[paths[:, :-1], paths[:, 1:]].sum(axis=1) \
            + log_e[t_idx[None, :], paths].sum(axis=1)
        chunks.append(logsumexp(lp))
    return float(logsumexp(np.asarray(chunks)))


# ---------------------------------------------------------------------------
# two-point i.i.d. model, closed form


def iid_abc_log_likelihood(theta, data, epsilon: float) -> float:
    """Exact ABC log-likelihood for the two-point i.i.d. model.

    Per observation: P(ball around y is hit) = 1/2 * 1{|theta - y| <= eps}
    + 1/2 * 1{|theta + y| <= eps}; -inf as soon as one observation's ball
    misses both support points.
    """
    thetas = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(-1)
    return float(iid_abc_log_likelihood_grid(thetas[:1], data, epsilon)[0])


def iid_abc_log_likelihood_grid(thetas, data, epsilon: float) -> Array:
    """Vectorized :func:`iid_abc_log_likelihood` over a grid of scalars."""
    ys = as_obs_1d(data)
    th = np.asarray(thetas, dtype=float).reshape(-1, 1)
    prob = 0.5 * (np.abs(th - ys[None, :]) <= epsilon) \
        + 0.5 * (np.abs(th + ys[None, :]) <= epsilon)
    with np.errstate(divide="ignore"):
        return np.where(np.all(prob > 0.0, axis=1),
                        np.sum(np.log(np.maximum(prob, 1e-300)), axis=1),
                        -np.inf)


# ---------------------------------------------------------------------------
# filter forgetting


@dataclass
class FilterForgetting:
    """Total-variation gap between two filters plus its geometric envelope."""

    tv: Array          # tv[i]: TV after i+1 update steps
    bound: Array       # rho_hat ** (i+1)
    rho_hat: float
    c_lo: float
    c_hi: float


def filter_tv_forgetting(model: ModelSpec, theta, data,
                         init_a=None, init_b=None,
                         pert: PerturbationSpec | None = None) -> FilterForgetting:
    """Track the TV distance between filters started from two initializations.

    The envelope constant is ``rho_hat = 1 - (c_lo / c_hi)**2`` with ``c_lo``
    / ``c_hi`` the smallest / largest value among transition probabilities and
    emission weights evaluated over the observed data range -- the standard
    one-step minorization constant for the filter map.
    """
    theta = check_theta(model, theta)
    ys = as_obs_1d(data)
    if init_a is None:
        init_a = 0
    if init_b is None:
        init_b = model.n_states - 1
    fa, _ = forward_filter(model, theta, ys, pert=pert, init=init_a)
    fb, _ = forward_filter(model, theta, ys, pert=pert, init=init_b)
    tv = 0.5 * np.abs(fa - fb).sum(axis=1)
    p = np.asarray(model.transition_matrix(theta), dtype=float)
    emis = emission_matrix(model, theta, ys, pert)
    c_lo = float(min(p.min(), emis.min()))
    c_hi = float(max(p.max(), emis.max()))
    rho = 1.0 - (c_lo / c_hi) ** 2 if c_hi > 0 and c_lo > 0 else 1.0
    k = np.arange(1, ys.shape[0] + 1)
    return FilterForgetting(tv=tv, bound=rho ** k, rho_hat=float(rho),
                            c_lo=c_lo, c_hi=c_hi)
