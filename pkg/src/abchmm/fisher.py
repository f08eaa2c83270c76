"""Fisher information of exact and perturbed models, and what the
perturbation destroys.

``estimate_fisher`` is the plain simulation estimator: simulate replicate
series at theta (from the perturbed model when a perturbation is given),
compute exact scores by sensitivity propagation, and average
``score score^T / n`` across replicates.

``information_loss_curve`` estimates the information lost to the
perturbation, ``I - I_eps``, per tolerance.  Differencing two independent
``estimate_fisher`` outputs cannot resolve the loss at small tolerances (the
loss scales like eps^2 while the difference's noise floor does not), so the
loss is estimated directly from coupled data: simulate one series, build its
noisified twin from the same draws, and form the difference of the scores of
two mixed sequences that disagree only in whether the centre observation is
the clean or the noisy one (each mixed score conditions on the clean past
and noisy future inside a window long enough for filter forgetting to make
the truncation negligible).  Averaging the outer product of that score
difference is a positive-semidefinite, low-variance estimator of the
per-observation information gap -- the conditional missing-information
decomposition made computable.  ``missing_information_check`` validates the
identity behind it on a short horizon, where both routes (direct difference
of full-sequence score outer products, and the summed conditional
differences) are computed from independent replicates and must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .models import ModelSpec, PerturbationSpec, check_theta, \
    sample_categorical_rows
from .oracle import forward_score_batch

Array = np.ndarray


@dataclass
class FisherEstimate:
    """Monte Carlo estimate of a (per-observation) Fisher information matrix."""

    matrix: Array           # (d, d)
    se: Array               # (d, d) entrywise standard errors
    n: int
    n_replicates: int
    epsilon: float | None
    seed: int

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.matrix))


@dataclass
class LossPoint:
    epsilon: float
    loss: Array             # (d, d) estimate of I - I_eps
    se: Array               # (d, d)
    n_replicates: int

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.loss))

    @property
    def frobenius_se(self) -> float:
        m = np.linalg.norm(self.loss)
        if m == 0.0:
            return float(np.linalg.norm(self.se))
        return float(np.sqrt(np.sum((self.loss / m) ** 2 * self.se ** 2)))


@dataclass
class LossCurve:
    points: list
    fisher_exact: FisherEstimate
    slope: float            # log-log slope over the smallest 4 tolerances
    slope_epsilons: list


@dataclass
class MissingInfoCheck:
    conditional: Array      # route A: summed conditional score differences
    conditional_se: Array
    direct: Array           # route B: difference of score outer products
    direct_se: Array
    fisher_exact: Array     # mean exact-score outer product from route B
    epsilon: float
    n: int
    n_replicates: int

    @property
    def discrepancy(self) -> Array:
        return self.conditional - self.direct

    @property
    def combined_se(self) -> Array:
        return np.sqrt(self.conditional_se ** 2 + self.direct_se ** 2)


# ---------------------------------------------------------------------------
# batched simulation helpers


def _simulate_paths(model: ModelSpec, theta: Array, reps: int, n: int,
                    seed: int) -> Array:
    """(reps, n) hidden paths, one vectorized categorical draw per step."""
    p = np.asarray(model.transition_matrix(theta), dtype=float)
    init = np.asarray(model.initial_dist(theta), dtype=float)
    path_rng = rngmod.stream(seed, "paths")
    states = np.empty((reps, n), dtype=np.int64)
    states[:, 0] = sample_categorical_rows(
        np.broadcast_to(init, (reps, init.shape[0])), path_rng)
    for t in range(1, n):
        states[:, t] = sample_categorical_rows(p[states[:, t - 1]], path_rng)
    return states


def _coupled_obs(model: ModelSpec, theta: Array, states: Array,
                 pert: PerturbationSpec | None, seed: int):
    """Clean observations and, when perturbed, their coupled noisy twins."""
    reps, n = states.shape
    obs_rng = rngmod.stream(seed, "obs")
    y = model.obs_sampler(theta, states.reshape(-1), obs_rng)[:, 0].reshape(reps, n)
    if pert is None or pert.is_exact:
        return y, y
    z = pert.noise(1, reps * n, rngmod.stream(seed, "pertnoise"))[:, 0]
    return y, y + z.reshape(reps, n)


def _outer_mean_se(samples: Array):
    """(R, d) vectors -> mean outer product (d, d) and entrywise SEs."""
    outers = samples[:, :, None] * samples[:, None, :]
    mean = outers.mean(axis=0)
    se = outers.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    return mean, se


# ---------------------------------------------------------------------------
# public estimators


def estimate_fisher(model: ModelSpec, theta, *, n: int, n_replicates: int,
                    seed: int, pert: PerturbationSpec | None = None) -> FisherEstimate:
    """Average ``score score^T / n`` over simulated replicates.

    With a perturbation the replicates come from the perturbed model and the
    scores are computed under it; at ``epsilon == 0`` this reduces exactly to
    the unperturbed computation (same streams, same values).
    """
    theta = check_theta(model, theta)
    states = _simulate_paths(model, theta, n_replicates, n, seed)
    _, y = _coupled_obs(model, theta, states, pert, seed)
    eff = None if (pert is None or pert.is_exact) else pert
    _, scores = forward_score_batch(model, theta, y, pert=eff)
    per_rep = scores / math.sqrt(n)
    matrix, se = _outer_mean_se(per_rep)
    matrix = 0.5 * (matrix + matrix.T)
    return FisherEstimate(matrix=matrix, se=se, n=n,
                          n_replicates=n_replicates,
                          epsilon=None if pert is None else float(pert.epsilon),
                          seed=int(seed))


def _conditional_score_diffs(model: ModelSpec, theta: Array,
                             pert: PerturbationSpec, reps: int, length: int,
                             boundaries, seed: int):
    """Mixed-sequence scores across clean/noisy boundaries.

    A boundary ``b`` scores the sequence whose first ``b`` slots hold clean
    observations (exact channel) and the rest their coupled noisy twins
    (perturbed channel).  Returns ``{b: scores (R, d)}``.
    """
    states = _simulate_paths(model, theta, reps, length, seed)
    y, y_eps = _coupled_obs(model, theta, states, pert, seed)
    out = {}
    for b in boundaries:
        mask = np.arange(length) >= b          # noisy slots
        obs = np.where(mask[None, :], y_eps, y)
        _, scores = forward_score_batch(model, theta, obs, pert=pert,
                                        perturbed_steps=mask)
        out[b] = scores
    return out


def loss_point(model: ModelSpec, theta, epsilon: float, *, window: int = 32,
               n_replicates: int = 4000, seed: int = 0,
               kernel: str = "uniform", norm: str = "linf") -> LossPoint:
    """Coupled estimate of ``I - I_eps`` at a single tolerance.

    The loss is the mean outer product of the conditional score difference
    (mean zero by construction) at the centre of a ``2*window + 1`` window;
    see the module docstring for why this beats differencing two
    independent Fisher estimates at small tolerances.
    """
    theta = check_theta(model, theta)
    if not epsilon > 0:
        raise ValueError("tolerance must be positive")
    length = 2 * window + 1
    centre = window
    pert = PerturbationSpec(epsilon=float(epsilon), kernel=kernel, norm=norm)
    scores = _conditional_score_diffs(
        model, theta, pert, n_replicates, length,
        boundaries=(centre, centre + 1), seed=seed)
    delta = scores[centre + 1] - scores[centre]
    loss, se = _outer_mean_se(delta)
    loss = 0.5 * (loss + loss.T)
    return LossPoint(epsilon=float(epsilon), loss=loss, se=se,
                     n_replicates=n_replicates)


def information_loss_curve(model: ModelSpec, theta, epsilons, *,
                           window: int = 32, n_replicates: int = 4000,
                           seed: int = 0, kernel: str = "uniform",
                           norm: str = "linf",
                           fisher_n: int = 200,
                           fisher_replicates: int = 2000) -> LossCurve:
    """Estimate ``I - I_eps`` per tolerance plus the small-eps scaling slope.

    One ``loss_point`` per tolerance (seeds derived from ``seed`` by
    position in the sorted tolerance list); the slope is the least-squares
    log-log fit over the four smallest tolerances.
    """
    theta = check_theta(model, theta)
    epsilons = sorted(float(e) for e in epsilons)
    if any(e <= 0 for e in epsilons):
        raise ValueError("tolerances must be positive")
    fisher_exact = estimate_fisher(model, theta, n=fisher_n,
                                   n_replicates=fisher_replicates,
                                   seed=rngmod.derive_seed(seed, "exact"))
    points = [
        loss_point(model, theta, eps, window=window,
                   n_replicates=n_replicates,
                   seed=rngmod.derive_seed(seed, "loss", i),
                   kernel=kernel, norm=norm)
        for i, eps in enumerate(epsilons)
    ]
    small = points[:4]
    xs = np.log([p.epsilon for p in small])
    ys = np.log([max(p.frobenius, 1e-300) for p in small])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(small) >= 2 else math.nan
    return LossCurve(points=points, fisher_exact=fisher_exact, slope=slope,
                     slope_epsilons=[p.epsilon for p in small])


def missing_information_check(model: ModelSpec, theta, epsilon: float, *,
                              n: int = 8, n_replicates: int = 20000,
                              seed: int = 0, kernel: str = "uniform",
                              norm: str = "linf") -> MissingInfoCheck:
    """Two independent estimates of ``I_n - I_n^eps`` on a short horizon.

    Route A sums conditional score-difference outer products over every
    position (full conditioning -- no window truncation is needed at this
    horizon).  Route B, from an independent replicate batch, differences the
    full-sequence score outer products of the coupled clean/noisy series.
    The two must agree within Monte Carlo error; their telescoping identity
    is exact at any horizon under stationary initialization.
    """
    theta = check_theta(model, theta)
    if n > 8:
        raise ValueError(f"short-horizon check requires n <= 8, got {n}")
    if model.n_states > 3:
        raise ValueError("short-horizon check requires at most 3 states")
    pert = PerturbationSpec(epsilon=float(epsilon), kernel=kernel, norm=norm)

    # route A: conditional differences, boundaries 0..n
    scores = _conditional_score_diffs(
        model, theta, pert, n_replicates, n, boundaries=range(n + 1),
        seed=rngmod.derive_seed(seed, "route-a"))
    d = scores[0].shape[1]
    per_rep = np.zeros((n_replicates, d, d))
    for b in range(1, n + 1):
        delta = scores[b] - scores[b - 1]
        per_rep += delta[:, :, None] * delta[:, None, :]
    per_rep /= n
    cond = per_rep.mean(axis=0)
    cond_se = per_rep.std(axis=0, ddof=1) / math.sqrt(n_replicates)

    # route B: direct coupled difference, independent batch
    scores_b = _conditional_score_diffs(
        model, theta, pert, n_replicates, n, boundaries=(0, n),
        seed=rngmod.derive_seed(seed, "route-b"))
    s_clean, s_noisy = scores_b[n], scores_b[0]
    outer_clean = s_clean[:, :, None] * s_clean[:, None, :]
    outer_noisy = s_noisy[:, :, None] * s_noisy[:, None, :]
    diff = (outer_clean - outer_noisy) / n
    direct = diff.mean(axis=0)
    direct_se = diff.std(axis=0, ddof=1) / math.sqrt(n_replicates)
    fisher_exact = outer_clean.mean(axis=0) / n

    return MissingInfoCheck(
        conditional=0.5 * (cond + cond.T), conditional_se=cond_se,
        direct=0.5 * (direct + direct.T), direct_se=direct_se,
        fisher_exact=fisher_exact, epsilon=float(epsilon), n=n,
        n_replicates=n_replicates)
