"""Model and perturbation primitives.

A :class:`ModelSpec` bundles everything the rest of the package needs to know
about a hidden Markov model with a finite latent chain: transition matrix,
initial distribution, an observation sampler, and (when tractable) vectorized
emission-density callables plus their parameter Jacobians.  Models whose
emission density is unavailable (the alpha-stable regime model) still work
everywhere that only requires forward simulation.

A :class:`PerturbationSpec` describes the observation-space perturbation used
by the ABC constructions: a kernel (``uniform`` ball indicator or ``gaussian``
smooth weight), a tolerance ``epsilon`` and a ball norm.  ``perturb_model``
produces the corresponding perturbed model: the observation channel gains
additive ``epsilon``-scaled kernel noise, and for tractable 1-D emissions the
perturbed density is closed-form:

    uniform  kernel: g_eps(y | x) = (F(y + eps | x) - F(y - eps | x)) / (2 eps)
    gaussian kernel: g_eps(y | x) = emission density convolved with N(0, eps^2)

with ``F`` the per-state emission CDF.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import ndtr

from . import kernels, stable
from .errors import ConfigError

Array = np.ndarray


# ---------------------------------------------------------------------------
# parameter vectors


@dataclass(frozen=True)
class ParameterVector:
    """A parameter value together with the box it must live in."""

    values: Array
    box: Array

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        box = np.asarray(self.box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError(f"box must have shape (d, 2), got {box.shape}")
        if box.shape[0] != values.shape[0]:
            raise ValueError(
                f"parameter has {values.shape[0]} coordinates but box has "
                f"{box.shape[0]} rows")
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("every box row must satisfy lo < hi")
        if np.any(values < box[:, 0]) or np.any(values > box[:, 1]):
            bad = int(np.argmax((values < box[:, 0]) | (values > box[:, 1])))
            raise ValueError(
                f"parameter coordinate {bad} = {values[bad]} outside box "
                f"[{box[bad, 0]}, {box[bad, 1]}]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "box", box)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationSpec:
    """Observation-space perturbation: kernel, tolerance and ball norm.

    ``epsilon == 0`` is an allowed boundary meaning "no perturbation"; it is
    useful for identities of the form "perturbed quantity at eps = 0 equals
    the exact quantity".
    """

    epsilon: float
    kernel: str = "uniform"
    norm: str = "linf"

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.kernel not in kernels.KERNELS:
            raise ValueError(
                f"unknown kernel {self.kernel!r}; expected one of {kernels.KERNELS}")
        if self.norm not in kernels.NORMS:
            raise ValueError(
                f"unknown norm {self.norm!r}; expected one of {kernels.NORMS}")

    @property
    def is_exact(self) -> bool:
        return self.epsilon == 0.0

    def log_ball_volume(self, m: int) -> float:
        if self.kernel != "uniform":
            raise ValueError("ball volume is defined for the uniform kernel only")
        return kernels.log_ball_volume(self.epsilon, m, self.norm)

    def noise(self, m: int, size: int, rng: np.random.Generator) -> Array:
        """Draw ``size`` perturbation offsets (already scaled by epsilon)."""
        if self.epsilon == 0.0:
            return np.zeros((size, m))
        if self.kernel == "uniform":
            return self.epsilon * kernels.ball_uniform(m, size, rng, self.norm)
        return self.epsilon * rng.standard_normal((size, m))


# ---------------------------------------------------------------------------
# model container


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A finite-state hidden Markov model with optional tractable emissions.

    Emission callables are vectorized over observations: given ``theta`` and a
    1-D array of ``n`` observation values they return an ``(n, K)`` array with
    one column per latent state.  Jacobian callables return ``(d, n, K)``.
    All of them are optional; samplers alone support simulation and
    particle-based likelihood work.
    """

    name: str
    param_dim: int
    obs_dim: int
    theta_box: Array
    n_states: int
    hyper: dict
    transition_matrix: Callable[[Array], Array]
    initial_dist: Callable[[Array], Array]
    obs_sampler: Callable[[Array, Array, np.random.Generator], Array]
    emission_density: Callable | None = None
    emission_interval_prob: Callable | None = None
    emission_smooth_density: Callable | None = None
    emission_density_jac: Callable | None = None
    emission_interval_prob_jac: Callable | None = None
    emission_smooth_density_jac: Callable | None = None
    transition_matrix_jac: Callable | None = None
    initial_dist_jac: Callable | None = None
    perturbation: PerturbationSpec | None = None
    state_kind: str = "finite"

    @property
    def tractable(self) -> bool:
        """True when a vectorized emission density is available."""
        return self.emission_density is not None


def check_theta(model: ModelSpec, theta) -> Array:
    """Validate theta against the model's box, returning a float array."""
    if isinstance(theta, ParameterVector):
        theta = theta.values
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != model.param_dim:
        raise ValueError(
            f"model {model.name!r} expects {model.param_dim} parameters, "
            f"got {theta.shape[0]}")
    box = model.theta_box
    low = theta < box[:, 0]
    high = theta > box[:, 1]
    if np.any(low | high):
        bad = int(np.argmax(low | high))
        raise ValueError(
            f"theta[{bad}] = {theta[bad]} outside box "
            f"[{box[bad, 0]}, {box[bad, 1]}] for model {model.name!r}")
    return theta


def check_transition(p: Array) -> Array:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0.0):
        raise ValueError("transition matrix has negative entries")
    rows = p.sum(axis=1)
    if not np.allclose(rows, 1.0, atol=1e-10):
        raise ValueError(f"transition rows must sum to 1, got sums {rows}")
    return p


def stationary_dist(p: Array) -> Array:
    """Stationary distribution of a stochastic matrix (unique ergodic case)."""
    p = check_transition(p)
    k = p.shape[0]
    a = np.vstack([p.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def sample_categorical_rows(probs: Array, rng: np.random.Generator) -> Array:
    """One categorical draw per row of ``probs`` (N, K), vectorized."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# ---------------------------------------------------------------------------
# perturbed models


def perturb_model(model: ModelSpec, pert: PerturbationSpec) -> ModelSpec:
    """Return the observation-perturbed version of ``model``.

    The new model's observation sampler adds ``epsilon``-scaled kernel noise;
    when the base model exposes the required closed forms (1-D observations),
    the perturbed emission density and its Jacobian are closed-form as well.
    """
    if model.perturbation is not None:
        raise ValueError(f"model {model.name!r} is already perturbed")
    base_sampler = model.obs_sampler
    m = model.obs_dim

    def obs_sampler(theta, states, rng):
        y = base_sampler(theta, states, rng)
        return y + pert.noise(m, y.shape[0], rng)

    density = model.emission_density
    density_jac = model.emission_density_jac
    if not pert.is_exact and m == 1:
        eps = pert.epsilon
        if pert.kernel == "uniform" and model.emission_interval_prob is not None:
            base_interval = model.emission_interval_prob
            base_interval_jac = model.emission_interval_prob_jac

            def density(theta, ys, _f=base_interval, _e=eps):
                return _f(theta, ys - _e, ys + _e) / (2.0 * _e)

            density_jac = None
            if base_interval_jac is not None:
                def density_jac(theta, ys, _f=base_interval_jac, _e=eps):
                    return _f(theta, ys - _e, ys + _e) / (2.0 * _e)
        elif pert.kernel == "gaussian" and model.emission_smooth_density is not None:
            base_smooth = model.emission_smooth_density
            base_smooth_jac = model.emission_smooth_density_jac

            def density(theta, ys, _f=base_smooth, _e=eps):
                return _f(theta, ys, _e)

            density_jac = None
            if base_smooth_jac is not None:
                def density_jac(theta, ys, _f=base_smooth_jac, _e=eps):
                    return _f(theta, ys, _e)
        else:
            density = None
            density_jac = None
    elif not pert.is_exact:
        density = None
        density_jac = None

    return replace(
        model,
        obs_sampler=obs_sampler,
        emission_density=density,
        emission_density_jac=density_jac,
        emission_interval_prob=None,
        emission_interval_prob_jac=None,
        emission_smooth_density=None,
        emission_smooth_density_jac=None,
        perturbation=pert,
    )


# ---------------------------------------------------------------------------
# built-in models


_GAUSS_PARAM_MODES = ("mean", "scale", "mean_scale")

_FINITE_GAUSSIAN_DEFAULTS = {
    "n_states": 2,
    "transition": ((0.7, 0.3), (0.3, 0.7)),
    "param": "mean",
    "mu_coeff": (-1.0, 1.0),
    "mu": (-1.0, 1.0),
    "sigma": 1.0,
    "initial": "stationary",
}

_TWO_STATE_STABLE_DEFAULTS = {
    "alpha": 1.8,
    "state_values": (-1.0, 1.0),
    "transition": ((0.95, 0.05), (0.2, 0.8)),
    "initial": "stationary",
}


def _merge_hyper(name: str, defaults: dict, hyper: dict | None) -> dict:
    merged = dict(defaults)
    for key, value in (hyper or {}).items():
        if key not in defaults:
            raise ConfigError(
                f"unknown hyper key '{key}' for model '{name}' "
                f"(known: {sorted(defaults)})")
        merged[key] = value
    return merged


def _initial_from_hyper(hyper: dict, transition: Array) -> Array:
    if hyper["initial"] == "stationary":
        return stationary_dist(transition)
    init = np.asarray(hyper["initial"], dtype=float)
    if init.shape != (transition.shape[0],) or np.any(init < 0) \
            or not math.isclose(init.sum(), 1.0, abs_tol=1e-10):
        raise ConfigError("hyper key 'initial' must be 'stationary' or a "
                          "probability vector over the states")
    return init


def _norm_pdf(z: Array) -> Array:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _finite_gaussian(hyper: dict | None, theta_box) -> ModelSpec:
    hyper = _merge_hyper("finite_gaussian", _FINITE_GAUSSIAN_DEFAULTS, hyper)
    mode = hyper["param"]
    if mode not in _GAUSS_PARAM_MODES:
        raise ConfigError(
            f"unknown hyper value for 'param': {mode!r} "
            f"(known: {_GAUSS_PARAM_MODES})")
    k = int(hyper["n_states"])
    transition = check_transition(np.asarray(hyper["transition"], dtype=float))
    if transition.shape[0] != k:
        raise ConfigError("hyper key 'transition' shape does not match 'n_states'")
    coeff = np.asarray(hyper["mu_coeff"], dtype=float)
    mu_fixed = np.asarray(hyper["mu"], dtype=float)
    if mode in ("mean", "mean_scale") and coeff.shape != (k,):
        raise ConfigError("hyper key 'mu_coeff' must have one entry per state")
    if mode == "scale" and mu_fixed.shape != (k,):
        raise ConfigError("hyper key 'mu' must have one entry per state")
    sigma_fixed = float(hyper["sigma"])
    if sigma_fixed <= 0:
        raise ConfigError("hyper key 'sigma' must be positive")
    initial = _initial_from_hyper(hyper, transition)

    if mode == "mean":
        d = 1
        default_box = [[-3.0, 3.0]]
    elif mode == "scale":
        d = 1
        default_box = [[0.05, 5.0]]
    else:
        d = 2
        default_box = [[-3.0, 3.0], [0.05, 5.0]]

    def mu_s(theta):
        if mode == "mean":
            return coeff * theta[0], sigma_fixed
        if mode == "scale":
            return mu_fixed, float(theta[0])
        return coeff * theta[0], float(theta[1])

    def obs_sampler(theta, states, rng):
        mu, s = mu_s(theta)
        y = mu[states] + s * rng.standard_normal(states.shape[0])
        return y[:, None]

    def emission_density(theta, ys):
        mu, s = mu_s(theta)
        z = (ys[:, None] - mu[None, :]) / s
        return _norm_pdf(z) / s

    def emission_interval_prob(theta, lo, hi):
        mu, s = mu_s(theta)
        return ndtr((hi[:, None] - mu[None, :]) / s) \
            - ndtr((lo[:, None] - mu[None, :]) / s)

    def emission_smooth_density(theta, ys, sd):
        mu, s = mu_s(theta)
        s_eff = math.sqrt(s * s + sd * sd)
        z = (ys[:, None] - mu[None, :]) / s_eff
        return _norm_pdf(z) / s_eff

    # Parameter Jacobians.  With f the N(mu, s^2) density and z = (y - mu)/s:
    #   df/dmu = f z / s,     df/ds = f (z^2 - 1) / s
    # and for the interval probability I = Phi(zh) - Phi(zl):
    #   dI/dmu = -(pdf(zh) - pdf(zl)) / s,  dI/ds = -(pdf(zh) zh - pdf(zl) zl)/s.

    def emission_density_jac(theta, ys):
        mu, s = mu_s(theta)
        z = (ys[:, None] - mu[None, :]) / s
        f = _norm_pdf(z) / s
        rows = []
        if mode in ("mean", "mean_scale"):
            rows.append(f * z / s * coeff[None, :])
        if mode in ("scale", "mean_scale"):
            rows.append(f * (z * z - 1.0) / s)
        return np.stack(rows)

    def emission_interval_prob_jac(theta, lo, hi):
        mu, s = mu_s(theta)
        zh = (hi[:, None] - mu[None, :]) / s
        zl = (lo[:, None] - mu[None, :]) / s
        ph, pl = _norm_pdf(zh), _norm_pdf(zl)
        rows = []
        if mode in ("mean", "mean_scale"):
            rows.append(-(ph - pl) / s * coeff[None, :])
        if mode in ("scale", "mean_scale"):
            rows.append(-(ph * zh - pl * zl) / s)
        return np.stack(rows)

    def emission_smooth_density_jac(theta, ys, sd):
        mu, s = mu_s(theta)
        s_eff = math.sqrt(s * s + sd * sd)
        z = (ys[:, None] - mu[None, :]) / s_eff
        f = _norm_pdf(z) / s_eff
        rows = []
        if mode in ("mean", "mean_scale"):
            rows.append(f * z / s_eff * coeff[None, :])
        if mode in ("scale", "mean_scale"):
            rows.append(f * (z * z - 1.0) / s_eff * (s / s_eff))
        return np.stack(rows)

    box = np.asarray(default_box if theta_box is None else theta_box, dtype=float)
    return ModelSpec(
        name="finite_gaussian",
        param_dim=d,
        obs_dim=1,
        theta_box=box,
        n_states=k,
        hyper=hyper,
        transition_matrix=lambda theta: transition,
        initial_dist=lambda theta: initial,
        obs_sampler=obs_sampler,
        emission_density=emission_density,
        emission_interval_prob=emission_interval_prob,
        emission_smooth_density=emission_smooth_density,
        emission_density_jac=emission_density_jac,
        emission_interval_prob_jac=emission_interval_prob_jac,
        emission_smooth_density_jac=emission_smooth_density_jac,
        transition_matrix_jac=lambda theta: np.zeros((d, k, k)),
        initial_dist_jac=lambda theta: np.zeros((d, k)),
    )


def _iid_pm_theta(hyper: dict | None, theta_box) -> ModelSpec:
    hyper = _merge_hyper("iid_pm_theta", {}, hyper)
    transition = np.full((2, 2), 0.5)
    initial = np.array([0.5, 0.5])

    def obs_sampler(theta, states, rng):
        values = np.array([-theta[0], theta[0]])
        return values[states][:, None]

    box = np.asarray([[0.0, 3.0]] if theta_box is None else theta_box, dtype=float)
    return ModelSpec(
        name="iid_pm_theta",
        param_dim=1,
        obs_dim=1,
        theta_box=box,
        n_states=2,
        hyper=hyper,
        transition_matrix=lambda theta: transition,
        initial_dist=lambda theta: initial,
        obs_sampler=obs_sampler,
    )


def _two_state_alpha_stable(hyper: dict | None, theta_box) -> ModelSpec:
    hyper = _merge_hyper("two_state_alpha_stable", _TWO_STATE_STABLE_DEFAULTS, hyper)
    alpha = float(hyper["alpha"])
    values = np.asarray(hyper["state_values"], dtype=float)
    transition = check_transition(np.asarray(hyper["transition"], dtype=float))
    initial = _initial_from_hyper(hyper, transition)

    def obs_sampler(theta, states, rng):
        sigma, delta = theta
        y = stable.sample(alpha, 0.0, sigma, 0.0, states.shape[0], rng)
        return (y + values[states] + delta)[:, None]

    box = np.asarray([[0.2, 5.0], [-3.0, 3.0]] if theta_box is None else theta_box,
                     dtype=float)
    return ModelSpec(
        name="two_state_alpha_stable",
        param_dim=2,
        obs_dim=1,
        theta_box=box,
        n_states=2,
        hyper=hyper,
        transition_matrix=lambda theta: transition,
        initial_dist=lambda theta: initial,
        obs_sampler=obs_sampler,
    )


_BUILTINS = {
    "finite_gaussian": _finite_gaussian,
    "iid_pm_theta": _iid_pm_theta,
    "two_state_alpha_stable": _two_state_alpha_stable,
}


def builtin_model(name: str, hyper: dict | None = None,
                  theta_box=None) -> ModelSpec:
    """Construct a built-in model by name.

    ``finite_gaussian``
        K-state chain with Gaussian emissions.  The hyper key ``param``
        selects the parameterization: ``mean`` (theta = emission location
        factor, per-state means ``mu_coeff * theta``), ``scale`` (theta =
        emission standard deviation, fixed per-state means ``mu``) or
        ``mean_scale`` (both).
    ``iid_pm_theta``
        i.i.d. observations equal to -theta or +theta with probability 1/2
        each; no emission density (point masses), but closed-form ABC
        likelihoods live in the oracle module.
    ``two_state_alpha_stable``
        Two-state regime-switching chain with symmetric alpha-stable
        emissions centred at the state value plus a location parameter;
        theta = (sigma, delta).  Emission density intractable on purpose.
    """
    if name not in _BUILTINS:
        raise ConfigError(
            f"unknown model '{name}' (known: {sorted(_BUILTINS)})")
    return _BUILTINS[name](hyper, theta_box)


def load_model_config(source) -> ModelSpec:
    """Build a model from a JSON config file, JSON string or dict.

    Schema: ``{"model": <name>, "hyper": {...}, "theta_box": [[lo, hi], ...]}``
    with ``hyper`` and ``theta_box`` optional.
    """
    if isinstance(source, (str, Path)) and Path(source).exists():
        with open(source, "r", encoding="utf8") as fh:
            config = json.load(fh)
    elif isinstance(source, str):
        config = json.loads(source)
    elif isinstance(source, dict):
        config = dict(source)
    else:
        raise ConfigError(f"cannot read model config from {source!r}")
    if not isinstance(config, dict):
        raise ConfigError("model config must be a JSON object")
    allowed = {"model", "hyper", "theta_box"}
    for key in config:
        if key not in allowed:
            raise ConfigError(
                f"unknown model-config key '{key}' (known: {sorted(allowed)})")
    if "model" not in config:
        raise ConfigError("model config is missing required key 'model'")
    box = config.get("theta_box")
    if box is not None:
        box = np.asarray(box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
            raise ConfigError(
                "model-config key 'theta_box' must be [[lo, hi], ...] with lo < hi")
    hyper = config.get("hyper")
    if hyper is not None and not isinstance(hyper, dict):
        raise ConfigError("model-config key 'hyper' must be an object")
    return builtin_model(config["model"], hyper, box)
