"""Trajectory simulation, observation noise, summaries and on-disk format.

Trajectories are stored as a CSV table with header ``t, y_1, ..., y_m`` (plus
``x`` when the hidden path is kept) and a JSON sidecar carrying metadata.
Floats are written with 17 significant digits so a save/load round trip is
bit-exact for float64.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from . import stable
from .kernels import ball_uniform  # noqa: F401  (public here per the API layout)
from .models import ModelSpec, PerturbationSpec, check_theta, sample_categorical_rows

alpha_stable = stable.sample

SUMMARIES = {
    "identity": lambda y: y,
    "abs": np.abs,
}


@dataclass
class Trajectory:
    """Observations (n, m), optional hidden state path (n,), and metadata.

    ``meta`` keys: ``seed``, ``model``, ``theta``, ``noise_epsilon``
    (None until the trajectory is noisified), ``summary`` (None until a
    summary statistic is applied).
    """

    observations: np.ndarray
    hidden: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2:
            raise ValueError(f"observations must be (n, m), got shape {obs.shape}")
        self.observations = obs
        if self.hidden is not None:
            hidden = np.asarray(self.hidden)
            if hidden.shape[0] != obs.shape[0]:
                raise ValueError("hidden path length does not match observations")
            self.hidden = hidden
        self.meta.setdefault("seed", None)
        self.meta.setdefault("model", None)
        self.meta.setdefault("theta", None)
        self.meta.setdefault("noise_epsilon", None)
        self.meta.setdefault("summary", None)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]


def simulate(model: ModelSpec, theta, n: int, seed: int,
             with_hidden: bool = True) -> Trajectory:
    """Simulate ``n`` steps of the model at ``theta``.

    The hidden path and the observation channel draw from separate streams
    derived from ``seed``, so e.g. refining the observation model does not
    shuffle the state path.
    """
    theta = check_theta(model, theta)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    path_rng = rngmod.stream(seed, "path")
    obs_rng = rngmod.stream(seed, "obs")

    p = model.transition_matrix(theta)
    cum = np.cumsum(p, axis=1)
    init = model.initial_dist(theta)
    cum_init = np.cumsum(init)
    u = path_rng.random(n)
    states = np.empty(n, dtype=np.int64)
    s = int(np.searchsorted(cum_init, u[0], side="left"))
    states[0] = min(s, len(init) - 1)
    for t in range(1, n):
        s = int(np.searchsorted(cum[states[t - 1]], u[t], side="left"))
        states[t] = min(s, p.shape[1] - 1)

    obs = model.obs_sampler(theta, states, obs_rng)
    meta = {
        "seed": int(seed),
        "model": model.name,
        "theta": [float(v) for v in theta],
        "noise_epsilon": None,
        "summary": None,
    }
    return Trajectory(observations=obs,
                      hidden=states if with_hidden else None,
                      meta=meta)


def noisify(traj: Trajectory, pert: PerturbationSpec, seed: int) -> Trajectory:
    """Add ``epsilon``-scaled kernel noise to every observation.

    This is the data-side half of the noisy ABC construction: the returned
    trajectory records ``noise_epsilon`` and refuses to be noisified twice.
    """
    if traj.meta.get("noise_epsilon") is not None:
        raise ValueError("trajectory is already noisified "
                         f"(noise_epsilon={traj.meta['noise_epsilon']})")
    noise = pert.noise(traj.obs_dim, traj.n, rngmod.stream(seed, "noisify"))
    meta = dict(traj.meta)
    meta["noise_epsilon"] = float(pert.epsilon)
    meta["noise_seed"] = int(seed)
    return Trajectory(observations=traj.observations + noise,
                      hidden=traj.hidden, meta=meta)


def apply_summary(traj: Trajectory, name: str) -> Trajectory:
    """Apply a per-observation summary statistic, recording its name."""
    if name not in SUMMARIES:
        raise ValueError(f"unknown summary '{name}' (known: {sorted(SUMMARIES)})")
    if traj.meta.get("summary") is not None:
        raise ValueError(f"trajectory already summarized with "
                         f"'{traj.meta['summary']}'")
    meta = dict(traj.meta)
    meta["summary"] = name
    return Trajectory(observations=SUMMARIES[name](traj.observations),
                      hidden=traj.hidden, meta=meta)


# ---------------------------------------------------------------------------
# disk format


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_trajectory(traj: Trajectory, path) -> Path:
    """Write ``<path>.csv`` (observations) and ``<path>.json`` (metadata)."""
    path = Path(path)
    if path.suffix != ".csv":
        path = path.with_suffix(".csv")
    header = ["t"] + [f"y_{j + 1}" for j in range(traj.obs_dim)]
    if traj.hidden is not None:
        header.append("x")
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(traj.n):
            row = [str(t)] + [_fmt(v) for v in traj.observations[t]]
            if traj.hidden is not None:
                row.append(str(int(traj.hidden[t])))
            writer.writerow(row)
    with open(_sidecar(path), "w", encoding="utf8") as fh:
        json.dump(traj.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_trajectory(path) -> Trajectory:
    """Read a trajectory written by :func:`save_trajectory`.

    A missing sidecar is tolerated: metadata comes back as unknown (None
    fields) with a warning.
    """
    path = Path(path)
    with open(path, "r", newline="", encoding="utf8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{path} does not look like a trajectory CSV "
                             f"(header {header!r})")
        has_hidden = header[-1] == "x"
        m = len(header) - 1 - (1 if has_hidden else 0)
        obs_rows, hid_rows = [], []
        for row in reader:
            obs_rows.append([float(v) for v in row[1:1 + m]])
            if has_hidden:
                hid_rows.append(int(row[-1]))
    sidecar = _sidecar(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf8") as fh:
            meta = json.load(fh)
    else:
        warnings.warn(f"no metadata sidecar next to {path}; "
                      "meta reconstructed as unknown")
        meta = {}
    return Trajectory(observations=np.asarray(obs_rows, dtype=float),
                      hidden=np.asarray(hid_rows, dtype=np.int64) if has_hidden else None,
                      meta=meta)
