"""Particle estimates of the ball probability against the exact value.

For a finite-state chain with Gaussian emissions the smeared likelihood
is computable by the forward recursion, so the particle estimator can be
checked absolutely.  This script does that on one data set: it prints
the estimator's spread around the exact answer as the particle count
grows, and the common-random-numbers surface used by the optimizer.
"""

import math

import numpy as np

from abchmm import oracle, rng, sampling, smc
from abchmm.models import PerturbationSpec, builtin_model

model = builtin_model("finite_gaussian")
theta = [0.8]
data = sampling.simulate(model, theta, 60, seed=21, with_hidden=False)
pert = PerturbationSpec(epsilon=0.5)

exact = oracle.exact_smc_target(model, theta, data, pert)
print(f"exact log ball probability at theta={theta[0]}: {exact:.6f}")
print()
print("particles   mean log-est   sd over 40 reps   collapsed")
for n_particles in (100, 400, 1600, 6400):
    vals = np.array([
        smc.smc_abc_likelihood(model, theta, data, pert, n_particles,
                               seed=rng.derive_seed(100, n_particles, r)
                               ).log_value
        for r in range(40)
    ])
    alive = vals[np.isfinite(vals)]
    print(f"{n_particles:8d}   {alive.mean():12.6f}   "
          f"{alive.std(ddof=1):.6f}         {vals.size - alive.size}/40")

print()
print("With too few particles the estimator occasionally loses every")
print("particle in one step and reports -inf -- a loud failure, never a")
print("quietly wrong number.  Among surviving runs the mean hugs the")
print("exact value while the spread shrinks; the estimator is unbiased")
print("on the probability scale, so particles buy noise reduction, not")
print("bias correction.")

# The same machinery, viewed as the optimizer sees it: one shared seed
# for every theta gives a deterministic, reproducible surface.
print()
print("common-random-numbers slice (1000 particles, one shared seed):")
for t in np.linspace(0.4, 1.2, 5):
    r = smc.smc_abc_likelihood(model, [t], data, pert, 1000,
                               seed=rng.derive_seed(5, "crn"))
    e = oracle.exact_smc_target(model, [t], data, pert)
    print(f"  theta={t:.2f}   estimate {r.log_value:10.4f}   exact {e:10.4f}")
