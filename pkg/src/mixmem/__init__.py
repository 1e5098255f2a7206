"""Mixed membership profiling of count data.

A variational Bayes engine for mixed membership models with conjugate
exponential-family components (Poisson/Gamma shipped), an EM-fitted
Poisson mixture baseline, model selection by integrated hold-out
likelihood and BIC, post-fit summary statistics, a generative-process
simulator, and a CLI that emits plot-ready result files.
"""

from mixmem.families import (
    ConjugatePrior,
    DegenerateWeightsError,
    ExponentialFamily,
    PoissonGamma,
)
from mixmem.mixed_membership import MixedMembership, sample_mixed_membership
from mixmem.mixture import PoissonMixture
from mixmem.selection import MCConfig, holdout_loglik_exact, holdout_loglik_mc, sweep
from mixmem.special import digamma

__version__ = "0.1.0"

__all__ = [
    "ConjugatePrior",
    "DegenerateWeightsError",
    "ExponentialFamily",
    "PoissonGamma",
    "MixedMembership",
    "PoissonMixture",
    "MCConfig",
    "digamma",
    "holdout_loglik_exact",
    "holdout_loglik_mc",
    "sample_mixed_membership",
    "sweep",
]
