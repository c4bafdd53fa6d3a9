"""Covariate-adaptive randomization with damped imbalance feedback.

Subpackages follow the pipeline: ``allocation`` (probability rules),
``features`` (covariate feature maps), ``engine`` (the sequential trial
state machine), ``analysis`` (projections and treatment-effect tests),
``scenario`` / ``harness`` (declarative Monte Carlo experiments and exact
small-n oracles), and ``service`` (a persistent HTTP allocation server).
"""

__version__ = "0.1.0"

from .allocation import AllocationFunction, build_allocation, check_allocation
from .engine import Trial, TrialConfig, init_trial
from .features import FeatureMap, discrete_map, linear_map, scale_normalizer

__all__ = [
    "AllocationFunction",
    "build_allocation",
    "check_allocation",
    "FeatureMap",
    "linear_map",
    "discrete_map",
    "scale_normalizer",
    "Trial",
    "TrialConfig",
    "init_trial",
    "__version__",
]
