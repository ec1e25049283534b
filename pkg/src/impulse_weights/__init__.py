"""Weight functions behind linear impulse-response estimands.

The top-level namespace re-exports the estimators most scripts need; the
simulation lab lives in :mod:`impulse_weights.lab`.
"""
from .amde import (AmdeResult, RieszSpec, delta_change_estimate, discrete_treatment_effect,
                   orthogonal_ad, regression_plugin_ad, weighted_outcome_estimate)
from .errors import *  # noqa: F401,F403
from .numcore import (ECDF, Dataset, KernelDensity, RegressionFit, RngStream, Series, ecdf, kde,
                      kde_deriv, local_linear, ols, residualize, rng_stream)
from .projections import (LpResult, QuadLpResult, local_projection, partially_linear_projection,
                          proxy_projection, quadratic_projection, state_dependent_projection)
from .weights import (StepWeightFunction, WeightReport, covariate_weights, narrative_weights,
                      observed_weights, proxy_weights, weight_integral)

__version__ = "0.1.0"
