"""
kinkscan: detection and localisation of kinks in random-design regression
with long-range dependent errors or design.

The pipeline is: simulate or load (X, Y), map X to the F-scale, scan the
standardised smoothed third derivative for exceedances, bracket each kink
between the extrema of the profile and take the zero crossing in between.
"""
from .errors import *  # noqa: F401,F403
from .kernel import KinkKernel, build_kernel, eval_kernel, kappa_oracle, kappa_true, kernel_moment, verify_kernel
from .lrd import LinearProcessSpec, autocovariance, lrd_constants, partial_sum_variance, simulate_lrd
from .scenario import (DesignA, DesignB, Dataset, KinkFunction, ScaleSpec, Scenario, SmoothPart,
                       empirical_cdf, empirical_quantile, generate_dataset, kink_images)
from .estimator import EstimatorConfig, decompose, detect_kinks, estimate, kappa_hat, kappa_profile, upsilon
from .experiments import (gumbel_cdf, gumbel_norming, hermite_h1, run_clt_study,
                          run_null_calibration, run_rate_study)

__version__ = "0.1.0"
