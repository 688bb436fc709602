"""Subgroup identification for randomized trials with survival outcomes.

Workflow: fit a Weibull proportional-hazards model per marker, turn it
into quantile-survival efficacy ratios for every genotype group and
combination, form the four ordering contrasts with simultaneous
confidence intervals, and scan markers genome-wide with cross-marker
error control.
"""

from .weibull import (
    ARM_CONTROL,
    ARM_RX,
    ConvergenceError,
    DegenerateDataError,
    FitError,
    SingularHessianError,
    SubjectRecord,
    SurvivalDataset,
    WeibullPHFit,
    fit,
    gradient,
    loglik,
)
from .quantile import (
    GroupPrevalence,
    QuantileEfficacy,
    QuantileSpec,
    efficacy_table,
    mixture_hazard_ratio,
    mixture_quantile,
    single_group_quantile,
)
from .ce4 import (
    CE4Result,
    CONTRAST_NAMES,
    RECIPROCAL_NAMES,
    ce4_contrasts,
    ce4_inference,
    decide_target,
    simultaneous_intervals,
)
from .mvnprob import equicoordinate_quantile, mvn_rect_prob

__version__ = "0.1.0"

__all__ = [
    "ARM_CONTROL",
    "ARM_RX",
    "CE4Result",
    "CONTRAST_NAMES",
    "ConvergenceError",
    "DegenerateDataError",
    "FitError",
    "GroupPrevalence",
    "QuantileEfficacy",
    "QuantileSpec",
    "RECIPROCAL_NAMES",
    "SingularHessianError",
    "SubjectRecord",
    "SurvivalDataset",
    "WeibullPHFit",
    "ce4_contrasts",
    "ce4_inference",
    "decide_target",
    "efficacy_table",
    "equicoordinate_quantile",
    "fit",
    "gradient",
    "loglik",
    "mixture_hazard_ratio",
    "mixture_quantile",
    "mvn_rect_prob",
    "simultaneous_intervals",
    "single_group_quantile",
    "__version__",
]
