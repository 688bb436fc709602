"""Four efficacy contrasts, simultaneous confidence intervals and targeting.

The contrasts compare log efficacy ratios between marker groups and their
combinations, in the fixed order

    (1,2):0   2:(0,1)   1:0   2:1

Two-sided simultaneous intervals on the four contrasts carry out all eight
one-sided tests (each contrast and its reciprocal); an interval bound away
from zero rejects the hypothesis in that direction. The equicoordinate
critical value and the adjusted p-value come from the joint normal
distribution of the standardized contrasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mvnprob import equicoordinate_quantile, mvn_rect_prob
from .quantile import QuantileEfficacy

CONTRAST_NAMES = ("(1,2):0", "2:(0,1)", "1:0", "2:1")
RECIPROCAL_NAMES = ("0:(1,2)", "(0,1):2", "0:1", "1:2")

# rows map (log r0, log r1, log r2, log r01, log r12) onto the contrasts
CONTRAST_MATRIX = np.array([
    [-1.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, -1.0, 0.0],
    [-1.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 1.0, 0.0, 0.0],
])

TARGET_NONE = "none"
TARGET_INDETERMINATE = "indeterminate"


@dataclass
class CE4Result:
    """Estimates, simultaneous intervals and the targeted-subgroup call."""

    log_kappa: np.ndarray
    vcov: np.ndarray
    se: np.ndarray
    q: float
    sci: np.ndarray  # (4, 2) lower/upper on the log scale
    p_ce4: float
    rejected: frozenset
    targeted: str
    targeted_prop: float
    max_eff: float | None
    max_eff_log: float | None


def ce4_contrasts(eff: QuantileEfficacy):
    """Contrast estimates and covariance from the efficacy table."""
    log_kappa = CONTRAST_MATRIX @ eff.log_r
    vcov = CONTRAST_MATRIX @ eff.vcov_log_r @ CONTRAST_MATRIX.T
    return log_kappa, (vcov + vcov.T) / 2.0


def simultaneous_intervals(log_kappa, vcov, alpha, rng_seed=0):
    """Equicoordinate simultaneous CIs, adjusted p-value and rejections.

    Returns (q, sci, p_ce4, rejected) where ``rejected`` holds the names
    of the one-sided hypotheses whose interval bound excludes zero:
    the contrast name for an upward rejection (kappa > 1), the reciprocal
    name for a downward one.
    """
    log_kappa = np.asarray(log_kappa, dtype=float)
    vcov = np.asarray(vcov, dtype=float)
    var = np.diag(vcov)
    for g, v in enumerate(var):
        if v <= 0:
            raise ValueError(
                f"contrast {CONTRAST_NAMES[g]} has degenerate variance {v:.3e}")
    se = np.sqrt(var)
    corr = vcov / np.outer(se, se)
    if alpha >= 1.0:
        q = 0.0  # every interval collapses to its point estimate
    else:
        q = equicoordinate_quantile(corr, 1.0 - alpha, rng_seed=rng_seed)
    sci = np.column_stack([log_kappa - q * se, log_kappa + q * se])
    z_max = float(np.max(np.abs(log_kappa) / se))
    p_ce4 = 1.0 - mvn_rect_prob(corr, z_max, rng_seed=rng_seed)
    rejected = set()
    for g in range(4):
        if sci[g, 0] > 0:
            rejected.add(CONTRAST_NAMES[g])
        elif sci[g, 1] < 0:
            rejected.add(RECIPROCAL_NAMES[g])
    return q, sci, p_ce4, frozenset(rejected)


def decide_target(rejected, log_kappa, group_counts):
    """Map the rejection pattern to a targeted genotype subgroup.

    The table requires a coherent pair of rejections before naming a
    group; lone or conflicting rejections come back indeterminate so the
    raw pattern can still be inspected. Returns
    (targeted, targeted_prop, max_eff, max_eff_log).
    """
    up = [CONTRAST_NAMES[g] in rejected for g in range(4)]
    down = [RECIPROCAL_NAMES[g] in rejected for g in range(4)]
    n0, n1, n2 = (int(c) for c in group_counts)
    total = n0 + n1 + n2

    if not rejected:
        targeted = TARGET_NONE
    elif up[0] and up[2] and not down[3]:
        targeted = "{1,2}"
    elif up[1] and up[3] and not up[2]:
        targeted = "{2}"
    elif down[0] and down[2] and not up[3]:
        targeted = "{0}"
    elif down[1] and down[3] and not down[2]:
        targeted = "{0,1}"
    else:
        targeted = TARGET_INDETERMINATE

    members = {"{0}": (n0,), "{2}": (n2,), "{0,1}": (n0, n1), "{1,2}": (n1, n2)}
    prop = sum(members.get(targeted, ())) / total if total else 0.0

    significant = [g for g in range(4) if up[g] or down[g]]
    if significant:
        max_eff_log = float(np.max(np.abs(np.asarray(log_kappa)[significant])))
        max_eff = float(np.exp(max_eff_log))
    else:
        max_eff = max_eff_log = None
    return targeted, prop, max_eff, max_eff_log


def ce4_inference(eff: QuantileEfficacy, alpha, group_counts,
                  rng_seed=0) -> CE4Result:
    """Full within-marker inference from an efficacy table."""
    log_kappa, vcov = ce4_contrasts(eff)
    q, sci, p_ce4, rejected = simultaneous_intervals(log_kappa, vcov, alpha,
                                                     rng_seed=rng_seed)
    targeted, prop, max_eff, max_eff_log = decide_target(rejected, log_kappa,
                                                         group_counts)
    return CE4Result(
        log_kappa=log_kappa,
        vcov=vcov,
        se=np.sqrt(np.diag(vcov)),
        q=q,
        sci=sci,
        p_ce4=p_ce4,
        rejected=rejected,
        targeted=targeted,
        targeted_prop=prop,
        max_eff=max_eff,
        max_eff_log=max_eff_log,
    )
