"""Quantile survival times, treatment-efficacy ratios and their covariance.

For a fitted Weibull PH model the quantile survival time of a single
marker group has a closed form; a combined group ({0,1} or {1,2}) mixes
the component survival curves at the probability level first, so its
quantile solves

    p * S_a(t) + (1 - p) * S_b(t) = tau

by bracketed root-finding. The efficacy measure is the ratio of quantile
survival times between the treatment and control arms, which does not
depend on baseline covariates. Variances propagate by the delta method;
combined groups use implicit-function derivatives of the mixture equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weibull import ARM_CONTROL, ARM_RX, WeibullPHFit, design_matrix

GROUP_LABELS = ("0", "1", "2", "01", "12")
ARM_LABELS = ("Rx", "C")
_PAIR_COMPONENTS = {"01": (0, 1), "12": (1, 2)}


@dataclass(frozen=True)
class QuantileSpec:
    """Survival probability tau at which quantile times are taken."""

    tau: float

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class GroupPrevalence:
    """Marker prevalences inside the combined groups, pooled over arms."""

    p0_in_01: float
    p1_in_12: float

    def __post_init__(self):
        for name in ("p0_in_01", "p1_in_12"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1), got {v}")

    @classmethod
    def from_counts(cls, n0, n1, n2):
        return cls(p0_in_01=n0 / (n0 + n1), p1_in_12=n1 / (n1 + n2))

    def for_pair(self, pair):
        return self.p0_in_01 if pair == "01" else self.p1_in_12


@dataclass
class QuantileEfficacy:
    """Quantile times, log efficacy ratios and their delta-method covariance.

    ``nu`` is indexed [group, arm] with groups (0, 1, 2, 01, 12) and arms
    (Rx, C); ``log_r`` follows the same group order. The combined-group
    ratios always lie between their component ratios.
    """

    nu: np.ndarray
    log_r: np.ndarray
    vcov_log_r: np.ndarray
    tau: float

    @property
    def se_log_r(self):
        return np.sqrt(np.clip(np.diag(self.vcov_log_r), 0.0, None))


def _arm_code(arm):
    if arm in (ARM_RX, ARM_CONTROL):
        return arm
    if arm == "Rx":
        return ARM_RX
    if arm == "C":
        return ARM_CONTROL
    raise ValueError(f"arm must be 0/1 or 'C'/'Rx', got {arm!r}")


def _design_row(fit, group, arm, x_ref):
    p = len(fit.beta) - 5
    if x_ref is None:
        x_ref = np.zeros(p)
    x_ref = np.atleast_1d(np.asarray(x_ref, dtype=float))
    if x_ref.size != p:
        raise ValueError(f"x_ref must have length {p}, got {x_ref.size}")
    row = design_matrix(np.array([_arm_code(arm)]), np.array([group]),
                        x_ref[None, :] if p else None)
    return row[0]


def single_group_quantile(fit: WeibullPHFit, group, arm, spec: QuantileSpec,
                          x_ref=None):
    """Closed-form quantile time nu = lambda * (-log(tau) / theta)^(1/k)."""
    x = _design_row(fit, group, arm, x_ref)
    theta = np.exp(x @ fit.beta)
    return float(fit.scale * (-np.log(spec.tau) / theta) ** (1.0 / fit.shape))


def _bracketed_root(f, lo, hi, rtol=1e-12, max_iter=200):
    """Root of f on [lo, hi]: bisection interleaved with secant refinement."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise RuntimeError("root is not bracketed")
    for _ in range(max_iter):
        if hi - lo <= rtol * max(abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        # secant (false-position) step inside the updated bracket
        denom = fhi - flo
        if denom != 0.0:
            x = (lo * fhi - hi * flo) / denom
            if lo < x < hi:
                fx = f(x)
                if fx == 0.0:
                    return x
                if flo * fx < 0:
                    hi, fhi = x, fx
                else:
                    lo, flo = x, fx
    return 0.5 * (lo + hi)


def mixture_quantile(fit: WeibullPHFit, pair, arm, spec: QuantileSpec,
                     prevalence: GroupPrevalence, x_ref=None):
    """Quantile time of the combined group, mixing survival curves first."""
    if pair not in _PAIR_COMPONENTS:
        raise ValueError(f"pair must be '01' or '12', got {pair!r}")
    ga, gb = _PAIR_COMPONENTS[pair]
    p = prevalence.for_pair(pair)
    tau = spec.tau
    lam, k = fit.scale, fit.shape
    theta_a = np.exp(_design_row(fit, ga, arm, x_ref) @ fit.beta)
    theta_b = np.exp(_design_row(fit, gb, arm, x_ref) @ fit.beta)

    def surv_mix(t):
        base = (t / lam) ** k
        return p * np.exp(-theta_a * base) + (1 - p) * np.exp(-theta_b * base)

    nu_a = single_group_quantile(fit, ga, arm, spec, x_ref)
    nu_b = single_group_quantile(fit, gb, arm, spec, x_ref)
    lo, hi = min(nu_a, nu_b), max(nu_a, nu_b)
    if hi - lo <= 1e-12 * hi:
        return lo
    root = _bracketed_root(lambda t: surv_mix(t) - tau, lo, hi)
    resid = surv_mix(root) - tau
    if abs(resid) > 1e-10:
        raise RuntimeError(f"mixture quantile residual {resid:.3e} exceeds 1e-10")
    return float(root)


def _dlognu_single(fit, group, arm, x_ref, nu):
    """d log(nu) / d(log_scale, log_shape, beta) for a single group."""
    x = _design_row(fit, group, arm, x_ref)
    k = fit.shape
    grad = np.empty(2 + len(fit.beta))
    grad[0] = 1.0
    grad[1] = -(np.log(nu) - fit.log_scale)
    grad[2:] = -x / k
    return grad


def _dlognu_mixture(fit, pair, arm, x_ref, nu, prevalence):
    """Implicit-function derivative of the mixture quantile.

    With F(t, psi) = p*S_a + (1-p)*S_b - tau, uses
    d(nu)/d(psi) = -(dF/dpsi) / (dF/dt) evaluated at the root.
    """
    ga, gb = _PAIR_COMPONENTS[pair]
    p = prevalence.for_pair(pair)
    k = fit.shape
    lognu = np.log(nu)
    n_par = 2 + len(fit.beta)
    F_t = 0.0
    F_psi = np.zeros(n_par)
    for g, w in ((ga, p), (gb, 1.0 - p)):
        x = _design_row(fit, g, arm, x_ref)
        u = k * (lognu - fit.log_scale) + x @ fit.beta
        eS = np.exp(u) * np.exp(-np.exp(u))  # e^u * S
        F_t += w * (-eS) * k / nu
        F_psi[0] += w * (-eS) * (-k)
        F_psi[1] += w * (-eS) * k * (lognu - fit.log_scale)
        F_psi[2:] += w * (-eS) * x
    return -F_psi / (F_t * nu)


def efficacy_table(fit: WeibullPHFit, spec: QuantileSpec,
                   prevalence: GroupPrevalence, x_ref=None) -> QuantileEfficacy:
    """Quantile times for all five groups, log ratios and their covariance.

    The five log ratios are identical for any choice of reference
    covariates; quantile times themselves are reported at ``x_ref``.
    """
    nu = np.empty((5, 2))
    jac = np.zeros((5, 2 + len(fit.beta)))
    log_r = np.empty(5)
    arms = (ARM_RX, ARM_CONTROL)
    for gi, group in enumerate((0, 1, 2)):
        for ai, arm in enumerate(arms):
            nu[gi, ai] = single_group_quantile(fit, group, arm, spec, x_ref)
        log_r[gi] = np.log(nu[gi, 0] / nu[gi, 1])
        jac[gi] = (_dlognu_single(fit, group, ARM_RX, x_ref, nu[gi, 0])
                   - _dlognu_single(fit, group, ARM_CONTROL, x_ref, nu[gi, 1]))
    for gi, pair in ((3, "01"), (4, "12")):
        for ai, arm in enumerate(arms):
            nu[gi, ai] = mixture_quantile(fit, pair, arm, spec, prevalence, x_ref)
        log_r[gi] = np.log(nu[gi, 0] / nu[gi, 1])
        jac[gi] = (_dlognu_mixture(fit, pair, ARM_RX, x_ref, nu[gi, 0], prevalence)
                   - _dlognu_mixture(fit, pair, ARM_CONTROL, x_ref, nu[gi, 1],
                                     prevalence))
    vcov = jac @ fit.vcov @ jac.T
    vcov = (vcov + vcov.T) / 2.0
    return QuantileEfficacy(nu=nu, log_r=log_r, vcov_log_r=vcov, tau=spec.tau)


def mixture_hazard_ratio(components, p, t):
    """Hazard ratio of a two-component mixture population over a time grid.

    ``components`` is a pair of (lam, k, theta_C, theta_Rx) tuples. Even
    when both components share a constant hazard ratio, the mixture's
    hazard ratio varies with time and can leave the interval spanned by
    the component ratios; this operation exists to demonstrate that.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("time grid must be positive")
    if not 0 <= p <= 1:
        raise ValueError(f"prevalence must be in [0, 1], got {p}")

    def mix_hazard(arm_idx):
        dens = np.zeros_like(t)
        surv = np.zeros_like(t)
        for w, comp in ((p, components[0]), (1.0 - p, components[1])):
            lam, k, theta_c, theta_rx = comp
            theta = theta_rx if arm_idx == 0 else theta_c
            base = (t / lam) ** k
            s = np.exp(-theta * base)
            h = theta * k * t ** (k - 1) / lam ** k
            surv += w * s
            dens += w * h * s
        return dens / surv

    return mix_hazard(0) / mix_hazard(1)
