"""Weibull proportional-hazards regression for right-censored trial data.

The model: hazard h(t | Trt, M, X) = h0(t) * exp(eta) with Weibull baseline
h0(t) = k t^(k-1) / lambda^k and linear predictor

    eta = b1*I(Trt=1) + b2*I(M=1) + b3*I(M=2)
        + b4*I(Trt=1)I(M=1) + b5*I(Trt=1)I(M=2) + b6'X.

Fitting maximizes the right-censored log-likelihood over the unconstrained
parameters (log lambda, log k, b1..b5, b6) by damped Newton with an exact
analytic Hessian. The reported covariance is the inverse observed information
at the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ARM_CONTROL = 0
ARM_RX = 1

MARKER_TERMS = ("trt", "m1", "m2", "trt:m1", "trt:m2")


class FitError(RuntimeError):
    """Base class for estimation failures."""


class ConvergenceError(FitError):
    """Newton iterations exhausted before reaching the gradient tolerance."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace  # list of (iteration, loglik, grad_sup_norm)


class SingularHessianError(FitError):
    """Observed information is singular; cell structure not identifiable."""


class DegenerateDataError(ValueError):
    """Data cannot support the model (e.g. an arm without any events)."""


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: observed time, event status, arm, marker and covariates."""

    subject_id: str
    time: float
    event: bool
    arm: int
    marker: int | None
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"time must be positive, got {self.time!r} "
                             f"for subject {self.subject_id!r}")
        if self.arm not in (ARM_CONTROL, ARM_RX):
            raise ValueError(f"arm must be 0 (control) or 1 (treatment), got {self.arm!r}")
        if self.marker is not None and self.marker not in (0, 1, 2):
            raise ValueError(f"marker must be 0, 1, 2 or None, got {self.marker!r}")


@dataclass
class SurvivalDataset:
    """A collection of subject records with named baseline covariates."""

    records: list[SubjectRecord]
    covariate_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.records:
            raise ValueError("dataset must contain at least one record")
        p = len(self.covariate_names)
        for rec in self.records:
            if len(rec.covariates) != p:
                raise ValueError(
                    f"subject {rec.subject_id!r} has {len(rec.covariates)} covariates, "
                    f"expected {p}")

    def __len__(self):
        return len(self.records)

    def columns(self):
        """Columnar view: (time, event, arm, marker, covariates) arrays.

        Missing markers come back as -1, missing covariates as NaN.
        """
        n = len(self.records)
        time = np.array([r.time for r in self.records])
        event = np.array([r.event for r in self.records], dtype=bool)
        arm = np.array([r.arm for r in self.records], dtype=np.int8)
        marker = np.array([-1 if r.marker is None else r.marker for r in self.records],
                          dtype=np.int8)
        p = len(self.covariate_names)
        covs = np.empty((n, p))
        for i, r in enumerate(self.records):
            covs[i] = r.covariates
        return time, event, arm, marker, covs


@dataclass
class WeibullPHFit:
    """Maximum-likelihood fit on the (log scale, log shape, beta) scale."""

    log_scale: float
    log_shape: float
    beta: np.ndarray
    vcov: np.ndarray
    loglik: float
    n_used: int
    converged: bool
    n_dropped: int = 0
    n_iter: int = 0
    covariate_names: tuple[str, ...] = ()

    @property
    def scale(self):
        return float(np.exp(self.log_scale))

    @property
    def shape(self):
        return float(np.exp(self.log_shape))

    @property
    def params(self):
        """Full parameter vector (log_scale, log_shape, beta...)."""
        return np.concatenate([[self.log_scale, self.log_shape], self.beta])

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))


def design_matrix(arm, marker, covariates=None):
    """Full design: [trt, I(M=1), I(M=2), trt*I(M=1), trt*I(M=2), X...]."""
    arm = np.asarray(arm)
    marker = np.asarray(marker)
    trt = (arm == ARM_RX).astype(float)
    m1 = (marker == 1).astype(float)
    m2 = (marker == 2).astype(float)
    cols = [trt, m1, m2, trt * m1, trt * m2]
    X = np.column_stack(cols)
    if covariates is not None and np.size(covariates):
        X = np.column_stack([X, np.asarray(covariates, dtype=float)])
    return X


def _param_vector(params):
    if isinstance(params, WeibullPHFit):
        return params.params
    return np.asarray(params, dtype=float)


def _split(params, n_beta):
    params = _param_vector(params)
    if params.size != 2 + n_beta:
        raise ValueError(f"expected {2 + n_beta} parameters, got {params.size}")
    return params[0], params[1], params[2:]


def loglik_arrays(params, time, event, X):
    """Right-censored Weibull PH log-likelihood on columnar data."""
    a, c, beta = _split(params, X.shape[1] if X.ndim == 2 else 0)
    k = np.exp(c)
    logt = np.log(time)
    u = k * (logt - a) + X @ beta
    H = np.exp(u)
    delta = event.astype(float)
    return float(np.sum(delta * (c + u - logt) - H))


def gradient_arrays(params, time, event, X):
    """Analytic score of ``loglik_arrays`` in the same parameter order."""
    a, c, beta = _split(params, X.shape[1])
    k = np.exp(c)
    logt = np.log(time)
    w = logt - a
    u = k * w + X @ beta
    H = np.exp(u)
    delta = event.astype(float)
    resid = delta - H
    g = np.empty(2 + X.shape[1])
    g[0] = -k * resid.sum()
    g[1] = delta.sum() + k * (resid * w).sum()
    g[2:] = X.T @ resid
    return g


def hessian_arrays(params, time, event, X):
    """Exact Hessian of ``loglik_arrays``."""
    a, c, beta = _split(params, X.shape[1])
    k = np.exp(c)
    logt = np.log(time)
    w = logt - a
    u = k * w + X @ beta
    H = np.exp(u)
    delta = event.astype(float)
    resid = delta - H
    p = X.shape[1]
    hess = np.empty((2 + p, 2 + p))
    Hw = H * w
    hess[0, 0] = -k * k * H.sum()
    hess[0, 1] = hess[1, 0] = -k * resid.sum() + k * k * Hw.sum()
    hess[1, 1] = k * (resid * w).sum() - k * k * (Hw * w).sum()
    hess[0, 2:] = hess[2:, 0] = k * (X.T @ H)
    hess[1, 2:] = hess[2:, 1] = -k * (X.T @ Hw)
    hess[2:, 2:] = -(X.T * H) @ X
    return hess


def loglik(params, data: SurvivalDataset):
    """Log-likelihood of a dataset; records with missing marker are dropped."""
    time, event, arm, marker, covs = data.columns()
    keep = _usable_mask(marker, covs)
    X = design_matrix(arm[keep], marker[keep], covs[keep])
    return loglik_arrays(params, time[keep], event[keep], X)


def gradient(params, data: SurvivalDataset):
    """Analytic score on a dataset; finite-difference checked in tests."""
    time, event, arm, marker, covs = data.columns()
    keep = _usable_mask(marker, covs)
    if not keep.any():
        return np.zeros(2 + 5 + covs.shape[1])
    X = design_matrix(arm[keep], marker[keep], covs[keep])
    return gradient_arrays(params, time[keep], event[keep], X)


def _usable_mask(marker, covs):
    keep = marker >= 0
    if covs.shape[1]:
        keep = keep & ~np.isnan(covs).any(axis=1)
    return keep


def fit_arrays(time, event, X, max_iter=200, grad_tol=1e-8):
    """Damped-Newton MLE on columnar data.

    Returns (params, vcov, loglik, n_iter). Falls back to scaled gradient
    steps whenever the Hessian is not negative definite.
    """
    n, p = X.shape
    theta = np.zeros(2 + p)
    theta[0] = np.log(np.median(time))
    ll = loglik_arrays(theta, time, event, X)
    trace = []
    for it in range(1, max_iter + 1):
        g = gradient_arrays(theta, time, event, X)
        gnorm = np.abs(g).max()
        trace.append((it, ll, gnorm))
        if gnorm <= grad_tol:
            vcov = _invert_information(theta, time, event, X)
            return theta, vcov, ll, it
        hess = hessian_arrays(theta, time, event, X)
        step = _newton_direction(hess, g)
        # backtracking: accept the first step that improves the objective
        scale = 1.0
        for _ in range(60):
            cand = theta + scale * step
            llc = loglik_arrays(cand, time, event, X)
            if np.isfinite(llc) and llc > ll - 1e-13 * max(1.0, abs(ll)):
                theta, ll = cand, llc
                break
            scale *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed at iteration {it} (grad sup-norm {gnorm:.3e})",
                trace)
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations (grad sup-norm {trace[-1][2]:.3e})",
        trace)


def _newton_direction(hess, g):
    try:
        chol = np.linalg.cholesky(-hess)
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, g))
        if np.isfinite(step).all():
            return step
    except np.linalg.LinAlgError:
        pass
    # Hessian not negative definite: gradient ascent, scaled to a modest norm
    gnorm = np.linalg.norm(g)
    return g / max(gnorm, 1.0)


def _invert_information(theta, time, event, X):
    info = -hessian_arrays(theta, time, event, X)
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise SingularHessianError(
            "observed information is not positive definite; "
            "check for empty or event-free arm-by-marker cells") from None
    inv_chol = np.linalg.inv(chol)
    vcov = inv_chol.T @ inv_chol
    return (vcov + vcov.T) / 2.0


def fit(data: SurvivalDataset, max_iter=200, grad_tol=1e-8) -> WeibullPHFit:
    """Fit the Weibull PH regression by maximum likelihood.

    Records with a missing marker or missing covariates are dropped (the
    count is reported on the result). Raises ``DegenerateDataError`` when an
    arm has no events, ``ConvergenceError`` or ``SingularHessianError`` on
    numerical failure.
    """
    time, event, arm, marker, covs = data.columns()
    keep = _usable_mask(marker, covs)
    n_dropped = int((~keep).sum())
    time, event, arm, marker, covs = (
        time[keep], event[keep], arm[keep], marker[keep], covs[keep])
    if time.size == 0:
        raise DegenerateDataError("no usable records after dropping missing data")
    for a in (ARM_CONTROL, ARM_RX):
        if not event[arm == a].any():
            raise DegenerateDataError(f"arm {a} has no observed events")
    X = design_matrix(arm, marker, covs)
    params, vcov, ll, n_iter = fit_arrays(time, event, X, max_iter=max_iter,
                                          grad_tol=grad_tol)
    return WeibullPHFit(
        log_scale=float(params[0]),
        log_shape=float(params[1]),
        beta=params[2:].copy(),
        vcov=vcov,
        loglik=ll,
        n_used=int(time.size),
        converged=True,
        n_dropped=n_dropped,
        n_iter=n_iter,
        covariate_names=tuple(data.covariate_names),
    )
