"""Central multivariate-normal rectangle probabilities in dimension <= 5.

Computes P(|Z_i| < b for all i) for Z ~ N(0, R) by the separation-of-
variables transform evaluated on a randomized rank-1 lattice (square-root
of-primes generators, uniform random shifts). Results are deterministic
given the seed; the error estimate is 3x the standard error across shifts.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

MAX_DIM = 5
_SQRT_PRIMES = np.sqrt(np.array([2.0, 3.0, 5.0, 7.0]))
_EIG_FLOOR = -1e-10
_TINY = 1e-15


class CorrelationError(ValueError):
    """The supplied matrix is not a usable correlation matrix."""


def validate_correlation(R):
    """Check and repair a correlation matrix.

    Symmetry, unit diagonal and |rho| <= 1 are required. Eigenvalues in
    [-1e-10, 0) are clipped to zero (delta-method covariances can be
    marginally indefinite from rounding); anything lower is an error.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise CorrelationError(f"expected a square matrix, got shape {R.shape}")
    d = R.shape[0]
    if not 1 <= d <= MAX_DIM:
        raise CorrelationError(f"dimension must be 1..{MAX_DIM}, got {d}")
    if not np.allclose(R, R.T, atol=1e-10):
        raise CorrelationError("matrix is not symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-8):
        raise CorrelationError("diagonal is not 1")
    if np.any(np.abs(R) > 1 + 1e-8):
        raise CorrelationError("off-diagonal entries exceed 1 in magnitude")
    evals, evecs = np.linalg.eigh((R + R.T) / 2.0)
    if evals.min() < _EIG_FLOOR:
        raise CorrelationError(
            f"matrix is not positive semi-definite (min eigenvalue {evals.min():.3e})")
    if evals.min() < 0:
        R = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        s = np.sqrt(np.diag(R))
        R = R / np.outer(s, s)
        R = (R + R.T) / 2.0
        np.fill_diagonal(R, 1.0)
    return R


def _semidefinite_cholesky(R):
    """Lower Cholesky factor tolerating exact rank deficiency.

    Zero (or slightly negative) pivots produce a zero diagonal entry and a
    zero column tail, which is the correct factor for matrices like the
    all-ones correlation.
    """
    n = R.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        s = R[i, i] - L[i, :i] @ L[i, :i]
        L[i, i] = np.sqrt(s) if s > 1e-12 else 0.0
        for j in range(i + 1, n):
            t = R[j, i] - L[j, :i] @ L[i, :i]
            L[j, i] = t / L[i, i] if L[i, i] > 0 else 0.0
    return L


def _sov_integrand(L, bound, U):
    """Separation-of-variables integrand for the rectangle [-bound, bound]^d.

    U has shape (n_points, d-1); returns per-point probabilities.
    """
    d = L.shape[0]
    n = U.shape[0]
    lo0, hi0 = ndtr(-bound / L[0, 0]), ndtr(bound / L[0, 0])
    f = np.full(n, hi0 - lo0)
    d_prev = np.full(n, lo0)
    e_prev = np.full(n, hi0)
    y = np.empty((n, d - 1))
    for i in range(1, d):
        z = d_prev + U[:, i - 1] * (e_prev - d_prev)
        y[:, i - 1] = ndtri(np.clip(z, _TINY, 1 - _TINY))
        s = y[:, :i] @ L[i, :i]
        if L[i, i] > 0:
            d_i = ndtr((-bound - s) / L[i, i])
            e_i = ndtr((bound - s) / L[i, i])
        else:
            # degenerate coordinate: deterministic given earlier components
            inside = (np.abs(s) <= bound)
            d_i = np.zeros(n)
            e_i = inside.astype(float)
        f *= np.maximum(e_i - d_i, 0.0)
        d_prev, e_prev = d_i, e_i
    return f


def _lattice(d, n_shifts, n_points, rng):
    """Shifted rank-1 lattice points, flattened to (n_shifts*n_points, d-1)."""
    q = _SQRT_PRIMES[: d - 1]
    shifts = rng.random((n_shifts, 1, d - 1))
    kq = np.arange(1, n_points + 1)[None, :, None] * q[None, None, :]
    return np.mod(kq + shifts, 1.0).reshape(n_shifts * n_points, d - 1)


def _shift_means(L, bound, U_flat, n_shifts):
    f = _sov_integrand(L, bound, U_flat)
    return f.reshape(n_shifts, -1).mean(axis=1)


def mvn_rect_prob(R, bound, rng_seed=0, abs_tol=1e-4, n_shifts=12,
                  n_points=1024, max_points=1 << 18):
    """P(|Z_i| < bound for all i), Z ~ N(0, R).

    Randomized quasi-Monte-Carlo estimate with absolute error targeted at
    ``abs_tol`` (3 standard errors over the random shifts); deterministic
    for a fixed ``rng_seed``. Point counts double until the target is met
    or ``max_points`` per shift is reached.
    """
    R = validate_correlation(R)
    if bound < 0:
        raise ValueError(f"bound must be nonnegative, got {bound}")
    if bound == 0:
        return 0.0
    d = R.shape[0]
    if d == 1:
        return float(ndtr(bound) - ndtr(-bound))
    L = _semidefinite_cholesky(R)
    rng = np.random.default_rng(rng_seed)
    n = n_points
    while True:
        U = _lattice(d, n_shifts, n, rng)
        means = _shift_means(L, bound, U, n_shifts)
        est = means.mean()
        err = 3.0 * means.std(ddof=1) / np.sqrt(n_shifts)
        if err <= abs_tol or n >= max_points:
            return float(min(max(est, 0.0), 1.0))
        n *= 2


def equicoordinate_quantile(R, level, rng_seed=0, prob_tol=2e-4,
                            n_shifts=8, n_points=2048):
    """Bound q with P(|Z_i| < q for all i) = level, Z ~ N(0, R).

    Monotone bracketing root-find against a fixed lattice/shift stream, so
    the result is deterministic given the seed. The starting bracket
    [univariate two-sided quantile, Bonferroni quantile] provably contains
    the root; an effective-dimension guess plus regula-falsi steps usually
    finish in four or five evaluations.
    """
    R = validate_correlation(R)
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    d = R.shape[0]
    if d == 1:
        return float(ndtri((1 + level) / 2))
    L = _semidefinite_cholesky(R)
    rng = np.random.default_rng(rng_seed)
    U = _lattice(d, n_shifts, n_points, rng)

    def g(b):
        return float(_shift_means(L, b, U, n_shifts).mean()) - level

    # bracket widened so lattice noise cannot break the sign change
    lo = float(ndtri((1 + level) / 2)) - 1e-3
    hi = float(ndtri(1 - (1 - level) / (2 * d))) + 1e-3
    glo, ghi = g(lo), g(hi)
    if glo >= 0.0:
        return lo
    if ghi <= 0.0:
        return hi
    ftol = prob_tol / 2.0

    # initial guess: effective dimension from one midpoint evaluation
    b0 = 0.5 * (lo + hi)
    g0 = g(b0)
    if abs(g0) <= ftol:
        return b0
    if g0 > 0:
        hi, ghi = b0, g0
    else:
        lo, glo = b0, g0
    p_uni = ndtr(b0) - ndtr(-b0)
    d_eff = min(max(np.log(g0 + level) / np.log(p_uni), 1.0), float(d))
    guess = float(ndtri((1 + level ** (1.0 / d_eff)) / 2))
    for _ in range(60):
        if not lo < guess < hi:
            # regula falsi, falling back to bisection near stagnation
            denom = ghi - glo
            guess = (lo * ghi - hi * glo) / denom if denom else 0.5 * (lo + hi)
            if not lo < guess < hi:
                guess = 0.5 * (lo + hi)
        gx = g(guess)
        if abs(gx) <= ftol or hi - lo < 1e-9:
            return float(guess)
        if gx > 0:
            hi, ghi = guess, gx
        else:
            lo, glo = guess, gx
        guess = np.inf  # force the interpolation branch next round
    raise RuntimeError(
        f"quantile search did not reach tolerance {prob_tol} (bracket "
        f"[{lo:.6f}, {hi:.6f}])")
