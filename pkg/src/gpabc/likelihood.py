"""Monte Carlo estimators of the (G)ABC log-likelihood at a parameter point.

Each estimator consumes exactly ``M`` simulator calls and returns a
:class:`LikelihoodEstimate` carrying the estimate, an optional bootstrap
noise variance (the GP nugget upstream), and a degeneracy flag for
zero-acceptance / undefined values.

Estimates can be requested on the identity scale ``l(theta)`` or on the
``log(-l(theta))`` scale used to tame orders-of-magnitude variation in
early history-matching waves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import Simulator

__all__ = [
    "IDENTITY",
    "LOG_NEGATIVE",
    "NUGGET_FLOOR",
    "LikelihoodEstimate",
    "IndicatorKernel",
    "SmoothKernel",
    "GaussianSyntheticKernel",
    "EstimatorError",
    "SingularCovarianceError",
    "BootstrapError",
    "log_mean_exp",
    "mvn_logpdf_cholesky",
    "gabc_loglik",
    "synthetic_loglik",
    "abc_indicator_loglik",
    "bootstrap_noise_var",
    "apply_transform",
]

IDENTITY = "identity"
LOG_NEGATIVE = "log_negative"

# lower bound on nugget variances handed to the GP; exactly-zero nuggets
# destabilize the factorization
NUGGET_FLOOR = 1e-10


class EstimatorError(RuntimeError):
    pass


class SingularCovarianceError(EstimatorError):
    """Sample covariance not positive-definite even after the jitter policy."""


class BootstrapError(EstimatorError):
    """More than half of the bootstrap resamples were degenerate."""


def apply_transform(loglik: float, transform: str) -> float:
    """Map an identity-scale log-likelihood onto the requested scale.

    Returns NaN for ``log_negative`` when loglik >= 0 (the transform is
    undefined there; callers treat that as degenerate).
    """
    if transform == IDENTITY:
        return loglik
    if transform == LOG_NEGATIVE:
        if not loglik < 0.0:
            return math.nan
        return math.log(-loglik)
    raise ValueError(f"unknown transform {transform!r}")


@dataclass
class LikelihoodEstimate:
    """Estimated log-likelihood at one theta.

    ``loglik`` and ``noise_var`` live on the ``transform`` scale;
    ``raw_loglik`` is always the identity-scale value (-inf when the
    estimate is degenerate with zero likelihood).
    """

    loglik: float
    raw_loglik: float
    noise_var: float
    M: int
    transform: str = IDENTITY
    degenerate: bool = False

    def usable(self) -> bool:
        return not self.degenerate and math.isfinite(self.loglik)


@dataclass(frozen=True)
class IndicatorKernel:
    """0-1 acceptance kernel: accept X when rho(D, X) <= epsilon."""

    metric: Callable[[np.ndarray, np.ndarray], float]
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("indicator kernel needs epsilon > 0")

    def log_terms(self, d_obs, x_batch) -> np.ndarray:
        dist = np.array([self.metric(d_obs, x) for x in np.asarray(x_batch)])
        return np.where(dist <= self.epsilon, 0.0, -np.inf)


@dataclass(frozen=True)
class SmoothKernel:
    """Smooth acceptance kernel: log pi(D | X) evaluated per replicate."""

    log_density: Callable[[np.ndarray, np.ndarray], float]

    def log_terms(self, d_obs, x_batch) -> np.ndarray:
        return np.array([self.log_density(d_obs, x) for x in np.asarray(x_batch)])


class GaussianSyntheticKernel:
    """Marker for the Gaussian synthetic likelihood; see synthetic_loglik."""


def log_mean_exp(a) -> float:
    """log of the arithmetic mean of exp(a_i), shifted by max(a) for stability.

    Entries may be -inf; an all -inf input returns -inf (the zero-likelihood
    marker), never a NaN from -inf arithmetic.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ValueError("log_mean_exp of an empty vector")
    if np.any(np.isnan(a)):
        raise ValueError("log_mean_exp input contains NaN")
    amax = a.max()
    if amax == -np.inf:
        return -np.inf
    return float(amax + np.log(np.mean(np.exp(a - amax))))


def mvn_logpdf_cholesky(x: np.ndarray, mean: np.ndarray, chol_lower: np.ndarray) -> float:
    """Multivariate normal log-density from a lower Cholesky factor."""
    from scipy.linalg import solve_triangular

    k = mean.size
    w = solve_triangular(chol_lower, x - mean, lower=True)
    return float(-0.5 * k * math.log(2 * math.pi)
                 - np.sum(np.log(np.diag(chol_lower)))
                 - 0.5 * w @ w)


def _finalize(raw_loglik: float, noise_var: float, M: int, transform: str,
              degenerate: bool) -> LikelihoodEstimate:
    if degenerate:
        return LikelihoodEstimate(-math.inf if transform == IDENTITY else math.nan,
                                  raw_loglik, math.nan, M, transform, True)
    ll = apply_transform(raw_loglik, transform)
    if math.isnan(ll):
        # log(-l) undefined for l >= 0: not representable on this scale
        return LikelihoodEstimate(math.nan, raw_loglik, math.nan, M, transform, True)
    return LikelihoodEstimate(ll, raw_loglik, noise_var, M, transform, False)


def gabc_loglik(
    d_obs,
    theta,
    kernel,
    sim: Simulator,
    M: int,
    rng: np.random.Generator,
    *,
    transform: str = IDENTITY,
    bootstrap_B: int = 0,
) -> LikelihoodEstimate:
    """Generalized-ABC estimate log((1/M) sum_i pi(D | X_i)).

    ``kernel`` must expose ``log_terms(d_obs, x_batch)``; the per-replicate
    log-kernel values feed both the estimate (via :func:`log_mean_exp`) and,
    when ``bootstrap_B > 0``, the bootstrap noise variance.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    x = sim.summarize(sim.sample_batch(theta, M, rng))
    terms = kernel.log_terms(d_obs, x)
    raw = log_mean_exp(terms)
    if raw == -np.inf:
        return _finalize(-math.inf, math.nan, M, transform, True)
    noise = math.nan
    if bootstrap_B > 0:
        noise = bootstrap_noise_var(
            terms, bootstrap_B, rng,
            estimator=lambda t: apply_transform(log_mean_exp(t), transform))
    return _finalize(raw, noise, M, transform, False)


def synthetic_loglik(
    s_obs,
    theta,
    sim: Simulator,
    M: int,
    rng: np.random.Generator,
    *,
    transform: str = IDENTITY,
    bootstrap_B: int = 0,
    jitter_rel: float = 1e-8,
) -> LikelihoodEstimate:
    """Gaussian synthetic likelihood: s_obs scored under moments of M replicates.

    The sample covariance uses ddof=1 and needs M >= k+2 to be generically
    invertible.  A numerically singular covariance gets one shot of diagonal
    jitter ``jitter_rel * trace / k``; if that fails the estimate raises
    :class:`SingularCovarianceError`.
    """
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    k = s_obs.size
    if M < k + 2:
        raise ValueError(f"M={M} too small for k={k} summaries (need M >= k+2)")
    raw = sim.sample_batch(theta, M, rng)
    S = np.asarray(sim.summarize(raw), dtype=float)
    if S.ndim != 2 or S.shape != (M, k):
        raise ValueError(f"summaries have shape {S.shape}, expected ({M}, {k})")

    raw_ll = _synthetic_from_matrix(s_obs, S, jitter_rel)
    noise = math.nan
    if bootstrap_B > 0:
        def est(rows):
            return apply_transform(_synthetic_from_matrix(s_obs, rows, jitter_rel), transform)
        noise = bootstrap_noise_var(S, bootstrap_B, rng, estimator=est)
    return _finalize(raw_ll, noise, M, transform, False)


def _synthetic_from_matrix(s_obs: np.ndarray, S: np.ndarray, jitter_rel: float) -> float:
    from scipy.linalg import cholesky, LinAlgError

    mu = S.mean(axis=0)
    cov = np.cov(S, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    try:
        L = cholesky(cov, lower=True)
    except LinAlgError:
        k = cov.shape[0]
        cov = cov + np.eye(k) * (jitter_rel * np.trace(cov) / k)
        try:
            L = cholesky(cov, lower=True)
        except LinAlgError as exc:
            raise SingularCovarianceError(
                "sample covariance singular after jitter") from exc
    return mvn_logpdf_cholesky(s_obs, mu, L)


def abc_indicator_loglik(
    d_obs,
    theta,
    metric: Callable[[np.ndarray, np.ndarray], float],
    epsilon: float,
    sim: Simulator,
    M: int,
    rng: np.random.Generator,
    *,
    transform: str = IDENTITY,
    bootstrap_B: int = 0,
    zero_policy: str = "degenerate",
) -> LikelihoodEstimate:
    """Indicator-kernel ABC likelihood estimate log(accept_count / M).

    ``zero_policy='degenerate'`` (default) flags zero-acceptance points so
    they can be left out of GP fits; ``'floor'`` substitutes
    log(1/(M+1)) and keeps the point usable.
    """
    kernel = IndicatorKernel(metric, epsilon)
    est = gabc_loglik(d_obs, theta, kernel, sim, M, rng,
                      transform=transform, bootstrap_B=bootstrap_B)
    if est.degenerate and est.raw_loglik == -math.inf and zero_policy == "floor":
        floored = math.log(1.0 / (M + 1))
        return _finalize(floored, math.nan, M, transform, False)
    return est


def bootstrap_noise_var(
    replicates,
    B: int,
    rng: np.random.Generator,
    estimator: Callable[[np.ndarray], float] | None = None,
    max_skip_frac: float = 0.5,
) -> float:
    """Variance of ``B`` bootstrap re-estimates of the log-likelihood.

    ``replicates`` is resampled with replacement along axis 0 and the
    estimator recomputed each time: per-replicate log-kernel terms (1-D,
    default estimator :func:`log_mean_exp`) or raw summary rows (2-D,
    estimator recomputing the synthetic moments).  Degenerate resamples
    (non-finite estimates, singular covariances) are skipped and counted;
    more than ``max_skip_frac`` skipped raises :class:`BootstrapError`.
    """
    rep = np.asarray(replicates)
    if B < 2:
        raise ValueError("need B >= 2 bootstrap replicates")
    n = rep.shape[0]
    if n == 0:
        raise ValueError("empty replicate set")
    if estimator is None:
        if rep.ndim != 1:
            raise ValueError("2-D replicates need an explicit estimator")
        estimator = log_mean_exp

    idx = rng.integers(0, n, size=(B, n))
    vals = np.empty(B)
    skipped = 0
    for b in range(B):
        try:
            v = estimator(rep[idx[b]])
        except (SingularCovarianceError, FloatingPointError):
            skipped += 1
            vals[b] = np.nan
            continue
        if not math.isfinite(v):
            skipped += 1
            vals[b] = np.nan
        else:
            vals[b] = v
    if skipped > max_skip_frac * B:
        raise BootstrapError(f"{skipped}/{B} bootstrap resamples degenerate")
    kept = vals[np.isfinite(vals)]
    return float(np.var(kept, ddof=1))
