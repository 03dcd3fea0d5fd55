"""Ricker population model: simulator, priors, and summary statistics.

The model tracks an unobserved population ``N_t`` through the map
``N_{t+1} = r * N_t * exp(-N_t + e_t)`` with Gaussian process noise
``e_t ~ N(0, sigma^2)`` and Poisson observations ``Y_t ~ Pois(phi * N_t)``.
Near-chaotic dynamics for large ``r`` make it a standard hard-inference
exemplar.

Summaries follow the phase-invariant recipe used for synthetic-likelihood
inference on this model: sample mean, zero count, autocovariances to lag 5,
power-transformed autoregression coefficients, and a cubic regression of the
ordered first differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ParameterSpace, Simulator, Uniform

__all__ = [
    "RickerParams",
    "RickerOverflowError",
    "ricker_simulate",
    "ricker_simulate_batch",
    "ricker_summaries",
    "ricker_prior_space",
    "make_ricker_simulator",
    "SUMMARY_DIM",
]

# hard ceiling on the latent population before we call the run a blowup
_N_MAX = 1e12

SUMMARY_DIM = 12


class RickerOverflowError(RuntimeError):
    """Latent population overflowed or collapsed to an invalid state."""

    def __init__(self, t: int, value: float):
        super().__init__(f"latent population invalid at t={t}: N={value!r}")
        self.t = t
        self.value = value


@dataclass(frozen=True)
class RickerParams:
    """Parameters of one Ricker run; ``log_r`` is the growth rate on log scale."""

    log_r: float
    sigma: float
    phi: float
    T_len: int = 50
    N0: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.phi <= 0:
            raise ValueError("phi must be > 0")
        if self.T_len < 1:
            raise ValueError("T_len must be >= 1")
        if self.N0 <= 0:
            raise ValueError("N0 must be > 0")


def ricker_simulate(params: RickerParams, rng: np.random.Generator) -> np.ndarray:
    """One observation series y_1..y_T of counts.

    The latent path is advanced first, then observed: N_1 = r*N_0*exp(-N_0+e_1),
    y_1 ~ Pois(phi*N_1), and so on.  Raises :class:`RickerOverflowError` with
    the failing time index if the latent state leaves (0, 1e12).
    """
    return ricker_simulate_batch(params, 1, rng)[0]


def ricker_simulate_batch(params: RickerParams, m: int, rng: np.random.Generator) -> np.ndarray:
    """m independent series as an (m, T_len) integer array (vectorized)."""
    r = np.exp(params.log_r)
    n = np.full(m, float(params.N0))
    lam = np.empty((m, params.T_len))
    for t in range(params.T_len):
        if params.sigma > 0:
            e = rng.normal(0.0, params.sigma, size=m)
        else:
            e = 0.0
        n = r * n * np.exp(-n + e)
        bad = ~np.isfinite(n) | (n <= 0.0) | (n > _N_MAX)
        if np.any(bad):
            raise RickerOverflowError(t + 1, float(n[np.argmax(bad)]))
        lam[:, t] = params.phi * n
    return rng.poisson(lam)


def _ols_no_intercept(X: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Least-squares coefficients, zeros fallback for degenerate designs."""
    if X.shape[0] < X.shape[1]:
        return np.zeros(k)
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < X.shape[1]:
        return np.zeros(k)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    if not np.all(np.isfinite(coef)):
        return np.zeros(k)
    return coef


def _blom_scores(n: int) -> np.ndarray:
    from scipy.stats import norm

    return norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))


def ricker_summaries(y: np.ndarray, reference: np.ndarray | None = None,
                     power: float = 0.3) -> np.ndarray:
    """Phase-invariant summary vector s(y) of fixed length 12.

    Components, in order:

    * mean of y                                                (1)
    * number of zeros                                          (1)
    * autocovariances at lags 0..5, denominator T              (6)
    * no-intercept LS coefficients of y_{t+1}^p on
      (y_t^p, y_t^{2p}) with p = ``power``                     (2)
    * no-intercept LS coefficients of the sorted differences
      y_t - y_{t-1} on (d_ref, d_ref^3) where d_ref is the
      sorted differences of ``reference`` (the observed series
      in pipeline use) or Blom normal scores when absent       (2)

    Degenerate regressions (constant series) return zero coefficients; the
    result is always finite and deterministic in the inputs.
    """
    y = np.asarray(y, dtype=float).ravel()
    T = y.size
    if T < 8:
        raise ValueError("need at least 8 observations for lag-5 autocovariances")

    mean = y.mean()
    n_zero = float(np.count_nonzero(y == 0))

    c = y - mean
    acov = np.array([c[: T - j] @ c[j:] / T for j in range(6)])

    yp = y ** power
    X_ar = np.column_stack([yp[:-1], yp[:-1] ** 2])
    beta_ar = _ols_no_intercept(X_ar, yp[1:], 2)

    d = np.sort(np.diff(y))
    if reference is not None:
        ref = np.asarray(reference, dtype=float).ravel()
        if ref.size != T:
            raise ValueError("reference series must have the same length as y")
        d_ref = np.sort(np.diff(ref))
    else:
        d_ref = _blom_scores(T - 1)
    X_d = np.column_stack([d_ref, d_ref ** 3])
    beta_d = _ols_no_intercept(X_d, d, 2)

    return np.concatenate([[mean, n_zero], acov, beta_ar, beta_d])


def ricker_prior_space() -> ParameterSpace:
    """The standard box prior: log r ~ U[3,5], sigma ~ U[0,0.8], phi ~ U[4,20]."""
    return ParameterSpace(
        names=("log_r", "sigma", "phi"),
        marginals=(Uniform(3.0, 5.0), Uniform(0.0, 0.8), Uniform(4.0, 20.0)),
    )


def make_ricker_simulator(
    T_len: int = 50,
    N0: float = 1.0,
    reference: np.ndarray | None = None,
    power: float = 0.3,
) -> Simulator:
    """Simulator over theta = (log_r, sigma, phi) emitting summary vectors.

    The batch path simulates all replicates in one vectorized sweep and
    summarizes row by row; the call counter advances by one per replicate.
    """

    def _params(theta):
        return RickerParams(log_r=theta[0], sigma=theta[1], phi=theta[2],
                            T_len=T_len, N0=N0)

    def sample(theta, rng):
        return ricker_simulate(_params(theta), rng)

    def batch(theta, m, rng):
        return ricker_simulate_batch(_params(theta), m, rng)

    def summary(raw):
        raw = np.asarray(raw)
        if raw.ndim == 1:
            return ricker_summaries(raw, reference=reference, power=power)
        return np.asarray([ricker_summaries(row, reference=reference, power=power)
                           for row in raw])

    return Simulator(sample, summary=summary, batch_sample=batch)
