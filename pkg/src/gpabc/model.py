"""Parameter spaces, prior densities, and simulator contracts.

The calibration target is a stochastic simulator ``f(theta)`` with parameters
``theta`` in R^p.  This module owns the prior / support semantics
(:class:`ParameterSpace`), the callable-simulator wrapper with its call
accounting (:class:`Simulator`), and a line-protocol adapter for external
simulator executables (:class:`SubprocessSimulator`).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Marginal",
    "Uniform",
    "InverseCdfMarginal",
    "ParameterSpace",
    "Simulator",
    "SimulatorFailure",
    "SubprocessSimulator",
    "prior_density",
]


class Marginal:
    """One-dimensional prior marginal, defined through its inverse CDF."""

    def ppf(self, u):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def inflated(self, factor: float) -> "Marginal":
        """Widened copy: quantiles stretched about the median by ``factor``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Marginal):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform marginal requires lo < hi, got [{self.lo}, {self.hi}]")

    def ppf(self, u):
        return self.lo + np.asarray(u) * (self.hi - self.lo)

    def pdf(self, x):
        x = np.asarray(x)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def support(self):
        return (self.lo, self.hi)

    def inflated(self, factor):
        if factor < 1.0:
            raise ValueError("inflation factor must be >= 1")
        c = 0.5 * (self.lo + self.hi)
        h = 0.5 * (self.hi - self.lo) * factor
        return Uniform(c - h, c + h)


class InverseCdfMarginal(Marginal):
    """Generic continuous marginal wrapping an object with ppf/pdf/support.

    Accepts any scipy.stats frozen distribution.  Inflation stretches
    quantiles about the median, which rescales the s.d. of location-scale
    families (e.g. a Gaussian) by the same factor.
    """

    def __init__(self, dist, scale_about_median: float = 1.0):
        self._dist = dist
        self._factor = float(scale_about_median)
        self._median = float(dist.ppf(0.5))

    def ppf(self, u):
        base = self._dist.ppf(np.asarray(u))
        if self._factor == 1.0:
            return base
        return self._median + self._factor * (base - self._median)

    def pdf(self, x):
        if self._factor == 1.0:
            return self._dist.pdf(np.asarray(x))
        z = self._median + (np.asarray(x) - self._median) / self._factor
        return self._dist.pdf(z) / self._factor

    def support(self):
        lo, hi = self._dist.support()
        if self._factor != 1.0:
            lo = self._median + self._factor * (lo - self._median) if np.isfinite(lo) else lo
            hi = self._median + self._factor * (hi - self._median) if np.isfinite(hi) else hi
        return (float(lo), float(hi))

    def inflated(self, factor):
        if factor < 1.0:
            raise ValueError("inflation factor must be >= 1")
        return InverseCdfMarginal(self._dist, self._factor * factor)


@dataclass(frozen=True)
class ParameterSpace:
    """Product prior over a box support; dimension order is significant."""

    names: tuple[str, ...]
    marginals: tuple[Marginal, ...]

    def __post_init__(self):
        if len(self.names) != len(self.marginals):
            raise ValueError("names and marginals must have equal length")
        if len(self.marginals) < 1:
            raise ValueError("parameter space needs at least one dimension")

    @property
    def dims(self) -> int:
        return len(self.marginals)

    def support_bounds(self) -> np.ndarray:
        """(p, 2) array of per-dimension support bounds."""
        return np.array([m.support() for m in self.marginals], dtype=float)

    def contains(self, theta) -> np.ndarray:
        """Vectorized membership in the support box; theta is (p,) or (n, p)."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        b = self.support_bounds()
        ok = np.all((th >= b[:, 0]) & (th <= b[:, 1]), axis=1)
        return ok if np.asarray(theta).ndim > 1 else bool(ok[0])

    def log_prior(self, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        with np.errstate(divide="ignore"):
            lp = np.zeros(th.shape[0])
            for j, m in enumerate(self.marginals):
                lp += np.log(m.pdf(th[:, j]))
        return lp if np.asarray(theta).ndim > 1 else float(lp[0])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n draws from the prior via per-dimension inverse CDFs."""
        u = rng.random((n, self.dims))
        out = np.empty_like(u)
        for j, m in enumerate(self.marginals):
            out[:, j] = m.ppf(u[:, j])
        return out

    def inflated(self, factor: float) -> "ParameterSpace":
        return ParameterSpace(self.names, tuple(m.inflated(factor) for m in self.marginals))


def prior_density(space: ParameterSpace, theta) -> float | np.ndarray:
    """Product of marginal densities; exactly 0 outside the support."""
    th = np.atleast_2d(np.asarray(theta, dtype=float))
    dens = np.ones(th.shape[0])
    for j, m in enumerate(space.marginals):
        dens *= m.pdf(th[:, j])
    return dens if np.asarray(theta).ndim > 1 else float(dens[0])


class SimulatorFailure(RuntimeError):
    """Raised when a simulator run fails (nonzero exit, protocol error, blowup)."""


class Simulator:
    """Wraps a sampling procedure ``(theta, rng) -> output`` with call accounting.

    The call counter is an atomic tally: it increments by exactly one per
    draw, including draws made through :meth:`sample_batch`.  An optional
    native batch implementation ``(theta, m, rng) -> (m, d) array`` avoids
    Python-level loops for vectorizable simulators.
    """

    def __init__(
        self,
        sample: Callable[[np.ndarray, np.random.Generator], np.ndarray],
        summary: Callable[[np.ndarray], np.ndarray] | None = None,
        batch_sample: Callable[[np.ndarray, int, np.random.Generator], np.ndarray] | None = None,
    ):
        self._sample = sample
        self._batch = batch_sample
        self.summary = summary
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def _tally(self, n: int):
        with self._lock:
            self._calls += n

    def sample(self, theta, rng: np.random.Generator) -> np.ndarray:
        out = np.asarray(self._sample(np.asarray(theta, dtype=float), rng))
        self._tally(1)
        return out

    def sample_batch(self, theta, m: int, rng: np.random.Generator) -> np.ndarray:
        """m independent replicates at theta, stacked along axis 0."""
        theta = np.asarray(theta, dtype=float)
        if self._batch is not None:
            out = np.asarray(self._batch(theta, m, rng))
            if out.shape[0] != m:
                raise SimulatorFailure(f"batch simulator returned {out.shape[0]} rows, wanted {m}")
            self._tally(m)
            return out
        rows = [self._sample(theta, rng) for _ in range(m)]
        self._tally(m)
        return np.asarray(rows)

    def summarize(self, raw: np.ndarray) -> np.ndarray:
        return raw if self.summary is None else np.asarray(self.summary(raw))


class SubprocessSimulator(Simulator):
    """Line-protocol adapter for external simulator executables.

    Request: one line per call, ``theta_1 theta_2 ... theta_p seed\\n`` on the
    child's stdin.  Response: one line of space-separated decimals on stdout.
    A nonzero exit status or truncated response is a :class:`SimulatorFailure`.
    """

    def __init__(self, argv: Sequence[str], summary=None):
        super().__init__(self._request, summary=summary)
        self._argv = list(argv)
        self._proc = None

    def _ensure_proc(self):
        import subprocess

        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def _request(self, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        proc = self._ensure_proc()
        seed = int(rng.integers(0, 2**63 - 1))
        line = " ".join(repr(float(x)) for x in theta) + f" {seed}\n"
        try:
            proc.stdin.write(line)
            proc.stdin.flush()
            reply = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise SimulatorFailure(f"subprocess simulator died: {exc}") from exc
        if not reply:
            code = proc.poll()
            raise SimulatorFailure(f"subprocess simulator closed stdout (exit status {code})")
        try:
            return np.array([float(tok) for tok in reply.split()])
        except ValueError as exc:
            raise SimulatorFailure(f"unparseable simulator response: {reply!r}") from exc

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
