"""Numeric foundations: Gaussian tail functions, seeded hierarchical random
streams, complex Gaussian draws, Hermitian inversion, and streaming statistics.

Everything here is deterministic given its inputs. RandomStream is the only
stateful object and is never shared between units of work; each drop, trial
batch, or estimation task derives its own child stream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


class IllConditionedError(ValueError):
    """Raised when a matrix fails the configured condition-number bound."""

    def __init__(self, cond: float, limit: float):
        self.cond = cond
        self.limit = limit
        super().__init__(f"condition estimate {cond:.3e} exceeds limit {limit:.3e}")


def q_function(x):
    """Standard Gaussian upper-tail probability Q(x).

    Evaluated through the complementary error function so that deep-tail
    values (p ~ 1e-9 and below) keep full relative accuracy.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("q_function requires finite input")
    out = 0.5 * erfc(x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


# Acklam's rational approximation to the standard normal quantile.
_QI_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QI_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
_QI_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QI_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)


def _norm_ppf_approx(p):
    """Rational approximation to the normal quantile, |error| < 1.15e-9."""
    a, b, c, d = _QI_A, _QI_B, _QI_C, _QI_D
    p_low, p_high = 0.02425, 1 - 0.02425
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    lo = p < p_low
    hi = p > p_high
    mid = ~(lo | hi)
    if np.any(lo):
        q = np.sqrt(-2 * np.log(p[lo]))
        out[lo] = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                  ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if np.any(hi):
        q = np.sqrt(-2 * np.log(1 - p[hi]))
        out[hi] = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        out[mid] = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
                   (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
    return out


def q_inverse(p):
    """Inverse of q_function: q_function(q_inverse(p)) = p to 1e-10 absolute.

    Seeds Newton's method with a rational approximation; two or three
    iterations against the analytic derivative reach the target accuracy
    anywhere in (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise ValueError("q_inverse requires 0 < p < 1")
    # Q^{-1}(p) = -Phi^{-1}(p): upper tail vs lower-quantile sign flip
    x = -_norm_ppf_approx(p_arr)
    for _ in range(3):
        err = q_function(x) - p_arr
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
        pdf = np.maximum(pdf, 1e-300)
        x = x + err / pdf  # Q' = -pdf
    return float(x) if x.ndim == 0 else x


class RandomStream:
    """Hierarchical counter-based random stream.

    A stream is identified by a 64-bit root seed and a path of
    (label, index) components. Identical (seed, path) pairs reproduce
    identical sequences on any machine and any worker layout; distinct
    paths are statistically independent (SeedSequence spawn keys).
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed)
        self.path = _path
        self._gen = None

    def child(self, label: str, index: int = 0) -> "RandomStream":
        """Derive an independent stream for one unit of work."""
        tag = int.from_bytes(hashlib.blake2s(label.encode(), digest_size=4).digest(), "big")
        return RandomStream(self.seed, self.path + (tag, int(index)))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={self.path})"


def draw_complex_gaussian(stream, n, variance=1.0):
    """i.i.d. circularly symmetric complex Gaussian draws.

    Parameters
    ----------
    stream : RandomStream or numpy Generator
    n : int or shape tuple
    variance : per-entry variance E|x|^2; real and imaginary parts each
        carry variance/2.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    rng = stream.generator if isinstance(stream, RandomStream) else stream
    shape = (n,) if np.isscalar(n) else tuple(n)
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(variance / 2.0)


def matrix_inverse(a, cond_limit=1e12):
    """Invert a Hermitian positive-definite matrix via Cholesky.

    The Gram matrices this serves are Hermitian PD almost surely; a failed
    factorization or a condition estimate above cond_limit raises
    IllConditionedError, which callers treat as a resample signal.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix_inverse expects a square matrix")
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(cond, cond_limit)
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise IllConditionedError(float("inf"), cond_limit) from e
    eye = np.eye(a.shape[0], dtype=a.dtype)
    linv = np.linalg.solve(low, eye)
    return linv.conj().T @ linv


def hermitian_solve(a, b, cond_limit=1e12):
    """Solve a x = b for Hermitian positive-definite a with the same
    conditioning guard as matrix_inverse."""
    a = np.asarray(a)
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(cond, cond_limit)
    return np.linalg.solve(a, b)


@dataclass
class RunningStats:
    """Streaming mean/variance accumulator (Welford), mergeable.

    Merging is associative and order-insensitive up to floating point,
    which is what lets drops and trials run in any worker layout.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x):
        x = np.asarray(x, dtype=float).ravel()
        for v in x:
            self.count += 1
            delta = v - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (v - self.mean)

    def push_array(self, x):
        """Bulk update from an array, numerically equivalent to a merge."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return
        other = RunningStats(count=x.size, mean=float(x.mean()),
                             m2=float(((x - x.mean()) ** 2).sum()))
        self.merge(other)

    def merge(self, other: "RunningStats"):
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self):
        """Unbiased sample variance."""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std_error(self):
        if self.count < 2:
            return float("inf")
        return float(np.sqrt(self.variance / self.count))
