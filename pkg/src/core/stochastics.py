"""
Stochastics - Standard normal kernel, linear-loss integral, partial expectations and seeded sampling
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from utils.errors import DomainError

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
UINT64_MAX = 2 ** 64 - 1

# Fractiles are clamped into [FRACTILE_EPS, 1 - FRACTILE_EPS] before inversion
FRACTILE_EPS = 1e-9

# Rational approximation of the inverse normal CDF (Acklam), refined by Newton on Phi
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _as_finite(value, name):
    """Convert to a float array and reject NaN/inf"""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return arr


def _unwrap(arr):
    """Return a Python float for 0-d results, the array otherwise"""
    return float(arr) if np.ndim(arr) == 0 else arr


def std_pdf(z):
    """Standard normal density"""
    z = _as_finite(z, "z")
    return _unwrap(np.exp(-0.5 * z * z) / SQRT_2PI)


def std_cdf(z):
    """
    Standard normal CDF

    Args:
        z: Finite real or array of reals

    Returns:
        Phi(z)
    """
    z = _as_finite(z, "z")
    return _unwrap(special.ndtr(z))


def _acklam(p):
    """Initial quantile estimate, absolute error below ~1.2e-9"""
    z = np.empty_like(p)

    low = p < _P_LOW
    high = p > 1.0 - _P_LOW
    mid = ~(low | high)

    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        z[low] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                 ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        z[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
                 (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    if np.any(high):
        q = np.sqrt(-2.0 * np.log1p(-p[high]))
        z[high] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                  ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    return z


def std_quantile(p):
    """
    Inverse standard normal CDF

    Args:
        p: Probability strictly inside (0, 1), or an array of them

    Returns:
        z with Phi(z) = p
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"Probability must lie in (0, 1), got {p!r}")

    flat = np.atleast_1d(arr).astype(float)
    z = _acklam(flat)
    # One Newton step on Phi(z) - p
    z = z - (special.ndtr(z) - flat) / (np.exp(-0.5 * z * z) / SQRT_2PI)
    return _unwrap(z.reshape(arr.shape))


def clamp_probability(p):
    """Clamp fractiles into the open interval accepted by std_quantile"""
    return np.clip(p, FRACTILE_EPS, 1.0 - FRACTILE_EPS)


def unit_loss(u):
    """
    Right-hand unit normal linear-loss integral R(u) = E[(Z - u)^+]

    Args:
        u: Finite real or array of reals

    Returns:
        phi(u) - u * (1 - Phi(u)), never negative
    """
    u = _as_finite(u, "u")
    loss = np.exp(-0.5 * u * u) / SQRT_2PI - u * special.ndtr(-u)
    return _unwrap(np.maximum(loss, 0.0))


def loss_terms(mu, sigma, q):
    """
    Vectorised partial expectations for N(mu, sigma) at order level q

    Returns:
        Tuple (overage, underage) = (E[(q - X)^+], E[(X - q)^+])
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    q = _as_finite(q, "q")
    z = (q - mu) / sigma
    underage = sigma * unit_loss(z)
    # sigma * R(-z) equals sigma * (R(z) + z) and stays nonnegative far in the left tail
    overage = sigma * unit_loss(-z)
    return overage, underage


@dataclass(frozen=True)
class NormalDist:
    """Normal demand distribution N(mu, sigma)"""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError(f"NormalDist parameters must be finite, got ({self.mu}, {self.sigma})")
        if self.sigma <= 0:
            raise DomainError(f"NormalDist sigma must be positive, got {self.sigma}")

    def cdf(self, x):
        return std_cdf((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def quantile(self, p):
        """F^{-1}(p) = mu + sigma * z_p"""
        return self.mu + self.sigma * std_quantile(p)

    def partial_expectations(self, q):
        return partial_expectations(self, q)


def partial_expectations(d, q):
    """
    Expected overage and underage of an order level against a normal demand

    Args:
        d: NormalDist
        q: Order level

    Returns:
        Tuple (overage, underage) with overage = E[(q - X)^+], underage = E[(X - q)^+]
    """
    overage, underage = loss_terms(d.mu, d.sigma, q)
    return _unwrap(overage), _unwrap(underage)


@dataclass(frozen=True)
class RngStream:
    """
    Counter-based random stream keyed by (seed, stream_id)

    Each draw uses a Philox generator whose key is derived from
    (seed, stream_id, draw_index); drawing returns the advanced stream
    instead of mutating shared state.
    """

    seed: int
    stream_id: int = 0
    draw_index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= UINT64_MAX):
            raise DomainError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.stream_id < 0 or self.draw_index < 0:
            raise DomainError("stream_id and draw_index must be nonnegative")

    def generator(self):
        """numpy Generator positioned at this stream state"""
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), int(self.draw_index)))
        return np.random.Generator(np.random.Philox(seq))

    def advance(self):
        return replace(self, draw_index=self.draw_index + 1)

    def substream(self, stream_id):
        """Independent stream sharing this seed"""
        return RngStream(self.seed, stream_id, 0)


def sample_demand(d, rng, n):
    """
    Draw i.i.d. demands from N(mu, sigma), clipped at zero

    Args:
        d: NormalDist
        rng: RngStream
        n: Number of draws (>= 1)

    Returns:
        Tuple (samples ndarray of shape (n,), advanced RngStream)
    """
    if n < 1:
        raise DomainError(f"Sample size must be at least 1, got {n}")
    draws = rng.generator().normal(d.mu, d.sigma, size=int(n))
    return np.maximum(draws, 0.0), rng.advance()


def sample_joint(mus, sigmas, rng, size=None):
    """
    Draw one independent normal per (mu, sigma) pair, clipped at zero

    Args:
        mus: Array of means, shape (k,)
        sigmas: Array of standard deviations, shape (k,)
        rng: RngStream
        size: Number of joint samples; None for a single vector

    Returns:
        Tuple (array of shape (k,) or (size, k), advanced RngStream)
    """
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    shape = mus.shape if size is None else (int(size),) + mus.shape
    draws = rng.generator().normal(mus, sigmas, size=shape)
    return np.maximum(draws, 0.0), rng.advance()
