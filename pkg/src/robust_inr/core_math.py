"""Dense linear algebra helpers, a reproducible PRNG, and a finite-difference oracle.

Matrices and vectors are plain float64 numpy arrays. The random generator is
xoshiro256** seeded through SplitMix64 so that a given seed yields the same
stream on every platform and in every language port.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_POW_M53 = 1.0 / (1 << 53)


class ShapeError(ValueError):
    """Raised when array shapes are not conformable."""


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D float64 arrays with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** generator.

    The 256-bit state is filled from four consecutive SplitMix64 outputs of
    ``seed``. Single-owner: do not share one instance between threads.

    Derived streams:

    * ``uniform``: ``(x >> 11) * 2**-53`` in ``[0, 1)``.
    * ``normal``: Box-Muller on pairs of uniforms ``(u1, u2)``, with
      ``r = sqrt(-2 ln(1 - u1))``, yielding ``r cos(2 pi u2)`` then
      ``r sin(2 pi u2)``. For odd ``n`` the final sine value is discarded.
    * ``bernoulli_mask``: entry is 0 when its uniform is ``< p``, else 1.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & _MASK64
        result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def u64_array(self, n: int) -> np.ndarray:
        """``n`` raw 64-bit outputs as a uint64 array."""
        if n < 0:
            raise ValueError(f"n must be non-negative, got {n}")
        out = np.empty(n, dtype=np.uint64)
        s0, s1, s2, s3 = self._s
        m = _MASK64
        for i in range(n):
            x = (s1 * 5) & m
            out[i] = ((((x << 7) | (x >> 57)) & m) * 9) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return out

    def uniform(self, n: int) -> np.ndarray:
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def normal(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError(f"n must be non-negative, got {n}")
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.reshape(-1)[:n]

    def bernoulli_mask(self, n: int, p: float) -> np.ndarray:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"mask probability must lie in [0, 1], got {p}")
        return np.where(self.uniform(n) < p, 0.0, 1.0)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by ``uniform``."""
        idx = np.arange(n)
        u = self.uniform(max(n - 1, 0))
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def rng_normal(rng: Rng, n: int) -> np.ndarray:
    return rng.normal(n)


def rng_bernoulli_mask(rng: Rng, n: int, p: float) -> np.ndarray:
    return rng.bernoulli_mask(n, p)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5, extrapolate: bool = False
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a parameter vector.

    With ``extrapolate`` the estimates at ``h`` and ``h/2`` are combined by
    Richardson extrapolation, cancelling the O(h^2) truncation term.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    theta = np.array(theta, dtype=np.float64)
    if extrapolate:
        coarse = finite_difference_gradient(f, theta, h)
        fine = finite_difference_gradient(f, theta, h / 2)
        return (4.0 * fine - coarse) / 3.0
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        fp = float(f(theta))
        theta[i] = orig - h
        fm = float(f(theta))
        theta[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def gradient_check_error(analytic: np.ndarray, numeric: np.ndarray, floor_frac: float = 1e-3) -> float:
    """Worst per-coordinate relative error of ``analytic`` against ``numeric``.

    The denominator is ``max(|numeric_i|, floor_frac * max|numeric|)`` so that
    components far below the gradient's scale, where finite-difference
    truncation error dominates, are judged against that scale instead.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.abs(numeric).max(initial=0.0)) * floor_frac, 1e-300)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), scale), initial=0.0))
