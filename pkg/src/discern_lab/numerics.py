"""Numerical kernels: normal distributions, rectangle probabilities,
two-dimensional quadrature, root finding and reproducible sampling.

Everything here is deterministic given its inputs.  The univariate normal
functions delegate to :mod:`scipy.special`; the bivariate rectangle
probability uses the Drezner-Wesolowsky reduction as refined by Genz,
vectorized over the integration limits.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import BracketError, DomainError, QuadratureError

_SQRT_2PI = np.sqrt(2.0 * np.pi)

__all__ = [
    "Rect",
    "SeedStream",
    "check_rho",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_pdf",
    "std_normal_quantile",
    "normal_interval",
    "bvn_upper",
    "bvn_rect_prob",
    "bvn_rect_prob_array",
    "bvn_density",
    "sample_correlated_normals",
    "gauss_legendre",
    "quad2d",
    "find_root",
]


# --------------------------------------------------------------------------
# univariate normal
# --------------------------------------------------------------------------

def std_normal_cdf(x):
    """Standard normal CDF, accepting scalars, arrays and +-inf."""
    return special.ndtr(x)


def std_normal_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation for large ``x``."""
    return special.ndtr(-np.asarray(x, dtype=float))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval.

    Raises
    ------
    DomainError
        If any ``p`` lies outside ``(0, 1)``.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"quantile needs p in (0, 1), got {p!r}")
    return special.ndtri(arr)


def normal_interval(a, b):
    """``Phi(b) - Phi(a)`` evaluated on the tail side that keeps precision."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    out = np.where(upper, special.ndtr(-a) - special.ndtr(-b),
                   special.ndtr(b) - special.ndtr(a))
    return np.maximum(out, 0.0)


# --------------------------------------------------------------------------
# bivariate normal
# --------------------------------------------------------------------------

def check_rho(rho: float) -> float:
    """Validate a correlation coefficient; it must lie strictly in (-1, 1)."""
    rho = float(rho)
    if not (-1.0 < rho < 1.0):
        raise DomainError(f"correlation must lie in (-1, 1), got {rho}")
    return rho


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[lo1, hi1] x [lo2, hi2]``; infinite ends allowed."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self):
        vals = (self.lo1, self.hi1, self.lo2, self.hi2)
        if any(np.isnan(v) for v in vals):
            raise DomainError("rectangle limits must not be NaN")
        if self.lo1 > self.hi1 or self.lo2 > self.hi2:
            raise DomainError(f"rectangle limits out of order: {vals}")

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite([self.lo1, self.hi1, self.lo2, self.hi2])))


# Gauss-Legendre half-rules (positive abscissae) used by the reduction.
_GL6 = (np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
        np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]))
_GL12 = (np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                   0.2031674267230659, 0.2334925365383547, 0.2491470458134029]),
         np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                   0.5873179542866171, 0.3678314989981802, 0.1252334085114692]))
_GL20 = (np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                   0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                   0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                   0.1527533871307259]),
         np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                   0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                   0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                   0.07652652113349733]))


def _bvnu_finite(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """Upper orthant ``P(X > h, Y > k)`` for finite 1-D arrays and scalar r."""
    if r == 0.0:
        return special.ndtr(-h) * special.ndtr(-k)
    ar = abs(r)
    w, x = _GL6 if ar < 0.3 else _GL12 if ar < 0.75 else _GL20
    hk = h * k
    if ar < 0.925:
        nodes = np.concatenate(((1.0 - x) / 2.0, (1.0 + x) / 2.0))
        weights = np.concatenate((w, w))
        asr = np.arcsin(r)
        sn = np.sin(asr * nodes)
        hs = (h * h + k * k) / 2.0
        expo = (sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)
        bvn = np.exp(expo) @ weights
        return bvn * asr / (4.0 * np.pi) + special.ndtr(-h) * special.ndtr(-k)

    if r < 0:
        k = -k
        hk = -hk
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        as_ = (1.0 - r) * (1.0 + r)
        a = np.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / as_ + hk) / 2.0
        bvn = np.where(
            asr > -100.0,
            a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                               + c * d * as_ * as_ / 5.0),
            0.0)
        b = np.sqrt(bs)
        sp = _SQRT_2PI * special.ndtr(-b / a)
        tail = np.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        bvn = bvn - np.where(-hk < 100.0, tail, 0.0)
        a = a / 2.0
        for sgn in (-1.0, 1.0):
            xs = (a * (sgn * x + 1.0)) ** 2          # shape (m,)
            rs = np.sqrt(1.0 - xs)
            asr = -(bs[:, None] / xs + hk[:, None]) / 2.0
            sp = 1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs)
            ep = np.exp(-hk[:, None] * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
            term = np.where(asr > -100.0, a * w * np.exp(asr) * (ep - sp), 0.0)
            bvn = bvn + term.sum(axis=1)
        bvn = -bvn / (2.0 * np.pi)
    if r > 0:
        bvn = bvn + special.ndtr(-np.maximum(h, k))
    else:
        bvn = -bvn + np.maximum(0.0, special.ndtr(-h) - special.ndtr(-k))
    return bvn


def bvn_upper(h, k, rho: float):
    """Upper orthant probability ``P(X > h, Y > k)`` of a standard bivariate
    normal with correlation ``rho``.

    ``h`` and ``k`` broadcast against each other and may contain +-inf.
    Absolute error is about 1e-15.
    """
    rho = check_rho(rho)
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    shape = h.shape
    h = h.ravel()
    k = k.ravel()
    out = np.empty(h.shape)
    fin = np.isfinite(h) & np.isfinite(k)
    inf = ~fin
    if inf.any():
        hi, ki = h[inf], k[inf]
        val = np.where(hi == -np.inf, special.ndtr(-ki), special.ndtr(-hi))
        val = np.where((hi == np.inf) | (ki == np.inf), 0.0, val)
        out[inf] = val
    if fin.any():
        out[fin] = _bvnu_finite(h[fin], k[fin], rho)
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_rect_prob_array(lo1, hi1, lo2, hi2, rho: float):
    """Vectorized rectangle probability for a standard bivariate normal.

    Each axis whose interval sits mostly below zero is reflected first (which
    flips the sign of the correlation once per reflected axis), so that the
    inclusion-exclusion over upper orthants keeps relative precision for
    rectangles deep in either tail.
    """
    rho = check_rho(rho)
    lo1, hi1, lo2, hi2 = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                               for a in (lo1, hi1, lo2, hi2)))
    shape = lo1.shape
    lo1, hi1, lo2, hi2 = (a.ravel().copy() for a in (lo1, hi1, lo2, hi2))
    empty = (hi1 <= lo1) | (hi2 <= lo2)
    with np.errstate(invalid="ignore"):
        flip1 = (lo1 + hi1) < 0
        flip2 = (lo2 + hi2) < 0
    lo1[flip1], hi1[flip1] = -hi1[flip1], -lo1[flip1]
    lo2[flip2], hi2[flip2] = -hi2[flip2], -lo2[flip2]
    sign = np.where(flip1 ^ flip2, -1.0, 1.0)
    out = np.zeros(lo1.shape)
    for s in (1.0, -1.0):
        sel = (sign == s) & ~empty
        if not sel.any():
            continue
        a1, b1, a2, b2 = lo1[sel], hi1[sel], lo2[sel], hi2[sel]
        h = np.concatenate((a1, b1, a1, b1))
        k = np.concatenate((a2, a2, b2, b2))
        u = bvn_upper(h, k, s * rho).reshape(4, -1)
        out[sel] = u[0] - u[1] - u[2] + u[3]
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_rect_prob(r: Rect, rho: float) -> float:
    """Probability that a standard bivariate normal with correlation ``rho``
    lies in the rectangle ``r``.

    Examples
    --------
    >>> round(bvn_rect_prob(Rect(0, np.inf, 0, np.inf), 0.5), 6)
    0.333333
    """
    return float(bvn_rect_prob_array(r.lo1, r.hi1, r.lo2, r.hi2, rho))


def bvn_density(x, y, rho: float):
    rho = check_rho(rho)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s2 = 1.0 - rho * rho
    q = (x * x - 2.0 * rho * x * y + y * y) / s2
    return np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(s2))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

_U64 = 2 ** 64


@dataclass(frozen=True)
class SeedStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    The stream is a Philox counter-based generator whose 128-bit key is the
    pair.  ``generator(batch)`` places batches in disjoint counter ranges, so
    batch ``b`` is the same sequence no matter which worker draws it.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            val = getattr(self, name)
            if not (isinstance(val, (int, np.integer)) and 0 <= val < _U64):
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {val!r}")

    def generator(self, batch: int = 0) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, batch, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sample_correlated_normals(rho: float, n: int, s: SeedStream, batch: int = 0) -> np.ndarray:
    """Draw ``n`` shock pairs with unit variances and correlation ``rho``.

    The second coordinate is built from an independent factor as
    ``e2 = sqrt(1 - rho**2) * xi + rho * e1``.

    Returns
    -------
    ndarray of shape (n, 2)
    """
    rho = check_rho(rho)
    if n < 1:
        raise DomainError(f"sample size must be positive, got {n}")
    raw = s.generator(batch).standard_normal((n, 2))
    out = np.empty_like(raw)
    out[:, 0] = raw[:, 0]
    out[:, 1] = np.sqrt(1.0 - rho * rho) * raw[:, 1] + rho * raw[:, 0]
    return out


# --------------------------------------------------------------------------
# quadrature and roots
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _tensor_rule(f, x0, x1, y0, y1, n):
    x, w = gauss_legendre(n)
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    xs = x0 + hx * (x + 1.0)
    ys = y0 + hy * (x + 1.0)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
    return hx * hy * (w @ vals @ w)


def quad2d(f: Callable, r: Rect, tol: float = 1e-10, max_subdivisions: int = 4000) -> float:
    """Adaptive tensor Gauss-Legendre cubature over a bounded rectangle.

    Each cell is integrated with an 8- and a 16-point product rule; the
    difference is the cell's error estimate.  The cell with the largest
    estimate is split into four until the summed estimate is below ``tol``.

    Parameters
    ----------
    f : callable
        Vectorized integrand ``f(x, y)`` accepting equal-shape arrays.
    r : Rect
        Bounded integration rectangle.
    tol : float
        Absolute error target.

    Raises
    ------
    QuadratureError
        If ``max_subdivisions`` splits do not reach ``tol``.
    """
    if not r.bounded:
        raise DomainError("quad2d needs a bounded rectangle")
    if tol <= 0:
        raise DomainError("tol must be positive")

    def cell(x0, x1, y0, y1):
        fine = _tensor_rule(f, x0, x1, y0, y1, 16)
        coarse = _tensor_rule(f, x0, x1, y0, y1, 8)
        return fine, abs(fine - coarse)

    val, err = cell(r.lo1, r.hi1, r.lo2, r.hi2)
    heap = [(-err, 0, (r.lo1, r.hi1, r.lo2, r.hi2), val)]
    total, total_err = val, err
    counter = 1
    splits = 0
    while total_err > tol:
        if splits >= max_subdivisions:
            raise QuadratureError(
                f"quad2d: estimated error {total_err:.3g} above tol {tol:.3g} "
                f"after {splits} subdivisions")
        neg_err, _, (x0, x1, y0, y1), v = heapq.heappop(heap)
        total -= v
        total_err += neg_err
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        for box in ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)):
            v, e = cell(*box)
            total += v
            total_err += e
            heapq.heappush(heap, (-e, counter, box, v))
            counter += 1
        splits += 1
    return float(total)


def find_root(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12) -> float:
    """Root of a continuous scalar function on a sign-changing bracket.

    Uses Brent's method (bisection safeguarded by inverse quadratic
    interpolation), so convergence is guaranteed once the bracket is valid.

    Raises
    ------
    BracketError
        If ``f(a)`` and ``f(b)`` have the same strict sign.
    """
    fa, fb = float(f(a)), float(f(b))
    if np.isnan(fa) or np.isnan(fb):
        raise BracketError("function is NaN at a bracket endpoint")
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]: f(a)={fa:.3g}, f(b)={fb:.3g}")
    return float(optimize.brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
