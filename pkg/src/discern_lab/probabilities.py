"""Conditional outcome probabilities, observational equivalence and policy
counterfactuals.

Exact probabilities integrate a distribution of play against the index law
``V ~ N((beta1 z1, beta2 z2), [[1, rho], [rho, 1]])``.  The index plane is cut
into cells on which play is constant.  Axis-aligned cells are rectangle
probabilities; cells with a diagonal edge (total-profit comparisons,
most-profitable selection) are integrated along ``v1`` with the conditional
normal law of ``v2`` in closed form; equilibrium mixtures on the box use
tensor Gauss-Legendre cubature.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .dop import (BOX_CODE, MOST_PROFITABLE_ENTERS, Concept, DistributionOfPlay, evaluate_many,
                  outcome_codes)
from .errors import BracketError, ConfigError
from .game import OutcomeDist, Theta
from .numerics import (Rect, SeedStream, bvn_density, bvn_rect_prob, bvn_rect_prob_array,
                       find_root, gauss_legendre, normal_interval, quad2d,
                       sample_correlated_normals, std_normal_cdf, std_normal_pdf)

__all__ = [
    "MarketDesign",
    "ProbReport",
    "PolicyReport",
    "outcome_prob",
    "outcome_prob_array",
    "outcome_prob_mc",
    "match_eta",
    "equivalence",
    "policy_targeted",
    "targeted_frontier",
    "policy_lumpsum",
    "lumpsum_noservice",
    "region_polygons",
    "EquivalenceReport",
]

RECTANGLE_EXACT = "RectangleExact"
QUADRATURE = "Quadrature"
MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class MarketDesign:
    z1: float
    z2: float

    def __post_init__(self):
        if not (np.isfinite(self.z1) and np.isfinite(self.z2)):
            raise ConfigError("market covariates must be finite")


@dataclass(frozen=True)
class ProbReport:
    dist: OutcomeDist
    method: str
    se: Optional[tuple[float, float, float, float]] = None
    n: Optional[int] = None
    seed: Optional[SeedStream] = None

    def __post_init__(self):
        if (self.se is not None) != (self.method == MONTE_CARLO):
            raise ConfigError("standard errors accompany Monte Carlo reports only")


@dataclass(frozen=True)
class PolicyReport:
    """No-service probabilities with and without a subsidy.

    ``slope`` is the centred finite-difference derivative of the policy
    no-service probability (lump-sum scheme only).
    """

    tau: float
    p_noservice_baseline: float
    p_noservice_policy: float
    delta: float
    e_plus: Optional[float] = None
    e_minus: Optional[float] = None
    slope: Optional[float] = None


# --------------------------------------------------------------------------
# cell decomposition
# --------------------------------------------------------------------------

# A polygon is a tuple of half-planes (a1, a2, b) meaning a1*v1 + a2*v2 <= b.

@dataclass(frozen=True)
class _Cells:
    rects: tuple           # ((lo1, hi1, lo2, hi2), probs)
    polys: tuple           # (constraints, probs)
    mixture: Optional[tuple]  # (box, weight) for the mixed-equilibrium term


def _bands(lo: float, hi: float):
    bands = [(-np.inf, lo, lo - 1.0), (hi, np.inf, hi + 1.0)]
    if hi > lo:
        bands.insert(1, (lo, hi, 0.5 * (lo + hi)))
    return bands


def _box_polys(theta: Theta):
    """Split the box along the line where monopoly payoffs are equal."""
    (a10, _), (a20, _) = theta.alpha
    b = theta.box()
    edges = ((-1, 0, -b.lo1), (1, 0, b.hi1), (0, -1, -b.lo2), (0, 1, b.hi2))
    firm1 = edges + ((-1, 1, a10 - a20),)     # a10 + v1 >= a20 + v2
    firm2 = edges + ((1, -1, a20 - a10),)
    return firm1, firm2


@lru_cache(maxsize=256)
def _cells(d: DistributionOfPlay) -> _Cells:
    th = d.theta
    rects, polys, mixture = [], [], None
    if d.concept == Concept.MAXMIN:
        h1, h2 = th.thresholds(1)[1], th.thresholds(2)[1]
        for y1, (l1, u1) in enumerate(((-np.inf, h1), (h1, np.inf))):
            for y2, (l2, u2) in enumerate(((-np.inf, h2), (h2, np.inf))):
                p = np.zeros(4)
                p[2 * y1 + y2] = 1.0
                rects.append(((l1, u1, l2, u2), p))
    elif d.concept == Concept.COLLUSION:
        (a10, a11), (a20, a21) = th.alpha
        lin = [(0.0, 0, 0), (a20, 0, 1), (a10, 1, 0), (a11 + a21, 1, 1)]
        for y, (cy, py1, py2) in enumerate(lin):
            cons = tuple((pk1 - py1, pk2 - py2, cy - ck)
                         for k, (ck, pk1, pk2) in enumerate(lin) if k != y)
            p = np.zeros(4)
            p[y] = 1.0
            polys.append((cons, p))
    else:
        lo1, hi1 = th.thresholds(1)
        lo2, hi2 = th.thresholds(2)
        for l1, u1, r1 in _bands(lo1, hi1):
            for l2, u2, r2 in _bands(lo2, hi2):
                if (l1, u1) == (lo1, hi1) and (l2, u2) == (lo2, hi2):
                    continue
                p, _ = evaluate_many(d, [r1], [r2])
                rects.append(((l1, u1, l2, u2), p[0]))
        if hi1 > lo1 and hi2 > lo2:
            rule = d.box_rule()
            box = (lo1, hi1, lo2, hi2)
            if rule.kind == "most_profitable":
                f1, f2 = _box_polys(th)
                polys.append((f1, np.array([0.0, 0.0, 1.0, 0.0])))
                polys.append((f2, np.array([0.0, 1.0, 0.0, 0.0])))
            else:
                rects.append((box, rule.const))
                if rule.kind == "mixture":
                    mixture = (box, rule.mixed_weight)
    return _Cells(tuple(rects), tuple(polys), mixture)


def _polygon_prob(cons, m1, m2, rho: float) -> np.ndarray:
    """``P(V in polygon)`` for ``V ~ N(m, [[1, rho], [rho, 1]])``, vectorized over m.

    The probability is written as an integral over ``w1 = v1 - m1`` of
    ``phi(w1)`` times the conditional probability that ``v2`` falls in the
    polygon's vertical section.  Section endpoints are piecewise linear in
    ``w1``; integration pieces are split at every kink and cover the window
    where ``phi`` is within 1e-20 of its value at the point of the range
    closest to the mean, so tail cells keep relative precision.
    """
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    n = m1.shape[0]
    s = np.sqrt(1.0 - rho * rho)
    lower_w1 = np.full(n, -38.0)
    upper_w1 = np.full(n, 38.0)
    up_lines, low_lines = [], []          # w2 <= c + g*w1  /  w2 >= c + g*w1
    for a1, a2, b in cons:
        bb = b - a1 * m1 - a2 * m2
        if a2 == 0:
            if a1 > 0:
                upper_w1 = np.minimum(upper_w1, bb / a1)
            elif a1 < 0:
                lower_w1 = np.maximum(lower_w1, bb / a1)
            elif np.any(bb < 0):
                raise ConfigError("inconsistent constant constraint")
        else:
            line = (bb / a2, -a1 / a2)
            (up_lines if a2 > 0 else low_lines).append(line)
    lines = up_lines + low_lines
    kinks = []
    for j in range(len(lines)):
        for k in range(j + 1, len(lines)):
            (cj, gj), (ck, gk) = lines[j], lines[k]
            if gj != gk:
                kinks.append((ck - cj) / (gj - gk))
    out = np.zeros(n)
    ok = upper_w1 > lower_w1
    c = np.clip(0.0, lower_w1, upper_w1)
    reach = -np.abs(c) + np.sqrt(c * c + 92.0)
    a = np.maximum(lower_w1, c - reach)
    b = np.minimum(upper_w1, c + reach)
    nseg = 24
    grid = a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, nseg + 1)
    if kinks:
        kk = np.clip(np.stack(kinks, axis=1), a[:, None], b[:, None])
        grid = np.sort(np.concatenate([grid, kk], axis=1), axis=1)
    x, w = gauss_legendre(16)
    left, right = grid[:, :-1], grid[:, 1:]
    half = 0.5 * (right - left)
    nodes = left[:, :, None] + half[:, :, None] * (x + 1.0)      # (n, seg, 16)
    weights = half[:, :, None] * w
    hi_v = np.full(nodes.shape, np.inf)
    lo_v = np.full(nodes.shape, -np.inf)
    for cst, g in up_lines:
        hi_v = np.minimum(hi_v, cst[:, None, None] + g * nodes)
    for cst, g in low_lines:
        lo_v = np.maximum(lo_v, cst[:, None, None] + g * nodes)
    cond = np.where(hi_v > lo_v,
                    normal_interval((lo_v - rho * nodes) / s, (hi_v - rho * nodes) / s), 0.0)
    vals = std_normal_pdf(nodes) * cond * weights
    out[ok] = vals.reshape(n, -1).sum(axis=1)[ok]
    return out


def _mixture_integral(d: DistributionOfPlay, box, m1, m2, tol: float) -> np.ndarray:
    """Box integral of the mixed-equilibrium distribution against the index
    density, shape ``(n, 4)``.  A 24-point tensor rule is checked against a
    16-point one; means where they disagree by more than ``tol`` fall back to
    adaptive :func:`quad2d`."""
    lo1, hi1, lo2, hi2 = box
    rho = d.theta.rho

    def rule(npts):
        x, w = gauss_legendre(npts)
        h1, h2 = 0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2)
        xs, ys = lo1 + h1 * (x + 1.0), lo2 + h2 * (x + 1.0)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        W = (h1 * h2) * np.outer(w, w)
        g = d.mixed_product(X.ravel(), Y.ravel()) * W.ravel()[:, None]      # (q, 4)
        dens = bvn_density(X.ravel()[None, :] - m1[:, None], Y.ravel()[None, :] - m2[:, None], rho)
        return dens @ g

    fine = rule(24)
    coarse = rule(16)
    bad = np.abs(fine - coarse).max(axis=1) > tol
    for j in np.flatnonzero(bad):
        for k in range(4):
            def f(x, y, k=k, j=j):
                return (d.mixed_product(x, y)[..., k]
                        * bvn_density(x - m1[j], y - m2[j], rho))
            fine[j, k] = quad2d(f, Rect(lo1, hi1, lo2, hi2), tol)
    return fine


def outcome_prob_array(d: DistributionOfPlay, z1, z2, tol: float = 1e-10) -> np.ndarray:
    """Exact outcome probabilities at many covariate points, shape ``(n, 4)``."""
    th = d.theta
    m1, m2 = th.index_mean(np.atleast_1d(z1), np.atleast_1d(z2))
    m1, m2 = np.broadcast_arrays(m1, m2)
    cells = _cells(d)
    out = np.zeros((m1.shape[0], 4))
    for (l1, u1, l2, u2), p in cells.rects:
        out += bvn_rect_prob_array(l1 - m1, u1 - m1, l2 - m2, u2 - m2, th.rho)[:, None] * p
    for cons, p in cells.polys:
        out += _polygon_prob(cons, m1, m2, th.rho)[:, None] * p
    if cells.mixture is not None:
        box, weight = cells.mixture
        out += weight * _mixture_integral(d, box, m1, m2, tol)
    return out


def outcome_prob(d: DistributionOfPlay, m: MarketDesign, tol: float = 1e-10) -> ProbReport:
    """Exact conditional outcome probabilities ``P(y | z)``.

    Examples
    --------
    >>> from discern_lab.dop import DistributionOfPlay, Concept
    >>> d = DistributionOfPlay(Theta.symmetric_entry(1.0), Concept.SAA)
    >>> round(outcome_prob(d, MarketDesign(0.0, 0.0)).dist[(0, 0)], 5)
    0.14169
    """
    p = outcome_prob_array(d, [m.z1], [m.z2], tol)[0]
    method = QUADRATURE if _cells(d).mixture is not None else RECTANGLE_EXACT
    return ProbReport(OutcomeDist.from_array(p, clip=max(tol, 1e-13)), method)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DISCERN_LAB_THREADS", "1")))
    except ValueError:
        raise ConfigError("DISCERN_LAB_THREADS must be an integer") from None


def _batch_sum(d: DistributionOfPlay, v1: np.ndarray, v2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Summed distribution of play over nondegenerate draws, and the
    degenerate mask."""
    codes, degen = outcome_codes(d, v1, v2)
    codes = codes[~degen]
    total = np.bincount(codes, minlength=BOX_CODE + 1).astype(float)
    nbox = total[BOX_CODE]
    out = total[:4]
    if nbox:
        rule = d.box_rule()
        out = out + nbox * rule.const
        if rule.kind == "mixture":
            box = np.flatnonzero(~degen)[codes == BOX_CODE]
            out = out + rule.mixed_weight * d.mixed_product(v1[box], v2[box]).sum(axis=0)
    return out, degen


def _mc_batch(d: DistributionOfPlay, m1: float, m2: float, size: int, s: SeedStream,
              batch: int) -> np.ndarray:
    rho = d.theta.rho
    e = sample_correlated_normals(rho, size, s, batch)
    total, degen = _batch_sum(d, m1 - e[:, 0], m2 - e[:, 1])
    redraw = 0
    k = int(degen.sum())
    while k:
        # redraws come from counter ranges far above any regular batch
        redraw += 1
        e = sample_correlated_normals(rho, k, s, batch + (redraw << 32))
        part, degen = _batch_sum(d, m1 - e[:, 0], m2 - e[:, 1])
        total += part
        k = int(degen.sum())
    return total


def outcome_prob_mc(d: DistributionOfPlay, m: MarketDesign, n: int, s: SeedStream,
                    batch_size: int = 1 << 20) -> ProbReport:
    """Monte Carlo mean of the distribution of play over ``n`` shock draws.

    Draws are split into fixed batches, each with its own counter range of
    the stream, and summed in batch order; the result does not depend on
    ``DISCERN_LAB_THREADS``.
    """
    if n < 1000:
        raise ConfigError(f"Monte Carlo needs n >= 1000, got {n}")
    m1, m2 = (float(x) for x in d.theta.index_mean(m.z1, m.z2))
    sizes = [batch_size] * (n // batch_size)
    if n % batch_size:
        sizes.append(n % batch_size)
    jobs = list(enumerate(sizes))
    threads = min(_threads(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            sums = list(pool.map(lambda j: _mc_batch(d, m1, m2, j[1], s, j[0]), jobs))
    else:
        sums = [_mc_batch(d, m1, m2, size, s, b) for b, size in jobs]
    total = np.zeros(4)
    for part in sums:
        total += part
    p = total / n
    se = tuple(float(x) for x in np.sqrt(p * (1 - p) / n))
    return ProbReport(OutcomeDist.from_array(p), MONTE_CARLO, se=se, n=n, seed=s)


# --------------------------------------------------------------------------
# observational equivalence
# --------------------------------------------------------------------------

def _saa(eta: float, rho: float) -> DistributionOfPlay:
    return DistributionOfPlay(Theta.symmetric_entry(eta, rho), Concept.SAA)


def _pne(eta: float, rho: float) -> DistributionOfPlay:
    return DistributionOfPlay(Theta.symmetric_entry(eta, rho), Concept.NASH, MOST_PROFITABLE_ENTERS)


def match_eta(eta: float, tol: float = 1e-10, rho: float = 0.0) -> float:
    """Monopoly profit under which most-profitable-enters equilibrium play
    reproduces the no-entry probability of ambiguity-averse play.

    Solves ``P(e1 > eta', e2 > eta') = p_SAA((0,0); eta)`` at ``z = 0`` on
    ``(0, eta)``.

    Raises
    ------
    BracketError
        If ``eta <= 0``.
    """
    if not eta > 0:
        raise BracketError(f"eta must be positive, got {eta}")
    target = outcome_prob(_saa(eta, rho), MarketDesign(0.0, 0.0)).dist[(0, 0)]

    def gap(x):
        return bvn_rect_prob(Rect(x, np.inf, x, np.inf), rho) - target

    return find_root(gap, 0.0, eta, 0.1 * tol)


@dataclass(frozen=True)
class EquivalenceReport:
    eta: float
    eta_prime: float
    saa: OutcomeDist
    pne: OutcomeDist

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.saa.as_array() - self.pne.as_array())))


def equivalence(eta: float, tol: float = 1e-10, rho: float = 0.0) -> EquivalenceReport:
    """Solve :func:`match_eta` and compare all four outcome probabilities."""
    ep = match_eta(eta, tol, rho)
    z0 = MarketDesign(0.0, 0.0)
    return EquivalenceReport(eta, ep, outcome_prob(_saa(eta, rho), z0).dist,
                             outcome_prob(_pne(ep, rho), z0).dist)


# --------------------------------------------------------------------------
# policy counterfactuals
# --------------------------------------------------------------------------

def policy_targeted(eta: float, tau: float, concept: str = "saa", rho: float = 0.0) -> PolicyReport:
    """Subsidy ``tau`` paid to firm 1 when it enters alone.

    The subsidy raises firm 1's monopoly intercept from ``eta`` to
    ``eta + tau``.  ``e_plus`` is the probability of shocks that move from no
    service to a firm-1 monopoly; under ambiguity-averse play (``"saa"``)
    ``e_minus`` is the probability of shocks that move from a firm-2 monopoly
    into the enlarged multiplicity box, where nobody enters.  Under
    most-profitable equilibrium play (``"pne"``) ``e_minus`` is zero.
    """
    if not (eta > 0 and tau > 0):
        raise ConfigError(f"need eta > 0 and tau > 0, got eta={eta}, tau={tau}")
    base = Theta.symmetric_entry(eta, rho)
    pol = Theta(((eta + tau, 0.0), (eta, 0.0)), (1.0, 1.0), rho)
    if concept == "saa":
        d0, d1 = DistributionOfPlay(base, Concept.SAA), DistributionOfPlay(pol, Concept.SAA)
    elif concept == "pne":
        d0 = DistributionOfPlay(base, Concept.NASH, MOST_PROFITABLE_ENTERS)
        d1 = DistributionOfPlay(pol, Concept.NASH, MOST_PROFITABLE_ENTERS)
    else:
        raise ConfigError(f"concept must be 'saa' or 'pne', got {concept!r}")
    z0 = MarketDesign(0.0, 0.0)
    p0 = outcome_prob(d0, z0).dist[(0, 0)]
    p1 = outcome_prob(d1, z0).dist[(0, 0)]
    e_plus = bvn_rect_prob(Rect(eta, eta + tau, eta, np.inf), rho)
    e_minus = bvn_rect_prob(Rect(eta, eta + tau, 0.0, eta), rho) if concept == "saa" else 0.0
    return PolicyReport(tau, p0, p1, p1 - p0, e_plus, e_minus)


def targeted_frontier(tau: float, lo: float = 0.05, hi: float = 3.0, tol: float = 1e-10) -> float:
    """Monopoly profit at which the targeted subsidy's effect on no-service
    changes sign under ambiguity-averse play."""
    return find_root(lambda e: policy_targeted(e, tau).delta, lo, hi, tol)


def lumpsum_noservice(alpha: float, eta: float, tau_hat):
    """No-service probability under a subsidy ``tau_hat`` paid to every entrant,
    with independent standard normal shocks and ambiguity-averse play."""
    top = np.asarray(alpha + eta + tau_hat, dtype=float)
    bottom = np.asarray(alpha + tau_hat, dtype=float)
    return (1.0 - std_normal_cdf(top)) ** 2 + normal_interval(bottom, top) ** 2


def policy_lumpsum(alpha: float, eta: float, tau_hat: float, h: float = 1e-5) -> PolicyReport:
    """Lump-sum entry subsidy: ``P(tau_hat)``, ``P(0)`` and a centred
    finite-difference slope ``P'(tau_hat)`` with step ``h``."""
    if eta < 0:
        raise ConfigError(f"eta must be nonnegative, got {eta}")
    p0 = float(lumpsum_noservice(alpha, eta, 0.0))
    p1 = float(lumpsum_noservice(alpha, eta, tau_hat))
    slope = float((lumpsum_noservice(alpha, eta, tau_hat + h)
                   - lumpsum_noservice(alpha, eta, tau_hat - h)) / (2.0 * h))
    return PolicyReport(tau_hat, p0, p1, p1 - p0, slope=slope)


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def _clip_polygon(vertices: list, a1: float, a2: float, b: float) -> list:
    """Clip a convex polygon to the half-plane ``a1 v1 + a2 v2 <= b``."""
    out = []
    n = len(vertices)
    for k in range(n):
        p, q = vertices[k], vertices[(k + 1) % n]
        fp = a1 * p[0] + a2 * p[1] - b
        fq = a1 * q[0] + a2 * q[1] - b
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            s = fp / (fp - fq)
            out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
    return out


def region_polygons(d: DistributionOfPlay, window: float = 4.0) -> list:
    """Cells of constant play as polygons in the index plane, clipped to
    ``[-window, window]**2``.

    Returns
    -------
    list of (label, probs, vertices)
        ``label`` is ``"box-mixture"`` for the cell carrying the equilibrium
        mixture and ``"cell"`` otherwise; ``probs`` is the constant part of
        play on the cell.
    """
    square = [(-window, -window), (window, -window), (window, window), (-window, window)]
    cells = _cells(d)
    out = []
    for (l1, u1, l2, u2), p in cells.rects:
        poly = square
        for cons in ((-1, 0, -l1), (1, 0, u1), (0, -1, -l2), (0, 1, u2)):
            if np.isfinite(cons[2]):
                poly = _clip_polygon(poly, *cons)
        label = "box-mixture" if cells.mixture is not None and cells.mixture[0] == (l1, u1, l2, u2) else "cell"
        if len(poly) >= 3:
            out.append((label, p, poly))
    for cons, p in cells.polys:
        poly = square
        for c in cons:
            poly = _clip_polygon(poly, *c)
        if len(poly) >= 3:
            out.append(("cell", p, poly))
    return out
