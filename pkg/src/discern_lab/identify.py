"""Recovering primitives from conditional outcome probabilities.

The pipeline works with an oracle ``z -> P(y | z)`` and replaces limits in
the covariates by evaluations at a large index value ``L``:

1. slope signs from entry probabilities at extreme covariates;
2. slope and location of each player's entry curve with the opponent
   forced out, from the first two Stieltjes moments of that curve;
3. the marginal shock CDFs from the same curves;
4. quantile differences ``t_i`` between the opponent-in and opponent-out
   limits, which separate rationalizable, maxmin and collusive play, and the
   intercept combinations each concept leaves identified;
5. the shock correlation from the jump of a normalized derivative profile.

Covariates are internally re-expressed in index units
``s_i = beta_i z_i + c_i`` once the slope and location are known.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import isotonic_regression
from scipy.spatial import cKDTree

from .dop import DistributionOfPlay
from .errors import (AmbiguityError, ConfigError, EmptyNeighborhoodError, InversionError,
                     NoJumpError, NonMonotoneError)
from .game import OutcomeDist
from .numerics import SeedStream
from .probabilities import MarketDesign, outcome_prob_array

__all__ = [
    "POINT",
    "PARTIAL",
    "NOT_IDENTIFIED",
    "LimitConfig",
    "ProbOracle",
    "ExactOracle",
    "BinnedOracle",
    "exact_oracle",
    "binned_oracle",
    "Estimate",
    "AlphaEstimate",
    "MarginalCDF",
    "IdentifiedParams",
    "recover_beta_sign",
    "recover_beta_delta",
    "recover_marginal_cdf",
    "recover_alphas",
    "discern_statistic",
    "psi_profile",
    "recover_rho",
    "identify",
]

POINT = "Point"
PARTIAL = "PartialOnly"
NOT_IDENTIFIED = "NotIdentified"

RATIONALIZABLE = "Rationalizable"
MAXMIN = "Maxmin"
COLLUSION = "Collusion"
AMBIGUOUS = "Ambiguous"


@dataclass(frozen=True)
class LimitConfig:
    """Discretization of the limit operations.

    Attributes
    ----------
    L : float
        Index value standing in for infinity (at least 6).
    grid_step : float
        Spacing, in index units, of the grid on ``[-L, L]`` used for entry
        curves and marginal CDFs.
    fd_step : float
        Central-difference step in index units, in (0, 0.1].
    tau_grid : sequence of float
        Slopes of the rays ``s2 = tau * s1`` scanned for the correlation.
    tol_t : float
        Classification tolerance for the quantile differences (exact mode).
    monotone_tol : float
        Largest decrease tolerated in an estimated entry curve.
    rho_ladder : sequence of float
        Multiples of ``L`` at which the correlation crossing is located; two
        values enable a first-order extrapolation in ``1/L``.
    max_passes : int
        Cap on slope/location refinement passes.
    """

    L: float = 8.0
    grid_step: float = 0.01
    fd_step: float = 1e-3
    tau_grid: Sequence[float] = field(default_factory=lambda: tuple(np.round(np.linspace(-0.95, 0.95, 191), 10)))
    tol_t: float = 0.02
    monotone_tol: float = 1e-6
    rho_ladder: Sequence[float] = (1.0, 2.0)
    max_passes: int = 6

    def __post_init__(self):
        if not self.L >= 6:
            raise ConfigError(f"L must be at least 6, got {self.L}")
        if not 0 < self.fd_step <= 0.1:
            raise ConfigError(f"fd_step must lie in (0, 0.1], got {self.fd_step}")
        if not 0 < self.grid_step <= 0.5:
            raise ConfigError(f"grid_step must lie in (0, 0.5], got {self.grid_step}")
        tau = np.asarray(self.tau_grid, dtype=float)
        if tau.size < 3 or np.any(np.abs(tau) >= 1) or np.any(np.diff(tau) <= 0):
            raise ConfigError("tau_grid must be an increasing grid inside (-1, 1)")
        if not self.rho_ladder or min(self.rho_ladder) < 1.0:
            raise ConfigError("rho_ladder multiples must be at least 1")

    @property
    def grid(self) -> np.ndarray:
        n = int(round(2 * self.L / self.grid_step))
        return np.linspace(-self.L, self.L, n + 1)


# --------------------------------------------------------------------------
# oracles
# --------------------------------------------------------------------------

class ProbOracle:
    """Conditional outcome probabilities as a function of covariates."""

    mode = "Exact"

    def query(self, z1, z2) -> np.ndarray:
        """Outcome probabilities at covariate arrays, shape ``(n, 4)``."""
        raise NotImplementedError

    def __call__(self, m: MarketDesign) -> OutcomeDist:
        return OutcomeDist.from_array(self.query([m.z1], [m.z2])[0], clip=1e-9)


class ExactOracle(ProbOracle):
    """Exact probabilities of a known distribution of play."""

    mode = "Exact"

    def __init__(self, dop: DistributionOfPlay, tol: float = 1e-12):
        self.dop = dop
        self.tol = tol

    def query(self, z1, z2):
        z1, z2 = np.broadcast_arrays(np.atleast_1d(np.asarray(z1, float)),
                                     np.atleast_1d(np.asarray(z2, float)))
        return outcome_prob_array(self.dop, z1, z2, self.tol)


class BinnedOracle(ProbOracle):
    """Nadaraya-Watson outcome frequencies with a Gaussian product kernel.

    Observations farther than five bandwidths from a query are ignored; a
    query with no such observation raises :class:`EmptyNeighborhoodError`.
    """

    mode = "Binned"

    def __init__(self, z: np.ndarray, y: np.ndarray, bandwidth: float):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=int)
        if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] == 0 or y.shape != z.shape:
            raise ConfigError("dataset needs matching nonempty (n, 2) covariate and outcome arrays")
        if not np.all(np.isin(y, (0, 1))):
            raise ConfigError("outcomes must be 0 or 1")
        if not bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
        self.z = z
        self.cell = 2 * y[:, 0] + y[:, 1]
        self.bandwidth = float(bandwidth)
        self.tree = cKDTree(z)

    def _neighbors(self, z1, z2):
        pts = np.column_stack(np.broadcast_arrays(np.atleast_1d(np.asarray(z1, float)),
                                                  np.atleast_1d(np.asarray(z2, float))))
        idx = self.tree.query_ball_point(pts, 5.0 * self.bandwidth)
        for q, nb in zip(pts, idx):
            if len(nb) == 0:
                raise EmptyNeighborhoodError(f"no observations within 5 bandwidths of z={tuple(q)}")
        return pts, idx

    def _weights(self, q, nb):
        d = (self.z[nb] - q) / self.bandwidth
        return np.exp(-0.5 * (d * d).sum(axis=1))

    def query(self, z1, z2):
        pts, idx = self._neighbors(z1, z2)
        out = np.empty((len(idx), 4))
        for j, (q, nb) in enumerate(zip(pts, idx)):
            w = self._weights(q, nb)
            out[j] = np.bincount(self.cell[nb], weights=w, minlength=4) / w.sum()
        return out

    def query_bootstrap(self, z1, z2, reps: int, s: SeedStream) -> np.ndarray:
        """Multiplier-bootstrap replicates of :meth:`query`, shape ``(reps, n, 4)``.

        Each replicate rescales kernel weights by independent unit-mean
        exponential multipliers.
        """
        pts, idx = self._neighbors(z1, z2)
        rng = s.generator()
        out = np.empty((reps, len(idx), 4))
        for j, (q, nb) in enumerate(zip(pts, idx)):
            w = self._weights(q, nb) * rng.exponential(size=(reps, len(nb)))
            onehot = np.eye(4)[self.cell[nb]]
            out[:, j] = (w @ onehot) / w.sum(axis=1, keepdims=True)
        return out


def exact_oracle(dop: DistributionOfPlay, tol: float = 1e-12) -> ExactOracle:
    return ExactOracle(dop, tol)


def binned_oracle(dataset, bandwidth: float) -> BinnedOracle:
    """Kernel-smoothed oracle from rows ``(z1, z2, y1, y2)``."""
    arr = np.asarray(dataset, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4 or arr.shape[0] == 0:
        raise ConfigError("dataset must be a nonempty table with columns z1, z2, y1, y2")
    return BinnedOracle(arr[:, :2], arr[:, 2:].astype(int), bandwidth)


# --------------------------------------------------------------------------
# result types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: Optional[float]
    status: str


@dataclass(frozen=True)
class AlphaEstimate:
    descriptor: str
    value: Optional[float]
    status: str


@dataclass(frozen=True)
class MarginalCDF:
    """A monotone CDF tabulated on a grid, with monotone cubic interpolation."""

    t: np.ndarray
    F: np.ndarray

    def cdf(self, x):
        return np.clip(PchipInterpolator(self.t, self.F, extrapolate=False)(x), 0.0, 1.0)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        F, keep = np.unique(self.F, return_index=True)
        t = self.t[keep]
        inner = (F > 0.0) & (F < 1.0)
        F, t = F[inner], t[inner]
        if F.size < 2 or np.any(p <= F[0]) or np.any(p >= F[-1]):
            raise InversionError(f"probability {p} outside the estimated CDF range "
                                 f"[{F[0] if F.size else np.nan}, {F[-1] if F.size else np.nan}]")
        return PchipInterpolator(F, t)(p)


@dataclass(frozen=True)
class IdentifiedParams:
    """Output of :func:`identify`.

    ``delta_hat[i]`` is the location of player ``i``'s limiting entry curve
    ``F(beta_i z_i + delta_i)``: the monopoly intercept under rationalizable
    or collusive play, the smaller intercept under maxmin play.  Strategic
    effects are read from ``t_stats``.
    """

    beta_hat: tuple[Estimate, Estimate]
    delta_hat: tuple[Estimate, Estimate]
    F_hat: tuple[MarginalCDF, MarginalCDF]
    F_status: tuple[str, str]
    alpha_hats: list[AlphaEstimate]
    rho_hat: Optional[Estimate]
    concept_class: str
    t_stats: tuple[float, float]
    t_tol: tuple[float, float, float]

    def alpha(self, descriptor: str) -> AlphaEstimate:
        for a in self.alpha_hats:
            if a.descriptor == descriptor:
                return a
        return AlphaEstimate(descriptor, None, NOT_IDENTIFIED)


# --------------------------------------------------------------------------
# stage 1: signs, slopes, locations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Fit:
    """Index map ``s = beta * z + shift`` for both players."""

    beta: tuple[float, float]
    shift: tuple[float, float]

    def z(self, j: int, s):
        return (np.asarray(s, dtype=float) - self.shift[j]) / self.beta[j]


def _query_pair(oracle: ProbOracle, i: int, zi, zj) -> np.ndarray:
    zi, zj = np.broadcast_arrays(np.atleast_1d(np.asarray(zi, float)),
                                 np.atleast_1d(np.asarray(zj, float)))
    return oracle.query(zi, zj) if i == 0 else oracle.query(zj, zi)


def _entry_prob(p: np.ndarray, i: int) -> np.ndarray:
    return p[:, 2] + p[:, 3] if i == 0 else p[:, 1] + p[:, 3]


def _player_index(i: int) -> int:
    if i not in (1, 2):
        raise ConfigError(f"player must be 1 or 2, got {i!r}")
    return i - 1


def _sign(oracle: ProbOracle, cfg: LimitConfig, k: int) -> float:
    p = _query_pair(oracle, k, [-cfg.L, -cfg.L], [-cfg.L, cfg.L])
    stay_out = 1.0 - _entry_prob(p, k)
    # the probe is taken at both opponent extremes; the decision must agree
    if np.any((stay_out >= 0.25) & (stay_out <= 0.75)):
        raise AmbiguityError(f"sign probe for player {k + 1} is uninformative: "
                             f"P(out)={stay_out}")
    signs = np.where(stay_out > 0.5, 1.0, -1.0)
    if signs[0] != signs[1]:
        raise AmbiguityError(f"sign probe for player {k + 1} depends on the opponent")
    return float(signs[0])


def recover_beta_sign(oracle: ProbOracle, cfg: LimitConfig, i: int) -> int:
    """Sign of player ``i``'s covariate slope.

    With payoffs increasing in ``beta_i z_i``, a positive slope makes staying
    out nearly certain at ``z_i = -L``; a negative slope makes entry nearly
    certain there.

    Raises
    ------
    AmbiguityError
        If the probability of staying out lies in [0.25, 0.75].
    """
    return int(_sign(oracle, cfg, _player_index(i)))


def _stieltjes(t: np.ndarray, p: np.ndarray, tol: float) -> tuple[float, float]:
    drop = np.max(p[:-1] - p[1:], initial=0.0)
    if drop > tol:
        raise NonMonotoneError(f"entry curve decreases by {drop:.3g} (tolerance {tol:.3g})")
    p = isotonic_regression(p, increasing=True).x
    dp = np.diff(p)
    mass = dp.sum()
    if mass <= 0.5:
        raise NonMonotoneError(f"entry curve rises by only {mass:.3g} across the grid")
    mid = 0.5 * (t[:-1] + t[1:])
    m1 = (mid * dp).sum() / mass
    m2 = (mid * mid * dp).sum() / mass - ((t[1:] - t[:-1]) ** 2 * dp).sum() / (12.0 * mass)
    return m1, m2


def _out_curve(oracle: ProbOracle, cfg: LimitConfig, fit: _Fit, k: int, t: np.ndarray,
               L: Optional[float] = None) -> np.ndarray:
    """Entry probability of player ``k`` along index values ``t`` with the
    opponent's index at ``-L``."""
    j = 1 - k
    L = cfg.L if L is None else L
    p = _query_pair(oracle, k, fit.z(k, t), fit.z(j, -L))
    return _entry_prob(p, k)


def _fit_marginals(oracle: ProbOracle, cfg: LimitConfig) -> _Fit:
    signs = (_sign(oracle, cfg, 0), _sign(oracle, cfg, 1))
    fit = _Fit(signs, (0.0, 0.0))
    t = cfg.grid
    for _ in range(cfg.max_passes):
        beta, shift = [], []
        for k in (0, 1):
            m1, m2 = _stieltjes(t, _out_curve(oracle, cfg, fit, k, t), cfg.monotone_tol)
            var = m2 - m1 * m1
            if not var > 0:
                raise NonMonotoneError("entry curve has no spread")
            r = 1.0 / np.sqrt(var)
            c = -r * m1
            beta.append(r * fit.beta[k])
            shift.append(c + r * fit.shift[k])
        new = _Fit(tuple(beta), tuple(shift))
        change = max(abs(new.beta[k] - fit.beta[k]) + abs(new.shift[k] - fit.shift[k]) for k in (0, 1))
        fit = new
        if change < 1e-9:
            break
    return fit


def recover_beta_delta(oracle: ProbOracle, cfg: LimitConfig, i: int) -> tuple[float, float]:
    """Slope and location of player ``i``'s entry curve with the opponent out.

    The curve is ``F(beta_i z_i + delta_i)`` for a standardized shock CDF
    ``F``; its Stieltjes moments give ``beta_i**2 = 1 / (m2 - m1**2)`` and
    ``delta_i = -beta_i m1``.  The evaluation grid is re-centred on the
    estimated index and the opponent re-placed at index ``-L`` until the
    estimates settle.
    """
    fit = _fit_marginals(oracle, cfg)
    k = _player_index(i)
    return fit.beta[k], fit.shift[k]


def _marginal(oracle: ProbOracle, cfg: LimitConfig, fit: _Fit, k: int) -> MarginalCDF:
    t = cfg.grid
    F = _out_curve(oracle, cfg, fit, k, t)
    F = np.clip(isotonic_regression(F, increasing=True).x, 0.0, 1.0)
    return MarginalCDF(t, F)


def recover_marginal_cdf(oracle: ProbOracle, cfg: LimitConfig, i: int,
                         beta_i: Optional[float] = None, delta_i: Optional[float] = None) -> MarginalCDF:
    """Marginal shock CDF ``F(t) = p_i((t - delta_i) / beta_i)`` on the grid.

    ``beta_i`` and ``delta_i`` default to :func:`recover_beta_delta`; the
    opponent's index map is always re-estimated.
    """
    fit = _fit_marginals(oracle, cfg)
    k = _player_index(i)
    if beta_i is not None or delta_i is not None:
        beta = list(fit.beta)
        shift = list(fit.shift)
        beta[k] = fit.beta[k] if beta_i is None else float(beta_i)
        shift[k] = fit.shift[k] if delta_i is None else float(delta_i)
        fit = _Fit(tuple(beta), tuple(shift))
    return _marginal(oracle, cfg, fit, k)


# --------------------------------------------------------------------------
# stage 2: limits, quantile differences, intercepts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Limits:
    t: list                 # per player: index points used
    lo: list                # per player: F^-1(mu at opponent out)
    hi: list                # per player: F^-1(mu at opponent in)
    stat: tuple             # (t1, t2)
    tol: tuple              # (tol for t1, tol for t2, tol for t1 - t2)


def _limit_points(oracle, cfg, fit, F, k, band):
    cand = np.linspace(-2.0, 2.0, 17)
    j = 1 - k
    p_lo = _entry_prob(_query_pair(oracle, k, fit.z(k, cand), fit.z(j, -cfg.L)), k)
    p_hi = _entry_prob(_query_pair(oracle, k, fit.z(k, cand), fit.z(j, cfg.L)), k)
    lo_ok = (p_lo > band) & (p_lo < 1 - band)
    hi_ok = (p_hi > band) & (p_hi < 1 - band)
    keep = lo_ok & hi_ok
    if not keep.any():
        margin = np.minimum(np.minimum(p_lo, 1 - p_lo), np.minimum(p_hi, 1 - p_hi))
        keep = margin == margin.max()
    return cand[keep], p_lo[keep], p_hi[keep]


def _limits(oracle, cfg, fit, marg, bootstrap: int = 200, seed: int = 0) -> _Limits:
    band = 0.02 if oracle.mode == "Exact" else 0.1
    pts, los, his, stats, reps = [], [], [], [], []
    for k in (0, 1):
        t, p_lo, p_hi = _limit_points(oracle, cfg, fit, marg[k], k, band)
        q_lo = marg[k].quantile(p_lo)
        q_hi = marg[k].quantile(p_hi)
        pts.append(t)
        los.append(q_lo)
        his.append(q_hi)
        stats.append(float(np.mean(q_hi - q_lo)))
        if oracle.mode != "Exact":
            j = 1 - k
            s = SeedStream(seed, k)
            zi = fit.z(k, t)
            b_lo = oracle.query_bootstrap(*( (zi, fit.z(j, -cfg.L)) if k == 0 else (fit.z(j, -cfg.L), zi)), bootstrap, s)
            b_hi = oracle.query_bootstrap(*( (zi, fit.z(j, cfg.L)) if k == 0 else (fit.z(j, cfg.L), zi)), bootstrap,
                                          SeedStream(seed, k + 2))
            e_lo = np.clip(b_lo[..., 2] + b_lo[..., 3] if k == 0 else b_lo[..., 1] + b_lo[..., 3], 1e-6, 1 - 1e-6)
            e_hi = np.clip(b_hi[..., 2] + b_hi[..., 3] if k == 0 else b_hi[..., 1] + b_hi[..., 3], 1e-6, 1 - 1e-6)
            Fmin, Fmax = marg[k].F[marg[k].F > 0].min(), marg[k].F[marg[k].F < 1].max()
            e_lo = np.clip(e_lo, Fmin + 1e-9, Fmax - 1e-9)
            e_hi = np.clip(e_hi, Fmin + 1e-9, Fmax - 1e-9)
            reps.append((marg[k].quantile(e_hi) - marg[k].quantile(e_lo)).mean(axis=1))
    if oracle.mode == "Exact":
        tol = (cfg.tol_t,) * 3
    else:
        se1, se2 = np.std(reps[0], ddof=1), np.std(reps[1], ddof=1)
        se12 = np.std(reps[0] - reps[1], ddof=1)
        tol = (3 * se1, 3 * se2, 3 * se12)
    return _Limits(pts, los, his, (stats[0], stats[1]), tol)


def _classify(stat, tol) -> str:
    """Concept class from the quantile differences.

    A comparison is decisive only when it clears its tolerance by a factor
    of two in the right direction; otherwise the class is ``Ambiguous``.
    """
    t1, t2 = stat
    tol1, tol2, tol12 = tol
    gap = abs(t1 - t2)
    if gap > 2 * tol12:
        return RATIONALIZABLE
    if gap > tol12:
        return AMBIGUOUS
    zero1, zero2 = abs(t1) <= tol1, abs(t2) <= tol2
    if zero1 and zero2:
        return MAXMIN
    if abs(t1) > 2 * tol1 and abs(t2) > 2 * tol2:
        return COLLUSION
    return AMBIGUOUS


def discern_statistic(oracle: ProbOracle, cfg: LimitConfig) -> tuple[float, float, str]:
    """Quantile differences ``t_i = F^-1(mu_i^+) - F^-1(mu_i^-)`` and the
    implied concept class.

    Under rationalizable play ``t_i`` is player ``i``'s strategic effect,
    under collusion both equal the sum of strategic effects, and under
    maxmin both vanish.
    """
    fit = _fit_marginals(oracle, cfg)
    marg = (_marginal(oracle, cfg, fit, 0), _marginal(oracle, cfg, fit, 1))
    lim = _limits(oracle, cfg, fit, marg)
    return lim.stat[0], lim.stat[1], _classify(lim.stat, lim.tol)


def _alpha_objects(fit: _Fit, lim: _Limits, concept: str) -> list[AlphaEstimate]:
    a0, a1 = [], []
    for k in (0, 1):
        base = lim.t[k] - fit.shift[k]          # beta_k z_k at the points used
        a0.append(float(np.mean(lim.lo[k] - base)))
        a1.append(float(np.mean(lim.hi[k] - base)))
    out = []
    if concept == RATIONALIZABLE:
        for k in (0, 1):
            out.append(AlphaEstimate(f"alpha_{k + 1},0", a0[k], POINT))
            out.append(AlphaEstimate(f"alpha_{k + 1},1", a1[k], POINT))
    elif concept == MAXMIN:
        for k in (0, 1):
            out.append(AlphaEstimate(f"min(alpha_{k + 1},0, alpha_{k + 1},1)",
                                     0.5 * (a0[k] + a1[k]), POINT))
            out.append(AlphaEstimate(f"alpha_{k + 1},0", None, NOT_IDENTIFIED))
            out.append(AlphaEstimate(f"alpha_{k + 1},1", None, NOT_IDENTIFIED))
    elif concept == COLLUSION:
        # opponent-in limit of player k identifies alpha_k1 + alpha_j1 - alpha_j0
        total = 0.5 * ((a1[0] + a0[1]) + (a1[1] + a0[0]))
        for k in (0, 1):
            out.append(AlphaEstimate(f"alpha_{k + 1},0", a0[k], POINT))
        out.append(AlphaEstimate("alpha_1,1 + alpha_2,1", total, POINT))
        for k in (0, 1):
            out.append(AlphaEstimate(f"alpha_{k + 1},1", None, PARTIAL))
    else:
        for k in (0, 1):
            out.append(AlphaEstimate(f"alpha_{k + 1},0", None, PARTIAL))
            out.append(AlphaEstimate(f"alpha_{k + 1},1", None, PARTIAL))
    return out


def recover_alphas(oracle: ProbOracle, cfg: LimitConfig,
                   concept_hint: Optional[str] = None) -> list[AlphaEstimate]:
    """Intercept combinations identified under the (hinted or detected) concept.

    Rationalizable play identifies all four intercepts; maxmin play only each
    player's smaller intercept; collusion the monopoly intercepts and the sum
    of duopoly intercepts.
    """
    fit = _fit_marginals(oracle, cfg)
    marg = (_marginal(oracle, cfg, fit, 0), _marginal(oracle, cfg, fit, 1))
    lim = _limits(oracle, cfg, fit, marg)
    concept = concept_hint or _classify(lim.stat, lim.tol)
    if concept not in (RATIONALIZABLE, MAXMIN, COLLUSION, AMBIGUOUS):
        raise ConfigError(f"unknown concept hint {concept_hint!r}")
    return _alpha_objects(fit, lim, concept)


# --------------------------------------------------------------------------
# stage 3: correlation
# --------------------------------------------------------------------------

def _psi(oracle, cfg, fit, L, f_e1) -> tuple[np.ndarray, np.ndarray]:
    tau = np.asarray(cfg.tau_grid, dtype=float)
    h = cfg.fd_step
    s1 = -L
    s2 = tau * s1
    up = oracle.query(fit.z(0, np.full_like(tau, s1 + h)), fit.z(1, s2))
    dn = oracle.query(fit.z(0, np.full_like(tau, s1 - h)), fit.z(1, s2))
    deriv = (up[:, 2] - dn[:, 2]) / (2 * h)
    if f_e1 is None:
        g = _out_curve(oracle, cfg, fit, 0, np.array([s1 - h, s1 + h]), L)
        dens = (g[1] - g[0]) / (2 * h)
    else:
        dens = float(f_e1(s1))
    if not dens > 0:
        raise NoJumpError(f"shock density at {s1} is not positive")
    return tau, 1.0 - deriv / dens


def _crossing(tau: np.ndarray, psi: np.ndarray) -> float:
    smooth = isotonic_regression(psi, increasing=False).x
    if smooth[0] < 0.75 or smooth[-1] > 0.25:
        raise NoJumpError(f"psi profile spans [{smooth.min():.3f}, {smooth.max():.3f}], "
                          "not the detection band [0.25, 0.75]")
    k = int(np.argmax(smooth <= 0.5))
    a, b = smooth[k - 1], smooth[k]
    if a == b:
        return float(tau[k])
    return float(tau[k - 1] + (a - 0.5) / (a - b) * (tau[k] - tau[k - 1]))


def psi_profile(oracle: ProbOracle, cfg: LimitConfig, f_e1: Optional[Callable] = None,
                L: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Normalized derivative profile ``psi(tau)`` at index ``-L`` (default ``cfg.L``).

    The derivative is that of the probability of a firm-1 monopoly with
    respect to firm 1's index, along ``s2 = tau * s1``; since the outcome
    probabilities sum to one its limit equals the no-entry form
    ``1 + d P(0,0) / f_e1``, while the monopoly probability is small and
    therefore differenced without cancellation.
    """
    fit = _fit_marginals(oracle, cfg)
    return _psi(oracle, cfg, fit, cfg.L if L is None else L, f_e1)


def _rho_from_fit(oracle, cfg, fit, f_e1) -> float:
    ladder = sorted(cfg.rho_ladder)
    cross = [_crossing(*_psi(oracle, cfg, fit, m * cfg.L, f_e1)) for m in ladder]
    if len(cross) == 1:
        rho = cross[0]
    else:
        # crossing(L) = rho + c / L + o(1/L): extrapolate from the two largest L
        (m_a, c_a), (m_b, c_b) = list(zip(ladder, cross))[-2:]
        rho = (m_b * c_b - m_a * c_a) / (m_b - m_a)
    return float(np.clip(rho, -0.999, 0.999))


def recover_rho(oracle: ProbOracle, cfg: LimitConfig, f_e1: Optional[Callable] = None) -> float:
    """Shock correlation from the jump of ``psi``.

    ``psi`` tends to 1 for ``tau < rho`` and to 0 for ``tau > rho``.  At each
    ``L`` in ``cfg.rho_ladder`` the 0.5-crossing of an isotonic (decreasing)
    fit of ``psi`` is located by linear interpolation; finite-``L`` crossings
    approach ``rho`` like ``1/L`` on the multiplicity box, so two ladder
    rungs are combined by Richardson extrapolation.

    Parameters
    ----------
    f_e1 : callable, optional
        Density of firm 1's shock in index units.  If omitted it is obtained
        by differencing firm 1's entry curve.

    Raises
    ------
    NoJumpError
        If the smoothed profile does not span [0.25, 0.75].
    """
    return _rho_from_fit(oracle, cfg, _fit_marginals(oracle, cfg), f_e1)


# --------------------------------------------------------------------------
# full pipeline
# --------------------------------------------------------------------------

def identify(oracle: ProbOracle, cfg: Optional[LimitConfig] = None, want_rho: bool = True,
             f_e1: Optional[Callable] = None, seed: int = 0) -> IdentifiedParams:
    """Run every stage and tag each object with its identification status."""
    cfg = cfg or LimitConfig()
    fit = _fit_marginals(oracle, cfg)
    marg = (_marginal(oracle, cfg, fit, 0), _marginal(oracle, cfg, fit, 1))
    lim = _limits(oracle, cfg, fit, marg, seed=seed)
    concept = _classify(lim.stat, lim.tol)
    rho = Estimate(_rho_from_fit(oracle, cfg, fit, f_e1), POINT) if want_rho else None
    return IdentifiedParams(
        beta_hat=(Estimate(fit.beta[0], POINT), Estimate(fit.beta[1], POINT)),
        delta_hat=(Estimate(fit.shift[0], POINT), Estimate(fit.shift[1], POINT)),
        F_hat=marg,
        F_status=(POINT, POINT),
        alpha_hats=_alpha_objects(fit, lim, concept),
        rho_hat=rho,
        concept_class=concept,
        t_stats=lim.stat,
        t_tol=lim.tol,
    )
