"""Primitives of the two-player binary entry game in index form.

Player ``i`` who enters earns ``alpha[i][y_other] + v_i`` where
``v_i = beta_i * z_i - e_i`` is the latent payoff index; staying out earns
zero.  Players are numbered 1 and 2 in the public API and outcomes are pairs
``(y1, y2)`` listed in the canonical order ``(0,0), (0,1), (1,0), (1,1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .numerics import Rect, check_rho

Outcome = tuple[int, int]
OUTCOMES: tuple[Outcome, ...] = ((0, 0), (0, 1), (1, 0), (1, 1))

__all__ = [
    "OUTCOMES",
    "Outcome",
    "outcome_index",
    "Theta",
    "IndexPair",
    "OutcomeDist",
    "Region",
    "payoff_index",
    "pure_ne_set",
    "mixed_ne",
    "rationalizable_set",
    "maxmin_outcome",
    "collusive_outcome",
    "classify_region",
]


def outcome_index(y: Outcome) -> int:
    """Position of ``y`` in :data:`OUTCOMES`."""
    return 2 * y[0] + y[1]


def _other(i: int) -> int:
    return 1 - i


def _player(i: int) -> int:
    if i not in (1, 2):
        raise ConfigError(f"player must be 1 or 2, got {i!r}")
    return i - 1


@dataclass(frozen=True)
class Theta:
    """Payoff parameters.

    Attributes
    ----------
    alpha : ((a10, a11), (a20, a21))
        ``alpha[i][y]`` is the entry intercept of player ``i+1`` when the
        opponent plays ``y``.
    beta : (b1, b2)
        Nonzero covariate slopes.
    rho : float
        Shock correlation in (-1, 1); shock variances are one.
    """

    alpha: tuple[tuple[float, float], tuple[float, float]]
    beta: tuple[float, float] = (1.0, 1.0)
    rho: float = 0.0

    def __post_init__(self):
        try:
            alpha = tuple(tuple(float(a) for a in row) for row in self.alpha)
            beta = tuple(float(b) for b in self.beta)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"theta fields must be numeric: {exc}") from None
        if len(alpha) != 2 or any(len(row) != 2 for row in alpha):
            raise ConfigError("alpha must be a 2x2 array")
        if len(beta) != 2:
            raise ConfigError("beta must have two entries")
        if not np.all(np.isfinite(np.array(alpha))) or not np.all(np.isfinite(beta)):
            raise ConfigError("theta entries must be finite")
        if beta[0] == 0.0 or beta[1] == 0.0:
            raise ConfigError("beta entries must be nonzero")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rho", check_rho(self.rho))

    @classmethod
    def from_deltas(cls, alpha0=(0.0, 0.0), delta=(-1.0, -1.0), beta=(1.0, 1.0), rho=0.0):
        """Build from monopoly intercepts and strategic effects."""
        return cls(((alpha0[0], alpha0[0] + delta[0]), (alpha0[1], alpha0[1] + delta[1])),
                   beta, rho)

    @classmethod
    def symmetric_entry(cls, eta: float, rho: float = 0.0):
        """The symmetric game with monopoly profit ``eta`` and duopoly profit 0."""
        return cls(((eta, 0.0), (eta, 0.0)), (1.0, 1.0), rho)

    @property
    def delta(self) -> tuple[float, float]:
        """Strategic effects ``alpha[i][1] - alpha[i][0]``."""
        return (self.alpha[0][1] - self.alpha[0][0], self.alpha[1][1] - self.alpha[1][0])

    def thresholds(self, i: int) -> tuple[float, float]:
        """Index values ``(lo, hi)`` between which player ``i`` has no
        dominant action; ``lo == hi`` when the strategic effect is zero."""
        a = self.alpha[_player(i)]
        return -max(a), -min(a)

    def box(self) -> Rect:
        """The multiplicity box in index space."""
        lo1, hi1 = self.thresholds(1)
        lo2, hi2 = self.thresholds(2)
        return Rect(lo1, hi1, lo2, hi2)

    def index_mean(self, z1, z2):
        """Mean of the index pair at covariates ``z``: ``(beta1 z1, beta2 z2)``."""
        return self.beta[0] * np.asarray(z1, dtype=float), self.beta[1] * np.asarray(z2, dtype=float)


class IndexPair(NamedTuple):
    v1: float
    v2: float


@dataclass(frozen=True)
class OutcomeDist:
    """Probabilities of the four outcomes in canonical order."""

    p: tuple[float, float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 4:
            raise ConfigError("an outcome distribution has four entries")
        if min(p) < 0.0 or abs(sum(p) - 1.0) > 1e-12 or not all(np.isfinite(p)):
            raise ConfigError(f"not a probability vector: {p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def point(cls, y: Outcome) -> "OutcomeDist":
        p = [0.0] * 4
        p[outcome_index(y)] = 1.0
        return cls(tuple(p))

    @classmethod
    def from_array(cls, arr, clip: float = 1e-13) -> "OutcomeDist":
        """Build from a numerically computed vector, removing roundoff.

        Entries above ``-clip`` are clipped at zero and the vector is
        rescaled when its sum is within ``1e-9`` of one; anything worse is
        rejected.
        """
        a = np.asarray(arr, dtype=float).copy()
        if np.any(a < -clip):
            raise ConfigError(f"negative probability in {a}")
        a = np.maximum(a, 0.0)
        s = a.sum()
        if abs(s - 1.0) > 1e-9:
            raise ConfigError(f"probabilities sum to {s}")
        return cls(tuple(a / s))

    def __getitem__(self, y: Outcome) -> float:
        return self.p[outcome_index(y)]

    def as_array(self) -> np.ndarray:
        return np.array(self.p)

    def support(self, tol: float = 0.0) -> set[Outcome]:
        return {y for y, q in zip(OUTCOMES, self.p) if q > tol}


@dataclass(frozen=True)
class Region:
    """Either the multiplicity region or a unique rationalizable outcome."""

    multiplicity: bool
    outcome: Optional[Outcome] = None

    @classmethod
    def unique(cls, y: Outcome) -> "Region":
        return cls(False, y)


MULTIPLICITY = Region(True)


# --------------------------------------------------------------------------
# solution sets
# --------------------------------------------------------------------------

def payoff_index(theta: Theta, v: IndexPair, y: Outcome, i: int) -> float:
    """Entry payoff of player ``i`` at outcome ``y``: zero unless it enters."""
    k = _player(i)
    if y[k] == 0:
        return 0.0
    return theta.alpha[k][y[_other(k)]] + v[k]


def _check_indifference(theta: Theta, v: IndexPair) -> None:
    for k in (0, 1):
        for a in (0, 1):
            if theta.alpha[k][a] + v[k] == 0.0:
                raise DegenerateInputError(
                    f"player {k + 1} indifferent against opponent action {a} at v={tuple(v)}")


def _enters_against(theta: Theta, v: IndexPair, k: int, a: int) -> bool:
    return theta.alpha[k][a] + v[k] > 0.0


def pure_ne_set(theta: Theta, v: IndexPair) -> set[Outcome]:
    """Outcomes in which each player strictly best-responds to the other."""
    _check_indifference(theta, v)
    return {y for y in OUTCOMES
            if all(y[k] == int(_enters_against(theta, v, k, y[_other(k)])) for k in (0, 1))}


def mixed_ne(theta: Theta, v: IndexPair) -> Optional[tuple[float, float]]:
    """Entry probabilities ``(q1, q2)`` of the fully mixed equilibrium.

    ``q_i`` is pinned down by the opponent's indifference,
    ``q_i = (a_{-i,0} + v_{-i}) / (a_{-i,0} - a_{-i,1})``.  Returns ``None``
    unless both lie strictly inside (0, 1).
    """
    _check_indifference(theta, v)
    q = []
    for k in (0, 1):
        o = _other(k)
        a0, a1 = theta.alpha[o]
        if a0 == a1:
            return None
        q.append((a0 + v[o]) / (a0 - a1))
    if all(0.0 < qk < 1.0 for qk in q):
        return q[0], q[1]
    return None


def _surviving_actions(theta: Theta, v: IndexPair) -> list[set[int]]:
    alive = [{0, 1}, {0, 1}]
    changed = True
    while changed:
        changed = False
        for k in (0, 1):
            if len(alive[k]) == 1:
                continue
            gains = [theta.alpha[k][a] + v[k] for a in alive[_other(k)]]
            if all(g > 0 for g in gains):
                alive[k] = {1}
                changed = True
            elif all(g < 0 for g in gains):
                alive[k] = {0}
                changed = True
    return alive


def rationalizable_set(theta: Theta, v: IndexPair) -> set[Outcome]:
    """Outcomes surviving iterated elimination of strictly dominated actions."""
    _check_indifference(theta, v)
    a1, a2 = _surviving_actions(theta, v)
    return {(x, y) for x in a1 for y in a2}


def maxmin_outcome(theta: Theta, v: IndexPair) -> Outcome:
    """Each player enters iff its worst-case entry payoff is positive."""
    y = []
    for k in (0, 1):
        worst = min(theta.alpha[k]) + v[k]
        if worst == 0.0:
            raise DegenerateInputError(f"player {k + 1} maxmin-indifferent at v={tuple(v)}")
        y.append(int(worst > 0))
    return y[0], y[1]


def collusive_totals(theta: Theta, v: IndexPair) -> list[float]:
    return [payoff_index(theta, v, y, 1) + payoff_index(theta, v, y, 2) for y in OUTCOMES]


def collusive_outcome(theta: Theta, v: IndexPair) -> Outcome:
    """Outcome maximizing total profit; an exact tie is an error."""
    totals = collusive_totals(theta, v)
    best = max(totals)
    winners = [y for y, t in zip(OUTCOMES, totals) if t == best]
    if len(winners) > 1:
        raise DegenerateInputError(f"total profit tied between {winners} at v={tuple(v)}")
    return winners[0]


def classify_region(theta: Theta, v: IndexPair) -> Region:
    r = rationalizable_set(theta, v)
    if len(r) == 1:
        return Region.unique(next(iter(r)))
    return MULTIPLICITY
