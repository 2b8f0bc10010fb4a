"""Distributions of play: a solution concept plus a selection rule, mapped to
outcome probabilities as a function of the index pair only.

All evaluation goes through :func:`evaluate_many`, a vectorized kernel that
also reports exact ties.  The scalar :func:`evaluate` raises on a tie so that
samplers can redraw instead of breaking it arbitrarily.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, DegenerateInputError, NumericFailure
from .game import OUTCOMES, IndexPair, OutcomeDist, Theta, mixed_ne, pure_ne_set
from .numerics import Rect, bvn_density, bvn_rect_prob, quad2d

__all__ = [
    "Concept",
    "SelectionSpec",
    "EQUAL_WEIGHT_NE",
    "MOST_PROFITABLE_ENTERS",
    "NEVER_ENTER",
    "fixed_weights",
    "DistributionOfPlay",
    "BoxRule",
    "evaluate",
    "evaluate_many",
    "outcome_codes",
    "BOX_CODE",
    "nash_hull_membership",
    "build_averaged_dop",
    "ne_list",
]


class Concept(str, Enum):
    RATIONALIZABLE = "rationalizable"
    NASH = "nash"
    MAXMIN = "maxmin"
    COLLUSION = "collusion"
    SAA = "saa"


_BOX_CONCEPTS = (Concept.RATIONALIZABLE, Concept.NASH, Concept.SAA)


@dataclass(frozen=True)
class SelectionSpec:
    """How play is resolved on the multiplicity box.

    ``tag`` is one of ``equal_weight_ne``, ``most_profitable_enters``,
    ``never_enter``, ``fixed_weights`` (with ``weights``) or ``averaged``
    (with ``base``).  Fixed weights refer to the equilibrium list of
    :func:`ne_list` under the Nash concept and to the four outcomes under the
    rationalizable concept.
    """

    tag: str
    weights: Optional[tuple[float, ...]] = None
    base: Optional["SelectionSpec"] = None

    _TAGS = ("equal_weight_ne", "most_profitable_enters", "never_enter", "fixed_weights", "averaged")

    def __post_init__(self):
        if self.tag not in self._TAGS:
            raise ConfigError(f"unknown selection {self.tag!r}; expected one of {self._TAGS}")
        if self.tag == "fixed_weights":
            if self.weights is None:
                raise ConfigError("fixed_weights needs a weight vector")
            w = tuple(float(x) for x in self.weights)
            if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
                raise ConfigError(f"fixed weights must be a probability vector, got {w}")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ConfigError(f"selection {self.tag!r} takes no weights")
        if (self.tag == "averaged") != (self.base is not None):
            raise ConfigError("only the averaged selection carries a base selection")


EQUAL_WEIGHT_NE = SelectionSpec("equal_weight_ne")
MOST_PROFITABLE_ENTERS = SelectionSpec("most_profitable_enters")
NEVER_ENTER = SelectionSpec("never_enter")


def fixed_weights(weights) -> SelectionSpec:
    return SelectionSpec("fixed_weights", tuple(weights))


class BoxRule(NamedTuple):
    """Behavior on the multiplicity box.

    ``kind`` is ``"constant"`` (use ``const``), ``"mixture"`` (``const`` plus
    ``mixed_weight`` times the mixed-equilibrium product distribution) or
    ``"most_profitable"`` (monopoly of the firm with the larger monopoly
    payoff).
    """

    kind: str
    const: np.ndarray
    mixed_weight: float = 0.0


def ne_list(theta: Theta) -> list:
    """Canonical equilibrium list on the box: pure equilibria in outcome
    order, then ``"mixed"``.  Empty when the box has no interior."""
    d1, d2 = theta.delta
    if d1 == 0.0 or d2 == 0.0:
        return []
    if d1 < 0 and d2 < 0:
        return [(0, 1), (1, 0), "mixed"]
    if d1 > 0 and d2 > 0:
        return [(0, 0), (1, 1), "mixed"]
    return ["mixed"]


@dataclass(frozen=True)
class DistributionOfPlay:
    """A behavior rule ``v -> OutcomeDist``.

    Parameters
    ----------
    theta : Theta
    concept : Concept
    selection : SelectionSpec, optional
        Required for the rationalizable and Nash concepts; forced to
        ``never_enter`` for SAA and ignored for maxmin and collusion.
    average : OutcomeDist, optional
        Box constant of an averaged selection, filled by
        :func:`build_averaged_dop`.
    """

    theta: Theta
    concept: Concept
    selection: Optional[SelectionSpec] = None
    average: Optional[OutcomeDist] = None

    def __post_init__(self):
        concept = Concept(self.concept)
        object.__setattr__(self, "concept", concept)
        sel = self.selection
        if concept == Concept.SAA:
            if sel is not None and sel.tag != "never_enter":
                raise ConfigError("the SAA concept always uses the never_enter selection")
            object.__setattr__(self, "selection", NEVER_ENTER)
        elif concept in (Concept.MAXMIN, Concept.COLLUSION):
            object.__setattr__(self, "selection", None)
        else:
            if sel is None:
                raise ConfigError(f"concept {concept.value} needs a selection")
            self._validate_selection(sel)
        if self.selection is not None and self.selection.tag == "averaged" and self.average is None:
            raise ConfigError("averaged selections are built with build_averaged_dop")

    def _validate_selection(self, sel: SelectionSpec) -> None:
        d1, d2 = self.theta.delta
        if sel.tag == "most_profitable_enters" and not (d1 < 0 and d2 < 0):
            raise ConfigError("most_profitable_enters needs two monopoly equilibria "
                              f"(negative strategic effects), got delta={self.theta.delta}")
        if sel.tag == "never_enter" and self.concept == Concept.NASH:
            raise ConfigError("no entry is not an equilibrium on the box; use the SAA concept")
        if sel.tag == "fixed_weights":
            n = 4 if self.concept == Concept.RATIONALIZABLE else len(ne_list(self.theta))
            if len(sel.weights) != n:
                raise ConfigError(f"fixed weights need {n} entries for concept "
                                  f"{self.concept.value}, got {len(sel.weights)}")
        if sel.tag == "averaged":
            self._validate_selection(sel.base)

    @property
    def uses_box(self) -> bool:
        return self.concept in _BOX_CONCEPTS

    def box_rule(self) -> BoxRule:
        sel = self.selection
        zero = np.zeros(4)
        if sel.tag == "never_enter":
            c = zero.copy()
            c[0] = 1.0
            return BoxRule("constant", c)
        if sel.tag == "averaged":
            return BoxRule("constant", self.average.as_array())
        if sel.tag == "most_profitable_enters":
            return BoxRule("most_profitable", zero)
        if sel.tag == "fixed_weights" and self.concept == Concept.RATIONALIZABLE:
            return BoxRule("constant", np.array(sel.weights))
        eqs = ne_list(self.theta)
        w = sel.weights if sel.tag == "fixed_weights" else (1.0 / len(eqs),) * len(eqs) if eqs else ()
        c = zero.copy()
        mixed_w = 0.0
        for eq, wk in zip(eqs, w):
            if eq == "mixed":
                mixed_w += wk
            else:
                c[2 * eq[0] + eq[1]] += wk
        if mixed_w == 0.0:
            return BoxRule("constant", c)
        return BoxRule("mixture", c, mixed_w)

    @property
    def is_region_constant(self) -> bool:
        """True when play is constant on every cell of the region partition,
        so outcome probabilities need no two-dimensional quadrature."""
        if not self.uses_box:
            return True
        return self.box_rule().kind != "mixture"

    def mixed_product(self, v1, v2) -> np.ndarray:
        """Outcome distribution of the mixed equilibrium, shape ``(..., 4)``."""
        (a10, a11), (a20, a21) = self.theta.alpha
        q1 = (a20 + v2) / (a20 - a21)
        q2 = (a10 + v1) / (a10 - a11)
        return np.stack([(1 - q1) * (1 - q2), (1 - q1) * q2, q1 * (1 - q2), q1 * q2], axis=-1)


BOX_CODE = 4


def outcome_codes(d: DistributionOfPlay, v1, v2) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic part of play at many index pairs.

    Returns
    -------
    codes : ndarray of int8
        Outcome index in canonical order where play is a point mass, and
        ``BOX_CODE`` on multiplicity-box points whose play comes from
        :meth:`DistributionOfPlay.box_rule` (constant or mixture rules only).
    degenerate : ndarray of bool
        Rows where a player is exactly indifferent or a selection tie occurs.
    """
    v1 = np.atleast_1d(np.asarray(v1, dtype=float))
    v2 = np.atleast_1d(np.asarray(v2, dtype=float))
    v1, v2 = np.broadcast_arrays(v1, v2)
    (a10, a11), (a20, a21) = d.theta.alpha

    if d.concept == Concept.MAXMIN:
        w1, w2 = min(a10, a11) + v1, min(a20, a21) + v2
        degen = (w1 == 0) | (w2 == 0)
        codes = 2 * (w1 > 0).astype(np.int8) + (w2 > 0)
        return codes.astype(np.int8), degen
    if d.concept == Concept.COLLUSION:
        n = v1.shape[0]
        totals = np.stack([np.zeros(n), a20 + v2, a10 + v1, a11 + a21 + v1 + v2], axis=1)
        top = np.sort(totals, axis=1)
        return totals.argmax(axis=1).astype(np.int8), top[:, 3] == top[:, 2]

    # each player's entry threshold against an out / in opponent
    lo1, hi1 = -max(a10, a11), -min(a10, a11)
    lo2, hi2 = -max(a20, a21), -min(a20, a21)
    degen = (v1 == -a10) | (v1 == -a11) | (v2 == -a20) | (v2 == -a21)
    in1, out1 = v1 > hi1, v1 < lo1
    in2, out2 = v2 > hi2, v2 < lo2
    dom1, dom2 = in1 | out1, in2 | out2
    # a dominant player fixes its action; the other best-responds to it
    y1 = np.where(dom1, in1, np.where(in2, a11 + v1 > 0, a10 + v1 > 0))
    y2 = np.where(dom2, in2, np.where(in1, a21 + v2 > 0, a20 + v2 > 0))
    codes = (2 * y1.astype(np.int8) + y2).astype(np.int8)
    box = ~dom1 & ~dom2
    if box.any():
        rule = d.box_rule()
        if rule.kind == "most_profitable":
            m1, m2 = a10 + v1[box], a20 + v2[box]
            degen[box] |= m1 == m2
            codes[box] = np.where(m1 > m2, 2, 1)
        else:
            codes[box] = BOX_CODE
    return codes, degen


_ONE_HOT = np.vstack([np.eye(4), np.full((1, 4), np.nan)])


def evaluate_many(d: DistributionOfPlay, v1, v2) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized evaluation.

    Returns
    -------
    probs : ndarray, shape (n, 4)
        Outcome probabilities in canonical order; rows flagged degenerate
        hold NaN.
    degenerate : ndarray of bool, shape (n,)
        Rows where a player is exactly indifferent or a selection tie occurs.
    """
    v1 = np.atleast_1d(np.asarray(v1, dtype=float))
    v2 = np.atleast_1d(np.asarray(v2, dtype=float))
    v1, v2 = np.broadcast_arrays(v1, v2)
    codes, degen = outcome_codes(d, v1, v2)
    out = _ONE_HOT[codes]
    box = codes == BOX_CODE
    if box.any():
        rule = d.box_rule()
        out[box] = rule.const
        if rule.kind == "mixture":
            out[box] += rule.mixed_weight * d.mixed_product(v1[box], v2[box])
    out[degen] = np.nan
    return out, degen


def evaluate(d: DistributionOfPlay, v: IndexPair) -> OutcomeDist:
    """Outcome distribution at index pair ``v``.

    Examples
    --------
    >>> th = Theta(((0.0, -1.0), (0.0, -1.0)))
    >>> d = DistributionOfPlay(th, Concept.NASH, EQUAL_WEIGHT_NE)
    >>> round(evaluate(d, IndexPair(0.5, 0.5))[(1, 0)], 5)
    0.41667
    """
    p, degen = evaluate_many(d, [v[0]], [v[1]])
    if degen[0]:
        raise DegenerateInputError(f"tie or indifference at v={tuple(v)}")
    return OutcomeDist.from_array(p[0])


def _ne_distributions(theta: Theta, v: IndexPair) -> list[np.ndarray]:
    gens = []
    for y in sorted(pure_ne_set(theta, v)):
        e = np.zeros(4)
        e[2 * y[0] + y[1]] = 1.0
        gens.append(e)
    q = mixed_ne(theta, v)
    if q is not None:
        q1, q2 = q
        gens.append(np.array([(1 - q1) * (1 - q2), (1 - q1) * q2, q1 * (1 - q2), q1 * q2]))
    return gens


def nash_hull_membership(theta: Theta, v: IndexPair, q: OutcomeDist, tol: float) -> bool:
    """Whether ``q`` lies within L1 distance ``tol`` of the convex hull of the
    equilibrium outcome distributions at ``v``.

    The distance is the value of a small linear program over mixture weights
    and positive/negative slacks.
    """
    gens = np.array(_ne_distributions(theta, v))      # (k, 4)
    k = gens.shape[0]
    target = q.as_array()
    # variables: lambda (k), s_plus (4), s_minus (4)
    cost = np.concatenate([np.zeros(k), np.ones(8)])
    a_eq = np.zeros((5, k + 8))
    a_eq[:4, :k] = gens.T
    a_eq[:4, k:k + 4] = np.eye(4)
    a_eq[:4, k + 4:] = -np.eye(4)
    a_eq[4, :k] = 1.0
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericFailure(f"hull distance program failed: {res.message}")
    return bool(res.fun <= tol)


def build_averaged_dop(theta: Theta, base: DistributionOfPlay, tol: float = 1e-10,
                       z: tuple[float, float] = (0.0, 0.0)) -> DistributionOfPlay:
    """Replace play on the box by its average under the shock law.

    The weights are the index density at covariates ``z``, i.e. a bivariate
    normal centred at ``(beta1 z1, beta2 z2)``; each outcome's box integral is
    computed with :func:`quad2d` to ``tol``.  Outside the box the result
    coincides with ``base``.

    Raises
    ------
    ConfigError
        If ``base`` does not resolve play on the box, or the box is empty.
    QuadratureError
        Propagated from :func:`quad2d`.
    """
    if base.theta != theta:
        raise ConfigError("base distribution of play belongs to a different theta")
    if not base.uses_box:
        raise ConfigError("averaging needs a concept that resolves the multiplicity box")
    box = theta.box()
    if box.lo1 == box.hi1 or box.lo2 == box.hi2:
        raise ConfigError("the multiplicity box is empty for this theta")
    sel = base.selection
    if sel.tag == "averaged" or base.concept == Concept.SAA:
        # SAA play is already constant on the box, so it is its own average
        return base
    m1, m2 = theta.index_mean(*z)
    rho = theta.rho
    mass = bvn_rect_prob(Rect(box.lo1 - m1, box.hi1 - m1, box.lo2 - m2, box.hi2 - m2), rho)

    def integrand(k):
        def f(x, y):
            p, degen = evaluate_many(base, x.ravel(), y.ravel())
            if degen.any():
                # ties lie on lines of zero area; nudge the node off the line
                p[degen], _ = evaluate_many(base, np.nextafter(x.ravel()[degen], np.inf),
                                            y.ravel()[degen])
            return p[:, k].reshape(x.shape) * bvn_density(x - m1, y - m2, rho)
        return f

    avg = np.array([quad2d(integrand(k), box, tol) for k in range(4)]) / mass
    return DistributionOfPlay(theta, base.concept, SelectionSpec("averaged", base=sel),
                              average=OutcomeDist.from_array(avg, clip=1e-8))
