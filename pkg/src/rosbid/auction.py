"""Single-slot auction model: threshold allocation/payment, truthful-payment
residual check, and the running return-on-spend ledger.

A slot is described by a threshold ``theta``: bidding at or above ``theta``
wins the slot (allocation 1) and pays exactly ``theta``; bidding below wins
nothing and pays nothing.  A zero bid never wins, even when ``theta == 0``,
so allocation(0) = 0 holds for every slot.

The per-slot constraint contribution is ``cv = payment - value * allocation``.
Negative ``cv`` is slack earned, positive ``cv`` is slack spent; the running
sum ``ccv`` and its clamp ``margin = max(0, -ccv)`` are kept in `Accounts`.

All comparisons are exact floating comparisons (no epsilon) so that replays
are bit-deterministic.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass


def _require_finite(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def validate_value(v: float) -> float:
    v = _require_finite("value", v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"value must lie in [0, 1], got {v!r}")
    return v


def validate_bid(b: float) -> float:
    b = _require_finite("bid", b)
    if b < 0.0:
        raise ValueError(f"bid must be non-negative, got {b!r}")
    return b


def validate_theta(theta: float) -> float:
    # theta == 0 is admitted: such a slot is won by any positive bid.
    theta = _require_finite("theta", theta)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    return theta


@dataclass(frozen=True)
class SlotOutcome:
    """Result of evaluating one bid against one slot."""

    bid: float
    won: bool
    allocation: float
    payment: float
    cv: float


@dataclass(frozen=True)
class Accounts:
    """Running constraint ledger: cumulative cv, its clamp, and slot count."""

    ccv: float = 0.0
    margin: float = 0.0
    slot_index: int = 0


def evaluate_threshold(theta: float, v: float, b: float) -> SlotOutcome:
    """Evaluate bid ``b`` against a threshold slot of value ``v``.

    Wins iff ``b >= theta`` and ``b > 0``; a win allocates 1 and pays
    ``theta``.  ``cv = payment - v * allocation``.
    """
    theta = validate_theta(theta)
    v = validate_value(v)
    b = validate_bid(b)
    won = b >= theta and b > 0.0
    if won:
        return SlotOutcome(bid=b, won=True, allocation=1.0, payment=theta, cv=theta - v)
    return SlotOutcome(bid=b, won=False, allocation=0.0, payment=0.0, cv=0.0)


def update_accounts(acc: Accounts, outcome: SlotOutcome) -> Accounts:
    """Fold one slot outcome into the ledger."""
    ccv = acc.ccv + outcome.cv
    return Accounts(ccv=ccv, margin=max(0.0, -ccv), slot_index=acc.slot_index + 1)


class StepFunction:
    """Right-continuous piecewise-constant function on [0, inf).

    ``knots`` are strictly increasing breakpoints with ``knots[0] == 0``;
    ``levels[i]`` is the value on ``[knots[i], knots[i+1])`` (the last level
    extends to infinity).  Integrals from 0 are exact sums over breakpoints,
    which is what makes the truthful-payment residual below exact rather
    than quadrature-based.
    """

    __slots__ = ("knots", "levels")

    def __init__(self, knots, levels):
        knots = tuple(float(k) for k in knots)
        levels = tuple(float(x) for x in levels)
        if len(knots) != len(levels) or not knots:
            raise ValueError("knots and levels must be equal-length and non-empty")
        if knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        self.knots = knots
        self.levels = levels

    def value(self, b: float) -> float:
        b = _require_finite("b", b)
        if b < 0.0:
            raise ValueError("b must be non-negative")
        return self.levels[bisect_right(self.knots, b) - 1]

    def integral(self, b: float) -> float:
        """Exact integral of the step function over [0, b]."""
        b = _require_finite("b", b)
        if b < 0.0:
            raise ValueError("b must be non-negative")
        total = 0.0
        for i, level in enumerate(self.levels):
            lo = self.knots[i]
            if lo >= b:
                break
            hi = self.knots[i + 1] if i + 1 < len(self.knots) else math.inf
            total += level * (min(hi, b) - lo)
        return total


def threshold_curves(theta: float) -> tuple[StepFunction, StepFunction]:
    """Allocation and payment step curves of a threshold slot."""
    theta = validate_theta(theta)
    if theta == 0.0:
        # won at any positive bid, allocation(0) = 0 regardless
        alloc = StepFunction((0.0,), (1.0,))
        pay = StepFunction((0.0,), (0.0,))
    else:
        alloc = StepFunction((0.0, theta), (0.0, 1.0))
        pay = StepFunction((0.0, theta), (0.0, theta))
    return alloc, pay


def myerson_residual(alloc: StepFunction, payment: StepFunction, bid_grid) -> float:
    """Max over the grid of |p(b) - (b*x(b) - integral_0^b x(u) du)|.

    Zero for any allocation/payment pair satisfying the classical truthful
    payment identity; the integral term is exact for step curves.
    """
    worst = 0.0
    prev = -math.inf
    for b in bid_grid:
        b = _require_finite("grid bid", b)
        if b < prev:
            raise ValueError("bid_grid must be sorted ascending")
        prev = b
        x = alloc.value(b)
        residual = abs(payment.value(b) - (b * x - alloc.integral(b)))
        worst = max(worst, residual)
    return worst


def check_myerson(theta: float, bid_grid) -> float:
    """Truthful-payment residual of a threshold slot over ``bid_grid``."""
    alloc, pay = threshold_curves(theta)
    return myerson_residual(alloc, pay, bid_grid)
