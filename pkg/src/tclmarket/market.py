"""Feeder-constrained market clearing over an aggregate demand curve.

The coordinator gathers anonymous (price, quantity) bids, stacks them into
a descending-price step function, and settles at the broadcast base price
whenever the demand at that price fits under the feeder capacity. When it
does not fit, the clearing price rises to the cheapest bid level whose
cumulative demand still respects the limit, and everyone below that level
is priced out. Supply below the cap is treated as unlimited — the feeder
is the only constraint, and no network structure is modeled.

Dispatch downstream is all-or-nothing per price level (a device consumes
iff its bid is at or above the clearing price), so a marginal group of
equal-price bids that would overshoot the limit is excluded as a whole.
The feeder limit is therefore never exceeded, at the cost of occasionally
leaving headroom unused.

Cumulative quantities are accumulated exactly (error-free float
transformation, rounded once per breakpoint), so `cleared_demand <=
feeder_limit` and its downstream comparisons hold without tolerance.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable

from .bidding import Bid

__all__ = ["DemandCurve", "ClearingResult", "build_demand_curve", "clear"]

#: Price increment above the top bid used when nothing at all fits ($/MWh).
DEFAULT_PRICE_TICK = 0.01


def _add_partial(partials: list[float], x: float) -> None:
    # Shewchuk error-free accumulation: after adding every term, the
    # partials sum to the exact (unrounded) total.
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


@dataclass(frozen=True)
class DemandCurve:
    """Aggregate demand as descending-price breakpoints.

    ``points`` is a sequence of (price $/MWh, cumulative quantity kW):
    cumulative quantity is the total bid volume at or above that price.
    Prices strictly decrease, cumulative quantities never decrease.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        prices = [p for p, _ in self.points]
        cums = [q for _, q in self.points]
        if any(b >= a for a, b in zip(prices, prices[1:])):
            raise ValueError("breakpoint prices must be strictly decreasing")
        if any(p < 0 for p in prices):
            raise ValueError("breakpoint prices must be >= 0")
        if any(b < a for a, b in zip(cums, cums[1:])):
            raise ValueError("cumulative quantities must be non-decreasing")
        if cums and cums[0] <= 0:
            raise ValueError("cumulative quantities must be positive")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_quantity(self) -> float:
        """Demand at price zero: the whole bid volume, kW."""
        return self.points[-1][1] if self.points else 0.0

    @property
    def max_price(self) -> float:
        """Highest bid price on the curve; 0.0 for an empty curve."""
        return self.points[0][0] if self.points else 0.0

    def demand(self, price: float) -> float:
        """Total quantity bid at or above ``price``, kW (non-increasing)."""
        if not self.points:
            return 0.0
        ascending = [p for p, _ in reversed(self.points)]
        n_at_or_above = len(ascending) - bisect_left(ascending, price)
        if n_at_or_above == 0:
            return 0.0
        return self.points[n_at_or_above - 1][1]


@dataclass(frozen=True)
class ClearingResult:
    """Outcome of one clearing: settled price/quantity plus diagnostics."""

    clearing_price: float
    cleared_demand: float
    constrained: bool
    base_demand: float


def build_demand_curve(bids: Iterable[Bid]) -> DemandCurve:
    """Stack bids into a demand curve.

    Bids are sorted by price descending, equal-price bids merge into one
    breakpoint, and cumulative quantities accumulate exactly. Zero-price
    bids stay on the curve (they clear only at a clearing price of zero).
    """
    bids = list(bids)
    for bid in bids:
        if not math.isfinite(bid.price) or bid.price < 0:
            raise ValueError(f"bid from TCL {bid.tcl_id}: price must be finite and >= 0")
        if not math.isfinite(bid.quantity) or bid.quantity <= 0:
            raise ValueError(f"bid from TCL {bid.tcl_id}: quantity must be finite and > 0")
    bids.sort(key=lambda b: b.price, reverse=True)
    points: list[tuple[float, float]] = []
    partials: list[float] = []
    i = 0
    while i < len(bids):
        price = bids[i].price
        while i < len(bids) and bids[i].price == price:
            _add_partial(partials, bids[i].quantity)
            i += 1
        points.append((price, math.fsum(partials)))
    return DemandCurve(points=tuple(points))


def clear(
    curve: DemandCurve,
    base_price: float,
    feeder_limit: float,
    price_tick: float = DEFAULT_PRICE_TICK,
) -> ClearingResult:
    """Settle the market against the feeder capacity.

    If the demand at the base price fits under ``feeder_limit`` the market
    clears there, unconstrained. Otherwise the clearing price is the lowest
    breakpoint price above the base whose cumulative demand fits; if even
    the top price level overshoots the limit, the price is set one tick
    above every bid and nothing clears. Either way, dispatching exactly the
    bids at or above the returned price yields ``cleared_demand``, and
    ``cleared_demand <= feeder_limit`` always.
    """
    if feeder_limit <= 0:
        raise ValueError("feeder_limit must be positive")
    if base_price < 0:
        raise ValueError("base_price must be >= 0")
    base_demand = curve.demand(base_price)
    if base_demand <= feeder_limit:
        return ClearingResult(
            clearing_price=base_price,
            cleared_demand=base_demand,
            constrained=False,
            base_demand=base_demand,
        )
    feasible: tuple[float, float] | None = None
    for price, cum in curve.points:
        if price <= base_price:
            break
        if cum <= feeder_limit:
            feasible = (price, cum)
        else:
            break
    if feasible is None:
        return ClearingResult(
            clearing_price=curve.max_price + price_tick,
            cleared_demand=0.0,
            constrained=True,
            base_demand=base_demand,
        )
    return ClearingResult(
        clearing_price=feasible[0],
        cleared_demand=feasible[1],
        constrained=True,
        base_demand=base_demand,
    )
