"""Demand-curve construction and feeder-constrained clearing.

The clearing tests lean on a brute-force oracle: enumerate every candidate
price level directly from the bid list and pick the outcome the contract
describes. The production code must match it exactly, price and quantity.
"""

import math

import pytest
from hypothesis import given, settings, strategies as st

from tclmarket.bidding import Bid
from tclmarket.market import (
    DEFAULT_PRICE_TICK,
    ClearingResult,
    DemandCurve,
    build_demand_curve,
    clear,
)


# ----------------------------------------------------------------- the curve

def test_curve_from_three_distinct_bids():
    curve = build_demand_curve([Bid(0, 50.0, 2.0), Bid(1, 30.0, 2.0), Bid(2, 10.0, 2.0)])
    assert curve.points == ((50.0, 2.0), (30.0, 4.0), (10.0, 6.0))


def test_curve_from_empty_bid_list():
    curve = build_demand_curve([])
    assert curve.points == ()
    for p in (0.0, 10.0, 100.0):
        assert curve.demand(p) == 0.0


def test_curve_merges_equal_prices():
    curve = build_demand_curve([Bid(0, 30.0, 2.0), Bid(1, 30.0, 3.0)])
    assert curve.points == ((30.0, 5.0),)


def test_curve_order_independent():
    bids = [Bid(0, 10.0, 1.0), Bid(1, 50.0, 2.5), Bid(2, 30.0, 0.5), Bid(3, 30.0, 1.5)]
    a = build_demand_curve(bids)
    b = build_demand_curve(list(reversed(bids)))
    assert a.points == b.points


def test_curve_rejects_bad_bids():
    with pytest.raises(ValueError, match="TCL 7"):
        build_demand_curve([Bid(7, -1.0, 2.0)])
    with pytest.raises(ValueError, match="TCL 3"):
        build_demand_curve([Bid(3, 10.0, 0.0)])
    with pytest.raises(ValueError, match="TCL 9"):
        build_demand_curve([Bid(9, float("nan"), 2.0)])


def test_demand_lookup_steps_at_breakpoints():
    curve = build_demand_curve([Bid(0, 50.0, 2.0), Bid(1, 30.0, 2.0), Bid(2, 10.0, 2.0)])
    assert curve.demand(60.0) == 0.0
    assert curve.demand(50.0) == 2.0   # at-price bids count
    assert curve.demand(49.0) == 2.0
    assert curve.demand(30.0) == 4.0
    assert curve.demand(10.0) == 6.0
    assert curve.demand(0.0) == 6.0
    assert curve.total_quantity == 6.0
    assert curve.max_price == 50.0


def test_demand_curve_validates_invariants():
    with pytest.raises(ValueError):
        DemandCurve(points=((30.0, 4.0), (50.0, 6.0)))   # prices must descend
    with pytest.raises(ValueError):
        DemandCurve(points=((50.0, 4.0), (30.0, 3.0)))   # cumulative must grow


# ----------------------------------------------------------------- clearing

def test_clear_unconstrained_settles_at_base():
    curve = build_demand_curve([Bid(0, 50.0, 2.0), Bid(1, 30.0, 2.0), Bid(2, 10.0, 2.0)])
    assert clear(curve, 20.0, 4.0) == ClearingResult(20.0, 4.0, False, 4.0)


def test_clear_constrained_excludes_whole_tie_group():
    curve = build_demand_curve([Bid(0, 50.0, 2.0), Bid(1, 30.0, 2.0), Bid(2, 10.0, 2.0)])
    assert clear(curve, 20.0, 3.0) == ClearingResult(50.0, 2.0, True, 4.0)


def test_clear_no_bids_at_base():
    curve = build_demand_curve([Bid(0, 50.0, 2.0), Bid(1, 30.0, 2.0), Bid(2, 10.0, 2.0)])
    assert clear(curve, 60.0, 6.0) == ClearingResult(60.0, 0.0, False, 0.0)


def test_clear_empty_curve():
    assert clear(build_demand_curve([]), 20.0, 5.0) == ClearingResult(20.0, 0.0, False, 0.0)


def test_clear_everything_exceeds_limit():
    curve = build_demand_curve([Bid(0, 50.0, 4.0), Bid(1, 30.0, 2.0)])
    out = clear(curve, 20.0, 3.0)
    assert out.clearing_price == 50.0 + DEFAULT_PRICE_TICK
    assert out.cleared_demand == 0.0
    assert out.constrained


def test_clear_validates_preconditions():
    curve = build_demand_curve([Bid(0, 30.0, 2.0)])
    with pytest.raises(ValueError):
        clear(curve, 20.0, 0.0)
    with pytest.raises(ValueError):
        clear(curve, -1.0, 5.0)


def test_cleared_demand_never_exceeds_limit_even_with_many_summands():
    # 10000 quantities of 0.1 sum to a hair over 1000 in naive float; the
    # exact accumulation must still respect the limit
    bids = [Bid(i, 30.0, 0.1) for i in range(10000)]
    curve = build_demand_curve(bids)
    out = clear(curve, 20.0, 1000.0)
    assert out.cleared_demand <= 1000.0


# ------------------------------------------------------------ oracle matching

def oracle_clear(bids, base_price, feeder_limit):
    """Brute-force restatement of the clearing contract."""
    levels = sorted({b.price for b in bids}, reverse=True)

    def demand_at(p):
        return math.fsum(b.quantity for b in bids if b.price >= p)

    base_demand = demand_at(base_price)
    if base_demand <= feeder_limit:
        return (base_price, base_demand, False, base_demand)
    feasible = [p for p in levels if p > base_price and demand_at(p) <= feeder_limit]
    if feasible:
        price = min(feasible)
        return (price, demand_at(price), True, base_demand)
    top = max(levels)
    return (top + DEFAULT_PRICE_TICK, 0.0, True, base_demand)


def random_bid_set(rng):
    n = rng.randint(0, 12)
    bids = []
    for i in range(n):
        # coarse price grid to force plenty of exact ties
        price = rng.choice([0.0, 5.0, 10.0, 10.0, 20.0, 25.0, 30.0, 30.0, 42.5])
        qty = rng.choice([0.5, 1.0, 1.5, 2.0, 5.6])
        bids.append(Bid(i, price, qty))
    return bids


def test_clear_matches_bruteforce_oracle_randomized():
    import random
    rng = random.Random(1234)
    for _ in range(2000):
        bids = random_bid_set(rng)
        base = rng.choice([0.0, 5.0, 9.0, 20.0, 31.0, 50.0])
        feeder = rng.uniform(0.5, 25.0)
        got = clear(build_demand_curve(bids), base, feeder)
        want = oracle_clear(bids, base, feeder)
        assert (got.clearing_price, got.cleared_demand,
                got.constrained, got.base_demand) == want, (bids, base, feeder)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_clear_properties_hold_for_arbitrary_bids(data):
    n = data.draw(st.integers(0, 12))
    bids = [
        Bid(i,
            data.draw(st.floats(0.0, 60.0, allow_nan=False)),
            data.draw(st.floats(0.1, 8.0, allow_nan=False)))
        for i in range(n)
    ]
    base = data.draw(st.floats(0.0, 60.0))
    feeder = data.draw(st.floats(0.1, 40.0))
    curve = build_demand_curve(bids)
    out = clear(curve, base, feeder)
    assert out.cleared_demand <= feeder
    assert out.clearing_price >= base
    assert out.constrained == (out.clearing_price > base)
    # the settled quantity is exactly the curve evaluated at the settle price
    assert out.cleared_demand == curve.demand(out.clearing_price)
