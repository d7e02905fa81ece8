"""Thermostatically controlled load (TCL) population model.

Each TCL is a first-order thermal mass cycling a cooling unit inside a
temperature deadband. Two binary variables govern consumption: the
thermostat switch ``m`` (hysteresis on the deadband) and the market
dispatch flag ``v`` (set by the clearing outcome, held for a whole
market interval). A TCL draws electrical power only while ``m`` and
``v`` are both 1.

Scalar reference operations (``hysteresis_update``, ``thermal_step``)
define the per-device semantics; :class:`Population` carries the same
state in numpy arrays and advances all devices at once. The vectorized
path is required to be bit-identical to evaluating the scalar operations
in index order, which the test suite pins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TclParams",
    "TclState",
    "Population",
    "hysteresis_update",
    "thermal_step",
    "aggregate_power",
    "apply_dispatch",
]


@dataclass(frozen=True)
class TclParams:
    """Physical and bidding parameters of one TCL.

    Units: C in kWh/degC, R in degC/kW, P (thermal transfer rate when on)
    in kW, eta dimensionless (coefficient of performance), temperatures in
    degC, prices in $/MWh, bid slopes gamma1/gamma2 in $/MWh per degC.
    """

    id: int
    C: float = 10.0
    R: float = 2.0
    P: float = 14.0
    eta: float = 2.5
    theta_set: float = 20.0
    deadband: float = 0.5
    p0: float = 22.0
    p_cap: float = 35.0
    gamma1: float = 20.0
    gamma2: float = 20.0
    noise_std: float = 0.0

    def __post_init__(self) -> None:
        if self.C <= 0 or self.R <= 0 or self.P <= 0 or self.eta <= 0:
            raise ValueError(
                f"TCL {self.id}: C, R, P and eta must all be positive"
            )
        if self.deadband <= 0:
            raise ValueError(f"TCL {self.id}: deadband must be positive")
        if not 0.0 <= self.p0 <= self.p_cap:
            raise ValueError(
                f"TCL {self.id}: require 0 <= p0 <= p_cap, got "
                f"p0={self.p0}, p_cap={self.p_cap}"
            )
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError(f"TCL {self.id}: bid slopes must be >= 0")
        if self.noise_std < 0:
            raise ValueError(f"TCL {self.id}: noise_std must be >= 0")
        if self.theta_gain <= self.deadband:
            # A unit whose full-on temperature pull cannot span its own
            # deadband would stall mid-band and never cycle.
            raise ValueError(
                f"TCL {self.id}: P*R={self.theta_gain:.3f} degC must exceed "
                f"the deadband ({self.deadband} degC)"
            )

    @property
    def theta_min(self) -> float:
        """Lower switching threshold, degC."""
        return self.theta_set - self.deadband / 2.0

    @property
    def theta_max(self) -> float:
        """Upper switching threshold, degC."""
        return self.theta_set + self.deadband / 2.0

    @property
    def theta_gain(self) -> float:
        """Temperature pull of the cooling unit when on (P*R), degC."""
        return self.P * self.R

    @property
    def elec_power(self) -> float:
        """Electrical draw while consuming (P/eta), kW."""
        return self.P / self.eta

    def decay(self, h: float) -> float:
        """Per-step thermal decay factor exp(-h / (C*R)) for step h seconds."""
        return math.exp(-h / (self.C * self.R * 3600.0))


@dataclass
class TclState:
    """Evolving state of one TCL: temperature plus the two switch bits."""

    theta: float
    m: int = 0
    v: int = 1

    def __post_init__(self) -> None:
        if self.m not in (0, 1) or self.v not in (0, 1):
            raise ValueError(f"m and v must be 0 or 1, got m={self.m}, v={self.v}")


def hysteresis_update(state: TclState, params: TclParams) -> TclState:
    """Advance the thermostat switch from the current temperature.

    Strictly below the band the unit switches off, strictly above it
    switches on; on the boundaries and inside the band the switch holds.
    Temperature and dispatch flag are untouched.
    """
    m = state.m
    if state.theta < params.theta_min:
        m = 0
    elif state.theta > params.theta_max:
        m = 1
    return replace(state, m=m)


def thermal_step(
    state: TclState,
    params: TclParams,
    theta_ambient: float,
    h: float,
    noise_sample: float = 0.0,
) -> TclState:
    """Advance the temperature one step of h seconds.

    First-order pull toward ambient, offset by the cooling gain while the
    device actually consumes (m*v = 1):

        theta' = a*theta + (1 - a)*(theta_ambient - m*v*P*R) + w

    with a = exp(-h/(C*R)). Switches are not updated here.
    """
    if h <= 0:
        raise ValueError("time step h must be positive")
    a = params.decay(h)
    theta = (
        a * state.theta
        + (1.0 - a) * (theta_ambient - state.m * state.v * params.theta_gain)
        + noise_sample
    )
    return replace(state, theta=theta)


class Population:
    """A fixed roster of TCLs sharing one ambient temperature.

    Parameters are immutable after construction; the thermal/switch state
    lives in numpy arrays (float64 ``theta``, int8 ``m`` and ``v``) indexed
    like ``params``. ``rng_seed`` identifies the noise stream owner; the
    population itself never draws noise, callers pass samples in.
    """

    def __init__(
        self,
        params: Sequence[TclParams],
        states: Sequence[TclState],
        theta_ambient: float,
        rng_seed: int = 0,
        subgroup: Optional[np.ndarray] = None,
    ):
        if len(params) != len(states):
            raise ValueError(
                f"params ({len(params)}) and states ({len(states)}) "
                "must have the same length"
            )
        if len(params) == 0:
            raise ValueError("population must contain at least one TCL")
        self.params = tuple(params)
        self.theta_ambient = float(theta_ambient)
        self.rng_seed = int(rng_seed)

        self.theta = np.array([s.theta for s in states], dtype=np.float64)
        self.m = np.array([s.m for s in states], dtype=np.int8)
        self.v = np.array([s.v for s in states], dtype=np.int8)

        self.C = np.array([p.C for p in params])
        self.R = np.array([p.R for p in params])
        self.P = np.array([p.P for p in params])
        self.eta = np.array([p.eta for p in params])
        self.theta_set = np.array([p.theta_set for p in params])
        self.deadband = np.array([p.deadband for p in params])
        self.p0 = np.array([p.p0 for p in params])
        self.p_cap = np.array([p.p_cap for p in params])
        self.gamma1 = np.array([p.gamma1 for p in params])
        self.gamma2 = np.array([p.gamma2 for p in params])
        self.noise_std = np.array([p.noise_std for p in params])

        self.theta_min = self.theta_set - self.deadband / 2.0
        self.theta_max = self.theta_set + self.deadband / 2.0
        self.theta_gain = self.P * self.R
        self.elec_power = self.P / self.eta

        if self.theta_ambient <= self.theta_set.max():
            raise ValueError(
                "theta_ambient must exceed every set-point "
                "(cooling-load regime)"
            )
        if subgroup is not None and len(subgroup) != len(params):
            raise ValueError("subgroup labels must align with params")
        self.subgroup = None if subgroup is None else np.asarray(subgroup, dtype=int)

        self._decay_cache: dict[float, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.params)

    @property
    def size(self) -> int:
        return len(self.params)

    @property
    def capacity_kw(self) -> float:
        """Total electrical draw if every TCL consumed at once."""
        return math.fsum(self.elec_power.tolist())

    @property
    def states(self) -> list[TclState]:
        """Materialize the current state as scalar objects (index order)."""
        return [
            TclState(theta=float(t), m=int(m), v=int(v))
            for t, m, v in zip(self.theta, self.m, self.v)
        ]

    def decay(self, h: float) -> np.ndarray:
        """Per-TCL decay factors for step h seconds.

        Computed element-by-element with math.exp so the array path matches
        the scalar reference bit for bit.
        """
        cached = self._decay_cache.get(h)
        if cached is None:
            cached = np.array(
                [math.exp(-h / (c * r * 3600.0)) for c, r in zip(self.C, self.R)]
            )
            self._decay_cache[h] = cached
        return cached

    def update_switches(self) -> None:
        """Vectorized hysteresis update from the current temperatures."""
        self.m = np.where(
            self.theta > self.theta_max,
            np.int8(1),
            np.where(self.theta < self.theta_min, np.int8(0), self.m),
        )

    def step_temperatures(self, h: float, noise: Optional[np.ndarray] = None) -> None:
        """Vectorized thermal step; ``noise`` is degC per TCL (None = 0)."""
        a = self.decay(h)
        theta = a * self.theta + (1.0 - a) * (
            self.theta_ambient - self.m * self.v * self.theta_gain
        )
        if noise is not None:
            theta = theta + noise
        self.theta = theta

    def step_physics(self, h: float, noise: Optional[np.ndarray] = None) -> None:
        """One physics step: switches first (from current theta), then theta."""
        self.update_switches()
        self.step_temperatures(h, noise)

    def set_dispatch(self, bid_prices: np.ndarray, clearing_price: float) -> None:
        """Set v = 1 exactly for bids at or above the clearing price."""
        self.v = (bid_prices >= clearing_price).astype(np.int8)

    def consuming(self) -> np.ndarray:
        """Boolean mask of TCLs currently drawing power (m and v both 1)."""
        return (self.m == 1) & (self.v == 1)


def aggregate_power(population: Population) -> float:
    """Total electrical power drawn right now, kW.

    Sums P/eta over every TCL with both switches on, using exact (fsum)
    accumulation so the result is independent of index order.
    """
    active = population.elec_power[population.consuming()]
    return math.fsum(active.tolist())


def apply_dispatch(population: Population, clearing_price: float, bids) -> Population:
    """Dispatch the population against a clearing price.

    Every TCL whose bid price is at or above ``clearing_price`` gets v = 1
    (price ties dispatch), all others v = 0. The flags persist until the
    next call. ``bids`` must align one-to-one with the population.
    """
    if len(bids) != population.size:
        raise ValueError(
            f"got {len(bids)} bids for {population.size} TCLs; "
            "bid list must align with the population"
        )
    for bid, params in zip(bids, population.params):
        if bid.tcl_id != params.id:
            raise ValueError(
                f"bid for TCL {bid.tcl_id} out of place (expected {params.id})"
            )
    prices = np.array([b.price for b in bids])
    population.set_dispatch(prices, clearing_price)
    return population
