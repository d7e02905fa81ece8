"""Closed-loop simulation engine: physics steps nested in market intervals.

A scenario describes the population, the feeder limit, the base-price
schedule and the timing grid. The engine then repeats, per market
interval: predict bidding temperatures, form bids, build the demand
curve, clear against the feeder limit, freeze the dispatch flags, and
advance the thermostat/thermal physics through the interval at the fast
step h. Everything observable lands in a Trace.

Randomness is budgeted once per run from a root seed: child streams for
parameter draws, initial conditions, temperature noise and output
sampling are spawned in a fixed order, so any one consumer can be
reconfigured without disturbing the others and identical scenarios give
bit-identical traces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .bidding import Bid, bid_prices, predict_temperatures
from .market import DEFAULT_PRICE_TICK, ClearingResult, build_demand_curve, clear
from .population import Population, TclParams, TclState, aggregate_power

__all__ = [
    "ScenarioError",
    "PriceSignal",
    "PopulationSpec",
    "Scenario",
    "TraceFrame",
    "Trace",
    "price_signal_value",
    "generate_population",
    "run",
]


class ScenarioError(ValueError):
    """Raised for configuration problems, before any simulation starts."""


# --------------------------------------------------------------------------
# Price signals


@dataclass(frozen=True)
class PriceSignal:
    """Base-price schedule, one of four kinds.

    constant: fixed ``level`` forever.
    step:     piecewise-constant ``schedule`` of (time_min, level) pairs,
              first entry at time 0, levels holding until the next change.
    square:   alternates ``low``/``high`` with period ``period_min``;
              ``offset_min`` shifts the phase (value is low while
              (t + offset) mod period < period/2, starting at t=0).
    series:   explicit per-interval ``values``.

    All levels are $/MWh and must be >= 0.
    """

    kind: str
    level: Optional[float] = None
    schedule: Optional[tuple[tuple[float, float], ...]] = None
    low: Optional[float] = None
    high: Optional[float] = None
    period_min: Optional[float] = None
    offset_min: float = 0.0
    values: Optional[tuple[float, ...]] = None

    KINDS = ("constant", "step", "square", "series")

    @staticmethod
    def constant(level: float) -> "PriceSignal":
        return PriceSignal(kind="constant", level=level)

    @staticmethod
    def step(schedule) -> "PriceSignal":
        return PriceSignal(
            kind="step", schedule=tuple((float(t), float(p)) for t, p in schedule)
        )

    @staticmethod
    def square(low: float, high: float, period_min: float, offset_min: float = 0.0) -> "PriceSignal":
        return PriceSignal(
            kind="square", low=low, high=high, period_min=period_min, offset_min=offset_min
        )

    @staticmethod
    def series(values) -> "PriceSignal":
        return PriceSignal(kind="series", values=tuple(float(v) for v in values))

    def violations(self, interval_minutes: float, n_intervals: int) -> list[str]:
        """All configuration problems with this signal (empty list = valid)."""
        errs: list[str] = []
        if self.kind not in self.KINDS:
            return [f"price_signal.kind must be one of {self.KINDS}, got {self.kind!r}"]
        if self.kind == "constant":
            if self.level is None or self.level < 0:
                errs.append("price_signal.level must be a price >= 0")
        elif self.kind == "step":
            if not self.schedule:
                errs.append("price_signal.schedule must be non-empty")
            else:
                times = [t for t, _ in self.schedule]
                if times[0] != 0:
                    errs.append("price_signal.schedule must start at time 0")
                if any(b <= a for a, b in zip(times, times[1:])):
                    errs.append("price_signal.schedule times must strictly increase")
                if any(p < 0 for _, p in self.schedule):
                    errs.append("price_signal.schedule levels must be >= 0")
                if any(t % interval_minutes != 0 for t in times):
                    errs.append(
                        "price_signal.schedule change times must fall on "
                        f"market-interval boundaries ({interval_minutes} min)"
                    )
        elif self.kind == "square":
            if self.low is None or self.high is None or self.low < 0 or self.high < 0:
                errs.append("price_signal.low/high must be prices >= 0")
            if self.period_min is None or self.period_min <= 0:
                errs.append("price_signal.period_min must be > 0")
            else:
                if (self.period_min / 2.0) % interval_minutes != 0:
                    errs.append(
                        "price_signal.period_min/2 must be a whole number of "
                        "market intervals so flips land on boundaries"
                    )
                if self.offset_min % interval_minutes != 0:
                    errs.append("price_signal.offset_min must be a whole number of market intervals")
        elif self.kind == "series":
            if not self.values:
                errs.append("price_signal.values must be non-empty")
            else:
                if len(self.values) < n_intervals:
                    errs.append(
                        f"price_signal.values covers {len(self.values)} intervals "
                        f"but the horizon has {n_intervals}"
                    )
                if any(v < 0 for v in self.values):
                    errs.append("price_signal.values must all be >= 0")
        return errs


def price_signal_value(
    signal: PriceSignal,
    interval_index: int,
    interval_minutes: float = 5.0,
    n_intervals: Optional[int] = None,
) -> float:
    """Base price for one market interval, evaluated at the interval start."""
    if interval_index < 0 or (n_intervals is not None and interval_index >= n_intervals):
        raise IndexError(f"interval {interval_index} outside the horizon")
    t = interval_index * interval_minutes
    if signal.kind == "constant":
        return float(signal.level)
    if signal.kind == "step":
        level = signal.schedule[0][1]
        for change_time, new_level in signal.schedule:
            if change_time <= t:
                level = new_level
            else:
                break
        return float(level)
    if signal.kind == "square":
        phase = (t + signal.offset_min) % signal.period_min
        return float(signal.low if phase < signal.period_min / 2.0 else signal.high)
    if signal.kind == "series":
        if interval_index >= len(signal.values):
            raise IndexError(
                f"interval {interval_index} beyond the configured series "
                f"({len(signal.values)} values)"
            )
        return float(signal.values[interval_index])
    raise ScenarioError(f"unknown price signal kind {signal.kind!r}")


# --------------------------------------------------------------------------
# Scenario configuration


@dataclass(frozen=True)
class PopulationSpec:
    """Population size and parameter distributions.

    Physical parameters draw uniformly as mean*(1 ± rel_width); set-points
    draw uniformly within ±theta_set_width degC (absolute). Bid-curve
    parameters draw uniformly over their ranges when subgroups == 1; with
    K >= 2 subgroups each group gets one anchor bid curve (anchors spread
    evenly across the ranges) and members jitter within ±subgroup_rel_width
    relative — width 0 gives exactly K distinct curves.
    """

    count: int = 1000
    theta_ambient: float = 32.0
    c_mean: float = 10.0
    c_rel_width: float = 0.10
    r_mean: float = 2.0
    r_rel_width: float = 0.0
    p_mean: float = 14.0
    p_rel_width: float = 0.0
    eta_mean: float = 2.5
    eta_rel_width: float = 0.0
    theta_set_mean: float = 20.0
    theta_set_width: float = 0.0
    deadband: float = 0.5
    p0_range: tuple[float, float] = (20.5, 23.5)
    p_cap_range: tuple[float, float] = (30.0, 40.0)
    gamma_range: tuple[float, float] = (10.0, 30.0)
    noise_std: float = 0.0
    subgroups: int = 1
    subgroup_rel_width: float = 0.02

    def violations(self) -> list[str]:
        errs: list[str] = []
        if self.count < 1:
            errs.append("population.count must be >= 1")
        for name in ("c", "r", "p", "eta"):
            mean = getattr(self, f"{name}_mean")
            width = getattr(self, f"{name}_rel_width")
            if mean <= 0:
                errs.append(f"population.{name}_mean must be > 0")
            if not 0 <= width < 1:
                errs.append(f"population.{name}_rel_width must be in [0, 1)")
        if self.theta_set_width < 0:
            errs.append("population.theta_set_width must be >= 0")
        if self.deadband <= 0:
            errs.append("population.deadband must be > 0")
        if self.theta_ambient <= self.theta_set_mean + self.theta_set_width:
            errs.append(
                "population.theta_ambient must exceed every possible set-point "
                "(cooling-load regime)"
            )
        for rng_name in ("p0_range", "p_cap_range", "gamma_range"):
            lo, hi = getattr(self, rng_name)
            if lo < 0 or hi < lo:
                errs.append(f"population.{rng_name} must satisfy 0 <= low <= high")
        if self.p0_range[1] > self.p_cap_range[0]:
            errs.append(
                "population.p0_range must sit at or below p_cap_range "
                "(every draw needs p0 <= p_cap)"
            )
        if self.noise_std < 0:
            errs.append("population.noise_std must be >= 0")
        if self.subgroups < 1:
            errs.append("population.subgroups must be >= 1")
        if not 0 <= self.subgroup_rel_width < 1:
            errs.append("population.subgroup_rel_width must be in [0, 1)")
        # Reject parameter draws that could stall a thermostat outright.
        gain_min = (
            self.p_mean * (1 - self.p_rel_width) * self.r_mean * (1 - self.r_rel_width)
        )
        if gain_min <= self.deadband:
            errs.append(
                "population: smallest possible P*R must exceed the deadband "
                f"(got {gain_min:.3f} <= {self.deadband})"
            )
        return errs


@dataclass(frozen=True)
class Scenario:
    """Complete experiment configuration.

    The feeder limit is either an absolute kW value (``feeder_limit_kw``)
    or, when that is None, ``feeder_fraction`` of the realized population
    capacity sum(P/eta).
    """

    name: str = "custom"
    population: PopulationSpec = field(default_factory=PopulationSpec)
    price_signal: PriceSignal = field(default_factory=lambda: PriceSignal.constant(25.0))
    horizon_min: float = 1440.0
    market_interval_min: float = 5.0
    h_seconds: float = 10.0
    lookahead_s: float = 150.0
    feeder_limit_kw: Optional[float] = None
    feeder_fraction: float = 0.70
    seed: int = 0
    price_tick: float = DEFAULT_PRICE_TICK

    @property
    def n_intervals(self) -> int:
        return int(round(self.horizon_min / self.market_interval_min))

    @property
    def steps_per_interval(self) -> int:
        return int(round(self.market_interval_min * 60.0 / self.h_seconds))

    def validate(self) -> list[str]:
        """Check every invariant; returns all violations, not just the first."""
        errs: list[str] = []
        if self.h_seconds <= 0:
            errs.append("h_seconds must be > 0")
        if self.market_interval_min <= 0:
            errs.append("market_interval_min must be > 0")
        elif self.h_seconds > 0:
            steps = self.market_interval_min * 60.0 / self.h_seconds
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                errs.append(
                    f"market_interval_min ({self.market_interval_min} min) must be "
                    f"a whole number of physics steps (h={self.h_seconds} s)"
                )
        if self.horizon_min <= 0:
            errs.append("horizon_min must be > 0")
        elif self.market_interval_min > 0:
            n = self.horizon_min / self.market_interval_min
            if abs(n - round(n)) > 1e-9 or round(n) < 1:
                errs.append(
                    f"horizon_min ({self.horizon_min}) must be a whole number of "
                    f"market intervals ({self.market_interval_min} min)"
                )
        if self.feeder_limit_kw is not None and self.feeder_limit_kw <= 0:
            errs.append("feeder_limit_kw must be > 0")
        if self.feeder_limit_kw is None and self.feeder_fraction <= 0:
            errs.append("feeder_fraction must be > 0 when no absolute limit is given")
        if self.lookahead_s < 0:
            errs.append("lookahead_s must be >= 0")
        elif self.h_seconds > 0:
            k = self.lookahead_s / self.h_seconds
            if abs(k - round(k)) > 1e-9:
                errs.append(
                    f"lookahead_s ({self.lookahead_s}) must be an integer multiple "
                    f"of h_seconds ({self.h_seconds})"
                )
        if self.price_tick <= 0:
            errs.append("price_tick must be > 0")
        errs.extend(self.population.violations())
        if self.market_interval_min > 0 and self.horizon_min > 0:
            errs.extend(
                self.price_signal.violations(self.market_interval_min, self.n_intervals)
            )
        return errs

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["population"] = {k: v for k, v in d["population"].items()}
        signal = {k: v for k, v in d["price_signal"].items() if v is not None}
        signal.pop("offset_min", None)
        if self.price_signal.kind == "square":
            signal["offset_min"] = self.price_signal.offset_min
        d["price_signal"] = signal
        return d

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        d = dict(d)
        pop_d = d.pop("population", {})
        sig_d = d.pop("price_signal", None)
        population = _dataclass_from_dict(PopulationSpec, pop_d, "population")
        if sig_d is None:
            signal = PriceSignal.constant(25.0)
        else:
            if isinstance(sig_d, dict):
                sig_d = dict(sig_d)
                if "schedule" in sig_d and sig_d["schedule"] is not None:
                    sig_d["schedule"] = tuple(tuple(pair) for pair in sig_d["schedule"])
                if "values" in sig_d and sig_d["values"] is not None:
                    sig_d["values"] = tuple(sig_d["values"])
            signal = _dataclass_from_dict(PriceSignal, sig_d, "price_signal")
        scenario = _dataclass_from_dict(
            Scenario, d, "scenario", population=population, price_signal=signal
        )
        return scenario

    @staticmethod
    def from_json(text: str) -> "Scenario":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"scenario file is not valid JSON: {exc.msg} "
                f"(line {exc.lineno}, column {exc.colno})"
            ) from exc
        return Scenario.from_dict(data)


def _dataclass_from_dict(cls, d, where: str, **overrides):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(d, dict):
        raise ScenarioError(f"{where} must be a JSON object")
    names = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = sorted(set(d) - names)
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = dict(d)
    for key in ("p0_range", "p_cap_range", "gamma_range"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


# --------------------------------------------------------------------------
# Population generation


def _seed_children(seed: int) -> list[np.random.SeedSequence]:
    """Fixed spawn order: params, initial state, noise, output sampling."""
    return np.random.SeedSequence(seed).spawn(4)


def generate_population(spec: PopulationSpec, seed: int) -> Population:
    """Draw a population from the configured distributions, deterministically.

    Every distribution consumes its draws whether or not its width is zero,
    so narrowing one parameter never reshuffles the others.
    """
    errs = spec.violations()
    if errs:
        raise ScenarioError("; ".join(errs))
    params_seed, init_seed = _seed_children(seed)[:2]
    g = np.random.default_rng(params_seed)
    n = spec.count

    C = spec.c_mean * (1.0 + spec.c_rel_width * g.uniform(-1.0, 1.0, n))
    R = spec.r_mean * (1.0 + spec.r_rel_width * g.uniform(-1.0, 1.0, n))
    P = spec.p_mean * (1.0 + spec.p_rel_width * g.uniform(-1.0, 1.0, n))
    eta = spec.eta_mean * (1.0 + spec.eta_rel_width * g.uniform(-1.0, 1.0, n))
    theta_set = spec.theta_set_mean + spec.theta_set_width * g.uniform(-1.0, 1.0, n)

    if spec.subgroups == 1:
        subgroup = None
        p0 = g.uniform(spec.p0_range[0], spec.p0_range[1], n)
        p_cap = g.uniform(spec.p_cap_range[0], spec.p_cap_range[1], n)
        gamma1 = g.uniform(spec.gamma_range[0], spec.gamma_range[1], n)
        gamma2 = g.uniform(spec.gamma_range[0], spec.gamma_range[1], n)
    else:
        K = spec.subgroups
        subgroup = (np.arange(n) * K) // n
        anchor_frac = (subgroup + 0.5) / K
        w = spec.subgroup_rel_width

        def group_values(lo: float, hi: float) -> np.ndarray:
            anchors = lo + anchor_frac * (hi - lo)
            return anchors * (1.0 + w * g.uniform(-1.0, 1.0, n))

        p0 = group_values(*spec.p0_range)
        p_cap = group_values(*spec.p_cap_range)
        gamma1 = group_values(*spec.gamma_range)
        gamma2 = gamma1.copy()

    params = [
        TclParams(
            id=i,
            C=float(C[i]),
            R=float(R[i]),
            P=float(P[i]),
            eta=float(eta[i]),
            theta_set=float(theta_set[i]),
            deadband=spec.deadband,
            p0=float(p0[i]),
            p_cap=float(p_cap[i]),
            gamma1=float(gamma1[i]),
            gamma2=float(gamma2[i]),
            noise_std=spec.noise_std,
        )
        for i in range(n)
    ]

    g_init = np.random.default_rng(init_seed)
    theta_min = theta_set - spec.deadband / 2.0
    theta_max = theta_set + spec.deadband / 2.0
    theta0 = g_init.uniform(theta_min, theta_max)
    duty = np.clip((spec.theta_ambient - theta_set) / (P * R), 0.0, 1.0)
    m0 = (g_init.uniform(0.0, 1.0, n) < duty).astype(np.int8)
    states = [
        TclState(theta=float(theta0[i]), m=int(m0[i]), v=1) for i in range(n)
    ]
    return Population(
        params, states, theta_ambient=spec.theta_ambient, rng_seed=seed, subgroup=subgroup
    )


# --------------------------------------------------------------------------
# Trace


@dataclass(frozen=True)
class TraceFrame:
    """One market interval's record (view into a Trace)."""

    interval: int
    time_min: float
    base_price: float
    clearing_price: float
    cleared_demand_kw: float
    base_demand_kw: float
    constrained: bool
    avg_demand_kw: float
    n_dispatched: int
    bid_price_min: float
    bid_price_mean: float
    bid_price_max: float


@dataclass
class Trace:
    """Everything a run records.

    Per market interval: prices, cleared/base demand, the interval-average
    realized demand, the dispatched count, end-of-interval temperature/
    switch snapshots and the full bid-price vector. Per physics step:
    instantaneous aggregate power, consuming fraction and temperature
    summary. ``population`` carries the final state plus the per-TCL
    parameter arrays used by the metrics.
    """

    scenario: Scenario
    population: Population
    feeder_limit_kw: float
    capacity_kw: float
    time_min: np.ndarray
    base_price: np.ndarray
    clearing_price: np.ndarray
    cleared_demand_kw: np.ndarray
    base_demand_kw: np.ndarray
    constrained: np.ndarray
    avg_demand_kw: np.ndarray
    n_dispatched: np.ndarray
    step_time_min: np.ndarray
    step_power_kw: np.ndarray
    step_on_fraction: np.ndarray
    step_theta_mean: np.ndarray
    step_theta_std: np.ndarray
    theta_by_interval: np.ndarray
    m_by_interval: np.ndarray
    bid_price_by_interval: np.ndarray

    @property
    def n_intervals(self) -> int:
        return len(self.time_min)

    def frames(self) -> Iterator[TraceFrame]:
        for t in range(self.n_intervals):
            prices = self.bid_price_by_interval[t]
            yield TraceFrame(
                interval=t,
                time_min=float(self.time_min[t]),
                base_price=float(self.base_price[t]),
                clearing_price=float(self.clearing_price[t]),
                cleared_demand_kw=float(self.cleared_demand_kw[t]),
                base_demand_kw=float(self.base_demand_kw[t]),
                constrained=bool(self.constrained[t]),
                avg_demand_kw=float(self.avg_demand_kw[t]),
                n_dispatched=int(self.n_dispatched[t]),
                bid_price_min=float(prices.min()),
                bid_price_mean=float(prices.mean()),
                bid_price_max=float(prices.max()),
            )


def _exact_mean(values: list[float]) -> float:
    """Correctly rounded arithmetic mean (exact rational accumulation)."""
    total = Fraction(0)
    for x in values:
        total += Fraction(x)
    return float(total / len(values))


# --------------------------------------------------------------------------
# The run loop


def run(scenario: Scenario) -> Trace:
    """Simulate a scenario end to end; deterministic given the seed."""
    errs = scenario.validate()
    if errs:
        raise ScenarioError("invalid scenario: " + "; ".join(errs))

    pop = generate_population(scenario.population, scenario.seed)
    if scenario.feeder_limit_kw is not None:
        feeder_limit = float(scenario.feeder_limit_kw)
    else:
        feeder_limit = scenario.feeder_fraction * pop.capacity_kw

    n_intervals = scenario.n_intervals
    steps_per = scenario.steps_per_interval
    h = scenario.h_seconds
    n = pop.size

    noise_rng = None
    if np.any(pop.noise_std > 0):
        noise_rng = np.random.default_rng(_seed_children(scenario.seed)[2])

    time_min = np.arange(n_intervals) * scenario.market_interval_min
    base_price = np.empty(n_intervals)
    clearing_price = np.empty(n_intervals)
    cleared_demand = np.empty(n_intervals)
    base_demand = np.empty(n_intervals)
    constrained = np.zeros(n_intervals, dtype=bool)
    avg_demand = np.empty(n_intervals)
    n_dispatched = np.empty(n_intervals, dtype=np.int64)
    step_time = np.empty(n_intervals * steps_per)
    step_power = np.empty(n_intervals * steps_per)
    step_on_fraction = np.empty(n_intervals * steps_per)
    step_theta_mean = np.empty(n_intervals * steps_per)
    step_theta_std = np.empty(n_intervals * steps_per)
    theta_by_interval = np.empty((n_intervals, n))
    m_by_interval = np.empty((n_intervals, n), dtype=np.int8)
    bid_matrix = np.empty((n_intervals, n))

    quantities = pop.elec_power
    for t in range(n_intervals):
        theta_bid = predict_temperatures(pop, scenario.lookahead_s, h)
        prices = bid_prices(pop, theta_bid)
        bids = [
            Bid(tcl_id=p.id, price=float(prices[i]), quantity=float(quantities[i]))
            for i, p in enumerate(pop.params)
        ]
        curve = build_demand_curve(bids)
        pi_base = price_signal_value(
            scenario.price_signal, t, scenario.market_interval_min, n_intervals
        )
        result: ClearingResult = clear(curve, pi_base, feeder_limit, scenario.price_tick)
        pop.set_dispatch(prices, result.clearing_price)

        interval_powers: list[float] = []
        for k in range(steps_per):
            noise = None
            if noise_rng is not None:
                noise = noise_rng.standard_normal(n) * pop.noise_std
            pop.step_physics(h, noise)
            idx = t * steps_per + k
            power = aggregate_power(pop)
            interval_powers.append(power)
            step_time[idx] = (idx + 1) * h / 60.0
            step_power[idx] = power
            step_on_fraction[idx] = pop.consuming().mean()
            step_theta_mean[idx] = pop.theta.mean()
            step_theta_std[idx] = pop.theta.std()

        base_price[t] = pi_base
        clearing_price[t] = result.clearing_price
        cleared_demand[t] = result.cleared_demand
        base_demand[t] = result.base_demand
        constrained[t] = result.constrained
        avg_demand[t] = _exact_mean(interval_powers)
        n_dispatched[t] = int(pop.v.sum())
        theta_by_interval[t] = pop.theta
        m_by_interval[t] = pop.m
        bid_matrix[t] = prices

    return Trace(
        scenario=scenario,
        population=pop,
        feeder_limit_kw=feeder_limit,
        capacity_kw=pop.capacity_kw,
        time_min=time_min,
        base_price=base_price,
        clearing_price=clearing_price,
        cleared_demand_kw=cleared_demand,
        base_demand_kw=base_demand,
        constrained=constrained,
        avg_demand_kw=avg_demand,
        n_dispatched=n_dispatched,
        step_time_min=step_time,
        step_power_kw=step_power,
        step_on_fraction=step_on_fraction,
        step_theta_mean=step_theta_mean,
        step_theta_std=step_theta_std,
        theta_by_interval=theta_by_interval,
        m_by_interval=m_by_interval,
        bid_price_by_interval=bid_matrix,
    )
