"""Synchronization and oscillation statistics over a simulation trace.

The headline quantity is an order parameter for thermal-phase alignment:
each TCL's position on its hysteresis loop maps to an angle (warming leg
0..pi as temperature climbs the deadband, cooling leg pi..2*pi on the way
back down), and the synchronization index is the magnitude of the mean
unit phasor — 1 when every device sits at the same point of its cycle,
near 0 for phases spread around the loop.

Demand oscillations are summarized per sliding window by peak-to-peak
amplitude and the dominant period from the discrete spectrum of the
de-meaned interval-average demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Trace

__all__ = [
    "sync_index",
    "cycle_phases",
    "temperature_dispersion",
    "demand_oscillation",
    "MetricsReport",
    "compute_metrics",
]


def cycle_phases(
    theta: np.ndarray,
    m: np.ndarray,
    theta_min: np.ndarray,
    theta_max: np.ndarray,
) -> np.ndarray:
    """Angle of each TCL on its hysteresis loop, radians in [0, 2*pi).

    Temperatures outside the deadband clip to the nearest edge, so a
    dispatch-blocked device drifting above theta_max reads as "waiting at
    the top of the warming leg" (phase pi when off and hot).
    """
    x = np.clip((theta - theta_min) / (theta_max - theta_min), 0.0, 1.0)
    off = np.pi * x
    on = np.pi * (2.0 - x)
    return np.where(m == 1, on, off) % (2.0 * np.pi)


def sync_index(
    theta: np.ndarray,
    m: np.ndarray,
    theta_min: np.ndarray,
    theta_max: np.ndarray,
) -> float:
    """Order parameter |mean(exp(i*phase))| in [0, 1]."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        raise ValueError("sync_index needs a nonempty population")
    phases = cycle_phases(theta, np.asarray(m), theta_min, theta_max)
    # rounding in the phasor mean can land an ulp above 1 for identical phases
    return min(1.0, float(np.abs(np.exp(1j * phases).mean())))


def temperature_dispersion(theta: np.ndarray, theta_set: np.ndarray) -> float:
    """Population standard deviation of theta - theta_set, degC."""
    return float(np.std(np.asarray(theta) - np.asarray(theta_set)))


def demand_oscillation(
    series: np.ndarray, interval_minutes: float = 5.0
) -> tuple[float, float]:
    """Peak-to-peak and dominant period of one demand window.

    ``series`` is the interval-average demand over a single window of at
    least 4 market intervals. The dominant period comes from the largest
    nonzero-frequency bin of the de-meaned series' spectrum; a constant
    window has no period and returns NaN for it.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise ValueError("demand_oscillation needs a window of >= 4 intervals")
    p2p = float(x.max() - x.min())
    if p2p == 0.0:
        return 0.0, float("nan")
    spectrum = np.abs(np.fft.rfft(x - x.mean()))
    k = int(np.argmax(spectrum[1:])) + 1
    period = x.size * interval_minutes / k
    return p2p, float(period)


@dataclass
class MetricsReport:
    """Derived statistics, per interval and per sliding window.

    Window quantities use sliding windows of ``window_min`` minutes
    stepping one market interval; window s covers intervals
    [s, s + window), stamped by the window start time.
    """

    window_min: float
    interval_minutes: float
    feeder_limit_kw: float
    # per market interval
    time_min: np.ndarray
    sync: np.ndarray
    dispersion_degc: np.ndarray
    price_divergence: np.ndarray  # clearing - base, $/MWh
    # per sliding window
    window_start_min: np.ndarray
    window_p2p_kw: np.ndarray
    window_period_min: np.ndarray
    window_sync: np.ndarray
    # scalars
    feeder_hits: int
    max_sync: float
    max_p2p_kw: float
    # per subgroup per interval, when the population defines subgroups
    subgroup_sync: Optional[np.ndarray] = None

    @property
    def n_windows(self) -> int:
        return len(self.window_start_min)


def compute_metrics(trace: Trace, window_min: float = 120.0) -> MetricsReport:
    """Reduce a trace to the synchronization/oscillation report."""
    interval_min = trace.scenario.market_interval_min
    w = int(round(window_min / interval_min))
    if w < 4:
        raise ValueError("window_min must span at least 4 market intervals")
    n_int = trace.n_intervals
    pop = trace.population

    sync = np.empty(n_int)
    dispersion = np.empty(n_int)
    for t in range(n_int):
        sync[t] = sync_index(
            trace.theta_by_interval[t], trace.m_by_interval[t],
            pop.theta_min, pop.theta_max,
        )
        dispersion[t] = temperature_dispersion(
            trace.theta_by_interval[t], pop.theta_set
        )

    n_windows = max(n_int - w + 1, 0)
    window_start = trace.time_min[:n_windows].copy()
    window_p2p = np.empty(n_windows)
    window_period = np.empty(n_windows)
    window_sync = np.empty(n_windows)
    for s in range(n_windows):
        seg = trace.avg_demand_kw[s : s + w]
        window_p2p[s], window_period[s] = demand_oscillation(seg, interval_min)
        window_sync[s] = sync[s : s + w].mean()

    subgroup_sync = None
    if pop.subgroup is not None:
        groups = np.unique(pop.subgroup)
        subgroup_sync = np.empty((len(groups), n_int))
        for gi, g in enumerate(groups):
            sel = pop.subgroup == g
            for t in range(n_int):
                subgroup_sync[gi, t] = sync_index(
                    trace.theta_by_interval[t][sel],
                    trace.m_by_interval[t][sel],
                    pop.theta_min[sel],
                    pop.theta_max[sel],
                )

    return MetricsReport(
        window_min=window_min,
        interval_minutes=interval_min,
        feeder_limit_kw=trace.feeder_limit_kw,
        time_min=trace.time_min.copy(),
        sync=sync,
        dispersion_degc=dispersion,
        price_divergence=trace.clearing_price - trace.base_price,
        window_start_min=window_start,
        window_p2p_kw=window_p2p,
        window_period_min=window_period,
        window_sync=window_sync,
        feeder_hits=int(trace.constrained.sum()),
        max_sync=float(sync.max()) if n_int else 0.0,
        max_p2p_kw=float(window_p2p.max()) if n_windows else 0.0,
        subgroup_sync=subgroup_sync,
    )
