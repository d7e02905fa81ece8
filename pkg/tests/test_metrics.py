"""Phase mapping, synchronization index, and oscillation summaries."""

import math

import numpy as np
import pytest

from tclmarket.engine import PopulationSpec, PriceSignal, Scenario, run
from tclmarket.metrics import (
    compute_metrics,
    cycle_phases,
    demand_oscillation,
    sync_index,
    temperature_dispersion,
)

LO = np.array([19.75])
HI = np.array([20.25])


def phase_of(theta: float, m: int) -> float:
    return float(cycle_phases(np.array([theta]), np.array([m]), LO, HI)[0])


# ------------------------------------------------------------------- phases

def test_phase_mapping_around_the_loop():
    assert phase_of(19.75, 0) == 0.0                      # cold, warming up
    assert phase_of(20.0, 0) == pytest.approx(math.pi / 2)
    assert phase_of(20.25, 0) == pytest.approx(math.pi)    # top, about to switch
    assert phase_of(20.25, 1) == pytest.approx(math.pi)
    assert phase_of(20.0, 1) == pytest.approx(3 * math.pi / 2)
    assert phase_of(19.75, 1) == 0.0                      # bottom wraps to 0


def test_phase_clips_outside_the_deadband():
    # a blocked device drifting hot parks at the top of the warming leg
    assert phase_of(21.5, 0) == pytest.approx(math.pi)
    assert phase_of(19.0, 0) == 0.0
    assert phase_of(19.0, 1) == 0.0


# --------------------------------------------------------------- sync index

def lo(n):
    return np.full(n, 19.75)


def hi(n):
    return np.full(n, 20.25)


def test_identical_population_is_fully_synchronized():
    theta = np.full(10, 20.1)
    m = np.ones(10, dtype=int)
    assert sync_index(theta, m, lo(10), hi(10)) == 1.0


def test_quadrature_phases_cancel():
    # phases 0, pi/2, pi, 3*pi/2
    theta = np.array([19.75, 20.0, 20.25, 20.0])
    m = np.array([0, 0, 0, 1])
    assert sync_index(theta, m, lo(4), hi(4)) == pytest.approx(0.0, abs=1e-12)


def test_two_coherent_groups_in_antiphase_cancel():
    # ten devices at pi/4 against ten at 5*pi/4
    theta = np.concatenate([np.full(10, 19.875), np.full(10, 20.125)])
    m = np.array([0] * 10 + [1] * 10)
    assert sync_index(theta, m, lo(20), hi(20)) == pytest.approx(0.0, abs=1e-12)


def test_sync_index_invariant_under_relabeling():
    rng = np.random.default_rng(0)
    theta = rng.uniform(19.75, 20.25, 30)
    m = rng.integers(0, 2, 30)
    base = sync_index(theta, m, lo(30), hi(30))
    perm = rng.permutation(30)
    assert sync_index(theta[perm], m[perm], lo(30), hi(30)) == pytest.approx(base)


def test_adding_a_device_at_the_common_phase_keeps_unity():
    theta = np.full(5, 19.9)
    m = np.zeros(5, dtype=int)
    assert sync_index(theta, m, lo(5), hi(5)) == 1.0
    theta2 = np.append(theta, 19.9)
    m2 = np.append(m, 0)
    assert sync_index(theta2, m2, lo(6), hi(6)) == 1.0


def test_sync_index_rejects_empty_population():
    with pytest.raises(ValueError):
        sync_index(np.array([]), np.array([]), np.array([]), np.array([]))


def test_temperature_dispersion():
    assert temperature_dispersion(np.array([20.5, 21.5]), np.array([20.0, 21.0])) == 0.0
    assert temperature_dispersion(np.array([20.5, 19.5]), np.array([20.0, 20.0])) == 0.5


# ------------------------------------------------------------- oscillations

def test_constant_series_has_no_oscillation():
    p2p, period = demand_oscillation(np.full(24, 500.0))
    assert p2p == 0.0
    assert math.isnan(period)


def test_square_wave_peak_to_peak_and_period():
    # demand flipping between 100 and 300 kW every 15 min: period 30 min
    series = np.tile([100.0] * 3 + [300.0] * 3, 4)
    p2p, period = demand_oscillation(series, interval_minutes=5.0)
    assert p2p == 200.0
    assert period == 30.0


def test_mixed_sinusoids_report_the_larger_component():
    t = 5.0 * np.arange(24)
    series = 2.0 * np.sin(2 * np.pi * t / 60.0) + 1.0 * np.sin(2 * np.pi * t / 30.0)
    _, period = demand_oscillation(series, interval_minutes=5.0)
    assert period == 60.0


def test_peak_to_peak_is_translation_invariant():
    t = 5.0 * np.arange(24)
    series = 100.0 * np.sin(2 * np.pi * t / 40.0)
    a = demand_oscillation(series)
    b = demand_oscillation(series + 777.0)
    assert a == b


def test_oscillation_window_must_cover_four_intervals():
    with pytest.raises(ValueError):
        demand_oscillation(np.array([1.0, 2.0, 3.0]))


# ------------------------------------------------------------ trace reports

@pytest.fixture(scope="module")
def small_trace():
    return run(Scenario(
        name="metrics-small",
        population=PopulationSpec(count=16),
        price_signal=PriceSignal.square(low=20.0, high=30.0, period_min=10.0),
        horizon_min=120.0,
        seed=4,
    ))


def test_report_shapes_and_scalars(small_trace):
    report = compute_metrics(small_trace, window_min=60.0)
    n = small_trace.n_intervals
    assert n == 24
    assert report.sync.shape == (n,)
    assert report.dispersion_degc.shape == (n,)
    assert np.all((report.sync >= 0.0) & (report.sync <= 1.0))
    assert np.all(report.dispersion_degc >= 0.0)
    assert report.n_windows == n - 12 + 1
    assert np.array_equal(report.window_start_min, small_trace.time_min[: report.n_windows])
    assert report.feeder_hits == int(small_trace.constrained.sum())
    assert report.max_sync == report.sync.max()
    assert report.max_p2p_kw == report.window_p2p_kw.max()
    assert np.array_equal(
        report.price_divergence, small_trace.clearing_price - small_trace.base_price
    )
    assert report.subgroup_sync is None


def test_report_carries_per_subgroup_sync():
    trace = run(Scenario(
        name="metrics-groups",
        population=PopulationSpec(count=16, subgroups=4),
        horizon_min=60.0,
        seed=4,
    ))
    report = compute_metrics(trace, window_min=30.0)
    assert report.subgroup_sync is not None
    assert report.subgroup_sync.shape == (4, trace.n_intervals)
    assert np.all((report.subgroup_sync >= 0.0) & (report.subgroup_sync <= 1.0))


def test_report_rejects_tiny_windows(small_trace):
    with pytest.raises(ValueError):
        compute_metrics(small_trace, window_min=10.0)
