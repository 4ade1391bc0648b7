import logging

import numpy as np
import pytest

from qkd_logic.errors import DegenerateCalibrationError, DomainError
from qkd_logic.fibergrid import ChannelAssignment, ChannelPlan, Direction, FrequencyGrid, Role
from qkd_logic.units import dbm_to_mw
from qkd_logic.xtmodel import (FilterSpec, MeasurementRecord, XtalkModel, calibrate, fit_linearity, predict_total_pcr,
                               predict_xt_pcr, synthesize_records, weighted_avg_pcr)

CO = Direction.CO
COUNTER = Direction.COUNTER


def record(power, pcr, direction=CO, cores=(1, 2, 4), length=1.0, loss=0.0):
    return MeasurementRecord(power, pcr, direction, frozenset(cores), 193500, length, loss)


def neighbour_plan(topology, powers, direction=CO, freq=193400, quantum_freq=193500, grid=None):
    """Quantum core 3 with one classical channel per neighbour core 1, 2, 4"""
    grid = grid or FrequencyGrid(193400, 200, 2)
    assignments = [ChannelAssignment(3, quantum_freq, Role.QUANTUM)]
    for core, power in zip((1, 2, 4), powers):
        if power is not None:
            assignments.append(ChannelAssignment(core, freq, Role.CLASSICAL, direction, power))
    return ChannelPlan(topology, grid, tuple(assignments), 3)


#### weighted average ####

def test_weighted_avg_examples():
    assert weighted_avg_pcr([record(0, 1000), record(10, 10000)]) == pytest.approx(1000.0)
    assert weighted_avg_pcr([record(3, 2000)]) == pytest.approx(1002.37, abs=0.01)
    assert weighted_avg_pcr([record(0, 0)]) == 0


def test_weighted_avg_rejects_empty_and_mixed():
    with pytest.raises(DomainError):
        weighted_avg_pcr([])
    with pytest.raises(DomainError) as info:
        weighted_avg_pcr([record(0, 10, length=1.0), record(3, 20, length=2.0)])
    assert info.value.field == "length_km"
    with pytest.raises(DomainError) as info:
        weighted_avg_pcr([record(0, 10, direction=CO), record(3, 20, direction=COUNTER)])
    assert info.value.field == "direction"


def test_weighted_avg_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        k = int(rng.integers(1, 8))
        powers = rng.uniform(-10, 15, size=k)
        pcrs = rng.uniform(0, 1e5, size=k)
        expected = sum(p / 10 ** (d / 10) for d, p in zip(powers, pcrs)) / k
        got = weighted_avg_pcr([record(float(d), float(p)) for d, p in zip(powers, pcrs)])
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)


#### calibration ####

def test_calibrate_three_core_group():
    records = [record(0, 1500), record(3, 1500 * 10 ** 0.3), record(0, 150, COUNTER)]
    model = calibrate(records, dark_floor=0)
    assert model.chi_co == pytest.approx(500.0)
    assert model.chi_counter == pytest.approx(50.0)


def test_calibrate_recovers_ratio_and_per_core_equality():
    truth = XtalkModel(chi_co=8.4, chi_counter=0.84, dark_floor_cps=10.0)
    powers = [0, 3, 6, 9, 12]
    three_core = synthesize_records(truth, powers, CO, (1, 2, 4), 1.0)
    counter = synthesize_records(truth, powers, COUNTER, (1, 2, 4), 1.0)
    model = calibrate(three_core + counter, dark_floor=10.0)
    ratio_db = 10 * np.log10(model.chi_counter / model.chi_co)
    assert ratio_db == pytest.approx(-10.0, abs=0.5)

    for core in (1, 2, 4):
        single = calibrate(synthesize_records(truth, powers, CO, (core,), 1.0) + counter, dark_floor=10.0)
        assert single.chi_co == pytest.approx(model.chi_co, rel=0.05)


def test_calibrate_filtered_groups():
    truth = XtalkModel(chi_co=8.4, chi_counter=0.84, dark_floor_cps=10.0,
                       chi_co_filtered=0.672, chi_counter_filtered=0.0672)
    records = []
    for direction in (CO, COUNTER):
        records += synthesize_records(truth, [0, 6, 12], direction, (1, 2, 4), 1.0)
        records += synthesize_records(truth, [0, 6, 12], direction, (1, 2, 4), 1.0, filter_loss_db=2.1)
    model = calibrate(records, dark_floor=10.0)
    assert model.chi_co_filtered == pytest.approx(0.672, rel=1e-9)
    assert model.chi_counter_filtered == pytest.approx(0.0672, rel=1e-9)
    assert model.reference_filter_loss_db == 0.0


def test_calibrate_missing_direction():
    with pytest.raises(DomainError, match="counter") as info:
        calibrate([record(0, 100), record(3, 200)], dark_floor=0)
    assert info.value.field == "direction"


def test_calibrate_all_zero_group():
    with pytest.raises(DegenerateCalibrationError):
        calibrate([record(0, 10), record(3, 10), record(0, 50, COUNTER)], dark_floor=10)


def test_calibrate_clamps_below_dark_floor(caplog):
    with caplog.at_level(logging.WARNING, logger="qkd_logic.xtmodel"):
        model = calibrate([record(0, 5), record(3, 100), record(0, 40, COUNTER)], dark_floor=10)
    assert len(model.flags) == 1
    assert "clamped" in caplog.text


def test_calibrate_rejects_non_neighbour_cores():
    with pytest.raises(DomainError) as info:
        calibrate([record(0, 100, cores=(5,)), record(0, 10, COUNTER)], dark_floor=0)
    assert info.value.field == "cores"


def test_calibrate_then_predict_reproduces_normalized_pcr(topology):
    records = [record(0, 1210), record(6, 4000), record(0, 130, COUNTER), record(2, 200, COUNTER)]
    model = calibrate(records, dark_floor=10)
    expected = weighted_avg_pcr([record(0, 1200), record(6, 3990)])
    predicted = predict_xt_pcr(model, neighbour_plan(topology, [0, 0, 0]), 1.0, CO)
    assert predicted == pytest.approx(expected, rel=1e-9)


#### prediction ####

def test_predict_examples(topology):
    model = XtalkModel(chi_co=500, chi_counter=50)
    assert predict_xt_pcr(model, neighbour_plan(topology, [0, 0, 0]), 1.0, CO) == pytest.approx(1500.0)
    counter_plan = neighbour_plan(topology, [0, 0, 0], COUNTER)
    assert predict_xt_pcr(model, counter_plan, 1.0, COUNTER) == pytest.approx(150.0)
    # 500 * 3 * 10^0.3 * 2
    assert predict_xt_pcr(model, neighbour_plan(topology, [3, 3, 3]), 2.0, CO) == pytest.approx(5985.79, abs=0.5)


def test_predict_ignores_other_direction_and_far_cores(topology, field_grid):
    model = XtalkModel(chi_co=500, chi_counter=50)
    plan = ChannelPlan(topology, field_grid, (
        ChannelAssignment(3, 193500, Role.QUANTUM),
        ChannelAssignment(5, 193400, Role.CLASSICAL, CO, 10.0),
        ChannelAssignment(1, 193400, Role.CLASSICAL, COUNTER, 0.0),
    ), 3)
    assert predict_xt_pcr(model, plan, 1.0, CO) == 0.0
    assert predict_xt_pcr(model, plan, 1.0, COUNTER) == pytest.approx(50.0)


def test_predict_with_filter(topology, narrow_filter):
    plan = neighbour_plan(topology, [0, 0, 0])
    plain = XtalkModel(chi_co=500, chi_counter=50)
    scaled = predict_xt_pcr(plain, plan, 1.0, CO, narrow_filter)
    assert scaled == pytest.approx(1500 * 10 ** -0.21)

    isolated = FilterSpec(2.1, 0.6, out_of_band_isolation_db=7.9)
    assert predict_xt_pcr(plain, plan, 1.0, CO, isolated) == pytest.approx(150.0)

    measured = XtalkModel(chi_co=500, chi_counter=50, chi_co_filtered=40)
    assert predict_xt_pcr(measured, plan, 1.0, CO, narrow_filter) == pytest.approx(120.0)


def test_predict_total_adds_dark_floor(topology, synthetic_model):
    plan = neighbour_plan(topology, [0, 0, 0], COUNTER)
    assert predict_total_pcr(synthetic_model, plan, 1.0) == pytest.approx(10 + 3 * 0.84)


def test_predict_warns_when_implausible(topology, monkeypatch, caplog):
    monkeypatch.setenv("MCF_PCR_WARN_CPS", "1000")
    with caplog.at_level(logging.WARNING, logger="qkd_logic.xtmodel"):
        predict_xt_pcr(XtalkModel(500, 50), neighbour_plan(topology, [0, 0, 0]), 1.0, CO)
    assert "beyond plausible" in caplog.text


def test_counter_below_co_for_synthetic_model(topology, synthetic_model):
    co = predict_xt_pcr(synthetic_model, neighbour_plan(topology, [5, 5, 5], CO), 10.0, CO)
    counter = predict_xt_pcr(synthetic_model, neighbour_plan(topology, [5, 5, 5], COUNTER), 10.0, COUNTER)
    assert counter < co


def test_scaling_laws(topology):
    rng = np.random.default_rng(3)
    wide_grid = FrequencyGrid(193000, 100, 10)
    for _ in range(10_000):
        model = XtalkModel(chi_co=float(rng.uniform(0.1, 1000)), chi_counter=float(rng.uniform(0.01, 100)))
        direction = CO if rng.random() < 0.5 else COUNTER
        powers = [float(p) for p in rng.uniform(-10, 15, size=3)]
        length = float(rng.uniform(0.1, 80))
        plan = neighbour_plan(topology, powers, direction)
        base = predict_xt_pcr(model, plan, length, direction)

        doubled = neighbour_plan(topology, [p + 10 * np.log10(2) for p in powers], direction)
        assert predict_xt_pcr(model, doubled, length, direction) == pytest.approx(2 * base, rel=1e-12)

        singles = sum(
            predict_xt_pcr(model, neighbour_plan(topology, [p if i == j else None for j, p in enumerate(powers)],
                                                 direction), length, direction)
            for i in range(3)
        )
        assert singles == pytest.approx(base, rel=1e-12)

        assert predict_xt_pcr(model, plan, 2 * length, direction) == pytest.approx(2 * base, rel=1e-12)

        moved = neighbour_plan(topology, powers, direction, freq=193700, quantum_freq=193450, grid=wide_grid)
        assert predict_xt_pcr(model, moved, length, direction) == base

        base_length = float(rng.uniform(0.05, length))
        boost = 10 * np.log10(length / base_length)
        emulated = neighbour_plan(topology, [p + boost for p in powers], direction)
        assert predict_xt_pcr(model, emulated, base_length, direction) == pytest.approx(base, rel=1e-9)


#### linearity fit ####

def test_fit_exact_line():
    records = [record(float(10 * np.log10(mw)), 400 * mw + 10) for mw in (1, 2, 4)]
    slope, intercept, r2 = fit_linearity(records)
    assert slope == pytest.approx(400)
    assert intercept == pytest.approx(10)
    assert r2 == pytest.approx(1.0)


def test_fit_constant_response():
    slope, _, r2 = fit_linearity([record(p, 50.0) for p in (0, 3, 6)])
    assert slope == pytest.approx(0, abs=1e-9)
    assert r2 == 0.0


def test_fit_noisy_line_matches_polyfit():
    rng = np.random.default_rng(2024)
    powers_dbm = np.linspace(0, 12, 13)
    mw = dbm_to_mw(powers_dbm)
    pcr = 25.2 * mw + 10 + rng.normal(0, 5, size=mw.size)
    slope, intercept, r2 = fit_linearity([record(float(d), float(max(p, 0))) for d, p in zip(powers_dbm, pcr)])
    oracle_slope, oracle_intercept = np.polyfit(mw, np.clip(pcr, 0, None), 1)
    assert slope == pytest.approx(oracle_slope, rel=1e-9)
    assert intercept == pytest.approx(oracle_intercept, rel=1e-6)
    assert slope == pytest.approx(25.2, rel=0.05)
    assert 0 <= r2 <= 1


def test_fit_needs_three_distinct_points():
    with pytest.raises(DomainError):
        fit_linearity([record(0, 1), record(3, 2)])
    with pytest.raises(DomainError):
        fit_linearity([record(3, 1), record(3, 2), record(3, 3)])


def test_record_validation():
    with pytest.raises(DomainError):
        record(0, -1)
    with pytest.raises(DomainError):
        record(0, 1, length=0)
    with pytest.raises(DomainError):
        record(0, 1, cores=())
