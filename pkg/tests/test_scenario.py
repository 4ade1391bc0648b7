from dataclasses import replace

import numpy as np
import pytest

from conftest import BASELINE_QBER, BASELINE_SKR, build_field_plan
from qkd_logic.errors import CalibrationFailure, DomainError, SweepPointError
from qkd_logic.fibergrid import Direction
from qkd_logic.qkdrate import DecoyParams, LinkScenario, secure_key_rate
from qkd_logic.scenario import (Curve, SweepSpec, Variant, calibrate_baseline, emulate_length, emulate_scenario,
                                find_crossover, max_reach, point_scenario, run_sweep, summarize, xt_penalty)

CO = Direction.CO
COUNTER = Direction.COUNTER


@pytest.fixture
def template(calibrated, synthetic_model):
    scenario, params = calibrated
    return secure_key_rate(scenario, synthetic_model, params)


def make_curve(template, label, xs, skrs):
    return Curve(label, tuple((float(x), replace(template, skr_bps=float(s))) for x, s in zip(xs, skrs)))


def length_spec(scenario, variants, narrow_filter, start=1.0, stop=40.0, step=3.0):
    return SweepSpec("length_km", start, stop, step, scenario, tuple(Variant.parse(v) for v in variants), narrow_filter)


#### variants / sweep specs ####

@pytest.mark.parametrize("label", ["co", "counter", "co+filter", "counter+noxt", "co+filter+noxt"])
def test_variant_labels(label):
    assert Variant.parse(label).label == label


@pytest.mark.parametrize("label", ["sideways", "co+bogus", "co+filter+filter"])
def test_variant_rejects_unknown_labels(label):
    with pytest.raises(DomainError):
        Variant.parse(label)


def test_unknown_direction_names_variants_key():
    with pytest.raises(DomainError) as info:
        Variant.parse("sideways+filter")
    assert info.value.field == "variants"
    assert "sideways+filter" in str(info.value)


def test_sweep_grid_is_index_based(calibrated):
    scenario, _ = calibrated
    spec = SweepSpec("length_km", 0.5, 1.5, 0.1, scenario, (Variant(CO),))
    assert len(spec.xs) == 11
    assert spec.xs[-1] == pytest.approx(1.5, abs=1e-12)
    assert SweepSpec("length_km", 5, 5, 1, scenario, (Variant(CO),)).xs == [5]


@pytest.mark.parametrize("kwargs", [
    dict(variable="temperature"),
    dict(step=0.0),
    dict(start=10.0, stop=1.0),
    dict(variants=(Variant(CO, extra_filter=True),)),
])
def test_sweep_spec_validation(calibrated, kwargs):
    scenario, _ = calibrated
    base = dict(variable="length_km", start=1.0, stop=5.0, step=1.0, fixed=scenario, variants=(Variant(CO),))
    base.update(kwargs)
    with pytest.raises(DomainError):
        SweepSpec(**base)


def test_point_scenario(calibrated, narrow_filter):
    scenario, _ = calibrated
    spec = SweepSpec("power_dbm", 0, 12, 3, scenario, (Variant(CO, True), Variant(COUNTER, no_xt=True)), narrow_filter)

    filtered = point_scenario(spec, spec.variants[0], 9.0)
    assert filtered.extra_filter == narrow_filter
    assert filtered.direction is CO
    assert {a.launch_power_dbm for a in filtered.plan.classical_channels} == {9.0}

    quiet = point_scenario(spec, spec.variants[1], 9.0)
    assert quiet.plan.classical_channels == ()
    assert quiet.extra_filter is None


#### sweeps ####

def test_empty_variants(calibrated, synthetic_model):
    scenario, params = calibrated
    assert run_sweep(SweepSpec("length_km", 1, 5, 1, scenario, ()), synthetic_model, params) == []


def test_single_point_sweep(calibrated, synthetic_model):
    scenario, params = calibrated
    curves = run_sweep(SweepSpec("length_km", 5, 5, 1, scenario, (Variant(CO),)), synthetic_model, params)
    assert len(curves) == 1 and len(curves[0].points) == 1
    assert curves[0].xs[0] == 5.0


def test_curves_decrease_with_length(calibrated, synthetic_model, narrow_filter):
    scenario, params = calibrated
    curves = run_sweep(length_spec(scenario, ["counter", "co+filter", "co"], narrow_filter), synthetic_model, params)
    assert [c.label for c in curves] == ["counter", "co+filter", "co"]
    for curve in curves:
        assert np.all(np.diff(curve.skr) <= 1e-9)


def test_parallel_sweep_matches_sequential(calibrated, synthetic_model, narrow_filter):
    scenario, params = calibrated
    spec = length_spec(scenario, ["counter", "co"], narrow_filter, stop=20.0)
    sequential = run_sweep(spec, synthetic_model, params)
    parallel = run_sweep(spec, synthetic_model, params, workers=2)
    assert [c.label for c in parallel] == [c.label for c in sequential]
    for a, b in zip(sequential, parallel):
        assert np.array_equal(a.xs, b.xs)
        assert np.array_equal(a.skr, b.skr)


def test_sweep_point_error_names_the_point(calibrated, synthetic_model):
    scenario, params = calibrated
    broken = replace(scenario, plan=replace(scenario.plan, quantum_core=1))
    spec = SweepSpec("length_km", 2, 4, 1, broken, (Variant(CO),))
    with pytest.raises(SweepPointError) as info:
        run_sweep(spec, synthetic_model, params)
    assert info.value.x == 2
    assert info.value.variant == "co"


def test_invalid_grid_point_names_the_point(calibrated, synthetic_model):
    scenario, params = calibrated
    spec = SweepSpec("length_km", 0, 3, 1, scenario, (Variant(CO),))
    with pytest.raises(SweepPointError) as info:
        run_sweep(spec, synthetic_model, params)
    assert info.value.x == 0
    assert info.value.variant == "co"


#### length emulation ####

def test_emulate_length_absolute():
    for target, voa, boost in [(10, 2.3, 10.0), (20, 4.6, 13.0), (30, 6.9, 14.8)]:
        voa_db, boost_db = emulate_length(target, 1, 0.23, "absolute")
        assert voa_db == pytest.approx(voa)
        assert boost_db == pytest.approx(boost, abs=0.05)


def test_emulate_length_incremental():
    assert emulate_length(10, 1, 0.23) == pytest.approx((2.07, 10.0))
    assert emulate_length(7.5, 7.5, 0.23) == (0.0, 0.0)


@pytest.mark.parametrize("args", [(5, 10, 0.23), (10, 0, 0.23), (10, 1, 0.23, "relative")])
def test_emulate_length_rejects(args):
    with pytest.raises(DomainError):
        emulate_length(*args)


@pytest.mark.parametrize("direction", [CO, COUNTER])
def test_emulated_link_matches_real_link(calibrated, synthetic_model, direction):
    scenario, params = calibrated
    real = replace(scenario, length_km=25.0, direction=direction, plan=build_field_plan(3.0))
    stand_in = emulate_scenario(real, 1.0)
    assert stand_in.length_km == 1.0
    a = secure_key_rate(real, synthetic_model, params)
    b = secure_key_rate(stand_in, synthetic_model, params)
    assert b.xt_pcr_cps == pytest.approx(a.xt_pcr_cps, rel=1e-9)
    assert b.skr_bps == pytest.approx(a.skr_bps, rel=1e-9)
    assert b.qber == pytest.approx(a.qber, rel=1e-9)


#### curve analysis ####

def test_crossover_identical_curves(template):
    a = make_curve(template, "a", [0, 1, 2], [3, 2, 1])
    assert find_crossover(a, a) is None


def test_crossover_interpolated(template):
    a = make_curve(template, "a", [0, 1, 2], [5, 4, 0])
    b = make_curve(template, "b", [0, 1, 2], [2, 5, 5])
    assert find_crossover(a, b) == pytest.approx(0.75)


def test_crossover_on_grid_point(template):
    a = make_curve(template, "a", [0, 1, 2], [3, 2, 1])
    b = make_curve(template, "b", [0, 1, 2], [1, 2, 3])
    assert find_crossover(a, b) == 1.0


def test_crossover_zero_run(template):
    a = make_curve(template, "a", [0, 1, 2, 3], [1, 0, 0, 0])
    b = make_curve(template, "b", [0, 1, 2, 3], [0, 0, 0, 1])
    assert find_crossover(a, b) == 1.0


def test_touching_curves_do_not_cross(template):
    a = make_curve(template, "a", [0, 1, 2], [2, 1, 2])
    b = make_curve(template, "b", [0, 1, 2], [1, 1, 1])
    assert find_crossover(a, b) is None


def test_crossover_needs_shared_grid(template):
    a = make_curve(template, "a", [0, 1, 2], [1, 1, 1])
    b = make_curve(template, "b", [0, 1, 3], [1, 1, 1])
    with pytest.raises(DomainError):
        find_crossover(a, b)


def test_max_reach(template):
    assert max_reach(make_curve(template, "a", [1, 2, 3, 4], [5, 3, 0, 0])) == 2.0
    assert max_reach(make_curve(template, "a", [1, 2], [0, 0])) == 0.0


def test_curve_requires_increasing_x(template):
    with pytest.raises(DomainError):
        make_curve(template, "a", [1, 1], [1, 1])


def test_xt_penalty(template):
    a = make_curve(template, "a", [0, 1, 2], [9, 7, 1])
    b = make_curve(template, "b", [0, 1, 2], [10, 10, 2])
    assert xt_penalty(a, b) == 3.0


def test_summarize(calibrated, synthetic_model, narrow_filter):
    scenario, params = calibrated
    curves = run_sweep(length_spec(scenario, ["co+filter", "co"], narrow_filter, step=1.0), synthetic_model, params)
    summary = summarize(curves, [("co", "co+filter")])
    assert set(summary["reach_km"]) == {"co", "co+filter"}
    assert summary["reach_km"]["co+filter"] > summary["reach_km"]["co"]
    assert 10 <= summary["crossovers"]["co:co+filter"] <= 15
    with pytest.raises(DomainError):
        summarize(curves, [("co", "counter")])


def test_summarize_reports_xt_penalty(calibrated, synthetic_model):
    scenario, params = calibrated
    spec = SweepSpec("power_dbm", 0, 12, 3, scenario, tuple(Variant.parse(v) for v in ["co", "co+noxt", "counter"]))
    curves = run_sweep(spec, synthetic_model, params)
    summary = summarize(curves)
    assert set(summary["xt_penalty_bps"]) == {"co"}
    assert summary["xt_penalty_bps"]["co"] == xt_penalty(curves[0], curves[1])
    assert summary["xt_penalty_bps"]["co"] > 0


#### baseline calibration ####

def test_baseline_hits_targets(calibrated, baseline, synthetic_model):
    scenario, params = calibrated
    result = secure_key_rate(replace(scenario, plan=scenario.plan.without_classical()), synthetic_model, params)
    assert result.skr_bps == pytest.approx(BASELINE_SKR, rel=1e-3)
    assert result.qber == pytest.approx(BASELINE_QBER, rel=1e-3)
    e_d, loss = baseline
    assert e_d == pytest.approx(0.006119, rel=1e-3)
    assert loss == pytest.approx(16.683, rel=1e-3)


def test_baseline_round_trip(synthetic_model, detector):
    quiet = build_field_plan().without_classical()
    truth = LinkScenario(1.0, 0.23, 15.0, quiet, None, detector)
    forward = secure_key_rate(truth, synthetic_model, DecoyParams(e_detector=0.005))
    e_d, loss = calibrate_baseline(forward.skr_bps, forward.qber, replace(truth, fixed_losses_db=10.0), DecoyParams())
    assert e_d == pytest.approx(0.005, abs=1e-4)
    assert loss == pytest.approx(15.0, abs=1e-4)


def test_baseline_infeasible_qber(calibrated):
    scenario, _ = calibrated
    with pytest.raises(CalibrationFailure):
        calibrate_baseline(BASELINE_SKR, 1e-6, replace(scenario, plan=scenario.plan.without_classical()), DecoyParams())


def test_baseline_rejects_classical_traffic(calibrated):
    scenario, _ = calibrated
    with pytest.raises(DomainError):
        calibrate_baseline(BASELINE_SKR, BASELINE_QBER, scenario, DecoyParams())
