import json
import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadekit import (
    Architecture,
    Cascade,
    ClassDistribution,
    ClassifierModel,
    Dataset,
    ExitTrace,
    Instance,
    StageSpec,
    TrainConfig,
    ValidationError,
    calibrate_threshold,
    cascade_predict,
    load_cascade,
    load_traces,
    run_cascade,
    save_cascade,
    save_traces,
    speedup_ratio,
)
from cascadekit.cascade import trace_from_dict


def linear_stage(weight_scale, layer_cost):
    """1-feature 2-class linear stage: confidence = sigmoid(2*scale*|x|)."""
    weights = {
        "w": np.array([[weight_scale, -weight_scale]]),
        "b": np.zeros(2),
    }
    model = ClassifierModel(Architecture("linear"), 1, 2, weights, TrainConfig())
    return StageSpec(model, layer_cost)


def planted_confidence_dataset(confs):
    """Instances whose stage-0 confidence (scale 1) is exactly each value."""
    instances = []
    for i, c in enumerate(confs):
        if not 0.5 <= c < 1.0:
            raise ValueError("two-class confidence lives in [0.5, 1)")
        x = 0.5 * math.log(c / (1.0 - c))
        instances.append(Instance(f"p{i}", np.array([x]), 0))
    return Dataset(tuple(instances), num_classes=2, feature_dim=1)


def two_stage_cascade(threshold=0.6, costs=(2, 10), full=12):
    return Cascade(
        stages=(linear_stage(1.0, costs[0]), linear_stage(20.0, costs[1])),
        thresholds=(threshold,),
        full_model_cost=full,
    )


# --- construction validation --------------------------------------------------


def test_cascade_validation():
    s2, s4 = linear_stage(1.0, 2), linear_stage(1.0, 4)
    Cascade((s2, s4), (0.5,))
    Cascade((s2, linear_stage(1.0, 2)), (0.5,))  # equal costs allowed
    with pytest.raises(ValidationError, match="ascending"):
        Cascade((s4, s2), (0.5,))
    with pytest.raises(ValidationError, match="threshold"):
        Cascade((s2, s4), ())
    with pytest.raises(ValidationError):
        Cascade((s2, s4), (1.5,))
    with pytest.raises(ValidationError):
        Cascade((s2, s4), (0.5,), full_model_cost=0)
    with pytest.raises(ValidationError):
        Cascade((), ())
    with pytest.raises(ValidationError):
        StageSpec(linear_stage(1.0, 2).model, 0)


def test_exit_trace_validation():
    dist = ClassDistribution(np.array([0.9, 0.1]))
    ExitTrace("a", 1, dist, 0.9, (2, 4), 6)
    with pytest.raises(ValidationError, match="executed_costs"):
        ExitTrace("a", 1, dist, 0.9, (2,), 2)
    with pytest.raises(ValidationError, match="total_cost"):
        ExitTrace("a", 1, dist, 0.9, (2, 4), 7)


def test_with_shared_threshold():
    cascade = Cascade(
        (linear_stage(1.0, 2), linear_stage(1.0, 4), linear_stage(1.0, 12)),
        (0.1, 0.9),
    )
    out = cascade.with_shared_threshold(0.7)
    assert out.thresholds == (0.7, 0.7)
    assert out.stages == cascade.stages
    assert out.full_model_cost == cascade.full_model_cost


# --- exit semantics -------------------------------------------------------------


def test_exit_costs_charge_every_executed_stage():
    # a miss at the 2-layer stage re-runs on the 4-layer stage: 6 layers total,
    # exactly 2x the 12-layer reference, not 3x
    stages = (linear_stage(1.0, 2), linear_stage(20.0, 4))
    cascade = Cascade(stages, (0.99,), full_model_cost=12)
    ds = planted_confidence_dataset([0.7])
    trace = cascade_predict(cascade, ds.instances[0])
    assert trace.exit_stage == 1
    assert trace.executed_costs == (2, 4)
    assert trace.total_cost == 6
    assert speedup_ratio([trace], 12) == pytest.approx(2.0)


def test_exit_requires_strictly_greater_confidence():
    # zero-weight stage gives confidence exactly 0.5; tau = 0.5 must not exit
    stages = (linear_stage(0.0, 2), linear_stage(20.0, 10))
    cascade = Cascade(stages, (0.5,), full_model_cost=12)
    inst = Instance("x", np.array([1.0]), 0)
    trace = cascade_predict(cascade, inst)
    assert trace.confidence == 1.0  # stage-1 confidence, sigmoid(40) to float
    assert trace.exit_stage == 1
    # any tau below 0.5 lets the same instance out at stage 0
    lower = cascade.with_shared_threshold(0.499)
    assert cascade_predict(lower, inst).exit_stage == 0


def test_threshold_one_sends_everything_to_the_last_stage():
    cascade = two_stage_cascade(threshold=1.0)
    ds = planted_confidence_dataset([0.55, 0.8, 0.99])
    traces = run_cascade(cascade, ds)
    assert [t.exit_stage for t in traces] == [1, 1, 1]
    assert all(t.total_cost == 12 for t in traces)
    assert speedup_ratio(traces, 12) == pytest.approx(1.0)


def test_threshold_zero_exits_everything_at_stage_zero():
    cascade = two_stage_cascade(threshold=0.0)
    ds = planted_confidence_dataset([0.55, 0.8, 0.99])
    traces = run_cascade(cascade, ds)
    assert [t.exit_stage for t in traces] == [0, 0, 0]
    assert speedup_ratio(traces, 12) == pytest.approx(6.0)


def test_single_stage_cascade_always_answers():
    cascade = Cascade((linear_stage(0.0, 5),), (), full_model_cost=10)
    trace = cascade_predict(cascade, Instance("x", np.array([3.0]), 0))
    assert trace.exit_stage == 0
    assert trace.confidence == 0.5
    assert trace.total_cost == 5


def test_traces_preserve_dataset_order():
    cascade = two_stage_cascade()
    ds = planted_confidence_dataset([0.9, 0.55, 0.7])
    traces = run_cascade(cascade, ds)
    assert [t.instance_id for t in traces] == ds.ids()


@settings(max_examples=60)
@given(
    tau_lo=st.floats(min_value=0.0, max_value=1.0),
    tau_hi=st.floats(min_value=0.0, max_value=1.0),
)
def test_raising_threshold_never_exits_earlier(tau_lo, tau_hi):
    if tau_lo > tau_hi:
        tau_lo, tau_hi = tau_hi, tau_lo
    ds = planted_confidence_dataset([0.5, 0.55, 0.62, 0.7, 0.8, 0.9, 0.97])
    cascade = two_stage_cascade()
    low = run_cascade(cascade.with_shared_threshold(tau_lo), ds)
    high = run_cascade(cascade.with_shared_threshold(tau_hi), ds)
    for a, b in zip(low, high):
        assert a.exit_stage <= b.exit_stage
        assert a.total_cost <= b.total_cost


def test_speedup_ratio_validation():
    with pytest.raises(ValidationError):
        speedup_ratio([], 12)
    dist = ClassDistribution(np.array([1.0, 0.0]))
    trace = ExitTrace("a", 0, dist, 1.0, (3,), 3)
    with pytest.raises(ValidationError):
        speedup_ratio([trace], 0)


# --- threshold calibration -------------------------------------------------------


def test_calibration_hits_exact_operating_point():
    # stage-0 confidences 0.9, 0.75, 0.6 with costs (2, 10) against 12:
    # tau=0.6 exits two instances at cost 2, one pays 12 -> 12/(16/3) = 2.25
    ds = planted_confidence_dataset([0.9, 0.75, 0.6])
    cascade = two_stage_cascade()
    thresholds = calibrate_threshold(cascade, ds, target_speedup=2.25)
    assert len(thresholds) == 1
    assert thresholds[0] == pytest.approx(0.6, abs=1e-9)
    traces = run_cascade(cascade.with_shared_threshold(thresholds[0]), ds)
    assert speedup_ratio(traces, 12) == pytest.approx(2.25, abs=1e-12)


def test_calibration_picks_nearest_achievable():
    # achievable speedups here: 6 (tau=0), 2.25, 18/13, 1; target 2.3 is
    # within 4% of 2.25
    ds = planted_confidence_dataset([0.9, 0.75, 0.6])
    cascade = two_stage_cascade()
    thresholds = calibrate_threshold(cascade, ds, target_speedup=2.3)
    assert thresholds[0] == pytest.approx(0.6, abs=1e-9)


def test_calibration_rejects_unreachable_target():
    ds = planted_confidence_dataset([0.9, 0.75, 0.6])
    cascade = two_stage_cascade()
    with pytest.raises(ValidationError, match="achievable range"):
        calibrate_threshold(cascade, ds, target_speedup=4.0)


def test_calibration_rejects_target_outside_bounds():
    ds = planted_confidence_dataset([0.9])
    cascade = two_stage_cascade()
    with pytest.raises(ValidationError, match="outside achievable"):
        calibrate_threshold(cascade, ds, target_speedup=7.0)  # > 12/2
    with pytest.raises(ValidationError, match="outside achievable"):
        calibrate_threshold(cascade, ds, target_speedup=0.5)


def test_calibration_rejects_empty_or_bad_tolerance():
    ds = planted_confidence_dataset([0.9])
    cascade = two_stage_cascade()
    with pytest.raises(ValidationError, match="empty"):
        calibrate_threshold(
            cascade,
            Dataset((), num_classes=2, feature_dim=1),
            target_speedup=2.0,
        )
    with pytest.raises(ValidationError, match="tolerance"):
        calibrate_threshold(cascade, ds, target_speedup=2.0, tolerance=0.0)


def test_calibration_measured_matches_requested_within_tolerance():
    rng = np.random.default_rng(0)
    confs = np.clip(rng.uniform(0.5, 1.0, size=400), 0.5, 0.999)
    ds = planted_confidence_dataset(confs)
    cascade = two_stage_cascade()
    for target in (1.5, 2.0, 3.0):
        thresholds = calibrate_threshold(cascade, ds, target_speedup=target)
        traces = run_cascade(cascade.with_shared_threshold(thresholds[0]), ds)
        measured = speedup_ratio(traces, 12)
        assert abs(measured - target) <= 0.04 * target


def test_calibration_agrees_with_sequential_execution():
    # the vectorized sweep and cascade_predict must count exits identically,
    # including at candidate values equal to observed confidences
    ds = planted_confidence_dataset([0.9, 0.75, 0.6, 0.55])
    cascade = two_stage_cascade()
    from cascadekit.cascade import _confidence_matrix, _exit_stages

    conf = _confidence_matrix(cascade, ds)
    for tau in [0.0, 0.55, 0.6, 0.7499999, 0.75, 0.9, 1.0]:
        vector = _exit_stages(conf, np.array([tau]))
        sequential = [
            t.exit_stage for t in run_cascade(cascade.with_shared_threshold(tau), ds)
        ]
        np.testing.assert_array_equal(vector, sequential)


# --- serialization -----------------------------------------------------------------


def test_trace_roundtrip(tmp_path):
    cascade = two_stage_cascade()
    ds = planted_confidence_dataset([0.9, 0.55])
    traces = run_cascade(cascade, ds)
    path = tmp_path / "traces.jsonl"
    save_traces(traces, path)
    back = load_traces(path)
    assert len(back) == 2
    for orig, loaded in zip(traces, back):
        assert loaded.instance_id == orig.instance_id
        assert loaded.exit_stage == orig.exit_stage
        assert loaded.confidence == orig.confidence
        assert loaded.total_cost == orig.total_cost
        np.testing.assert_array_equal(loaded.distribution.probs, orig.distribution.probs)


def test_trace_load_reports_bad_line(tmp_path):
    path = tmp_path / "traces.jsonl"
    path.write_text("{broken\n")
    with pytest.raises(ValidationError, match="line 1"):
        load_traces(path)


def test_trace_from_dict_rejects_missing_fields():
    with pytest.raises(ValidationError, match="malformed"):
        trace_from_dict({"instance_id": "a"})


def test_cascade_bundle_roundtrip(tmp_path):
    cascade = two_stage_cascade(threshold=0.77)
    path = tmp_path / "cascade.json"
    save_cascade(cascade, path)
    assert (tmp_path / "stage0_model.json").exists()
    back = load_cascade(path)
    assert back.thresholds == (0.77,)
    assert back.full_model_cost == 12
    assert [s.layer_cost for s in back.stages] == [2, 10]
    ds = planted_confidence_dataset([0.9, 0.55])
    assert [t.exit_stage for t in run_cascade(back, ds)] == [
        t.exit_stage for t in run_cascade(cascade, ds)
    ]


def test_cascade_bundle_is_relocatable(tmp_path):
    cascade = two_stage_cascade()
    src = tmp_path / "bundle_a"
    src.mkdir()
    save_cascade(cascade, src / "cascade.json")
    dst = tmp_path / "bundle_b"
    shutil.copytree(src, dst, dirs_exist_ok=True)
    shutil.rmtree(src)
    back = load_cascade(dst / "cascade.json")
    assert len(back.stages) == 2


def test_cascade_save_filename_count_checked(tmp_path):
    cascade = two_stage_cascade()
    with pytest.raises(ValidationError, match="filename"):
        save_cascade(cascade, tmp_path / "c.json", model_filenames=["only_one.json"])


def test_cascade_load_rejects_malformed(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"stages": [{"layer_cost": 2}]}))
    with pytest.raises(ValidationError, match="malformed"):
        load_cascade(path)
