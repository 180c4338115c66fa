"""Virtual sensors on batches, residual values, calibration, detection."""

import math

import numpy as np
import pytest
import yaml

from loopfdi.errors import InsufficientTraining, MissingInput
from loopfdi.graph import DetectorConfig, default_config_text, load_system_config
from loopfdi.plant import FaultScenario, Simulator
from loopfdi.residuals import (
    Batch,
    Batcher,
    CalibrationRecord,
    Detector,
    calibrate,
    compute_virtual_sensors,
    evaluate_residuals,
    fit_ua,
    scan_activation,
)
from loopfdi.service import run_pipeline

CP = 1270.0
UA = 529.1666666666667
STEADY = {"ft_103": 0.25, "tc_114": 200.0, "tc_117": 150.0, "tc_116": 120.0, "tc_119": 170.0}

# Hand-derived residual values for a +10 C tc_117 bias at the default steady
# state (duty 15875 W, balanced 30 C terminal differences):
#   r1 = 1270*0.25*((200-160) - (170-120))                      = -3175
#   r2 = 12700 - UA * (-10/ln(30/40))                           = -5694.148...
#   r3 = 15875 - UA * 40  (vt_101 = 210, both deltas 40)        = -5291.666...
#   r4 = 15875 - UA * 30  (vt_102 = 150, both deltas 30)        = 0
#   r5 = 12700 - UA * 40  (vt_103 = 160, both deltas 40)        = -8466.666...
#   r6 = 12700 - UA * 30  (vt_104 = 130, both deltas 30)        = -3175
BIASED_EXPECTED = {
    "r1": -3175.0,
    "r2": 12700.0 - UA * (-10.0 / math.log(30.0 / 40.0)),
    "r3": 15875.0 - UA * 40.0,
    "r4": 0.0,
    "r5": 12700.0 - UA * 40.0,
    "r6": 12700.0 - UA * 30.0,
}


def make_batch(values: dict, n=30, index=1, t0=170.0) -> Batch:
    return Batch(index, t0, t0 + n, {k: np.full(n, v) for k, v in values.items()})


def nominal_calibration(graph) -> CalibrationRecord:
    return calibrate([make_batch(STEADY, index=i + 1) for i in range(10)], graph)


def test_virtuals_on_nominal_batch(graph):
    vs = compute_virtual_sensors(make_batch(STEADY), graph)
    assert vs["vf_102"] == 0.25
    assert vs["vt_101"] == pytest.approx(200.0, abs=1e-12)
    assert vs["vt_102"] == pytest.approx(150.0, abs=1e-12)
    assert vs["vt_103"] == pytest.approx(170.0, abs=1e-12)
    assert vs["vt_104"] == pytest.approx(120.0, abs=1e-12)


def test_virtuals_under_tc117_bias(graph):
    biased = dict(STEADY, tc_117=160.0)
    vs = compute_virtual_sensors(make_batch(biased), graph)
    # vt_101 carries the bias through; vt_102 omits tc_117 entirely
    assert vs["vt_101"] == pytest.approx(210.0, abs=1e-12)
    assert vs["vt_102"] == pytest.approx(150.0, abs=1e-12)


def test_missing_input_raises(graph):
    values = {k: v for k, v in STEADY.items() if k != "tc_119"}
    with pytest.raises(MissingInput) as err:
        compute_virtual_sensors(make_batch(values), graph)
    assert err.value.sensor_id == "tc_119"


def test_nominal_residuals_are_zero(graph):
    cal = nominal_calibration(graph)
    duty = CP * 0.25 * 50.0
    for rid, value in evaluate_residuals(make_batch(STEADY), graph, cal):
        assert abs(value) <= 1e-9 * duty, rid


def test_biased_batch_matches_frozen_values(graph):
    cal = nominal_calibration(graph)
    values = dict(evaluate_residuals(make_batch(dict(STEADY, tc_117=160.0)), graph, cal))
    for rid, expected in BIASED_EXPECTED.items():
        assert values[rid] == pytest.approx(expected, abs=1e-6), rid
    active = {rid for rid, v in values.items() if abs(v) > 1.0}
    assert active == {"r1", "r2", "r3", "r5", "r6"}


def test_degraded_ua_truth_keeps_r1_quiet(graph):
    # truth at UA*0.7 steady state, unbiased sensors, calibrated UA unchanged
    t_ho, t_co = 156.9230769230769, 163.0769230769231
    cal = nominal_calibration(graph)
    batch = make_batch(dict(STEADY, tc_117=t_ho, tc_119=t_co))
    values = dict(evaluate_residuals(batch, graph, cal))
    assert abs(values["r1"]) <= 1e-6
    for rid in ("r2", "r3", "r4", "r5", "r6"):
        assert abs(values[rid]) > 100.0, rid


def test_r1_linear_in_tc117_bias(graph):
    cal = nominal_calibration(graph)
    slope_expected = -STEADY["ft_103"] * CP
    for bias in (1.0, 5.0, 20.0):
        batch = make_batch(dict(STEADY, tc_117=150.0 + bias))
        r1 = dict(evaluate_residuals(batch, graph, cal))["r1"]
        assert r1 == pytest.approx(slope_expected * bias, rel=1e-9)


def test_fit_ua_recovers_truth_exactly(graph):
    batches = [make_batch(STEADY, index=i + 1) for i in range(10)]
    assert fit_ua(batches, graph) == pytest.approx(UA, rel=1e-9)


def test_fit_ua_roundtrip_with_modified_truth():
    doc = yaml.safe_load(default_config_text())
    doc["plant"]["ua_w_per_c"] = 480.0
    for sid in doc["plant"]["noise_std"]:
        doc["plant"]["noise_std"][sid] = 0.0
    g = load_system_config(yaml.safe_dump(doc))
    sim = Simulator(g, [], seed=0)
    batcher = Batcher(g)
    batches = []
    while len(batches) < 12:
        st, samples = sim.step()
        b = batcher.push(st.time_s, {s.sensor_id: s.value for s in samples})
        if b:
            batches.append(b)
    assert fit_ua(batches, g) == pytest.approx(480.0, rel=1e-6)


@pytest.mark.parametrize("seed", [1, 2])
def test_noisy_calibration_within_one_percent(graph, seed):
    sim = Simulator(graph, [], seed=seed)
    batcher = Batcher(graph)
    batches = []
    while len(batches) < 12:
        st, samples = sim.step()
        b = batcher.push(st.time_s, {s.sensor_id: s.value for s in samples})
        if b:
            batches.append(b)
    cal = calibrate(batches, graph)
    assert cal.ua_w_c == pytest.approx(UA, rel=0.01)
    # all nominal means sit within a few standard errors of zero
    for rid in cal.mu0:
        assert abs(cal.mu0[rid]) < 4.0 * cal.sigma0[rid] / math.sqrt(cal.n_batches)


def test_batcher_rejects_out_of_order_samples(graph):
    from loopfdi.errors import OutOfOrderSample

    batcher = Batcher(graph)
    row = {sid: 0.0 for sid in graph.physical_sensor_ids()}
    batcher.push(10.0, row)
    with pytest.raises(OutOfOrderSample):
        batcher.push(9.0, row)


def test_calibration_needs_ten_batches(graph):
    batches = [make_batch(STEADY, index=i + 1) for i in range(9)]
    with pytest.raises(InsufficientTraining):
        calibrate(batches, graph)


def _simple_calibration(residual_ids):
    return CalibrationRecord(
        {r: 0.0 for r in residual_ids}, {r: 1.0 for r in residual_ids}, UA, (0.0, 1.0), 10
    )


def test_detector_never_activates_on_zero_stream():
    cfg = DetectorConfig(z_threshold=3.0, consecutive=2)
    det = Detector(_simple_calibration(["r1"]), cfg)
    for i in range(50):
        det.update(float(i), [("r1", 0.0)])
    assert det.states["r1"].active is False
    assert det.states["r1"].activation_time is None


def test_detector_ignores_single_spike():
    cfg = DetectorConfig(z_threshold=3.0, consecutive=2)
    det = Detector(_simple_calibration(["r1"]), cfg)
    stream = [0.0, 5.0, 0.0, 0.0, 5.0, 0.0]
    for i, v in enumerate(stream):
        det.update(float(i), [("r1", v)])
    assert det.states["r1"].active is False


def test_detector_latches_on_consecutive_run():
    cfg = DetectorConfig(z_threshold=3.0, consecutive=2)
    det = Detector(_simple_calibration(["r1"]), cfg)
    stream = [0.0, 4.0, 4.0, 0.0, 0.0]
    for i, v in enumerate(stream):
        det.update(float(i), [("r1", v)])
    st = det.states["r1"]
    assert st.active is True
    assert st.activation_time == 2.0   # end of the second exceeding batch
    # latched even after the stream quiets down
    det.update(5.0, [("r1", 0.0)])
    assert det.states["r1"].active is True


def test_offline_scan_agrees_with_detector():
    rng = np.random.default_rng(0)
    cfg = DetectorConfig(z_threshold=3.0, consecutive=2)
    for _ in range(50):
        z = rng.normal(0, 2.0, size=40)
        det = Detector(_simple_calibration(["r1"]), cfg)
        online = None
        for i, v in enumerate(z):
            det.update(float(i), [("r1", float(v))])
            if online is None and det.states["r1"].active:
                online = i
        offline = scan_activation(z, cfg)
        assert (online if online is not None else -1) == offline


def test_activation_time_monotonic_in_bias(graph):
    times = []
    for bias in (5.0, 10.0, 20.0):
        snaps = run_pipeline(graph, [FaultScenario("F6", 500.0, bias)], 720.0, seed=4)
        acts = [
            r["activation_time"]
            for r in snaps[-1].to_dict()["residuals"]
            if r["id"] == "r1"
        ]
        times.append(acts[0])
    assert times[0] >= times[1] >= times[2]
    assert all(t is not None for t in times)
