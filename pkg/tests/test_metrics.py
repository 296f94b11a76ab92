import math

import numpy as np
import pytest

from flagline.metrics import (
    FactorOutOfRange,
    ReviewLogEntry,
    TooFewSamples,
    UnorderedLog,
    ZeroDuration,
    bootstrap_mean_ci,
    compute_dwell,
    format_savings_table,
    fp_burden,
    rtr,
    savings_model,
    session_report,
    simulate_dwell_batch,
    simulate_session_log,
)


def entry(event, t, tid="tl_00001", phase="review"):
    return ReviewLogEntry("s1", "r1", event, t, position=0.0, timeline_id=tid, phase=phase)


# --- dwell ----------------------------------------------------------------------

def test_dwell_no_play_events():
    assert compute_dwell([entry("pause", 5.0), entry("seek", 9.0)]) == 0.0


def test_dwell_play_pause_counts_fully():
    assert compute_dwell([entry("play", 0.0), entry("pause", 90.0)]) == 90.0


def test_dwell_play_seek_play_pause():
    log = [entry("play", 0.0), entry("seek", 30.0), entry("play", 30.0), entry("pause", 70.0)]
    assert compute_dwell(log) == 70.0


def test_dwell_abandoned_interval_capped_at_idle_gap():
    log = [entry("play", 0.0, "tl_00001"), entry("play", 50.0, "tl_00002"), entry("action", 60.0, "tl_00002")]
    assert compute_dwell(log) == 30.0 + 10.0


def test_dwell_off_flag_play_contributes_nothing():
    log = [entry("play", 0.0, tid=None), entry("pause", 40.0, tid=None)]
    assert compute_dwell(log) == 0.0


def test_dwell_qa_rows_excluded():
    log = [
        entry("play", 0.0),
        entry("pause", 10.0),
        entry("play", 20.0, phase="qa"),
        entry("pause", 50.0, phase="qa"),
    ]
    assert compute_dwell(log) == 10.0


def test_dwell_zero_net_injection_invariant():
    base = [entry("play", 0.0), entry("pause", 20.0), entry("play", 25.0), entry("action", 60.0)]
    injected = [
        entry("play", 0.0),
        entry("seek", 7.0),
        entry("play", 7.0),
        entry("pause", 20.0),
        entry("play", 25.0),
        entry("idle", 30.0),
        entry("play", 30.0),
        entry("action", 60.0),
    ]
    assert compute_dwell(base) == compute_dwell(injected)


def test_dwell_unordered_rejected():
    with pytest.raises(UnorderedLog):
        compute_dwell([entry("play", 10.0), entry("pause", 5.0)])


def test_dwell_trailing_open_interval_counts_nothing():
    assert compute_dwell([entry("play", 0.0)]) == 0.0


# --- rtr -------------------------------------------------------------------------

def test_rtr_identities():
    assert rtr(3600, 3600) == 0.0
    assert rtr(0, 3600) == 1.0
    for x in (1.0, 60.0, 7200.0):
        assert rtr(x, x) == 0.0
        assert rtr(0.0, x) == 1.0


def test_rtr_44_of_60_minutes():
    value = rtr(44 * 60, 60 * 60)
    assert abs(value - (1 - 44 / 60)) < 1e-9
    assert round(value, 4) == 0.2667


def test_rtr_can_be_negative():
    assert rtr(70 * 60, 60 * 60) == pytest.approx(-1 / 6)


def test_rtr_zero_duration():
    with pytest.raises(ZeroDuration):
        rtr(10, 0)


# --- bootstrap ---------------------------------------------------------------------

def test_bootstrap_constant_samples():
    mean, lo, hi = bootstrap_mean_ci([0.3] * 10, seed=1, resamples=200)
    assert mean == lo == hi == pytest.approx(0.3)


def test_bootstrap_deterministic():
    data = [0.21, 0.33, 0.28, 0.35, 0.30, 0.27]
    triples = {bootstrap_mean_ci(data, seed=42, resamples=500) for _ in range(3)}
    assert len(triples) == 1


def test_bootstrap_matches_independent_oracle():
    data = np.array([0.25, 0.31, 0.29, 0.33, 0.27, 0.35, 0.22, 0.30, 0.28, 0.32])
    seed, resamples, level = 7, 400, 0.95
    mean, lo, hi = bootstrap_mean_ci(data, level=level, resamples=resamples, seed=seed)

    # oracle: same resampling recipe, hand-rolled percentile interpolation
    rng = np.random.default_rng(seed)
    means = []
    n = len(data)
    for _ in range(resamples):
        idx = rng.integers(0, n, size=n)
        means.append(sum(data[i] for i in idx) / n)
    means.sort()

    def pct(q):
        pos = q / 100 * (len(means) - 1)
        lo_i = math.floor(pos)
        hi_i = math.ceil(pos)
        frac = pos - lo_i
        return means[lo_i] * (1 - frac) + means[hi_i] * frac

    alpha = (1 - level) / 2
    assert mean == pytest.approx(float(np.mean(data)), abs=1e-12)
    assert lo == pytest.approx(pct(100 * alpha), abs=1e-12)
    assert hi == pytest.approx(pct(100 * (1 - alpha)), abs=1e-12)


def test_bootstrap_ci_contains_mean_on_symmetric_data():
    data = [0.30 + d for d in (-0.06, -0.04, -0.02, 0.0, 0.02, 0.04, 0.06)]
    mean, lo, hi = bootstrap_mean_ci(data, seed=3, resamples=2000)
    assert lo <= mean <= hi


def test_bootstrap_too_few():
    with pytest.raises(TooFewSamples):
        bootstrap_mean_ci([0.3])


# --- fp burden -----------------------------------------------------------------------

def fp_item(t0, t1, fp=True):
    return {
        "t_start": t0,
        "t_end": t1,
        "disposition": "overridden" if fp else "accepted",
        "rationale_code": "FP" if fp else None,
    }


def test_fp_burden_no_fps():
    assert fp_burden([fp_item(0, 10, fp=False)], 3600) == (0.0, 0.0)


def test_fp_burden_paper_operating_point():
    # 0.5 FP minutes in one hour at 11% occurrence: 11 FP of 100 items
    items = [fp_item(i * 30, i * 30 + 30 / 11, fp=True) for i in range(11)]
    items += [fp_item(1000 + i, 1000 + i, fp=False) for i in range(89)]
    minutes, rate = fp_burden(items, 3600)
    assert minutes == pytest.approx(0.5, abs=1e-6)
    assert rate == pytest.approx(0.11)


def test_fp_burden_rate_and_minutes():
    items = [fp_item(0, 15), fp_item(100, 115)]
    minutes, rate = fp_burden(items, 1800)
    assert minutes == pytest.approx(1.0)
    assert rate == 1.0


def test_fp_burden_zero_duration():
    with pytest.raises(ZeroDuration):
        fp_burden([], 0)


# --- savings model -------------------------------------------------------------------

def test_savings_model_reference_factors():
    result = savings_model([0.05, 0.10, 0.08, 0.12])
    assert list(result["per_feature_minutes"].values()) == [3.0, 6.0, pytest.approx(4.8), pytest.approx(7.2)]
    assert result["combined_fraction"] == pytest.approx(0.307792, abs=1e-6)
    assert result["combined_minutes_per_hour"] == pytest.approx(18.46752, abs=1e-4)
    # compounding stays below the naive sum
    assert result["combined_fraction"] <= result["naive_sum_fraction"]


def test_savings_model_single_factor_identity():
    result = savings_model([0.08])
    assert result["combined_fraction"] == pytest.approx(0.08)
    assert result["combined_minutes_per_hour"] == pytest.approx(4.8)


def test_savings_model_rejects_out_of_range():
    with pytest.raises(FactorOutOfRange):
        savings_model([0.5, 1.0])
    with pytest.raises(FactorOutOfRange):
        savings_model([-0.1])


def test_savings_model_conservative_property():
    rng = np.random.default_rng(4)
    for _ in range(100):
        factors = list(rng.uniform(0, 0.5, size=rng.integers(1, 6)))
        result = savings_model(factors)
        assert result["combined_fraction"] <= sum(factors) + 1e-12


def test_format_savings_table():
    table = format_savings_table(savings_model({"a": 0.05, "b": 0.10, "c": 0.08, "d": 0.12}))
    assert "3.0" in table and "6.0" in table and "4.8" in table and "7.2" in table
    assert "30.8%" in table
    assert "18.5" in table


# --- simulation + session report --------------------------------------------------------

def test_simulated_session_dwell_and_rtr():
    log = simulate_session_log("s1", dwell_s=44 * 60)
    t_hitl = compute_dwell(log)
    assert t_hitl == pytest.approx(44 * 60, abs=1e-6)
    assert abs(rtr(t_hitl, 3600) - (1 - 44 / 60)) < 1e-9


def test_simulated_batch_mean_rtr():
    dwells = simulate_dwell_batch(20, mean_dwell_s=2520.0, seed=11)
    rtrs = [rtr(d, 3600.0) for d in dwells]
    assert np.mean(rtrs) == pytest.approx(0.30, abs=1e-12)


def test_session_report_assembly():
    log = simulate_session_log("s1", dwell_s=1800)
    report = session_report("s1", log, 3600.0, reviewed_items=[fp_item(0, 30)], rvr=0.5)
    assert report.rtr == pytest.approx(0.5)
    assert report.fp_minutes_per_hour == pytest.approx(0.5)
    assert report.to_json()["review_volume_reduction"] == 0.5
