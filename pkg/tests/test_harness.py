import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.stats import norm

from grasplab.catalog import GelFinish, builtin_paper_catalog, find_object
from grasplab.config import ConfigError, RoiSpec, SimConfig, Strategy, load_config
from grasplab.harness import (
    TAP_TARGETS,
    CalibrationSearch,
    ExperimentReport,
    ObjectRow,
    TapRow,
    calibrate_adhesion,
    model_rates,
    rate_percent,
    run_experiment,
    sample_placement,
    tap_table,
    trial_seed,
    wilson_interval,
)
from grasplab.pipeline import edge_factor, run_trial

CONFIG = SimConfig()
ROI = CONFIG.rois[Strategy.TAP]


def test_placements_uniform_and_inside():
    for roi in CONFIG.rois.values():
        poses = [sample_placement(roi, trial_seed(0, "x", i, 1)) for i in range(10_000)]
        xs = np.array([p.x for p in poses])
        ys = np.array([p.y for p in poses])
        phis = np.array([p.phi for p in poses])
        assert abs(xs.mean()) <= 0.01 * roi.width and abs(ys.mean()) <= 0.01 * roi.height
        assert np.all(np.abs(xs) < roi.width / 2) and np.all(np.abs(ys) < roi.height / 2)
        assert np.all((phis >= 0) & (phis < 2 * math.pi))
        # uniform: a quarter of the samples in each quadrant, within sampling noise
        assert abs(np.mean(xs > 0) - 0.5) < 0.02 and abs(np.mean(ys > 0) - 0.5) < 0.02


def test_placement_reproducible():
    assert sample_placement(ROI, 5) == sample_placement(ROI, 5)
    assert trial_seed(1, "a", 2).entropy == trial_seed(1, "a", 2).entropy
    assert sample_placement(ROI, trial_seed(1, "a", 2)) != sample_placement(ROI, trial_seed(1, "a", 3))


def _wilson_by_inversion(k, n, z):
    """Endpoints of {p : |k/n - p| <= z sqrt(p(1-p)/n)} found by root bracketing."""
    phat = k / n
    f = lambda p: (phat - p) ** 2 - z * z * p * (1 - p) / n
    # f < 0 strictly between the endpoints and the observed proportion
    inner_lo, inner_hi = max(phat, 1e-15), min(phat, 1 - 1e-15)
    lo = 0.0 if k == 0 else brentq(f, 1e-15, inner_hi, xtol=1e-15)
    hi = 1.0 if k == n else brentq(f, inner_lo, 1 - 1e-15, xtol=1e-15)
    return lo, hi


def test_wilson_matches_score_test_inversion():
    z = norm.ppf(0.975)
    for n in range(1, 21):
        for k in range(n + 1):
            lo, hi = wilson_interval(k, n)
            elo, ehi = _wilson_by_inversion(k, n, z)
            assert lo == pytest.approx(elo, abs=1e-12) and hi == pytest.approx(ehi, abs=1e-12)
            # grid check: every p strictly inside passes the score test
            for p in np.linspace(lo, hi, 7)[1:-1]:
                assert (k / n - p) ** 2 <= z * z * p * (1 - p) / n + 1e-15


def test_wilson_rejects_bad_counts():
    with pytest.raises(ValueError):
        wilson_interval(1, 0)
    with pytest.raises(ValueError):
        wilson_interval(3, 2)


@given(st.integers(0, 1000), st.integers(1, 1000))
def test_rates_rounded_to_two_decimals(k, n):
    k = min(k, n)
    r = rate_percent(k, n)
    assert r == round(100 * k / n, 2) and 0 <= r <= 100


def test_report_rows_validate():
    with pytest.raises(ValueError):
        ObjectRow("x", Strategy.TAP, 3, 4)
    t = TapRow("M2 Nut", GelFinish.MATTE, 0, 1, 49)
    assert (t.trials, t.successes, t.rate_percent) == (50, 1, 2.0)


def test_zero_trials_rejected(catalog):
    with pytest.raises(ValueError):
        run_experiment(catalog, CONFIG, trials_per_object=0)


def test_basil_seed_rate(catalog):
    report = run_experiment([find_object(catalog, "Basil Seed")], CONFIG, 51, master_seed=0, tap_trials=0)
    row = report.row("basil seed")
    assert row.trials == 51 and row.rate_percent >= 95.0


def test_report_formats_and_header(catalog):
    objs = [find_object(catalog, n) for n in ("M2 Nut", "Dime")]
    report = run_experiment(objs, CONFIG, 3, master_seed=7, tap_trials=4)
    csv_text = report.render("csv")
    assert csv_text.startswith("# grasplab experiment report (calibrated")
    assert "object,strategy,trials,successes,rate_percent" in csv_text
    assert "M2 Nut,tap," in csv_text and "Dime,fingernail," in csv_text
    assert len(report.tap_rows) == 3 and all(t.trials == 4 for t in report.tap_rows)
    assert "calibrated" in report.render("txt")
    with pytest.raises(ValueError):
        report.render("xml")


def test_failures_are_counted_with_reasons(catalog):
    heavy = SimConfig(pipeline=CONFIG.pipeline.__class__(squeeze_force=1e-3))
    report = run_experiment([find_object(catalog, "Bearing")], heavy, 5, tap_trials=0)
    row = report.row("Bearing")
    assert row.successes == 0 and sum(row.failures.values()) == 5 and set(row.failures) == {"slip"}


def test_jobs_do_not_change_results(catalog):
    objs = [find_object(catalog, n) for n in ("M1.6 Nut", "Paperclip", "Bearing")]
    a = run_experiment(objs, CONFIG, 6, master_seed=3, jobs=1, tap_trials=5)
    b = run_experiment(objs, CONFIG, 6, master_seed=3, jobs=3, tap_trials=5)
    c = run_experiment(objs, CONFIG, 6, master_seed=3, jobs=1, tap_trials=5)
    assert a.to_csv() == b.to_csv() == c.to_csv()
    assert a.records == b.records
    d = run_experiment(objs, CONFIG, 6, master_seed=4, jobs=1, tap_trials=5)
    assert d.records != a.records


@pytest.mark.parametrize("name,strategy", [("Bearing", Strategy.FINGERTIP), ("Dime", Strategy.FINGERNAIL)])
def test_edge_placements_fail_more_often(catalog, name, strategy):
    obj = find_object(catalog, name)
    roi = CONFIG.rois[strategy]
    fails = {True: [0, 0], False: [0, 0]}
    for i in range(2000):
        pose = sample_placement(roi, trial_seed(1, name, i, 1))
        outer = edge_factor(pose, roi) > 0.9
        rec = run_trial(obj, pose, strategy, CONFIG, trial_seed(1, name, i), i)
        fails[outer][0] += not rec.success
        fails[outer][1] += 1
    outer_rate = fails[True][0] / fails[True][1]
    inner_rate = fails[False][0] / fails[False][1]
    assert outer_rate >= inner_rate
    # one-sided two-proportion z test
    pooled = (fails[True][0] + fails[False][0]) / 2000
    se = math.sqrt(pooled * (1 - pooled) * (1 / fails[True][1] + 1 / fails[False][1]))
    assert (outer_rate - inner_rate) / se > 1.645


def _own_targets(etas, model=None, trials=50):
    objs = {o.name: o for o in builtin_paper_catalog()}
    rates = model_rates(objs, TAP_TARGETS.keys(), model or CONFIG.tap_model, etas, CONFIG)
    return {k: (r[1] * trials, (r[0] - r[1]) * trials, (1 - r[0]) * trials) for k, r in rates.items()}


def test_calibration_is_self_consistent_at_known_parameters():
    etas = {f: CONFIG.gels[f].contact_efficiency_eta for f in GelFinish}
    res = calibrate_adhesion(_own_targets(etas))
    assert res.converged and res.rounds == 0 and res.residual == pytest.approx(0.0, abs=1e-28)
    assert res.etas == etas and res.tap_model == CONFIG.tap_model


def test_calibration_recovers_perturbed_rates():
    truth = {f: CONFIG.gels[f].contact_efficiency_eta * s for f, s in zip(GelFinish, (0.7, 1.2, 0.9))}
    targets = _own_targets(truth)
    res = calibrate_adhesion(targets)
    assert res.converged and res.residual < 1e-6
    for key, (lift, short, no) in targets.items():
        assert res.rates[key][0] == pytest.approx((lift + short) / 50, abs=2e-3)


def test_non_convergence_is_reported(caplog):
    truth = {f: CONFIG.gels[f].contact_efficiency_eta * 0.5 for f in GelFinish}
    with caplog.at_level(logging.WARNING, logger="grasplab.harness"):
        res = calibrate_adhesion(_own_targets(truth), CalibrationSearch(max_rounds=1, rtol=0.0))
    assert not res.converged and res.rounds == 1
    assert "no convergence" in res.message and "no convergence" in caplog.text
    assert math.isfinite(res.residual) and res.residual > 0


def test_malformed_targets_rejected():
    with pytest.raises(ValueError):
        calibrate_adhesion({("M2 Nut", GelFinish.GLOSS): (1, 2)})
    with pytest.raises(ValueError):
        calibrate_adhesion({("M2 Nut", GelFinish.GLOSS): (0, 0, 0)})


def test_calibrated_defaults_order_finishes_and_fail_matte_nut(catalog):
    objs = [find_object(catalog, n) for n in ("Basil Seed", "M1.6 Nut", "M2 Nut")]
    rows = {(t.object, t.gel_finish): t for t in tap_table(objs, CONFIG, 50, 0)}
    for o in objs:
        g, mg, m = (rows[(o.name, f)].rate_percent for f in GelFinish)
        assert g >= mg >= m
    assert rows[("M1.6 Nut", GelFinish.MATTE)].rate_percent <= 25.0


def test_ini_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[adhesion]\neta_matte = 0.01\nhamaker_A = 1e-18\n"
        "[friction]\nmu_gel_object = 1.5\n"
        "[roi]\ntap = 12x8\n"
        "[pipeline]\nregrasp_cap = 2\nmax_aperture = 35\ntap_gel = matte\n"
        "[render]\nwidth = 240\nheight = 240\n"
    )
    cfg = load_config(path)
    assert cfg.gels[GelFinish.MATTE].contact_efficiency_eta == 0.01
    assert cfg.tap_model.hamaker_A == 1e-18
    assert cfg.friction.mu_gel_object == 1.5
    assert cfg.rois[Strategy.TAP] == RoiSpec(Strategy.TAP, 12e-3, 8e-3)
    assert cfg.pipeline.regrasp_cap == 2 and cfg.pipeline.max_aperture == pytest.approx(35e-3)
    assert cfg.tap_gel.finish is GelFinish.MATTE and cfg.render.width == 240
    assert cfg.snapshot()["roi.tap"] == "12x8 mm"


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[roi]\ntap = ten\n", "[pipeline]\nregrasp_cap = -1\n"])
def test_bad_config_rejected(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_report_is_value_comparable(catalog):
    objs = [find_object(catalog, "Dime")]
    a = run_experiment(objs, CONFIG, 2, tap_trials=0)
    assert isinstance(a, ExperimentReport) and a == run_experiment(objs, CONFIG, 2, tap_trials=0)
