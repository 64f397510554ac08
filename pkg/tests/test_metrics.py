"""Row F1, split scores, weighted composites, and the threshold sweep."""

import numpy as np
import pytest

from birdsed.metrics import (
    EmptyLabelSetError,
    MetricReport,
    RowMismatchError,
    evaluate,
    format_report,
    read_report_csv,
    row_f1,
    sweep_thresholds,
    write_report_csv,
)
from birdsed.postproc import PostprocConfig, PredictionRow, assemble_row


def _rows(mapping):
    return [PredictionRow(rid, frozenset(labels)) for rid, labels in mapping.items()]


def test_row_f1_hand_values():
    assert row_f1({"a"}, {"a"}) == 1.0
    assert row_f1({"a", "b"}, {"a"}) == pytest.approx(2 / 3)
    assert row_f1({"b"}, {"a"}) == 0.0
    assert row_f1({"a", "b"}, {"b", "c", "a"}) == pytest.approx(4 / 5)


def test_row_f1_symmetric():
    rng = np.random.default_rng(0)
    pool = [f"s{i}" for i in range(8)]
    for _ in range(100):
        p = set(rng.choice(pool, size=rng.integers(1, 5), replace=False))
        t = set(rng.choice(pool, size=rng.integers(1, 5), replace=False))
        assert row_f1(p, t) == row_f1(t, p)
        assert 0.0 <= row_f1(p, t) <= 1.0


def test_row_f1_rejects_empty():
    with pytest.raises(EmptyLabelSetError):
        row_f1(set(), {"a"})
    with pytest.raises(EmptyLabelSetError):
        row_f1({"a"}, set())


def test_report_weight_identities():
    r = MetricReport.from_f1s(0.5, 0.0, 1.0)
    assert r.hnvs == pytest.approx(0.63)
    assert r.lnvs == pytest.approx(0.54)
    r2 = MetricReport.from_f1s(0.5, 1.0, 0.0)
    assert r2.hnvs == pytest.approx(0.37)
    assert r2.lnvs == pytest.approx(0.46)
    rng = np.random.default_rng(1)
    for _ in range(20):
        call, nocall = rng.uniform(0, 1, 2)
        r = MetricReport.from_f1s(0.5, call, nocall)
        assert r.hnvs == 0.63 * nocall + 0.37 * call
        assert r.lnvs == 0.54 * nocall + 0.46 * call


def test_report_range_validation():
    with pytest.raises(ValueError):
        MetricReport(1.2, 0.5, 0.5, 0.5, 0.5)


def test_evaluate_perfect():
    truth = _rows({"c_COR_5": {"a"}, "c_COR_10": {"nocall"}, "c_COR_15": {"a", "b"}})
    report = evaluate(truth, truth)
    assert report == MetricReport(1.0, 1.0, 1.0, 1.0, 1.0)


def test_evaluate_split_membership():
    truth = _rows({
        "c_COR_5": {"a"},              # call row
        "c_COR_10": {"nocall"},        # nocall row
        "c_COR_15": {"a", "nocall"},   # call row (has a bird)
    })
    pred = _rows({
        "c_COR_5": {"a"},          # 1.0
        "c_COR_10": {"a"},         # 0.0
        "c_COR_15": {"nocall"},    # 2/3
    })
    report = evaluate(pred, truth)
    assert report.f1_call == pytest.approx((1.0 + 2 / 3) / 2)
    assert report.f1_nocall == 0.0
    assert report.f1_overall == pytest.approx((1.0 + 0.0 + 2 / 3) / 3)
    assert report.hnvs == pytest.approx(0.37 * report.f1_call)


def test_evaluate_row_order_invariant():
    truth = _rows({"a_COR_5": {"x"}, "b_COR_5": {"nocall"}, "c_COR_5": {"y"}})
    pred = _rows({"c_COR_5": {"y"}, "a_COR_5": {"z"}, "b_COR_5": {"nocall"}})
    assert evaluate(pred, truth) == evaluate(list(reversed(pred)), list(reversed(truth)))


def test_evaluate_row_mismatch():
    truth = _rows({"a_COR_5": {"x"}})
    pred = _rows({"b_COR_5": {"x"}})
    with pytest.raises(RowMismatchError):
        evaluate(pred, truth)
    with pytest.raises(RowMismatchError):
        evaluate(pred + _rows({"a_COR_5": {"x"}}), truth)


def test_evaluate_empty_split_scores_zero():
    truth = _rows({"a_COR_5": {"x"}})
    pred = _rows({"a_COR_5": {"x"}})
    report = evaluate(pred, truth)
    assert report.f1_nocall == 0.0
    assert report.f1_call == 1.0
    assert report.hnvs == pytest.approx(0.37)


def test_evaluate_global_micro_pools_counts():
    truth = _rows({"a_COR_5": {"x", "y"}, "b_COR_5": {"x"}})
    pred = _rows({"a_COR_5": {"x"}, "b_COR_5": {"x", "y", "z"}})
    rowwise = evaluate(pred, truth)
    pooled = evaluate(pred, truth, global_micro=True)
    # rows: inter 1 of (1+2), inter 1 of (3+1) -> pooled 2*2/7
    assert pooled.f1_overall == pytest.approx(4 / 7)
    assert rowwise.f1_overall == pytest.approx((2 / 3 + 1 / 2) / 2)


def _sweep_inputs(n_frames=40, n_species=4, seed=2):
    rng = np.random.default_rng(seed)
    species = [f"sp{i}" for i in range(n_species)]
    confidences = {}
    truth = []
    for i in range(n_frames):
        clip = f"clip{i % 5}"
        k = 5 * (1 + i)
        conf = rng.uniform(0, 1, n_species)
        for s, c in zip(species, conf):
            confidences[(clip, k, s)] = float(c)
        labels = {s for s, c in zip(species, conf) if c > 0.6 and rng.uniform() < 0.9}
        if not labels or rng.uniform() < 0.2:
            labels = labels | {"nocall"} if rng.uniform() < 0.3 and labels else {"nocall"}
        truth.append(PredictionRow(f"{clip}_SSW_{k}", frozenset(labels)))
    return confidences, truth


def test_sweep_attains_perfect_on_separable_data():
    confidences = {}
    truth = []
    for i in range(10):
        k = 5 * (1 + i)
        present = i % 2 == 0
        confidences[("c", k, "bird")] = 1.0 if present else 0.0
        truth.append(PredictionRow(f"c_COR_{k}", frozenset({"bird"} if present else {"nocall"})))
    bird_thr, nocall_thr, report = sweep_thresholds(confidences, "COR", truth, grid_step=0.01)
    assert report.f1_overall == 1.0
    assert bird_thr <= 1.0


def test_sweep_dominates_default_pair():
    confidences, truth = _sweep_inputs()
    _, _, best = sweep_thresholds(confidences, "SSW", truth, grid_step=0.05)
    cfg = PostprocConfig(bird_threshold=0.5, nocall_threshold=0.5)
    frames = {}
    for (clip, k, s), c in confidences.items():
        frames.setdefault((clip, k), {})[s] = c
    rows = [assemble_row(c, "SSW", k, v, cfg) for (c, k), v in sorted(frames.items())]
    at_default = evaluate(rows, truth)
    assert best.f1_overall >= at_default.f1_overall


def test_sweep_matches_brute_force_grid():
    confidences, truth = _sweep_inputs(n_frames=25, seed=3)
    step = 0.2
    bird_thr, nocall_thr, best = sweep_thresholds(confidences, "SSW", truth, grid_step=step)
    frames = {}
    for (clip, k, s), c in confidences.items():
        frames.setdefault((clip, k), {})[s] = c
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
    brute_best = -1.0
    brute_pair = None
    for b in grid:
        for m in grid:
            cfg = PostprocConfig(bird_threshold=float(b), nocall_threshold=float(m))
            rows = [assemble_row(c, "SSW", k, v, cfg) for (c, k), v in sorted(frames.items())]
            score = evaluate(rows, truth).f1_overall
            if score > brute_best + 1e-12:
                brute_best = score
                brute_pair = (float(b), float(m))
    assert best.f1_overall == pytest.approx(brute_best, abs=1e-12)
    # the sweep's tie-break prefers higher thresholds than first-found
    assert bird_thr >= brute_pair[0] - 1e-9


def test_sweep_grid_size():
    confidences, truth = _sweep_inputs(n_frames=6, n_species=2, seed=4)
    # step 0.5 -> candidate grid {0, 0.5, 1.0}^2, nine pairs
    bird_thr, nocall_thr, _ = sweep_thresholds(confidences, "SSW", truth, grid_step=0.5)
    assert bird_thr in (0.0, 0.5, 1.0)
    assert nocall_thr in (0.0, 0.5, 1.0)


def test_sweep_tie_break_toward_higher_thresholds():
    # all frames empty of birds; every threshold pair with m=0 ties at its
    # best; the winner must sit at the top of the grid
    confidences = {("c", 5 * (1 + i), "bird"): 0.0 for i in range(6)}
    truth = [PredictionRow(f"c_COR_{5 * (1 + i)}", frozenset({"nocall"})) for i in range(6)]
    bird_thr, nocall_thr, report = sweep_thresholds(confidences, "COR", truth, grid_step=0.25)
    assert report.f1_overall == 1.0
    assert bird_thr == 1.0
    assert nocall_thr == 1.0


def test_sweep_row_mismatch():
    confidences, truth = _sweep_inputs(n_frames=5, seed=5)
    with pytest.raises(RowMismatchError):
        sweep_thresholds(confidences, "COR", truth)  # ids built with SSW


def test_sweep_rejects_empty():
    with pytest.raises(ValueError):
        sweep_thresholds({}, "COR", [])


def test_report_csv_round_trip(tmp_path):
    report = MetricReport.from_f1s(0.8125, 0.75, 0.9)
    path = tmp_path / "report.csv"
    write_report_csv(path, report)
    back = read_report_csv(path)
    assert back.f1_overall == pytest.approx(report.f1_overall)
    assert back.hnvs == pytest.approx(report.hnvs)
    assert path.read_text().splitlines()[0] == "metric,value"


def test_format_report_lists_all_metrics():
    text = format_report(MetricReport.from_f1s(0.5, 0.4, 0.6))
    for name in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"):
        assert name in text
