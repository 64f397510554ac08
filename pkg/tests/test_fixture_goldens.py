"""Agreement with independently generated golden fixtures.

The goldens under fixtures/golden/ come from a separate generator package
that shares only file formats with this one. Skipped wholesale when the
fixture directory is absent; the rest of the suite covers the same math
through its built-in oracles.
"""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from birdsed import calib
from birdsed.audio_io import decode
from birdsed.geo import GeoPoint, haversine_km
from birdsed.metrics import evaluate
from birdsed.postproc import PredictionRow
from birdsed.spectro import MelConfig, compute_logmel, read_mels

GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"
MEL_FIXTURES = ("mel_silence", "mel_tone440", "mel_chirp", "mel_noise")

pytestmark = pytest.mark.skipif(not GOLDEN_DIR.is_dir(), reason="golden fixtures not present")


def _read_rows(name):
    with open(GOLDEN_DIR / name, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        yield from reader


@pytest.mark.parametrize("name", MEL_FIXTURES)
def test_mel_golden_agreement(name):
    clip = decode(GOLDEN_DIR / f"{name}.wav")
    got = compute_logmel(clip, MelConfig()).data
    golden = read_mels(GOLDEN_DIR / f"{name}.mels").data
    assert got.shape == golden.shape == (128, 401)
    assert np.abs(got - golden).max() <= 1e-4


def test_mel_silence_all_floor():
    golden = read_mels(GOLDEN_DIR / "mel_silence.mels").data
    assert (golden == -80.0).all()


def test_mel_argmax_agreement():
    specs = {
        name: compute_logmel(decode(GOLDEN_DIR / f"{name}.wav"), MelConfig()).data
        for name in MEL_FIXTURES
    }
    count = 0
    for name, frame, argmax_bin in _read_rows("mel_argmax.csv"):
        assert int(np.argmax(specs[name][:, int(frame)])) == int(argmax_bin)
        count += 1
    assert count == 4 * 401


def test_geo_golden_agreement():
    rows = list(_read_rows("geo_pairs.csv"))
    assert len(rows) == 50
    for lat_a, lon_a, lat_b, lon_b, golden_km in rows:
        a = GeoPoint(float(lat_a), float(lon_a))
        b = GeoPoint(float(lat_b), float(lon_b))
        got = haversine_km(a, b)
        want = float(golden_km)
        if want == 0.0:
            assert got == 0.0
        else:
            assert abs(got - want) / want <= 1e-6


def test_metric_golden_agreement():
    by_case: dict[str, tuple[dict, dict]] = {}
    for case_id, row_id, pred, truth in _read_rows("metric_cases.csv"):
        preds, truths = by_case.setdefault(case_id, ({}, {}))
        preds[row_id] = PredictionRow(row_id, frozenset(pred.split()))
        truths[row_id] = PredictionRow(row_id, frozenset(truth.split()))
    golden = {row[0]: [float(v) for v in row[1:]] for row in _read_rows("metric_values.csv")}
    assert len(golden) == 20 and set(golden) == set(by_case)
    for case_id, (preds, truths) in by_case.items():
        report = evaluate(preds.values(), truths.values())
        got = (report.f1_overall, report.f1_call, report.f1_nocall, report.hnvs, report.lnvs)
        for g, w in zip(got, golden[case_id]):
            assert abs(g - w) <= 1e-12


def test_logistic_fit_agreement():
    samples = calib.read_samples_csv(GOLDEN_DIR / "calib_samples.csv")
    model = calib.train_calibrator(
        samples, kind="logistic", l2_lambda=0.1, max_iters=20000, tol=1e-12
    )
    confidences = calib.calibrate(model, samples)
    count = 0
    for clip_id, end_second, species, golden_p in _read_rows("calib_preds.csv"):
        got = confidences[(clip_id, int(end_second), species)]
        assert abs(got - float(golden_p)) <= 1e-6
        count += 1
    assert count == len(samples) == 480


def test_manifest_matches_files():
    current = json.loads(
        (GOLDEN_DIR / "manifest.jsonl").read_text(encoding="utf-8").splitlines()[0]
    )
    assert current["record"] == "generator"
    n_files = 0
    for line in (GOLDEN_DIR / "manifest.jsonl").read_text(encoding="utf-8").splitlines()[1:]:
        record = json.loads(line)
        path = GOLDEN_DIR / record["file"]
        assert path.exists(), record["file"]
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        assert digest == record["sha256"], f"{record['file']} drifted from its manifest hash"
        n_files += 1
    assert n_files == 14
