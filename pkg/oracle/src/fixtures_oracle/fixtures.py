"""Build the committed golden fixture set and its integrity manifest."""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import scipy
import torch

from . import __version__
from . import georef, logisticref, melref, metricsref, wavio

MANIFEST_NAME = "manifest.jsonl"
L2_LAMBDA = 0.1
SPECIES = ("spa", "spb", "spc", "spd", "spe")


def _wave_specs() -> dict[str, tuple[np.ndarray, str]]:
    """Fixture name -> (float64 wave, sample format). All 1 s at 32 kHz."""
    t = np.arange(melref.SAMPLE_RATE_HZ) / melref.SAMPLE_RATE_HZ
    chirp_phase = 200.0 * t + 0.5 * (8000.0 - 200.0) * t**2
    return {
        "mel_silence": (np.zeros(t.size), "int16"),
        "mel_tone440": (0.5 * np.sin(2.0 * np.pi * 440.0 * t), "float32"),
        "mel_chirp": (0.4 * np.sin(2.0 * np.pi * chirp_phase), "float32"),
        "mel_noise": (np.random.default_rng(20210521).uniform(-0.25, 0.25, t.size), "float32"),
    }


def gen_mel_fixtures(out_dir: Path) -> list[Path]:
    """WAV inputs, golden MELS spectrograms, and a per-frame argmax CSV.

    The spectrogram is computed from the samples as a decoder will see them,
    i.e. after quantization to the WAV sample format.
    """
    written = []
    argmax_rows = []
    for name, (wave, fmt) in _wave_specs().items():
        wav_path = out_dir / f"{name}.wav"
        if fmt == "int16":
            wavio.write_wav_int16(wav_path, wave, melref.SAMPLE_RATE_HZ)
            decoded = np.clip(np.rint(wave * 32768.0), -32768, 32767) / 32768.0
        else:
            wavio.write_wav_float32(wav_path, wave, melref.SAMPLE_RATE_HZ)
            decoded = wave.astype(np.float32).astype(np.float64)
        db = melref.logmel(decoded)
        mels_path = out_dir / f"{name}.mels"
        melref.write_mels(mels_path, db)
        written += [wav_path, mels_path]
        golden = melref.read_mels(mels_path)  # argmax of the stored f32 values
        argmax_rows += [
            (name, frame, int(np.argmax(golden[:, frame]))) for frame in range(golden.shape[1])
        ]

    argmax_path = out_dir / "mel_argmax.csv"
    with open(argmax_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fixture", "frame", "argmax_bin"])
        writer.writerows(argmax_rows)
    return written + [argmax_path]


def gen_geo_fixtures(out_dir: Path) -> list[Path]:
    """50 point pairs with reference distances: identical, antipodal, 48 random."""
    pairs = [(35.0, -100.0, 35.0, -100.0), (35.0, -100.0, -35.0, 80.0)]
    rng = np.random.default_rng(7155)
    while len(pairs) < 50:
        lat_a, lat_b = rng.uniform(-89.0, 89.0, 2)
        lon_a, lon_b = rng.uniform(-180.0, 180.0, 2)
        pairs.append((float(lat_a), float(lon_a), float(lat_b), float(lon_b)))

    path = out_dir / "geo_pairs.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lat_a", "lon_a", "lat_b", "lon_b", "distance_km"])
        for lat_a, lon_a, lat_b, lon_b in pairs:
            d = georef.great_circle_km(lat_a, lon_a, lat_b, lon_b)
            writer.writerow([f"{v:.17g}" for v in (lat_a, lon_a, lat_b, lon_b, d)])
    return [path]


def _metric_cases() -> list[list[tuple[set[str], set[str]]]]:
    nc = metricsref.NOCALL
    cases = [
        # perfect predictions across both row kinds
        [
            ({"spa"}, {"spa"}),
            ({"spa", "spb"}, {"spa", "spb"}),
            ({nc}, {nc}),
            ({"spc"}, {"spc"}),
            ({nc}, {nc}),
        ],
        # every truth row is nocall
        [({nc}, {nc}), ({"spa"}, {nc}), ({nc}, {nc}), ({"spa", nc}, {nc})],
        # no nocall rows at all, so that split scores 0
        [({"spa"}, {"spa", "spb"}), ({"spb", "spc"}, {"spb"}), ({"spd"}, {"spe"})],
        # fully disjoint
        [({"spa"}, {"spb"}), ({nc}, {"spa"}), ({"spc"}, {nc})],
    ]
    rng = np.random.default_rng(404)
    for _ in range(16):
        rows = []
        for _ in range(int(rng.integers(4, 11))):
            if rng.uniform() < 0.6:
                truth = set(rng.choice(SPECIES, size=int(rng.integers(1, 4)), replace=False))
            else:
                truth = {nc}
            pred = {s for s in truth - {nc} if rng.uniform() < 0.75}
            pred |= {s for s in SPECIES if s not in truth and rng.uniform() < 0.12}
            if rng.uniform() < 0.15:
                pred.add(nc)
            rows.append((pred or {nc}, truth))
        cases.append(rows)
    return cases


def gen_metric_fixtures(out_dir: Path) -> list[Path]:
    """20 prediction/truth row sets plus their reference metric values."""
    cases_path = out_dir / "metric_cases.csv"
    values_path = out_dir / "metric_values.csv"
    with open(cases_path, "w", newline="", encoding="utf-8") as cf, open(
        values_path, "w", newline="", encoding="utf-8"
    ) as vf:
        cases = csv.writer(cf, lineterminator="\n")
        values = csv.writer(vf, lineterminator="\n")
        cases.writerow(["case_id", "row_id", "pred", "truth"])
        values.writerow(["case_id", "f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"])
        for c, rows in enumerate(_metric_cases()):
            for i, (pred, truth) in enumerate(rows):
                row_id = f"m{c:02d}_COR_{5 * (i + 1)}"
                cases.writerow([c, row_id, " ".join(sorted(pred)), " ".join(sorted(truth))])
            m = metricsref.case_metrics(rows)
            values.writerow(
                [c] + [f"{m[k]:.17g}" for k in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs")]
            )
    return [cases_path, values_path]


def gen_logistic_fixtures(out_dir: Path) -> list[Path]:
    """Labeled calibration samples plus reference fitted probabilities.

    The reference fit runs on the values as parsed back from the samples CSV,
    so serialization precision is shared with any consumer of the file.
    """
    rng = np.random.default_rng(8181)
    samples_path = out_dir / "calib_samples.csv"
    with open(samples_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["clip_id", "end_second", "species", "rm3", "rm9", "clip_max", "min_hav_km", "label"]
        )
        for c in range(8):
            for species in SPECIES:
                dist = float(rng.uniform(0.5, 250.0))
                cmax = float(rng.uniform(0.05, 1.0))
                for k in range(5, 61, 5):
                    rm3 = cmax * float(rng.uniform(0.1, 1.0))
                    rm9 = rm3 * float(rng.uniform(0.5, 1.0))
                    z = 3.0 * rm3 + 1.5 * rm9 + 1.0 * cmax - 0.5 * math.log1p(dist)
                    label = int(rng.uniform() < 1.0 / (1.0 + math.exp(-z)))
                    writer.writerow(
                        [
                            f"clip{c:02d}",
                            k,
                            species,
                            f"{rm3:.8g}",
                            f"{rm9:.8g}",
                            f"{cmax:.8g}",
                            f"{dist:.8g}",
                            label,
                        ]
                    )

    keys, features, labels = [], [], []
    with open(samples_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            keys.append((row[0], row[1], row[2]))
            rm3, rm9, cmax, dist = (float(v) for v in row[3:7])
            features.append([rm3, rm9, cmax, math.log1p(dist)])
            labels.append(int(row[7]))
    preds = logisticref.fit_predict(np.array(features), np.array(labels), L2_LAMBDA)

    preds_path = out_dir / "calib_preds.csv"
    with open(preds_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "end_second", "species", "confidence"])
        for (clip_id, k, species), p in zip(keys, preds):
            writer.writerow([clip_id, k, species, f"{p:.17g}"])
    return [samples_path, preds_path]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _env_record() -> dict[str, str]:
    return {
        "record": "generator",
        "name": "fixtures-oracle",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "torch": torch.__version__,
    }


def generate_all(out_dir: str | Path) -> list[Path]:
    """Write every fixture family plus the manifest; deterministic byte-for-byte."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = (
        gen_mel_fixtures(out)
        + gen_geo_fixtures(out)
        + gen_metric_fixtures(out)
        + gen_logistic_fixtures(out)
    )
    manifest = out / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_env_record(), sort_keys=True) + "\n")
        for path in sorted(files, key=lambda p: p.name):
            record = {
                "record": "file",
                "file": path.name,
                "sha256": _sha256(path),
                "bytes": path.stat().st_size,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return files + [manifest]


def verify(fixture_dir: str | Path) -> list[str]:
    """Check fixtures against the manifest; return a list of problems.

    Reports generator or library version mismatches, missing files, and
    content drift (hash or size changes).
    """
    root = Path(fixture_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        return [f"missing {MANIFEST_NAME}"]
    problems = []
    current = _env_record()
    for line in manifest.read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        if record["record"] == "generator":
            for key in ("name", "version", "numpy", "scipy", "torch"):
                if record.get(key) != current[key]:
                    problems.append(
                        f"generator version mismatch: {key} recorded "
                        f"{record.get(key)!r}, installed {current[key]!r}"
                    )
        else:
            path = root / record["file"]
            if not path.exists():
                problems.append(f"missing fixture {record['file']}")
            elif _sha256(path) != record["sha256"]:
                problems.append(f"content drift in {record['file']}")
    return problems
