"""Command-line pipeline runner.

Wires the library modules into reproducible stages: preprocess WAVs into
mel segments with fold assignments, augment spectrograms, run sliding
window inference, train the second-stage calibrator, clean up and
threshold confidences into submission rows, sweep thresholds, score
submissions, and export spectrogram images.
"""

import argparse
import csv
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import calib
from .audio_io import CANONICAL_RATE_HZ, CorruptFileError, UnsupportedFormatError, decode, resample
from .augment import AugmentConfig, LabeledSpectrogram, augment_pipeline
from .configio import dataclass_from_flat, load_flat
from .geo import UnknownSpeciesError, load_occurrences, load_sites
from .metrics import RowMismatchError, evaluate, format_report, sweep_thresholds, write_report_csv
from .postproc import (
    PostprocConfig,
    apply_fn_reduction,
    apply_fp_reduction,
    parse_row_id,
    postprocess_confidences,
    read_submission,
    write_submission,
)
from .scoring import (
    ClipTooShortError,
    EnsembleWeights,
    FrameProbabilities,
    MisalignedStreamsError,
    RangeError,
    SchemaError,
    ScorerLoadError,
    ensemble_average,
    load_precomputed_scores,
    load_scorer,
    sliding_window_inference,
    write_probability_csv,
)
from .spectro import (
    EmptyClipError,
    MelConfig,
    SignalQualityThresholds,
    assign_stratified_folds,
    compute_logmel,
    read_mels,
    segment,
    weak_signal_filter,
    write_mels,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SCORER = 4

STAGE_NAMES = ("preprocess", "augment", "training")

LABELS_HEADER = ["clip_id", "labels"]
MANIFEST_HEADER = ["clip_id", "segment_offset", "fold", "kept"]


class ConfigFailure(Exception):
    """Bad flag, config value, or inconsistent inputs (exit 2)."""


class IOFailure(Exception):
    """Unreadable, missing, or malformed data files (exit 3)."""


class ScorerFailure(Exception):
    """Scorer model or probability-stream loading failed (exit 4)."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the input paths."""

    seed: int = 0
    jobs: int = 1
    out_dir: str = "out"
    n_folds: int = 5
    segment_window_s: float = 7.0
    segment_stride_s: float = 5.0
    mel: MelConfig = MelConfig()
    augment: AugmentConfig = AugmentConfig()
    postproc: PostprocConfig = PostprocConfig()

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")


@dataclass(frozen=True)
class _Scalars:
    seed: int = 0
    jobs: int = 1
    out_dir: str = "out"
    n_folds: int = 5
    segment_window_s: float = 7.0
    segment_stride_s: float = 5.0


def load_pipeline_config(path: str | Path | None = None) -> PipelineConfig:
    """Assemble the run config from a flat key=value file.

    Sub-config keys use dotted prefixes (mel.n_mels, augment.seed,
    postproc.bird_threshold); bare keys configure the pipeline itself.
    """
    if path is None:
        return PipelineConfig()
    try:
        flat = dict(load_flat(path))
    except OSError as exc:
        raise ConfigFailure(f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise ConfigFailure(str(exc)) from exc
    groups: dict[str, dict[str, str]] = {"mel": {}, "augment": {}, "postproc": {}}
    plain: dict[str, str] = {}
    for key, value in flat.items():
        head, dot, rest = key.partition(".")
        if dot and head in groups:
            groups[head][rest] = value
        else:
            plain[key] = value
    if "frequent_birds_per_site" in groups["postproc"]:
        raise ConfigFailure("frequent bird sets are supplied via --frequent-birds, not the config file")
    try:
        mel = dataclass_from_flat(MelConfig, groups["mel"])
        aug = dataclass_from_flat(AugmentConfig, groups["augment"])
        post = dataclass_from_flat(PostprocConfig, groups["postproc"])
        scalars = dataclass_from_flat(_Scalars, plain)
        return PipelineConfig(
            mel=mel, augment=aug, postproc=post, **dataclasses.asdict(scalars)
        )
    except (ValueError, KeyError) as exc:
        raise ConfigFailure(str(exc)) from exc


def _stage_sequence(seed: int, stage: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(STAGE_NAMES.index(stage),))


def _stage_seed(seed: int, stage: str) -> int:
    return int(_stage_sequence(seed, stage).generate_state(1)[0])


def _item_rngs(seed: int, stage: str, n: int) -> list[np.random.Generator]:
    """One independent generator per work item, stable under any parallelism."""
    return [np.random.default_rng(s) for s in _stage_sequence(seed, stage).spawn(n)]


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _read_labels_csv(path: str | Path) -> dict[str, frozenset[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != LABELS_HEADER:
                raise IOFailure(f"{path}: expected header clip_id,labels")
            return {row[0]: frozenset(row[1].split()) for row in reader if row}
    except OSError as exc:
        raise IOFailure(f"cannot read labels: {exc}") from exc


def _write_labels_csv(path: str | Path, labels: dict[str, frozenset[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABELS_HEADER)
        for clip_id in sorted(labels):
            writer.writerow([clip_id, " ".join(sorted(labels[clip_id]))])


def _read_frequent_birds_csv(path: str | Path) -> dict[str, frozenset[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["site_id", "species"]:
                raise IOFailure(f"{path}: expected header site_id,species")
            table: dict[str, set[str]] = {}
            for row in reader:
                if row:
                    table.setdefault(row[0], set()).add(row[1])
            return {site: frozenset(names) for site, names in table.items()}
    except OSError as exc:
        raise IOFailure(f"cannot read frequent-birds table: {exc}") from exc


def cmd_preprocess(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Decode, resample, segment, mel-transform, filter, and assign folds."""
    audio_dir = Path(args.audio_dir)
    if not audio_dir.is_dir():
        raise IOFailure(f"audio directory not found: {audio_dir}")
    labels = _read_labels_csv(args.labels) if args.labels else {}
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    thresholds = SignalQualityThresholds()
    wavs = sorted(audio_dir.glob("*.wav"))

    def process(wav: Path) -> list[tuple[str, float, bool, str]]:
        try:
            clip = resample(decode(wav), CANONICAL_RATE_HZ)
            rows = []
            for seg in segment(clip, cfg.segment_window_s, cfg.segment_stride_s):
                spec = compute_logmel(seg, cfg.mel)
                kept = weak_signal_filter(spec, thresholds)
                if kept:
                    name = f"{wav.stem}_{round(seg.start_offset_s * 1000):08d}.mels"
                    write_mels(out_dir / name, spec)
                rows.append((wav.stem, seg.start_offset_s, kept, wav.stem))
            return rows
        except (CorruptFileError, UnsupportedFormatError, EmptyClipError) as exc:
            raise IOFailure(f"{wav.name}: {exc}") from exc

    all_rows = [row for rows in _parallel_map(process, wavs, cfg.jobs) for row in rows]
    all_rows.sort(key=lambda r: (r[0], r[1]))

    kept_rows = [r for r in all_rows if r[2]]
    folds = {}
    if kept_rows:
        classes = [" ".join(sorted(labels.get(r[3], frozenset({"unknown"})))) for r in kept_rows]
        assigned = assign_stratified_folds(classes, k=cfg.n_folds, seed=_stage_seed(cfg.seed, "preprocess"))
        folds = {(r[0], r[1]): int(f) for r, f in zip(kept_rows, assigned)}

    with open(out_dir / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for clip_id, offset, kept, _ in all_rows:
            fold = folds.get((clip_id, offset), -1)
            writer.writerow([clip_id, f"{offset:.6g}", fold, "true" if kept else "false"])
    return EXIT_OK


def cmd_augment(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Apply the augmentation chain to every spectrogram in a directory."""
    mels_dir = Path(args.mels_dir)
    if not mels_dir.is_dir():
        raise IOFailure(f"spectrogram directory not found: {mels_dir}")
    labels = _read_labels_csv(args.labels)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(mels_dir.glob("*.mels"))
    if not files:
        _write_labels_csv(out_dir / "labels.csv", {})
        return EXIT_OK

    pool = []
    for path in files:
        try:
            spec = read_mels(path, cfg.mel)
        except ValueError as exc:
            raise IOFailure(str(exc)) from exc
        if spec.clip_id not in labels:
            raise ConfigFailure(f"no labels for {spec.clip_id} in {args.labels}")
        pool.append(LabeledSpectrogram(spec=spec, labels=labels[spec.clip_id]))

    repeats = args.repeats
    tasks = [(i, r) for i in range(len(pool)) for r in range(repeats)]
    rngs = _item_rngs(cfg.seed, "augment", len(tasks))

    def run(task_idx: int) -> tuple[str, LabeledSpectrogram]:
        i, r = tasks[task_idx]
        out = augment_pipeline(pool[i], pool, cfg.augment, rngs[task_idx])
        return f"{pool[i].spec.clip_id}_aug{r}", out

    results = _parallel_map(run, range(len(tasks)), cfg.jobs)
    out_labels: dict[str, frozenset[str]] = {}
    for name, aug in sorted(results, key=lambda p: p[0]):
        write_mels(out_dir / f"{name}.mels", aug.spec)
        out_labels[name] = aug.labels
    _write_labels_csv(out_dir / "labels.csv", out_labels)
    return EXIT_OK


def _load_weights(path: str | Path, n: int) -> EnsembleWeights:
    try:
        values = [float(v) for v in Path(path).read_text().split()]
    except OSError as exc:
        raise IOFailure(f"cannot read weights: {exc}") from exc
    except ValueError as exc:
        raise ConfigFailure(f"{path}: weights must be numbers") from exc
    if len(values) != n:
        raise ConfigFailure(f"{path}: {len(values)} weights for {n} streams")
    try:
        return EnsembleWeights(tuple(values))
    except ValueError as exc:
        raise ConfigFailure(str(exc)) from exc


def cmd_infer(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Sliding-window scoring of soundscapes, or averaging of precomputed streams."""
    if not args.out:
        raise ConfigFailure("--out is required for infer")
    if args.precomputed and args.wavs:
        raise ConfigFailure("give either WAV inputs or --precomputed streams, not both")

    if args.precomputed:
        streams = []
        vocab = None
        for path in args.precomputed:
            try:
                frames, file_vocab = load_precomputed_scores(path)
            except OSError as exc:
                raise IOFailure(f"cannot read {path}: {exc}") from exc
            except (SchemaError, RangeError) as exc:
                raise ScorerFailure(str(exc)) from exc
            if vocab is None:
                vocab = file_vocab
            elif file_vocab.labels != vocab.labels:
                raise ScorerFailure(f"{path}: class columns differ across streams")
            streams.append(frames)
        if args.weights_file:
            weights = _load_weights(args.weights_file, len(streams))
        else:
            weights = EnsembleWeights(tuple([1.0 / len(streams)] * len(streams)))
        try:
            combined = ensemble_average(streams, weights)
        except MisalignedStreamsError as exc:
            raise ScorerFailure(str(exc)) from exc
        write_probability_csv(args.out, combined, vocab)
        return EXIT_OK

    if not args.wavs:
        raise ConfigFailure("no inputs: give WAV files or --precomputed streams")
    if not args.scorer:
        raise ConfigFailure("--scorer is required to score WAV inputs")
    try:
        scorer = load_scorer(args.scorer)
    except (OSError, ScorerLoadError, ValueError) as exc:
        raise ScorerFailure(f"cannot load scorer: {exc}") from exc

    def score_one(path: str) -> list[FrameProbabilities]:
        try:
            clip = resample(decode(path), cfg.mel.sample_rate_hz)
            return sliding_window_inference(clip, scorer, config=cfg.mel)
        except (CorruptFileError, UnsupportedFormatError, EmptyClipError, ClipTooShortError) as exc:
            raise IOFailure(f"{path}: {exc}") from exc

    frames = [f for fs in _parallel_map(score_one, sorted(args.wavs), cfg.jobs) for f in fs]
    write_probability_csv(args.out, frames, scorer.vocab)
    return EXIT_OK


def _load_streams_and_geo(cfg: PipelineConfig, args: argparse.Namespace):
    try:
        frames, vocab = load_precomputed_scores(args.probs)
    except OSError as exc:
        raise IOFailure(f"cannot read {args.probs}: {exc}") from exc
    except (SchemaError, RangeError) as exc:
        raise IOFailure(str(exc)) from exc
    try:
        sites = load_sites(args.sites)
        occurrences = load_occurrences(args.occurrences)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    if args.site not in sites:
        raise ConfigFailure(f"unknown site {args.site!r}; table has {sorted(sites)}")
    return frames, vocab, sites[args.site], occurrences


def _postproc_config(cfg: PipelineConfig, args: argparse.Namespace) -> PostprocConfig:
    post = cfg.postproc
    frequent = post.frequent_birds_per_site
    if getattr(args, "frequent_birds", None):
        frequent = _read_frequent_birds_csv(args.frequent_birds)
    try:
        return PostprocConfig(
            max_distance_km=post.max_distance_km,
            min_raw_prob=post.min_raw_prob,
            species_blacklist=post.species_blacklist,
            frequent_bird_boost=post.frequent_bird_boost,
            frequent_birds_per_site=frequent,
            bird_threshold=args.bird_threshold if getattr(args, "bird_threshold", None) is not None else post.bird_threshold,
            nocall_threshold=args.nocall_threshold if getattr(args, "nocall_threshold", None) is not None else post.nocall_threshold,
        )
    except ValueError as exc:
        raise ConfigFailure(str(exc)) from exc


def _raw_table(frames: Sequence[FrameProbabilities], vocab) -> dict[tuple[str, int, str], float]:
    """Raw stream values at the 5-second label stride."""
    raw: dict[tuple[str, int, str], float] = {}
    for frame in frames:
        if frame.end_second_k % calib.LABEL_STRIDE_S != 0:
            continue
        for idx, species in enumerate(vocab.labels):
            raw[(frame.clip_id, frame.end_second_k, species)] = float(frame.probs[idx])
    return raw


def _calibrated_table(frames, vocab, site, occurrences, model_path):
    raw = _raw_table(frames, vocab)
    if not model_path:
        return dict(raw), raw
    try:
        model = calib.load_model(model_path)
    except OSError as exc:
        raise IOFailure(f"cannot read calibrator: {exc}") from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    try:
        samples = calib.build_samples(frames, vocab, site, occurrences)
    except UnknownSpeciesError as exc:
        raise ConfigFailure(f"occurrence table lacks species {exc}") from exc
    except calib.MissingFramesError as exc:
        raise IOFailure(str(exc)) from exc
    return calib.calibrate(model, samples), raw


def cmd_train_calibrator(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Fit the second-stage model on rolling-window features and save it."""
    if not args.out:
        raise ConfigFailure("--out is required for train-calibrator")
    frames, vocab, site, occurrences = _load_streams_and_geo(cfg, args)
    try:
        truth_rows = read_submission(args.truth)
    except OSError as exc:
        raise IOFailure(f"cannot read truth: {exc}") from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    truth = {}
    for row in truth_rows:
        clip_id, _, end_second = _parse_truth_row_id(row.row_id)
        truth[(clip_id, end_second)] = set(row.labels) - {"nocall"}
    try:
        samples = calib.build_samples(frames, vocab, site, occurrences, truth=truth)
    except UnknownSpeciesError as exc:
        raise ConfigFailure(f"occurrence table lacks species {exc}") from exc
    except (calib.MissingFramesError, KeyError) as exc:
        raise IOFailure(str(exc)) from exc
    try:
        if args.oof_out:
            oof, _ = calib.leave_one_clip_out(samples, kind=args.kind, l2_lambda=args.l2)
            _write_oof_csv(args.oof_out, oof)
        model = calib.train_calibrator(samples, kind=args.kind, l2_lambda=args.l2)
    except ValueError as exc:
        raise ConfigFailure(str(exc)) from exc
    calib.save_model(args.out, model)
    return EXIT_OK


def _parse_truth_row_id(row_id: str) -> tuple[str, str, int]:
    try:
        return parse_row_id(row_id)
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc


def _write_oof_csv(path: str | Path, oof: dict[tuple[str, int, str], float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "end_second", "species", "confidence"])
        for (clip_id, end_second, species), value in sorted(oof.items()):
            writer.writerow([clip_id, end_second, species, f"{value:.8g}"])


def cmd_postprocess(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Clean up confidences and write the thresholded submission CSV."""
    if not args.out:
        raise ConfigFailure("--out is required for postprocess")
    frames, vocab, site, occurrences = _load_streams_and_geo(cfg, args)
    post = _postproc_config(cfg, args)
    calibrated, raw = _calibrated_table(frames, vocab, site, occurrences, args.model)
    rows = postprocess_confidences(calibrated, raw, site, occurrences, post)
    write_submission(args.out, rows)
    return EXIT_OK


def cmd_sweep(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Grid-search the dual thresholds against ground truth."""
    frames, vocab, site, occurrences = _load_streams_and_geo(cfg, args)
    post = _postproc_config(cfg, args)
    calibrated, raw = _calibrated_table(frames, vocab, site, occurrences, args.model)
    cleaned = apply_fn_reduction(
        apply_fp_reduction(calibrated, raw, site, occurrences, post), site, post
    )
    try:
        truth = read_submission(args.truth)
    except OSError as exc:
        raise IOFailure(f"cannot read truth: {exc}") from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    try:
        bird_thr, nocall_thr, report = sweep_thresholds(
            cleaned,
            site.site_id,
            truth,
            grid_step=args.grid_step,
            base_cfg=post,
            global_micro=args.global_micro,
        )
    except (RowMismatchError, ValueError) as exc:
        raise ConfigFailure(str(exc)) from exc
    print(f"bird_threshold = {bird_thr}")
    print(f"nocall_threshold = {nocall_thr}")
    print(format_report(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"bird_threshold = {bird_thr}\n")
            fh.write(f"nocall_threshold = {nocall_thr}\n")
            for name in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"):
                fh.write(f"{name} = {getattr(report, name):.8g}\n")
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Score a submission CSV against ground truth."""
    try:
        pred = read_submission(args.pred)
        truth = read_submission(args.truth)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    try:
        report = evaluate(pred, truth, global_micro=args.global_micro)
    except RowMismatchError as exc:
        raise ConfigFailure(str(exc)) from exc
    print(format_report(report))
    if args.out:
        write_report_csv(args.out, report)
    return EXIT_OK


def cmd_export_spectrogram(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Render a MELS file as a grayscale PGM image (low bins at the bottom)."""
    if not args.out:
        raise ConfigFailure("--out is required for export-spectrogram")
    try:
        spec = read_mels(args.mels, cfg.mel)
    except OSError as exc:
        raise IOFailure(f"cannot read {args.mels}: {exc}") from exc
    except ValueError as exc:
        raise IOFailure(str(exc)) from exc
    floor = cfg.mel.log_floor_db
    scaled = np.round((spec.data - floor) / (0.0 - floor) * 255.0)
    image = np.clip(scaled, 0.0, 255.0).astype(np.uint8)[::-1]
    with open(args.out, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--jobs", type=int, help="parallel workers (overrides config)")
    common.add_argument("--out", help="output file or directory")

    parser = argparse.ArgumentParser(prog="birdsed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="WAVs to mel segments + manifest")
    p.add_argument("audio_dir")
    p.add_argument("--labels", help="clip_id,labels CSV for stratification")

    p = sub.add_parser("augment", parents=[common], help="augment a directory of MELS files")
    p.add_argument("mels_dir")
    p.add_argument("--labels", required=True, help="clip_id,labels CSV")
    p.add_argument("--repeats", type=int, default=1, help="augmented copies per input")

    p = sub.add_parser("infer", parents=[common], help="score soundscapes or average streams")
    p.add_argument("wavs", nargs="*", help="soundscape WAV files")
    p.add_argument("--scorer", help="scorer model file")
    p.add_argument("--precomputed", nargs="+", help="probability CSVs to ensemble")
    p.add_argument("--weights-file", help="whitespace-separated ensemble weights")

    p = sub.add_parser("train-calibrator", parents=[common], help="fit the second-stage model")
    p.add_argument("--probs", required=True, help="probability CSV")
    p.add_argument("--truth", required=True, help="row_id,birds ground truth CSV")
    p.add_argument("--site", required=True)
    p.add_argument("--sites", required=True, help="site table CSV")
    p.add_argument("--occurrences", required=True, help="species occurrence CSV")
    p.add_argument("--kind", choices=sorted(calib.KINDS), default="logistic")
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--oof-out", help="write leave-one-clip-out confidences CSV")

    p = sub.add_parser("postprocess", parents=[common], help="confidences to submission CSV")
    _add_cleanup_args(p)

    p = sub.add_parser("sweep-thresholds", parents=[common], help="grid-search dual thresholds")
    _add_cleanup_args(p)
    p.add_argument("--truth", required=True)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--global-micro", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="score a submission")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--global-micro", action="store_true")

    p = sub.add_parser("export-spectrogram", parents=[common], help="MELS to PGM image")
    p.add_argument("mels")
    return parser


def _add_cleanup_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--probs", required=True, help="probability CSV")
    p.add_argument("--site", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--occurrences", required=True)
    p.add_argument("--model", help="calibrator model file (raw confidences if omitted)")
    p.add_argument("--frequent-birds", help="site_id,species CSV of per-site frequent birds")
    p.add_argument("--bird-threshold", type=float)
    p.add_argument("--nocall-threshold", type=float)


_HANDLERS: dict[str, Callable[[PipelineConfig, argparse.Namespace], int]] = {
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "infer": cmd_infer,
    "train-calibrator": cmd_train_calibrator,
    "postprocess": cmd_postprocess,
    "sweep-thresholds": cmd_sweep,
    "evaluate": cmd_evaluate,
    "export-spectrogram": cmd_export_spectrogram,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        cfg = load_pipeline_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigFailure("jobs must be >= 1")
            cfg = dataclasses.replace(cfg, jobs=args.jobs)
        return _HANDLERS[args.command](cfg, args)
    except ConfigFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScorerFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
