"""Soundscape birdcall sound event detection pipeline.

Submodules:
    audio_io   WAV decode/encode and resampling to the 32 kHz canonical rate
    spectro    log-mel spectrograms, segmentation, weak-signal filter, folds
    augment    spectrogram-domain training augmentation chain
    scoring    sliding-window frame scoring and ensemble weighting
    geo        Haversine distances and species occurrence tables
    calib      second-stage per-frame probability calibration
    postproc   rule-based false-positive/false-negative post-processing
    metrics    row-level micro F1 and site-weighted aggregate scores
    cli        command-line entry points
"""

__version__ = "0.1.0"
