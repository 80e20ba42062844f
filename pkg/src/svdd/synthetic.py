"""Synthetic two-class audio corpus for desk-scale experiments.

Both classes are mixtures of low-frequency harmonic tones plus a noise
floor; the spoof class carries a planted narrowband artifact (a strong
high-frequency tone), which stands in for the spectral fingerprints of
synthesis systems.  Utterances are written as 16-bit WAV files with a
trial manifest, so the full augment/encode/train/score/eval pipeline
can run on them unmodified.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, write_wav
from .manifest import ManifestEntry, write_manifest

ATTACKS = ("A09", "A10", "A11", "A12", "A13", "A14")
DATASETS = ("m4singer", "kising")


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = 16000
    duration: float = 4.0
    n_partials: int = 3
    f0_range: tuple = (110.0, 660.0)
    noise_floor: float = 0.05
    artifact_freq: float = 3750.0
    artifact_amp: float = 0.25
    peak: float = 0.9


def synth_utterance(rng: np.random.Generator, spoof: bool,
                    cfg: SynthConfig = SynthConfig()) -> Waveform:
    n = int(round(cfg.duration * cfg.sample_rate))
    t = np.arange(n, dtype=np.float64) / cfg.sample_rate
    x = np.zeros(n)
    f0 = rng.uniform(*cfg.f0_range)
    for k in range(1, cfg.n_partials + 1):
        amp = rng.uniform(0.05, 0.2) / k
        x += amp * np.sin(2.0 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi))
    x += cfg.noise_floor * rng.standard_normal(n)
    if spoof:
        x += cfg.artifact_amp * np.sin(
            2.0 * np.pi * cfg.artifact_freq * t + rng.uniform(0, 2 * np.pi))
    peak = np.abs(x).max()
    if peak > cfg.peak:
        x *= cfg.peak / peak
    return Waveform(x.astype(np.float32), cfg.sample_rate)


def corrupt(w: Waveform, rng: np.random.Generator,
            snr_db: float = 10.0) -> Waveform:
    """Add white noise at the requested SNR; models a noisy test channel."""
    power = float(np.mean(np.square(w.samples, dtype=np.float64)))
    noise_power = power / (10.0 ** (snr_db / 10.0))
    noisy = w.samples + np.sqrt(noise_power) * rng.standard_normal(len(w))
    peak = np.abs(noisy).max()
    if peak > 1.0:
        noisy = noisy / peak
    return Waveform(noisy.astype(np.float32), w.sample_rate)


def make_split(out_dir, prefix: str, n_utts: int, seed: int,
               cfg: SynthConfig = SynthConfig(),
               corrupt_snr_db=None) -> Path:
    """Write n_utts WAVs (alternating bonafide/spoof) plus a manifest;
    returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_utts):
        spoof = i % 2 == 1
        utt = f"{prefix}{i:05d}"
        w = synth_utterance(rng, spoof, cfg)
        if corrupt_snr_db is not None:
            w = corrupt(w, rng, corrupt_snr_db)
        path = out_dir / f"{utt}.wav"
        write_wav(path, w, encoding="pcm16")
        attack = ATTACKS[(i // 2) % len(ATTACKS)] if spoof else "-"
        # i // 2 keeps the dataset uncorrelated with the label parity, so
        # both classes occur in both datasets and per-dataset EER exists.
        dataset = DATASETS[(i // 2) % len(DATASETS)]
        entries.append(ManifestEntry(utt, dataset, attack,
                                     "spoof" if spoof else "bonafide",
                                     str(path)))
    manifest = out_dir / f"{prefix}manifest.tsv"
    write_manifest(entries, manifest)
    return manifest
