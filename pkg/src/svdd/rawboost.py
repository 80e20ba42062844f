"""RawBoost waveform augmentation: convolutive (LnL), impulsive
signal-dependent (ISD) and stationary signal-independent (SSI) noise,
plus series/parallel composition.

Every operation is a pure function of (waveform, params, rng) and
preserves the sample count.  Amplitude control is peak normalization
with a no-clipping guarantee: outputs are scaled down to the input's
peak when they exceed it, and never scaled up.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .audio import Waveform

NOTCH_FIR_TAPS = 1025


class ParameterError(ValueError):
    pass


def _check_range(name, rng_pair):
    lo, hi = rng_pair
    if lo > hi:
        raise ParameterError(f"{name}: range ({lo}, {hi}) is not ordered")


@dataclass(frozen=True)
class LnLParams:
    """Linear-and-nonlinear convolutive noise parameters."""

    n_iterations: int = 5
    n_bands: int = 5
    band_freq_range: tuple = (20.0, 8000.0)
    band_width_range: tuple = (100.0, 1000.0)
    coeff_range: tuple = (10.0, 100.0)   # linear notch attenuation
    power_range: tuple = (1, 3, 5)       # odd exponents for the nonlinearity

    def __post_init__(self):
        if self.n_iterations < 1 or self.n_bands < 1:
            raise ParameterError("n_iterations and n_bands must be positive")
        _check_range("band_freq_range", self.band_freq_range)
        _check_range("band_width_range", self.band_width_range)
        _check_range("coeff_range", self.coeff_range)
        if not self.power_range:
            raise ParameterError("power_range must be non-empty")


@dataclass(frozen=True)
class IsdParams:
    """Impulsive signal-dependent noise parameters."""

    point_percentage_range: tuple = (0.0, 20.0)
    gain_range_db: tuple = (5.0, 20.0)

    def __post_init__(self):
        _check_range("point_percentage_range", self.point_percentage_range)
        _check_range("gain_range_db", self.gain_range_db)
        lo, hi = self.point_percentage_range
        if lo < 0.0 or hi > 100.0:
            raise ParameterError(
                f"point percentages must lie in [0, 100], got ({lo}, {hi})")


@dataclass(frozen=True)
class SsiParams:
    """Stationary signal-independent additive noise parameters."""

    snr_range_db: tuple = (10.0, 40.0)

    def __post_init__(self):
        _check_range("snr_range_db", self.snr_range_db)


NOISE_TYPES = ("lnl", "isd", "ssi")


@dataclass(frozen=True)
class AugmentationChain:
    """mode 'series': steps applied in order; mode 'parallel': exactly two
    branches run on the original input, summed, then peak-normalized."""

    mode: str = "series"
    steps: tuple = field(default_factory=tuple)  # of (kind, params)

    def __post_init__(self):
        if self.mode not in ("series", "parallel"):
            raise ParameterError(f"unknown chain mode {self.mode!r}")
        for kind, _ in self.steps:
            if kind not in NOISE_TYPES:
                raise ParameterError(f"unknown noise type {kind!r}")
        if self.mode == "parallel" and len(self.steps) != 2:
            raise ParameterError("parallel chain needs exactly two branches")
        object.__setattr__(self, "steps", tuple(self.steps))


def utterance_seed(global_seed: int, utt_id: str) -> int:
    """Mix the global seed with a 64-bit hash of the utterance id."""
    digest = hashlib.blake2b(utt_id.encode("utf-8"), digest_size=8).digest()
    return (int(global_seed) ^ int.from_bytes(digest, "little")) & (2**64 - 1)


def _limit_peak(samples: np.ndarray, target_peak: float) -> np.ndarray:
    """Scale down so the peak does not exceed target_peak; never scale up."""
    peak = float(np.abs(samples).max())
    if peak > target_peak and peak > 0.0:
        samples = samples * (target_peak / peak)
    return samples


def _notch_fir(sample_rate, centers, widths, depths, n_taps=NOTCH_FIR_TAPS):
    """Linear-phase FIR whose magnitude carves the requested notches.

    Frequency-sampling design: target magnitude on the rfft grid, zero-phase
    inverse transform, center shift, Hann window.
    """
    freqs = np.fft.rfftfreq(n_taps, d=1.0 / sample_rate)
    mag = np.ones_like(freqs)
    nyquist = sample_rate / 2.0
    for c, w, d in zip(centers, widths, depths):
        lo = max(c - w / 2.0, 0.0)
        hi = min(c + w / 2.0, nyquist)
        band = (freqs >= lo) & (freqs <= hi)
        mag[band] = np.minimum(mag[band], 1.0 / d)
    h = np.fft.irfft(mag, n_taps)
    h = np.roll(h, n_taps // 2)
    return h * np.hanning(n_taps)


def apply_lnl(w: Waveform, p: LnLParams, rng: np.random.Generator) -> Waveform:
    """Notch filtering plus a power nonlinearity, iterated n_iterations times."""
    nyquist = w.sample_rate / 2.0
    if p.band_freq_range[1] > nyquist:
        raise ParameterError(
            f"notch band up to {p.band_freq_range[1]} Hz exceeds Nyquist "
            f"({nyquist} Hz)")
    x = w.samples.astype(np.float64)
    input_peak = float(np.abs(x).max())
    for _ in range(p.n_iterations):
        centers = rng.uniform(*p.band_freq_range, size=p.n_bands)
        widths = rng.uniform(*p.band_width_range, size=p.n_bands)
        depths = rng.uniform(*p.coeff_range, size=p.n_bands)
        h = _notch_fir(w.sample_rate, centers, widths, depths)
        x = fftconvolve(x, h, mode="same")
        power = int(rng.choice(np.asarray(p.power_range)))
        nl = x ** power
        rms_x = np.sqrt(np.mean(x ** 2))
        rms_nl = np.sqrt(np.mean(nl ** 2))
        if rms_nl > 0.0:
            nl = nl * (rms_x / rms_nl)
        x = x + nl
    return Waveform(_limit_peak(x, input_peak).astype(np.float32),
                    w.sample_rate)


def apply_isd(w: Waveform, p: IsdParams, rng: np.random.Generator) -> Waveform:
    """Add sign-random noise at a random subset of points, each scaled by
    that sample's own amplitude attenuated by a per-point dB gain."""
    n = len(w)
    pct = rng.uniform(*p.point_percentage_range)
    n_points = int(round(pct / 100.0 * n))
    x = w.samples.astype(np.float64)
    if n_points > 0:
        idx = rng.choice(n, size=n_points, replace=False)
        gains_db = rng.uniform(*p.gain_range_db, size=n_points)
        signs = rng.choice(np.array([-1.0, 1.0]), size=n_points)
        x[idx] += signs * np.abs(x[idx]) * 10.0 ** (-gains_db / 20.0)
    return Waveform(x.astype(np.float32), w.sample_rate)


def apply_ssi(w: Waveform, p: SsiParams, rng: np.random.Generator) -> Waveform:
    """Add white Gaussian noise at an SNR drawn uniformly from snr_range."""
    x = w.samples.astype(np.float64)
    p_signal = np.mean(x ** 2)
    if p_signal == 0.0:
        raise ParameterError("SSI noise undefined for a zero-power signal")
    snr_db = rng.uniform(*p.snr_range_db)
    noise = rng.standard_normal(len(w))
    p_noise = np.mean(noise ** 2)
    scale = np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform((x + scale * noise).astype(np.float32), w.sample_rate)


_APPLY = {"lnl": apply_lnl, "isd": apply_isd, "ssi": apply_ssi}


def apply_step(w: Waveform, kind: str, params, rng) -> Waveform:
    return _APPLY[kind](w, params, rng)


def apply_chain(w: Waveform, chain: AugmentationChain,
                rng: np.random.Generator) -> Waveform:
    if chain.mode == "series":
        out = w
        for kind, params in chain.steps:
            out = apply_step(out, kind, params, rng)
        return out
    # parallel: both branches see the original input
    (kind_a, pa), (kind_b, pb) = chain.steps
    a = apply_step(w, kind_a, pa, rng)
    b = apply_step(w, kind_b, pb, rng)
    mixed = a.samples.astype(np.float64) + b.samples.astype(np.float64)
    mixed = _limit_peak(mixed, w.peak())
    return Waveform(mixed.astype(np.float32), w.sample_rate)
