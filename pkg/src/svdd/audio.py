"""Waveform container and mono WAV file I/O (16-bit PCM and 32-bit float)."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class AudioFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float32 samples (nominally in [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise AudioFormatError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise AudioFormatError("waveform samples must be finite")
        if int(self.sample_rate) <= 0:
            raise AudioFormatError(f"bad sample rate {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def peak(self) -> float:
        return float(np.abs(self.samples).max())

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples.astype(np.float64) ** 2)))


_FMT_PCM = 1
_FMT_FLOAT = 3


def read_wav(path) -> Waveform:
    """Read a mono WAV file (16-bit PCM or 32-bit IEEE float)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + csize]
        if cid == b"fmt ":
            if len(body) < 16:
                raise AudioFormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < csize:
                raise AudioFormatError(f"{path}: truncated data chunk")
            data = body
        pos += 8 + csize + (csize & 1)
    if fmt is None or data is None:
        raise AudioFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels != 1:
        raise AudioFormatError(
            f"{path}: {channels} channels; only mono is supported - "
            "downmix the file first")
    if audio_format == _FMT_PCM and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0
    elif audio_format == _FMT_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise AudioFormatError(
            f"{path}: unsupported encoding (format={audio_format}, "
            f"bits={bits}); expected 16-bit PCM or 32-bit float")
    return Waveform(samples, sample_rate)


def write_wav(path, w: Waveform, encoding: str = "float32") -> None:
    """Write a mono WAV file; encoding is 'float32' or 'pcm16'."""
    if encoding == "float32":
        fmt_tag, bits = _FMT_FLOAT, 32
        payload = w.samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        fmt_tag, bits = _FMT_PCM, 16
        clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    byte_rate = w.sample_rate * bits // 8
    block_align = bits // 8
    fmt_chunk = struct.pack("<HHIIHH", fmt_tag, 1, w.sample_rate,
                            byte_rate, block_align, bits)
    pad = b"\x00" if len(payload) & 1 else b""
    riff_size = 4 + (8 + len(fmt_chunk)) + (8 + len(payload) + len(pad))
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", riff_size) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload + pad)
