"""Representation stacks for the aggregation stage: the SVDF feature-file
format, the 4-second crop/pad rule, and a deterministic toy encoder that
stands in for a pretrained speech encoder in tests and toy experiments.

SVDF byte layout (all integers little-endian):

    offset 0   magic   b"SVDF"
    offset 4   version u16 (currently 1)
    offset 6   dtype   u16 (0 = float32)
    offset 8   N       u32  (layers)
    offset 12  F       u32  (feature dim)
    offset 16  T       u32  (frames)
    offset 20  id_len  u16
    offset 22  utt_id  UTF-8, id_len bytes
    then       payload 4*N*F*T bytes, float32 LE, row-major [N, F, T]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .audio import Waveform

SVDF_MAGIC = b"SVDF"
SVDF_VERSION = 1
SVDF_DTYPE_F32 = 0


class FeatureFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RepresentationStack:
    """Per-layer encoder outputs stacked into an [N, F, T] array."""

    data: np.ndarray
    utt_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise FeatureFormatError(
                f"stack must be [N, F, T] with N >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FeatureFormatError("stack entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_layers(self):
        return self.data.shape[0]

    @property
    def feat_dim(self):
        return self.data.shape[1]

    @property
    def n_frames(self):
        return self.data.shape[2]


def crop_or_pad(w: Waveform, duration_s: float, rng: np.random.Generator,
                mode: str = "eval") -> Waveform:
    """Fix the waveform length to round(duration_s * sample_rate).

    Longer inputs: random-offset window in train mode, leading window in
    eval mode.  Shorter inputs: repeat-pad (tile) then trim.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train|eval, got {mode!r}")
    target = int(round(duration_s * w.sample_rate))
    n = len(w)
    if n == target:
        return w
    if n > target:
        offset = int(rng.integers(0, n - target + 1)) if mode == "train" else 0
        return Waveform(w.samples[offset:offset + target], w.sample_rate)
    reps = -(-target // n)
    return Waveform(np.tile(w.samples, reps)[:target], w.sample_rate)


def write_feature_file(stack: RepresentationStack, path) -> None:
    n, f, t = stack.data.shape
    utt = stack.utt_id.encode("utf-8")
    if len(utt) > 0xFFFF:
        raise FeatureFormatError("utterance id longer than 65535 bytes")
    header = (SVDF_MAGIC
              + struct.pack("<HHIIIH", SVDF_VERSION, SVDF_DTYPE_F32,
                            n, f, t, len(utt))
              + utt)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stack.data.astype("<f4").tobytes())


def read_feature_file(path) -> RepresentationStack:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 22:
        raise FeatureFormatError(
            f"{path}: file truncated at byte {len(raw)} (header needs 22)")
    if raw[:4] != SVDF_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic at byte 0: {raw[:4]!r}")
    version, dtype, n, f, t, id_len = struct.unpack_from("<HHIIIH", raw, 4)
    if version != SVDF_VERSION:
        raise FeatureFormatError(
            f"{path}: unsupported version {version} at byte 4")
    if dtype != SVDF_DTYPE_F32:
        raise FeatureFormatError(f"{path}: unsupported dtype {dtype} at byte 6")
    if n < 1 or f < 1 or t < 1:
        raise FeatureFormatError(
            f"{path}: bad dimensions N={n} F={f} T={t} at byte 8")
    pos = 22
    if len(raw) < pos + id_len:
        raise FeatureFormatError(
            f"{path}: file truncated at byte {len(raw)} "
            f"(utt id needs {pos + id_len})")
    utt_id = raw[pos:pos + id_len].decode("utf-8")
    pos += id_len
    expected = pos + 4 * n * f * t
    if len(raw) != expected:
        raise FeatureFormatError(
            f"{path}: payload length mismatch: file has {len(raw)} bytes, "
            f"expected exactly {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=n * f * t,
                         offset=pos).reshape(n, f, t)
    return RepresentationStack(data, utt_id)


# ---------------------------------------------------------------------------
# toy encoder


@dataclass(frozen=True)
class ToyEncoderConfig:
    """Frozen random conv stack; deterministic in (input, seed)."""

    n_layers: int = 6
    feat_dim: int = 16
    frontend_strides: tuple = (5, 4, 4, 2, 2)   # total stride 320
    frontend_kernels: tuple = (10, 8, 8, 4, 4)
    hidden_kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1 or self.feat_dim < 1:
            raise ValueError("n_layers and feat_dim must be positive")
        if len(self.frontend_strides) != len(self.frontend_kernels):
            raise ValueError("frontend strides and kernels must align")

    @property
    def total_stride(self):
        return int(np.prod(self.frontend_strides))


def _conv1d_same(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """x: [C_in, L]; w: [C_out, C_in, k]; output length ceil(L / stride)."""
    cin, length = x.shape
    cout, _, k = w.shape
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + k - length, 0)
    xp = np.pad(x, ((0, 0), (total // 2, total - total // 2)))
    cols = np.empty((cin, k, out_len), dtype=x.dtype)
    for j in range(k):
        cols[:, j, :] = xp[:, j:j + out_len * stride:stride]
    return w.reshape(cout, cin * k) @ cols.reshape(cin * k, out_len)


def _toy_weights(cfg: ToyEncoderConfig):
    rng = np.random.default_rng(cfg.seed)
    weights = []
    cin = 1
    for k in cfg.frontend_kernels:
        w = rng.standard_normal((cfg.feat_dim, cin, k))
        weights.append((w / np.sqrt(cin * k)).astype(np.float32))
        cin = cfg.feat_dim
    hidden = []
    for _ in range(cfg.n_layers):
        w = rng.standard_normal((cfg.feat_dim, cfg.feat_dim, cfg.hidden_kernel))
        hidden.append(
            (w / np.sqrt(cfg.feat_dim * cfg.hidden_kernel)).astype(np.float32))
    return weights, hidden


def toy_encode(w: Waveform, cfg: ToyEncoderConfig,
               utt_id: str = "") -> RepresentationStack:
    """Bias-free strided convs + tanh; stacks the n_layers hidden maps."""
    if len(w) < cfg.total_stride:
        raise ValueError(
            f"input of {len(w)} samples is shorter than one receptive field "
            f"({cfg.total_stride} samples)")
    frontend, hidden = _toy_weights(cfg)
    x = w.samples[None, :].astype(np.float32)
    for weight, stride in zip(frontend, cfg.frontend_strides):
        x = np.tanh(_conv1d_same(x, weight, stride))
    layers = []
    for weight in hidden:
        x = np.tanh(_conv1d_same(x, weight, 1))
        layers.append(x)
    return RepresentationStack(np.stack(layers), utt_id)
