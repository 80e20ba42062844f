"""Per-layer hidden-state extraction from speech foundation models.

Feeds 16 kHz mono audio through a WavLM or wav2vec2/XLSR encoder and
stacks every hidden state, with the pre-transformer feature projection
as layer 0, into an [N, F, T] array written as an SVDF file per
utterance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .svdf import write_svdf

EXPECTED_SR = 16000

DEFAULT_MODELS = {
    "wavlm": "microsoft/wavlm-base-plus",
    "wav2vec2-xlsr": "facebook/wav2vec2-xls-r-300m",
}


class BridgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    model: str = "wavlm"
    variant: str = ""  # Hugging Face model id override
    manifest: str = ""
    out_dir: str = "features"
    device: str = "cpu"
    layers: tuple = ()  # empty = all layers

    def __post_init__(self):
        if self.model not in DEFAULT_MODELS:
            raise BridgeError(
                f"model must be one of {sorted(DEFAULT_MODELS)}, "
                f"got {self.model!r}")

    @property
    def model_id(self) -> str:
        return self.variant or DEFAULT_MODELS[self.model]


def read_wav_mono_16k(path) -> np.ndarray:
    from scipy.io import wavfile
    sr, samples = wavfile.read(path)
    if samples.ndim != 1:
        raise BridgeError(f"{path}: expected mono audio, "
                          f"got {samples.shape[1]} channels")
    if sr != EXPECTED_SR:
        raise BridgeError(
            f"{path}: sample rate {sr} != {EXPECTED_SR}; resample the "
            f"file to 16 kHz first")
    if samples.dtype.kind == "i":
        scale = float(np.iinfo(samples.dtype).max) + 1.0
        return samples.astype(np.float32) / scale
    return samples.astype(np.float32)


def load_model(cfg: BridgeConfig):
    from transformers import AutoModel
    try:
        model = AutoModel.from_pretrained(cfg.model_id)
    except Exception as exc:
        raise BridgeError(
            f"failed to load model {cfg.model_id!r}: {exc}") from exc
    return model.to(cfg.device).eval()


def hidden_state_stack(model, samples: np.ndarray, device="cpu",
                       layers=()) -> np.ndarray:
    """[N, F, T] float32 stack of all hidden states for one utterance.

    Layer 0 is the convolutional feature projection (the hidden state
    before any transformer block); layers 1..L are the transformer
    block outputs.
    """
    import torch
    with torch.no_grad():
        x = torch.from_numpy(samples[None, :]).to(device)
        out = model(x, output_hidden_states=True)
    states = out.hidden_states  # tuple of [1, T, F], layer 0 first
    stack = np.stack([h[0].cpu().numpy() for h in states])  # [N, T, F]
    if layers:
        bad = [i for i in layers if not 0 <= i < stack.shape[0]]
        if bad:
            raise BridgeError(f"layer index {bad[0]} out of range "
                              f"(model has {stack.shape[0]} layers)")
        stack = stack[list(layers)]
    return np.ascontiguousarray(
        stack.transpose(0, 2, 1).astype(np.float32))  # [N, F, T]


def read_manifest_paths(path):
    """utt_id -> audio path from the shared 5-column TSV manifest."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise BridgeError(f"{path}:{lineno}: expected 5 tab-separated "
                              f"fields, got {len(fields)}")
        rows.append((fields[0], fields[4]))
    if not rows:
        raise BridgeError(f"{path}: empty manifest")
    return rows


def extract(cfg: BridgeConfig, model=None, log=print) -> list:
    """Write one SVDF file per manifest utterance; returns output paths."""
    if model is None:
        model = load_model(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for utt_id, wav_path in read_manifest_paths(cfg.manifest):
        samples = read_wav_mono_16k(wav_path)
        stack = hidden_state_stack(model, samples, cfg.device, cfg.layers)
        out_path = out_dir / f"{utt_id}.svdf"
        write_svdf(stack, utt_id, out_path)
        if log is not None:
            log(f"{utt_id}: {stack.shape}")
        written.append(out_path)
    return written
