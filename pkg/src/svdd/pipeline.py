"""Glue between config, feature sources and the model: builds the
detection model from a RunConfig and exposes a feature provider usable
by the training loop and the scorer."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .aggregation import make_aggregator
from .audio import read_wav
from .autodiff import Tensor
from .backend import Backend, DetectionModel
from .config import RunConfig, parse_chain
from .features import crop_or_pad, read_feature_file, toy_encode
from .rawboost import apply_chain, utterance_seed
from .training import TrainExample


def manifest_examples(entries):
    return [TrainExample(e.utt_id, 1 if e.label == "bonafide" else 0)
            for e in entries]


def stack_dims(cfg: RunConfig, provider, utt_id) -> tuple:
    """(n_layers, feat_dim) of the provider's output for one utterance."""
    probe = provider(utt_id, "eval", None)
    return probe.shape[0], probe.shape[1]


def build_model(cfg: RunConfig, n_layers: int, feat_dim: int) -> DetectionModel:
    agg_rng = np.random.default_rng(cfg.aggregation.seed)
    aggregator = make_aggregator(
        cfg.aggregation.kind, n_layers, feat_dim, rng=agg_rng,
        reduction_ratio=cfg.aggregation.reduction_ratio)
    return DetectionModel(aggregator, Backend(cfg.backend.to_backend_config()))


class FeatureProvider:
    """Callable (utt_id, mode, rng) -> [N, F, T] float32 array.

    source 'svdf' reads precomputed feature files from feature_dir;
    source 'toy' reads the manifest waveform, optionally augments it in
    train mode, crops or pads, and runs the deterministic toy encoder.
    """

    def __init__(self, cfg: RunConfig, entries, augment_in_train=False):
        self.cfg = cfg
        self.paths = {e.utt_id: e.path for e in entries}
        self.chain = (parse_chain(cfg.augmentation.chain)
                      if augment_in_train else None)

    def __call__(self, utt_id, mode, rng):
        cfg = self.cfg
        if cfg.features.source == "svdf":
            path = Path(cfg.paths.feature_dir) / f"{utt_id}.svdf"
            return read_feature_file(path).data
        w = read_wav(self.paths[utt_id])
        if mode == "train" and self.chain is not None:
            local = np.random.default_rng(
                utterance_seed(cfg.augmentation.seed, utt_id)
                ^ (int(rng.integers(2 ** 32)) if rng is not None else 0))
            w = apply_chain(w, self.chain, local)
        crop_rng = rng if rng is not None else np.random.default_rng(0)
        w = crop_or_pad(w, cfg.features.duration, crop_rng, mode)
        return toy_encode(w, cfg.features.toy_config(), utt_id).data


def score_utterances(model, utt_ids, provider, jobs: int = 1) -> dict:
    """Eval-mode score per utterance; jobs > 1 scores concurrently."""
    def one(utt_id):
        stack = Tensor(provider(utt_id, "eval", None))
        return utt_id, model.forward(stack, mode="eval").item()

    if jobs <= 1:
        return dict(one(u) for u in utt_ids)
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(one, utt_ids))
