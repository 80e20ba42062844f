"""Focal-loss training with AdamW and single-cycle cosine annealing.

The trainer consumes (utt_id, label) examples plus a feature provider
callable that yields the [N, F, T] representation stack for an utterance
in a given mode; augmentation and crop/pad live inside the provider so
the loop itself stays independent of the feature source.  After every
epoch the dev EER is measured and the checkpoint with the lowest value
is kept.

Checkpoint file layout (little endian): magic "SVCK", u16 version (1),
u16 dtype tag (0 = f32, 1 = f64), u32 epoch, f64 dev EER, u64 optimizer
step, u32 parameter count; then per parameter: u16 name length, UTF-8
name, u8 ndim, ndim u32 dims, followed by three payloads of that shape
(value, first moment, second moment).
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .evaluation import eer_from_scores

CKPT_MAGIC = b"SVCK"
CKPT_VERSION = 1
_DTYPE_TAGS = {0: np.float32, 1: np.float64}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-6
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 48
    epochs: int = 30
    lr_min: float = 1e-9
    seed: int = 42

    def __post_init__(self):
        if self.lr_min > self.lr:
            raise ValueError(f"lr_min {self.lr_min} exceeds lr {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def focal_loss(logit: Tensor, label: int, p: FocalParams) -> Tensor:
    """Binary focal loss on one logit; label 1 = bonafide, 0 = spoof.

    Written in log-space: with p_hat = sigmoid(logit),
    -ln p_hat = softplus(-logit) and (1 - p_hat)^gamma =
    exp(-gamma * softplus(logit)), so no term overflows for |logit|
    up to a few hundred.
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    z = logit if label == 1 else ad.neg(logit)
    weight = p.alpha if label == 1 else 1.0 - p.alpha
    modulator = ad.exp(ad.mul(ad.softplus(z), -p.gamma))
    return ad.mul(ad.mul(modulator, ad.softplus(ad.neg(z))), weight)


def cosine_lr(t: int, total: int, cfg: OptimConfig) -> float:
    """Single-cycle cosine schedule from cfg.lr down to cfg.lr_min."""
    if t < 0:
        raise ValueError(f"step {t} is negative")
    if t >= total:
        return cfg.lr_min
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (
        1.0 + math.cos(math.pi * t / total))


class AdamState:
    """First/second moment accumulators plus the shared step count."""

    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}


def _decayed(param) -> bool:
    # biases, norm gains and aggregation logits are 1-D; skip decay there
    return param.value.ndim >= 2


def adamw_step(params: dict, grads: dict, state: AdamState,
               cfg: OptimConfig, lr_t: float):
    """One AdamW update over named parameters, decoupled weight decay."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.betas
    for name, param in params.items():
        g = np.asarray(grads[name], dtype=param.value.dtype.type)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        theta = param.value.numpy()
        if _decayed(param):
            theta = theta - lr_t * cfg.weight_decay * theta
        param.assign(theta - lr_t * m_hat / (np.sqrt(v_hat) + cfg.eps))


@dataclass(frozen=True)
class TrainExample:
    utt_id: str
    label: int  # 1 bonafide, 0 spoof


@dataclass(frozen=True)
class Checkpoint:
    epoch: int
    dev_eer: float
    step: int
    values: dict
    m: dict
    v: dict


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    lr_history: list = field(default_factory=list)
    dev_eer_history: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)


def snapshot(model, state: AdamState, epoch: int, dev_eer: float) -> Checkpoint:
    params = model.parameters()
    values = {k: p.value.numpy().copy() for k, p in params.items()}
    m = {k: state.m.get(k, np.zeros_like(values[k])).copy() for k in params}
    v = {k: state.v.get(k, np.zeros_like(values[k])).copy() for k in params}
    return Checkpoint(epoch, dev_eer, state.step, values, m, v)


def restore(model, ckpt: Checkpoint) -> AdamState:
    """Load checkpoint values into the model; returns the optimizer state."""
    params = model.parameters()
    missing = sorted(set(params) ^ set(ckpt.values))
    if missing:
        raise TrainingError(f"parameter name mismatch: {missing[:5]}")
    for name, param in params.items():
        if ckpt.values[name].shape != param.value.shape:
            raise TrainingError(
                f"shape mismatch for {name}: checkpoint "
                f"{ckpt.values[name].shape}, model {param.value.shape}")
        param.assign(ckpt.values[name])
    state = AdamState()
    state.step = ckpt.step
    state.m = {k: a.copy() for k, a in ckpt.m.items()}
    state.v = {k: a.copy() for k, a in ckpt.v.items()}
    return state


def save_checkpoint(ckpt: Checkpoint, path):
    names = sorted(ckpt.values)
    dtype = ckpt.values[names[0]].dtype if names else np.dtype(np.float32)
    tag = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}[dtype]
    blob = bytearray()
    blob += CKPT_MAGIC
    blob += struct.pack("<HHIdQI", CKPT_VERSION, tag, ckpt.epoch,
                        ckpt.dev_eer, ckpt.step, len(names))
    for name in names:
        value = ckpt.values[name]
        encoded = name.encode("utf-8")
        blob += struct.pack("<HB", len(encoded), value.ndim)
        blob += encoded
        blob += struct.pack(f"<{value.ndim}I", *value.shape)
        for arr in (value, ckpt.m[name], ckpt.v[name]):
            if arr.shape != value.shape or arr.dtype != dtype:
                raise TrainingError(f"inconsistent arrays for {name}")
            blob += arr.astype("<" + dtype.str[1:]).tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise TrainingError(f"{path}: bad checkpoint magic")
    version, tag, epoch, dev_eer, step, count = struct.unpack_from(
        "<HHIdQI", blob, 4)
    if version != CKPT_VERSION:
        raise TrainingError(f"{path}: unsupported version {version}")
    dtype = np.dtype(_DTYPE_TAGS[tag])
    offset = 4 + struct.calcsize("<HHIdQI")
    values, m, v = {}, {}, {}
    for _ in range(count):
        name_len, ndim = struct.unpack_from("<HB", blob, offset)
        offset += 3
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        for store in (values, m, v):
            arr = np.frombuffer(blob, dtype="<" + dtype.str[1:],
                                count=int(np.prod(shape, dtype=np.int64)),
                                offset=offset).reshape(shape)
            store[name] = arr.astype(dtype)
            offset += size
    if offset != len(blob):
        raise TrainingError(
            f"{path}: {len(blob)} bytes on disk, parsed {offset}")
    return Checkpoint(epoch, dev_eer, step, values, m, v)


def score_examples(model, examples, provider):
    """Eval-mode scores for a list of examples; returns (scores, labels)."""
    scores, labels = [], []
    for ex in examples:
        stack = Tensor(provider(ex.utt_id, "eval", None))
        scores.append(model.forward(stack, mode="eval").item())
        labels.append(ex.label)
    return np.array(scores), np.array(labels)


def dev_eer(model, examples, provider) -> float:
    scores, labels = score_examples(model, examples, provider)
    with warnings.catch_warnings():
        # an untrained model often scores worse than chance; the polarity
        # warning is only meaningful for final evaluation
        warnings.simplefilter("ignore", RuntimeWarning)
        return eer_from_scores(scores[labels == 1], scores[labels == 0]).eer


def _check_two_classes(examples, what):
    labels = {ex.label for ex in examples}
    if labels != {0, 1}:
        raise TrainingError(
            f"{what} set needs both classes, found labels {sorted(labels)}")


def train(train_set, dev_set, provider, model, cfg: OptimConfig,
          focal: FocalParams = FocalParams(), target_dev_eer=None,
          log=None) -> TrainResult:
    """Full training loop; returns the lowest-dev-EER checkpoint.

    provider(utt_id, mode, rng) must return an [N, F, T] float array;
    mode is "train" or "eval".  If target_dev_eer is set, training stops
    early once the dev EER drops below it.
    """
    train_set, dev_set = list(train_set), list(dev_set)
    if not train_set:
        raise TrainingError("empty training set")
    _check_two_classes(train_set, "training")
    _check_two_classes(dev_set, "dev")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = AdamState()
    batches_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    result = TrainResult(checkpoint=None)
    best = None
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            lr_t = cosine_lr(step, total_steps, cfg)
            result.lr_history.append(lr_t)
            with Tape() as tape:
                losses = []
                for ex in batch:
                    stack = Tensor(provider(ex.utt_id, "train", rng))
                    logit = model.forward(stack, mode="train", rng=rng)
                    losses.append(
                        ad.reshape(focal_loss(logit, ex.label, focal), (1,)))
                loss = ad.reduce_mean(ad.concat(losses, axis=0))
            result.loss_history.append(loss.item())
            grads = tape.gradients(loss)
            adamw_step(params,
                       {k: grads.wrt(p.value) for k, p in params.items()},
                       state, cfg, lr_t)
            step += 1
        eer = dev_eer(model, dev_set, provider)
        result.dev_eer_history.append(eer)
        if log is not None:
            log(f"epoch {epoch}: dev EER {eer:.4f}, "
                f"loss {result.loss_history[-1]:.6f}")
        if best is None or eer < best.dev_eer:
            best = snapshot(model, state, epoch, eer)
        if target_dev_eer is not None and eer < target_dev_eer:
            break
    result.checkpoint = best
    return result
