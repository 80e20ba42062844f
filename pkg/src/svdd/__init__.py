"""Singing-voice deepfake detection toolkit.

Waveform augmentation, SSL-layer aggregation, a graph-attention
classifier backend, focal-loss training and pooled-EER evaluation,
all on a small self-contained reverse-mode autodiff engine.
"""

__version__ = "0.1.0"
