"""Writer for the SVDF feature-file format.

Byte layout (integers little-endian):

    offset 0   magic   b"SVDF"
    offset 4   version u16 (1)
    offset 6   dtype   u16 (0 = float32)
    offset 8   N       u32  (layers)
    offset 12  F       u32  (feature dim)
    offset 16  T       u32  (frames)
    offset 20  id_len  u16
    offset 22  utt_id  UTF-8, id_len bytes
    then       payload 4*N*F*T bytes, float32 LE, row-major [N, F, T]

This mirrors the detection pipeline's documented container so the files
written here are readable there without importing its code.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SVDF"
VERSION = 1
DTYPE_F32 = 0


class SvdfError(ValueError):
    pass


def write_svdf(data: np.ndarray, utt_id: str, path) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise SvdfError(f"stack must be [N, F, T] with positive dims, "
                        f"got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SvdfError(f"{utt_id}: non-finite values in hidden states")
    encoded = utt_id.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise SvdfError("utterance id longer than 65535 bytes")
    n, f, t = arr.shape
    header = MAGIC + struct.pack("<HHIIIH", VERSION, DTYPE_F32, n, f, t,
                                 len(encoded)) + encoded
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).astype("<f4").tobytes())
