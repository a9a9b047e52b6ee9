"""Minimal PNG rendering for risk maps: fixed 256-step blue->yellow->red ramp
over [0, 1], nodata transparent."""

from __future__ import annotations

import struct
import zlib

import numpy as np

__all__ = ["risk_ramp", "render_risk_png"]


def risk_ramp():
    """(256, 3) uint8 lookup table: blue at 0, yellow midway, red at 1."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for i in range(256):
        u = i / 255.0
        if u <= 0.5:
            t = 2.0 * u
            rgb = (round(255 * t), round(255 * t), round(255 * (1 - t)))
        else:
            t = 2.0 * (u - 0.5)
            rgb = (255, round(255 * (1 - t)), 0)
        lut[i] = rgb
    return lut


_LUT = risk_ramp()


def _chunk(tag: bytes, payload: bytes) -> bytes:
    raw = tag + payload
    return struct.pack(">I", len(payload)) + raw + struct.pack(">I", zlib.crc32(raw))


def render_risk_png(values) -> bytes:
    """Encode a probability grid as RGBA PNG bytes; NaN cells are transparent."""
    values = np.asarray(values, dtype=float)
    h, w = values.shape
    nodata = np.isnan(values)
    step = np.clip((np.nan_to_num(values) * 256).astype(int), 0, 255)
    rgba = np.zeros((h, w, 4), dtype=np.uint8)
    rgba[..., :3] = _LUT[step]
    rgba[..., 3] = np.where(nodata, 0, 255)

    raw = b"".join(b"\x00" + rgba[row].tobytes() for row in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(raw, 9))
        + _chunk(b"IEND", b"")
    )
