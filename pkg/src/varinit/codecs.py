"""Minimal readers/writers for netpbm images and 16-bit PCM WAV."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated netpbm header")
        out.append(data[start:pos])
    return out, pos


def read_netpbm(path):
    """Read a PGM/PPM (P2, P3, P5, P6) file.

    Returns ``(pixels, maxval)`` with pixels shaped ``(H, W)`` or ``(H, W, 3)``.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in _MAGIC:
        raise ValueError(f"{path}: unsupported netpbm magic {magic!r}")
    channels, binary = _MAGIC[magic]
    (w, h, maxval), pos = _tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536) or w <= 0 or h <= 0:
        raise ValueError(f"{path}: bad netpbm header")
    count = w * h * channels
    if binary:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pixels = raw.astype(np.uint16 if maxval > 255 else np.uint8)
    else:
        values, _ = _tokens(data, count, pos)
        pixels = np.array([int(v) for v in values], dtype=np.uint16 if maxval > 255 else np.uint8)
    if channels == 3:
        return pixels.reshape(h, w, 3), maxval
    return pixels.reshape(h, w), maxval


def write_netpbm(path, pixels, maxval: int = 255) -> Path:
    """Write a binary PGM (2-D array) or PPM (``(H, W, 3)`` array)."""
    path = Path(path)
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        magic = b"P5"
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write array of shape {pixels.shape} as netpbm")
    h, w = pixels.shape[:2]
    dtype = ">u2" if maxval > 255 else "u1"
    body = np.clip(pixels, 0, maxval).astype(dtype).tobytes()
    path.write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode("ascii") + body)
    return path


def to_unit_range(pixels, maxval: int) -> np.ndarray:
    """Map integer pixels to floats in [-1, 1]."""
    return np.asarray(pixels, dtype=np.float64) * (2.0 / maxval) - 1.0


def from_unit_range(values, maxval: int = 255) -> np.ndarray:
    return np.rint((np.clip(values, -1.0, 1.0) + 1.0) * (maxval / 2.0)).astype(np.uint16 if maxval > 255 else np.uint8)


def read_wav(path):
    """Read 16-bit PCM mono WAV as floats in [-1, 1). Returns ``(samples, rate)``."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
        rate = fh.getframerate()
        frames = fh.readframes(fh.getnframes())
    return np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_wav(path, samples, rate: int) -> Path:
    path = Path(path)
    pcm = np.clip(np.rint(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(rate))
        fh.writeframes(pcm.tobytes())
    return path
