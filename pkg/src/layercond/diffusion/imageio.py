"""Binary PPM (P6) and PGM (P5) files."""

from __future__ import annotations

import numpy as np

from ..errors import DataError


def encode_ppm(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"PPM needs an (H, W, 3) uint8 image, got {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode() + img.tobytes()


def encode_pgm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    if img.ndim != 2:
        raise DataError(f"PGM needs an (H, W) image, got {img.shape}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def decode_pnm(buf: bytes) -> np.ndarray:
    parts = buf.split(maxsplit=4)
    if len(parts) < 5 or parts[0] not in (b"P6", b"P5"):
        raise DataError("not a binary PPM/PGM file")
    w, h = int(parts[1]), int(parts[2])
    if int(parts[3]) != 255:
        raise DataError("only 8-bit PNM files are supported")
    channels = 3 if parts[0] == b"P6" else 1
    raw = buf[len(buf) - w * h * channels:]
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, channels)
    return arr if channels == 3 else arr[..., 0]


def write_ppm(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def write_pgm(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())
