"""Disparity map codecs: PFM floats and 16-bit KITTI-style PNG.

PFM layout: ASCII header (magic, "width height", scale) followed by
width*height 4-byte floats stored bottom row first.  The sign of the
scale line encodes endianness (negative = little-endian).  KITTI PNGs
are 16-bit single-channel with value = round(disparity * 256) and 0
reserved for invalid pixels.
"""

from __future__ import annotations

import os
from typing import BinaryIO, Tuple

import numpy as np
from PIL import Image


class PfmError(ValueError):
    """Base class for PFM decode failures."""


class PfmHeaderError(PfmError):
    """Magic, dimension or scale line is missing or malformed."""


class PfmColorError(PfmError):
    """File is a 3-channel 'PF' image; only grayscale 'Pf' is supported."""


class PfmPayloadError(PfmError):
    """Pixel payload is shorter than the header promises."""


class KittiPngError(ValueError):
    """PNG is not a 16-bit single-channel disparity image."""


def _read_header_token(fh: BinaryIO) -> bytes:
    """Read one whitespace-delimited ASCII token, skipping leading whitespace."""
    token = b""
    while True:
        ch = fh.read(1)
        if ch == b"":
            raise PfmHeaderError("unexpected end of file in PFM header")
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def load_pfm(path: str | os.PathLike) -> Tuple[np.ndarray, float]:
    """Load a grayscale PFM file.

    Returns:
        (map, scale): float32 array ordered top-to-bottom, and the
        absolute value of the stored scale factor.
    """
    with open(path, "rb") as fh:
        magic = _read_header_token(fh)
        if magic == b"PF":
            raise PfmColorError("color 'PF' files are not supported, expected grayscale 'Pf'")
        if magic != b"Pf":
            raise PfmHeaderError(f"bad PFM magic {magic!r}, expected b'Pf'")
        try:
            width = int(_read_header_token(fh))
            height = int(_read_header_token(fh))
            scale = float(_read_header_token(fh))
        except ValueError as exc:
            raise PfmHeaderError(f"malformed PFM dimension/scale line: {exc}") from exc
        if width <= 0 or height <= 0:
            raise PfmHeaderError(f"non-positive PFM dimensions {width}x{height}")
        if scale == 0.0:
            raise PfmHeaderError("PFM scale must be nonzero")

        dtype = "<f4" if scale < 0 else ">f4"
        payload = fh.read(4 * width * height)
        if len(payload) < 4 * width * height:
            raise PfmPayloadError(
                f"truncated PFM payload: expected {4 * width * height} bytes, got {len(payload)}"
            )
        data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    # rows are stored bottom-to-top
    data = np.ascontiguousarray(data[::-1]).astype(np.float32)
    return data, abs(scale)


def write_pfm(path: str | os.PathLike, data: np.ndarray, scale: float = 1.0) -> None:
    """Write a 2D float map as grayscale little-endian PFM."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"PFM data must be 2D, got shape {data.shape}")
    if scale <= 0:
        raise ValueError("scale must be positive; endianness is chosen by the writer")
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(f"{-scale}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def load_kitti_disparity_png(path: str | os.PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Load a KITTI 16-bit disparity PNG.

    Returns:
        (disparity, valid_mask): disparity in pixels (float32, invalid
        pixels reported as 0) and a boolean validity mask.
    """
    img = Image.open(path)
    if img.mode not in ("I", "I;16", "I;16B"):
        raise KittiPngError(
            f"expected a 16-bit single-channel PNG, got mode {img.mode!r}"
        )
    raw = np.asarray(img)
    if raw.ndim != 2:
        raise KittiPngError(f"expected a single-channel PNG, got shape {raw.shape}")
    if raw.dtype not in (np.uint16, np.int32):
        raise KittiPngError(f"unexpected PNG sample type {raw.dtype}")
    raw = raw.astype(np.int64)
    if raw.min() < 0 or raw.max() > 0xFFFF:
        raise KittiPngError("PNG sample values exceed the 16-bit range")
    valid = raw > 0
    disparity = (raw / 256.0).astype(np.float32)
    disparity[~valid] = 0.0
    return disparity, valid


def write_kitti_disparity_png(
    path: str | os.PathLike, disparity: np.ndarray, valid_mask: np.ndarray | None = None
) -> None:
    """Write a disparity map as KITTI 16-bit PNG (value = round(d * 256), 0 = invalid)."""
    disparity = np.asarray(disparity, dtype=np.float64)
    if disparity.ndim != 2:
        raise ValueError(f"disparity must be 2D, got shape {disparity.shape}")
    stored = np.round(disparity * 256.0)
    stored = np.clip(stored, 0, 0xFFFF).astype(np.uint16)
    if valid_mask is not None:
        stored[~np.asarray(valid_mask, dtype=bool)] = 0
    Image.fromarray(stored).save(path, format="PNG")
