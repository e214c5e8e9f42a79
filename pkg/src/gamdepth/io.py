"""Minimal readers/writers for binary PPM/PGM and PFM rasters."""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "FormatError",
    "read_pfm",
    "write_pfm",
    "read_pnm",
    "write_ppm",
    "write_pgm",
    "image_to_uint8",
]


class FormatError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, collecting comments.

    Returns ``(tokens, comments, offset_of_raster)``.
    """
    tokens, comments = [], []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise FormatError("truncated header")
        if data[i : i + 1] == b"#":
            j = data.find(b"\n", i)
            j = n if j < 0 else j
            comments.append(data[i + 1 : j].decode("ascii", "replace").strip())
            i = j
            continue
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        tokens.append(data[i:j].decode("ascii"))
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, comments, i + 1


def read_pnm(path):
    """Read a binary P5 (gray) or P6 (RGB) file.

    Returns ``(array, maxval, comments)`` with an integer array of shape
    ``(H, W)`` for P5 and ``(H, W, 3)`` for P6.
    """
    with open(path, "rb") as f:
        data = f.read()
    try:
        (magic, w, h, maxval), comments, off = _tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{os.fspath(path)}: malformed PNM header ({exc})") from None
    if magic not in ("P5", "P6"):
        raise FormatError(f"{os.fspath(path)}: unsupported magic {magic!r}")
    if not (0 < maxval < 65536) or w <= 0 or h <= 0:
        raise FormatError(f"{os.fspath(path)}: bad dimensions or maxval")
    channels = 3 if magic == "P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * channels * dtype.itemsize
    raw = data[off : off + need]
    if len(raw) != need:
        raise FormatError(f"{os.fspath(path)}: expected {need} raster bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    arr = arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)
    return arr, maxval, comments


def _write_pnm(path, magic, arr, maxval, comments=()):
    h, w = arr.shape[:2]
    header = [magic]
    header += [f"# {c}" for c in comments]
    header += [f"{w} {h}", str(maxval)]
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def image_to_uint8(img) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, img):
    """Write an ``(H, W, 3)`` image with 0-1 intensities as 8-bit P6."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM needs an (H, W, 3) image, got {img.shape}")
    _write_pnm(path, "P6", image_to_uint8(img), 255)


def write_pgm(path, arr, maxval=255, comments=()):
    """Write integer values ``0..maxval`` as P5 (16-bit when maxval > 255)."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise FormatError(f"PGM needs a 2-D raster, got {arr.shape}")
    if arr.min() < 0 or arr.max() > maxval:
        raise FormatError(f"PGM values must lie in [0, {maxval}]")
    _write_pnm(path, "P5", arr, maxval, comments)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into float64, top row first. Gray files give ``(H, W)``."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        (magic, w, h, scale), _, off = _tokens(data, 4)
        w, h, scale = int(w), int(h), float(scale)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{os.fspath(path)}: malformed PFM header ({exc})") from None
    if magic not in ("Pf", "PF"):
        raise FormatError(f"{os.fspath(path)}: not a PFM file (magic {magic!r})")
    channels = 3 if magic == "PF" else 1
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    need = w * h * channels * 4
    raw = data[off : off + need]
    if len(raw) != need:
        raise FormatError(f"{os.fspath(path)}: expected {need} raster bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    arr = arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)
    return np.flipud(arr).copy()


def write_pfm(path, arr):
    """Write float32 little-endian PFM; rows are stored bottom-to-top."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        magic = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = "PF"
    else:
        raise FormatError(f"PFM needs (H, W) or (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"{magic}\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(arr), dtype="<f4").tobytes())
