"""Dense 2-D grid helpers: linear functionals, histograms, distance maps, raster I/O.

Conventions used throughout the package:

* an image is a float array of shape ``(H, W)`` or ``(H, W, 3)`` with values in [0, 255]
* a labeling (segment mask) is a boolean array of shape ``(H, W)``
* a scalar field is a float64 array of shape ``(H, W)``
* ``x`` is the column index, ``y`` the row index
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

FIELD_MAGIC = b"SFLD"


class DegenerateMaskWarning(UserWarning):
    """Raised (as a warning) when a mask has no inside/outside boundary."""


class FormatError(ValueError):
    pass


def as_image(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    return img


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


def channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def channel_planes(img: np.ndarray) -> list[np.ndarray]:
    return [img] if img.ndim == 2 else [img[:, :, c] for c in range(img.shape[2])]


def _check_shape(shape_a, shape_b):
    if tuple(shape_a[:2]) != tuple(shape_b[:2]):
        raise ValueError(f"dimension mismatch: {tuple(shape_a[:2])} vs {tuple(shape_b[:2])}")


def linear_sum(f: np.ndarray, s: np.ndarray) -> float:
    """Discrete ``<f, S>``: sum of ``f`` over the pixels of the segment."""
    f = np.asarray(f, dtype=np.float64)
    s = as_mask(s)
    _check_shape(f.shape, s.shape)
    return float(f[s].sum())


def coordinate_grids(shape) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates normalized to [0, 1] along each axis (x = column, y = row)."""
    h, w = shape[:2]
    xs = np.arange(w, dtype=np.float64) / max(w - 1, 1)
    ys = np.arange(h, dtype=np.float64) / max(h - 1, 1)
    x, y = np.meshgrid(xs, ys)
    return x, y


# -- histograms ---------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    """Per-channel marginal histogram; ``counts`` has shape ``(channels, bins)``."""

    counts: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.counts, dtype=np.float64))
        if c.shape[1] < 1:
            raise ValueError("bin_count must be >= 1")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("histogram counts must be finite and nonnegative")
        if self.normalized and not np.allclose(c.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("normalized histogram must sum to 1 per channel")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def bins(self) -> int:
        return self.counts.shape[1]

    @property
    def channels(self) -> int:
        return self.counts.shape[0]

    def normalize(self) -> "Histogram":
        totals = self.counts.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise ValueError("cannot normalize a histogram with an empty channel")
        return Histogram(self.counts / totals, normalized=True)


def bin_indices(img: np.ndarray, k: int) -> np.ndarray:
    """Bin index of every pixel, shape ``(channels, H, W)``; rule ``floor(v*k/256)`` clamped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    img = as_image(img)
    planes = np.stack(channel_planes(img))
    idx = np.floor(planes * k / 256.0).astype(np.int64)
    return np.clip(idx, 0, k - 1)


def bin_counts(img: np.ndarray, s: np.ndarray, k: int) -> Histogram:
    img = as_image(img)
    s = as_mask(s)
    _check_shape(img.shape, s.shape)
    idx = bin_indices(img, k)
    counts = np.stack([np.bincount(plane[s], minlength=k) for plane in idx]).astype(np.float64)
    return Histogram(counts)


# -- distance maps --------------------------------------------------------------

def is_degenerate(s: np.ndarray) -> bool:
    s = as_mask(s)
    return bool(s.all() or not s.any())


def _border_distance(shape) -> np.ndarray:
    # border taken at the half-pixel line just outside the grid
    h, w = shape
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    return np.minimum(np.minimum(ys + 0.5, h - 0.5 - ys), np.minimum(xs + 0.5, w - 0.5 - xs))


def signed_distance(s: np.ndarray) -> np.ndarray:
    """Euclidean distance to the segment boundary, negative inside, positive outside.

    The boundary sits at the midpoints between 4-neighbours carrying different
    labels, so pixels touching the interface get exactly +-0.5. Computed exactly
    by a distance transform on a doubled grid where those midpoints are lattice
    points.

    A mask with no boundary (empty or full) yields the distance to the grid
    border with the appropriate sign and emits :class:`DegenerateMaskWarning`.
    """
    s = as_mask(s)
    h, w = s.shape
    if is_degenerate(s):
        warnings.warn("mask has no boundary; returning border distance", DegenerateMaskWarning,
                      stacklevel=2)
        d = _border_distance(s.shape)
        return -d if s.any() else d

    fine = np.ones((2 * h - 1, 2 * w - 1), dtype=bool)  # True = not a boundary point
    fine[0::2, 1::2] = s[:, 1:] == s[:, :-1]
    fine[1::2, 0::2] = s[1:, :] == s[:-1, :]
    dist = ndimage.distance_transform_edt(fine)[0::2, 0::2] / 2.0
    return np.where(s, -dist, dist)


# -- raster I/O -----------------------------------------------------------------

def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated header")
    return data[start:pos], pos


def _parse_pnm(data: bytes):
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}; only P5/P6 are read")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"malformed header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("image dimensions must be positive")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is supported")
    pos += 1  # single whitespace byte after maxval
    nch = 1 if magic == b"P5" else 3
    need = width * height * nch
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"truncated payload: expected {need} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape(height, width) if nch == 1 else arr.reshape(height, width, 3)


def load_image(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) with maxval 255 as a float64 image."""
    return _parse_pnm(Path(path).read_bytes()).astype(np.float64)


def save_image(path, img: np.ndarray) -> None:
    img = as_image(img)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = data.shape[:2]
    magic = b"P5" if data.ndim == 2 else b"P6"
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + data.tobytes())


def save_mask(path, s: np.ndarray) -> None:
    s = as_mask(s)
    save_image(path, np.where(s, 255.0, 0.0))


def load_mask(path) -> np.ndarray:
    raw = _parse_pnm(Path(path).read_bytes())
    if raw.ndim != 2:
        raise FormatError("mask files must be single-channel PGM")
    return raw >= 128


def save_field(path, f: np.ndarray) -> None:
    """Dump a field as ``SFLD``, u32 width, u32 height, then little-endian f64 row-major."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("field must be 2-D")
    h, w = f.shape
    Path(path).write_bytes(FIELD_MAGIC + struct.pack("<II", w, h) + f.astype("<f8").tobytes())


def load_field(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FIELD_MAGIC:
        raise FormatError("not a field dump (bad magic)")
    w, h = struct.unpack("<II", data[4:12])
    need = 8 * w * h
    if len(data) - 12 < need:
        raise FormatError("truncated field payload")
    return np.frombuffer(data[12:12 + need], dtype="<f8").reshape(h, w).astype(np.float64)
