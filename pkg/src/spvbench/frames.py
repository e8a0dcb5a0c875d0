"""Grayscale raster frames with angular calibration, PGM I/O, and viewport cropping.

Coordinate convention used throughout the package: x grows to the right,
y grows downward (raster order), both in degrees of visual angle, origin at
the frame center.  The center of pixel (row r, col c) sits at

    x = (c + 0.5) / px_per_deg - width_deg / 2
    y = (r + 0.5) / px_per_deg - height_deg / 2
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


def iround(x: float) -> int:
    """Round half away from zero (plain float round() is banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass
class Frame:
    """A grayscale raster with angular calibration.

    pixels is a (height_px, width_px) float array with values in [0, 1],
    row-major, row 0 at the top.
    """

    width_px: int
    height_px: int
    px_per_deg: float
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("frame dimensions must be positive")
        if not (self.px_per_deg > 0 and math.isfinite(self.px_per_deg)):
            raise ValueError("px_per_deg must be a positive finite number")
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (self.height_px, self.width_px):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height_px}x{self.width_px}"
            )
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0,1]: min={lo}, max={hi}")

    @property
    def width_deg(self) -> float:
        return self.width_px / self.px_per_deg

    @property
    def height_deg(self) -> float:
        return self.height_px / self.px_per_deg

    @classmethod
    def filled(cls, width_px: int, height_px: int, px_per_deg: float, value: float = 0.0) -> "Frame":
        return cls(width_px, height_px, px_per_deg,
                   np.full((height_px, width_px), float(value)))

    def x_coords_deg(self) -> np.ndarray:
        """Centers of the pixel columns, in degrees."""
        return (np.arange(self.width_px) + 0.5) / self.px_per_deg - self.width_deg / 2

    def y_coords_deg(self) -> np.ndarray:
        """Centers of the pixel rows, in degrees (downward positive)."""
        return (np.arange(self.height_px) + 0.5) / self.px_per_deg - self.height_deg / 2

    def to_u8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class HeadPose:
    """Viewing direction relative to the source center.

    Positive yaw looks right, positive pitch looks up (toward row 0).
    Roll is intentionally unsupported.
    """

    yaw_deg: float = 0.0
    pitch_deg: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.yaw_deg) and math.isfinite(self.pitch_deg)):
            raise ValueError("pose angles must be finite")


class CropResult(NamedTuple):
    frame: Frame
    clamped: bool


def crop_viewport(source: Frame, pose: HeadPose, fov_deg: float) -> CropResult:
    """Cut the square window of angular size fov_deg centered at the pose.

    The window is offset from the source center by (yaw, pitch) and snapped
    to whole pixels.  A window that would leave the source is clamped to the
    nearest valid position and flagged, so a UI can signal the edge.
    """
    if fov_deg <= 0:
        raise ValueError("fov_deg must be positive")
    side_px = iround(fov_deg * source.px_per_deg)
    if side_px > source.width_px or side_px > source.height_px:
        raise ValueError(
            f"requested fov {fov_deg} deg exceeds source extent "
            f"{source.width_deg:.3f} x {source.height_deg:.3f} deg"
        )
    side_px = max(side_px, 1)

    col0 = iround((source.width_px - side_px) / 2 + pose.yaw_deg * source.px_per_deg)
    row0 = iround((source.height_px - side_px) / 2 - pose.pitch_deg * source.px_per_deg)

    col0_c = min(max(col0, 0), source.width_px - side_px)
    row0_c = min(max(row0, 0), source.height_px - side_px)
    clamped = (col0_c != col0) or (row0_c != row0)

    window = source.pixels[row0_c:row0_c + side_px, col0_c:col0_c + side_px].copy()
    return CropResult(Frame(side_px, side_px, source.px_per_deg, window), clamped)


_PGM_COMMENT_RE = re.compile(rb"#\s*px_per_deg\s*=\s*([0-9.eE+-]+)")


def write_pgm(path, frame: Frame) -> None:
    """Write a binary PGM (P5, maxval 255) with the calibration in a comment."""
    header = (
        b"P5\n"
        + f"# px_per_deg={frame.px_per_deg!r}\n".encode()
        + f"{frame.width_px} {frame.height_px}\n255\n".encode()
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frame.to_u8().tobytes())


def read_pgm(path, px_per_deg: float | None = None) -> Frame:
    """Read a binary PGM.  Calibration comes from the `# px_per_deg=` comment
    unless overridden by the argument."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")

    for m in _PGM_COMMENT_RE.finditer(data[: min(len(data), 4096)]):
        if px_per_deg is None:
            px_per_deg = float(m.group(1))
        break

    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        ch = data[pos:pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) != 3:
        raise ValueError(f"{path}: truncated PGM header")
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(raw)}")
    if px_per_deg is None:
        raise ValueError(f"{path}: no px_per_deg comment and none supplied")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width) / 255.0
    return Frame(width, height, px_per_deg, pixels)
