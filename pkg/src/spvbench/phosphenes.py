"""Phosphene map construction and the percept rendering pipeline.

A phosphene map places N phosphenes on a regular near-square grid spanning a
field of view.  Source frames are sampled into per-phosphene intensities
(mean over each phosphene's receptive window), quantized to a small number of
levels, and rendered as truncated Gaussian splats whose size and brightness
grow with the level.  Everything here is pure and deterministic; values can
be shared across threads read-only.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .frames import CropResult, Frame, HeadPose, crop_viewport, iround

DEFAULT_LEVEL_COUNT = 8
DEFAULT_SRC_PX_PER_DEG = 3.0
MAX_FOV_DEG = 110.0  # display covers about 110 degrees

# sigma as a fraction of grid spacing, so adjacent phosphenes stay separable
SIGMA_SPACING_RATIO = 1.0 / 3.0
# splat size modulation: sigma_eff = sigma * (MIN + (1-MIN) * level/(L-1))
SIZE_MODULATION_MIN = 0.5
# Gaussian support cutoff, in units of sigma_eff; tail beyond 3 sigma is
# below 1.2% of peak
TRUNCATION_SIGMAS = 3.0


@dataclass(frozen=True)
class Condition:
    """An experiment condition: phosphene count x field of view."""

    phosphene_count: int
    fov_deg: float
    label: str | None = None

    def __post_init__(self):
        if self.phosphene_count < 1:
            raise ValueError("phosphene_count must be >= 1")
        if not (0 < self.fov_deg <= MAX_FOV_DEG):
            raise ValueError(f"fov_deg must be in (0, {MAX_FOV_DEG}]")

    @property
    def name(self) -> str:
        return self.label or f"{self.phosphene_count}@{self.fov_deg:g}"


def paper_conditions() -> dict[str, Condition]:
    """The six standard conditions C1..C6 (FOV-resolution pairs)."""
    return {
        "C1": Condition(100, 10.0, "C1"),
        "C2": Condition(1000, 10.0, "C2"),
        "C3": Condition(100, 20.0, "C3"),
        "C4": Condition(1000, 20.0, "C4"),
        "C5": Condition(100, 50.0, "C5"),
        "C6": Condition(1000, 50.0, "C6"),
    }


def resolve_condition(label: str) -> Condition:
    """Turn a condition label (C1..C6 or 'count@fov') into a Condition."""
    table = paper_conditions()
    if label in table:
        return table[label]
    if "@" in label:
        count_s, fov_s = label.split("@", 1)
        return Condition(int(count_s), float(fov_s), label)
    raise ValueError(f"unknown condition label: {label!r}")


@dataclass(frozen=True)
class Phosphene:
    center_deg: tuple[float, float]  # (x, y)
    sigma_deg: float
    window_deg: float


@dataclass
class PhospheneMap:
    """Geometric layout of phosphene centers and receptive windows."""

    condition: Condition
    grid_rows: int
    grid_cols: int
    spacing_deg: float
    sigma_deg: float
    window_deg: float
    # (N, 2) array of (x, y) centers in degrees, row-major over kept cells
    centers_deg: np.ndarray = field(repr=False)
    # (grid_rows, grid_cols) int array: phosphene index, or -1 for trimmed cells
    cell_index: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.centers_deg)

    @property
    def phosphenes(self) -> list[Phosphene]:
        return [
            Phosphene((float(x), float(y)), self.sigma_deg, self.window_deg)
            for x, y in self.centers_deg
        ]

    def geometry_key(self) -> tuple:
        return (self.grid_rows, self.grid_cols, self.spacing_deg,
                self.condition.phosphene_count, self.condition.fov_deg)


def _grid_shape(count: int) -> tuple[int, int]:
    rows = round(math.sqrt(count))
    rows = max(rows, 1)
    cols = math.ceil(count / rows)
    return rows, cols


@functools.lru_cache(maxsize=128)
def _build_map_cached(count: int, fov_deg: float) -> PhospheneMap:
    rows, cols = _grid_shape(count)
    spacing = fov_deg / max(rows, cols)

    keep = np.ones((rows, cols), dtype=bool)
    surplus = rows * cols - count
    if surplus:
        # trim the cells farthest from the grid center (the corners),
        # ties broken by row-major index
        rr, cc = np.mgrid[0:rows, 0:cols]
        dist = np.hypot(rr - (rows - 1) / 2.0, cc - (cols - 1) / 2.0).ravel()
        order = np.lexsort((np.arange(dist.size), -dist))
        keep.ravel()[order[:surplus]] = False

    cell_index = np.full((rows, cols), -1, dtype=np.int64)
    cell_index[keep] = np.arange(count)

    rr, cc = np.nonzero(keep)
    xs = (cc - (cols - 1) / 2.0) * spacing
    ys = (rr - (rows - 1) / 2.0) * spacing
    centers = np.column_stack([xs, ys])

    return PhospheneMap(
        condition=Condition(count, fov_deg),
        grid_rows=rows,
        grid_cols=cols,
        spacing_deg=spacing,
        sigma_deg=spacing * SIGMA_SPACING_RATIO,
        window_deg=spacing,
        centers_deg=centers,
        cell_index=cell_index,
    )


def build_phosphene_map(condition: Condition) -> PhospheneMap:
    """Place exactly condition.phosphene_count phosphenes on a near-square grid.

    rows = round(sqrt(N)), cols = ceil(N / rows); when rows*cols exceeds N the
    surplus cells are trimmed symmetrically from the four corners.  The grid
    spans the FOV along its wider axis; spacing, receptive window, and sigma
    all derive from fov / max(rows, cols).
    """
    return _build_map_cached(condition.phosphene_count, condition.fov_deg)


def pixels_per_phosphene(condition: Condition, src_px_per_deg: float = DEFAULT_SRC_PX_PER_DEG) -> int:
    """Source pixels averaged into one phosphene: round(window * px_per_deg)^2, at least 1.

    With the default 3 px/deg calibration this reproduces the published
    densities for the 10 and 20 degree fields (9, 36, 1, 4); the 50 degree
    rows of that table do not follow quadratic FOV scaling and come out as
    225 and 25 here.
    """
    if src_px_per_deg <= 0:
        raise ValueError("src_px_per_deg must be positive")
    rows, cols = _grid_shape(condition.phosphene_count)
    window = condition.fov_deg / max(rows, cols)
    side = iround(window * src_px_per_deg)
    return max(1, side * side)


@dataclass
class PhospheneActivation:
    """Per-phosphene quantized intensity levels in [0, level_count-1]."""

    levels: np.ndarray
    level_count: int = DEFAULT_LEVEL_COUNT

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=np.int64)
        if self.level_count < 2:
            raise ValueError("level_count must be >= 2")
        if self.levels.size and (self.levels.min() < 0 or self.levels.max() >= self.level_count):
            raise ValueError("levels outside [0, level_count-1]")


@functools.lru_cache(maxsize=64)
def _sampling_plan(width_px, height_px, px_per_deg, rows, cols, spacing, count, fov_deg):
    """Precompute the pixel -> phosphene assignment for sample().

    Returns (flat pixel->phosphene index array with -1 for unassigned,
    per-phosphene pixel counts, nearest-pixel fallback flat indices).
    """
    pmap = _build_map_cached(count, fov_deg)
    width_deg = width_px / px_per_deg
    height_deg = height_px / px_per_deg
    x = (np.arange(width_px) + 0.5) / px_per_deg - width_deg / 2
    y = (np.arange(height_px) + 0.5) / px_per_deg - height_deg / 2

    x0 = -(cols - 1) / 2.0 * spacing  # first column center
    y0 = -(rows - 1) / 2.0 * spacing
    cidx = np.floor((x - x0 + spacing / 2) / spacing).astype(np.int64)
    ridx = np.floor((y - y0 + spacing / 2) / spacing).astype(np.int64)
    cvalid = (cidx >= 0) & (cidx < cols)
    rvalid = (ridx >= 0) & (ridx < rows)

    assign = np.full((height_px, width_px), -1, dtype=np.int64)
    rv, cv = np.nonzero(rvalid[:, None] & cvalid[None, :])
    assign[rv, cv] = pmap.cell_index[ridx[rv], cidx[cv]]
    flat = assign.ravel()

    counts = np.bincount(flat[flat >= 0], minlength=len(pmap)).astype(np.int64)

    # nearest pixel per phosphene, for windows that catch no pixel center
    px_col = np.clip(np.rint(
        (pmap.centers_deg[:, 0] + width_deg / 2) * px_per_deg - 0.5), 0, width_px - 1).astype(np.int64)
    px_row = np.clip(np.rint(
        (pmap.centers_deg[:, 1] + height_deg / 2) * px_per_deg - 0.5), 0, height_px - 1).astype(np.int64)
    nearest = px_row * width_px + px_col
    return flat, counts, nearest


def sample(source: Frame, pmap: PhospheneMap) -> np.ndarray:
    """Mean source intensity inside each phosphene's receptive window.

    A pixel belongs to a window when its center falls inside it.  Windows
    that catch no pixel center (possible when the window is narrower than a
    pixel) fall back to the pixel nearest the phosphene center.
    """
    fov = pmap.condition.fov_deg
    eps = 1e-9
    if source.width_deg < fov - eps or source.height_deg < fov - eps:
        raise ValueError(
            f"frame ({source.width_deg:.3f} x {source.height_deg:.3f} deg) "
            f"does not cover the map fov ({fov} deg)"
        )
    flat, counts, nearest = _sampling_plan(
        source.width_px, source.height_px, source.px_per_deg,
        pmap.grid_rows, pmap.grid_cols, pmap.spacing_deg,
        pmap.condition.phosphene_count, pmap.condition.fov_deg)

    values = source.pixels.ravel()
    inside = flat >= 0
    sums = np.bincount(flat[inside], weights=values[inside], minlength=len(pmap))
    out = np.where(counts > 0, sums / np.maximum(counts, 1), values[nearest])
    return out


def quantize(samples: np.ndarray, level_count: int = DEFAULT_LEVEL_COUNT) -> PhospheneActivation:
    """Uniform-bin quantizer: level = min(floor(sample * L), L - 1)."""
    if level_count < 2:
        raise ValueError("level_count must be >= 2")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size and (samples.min() < 0.0 or samples.max() > 1.0):
        raise ValueError("samples must lie in [0, 1]")
    levels = np.minimum(np.floor(samples * level_count), level_count - 1).astype(np.int64)
    return PhospheneActivation(levels, level_count)


@functools.lru_cache(maxsize=4096)
def _splat_kernel(sigma_px: float, amp: float, frac_x: float, frac_y: float):
    """Truncated Gaussian splat sampled at pixel centers.

    frac_x/frac_y are the phosphene center's position within its pixel
    (cx - floor(cx)), so a kernel can be shared by every phosphene with the
    same sub-pixel alignment.  Pixel floor(cx) + j has center offset
    j + 0.5 - frac_x from the splat center.  Returns (kernel array,
    col offset j_lo of kernel[:, 0], row offset k_lo of kernel[0, :]).
    """
    radius_px = TRUNCATION_SIGMAS * sigma_px
    j_lo = math.ceil(frac_x - 0.5 - radius_px)
    j_hi = math.floor(frac_x - 0.5 + radius_px)
    k_lo = math.ceil(frac_y - 0.5 - radius_px)
    k_hi = math.floor(frac_y - 0.5 + radius_px)
    if j_hi < j_lo or k_hi < k_lo:
        return np.zeros((0, 0)), 0, 0
    dx = np.arange(j_lo, j_hi + 1) + 0.5 - frac_x
    dy = np.arange(k_lo, k_hi + 1) + 0.5 - frac_y
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    kern = amp * np.exp(-d2 / (2.0 * sigma_px * sigma_px))
    kern[d2 > radius_px * radius_px] = 0.0
    return kern, j_lo, k_lo


@functools.lru_cache(maxsize=32)
def _render_plan(count: int, fov_deg: float, out_px_per_deg: float, level_count: int):
    """Pre-resolved splats for every (level, phosphene) pair.

    Entries are either (kernel_view, (row_slice, col_slice)) ready for a
    single np.maximum, ("px", row, col, amp) for splats narrower than a
    pixel, or None when the splat misses the frame.  Building the plan once
    per map/resolution moves all per-phosphene geometry out of the frame
    loop.
    """
    pmap = _build_map_cached(count, fov_deg)
    side = max(1, iround(fov_deg * out_px_per_deg))
    cx = (pmap.centers_deg[:, 0] + fov_deg / 2) * out_px_per_deg
    cy = (pmap.centers_deg[:, 1] + fov_deg / 2) * out_px_per_deg
    base_c = np.floor(cx).astype(np.int64)
    base_r = np.floor(cy).astype(np.int64)

    cells: list = [None]  # level 0 renders nothing
    for lv in range(1, level_count):
        rel = lv / (level_count - 1)
        sigma_px = round(pmap.sigma_deg * out_px_per_deg
                         * (SIZE_MODULATION_MIN + (1 - SIZE_MODULATION_MIN) * rel), 9)
        entries = []
        for i in range(len(pmap)):
            fx = round(float(cx[i]) - float(base_c[i]), 9)
            fy = round(float(cy[i]) - float(base_r[i]), 9)
            kern, j_lo, k_lo = _splat_kernel(sigma_px, rel, fx, fy)
            if kern.size == 0:
                r, c = int(base_r[i]), int(base_c[i])
                entries.append(("px", r, c, rel) if 0 <= r < side and 0 <= c < side
                               else None)
                continue
            c0 = int(base_c[i]) + j_lo
            r0 = int(base_r[i]) + k_lo
            kh, kw = kern.shape
            rlo, rhi = max(r0, 0), min(r0 + kh, side)
            clo, chi = max(c0, 0), min(c0 + kw, side)
            if rlo >= rhi or clo >= chi:
                entries.append(None)
                continue
            sub = kern[rlo - r0:rhi - r0, clo - c0:chi - c0]
            entries.append((sub, (slice(rlo, rhi), slice(clo, chi))))
        cells.append(entries)
    return side, cells


def render(pmap: PhospheneMap, activation: PhospheneActivation,
           out_px_per_deg: float) -> Frame:
    """Draw each active phosphene as a radial Gaussian splat on black.

    A level-l splat peaks at l/(L-1) and spreads sigma * (0.5 + 0.5*l/(L-1)),
    truncated at 3 sigma_eff; overlapping splats combine by per-pixel maximum.
    Level 0 draws nothing.
    """
    if out_px_per_deg <= 0:
        raise ValueError("out_px_per_deg must be positive")
    if len(activation.levels) != len(pmap):
        raise ValueError("activation is not paired with this map")

    side, cells = _render_plan(pmap.condition.phosphene_count,
                               pmap.condition.fov_deg, out_px_per_deg,
                               activation.level_count)
    out = np.zeros((side, side))
    for i, lv in enumerate(activation.levels.tolist()):
        if lv == 0:
            continue
        entry = cells[lv][i]
        if entry is None:
            continue
        if len(entry) == 2:
            kern, dst = entry
            sub = out[dst]
            np.maximum(sub, kern, out=sub)
        else:
            _, r, c, amp = entry
            if out[r, c] < amp:
                out[r, c] = amp

    np.clip(out, 0.0, 1.0, out=out)
    return Frame(side, side, out_px_per_deg, out)


def phosphenize(source: Frame, pose: HeadPose, condition: Condition,
                out_px_per_deg: float,
                level_count: int = DEFAULT_LEVEL_COUNT) -> Frame:
    """Full pipeline: crop the viewport, sample, quantize, render.

    Pure function of its inputs; calling it twice with the same arguments
    yields bit-identical output.
    """
    pmap = build_phosphene_map(condition)
    cropped: CropResult = crop_viewport(source, pose, condition.fov_deg)
    samples = sample(cropped.frame, pmap)
    activation = quantize(samples, level_count)
    return render(pmap, activation, out_px_per_deg)
