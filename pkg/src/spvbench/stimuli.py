"""The five stimulus families: parametric specs, event timelines, rasterization.

Each generator returns (StimulusSpec, StimulusTimeline, CorrectResponse).
Specs are fully deterministic in (params, seed); frames are rasterized on
demand by stimulus_frames() so the session loop can feed any instant of the
trial into the phosphene pipeline.

Stimuli are bright-on-dark because phosphenes only encode brightness.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .frames import Frame, iround


class Key(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"


# fixed order used for deterministic tie-breaking
ORIENTATIONS = (Key.UP, Key.DOWN, Key.LEFT, Key.RIGHT)

# direction unit vectors in the (x right, y down) frame convention
_DIR_VEC = {
    Key.UP: (0.0, -1.0),
    Key.DOWN: (0.0, 1.0),
    Key.LEFT: (-1.0, 0.0),
    Key.RIGHT: (1.0, 0.0),
}


class TestFamily(str, enum.Enum):
    __test__ = False  # not a pytest class, despite the name

    LIGHT = "light"
    TIME = "time"
    LOCATION = "location"
    MOTION = "motion"
    LANDOLT = "landolt"


# stimulus canvas defaults; sources are larger than any condition FOV so the
# viewport can pan
FRAME_EXTENT_DEG = 60.0
FRAME_PX_PER_DEG = 3.0

DEFAULT_TIMING = {
    "pre_tone_ms": 500,
    "fixation_ms": 1500,       # location test shows the disc this long before the tone
    "tone_to_stim_ms": 200,
    "flash_ms": 100,
    "gap_ms": 300,
    "response_window_ms": 10_000,
}

# stimulus geometry defaults (degrees)
LIGHT_DISC_RADIUS_DEG = 20.0
FIXATION_DISC_RADIUS_DEG = 1.5
WEDGE_INNER_RADIUS_DEG = 2.5
WEDGE_OUTER_RADIUS_DEG = 4.5
WEDGE_HALF_ANGLE_DEG = 15.0    # 30 degree sector
HEX_ELEMENT_DEG = 1.0
MOTION_SPEED_DEG_S = 5.0


@dataclass(frozen=True)
class StimulusSpec:
    family: TestFamily
    params: dict
    duration_ms: dict
    rng_seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "family": self.family.value,
                "params": self.params,
                "duration_ms": self.duration_ms,
                "rng_seed": self.rng_seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "StimulusSpec":
        doc = json.loads(text)
        spec = cls(
            family=TestFamily(doc["family"]),
            params=doc["params"],
            duration_ms=doc["duration_ms"],
            rng_seed=int(doc["rng_seed"]),
        )
        _validate_params(spec)
        return spec


class EventKind(str, enum.Enum):
    TONE = "tone"
    FRAME = "frame"
    RESPONSE_WINDOW_OPEN = "response_window_open"
    RESPONSE_WINDOW_CLOSE = "response_window_close"


@dataclass(frozen=True)
class TimelineEvent:
    t_ms: int
    kind: EventKind
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StimulusTimeline:
    """Ordered trial events; frames are addressed by index in the payload."""

    events: tuple[TimelineEvent, ...]
    imperative_onset_ms: int

    def __post_init__(self):
        times = [e.t_ms for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        tones = [e for e in self.events if e.kind == EventKind.TONE]
        if len(tones) != 1:
            raise ValueError("timeline must contain exactly one tone")
        if tones[0].t_ms >= self.imperative_onset_ms:
            raise ValueError("the tone must precede the imperative stimulus")

    @property
    def response_window(self) -> tuple[int, int]:
        t_open = next(e.t_ms for e in self.events
                      if e.kind == EventKind.RESPONSE_WINDOW_OPEN)
        t_close = next(e.t_ms for e in self.events
                       if e.kind == EventKind.RESPONSE_WINDOW_CLOSE)
        return t_open, t_close

    @property
    def end_ms(self) -> int:
        return self.events[-1].t_ms

    def frame_index_at(self, t_ms: float) -> int:
        idx = 0
        for e in self.events:
            if e.t_ms > t_ms:
                break
            if e.kind == EventKind.FRAME:
                idx = e.payload["frame"]
        return idx


@dataclass(frozen=True)
class CorrectResponse:
    key: Key


def correct_response(spec: StimulusSpec) -> CorrectResponse:
    """The protocol's correct key: light left / no light right, one flash
    left / two right, directional tests use the direction itself."""
    p = spec.params
    if spec.family == TestFamily.LIGHT:
        return CorrectResponse(Key.LEFT if p["present"] else Key.RIGHT)
    if spec.family == TestFamily.TIME:
        return CorrectResponse(Key.LEFT if p["flash_count"] == 1 else Key.RIGHT)
    if spec.family in (TestFamily.LOCATION, TestFamily.MOTION):
        return CorrectResponse(Key(p["direction"]))
    if spec.family == TestFamily.LANDOLT:
        return CorrectResponse(Key(p["orientation"]))
    raise ValueError(f"unknown family {spec.family}")


def merge_timing(overrides: dict | None = None) -> dict:
    timing = dict(DEFAULT_TIMING)
    if overrides:
        unknown = set(overrides) - set(DEFAULT_TIMING)
        if unknown:
            raise ValueError(f"unknown timing keys: {sorted(unknown)}")
        timing.update({k: int(v) for k, v in overrides.items()})
    return timing


def _validate_params(spec: StimulusSpec) -> None:
    p = spec.params
    fam = spec.family
    if fam == TestFamily.LIGHT:
        if not isinstance(p.get("present"), bool):
            raise ValueError("light stimulus needs boolean 'present'")
    elif fam == TestFamily.TIME:
        if p.get("flash_count") not in (1, 2):
            raise ValueError("flash_count must be 1 or 2")
        if p["flash_count"] == 2 and p.get("gap_ms", 0) <= 0:
            raise ValueError("two flashes need gap_ms > 0")
    elif fam in (TestFamily.LOCATION, TestFamily.MOTION):
        if p.get("direction") not in {k.value for k in Key}:
            raise ValueError("direction must be one of up/down/left/right")
        if fam == TestFamily.MOTION and not p.get("speed_deg_s", 0) > 0:
            raise ValueError("speed_deg_s must be positive")
    elif fam == TestFamily.LANDOLT:
        if p.get("orientation") not in {k.value for k in Key}:
            raise ValueError("orientation must be one of up/down/left/right")
        if not p.get("gap_arcmin", 0) > 0:
            raise ValueError("gap_arcmin must be positive")
        diameter_deg = 5 * p["gap_arcmin"] / 60.0
        if diameter_deg > p.get("extent_deg", FRAME_EXTENT_DEG):
            raise ValueError(
                f"ring diameter {diameter_deg:.2f} deg exceeds the "
                f"{p.get('extent_deg', FRAME_EXTENT_DEG)} deg stimulus frame")


def _base_events(timing: dict, *, pre_ms: int) -> tuple[list[TimelineEvent], int]:
    onset = pre_ms + timing["tone_to_stim_ms"]
    events = [
        TimelineEvent(0, EventKind.FRAME, {"frame": 0}),
        TimelineEvent(pre_ms, EventKind.TONE),
    ]
    return events, onset


def _close_events(events, onset, timing):
    t_open = onset + 1
    events.append(TimelineEvent(t_open, EventKind.RESPONSE_WINDOW_OPEN))
    events.append(TimelineEvent(t_open + timing["response_window_ms"],
                                EventKind.RESPONSE_WINDOW_CLOSE))
    return StimulusTimeline(tuple(sorted(events, key=lambda e: e.t_ms)), onset)


def gen_light_perception(present: bool, seed: int, timing: dict | None = None):
    """Light appears (or not) after the warning tone; left iff present."""
    timing = merge_timing(timing)
    spec = StimulusSpec(
        TestFamily.LIGHT,
        {"present": bool(present),
         "extent_deg": FRAME_EXTENT_DEG, "px_per_deg": FRAME_PX_PER_DEG,
         "disc_radius_deg": LIGHT_DISC_RADIUS_DEG},
        timing, seed)
    events, onset = _base_events(timing, pre_ms=timing["pre_tone_ms"])
    if present:
        events.append(TimelineEvent(onset, EventKind.FRAME, {"frame": 1}))
    timeline = _close_events(events, onset, timing)
    return spec, timeline, correct_response(spec)


def gen_time_resolution(flash_count: int, gap_ms: int | None = None,
                        seed: int = 0, timing: dict | None = None):
    """One or two flashes after the tone; left for one, right for two."""
    timing = merge_timing(timing)
    gap = timing["gap_ms"] if gap_ms is None else int(gap_ms)
    spec = StimulusSpec(
        TestFamily.TIME,
        {"flash_count": int(flash_count), "gap_ms": gap,
         "extent_deg": FRAME_EXTENT_DEG, "px_per_deg": FRAME_PX_PER_DEG,
         "disc_radius_deg": LIGHT_DISC_RADIUS_DEG},
        timing, seed)
    _validate_params(spec)
    events, onset = _base_events(timing, pre_ms=timing["pre_tone_ms"])
    flash = timing["flash_ms"]
    events.append(TimelineEvent(onset, EventKind.FRAME, {"frame": 1}))
    events.append(TimelineEvent(onset + flash, EventKind.FRAME, {"frame": 0}))
    if flash_count == 2:
        t2 = onset + flash + gap
        events.append(TimelineEvent(t2, EventKind.FRAME, {"frame": 1}))
        events.append(TimelineEvent(t2 + flash, EventKind.FRAME, {"frame": 0}))
    timeline = _close_events(events, onset, timing)
    return spec, timeline, correct_response(spec)


def gen_light_location(direction: Key | str, seed: int = 0,
                       timing: dict | None = None):
    """Fixation disc, then tone and a wedge pointing the given way."""
    timing = merge_timing(timing)
    direction = Key(direction)
    spec = StimulusSpec(
        TestFamily.LOCATION,
        {"direction": direction.value,
         "extent_deg": FRAME_EXTENT_DEG, "px_per_deg": FRAME_PX_PER_DEG,
         "disc_radius_deg": FIXATION_DISC_RADIUS_DEG,
         "wedge_inner_deg": WEDGE_INNER_RADIUS_DEG,
         "wedge_outer_deg": WEDGE_OUTER_RADIUS_DEG,
         "wedge_half_angle_deg": WEDGE_HALF_ANGLE_DEG},
        timing, seed)
    events, onset = _base_events(timing, pre_ms=timing["fixation_ms"])
    events.append(TimelineEvent(onset, EventKind.FRAME, {"frame": 1}))
    timeline = _close_events(events, onset, timing)
    return spec, timeline, correct_response(spec)


def gen_motion(direction: Key | str, element_deg: float = HEX_ELEMENT_DEG,
               speed_deg_per_s: float = MOTION_SPEED_DEG_S, seed: int = 0,
               timing: dict | None = None):
    """Random hexagonal light/dark pattern that starts drifting after the tone."""
    timing = merge_timing(timing)
    direction = Key(direction)
    spec = StimulusSpec(
        TestFamily.MOTION,
        {"direction": direction.value, "element_deg": float(element_deg),
         "speed_deg_s": float(speed_deg_per_s),
         "extent_deg": FRAME_EXTENT_DEG, "px_per_deg": FRAME_PX_PER_DEG},
        timing, seed)
    _validate_params(spec)
    events, onset = _base_events(timing, pre_ms=timing["pre_tone_ms"])
    events.append(TimelineEvent(onset, EventKind.FRAME, {"frame": 1}))
    timeline = _close_events(events, onset, timing)
    return spec, timeline, correct_response(spec)


def gen_landolt_c(gap_arcmin: float, orientation: Key | str,
                  px_per_deg: float = FRAME_PX_PER_DEG, seed: int = 0,
                  timing: dict | None = None,
                  extent_deg: float = FRAME_EXTENT_DEG):
    """Landolt ring: outer diameter 5x gap, stroke = gap, gap at the
    compass orientation."""
    timing = merge_timing(timing)
    orientation = Key(orientation)
    spec = StimulusSpec(
        TestFamily.LANDOLT,
        {"gap_arcmin": float(gap_arcmin), "orientation": orientation.value,
         "extent_deg": float(extent_deg), "px_per_deg": float(px_per_deg)},
        timing, seed)
    _validate_params(spec)
    events, onset = _base_events(timing, pre_ms=timing["pre_tone_ms"])
    events.append(TimelineEvent(onset, EventKind.FRAME, {"frame": 1}))
    timeline = _close_events(events, onset, timing)
    return spec, timeline, correct_response(spec)


GENERATORS = {
    TestFamily.LIGHT: gen_light_perception,
    TestFamily.TIME: gen_time_resolution,
    TestFamily.LOCATION: gen_light_location,
    TestFamily.MOTION: gen_motion,
    TestFamily.LANDOLT: gen_landolt_c,
}


# ---------------------------------------------------------------------------
# rasterization


@functools.lru_cache(maxsize=16)
def _coord_grids(extent_deg: float, ppd: float):
    side = iround(extent_deg * ppd)
    c = (np.arange(side) + 0.5) / ppd - extent_deg / 2
    X, Y = np.meshgrid(c, c)
    return side, X, Y


def _disc(extent_deg, ppd, radius_deg):
    side, X, Y = _coord_grids(extent_deg, ppd)
    return (X * X + Y * Y <= radius_deg * radius_deg).astype(np.float64)


def _wedge_frame(p):
    extent, ppd = p["extent_deg"], p["px_per_deg"]
    side, X, Y = _coord_grids(extent, ppd)
    img = _disc(extent, ppd, p["disc_radius_deg"])
    ux, uy = _DIR_VEC[Key(p["direction"])]
    r = np.hypot(X, Y)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(r > 0, (X * ux + Y * uy) / np.where(r > 0, r, 1.0), 0.0)
    sector = cos >= math.cos(math.radians(p["wedge_half_angle_deg"]))
    ring = (r > p["wedge_inner_deg"]) & (r <= p["wedge_outer_deg"])
    img[sector & ring] = 1.0
    return img


def _landolt_frame(p):
    extent, ppd = p["extent_deg"], p["px_per_deg"]
    side, X, Y = _coord_grids(extent, ppd)
    gap_deg = p["gap_arcmin"] / 60.0
    r_outer = 2.5 * gap_deg
    r_inner = 1.5 * gap_deg
    img = np.zeros((side, side))
    # the ring only touches its bounding box; keep the grid work there
    c = X[0]
    lo = int(np.searchsorted(c, -r_outer - 2.0 / ppd))
    hi = int(np.searchsorted(c, r_outer + 2.0 / ppd))
    x = X[lo:hi, lo:hi]
    y = Y[lo:hi, lo:hi]
    r2 = x * x + y * y
    ring = (r2 <= r_outer * r_outer) & (r2 >= r_inner * r_inner)
    ux, uy = _DIR_VEC[Key(p["orientation"])]
    along = x * ux + y * uy          # distance toward the gap side
    across = x * uy - y * ux         # perpendicular offset
    ring &= ~((along > 0) & (np.abs(across) <= gap_deg / 2))
    img[lo:hi, lo:hi] = ring
    return img


@functools.lru_cache(maxsize=64)
def _hex_pattern_cached(extent_deg, ppd, element_deg, seed):
    """Nearest-center Voronoi raster of a hexagonal lattice with random
    light/dark cells."""
    side, X, Y = _coord_grids(extent_deg, ppd)
    a = element_deg
    dy = a * math.sqrt(3) / 2
    nrows = int(math.ceil(extent_deg / dy)) + 4
    ncols = int(math.ceil(extent_deg / a)) + 4
    bits = np.random.default_rng(seed).integers(0, 2, size=(nrows, ncols))

    k0 = np.floor(Y / dy + nrows / 2).astype(np.int64)
    best_val = np.zeros_like(X)
    best_d2 = np.full_like(X, np.inf)
    for dk in (0, 1):
        k = np.clip(k0 + dk, 0, nrows - 1)
        off = (k % 2) * (a / 2)
        m0 = np.floor((X - off + ncols / 2 * a) / a).astype(np.int64)
        for dm in (0, 1):
            m = np.clip(m0 + dm, 0, ncols - 1)
            d2 = (X - ((m - ncols / 2) * a + off)) ** 2 + (Y - (k - nrows / 2) * dy) ** 2
            better = d2 < best_d2
            best_d2[better] = d2[better]
            best_val[better] = bits[k[better], m[better]]
    return best_val


def _motion_base(p, seed):
    return _hex_pattern_cached(p["extent_deg"], p["px_per_deg"],
                               p["element_deg"], seed)


_ROLL = {
    Key.RIGHT: (1, +1),
    Key.LEFT: (1, -1),
    Key.DOWN: (0, +1),
    Key.UP: (0, -1),
}


def stimulus_frames(spec: StimulusSpec, timeline: StimulusTimeline, t_ms: float) -> Frame:
    """Rasterize the source frame visible at time t.  Pure function."""
    p = spec.params
    extent, ppd = p["extent_deg"], p["px_per_deg"]
    idx = timeline.frame_index_at(t_ms)
    fam = spec.family

    if fam in (TestFamily.LIGHT, TestFamily.TIME):
        img = _disc(extent, ppd, p["disc_radius_deg"]) if idx == 1 \
            else np.zeros(_coord_grids(extent, ppd)[1].shape)
    elif fam == TestFamily.LOCATION:
        img = _wedge_frame(p) if idx == 1 \
            else _disc(extent, ppd, p["disc_radius_deg"])
    elif fam == TestFamily.LANDOLT:
        img = _landolt_frame(p) if idx == 1 \
            else np.zeros(_coord_grids(extent, ppd)[1].shape)
    elif fam == TestFamily.MOTION:
        base = _motion_base(p, spec.rng_seed)
        if idx == 1:
            dt_s = (t_ms - timeline.imperative_onset_ms) / 1000.0
            shift_px = iround(p["speed_deg_s"] * dt_s * ppd)
            axis, sign = _ROLL[Key(p["direction"])]
            img = np.roll(base, sign * shift_px, axis=axis)
        else:
            img = base.copy()  # keep the lru-cached pattern unaliased
    else:
        raise ValueError(f"unknown family {fam}")

    side = img.shape[0]
    return Frame(side, side, ppd, np.ascontiguousarray(img, dtype=np.float64))
