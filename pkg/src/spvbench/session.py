"""Experiment blocks: trial sequencing, responders, summaries, trial logs.

A block presents n trials of one test family under one condition.  The
responder sees only percepts (phosphenized views of the stimulus) through a
TrialView and answers with a key and a reaction time relative to the
imperative onset; the session records correctness against the coded answer.
Everything is driven by one seed, so a block with a deterministic responder
reproduces bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .acuity import Staircase, StepRule, estimate_acuity, gap_from_logmar, ideal_observer
from .frames import Frame, HeadPose
from .phosphenes import Condition, build_phosphene_map, phosphenize
from .stimuli import (
    GENERATORS,
    ORIENTATIONS,
    EventKind,
    Key,
    StimulusSpec,
    StimulusTimeline,
    TestFamily,
    correct_response,
    gen_landolt_c,
    gen_light_location,
    gen_light_perception,
    gen_motion,
    gen_time_resolution,
    stimulus_frames,
)

RESPONSE_WINDOW_MS = 10_000
TIMEOUT = "timeout"


class ChannelClosed(Exception):
    """Raised by live responders when the client goes away mid-block."""


@dataclass
class TrialRecord:
    session_id: str
    test_family: TestFamily
    condition_label: str
    trial_index: int
    stimulus: StimulusSpec
    response: str  # key value or "timeout"
    correct: bool
    reaction_time_ms: int | None

    def __post_init__(self):
        has_rt = self.reaction_time_ms is not None
        if has_rt == (self.response == TIMEOUT):
            raise ValueError("reaction time must be present iff a key was pressed")
        if has_rt and self.reaction_time_ms < 0:
            raise ValueError("negative reaction time")


@dataclass
class BlockSummary:
    performance_pct: float
    mean_rt_s: float | None
    sd_rt_s: float | None
    n_trials: int

    def as_dict(self) -> dict:
        return {"performance_pct": self.performance_pct,
                "mean_rt_s": self.mean_rt_s, "sd_rt_s": self.sd_rt_s,
                "n_trials": self.n_trials}


@dataclass
class BlockResult:
    records: list[TrialRecord]
    aborted: bool = False


class TrialView:
    """What a responder is allowed to see: the stimulus timeline and
    phosphenized percepts, never the coded answer."""

    def __init__(self, spec: StimulusSpec, timeline: StimulusTimeline,
                 condition: Condition, pose: HeadPose, out_px_per_deg: float):
        self.spec = spec
        self.timeline = timeline
        self.condition = condition
        self.pose = pose
        self.out_px_per_deg = out_px_per_deg

    @property
    def onset_ms(self) -> int:
        return self.timeline.imperative_onset_ms

    @property
    def window_close_ms(self) -> int:
        return self.timeline.response_window[1]

    def source_at(self, t_ms: float) -> Frame:
        return stimulus_frames(self.spec, self.timeline, t_ms)

    def percept_at(self, t_ms: float) -> Frame:
        return phosphenize(self.source_at(t_ms), self.pose, self.condition,
                           self.out_px_per_deg)


class TimeoutResponder:
    """Never answers; every trial times out."""

    def respond(self, view: TrialView):
        return None, None


class ScriptedResponder:
    """Plays back a fixed key sequence with a fixed latency."""

    def __init__(self, keys, rt_ms: int = 500):
        self._keys = list(keys)
        self._i = 0
        self.rt_ms = rt_ms

    def respond(self, view: TrialView):
        if self._i >= len(self._keys):
            raise ChannelClosed("script exhausted")
        key = self._keys[self._i]
        self._i += 1
        return key, self.rt_ms


_MOTOR_LATENCY_MS = 250


class IdealResponder:
    """Template/feature decision rules per family, driven only by percepts.

    Deterministic: no internal randomness, so blocks replay exactly.
    """

    def __init__(self, bright_threshold: float = 1e-6):
        self.bright_threshold = bright_threshold

    def respond(self, view: TrialView):
        fam = view.spec.family
        if fam == TestFamily.LIGHT:
            return self._light(view)
        if fam == TestFamily.TIME:
            return self._time(view)
        if fam == TestFamily.LOCATION:
            return self._location(view)
        if fam == TestFamily.MOTION:
            return self._motion(view)
        if fam == TestFamily.LANDOLT:
            return self._landolt(view)
        raise ValueError(f"unknown family {fam}")

    def _light(self, view):
        tone_t = next(e.t_ms for e in view.timeline.events
                      if e.kind == EventKind.TONE)
        before = view.percept_at(tone_t).pixels.mean()
        probe = view.onset_ms + 100
        after = view.percept_at(probe).pixels.mean()
        key = Key.LEFT if after - before > self.bright_threshold else Key.RIGHT
        return key, probe - view.onset_ms + _MOTOR_LATENCY_MS

    def _time(self, view):
        flash = view.spec.duration_ms["flash_ms"]
        gap = view.spec.params["gap_ms"]
        probe1 = view.onset_ms + flash // 2
        probe2 = view.onset_ms + flash + gap + flash // 2
        lit1 = view.percept_at(probe1).pixels.mean() > self.bright_threshold
        lit2 = view.percept_at(probe2).pixels.mean() > self.bright_threshold
        key = Key.RIGHT if (lit1 and lit2) else Key.LEFT
        return key, probe2 - view.onset_ms + _MOTOR_LATENCY_MS

    def _location(self, view):
        baseline = view.percept_at(10).pixels
        probe = view.onset_ms + 100
        stim = view.percept_at(probe).pixels
        diff = np.clip(stim - baseline, 0.0, None)
        total = diff.sum()
        if total <= 0:
            return ORIENTATIONS[0], probe - view.onset_ms + _MOTOR_LATENCY_MS
        f = view.percept_at(probe)
        xs, ys = f.x_coords_deg(), f.y_coords_deg()
        cx = float((diff.sum(axis=0) * xs).sum() / total)
        cy = float((diff.sum(axis=1) * ys).sum() / total)
        if abs(cx) >= abs(cy):
            key = Key.RIGHT if cx > 0 else Key.LEFT
        else:
            key = Key.DOWN if cy > 0 else Key.UP
        return key, probe - view.onset_ms + _MOTOR_LATENCY_MS

    def _motion(self, view):
        pmap = build_phosphene_map(view.condition)
        speed = view.spec.params["speed_deg_s"]
        # sample two percepts roughly one phosphene pitch of travel apart
        dt_ms = int(min(max(1000.0 * pmap.spacing_deg / speed, 200.0), 2000.0))
        t1 = view.onset_ms + 200
        t2 = t1 + dt_ms
        p1 = view.percept_at(t1).pixels
        p2 = view.percept_at(t2).pixels
        shift_px = max(1, round(speed * dt_ms / 1000.0 * view.out_px_per_deg))
        rolls = {
            Key.RIGHT: np.roll(p1, shift_px, axis=1),
            Key.LEFT: np.roll(p1, -shift_px, axis=1),
            Key.DOWN: np.roll(p1, shift_px, axis=0),
            Key.UP: np.roll(p1, -shift_px, axis=0),
        }
        best, best_score = ORIENTATIONS[0], -math.inf
        for key in ORIENTATIONS:
            score = float(np.sum(p2 * rolls[key]))
            if score > best_score:
                best, best_score = key, score
        return best, t2 - view.onset_ms + _MOTOR_LATENCY_MS

    def _landolt(self, view):
        probe = view.onset_ms + 100
        percept = view.percept_at(probe)
        p = view.spec.params
        candidates = {}
        for orient in ORIENTATIONS:
            spec, timeline, _ = gen_landolt_c(
                p["gap_arcmin"], orient, px_per_deg=p["px_per_deg"],
                seed=view.spec.rng_seed, extent_deg=p["extent_deg"],
                timing=view.spec.duration_ms)
            src = stimulus_frames(spec, timeline, timeline.imperative_onset_ms + 100)
            candidates[orient] = phosphenize(src, view.pose, view.condition,
                                             view.out_px_per_deg)
        key = ideal_observer(percept, candidates)
        return key, probe - view.onset_ms + _MOTOR_LATENCY_MS


# optotypes are rasterized finer than the default scene calibration so the
# staircase is limited by the simulated implant, not by the source raster
LANDOLT_SRC_PX_PER_DEG = 12.0


def draw_trial_stimulus(family: TestFamily, rng, stair: Staircase | None,
                        timing: dict | None = None):
    """Random stimulus from the family's parameter space (sizes come from
    the adaptive scheduler)."""
    seed = int(rng.integers(0, 2 ** 63 - 1))
    if family == TestFamily.LIGHT:
        return gen_light_perception(bool(rng.random() < 0.5), seed, timing)
    if family == TestFamily.TIME:
        return gen_time_resolution(int(rng.choice([1, 2])), seed=seed, timing=timing)
    if family == TestFamily.LOCATION:
        return gen_light_location(ORIENTATIONS[int(rng.integers(4))], seed, timing)
    if family == TestFamily.MOTION:
        return gen_motion(ORIENTATIONS[int(rng.integers(4))], seed=seed, timing=timing)
    if family == TestFamily.LANDOLT:
        gap = gap_from_logmar(stair.next_level())
        return gen_landolt_c(gap, ORIENTATIONS[int(rng.integers(4))],
                             px_per_deg=LANDOLT_SRC_PX_PER_DEG,
                             seed=seed, timing=timing)
    raise ValueError(f"unknown family {family}")


def run_block(family: TestFamily, condition: Condition, n_trials: int = 24,
              responder=None, seed: int = 0, *, session_id: str | None = None,
              timing: dict | None = None, out_px_per_deg: float | None = None,
              start_logmar: float = 2.0, pose_jitter: bool = True) -> BlockResult:
    """Run one block: n trials of one family under one condition.

    Stimulus parameters are drawn per trial from the family's space (sizes
    come from the adaptive scheduler for the ring test); the pose gets a
    sub-phosphene jitter per trial, standing in for head scanning.  A
    ChannelClosed from the responder aborts the block, keeping the partial
    records.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if responder is None:
        responder = IdealResponder()
    family = TestFamily(family)
    rng = np.random.default_rng(seed)
    session_id = session_id or f"sim-{seed}"
    if out_px_per_deg is None:
        out_px_per_deg = 128.0 / condition.fov_deg
    pmap = build_phosphene_map(condition)
    stair = Staircase(start_logmar) if family == TestFamily.LANDOLT else None

    records: list[TrialRecord] = []
    for t in range(n_trials):
        spec, timeline, corr = draw_trial_stimulus(family, rng, stair, timing)
        if pose_jitter:
            jx, jy = rng.uniform(-0.5, 0.5, 2) * pmap.spacing_deg
            pose = HeadPose(float(jx), float(jy))
        else:
            pose = HeadPose()
        view = TrialView(spec, timeline, condition, pose, out_px_per_deg)
        try:
            key, rt_ms = responder.respond(view)
        except ChannelClosed:
            return BlockResult(records, aborted=True)
        window_ms = timeline.response_window[1] - timeline.response_window[0]
        if key is None:
            response, correct, rt = TIMEOUT, False, None
        else:
            key = Key(key)
            response = key.value
            correct = key == corr.key
            rt = int(min(max(rt_ms, 0), window_ms))
        if stair is not None:
            stair.record(correct)
        records.append(TrialRecord(session_id, family, condition.name, t,
                                   spec, response, correct, rt))
    return BlockResult(records)


def summarize(records) -> BlockSummary:
    """Performance percentage plus reaction-time mean and sample sd."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    n = len(records)
    perf = 100.0 * sum(r.correct for r in records) / n
    rts = [r.reaction_time_ms / 1000.0 for r in records
           if r.reaction_time_ms is not None]
    if not rts:
        mean_rt = sd_rt = None
    else:
        mean_rt = float(np.mean(rts))
        sd_rt = float(np.std(rts, ddof=1)) if len(rts) > 1 else None
    return BlockSummary(perf, mean_rt, sd_rt, n)


# ---------------------------------------------------------------------------
# persistence

LOG_HEADER = ["session_id", "test", "condition", "trial",
              "stimulus_json", "response", "correct", "rt_ms"]


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for r in records:
        writer.writerow([
            r.session_id, r.test_family.value, r.condition_label,
            r.trial_index, r.stimulus.to_json(), r.response,
            "true" if r.correct else "false",
            "" if r.reaction_time_ms is None else r.reaction_time_ms,
        ])
    return buf.getvalue()


def write_trial_log(path, records) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def parse_trial_log(text: str, source: str = "<log>") -> list[TrialRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{source}: empty log") from None
    if header != LOG_HEADER:
        raise ValueError(f"{source}: line 1: bad header {header}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != len(LOG_HEADER):
                raise ValueError(f"expected {len(LOG_HEADER)} fields, got {len(row)}")
            sid, test, cond, trial, stim_json, response, correct_s, rt_s = row
            if correct_s not in ("true", "false"):
                raise ValueError(f"bad correct flag {correct_s!r}")
            records.append(TrialRecord(
                sid, TestFamily(test), cond, int(trial),
                StimulusSpec.from_json(stim_json), response,
                correct_s == "true", None if rt_s == "" else int(rt_s)))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ValueError(f"{source}: line {lineno}: {exc}") from None
    return records


def read_trial_log(path) -> list[TrialRecord]:
    with open(path, "r", newline="") as fh:
        return parse_trial_log(fh.read(), source=str(path))


def block_report(records, aborted: bool = False) -> dict:
    """Summary document for one block, including an acuity estimate for
    sizing runs."""
    first = records[0]
    doc = {
        "session_id": first.session_id,
        "test": first.test_family.value,
        "condition": first.condition_label,
        "aborted": aborted,
        "summary": summarize(records).as_dict(),
    }
    if first.test_family == TestFamily.LANDOLT:
        doc["acuity"] = estimate_acuity(records).as_dict()
    return doc


def write_summary(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
