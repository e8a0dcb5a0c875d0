import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spvbench.acuity import (
    AcuityEstimate,
    Staircase,
    StepRule,
    estimate_acuity,
    fit_psychometric,
    gap_from_logmar,
    ideal_observer,
    logmar_from_gap,
    reversal_levels,
    schedule_block,
)
from spvbench.frames import Frame
from spvbench.stimuli import Key, gen_landolt_c


class TestLogmar:
    def test_fixed_points(self):
        assert logmar_from_gap(1.0) == 0.0
        assert logmar_from_gap(10.0) == 1.0

    def test_blindness_threshold_gap(self):
        # 1.3 logMAR corresponds to a gap just under 20 arcmin
        assert gap_from_logmar(1.3) == pytest.approx(19.952623149688797, rel=1e-12)
        assert logmar_from_gap(19.952623149688797) == pytest.approx(1.3, abs=1e-12)

    def test_round_trip_identity(self):
        for x in np.linspace(-0.5, 2.5, 31):
            assert logmar_from_gap(gap_from_logmar(x)) == pytest.approx(x, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            logmar_from_gap(0.0)
        with pytest.raises(ValueError):
            logmar_from_gap(-1.0)


class TestStaircase:
    def test_all_correct_descends_monotonically(self):
        seq = schedule_block(2.0, n_trials=10)
        assert seq == pytest.approx([2.0 - 0.1 * i for i in range(10)])

    def test_alternating_sawtooth(self):
        flip = iter([True, False] * 12)
        seq = schedule_block(1.0, n_trials=8, respond=lambda lv: next(flip))
        # pairs climb by +0.2 net: 1.0, 0.9, 1.2, 1.1, 1.4, ...
        assert seq == pytest.approx([1.0, 0.9, 1.2, 1.1, 1.4, 1.3, 1.6, 1.5])

    def test_zero_trials_rejected(self):
        with pytest.raises(ValueError):
            schedule_block(2.0, n_trials=0)

    def test_floor_and_ceiling(self):
        low = schedule_block(0.05, n_trials=10)
        assert min(low) >= 0.0
        high = schedule_block(2.45, n_trials=10, respond=lambda lv: False)
        assert max(high) <= 2.5

    @given(st.lists(st.booleans(), min_size=1, max_size=60),
           st.floats(min_value=0.0, max_value=2.5))
    def test_bounds_hold_for_any_outcome_sequence(self, outcomes, start):
        it = iter(outcomes)
        seq = schedule_block(start, n_trials=len(outcomes),
                             respond=lambda lv: next(it))
        assert all(0.0 - 1e-12 <= lv <= 2.5 + 1e-12 for lv in seq)

    def test_reversal_bookkeeping(self):
        stair = Staircase(1.0)
        for ok in [True, True, False, False, True, False]:
            stair.record(ok)
        # direction flips at trials 3 (down->up), 5 (up->down), 6 (down->up)
        assert stair.reversal_levels == pytest.approx([0.8, 1.4, 1.3])
        assert reversal_levels(stair.presented, stair.responses) == \
            pytest.approx(stair.reversal_levels)


@dataclass
class FakeRecord:
    condition_label: str
    stimulus: object
    correct: bool


def landolt_records(levels, correct, condition="C4"):
    recs = []
    for lv, ok in zip(levels, correct):
        spec, _, _ = gen_landolt_c(gap_from_logmar(lv), Key.UP, seed=0)
        recs.append(FakeRecord(condition, spec, ok))
    return recs


class TestEstimateAcuity:
    def test_step_observer_bias_within_015(self):
        # observer: perfect above the true threshold, chance below
        rng = np.random.default_rng(99)
        gstar = 1.0
        estimates = []
        for _ in range(1000):
            stair = Staircase(2.0)
            for _ in range(24):
                lv = stair.next_level()
                stair.record(lv >= gstar or rng.random() < 0.25)
            revs = stair.reversal_levels
            assert len(revs) >= 4
            estimates.append(float(np.mean(revs[-8:])))
        assert abs(np.mean(estimates) - gstar) < 0.15

    def test_all_correct_estimate_not_above_smallest_size(self):
        levels = [2.0 - 0.1 * i for i in range(24)]
        recs = landolt_records(levels, [True] * 24)
        est = estimate_acuity(recs)
        assert est.method == "psychometric_fit"
        assert est.logmar <= min(levels)

    def test_staircase_method_used_with_reversals(self):
        rng = np.random.default_rng(1)
        stair = Staircase(2.0)
        for _ in range(24):
            lv = stair.next_level()
            stair.record(lv >= 1.2 or rng.random() < 0.25)
        recs = landolt_records(stair.presented, stair.responses)
        est = estimate_acuity(recs)
        assert est.method == "staircase"
        assert est.trials_used == 24
        assert est.logmar == pytest.approx(np.mean(stair.reversal_levels[-8:]))

    def test_mixed_conditions_rejected(self):
        recs = landolt_records([1.0, 1.1], [True, True], condition="C1") + \
            landolt_records([1.0], [True], condition="C4")
        with pytest.raises(ValueError):
            estimate_acuity(recs)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            estimate_acuity([])

    def test_psychometric_fit_recovers_threshold(self):
        # smooth observer with known 62.5%-correct point
        rng = np.random.default_rng(5)
        mu, sigma = 1.1, 0.15
        levels = list(np.tile(np.linspace(0.5, 1.9, 15), 12))
        z = (np.array(levels) - mu) / sigma
        p = 0.25 + 0.74 * 0.5 * (1 + np.vectorize(math.erf)(z / math.sqrt(2)))
        correct = rng.random(len(levels)) < p
        got = fit_psychometric(levels, correct)
        target = mu + sigma * __import__("statistics").NormalDist().inv_cdf(0.375 / 0.74)
        assert got == pytest.approx(target, abs=0.1)


def blob_frame(cx, cy, side=32, ppd=3.0):
    x = (np.arange(side) + 0.5) / ppd - side / ppd / 2
    X, Y = np.meshgrid(x, x)
    return Frame(side, side, ppd, np.exp(-((X - cx) ** 2 + (Y - cy) ** 2)))


class TestIdealObserver:
    def test_matches_identical_template(self):
        percept = blob_frame(0.0, -2.0)
        candidates = {
            Key.UP: blob_frame(0.0, -2.0),
            Key.DOWN: blob_frame(0.0, 2.0),
            Key.LEFT: blob_frame(-2.0, 0.0),
            Key.RIGHT: blob_frame(2.0, 0.0),
        }
        assert ideal_observer(percept, candidates) == Key.UP
        percept = blob_frame(2.0, 0.0)
        assert ideal_observer(percept, candidates) == Key.RIGHT

    def test_flat_percept_falls_back_to_first_orientation(self):
        flat = Frame(16, 16, 2.0, np.full((16, 16), 0.5))
        candidates = {k: blob_frame(1.0, 1.0, side=16, ppd=2.0) for k in Key}
        assert ideal_observer(flat, candidates) == Key.UP

    def test_missing_candidate_rejected(self):
        percept = blob_frame(0.0, 0.0)
        with pytest.raises(ValueError):
            ideal_observer(percept, {Key.UP: percept})


class TestObserverAccuracyMonotonicity:
    def test_accuracy_at_fixed_gap_rises_with_phosphene_count(self):
        # Monte Carlo over >= 200 random trials at one gap per FOV
        from spvbench.phosphenes import Condition, build_phosphene_map
        from spvbench.session import IdealResponder, TrialView
        from spvbench.frames import HeadPose
        from spvbench.stimuli import ORIENTATIONS, gen_landolt_c

        rng = np.random.default_rng(77)
        fov, gap_arcmin = 20.0, 10 ** 1.35  # between the two thresholds
        hits = {100: 0, 1000: 0}
        n = 200
        responder = IdealResponder()
        jitter = [rng.uniform(-0.5, 0.5, 2) for _ in range(n)]
        orients = [ORIENTATIONS[int(rng.integers(4))] for _ in range(n)]
        seeds = [int(rng.integers(2 ** 31)) for _ in range(n)]
        for count in hits:
            cond = Condition(count, fov)
            spacing = build_phosphene_map(cond).spacing_deg
            for i in range(n):
                spec, tl, corr = gen_landolt_c(gap_arcmin, orients[i],
                                               px_per_deg=12.0, seed=seeds[i])
                pose = HeadPose(float(jitter[i][0] * spacing),
                                float(jitter[i][1] * spacing))
                view = TrialView(spec, tl, cond, pose, 128.0 / fov)
                key, _ = responder.respond(view)
                hits[count] += key == corr.key
        assert hits[100] <= hits[1000]
        assert hits[1000] >= 0.9 * n  # resolvable at the finer map
