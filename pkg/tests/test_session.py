import numpy as np
import pytest

from spvbench.acuity import logmar_from_gap
from spvbench.phosphenes import Condition, paper_conditions
from spvbench.session import (
    BlockSummary,
    ChannelClosed,
    IdealResponder,
    ScriptedResponder,
    TimeoutResponder,
    TrialRecord,
    block_report,
    parse_trial_log,
    read_trial_log,
    records_to_csv,
    run_block,
    summarize,
    write_trial_log,
)
from spvbench.stimuli import Key, TestFamily, gen_light_perception

C4 = paper_conditions()["C4"]
C1 = paper_conditions()["C1"]

FAST = {"pre_tone_ms": 50, "fixation_ms": 60, "tone_to_stim_ms": 30,
        "flash_ms": 40, "gap_ms": 80, "response_window_ms": 3000}


class TestRunBlock:
    def test_ideal_light_perception_performance(self):
        res = run_block(TestFamily.LIGHT, C1, n_trials=24,
                        responder=IdealResponder(), seed=11)
        assert not res.aborted
        assert len(res.records) == 24
        perf = summarize(res.records).performance_pct
        assert perf >= 95.0

    def test_fixed_seed_reproducible(self):
        a = run_block(TestFamily.MOTION, C4, n_trials=6, seed=5, timing=FAST)
        b = run_block(TestFamily.MOTION, C4, n_trials=6, seed=5, timing=FAST)
        assert records_to_csv(a.records) == records_to_csv(b.records)

    def test_timeout_responder_all_incorrect(self):
        res = run_block(TestFamily.LIGHT, C1, n_trials=24,
                        responder=TimeoutResponder(), seed=2, timing=FAST)
        assert len(res.records) == 24
        assert all(r.response == "timeout" and not r.correct
                   and r.reaction_time_ms is None for r in res.records)
        assert summarize(res.records).performance_pct == 0.0

    def test_channel_closed_aborts_with_partial_records(self):
        res = run_block(TestFamily.LIGHT, C1, n_trials=24,
                        responder=ScriptedResponder([Key.LEFT] * 5), seed=3,
                        timing=FAST)
        assert res.aborted
        assert len(res.records) == 5

    def test_landolt_sizes_follow_staircase(self):
        res = run_block(TestFamily.LANDOLT, C4, n_trials=10, seed=7, timing=FAST)
        levels = [logmar_from_gap(r.stimulus.params["gap_arcmin"])
                  for r in res.records]
        assert levels[0] == pytest.approx(2.0)
        for prev_rec, lv_prev, lv_next in zip(res.records, levels, levels[1:]):
            step = lv_next - lv_prev
            if prev_rec.correct:
                assert step == pytest.approx(-0.1) or lv_next == pytest.approx(0.0)
            else:
                assert step == pytest.approx(0.3) or lv_next == pytest.approx(2.5)

    def test_rt_within_window(self):
        res = run_block(TestFamily.TIME, C4, n_trials=8, seed=9, timing=FAST)
        for r in res.records:
            if r.reaction_time_ms is not None:
                assert 0 <= r.reaction_time_ms <= 3000

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_block(TestFamily.LIGHT, C1, n_trials=0, seed=0)


class TestIdealResponderFamilies:
    @pytest.mark.parametrize("family,min_perf", [
        (TestFamily.LIGHT, 95.0),
        (TestFamily.TIME, 95.0),
        (TestFamily.LOCATION, 75.0),
        (TestFamily.MOTION, 75.0),
    ])
    def test_family_performance_at_c4(self, family, min_perf):
        res = run_block(family, C4, n_trials=24, seed=21, timing=FAST)
        assert summarize(res.records).performance_pct >= min_perf


class TestSummarize:
    def test_performance_fraction(self):
        recs = [_rec(i, correct=(i < 18)) for i in range(24)]
        assert summarize(recs).performance_pct == pytest.approx(75.0)

    def test_rt_stats_sample_sd(self):
        recs = [_rec(i, rt_ms=rt) for i, rt in enumerate([1000, 2000, 3000])]
        s = summarize(recs)
        assert s.mean_rt_s == pytest.approx(2.0)
        assert s.sd_rt_s == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_all_timeouts_no_rt_stats(self):
        recs = [_rec(i, timeout=True) for i in range(3)]
        s = summarize(recs)
        assert s.mean_rt_s is None and s.sd_rt_s is None


def _rec(i, correct=True, rt_ms=500, timeout=False):
    spec, _, _ = gen_light_perception(True, seed=i)
    if timeout:
        return TrialRecord("s", TestFamily.LIGHT, "C1", i, spec, "timeout",
                           False, None)
    return TrialRecord("s", TestFamily.LIGHT, "C1", i, spec, "left",
                       correct, rt_ms)


class TestPersistence:
    def test_round_trip_identity(self, tmp_path):
        res = run_block(TestFamily.LANDOLT, C4, n_trials=6, seed=13, timing=FAST)
        path = tmp_path / "block.csv"
        write_trial_log(path, res.records)
        again = read_trial_log(path)
        assert again == res.records

    def test_header_format(self):
        text = records_to_csv([_rec(0)])
        assert text.splitlines()[0] == \
            "session_id,test,condition,trial,stimulus_json,response,correct,rt_ms"

    def test_summary_recomputable_from_log(self, tmp_path):
        res = run_block(TestFamily.TIME, C4, n_trials=12, seed=17, timing=FAST)
        path = tmp_path / "block.csv"
        write_trial_log(path, res.records)
        assert summarize(read_trial_log(path)) == summarize(res.records)

    def test_corrupt_row_names_line(self):
        good = records_to_csv([_rec(0), _rec(1, rt_ms=600)])
        bad = good.replace("left,true,600", "left,maybe,600")
        with pytest.raises(ValueError, match=r"x\.csv: line 3"):
            parse_trial_log(bad, source="x.csv")

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_trial_log("a,b,c\n1,2,3\n")

    def test_block_report_includes_acuity_for_sizing_runs(self):
        res = run_block(TestFamily.LANDOLT, C4, n_trials=24, seed=19, timing=FAST)
        doc = block_report(res.records)
        assert doc["test"] == "landolt"
        assert "acuity" in doc
        assert doc["summary"]["n_trials"] == 24

    def test_validation_rt_iff_key(self):
        spec, _, _ = gen_light_perception(True, seed=0)
        with pytest.raises(ValueError):
            TrialRecord("s", TestFamily.LIGHT, "C1", 0, spec, "left", True, None)
        with pytest.raises(ValueError):
            TrialRecord("s", TestFamily.LIGHT, "C1", 0, spec, "timeout", False, 100)
