import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spvbench.frames import Frame, HeadPose
from spvbench.phosphenes import (
    Condition,
    build_phosphene_map,
    paper_conditions,
    phosphenize,
    pixels_per_phosphene,
    quantize,
    render,
    resolve_condition,
    sample,
)


def uniform_frame(value, side_px=60, ppd=3.0):
    return Frame(side_px, side_px, ppd, np.full((side_px, side_px), float(value)))


class TestCondition:
    def test_paper_conditions_constructible(self):
        table = paper_conditions()
        assert [c.label for c in table.values()] == ["C1", "C2", "C3", "C4", "C5", "C6"]
        assert (table["C1"].phosphene_count, table["C1"].fov_deg) == (100, 10.0)
        assert (table["C2"].phosphene_count, table["C2"].fov_deg) == (1000, 10.0)
        assert (table["C4"].phosphene_count, table["C4"].fov_deg) == (1000, 20.0)
        assert (table["C6"].phosphene_count, table["C6"].fov_deg) == (1000, 50.0)

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            Condition(0, 10.0)
        with pytest.raises(ValueError):
            Condition(100, 0.0)
        with pytest.raises(ValueError):
            Condition(100, 120.0)

    def test_resolve_adhoc(self):
        c = resolve_condition("400@20")
        assert (c.phosphene_count, c.fov_deg) == (400, 20.0)
        with pytest.raises(ValueError):
            resolve_condition("bogus")


class TestBuildMap:
    def test_square_grid_100(self):
        m = build_phosphene_map(Condition(100, 10.0))
        assert (m.grid_rows, m.grid_cols) == (10, 10)
        assert len(m) == 100
        assert m.spacing_deg == pytest.approx(1.0)
        xs = sorted(set(np.round(m.centers_deg[:, 0], 12)))
        assert xs == pytest.approx(np.arange(-4.5, 5.0, 1.0).tolist())

    def test_single_phosphene(self):
        m = build_phosphene_map(Condition(1, 10.0))
        assert len(m) == 1
        assert m.centers_deg[0] == pytest.approx([0.0, 0.0])

    def test_1000_trims_24_corner_cells(self):
        m = build_phosphene_map(Condition(1000, 20.0))
        assert (m.grid_rows, m.grid_cols) == (32, 32)
        assert len(m) == 1000
        removed = np.argwhere(m.cell_index < 0)
        assert len(removed) == 24
        # the trimmed cells are the 24 farthest from the center: the four
        # 3-cell corner wedges plus the four diagonal neighbours
        corner_shells = {(0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (2, 0)}
        for r, c in removed:
            rr = min(r, 31 - r)
            cc = min(c, 31 - c)
            assert (rr, cc) in corner_shells

    def test_cardinality_exact(self):
        for n in [1, 2, 3, 5, 7, 12, 50, 99, 101, 997, 1000, 2000, 4999]:
            for fov in (10.0, 20.0, 50.0):
                m = build_phosphene_map(Condition(n, fov))
                assert len(m) == n
                # no duplicate centers
                assert len({(round(x, 9), round(y, 9)) for x, y in m.centers_deg}) == n

    def test_uniform_spacing(self):
        m = build_phosphene_map(Condition(1000, 20.0))
        xs = np.unique(np.round(m.centers_deg[:, 0], 12))
        diffs = np.diff(xs)
        assert np.all(np.abs(diffs - m.spacing_deg) < 1e-9)

    def test_centers_within_half_fov(self):
        for n, fov in [(100, 10.0), (1000, 20.0), (37, 50.0)]:
            m = build_phosphene_map(Condition(n, fov))
            assert np.all(np.abs(m.centers_deg) <= fov / 2 + 1e-9)

    def test_sigma_and_window_follow_spacing(self):
        m = build_phosphene_map(Condition(100, 10.0))
        assert m.sigma_deg == pytest.approx(m.spacing_deg / 3)
        assert m.window_deg == pytest.approx(m.spacing_deg)


class TestPixelsPerPhosphene:
    # published pixel-density table, 3 px/deg calibration
    @pytest.mark.parametrize("count,fov,expected", [
        (100, 10.0, 9),
        (100, 20.0, 36),
        (1000, 10.0, 1),
        (1000, 20.0, 4),
    ])
    def test_published_rows(self, count, fov, expected):
        assert pixels_per_phosphene(Condition(count, fov), 3.0) == expected

    def test_50deg_rows_follow_quadratic_model(self):
        # the published 50-degree densities (361 and 36) do not follow the
        # quadratic FOV scaling of the other rows; this model yields 225/25
        assert pixels_per_phosphene(Condition(100, 50.0), 3.0) == 225
        assert pixels_per_phosphene(Condition(1000, 50.0), 3.0) == 25

    def test_minimum_one(self):
        assert pixels_per_phosphene(Condition(5000, 10.0), 1.0) == 1

    def test_rejects_bad_calibration(self):
        with pytest.raises(ValueError):
            pixels_per_phosphene(Condition(100, 10.0), 0.0)


class TestSample:
    def test_uniform_frame(self):
        m = build_phosphene_map(Condition(100, 10.0))
        vals = sample(uniform_frame(0.37, side_px=30, ppd=3.0), m)
        assert vals.shape == (100,)
        assert np.allclose(vals, 0.37)

    def test_half_split(self):
        # two phosphenes at +-fov/4: left half dark, right half bright
        m = build_phosphene_map(Condition(2, 10.0))
        assert m.centers_deg[:, 0].tolist() == pytest.approx([-2.5, 2.5])
        px = np.zeros((30, 30))
        px[:, 15:] = 1.0
        vals = sample(Frame(30, 30, 3.0, px), m)
        assert vals.tolist() == pytest.approx([0.0, 1.0])

    def test_checkerboard_near_half(self):
        m = build_phosphene_map(Condition(100, 10.0))
        rr, cc = np.mgrid[0:30, 0:30]
        px = ((rr + cc) % 2).astype(float)
        vals = sample(Frame(30, 30, 3.0, px), m)
        # each 3x3 window holds 4 or 5 lit pixels
        assert np.all((vals > 0.4) & (vals < 0.6))

    def test_linearity(self):
        rng = np.random.default_rng(0)
        a = rng.random((60, 60))
        b = rng.random((60, 60))
        m = build_phosphene_map(Condition(100, 20.0))
        alpha = 0.3
        mixed = sample(Frame(60, 60, 3.0, alpha * a + (1 - alpha) * b), m)
        parts = alpha * sample(Frame(60, 60, 3.0, a), m) \
            + (1 - alpha) * sample(Frame(60, 60, 3.0, b), m)
        assert np.max(np.abs(mixed - parts)) < 1e-12

    def test_fov_mismatch_rejected(self):
        m = build_phosphene_map(Condition(100, 20.0))
        with pytest.raises(ValueError):
            sample(uniform_frame(0.5, side_px=30, ppd=3.0), m)  # 10 deg < 20 deg

    def test_subpixel_windows_fall_back_to_nearest(self):
        # (1000, 10deg) at 3 px/deg: windows are 0.94 px wide, some catch
        # no pixel center; every sample must still be defined
        m = build_phosphene_map(Condition(1000, 10.0))
        rng = np.random.default_rng(1)
        vals = sample(Frame(30, 30, 3.0, rng.random((30, 30))), m)
        assert vals.shape == (1000,)
        assert np.all((vals >= 0) & (vals <= 1))


class TestQuantize:
    @pytest.mark.parametrize("value,level", [(0.0, 0), (1.0, 7), (0.5, 4),
                                             (0.124, 0), (0.126, 1), (0.874, 6)])
    def test_fixed_points(self, value, level):
        assert quantize(np.array([value])).levels[0] == level

    def test_exactly_eight_levels_over_dense_sweep(self):
        sweep = np.linspace(0.0, 1.0, 20001)
        levels = quantize(sweep).levels
        assert sorted(set(levels.tolist())) == list(range(8))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            quantize(np.array([1.2]))
        with pytest.raises(ValueError):
            quantize(np.array([-0.1]))

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=50))
    def test_monotone(self, xs):
        xs = sorted(xs)
        levels = quantize(np.array(xs)).levels
        assert np.all(np.diff(levels) >= 0)


def center_aligned_ppd(fov_deg, approx_ppd):
    """Pick px_per_deg so the output has an odd pixel count, putting a pixel
    center exactly at (0, 0)."""
    side = int(round(fov_deg * approx_ppd))
    if side % 2 == 0:
        side += 1
    return side / fov_deg


class TestRender:
    def test_all_zero_levels_black(self):
        m = build_phosphene_map(Condition(100, 10.0))
        act = quantize(np.zeros(100))
        out = render(m, act, 12.0)
        assert np.all(out.pixels == 0.0)

    def test_single_center_phosphene_gaussian_profile(self):
        m = build_phosphene_map(Condition(1, 10.0))
        ppd = center_aligned_ppd(10.0, 10.0)
        out = render(m, quantize(np.array([1.0])), ppd)
        peak_idx = np.unravel_index(np.argmax(out.pixels), out.pixels.shape)
        mid = out.width_px // 2
        assert peak_idx == (mid, mid)
        assert out.pixels[mid, mid] == pytest.approx(1.0, abs=1e-12)
        # value one effective sigma away from center
        sigma_eff_px = m.sigma_deg * ppd  # top level: modulation factor is 1
        offset = int(round(sigma_eff_px))
        got = out.pixels[mid, mid + offset]
        expected = math.exp(-offset ** 2 / (2 * sigma_eff_px ** 2))
        assert got == pytest.approx(expected, rel=1e-9)
        assert got == pytest.approx(math.exp(-0.5), rel=0.02)

    def test_peak_amplitude_proportional_to_level(self):
        m = build_phosphene_map(Condition(1, 10.0))
        ppd = center_aligned_ppd(10.0, 10.0)
        for lv in range(1, 8):
            out = render(m, __import__("spvbench").PhospheneActivation(np.array([lv])), ppd)
            assert abs(out.pixels.max() - lv / 7) < 1 / 255

    def test_size_grows_with_level(self):
        m = build_phosphene_map(Condition(1, 10.0))
        ppd = center_aligned_ppd(10.0, 10.0)
        from spvbench import PhospheneActivation
        lit_px = [np.count_nonzero(render(m, PhospheneActivation(np.array([lv])), ppd).pixels)
                  for lv in range(1, 8)]
        assert lit_px == sorted(lit_px)
        assert lit_px[0] < lit_px[-1]

    def test_overlap_combines_by_max_not_sum(self):
        m = build_phosphene_map(Condition(2, 10.0))
        ppd = center_aligned_ppd(10.0, 10.0)
        out = render(m, quantize(np.array([1.0, 1.0])), ppd)
        # midpoint between the two centers
        mid = out.width_px // 2
        sigma_px = m.sigma_deg * ppd
        half_gap_px = (m.spacing_deg / 2) * ppd
        tail = math.exp(-half_gap_px ** 2 / (2 * sigma_px ** 2))
        got = out.pixels[mid, mid]
        # both tails reach the midpoint; max keeps one, a sum would double it
        assert got == pytest.approx(tail, rel=0.05)
        assert got < 1.5 * tail

    def test_peak_within_half_pixel_of_center(self):
        m = build_phosphene_map(Condition(100, 10.0))
        ppd = 13.7  # deliberately misaligned grid
        levels = np.zeros(100, dtype=int)
        levels[42] = 7
        from spvbench import PhospheneActivation
        out = render(m, PhospheneActivation(levels), ppd)
        r, c = np.unravel_index(np.argmax(out.pixels), out.pixels.shape)
        x = (c + 0.5) / ppd - out.width_deg / 2
        y = (r + 0.5) / ppd - out.height_deg / 2
        cx, cy = m.centers_deg[42]
        assert abs(x - cx) <= 0.5 / ppd + 1e-9
        assert abs(y - cy) <= 0.5 / ppd + 1e-9

    def test_rejects_bad_ppd(self):
        m = build_phosphene_map(Condition(1, 10.0))
        with pytest.raises(ValueError):
            render(m, quantize(np.array([1.0])), 0.0)

    def test_rejects_unpaired_activation(self):
        m = build_phosphene_map(Condition(2, 10.0))
        with pytest.raises(ValueError):
            render(m, quantize(np.zeros(3)), 10.0)


class TestPhosphenize:
    def test_white_source_lights_every_phosphene(self):
        src = uniform_frame(1.0, side_px=60, ppd=3.0)
        cond = Condition(100, 10.0)
        out = phosphenize(src, HeadPose(), cond, 12.0)
        # peak can miss 1.0 only by the half-pixel misalignment of the grid
        sigma_px = build_phosphene_map(cond).sigma_deg * 12.0
        worst = np.exp(-0.5 / (2 * sigma_px ** 2))
        assert worst - 1e-9 <= out.pixels.max() <= 1.0
        assert np.count_nonzero(out.pixels) > 100

    def test_black_source_black_output(self):
        src = uniform_frame(0.0, side_px=60, ppd=3.0)
        out = phosphenize(src, HeadPose(), Condition(100, 10.0), 12.0)
        assert np.all(out.pixels == 0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        src = Frame(60, 60, 3.0, rng.random((60, 60)))
        a = phosphenize(src, HeadPose(1.0, -2.0), Condition(400, 10.0), 12.0)
        b = phosphenize(src, HeadPose(1.0, -2.0), Condition(400, 10.0), 12.0)
        assert a.pixels.tobytes() == b.pixels.tobytes()

    def test_monotone_information_with_count(self):
        # reconstruction error against the source shrinks as the phosphene
        # count rises, on a fixed corpus of high-contrast scenes
        rng = np.random.default_rng(123)
        x = (np.arange(60) + 0.5) / 3.0 - 10.0
        X, Y = np.meshgrid(x, x)
        errors = {n: [] for n in (100, 400, 1000)}
        for _ in range(8):
            img = np.zeros((60, 60))
            for _ in range(rng.integers(2, 5)):
                kind = rng.integers(0, 3)
                cx, cy = rng.uniform(-7, 7, 2)
                if kind == 0:
                    r = rng.uniform(1.5, 4)
                    img[(X - cx) ** 2 + (Y - cy) ** 2 <= r * r] = 1.0
                elif kind == 1:
                    img[np.abs(X - cx) <= rng.uniform(0.8, 2.5)] = 1.0
                else:
                    r = rng.uniform(2, 5)
                    d2 = (X - cx) ** 2 + (Y - cy) ** 2
                    img[(d2 <= r * r) & (d2 >= (0.6 * r) ** 2)] = 1.0
            src = Frame(60, 60, 3.0, img)
            ref = src.pixels.reshape(20, 3, 20, 3).mean(axis=(1, 3))
            for n in errors:
                out = phosphenize(src, HeadPose(), Condition(n, 20.0), 12.0)
                got = out.pixels.reshape(20, 12, 20, 12).mean(axis=(1, 3))
                errors[n].append(np.mean(np.abs(got - ref)))
        means = {n: np.mean(v) for n, v in errors.items()}
        assert means[100] >= means[400] >= means[1000]
