import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_gold_spec
from jndcrowd.errors import DomainError, SelectionError, SynthesisError
from jndcrowd.goldgen import (
    GoldValidation,
    blend_weight_field,
    build_gold_ladder,
    count_region_hits,
    draw_gold_spec,
    gold_pjnd_range,
    select_gt_centers,
    stronger_level,
    synthesize_gold_frame,
    validate_gold_response,
)
from jndcrowd.imaging import Codec, RasterImage, build_ladder
from jndcrowd.protocol import Response


class TestStrongerLevel:
    def test_examples(self):
        assert stronger_level(Codec.JPEG, 50) == 90
        assert stronger_level(Codec.JPEG, 1) == 81
        assert stronger_level(Codec.BPG, 50) == 70
        assert stronger_level(Codec.BPG, 72) == 100

    def test_stays_in_level_range(self):
        for codec in (Codec.JPEG, Codec.BPG):
            for d in range(1, 101):
                assert 1 <= stronger_level(codec, d) <= 100

    def test_bpg_exact_multiples(self):
        # 1.4 * 5 must give 7, not 8 via float noise
        assert stronger_level(Codec.BPG, 5) == 7
        assert stronger_level(Codec.BPG, 10) == 14

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            stronger_level(Codec.JPEG, 0)


class TestBlendWeightField:
    def test_coincident_centers_peak(self):
        w = blend_weight_field([(50, 50)] * 3, sigma=10, width=100, height=100)
        assert w[50, 50] == pytest.approx(1.0, abs=1e-12)

    def test_separated_centers_all_near_one(self):
        sigma = 35.0
        centers = [(100.0, 100.0), (600.0, 100.0), (350.0, 600.0)]
        w = blend_weight_field(centers, sigma, width=700, height=700)
        for x, y in centers:
            assert w[int(y), int(x)] == pytest.approx(1.0, abs=1e-3)

    def test_two_sigma_falloff(self):
        sigma = 35.0
        w = blend_weight_field(
            [(100.0, 100.0), (600.0, 100.0), (350.0, 600.0)], sigma, 700, 700
        )
        assert w[100, 100 + 70] == pytest.approx(math.exp(-2), abs=1e-3)

    @given(
        seed=st.integers(0, 10_000),
        sigma=st.floats(min_value=3.0, max_value=40.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_max_normalization_property(self, seed, sigma):
        gen = np.random.default_rng(seed)
        centers = [(float(gen.uniform(0, 127)), float(gen.uniform(0, 127)))
                   for _ in range(3)]
        w = blend_weight_field(centers, sigma, 128, 128)
        assert w.max() == pytest.approx(1.0, abs=1e-9)
        assert w.min() >= 0.0

    def test_degenerate_sigma(self):
        with pytest.raises(DomainError):
            blend_weight_field([(1, 1)] * 3, sigma=0, width=10, height=10)


class TestSynthesizeGoldFrame:
    def _img(self, value, shape=(8, 8, 3)):
        return RasterImage(np.full(shape, value, dtype=np.uint8))

    def test_degenerate_blends(self):
        a, b = self._img(100), self._img(200)
        zeros = np.zeros((8, 8))
        ones = np.ones((8, 8))
        assert synthesize_gold_frame(a, b, zeros).same_pixels(a)
        assert synthesize_gold_frame(a, b, ones).same_pixels(b)

    def test_quarter_blend(self):
        a, b = self._img(100), self._img(200)
        w = np.full((8, 8), 0.25)
        out = synthesize_gold_frame(a, b, w)
        assert (out.pixels == 125).all()

    def test_interpolation_bounds(self, rng):
        a = RasterImage(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        b = RasterImage(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        w = rng.uniform(0, 1, (16, 16))
        out = synthesize_gold_frame(a, b, w).pixels
        lo = np.minimum(a.pixels, b.pixels)
        hi = np.maximum(a.pixels, b.pixels)
        assert (out >= lo).all() and (out <= hi).all()

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            synthesize_gold_frame(self._img(1), self._img(1, (9, 8, 3)),
                                  np.zeros((8, 8)))


class TestGoldPjndRange:
    def test_analytic_interval(self):
        assert gold_pjnd_range(40, 4) == (36, 44)

    def test_collapses_at_small_scale(self):
        assert gold_pjnd_range(50, 1e-9) == (50, 50)

    def test_left_clamp(self):
        assert gold_pjnd_range(3, 4) == (1, 7)

    def test_symmetric_before_clamping(self):
        for d0, s in [(50, 4), (30, 7.5), (70, 2.2)]:
            half = s * math.log(3)
            lo, hi = gold_pjnd_range(d0, s)
            assert lo == math.ceil(d0 - half)
            assert hi == math.floor(d0 + half)

    def test_bad_scale(self):
        with pytest.raises(DomainError):
            gold_pjnd_range(50, 0)


@pytest.fixture(scope="module")
def ladders(jpeg_adapter):
    gen = np.random.default_rng(3)
    source = RasterImage(gen.integers(0, 256, (48, 48, 3), dtype=np.uint8))
    spec = make_gold_spec(
        centers=[(10.0, 10.0), (38.0, 10.0), (24.0, 38.0)],
        pjnd_range=(40, 44), sigma=6.0,
    )
    plain = build_ladder(source, Codec.JPEG, jpeg_adapter, source_id="src")
    gold = build_gold_ladder(source, Codec.JPEG, jpeg_adapter, spec,
                             plain_ladder=plain)
    return plain, gold, spec


class TestBuildGoldLadder:

    def test_structure(self, ladders):
        _, gold, _ = ladders
        assert len(gold.frames) == 101
        assert gold.source_id == "gold-src"

    def test_outside_range_untouched(self, ladders):
        plain, gold, spec = ladders
        lo, hi = spec.pjnd_range
        for d in [0, lo - 1, hi + 1, 100]:
            assert gold.frames[d].same_pixels(plain.frames[d])

    def test_inside_range_pulled_toward_stronger(self, ladders):
        plain, gold, spec = ladders
        lo, hi = spec.pjnd_range
        d = (lo + hi) // 2
        partner = stronger_level(Codec.JPEG, d)
        cx, cy = map(int, spec.centers[0])
        patch = (slice(cy - 2, cy + 3), slice(cx - 2, cx + 3))
        blended = gold.frames[d].pixels[patch].astype(float)
        plain_d = plain.frames[d].pixels[patch].astype(float)
        strong = plain.frames[partner].pixels[patch].astype(float)
        dist_strong = np.abs(blended - strong).sum()
        dist_plain_to_strong = np.abs(plain_d - strong).sum()
        assert dist_strong < dist_plain_to_strong


class TestSelectGtCenters:
    def _bump_map(self, centers_heights, size=300, sigma=12.0):
        yy, xx = np.mgrid[0:size, 0:size].astype(float)
        total = np.zeros((size, size))
        for (x, y), h in centers_heights:
            total += h * np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * sigma**2))
        return total / total.max()

    def test_three_tallest_of_four(self):
        spots = [((50.0, 50.0), 1.0), ((250.0, 50.0), 0.8),
                 ((50.0, 250.0), 0.6), ((250.0, 250.0), 0.1)]
        m = self._bump_map(spots)
        picked = select_gt_centers(m, bandwidth=12.0)
        expected = [(50.0, 50.0), (250.0, 50.0), (50.0, 250.0)]
        for (px, py), (ex, ey) in zip(picked, expected):
            assert math.hypot(px - ex, py - ey) < 6.0

    def test_mode_deficit(self):
        m = self._bump_map([((150.0, 150.0), 1.0)])
        with pytest.raises(SelectionError):
            select_gt_centers(m, bandwidth=12.0)

    def test_permutation_invariance_of_construction(self):
        spots = [((60.0, 60.0), 1.0), ((240.0, 60.0), 0.8), ((150.0, 240.0), 0.6)]
        a = select_gt_centers(self._bump_map(spots), bandwidth=12.0)
        b = select_gt_centers(self._bump_map(list(reversed(spots))), bandwidth=12.0)
        for (ax, ay), (bx, by) in zip(a, b):
            assert math.hypot(ax - bx, ay - by) < 1.0


def _response(level, clicks, worker="w1"):
    return Response(worker_id=worker, hit_id="h1", image_ref="gold-src",
                    level=level, clicks=clicks, started_at=0.0, submitted_at=1.0)


class TestValidateGoldResponse:
    def test_distance_threshold(self, gold_spec):
        near = _response(40, [(100, 169), (500, 500), (501, 500)])
        spec = make_gold_spec(centers=[(100.0, 100.0), (600.0, 100.0), (350.0, 600.0)])
        assert validate_gold_response(near, spec).hits == 1
        far = _response(40, [(100, 171), (900, 900), (901, 900)])
        assert validate_gold_response(far, spec).hits == 0

    def test_conjunction_rule(self, gold_spec):
        two_hits = [gold_spec.centers[0], gold_spec.centers[1], (999.0, 999.0)]
        inside = _response(40, two_hits)
        assert validate_gold_response(inside, gold_spec).correct is True
        all_hits = list(gold_spec.centers)
        outside = _response(60, all_hits)
        assert validate_gold_response(outside, gold_spec).correct is False

    def test_truth_table(self, gold_spec):
        far = (999.0, 999.0)
        for pjnd_in in (True, False):
            level = 40 if pjnd_in else 90
            for hits in range(4):
                clicks = list(gold_spec.centers[:hits]) + [far] * (3 - hits)
                v = validate_gold_response(_response(level, clicks), gold_spec)
                assert v.pjnd_ok is pjnd_in
                assert v.hits == hits
                assert v.correct is (pjnd_in and hits >= 2)

    @given(
        click_perm=st.permutations(range(3)),
        center_perm=st.permutations(range(3)),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariance(self, click_perm, center_perm, seed):
        gen = np.random.default_rng(seed)
        centers = [tuple(gen.uniform(0, 500, 2)) for _ in range(3)]
        clicks = [tuple(gen.uniform(0, 500, 2)) for _ in range(3)]
        base = count_region_hits(clicks, centers, sigma=35.0)
        shuffled = count_region_hits(
            [clicks[i] for i in click_perm],
            [centers[i] for i in center_perm],
            sigma=35.0,
        )
        assert shuffled == base

    def test_one_click_one_center(self):
        # a single click between two overlapping regions covers only one
        centers = [(100.0, 100.0), (120.0, 100.0), (900.0, 900.0)]
        hits = count_region_hits([(110.0, 100.0), (0.0, 900.0), (900.0, 0.0)],
                                 centers, sigma=35.0)
        assert hits == 1

    def test_malformed_click_count(self, gold_spec):
        with pytest.raises(Exception):
            _response(40, [(1, 1)])


class TestGoldValidationInvariant:
    @given(pjnd_ok=st.booleans(), hits=st.integers(0, 3))
    def test_correct_definition(self, pjnd_ok, hits):
        v = GoldValidation(pjnd_ok=pjnd_ok, hits=hits)
        assert v.correct == (pjnd_ok and hits >= 2)


class TestDrawGoldSpec:
    def test_jpeg_cap_and_determinism(self):
        centers = [(100.0, 100.0), (300.0, 100.0), (200.0, 300.0)]
        a = draw_gold_spec(np.random.default_rng(5), "s", Codec.JPEG, centers, 85.0)
        b = draw_gold_spec(np.random.default_rng(5), "s", Codec.JPEG, centers, 85.0)
        assert a.pjnd_range == b.pjnd_range
        assert a.pjnd_range[1] <= 90

    def test_serialization_roundtrip(self, tmp_path):
        centers = [(10.0, 10.0), (60.0, 10.0), (35.0, 60.0)]
        spec = draw_gold_spec(np.random.default_rng(1), "s", Codec.JPEG, centers, 50.0)
        path = tmp_path / "s.json"
        spec.save(path)
        from jndcrowd.goldgen import GoldSpec

        loaded = GoldSpec.load(path)
        assert loaded.pjnd_range == spec.pjnd_range
        assert loaded.centers == spec.centers
        assert loaded.codec == spec.codec
