import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jndcrowd.errors import DomainError, PipelineError
from jndcrowd.qc import (
    QcReport,
    aggregate,
    compare_datasets,
    export_dataset,
    filter_extreme,
    hit_level_outlier_removal,
    linfit,
    remove_rejected_workers,
    run_qc,
    srocc,
)


def _resp(worker, image, level, template=0, clicks=None, is_gold=False):
    return {
        "type": "response",
        "worker_id": worker,
        "hit_id": f"h-{worker}-{template}",
        "image_ref": image,
        "level": level,
        "clicks": clicks or [[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]],
        "template_id": template,
        "is_gold": is_gold,
    }


class TestRemoveRejected:
    def test_drops_all_of_worker(self):
        responses = [_resp("w1", "a", 40), _resp("w2", "a", 42),
                     _resp("w1", "b", 50)]
        kept, n = remove_rejected_workers(responses, {"w1"})
        assert n == 2
        assert all(r["worker_id"] == "w2" for r in kept)

    def test_noop_without_rejections(self):
        responses = [_resp("w1", "a", 40)]
        kept, n = remove_rejected_workers(responses, set())
        assert n == 0 and kept == responses


class TestHitLevelOutlierRemoval:
    def _template(self, levels_by_worker, template=0):
        out = []
        for w, levels in levels_by_worker.items():
            for i, lv in enumerate(levels):
                out.append(_resp(w, f"im{i}", lv, template=template))
        return out

    def test_single_clear_outlier(self):
        # 10 workers: ceil(0.1 * 10) = 1 removed, the deviant one
        good = {f"w{i:02d}": [40, 50, 60] for i in range(9)}
        good["w99"] = [5, 95, 5]
        kept, n = hit_level_outlier_removal(self._template(good))
        assert n == 3
        assert all(r["worker_id"] != "w99" for r in kept)

    def test_removed_count_is_ceiling(self):
        # 11 workers -> ceil(1.1) = 2 removed
        responses = self._template(
            {f"w{i:02d}": [40 + i, 50 + i] for i in range(11)}
        )
        kept, n = hit_level_outlier_removal(responses)
        assert n == 4  # 2 workers x 2 responses

    def test_tie_breaks_to_higher_worker_id(self):
        # symmetric pair deviates equally; the higher id goes
        responses = self._template({"w1": [40], "w2": [60], "w3": [50],
                                    "w4": [50], "w5": [50], "w6": [50],
                                    "w7": [50], "w8": [50], "w9": [50],
                                    "w0": [50]})
        kept, _ = hit_level_outlier_removal(responses)
        survivors = {r["worker_id"] for r in kept}
        assert "w2" not in survivors and "w1" in survivors

    def test_templates_independent(self):
        a = self._template({f"w{i}": [50] for i in range(5)}, template=0)
        b = self._template({f"v{i}": [50] for i in range(5)}, template=1)
        kept, n = hit_level_outlier_removal(a + b)
        # one worker removed per template
        assert n == 2
        assert len({r["template_id"] for r in kept}) == 2

    def test_idempotent_on_survivors(self):
        gen = np.random.default_rng(3)
        responses = self._template(
            {f"w{i:02d}": list(gen.integers(30, 70, size=4)) for i in range(20)}
        )
        kept, _ = hit_level_outlier_removal(responses)
        # applying the filter again uses fresh means; survivors may shuffle,
        # but the pipeline never resurrects removed responses
        kept2, _ = hit_level_outlier_removal(kept)
        assert all(r in kept for r in kept2)


class TestFilterExtreme:
    @pytest.mark.parametrize("level,keep", [(4, False), (5, True),
                                            (95, True), (96, False)])
    def test_boundaries(self, level, keep):
        kept, _ = filter_extreme([_resp("w", "a", level)])
        assert bool(kept) is keep

    def test_conservation(self):
        responses = [_resp("w", "a", lv) for lv in range(0, 101, 5)]
        kept, n = filter_extreme(responses)
        assert len(kept) + n == len(responses)


class TestRunQc:
    def test_stage_order_and_accounting(self):
        events = [{"type": "session"}]
        events += [_resp("bad", f"im{i}", 50) for i in range(3)]
        for w in range(10):
            for i in range(3):
                events.append(_resp(f"w{w:02d}", f"im{i}", 50 if w else 2))
        kept, report = run_qc(events, rejected_worker_ids={"bad"})
        d = report.to_dict()
        assert d["responses_in"] == 33
        assert d["stages"][0] == {"stage": "rejected_workers", "removed": 3}
        # w00 rated 2 everywhere: it is both the template outlier and extreme,
        # but the HIT-level stage runs first and claims it
        assert d["stages"][1]["removed"] == 3
        assert d["stages"][2]["removed"] == 0
        assert d["responses_out"] == len(kept) == 27

    def test_non_response_events_ignored(self):
        events = [{"type": "hit_completed"}, {"type": "quiz_result"}]
        kept, report = run_qc(events, set())
        assert kept == [] and report.responses_in == 0


def _naive_srocc(x, y):
    """Oracle: explicit midrank formula, then Pearson by hand."""
    def ranks(v):
        return [
            1 + sum(1 for o in v if o < e) + sum(1 for j, o in enumerate(v)
                                                 if o == e and j != i) / 2
            for i, e in enumerate(v)
        ]
    rx, ry = ranks(list(x)), ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx)
                    * sum((b - my) ** 2 for b in ry))
    return num / den


class TestSrocc:
    def test_perfect(self):
        assert srocc([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_reversed(self):
        assert srocc([1, 2, 3, 4], [40, 30, 20, 10]) == pytest.approx(-1.0)

    def test_invariant_under_monotone_transform(self):
        gen = np.random.default_rng(5)
        x = gen.normal(size=50)
        y = gen.normal(size=50)
        base = srocc(x, y)
        assert srocc(np.exp(x), y) == pytest.approx(base)
        assert srocc(x, 2 * y + 7) == pytest.approx(base)
        assert srocc(x, y**3) == pytest.approx(base)

    def test_ties_match_oracle(self):
        x = [1, 2, 2, 3, 3, 3, 4]
        y = [2, 1, 4, 4, 5, 6, 6]
        assert srocc(x, y) == pytest.approx(_naive_srocc(x, y), abs=1e-12)

    @given(seed=st.integers(0, 10_000), n=st.integers(3, 30))
    @settings(max_examples=60, deadline=None)
    def test_matches_oracle(self, seed, n):
        gen = np.random.default_rng(seed)
        x = gen.integers(0, 8, size=n).astype(float)  # many ties
        y = gen.normal(size=n)
        if len(set(x)) < 2:
            return
        assert srocc(x, y) == pytest.approx(_naive_srocc(x, y), abs=1e-9)

    def test_constant_input_rejected(self):
        with pytest.raises(DomainError):
            srocc([1, 1, 1], [1, 2, 3])


class TestLinfit:
    def test_exact_line(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        slope, intercept = linfit(x, 0.65 * x + 29.73)
        assert slope == pytest.approx(0.65)
        assert intercept == pytest.approx(29.73)

    def test_residuals_orthogonal_to_x(self):
        gen = np.random.default_rng(0)
        x = gen.normal(size=40)
        y = 2 * x + gen.normal(size=40)
        slope, intercept = linfit(x, y)
        residuals = y - (slope * x + intercept)
        assert abs(float(residuals @ x)) < 1e-9
        assert abs(float(residuals.sum())) < 1e-9

    def test_constant_x_rejected(self):
        with pytest.raises(DomainError):
            linfit([2, 2, 2], [1, 2, 3])


class TestAggregate:
    def test_mean_and_std(self):
        responses = [_resp("w1", "a", 40), _resp("w2", "a", 44)]
        anns = aggregate(responses, {"a": (64, 64)}, sigma_blur=4.0)
        assert len(anns) == 1
        assert anns[0].mean_pjnd == 42
        assert anns[0].std_pjnd == pytest.approx(2.8284271, abs=1e-6)
        assert len(anns[0].clicks.clicks) == 6

    def test_single_sample_std_none(self):
        anns = aggregate([_resp("w1", "a", 40)], {"a": (64, 64)},
                         sigma_blur=4.0)
        assert anns[0].std_pjnd is None

    def test_gold_responses_skipped(self):
        responses = [_resp("w1", "a", 40),
                     _resp("w1", "gold-x", 40, is_gold=True)]
        anns = aggregate(responses, {"a": (64, 64)}, build_maps=False)
        assert [a.image_id for a in anns] == ["a"]

    def test_map_peaks_at_click_cluster(self):
        responses = [
            _resp(f"w{i}", "a", 40, clicks=[[32.0, 32.0]] * 3)
            for i in range(4)
        ]
        anns = aggregate(responses, {"a": (64, 64)}, sigma_blur=4.0)
        m = anns[0].map_values
        y, x = np.unravel_index(np.argmax(m), m.shape)
        assert (x, y) == (32, 32)


class TestCompareAndExport:
    def _annotations(self, n=20, seed=0):
        gen = np.random.default_rng(seed)
        responses = []
        for i in range(n):
            mean = float(gen.uniform(20, 80))
            for w in range(3):
                responses.append(_resp(f"w{w}", f"im{i:03d}",
                                       int(round(mean + w - 1))))
        return aggregate(responses, {f"im{i:03d}": (64, 64) for i in range(n)},
                         sigma_blur=4.0)

    def test_self_comparison(self):
        anns = self._annotations()
        ref = {a.image_id: a.mean_pjnd for a in anns}
        report = compare_datasets(anns, ref, codec="jpeg")
        assert report["srocc"] == pytest.approx(1.0)
        assert report["regression"]["slope"] == pytest.approx(1.0)
        assert report["regression"]["intercept"] == pytest.approx(0.0, abs=1e-9)
        assert report["mean_signed_difference"] == pytest.approx(0.0, abs=1e-9)

    def test_shifted_reference(self):
        anns = self._annotations()
        ref = {a.image_id: a.mean_pjnd - 5 for a in anns}
        report = compare_datasets(anns, ref, codec="jpeg")
        assert report["srocc"] == pytest.approx(1.0)
        assert report["mean_signed_difference"] == pytest.approx(5.0)

    def test_no_overlap_rejected(self):
        with pytest.raises(PipelineError):
            compare_datasets(self._annotations(), {"zzz": 40.0}, codec="jpeg")

    def test_export_layout_and_counts(self, tmp_path):
        anns = self._annotations(n=5)
        manifest = export_dataset(anns, tmp_path / "ds")
        assert manifest["n_images"] == 5
        assert manifest["n_pjnd_samples"] == 15
        assert manifest["n_clicks"] == 45
        files = sorted(p.name for p in (tmp_path / "ds" / "images").iterdir())
        assert files == [f"im{i:03d}.json" for i in range(5)]
        assert (tmp_path / "ds" / "maps" / "im000.png").exists()
        record = json.loads((tmp_path / "ds" / "images" / "im000.json").read_text())
        assert record["codec"] == "jpeg"
        assert len(record["pjnd_samples"]) == 3

    def test_export_deterministic(self, tmp_path):
        anns = self._annotations(n=3)
        export_dataset(anns, tmp_path / "a")
        export_dataset(anns, tmp_path / "b")
        for name in ["manifest.json", "images/im000.json"]:
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())
        assert ((tmp_path / "a" / "maps" / "im000.png").read_bytes()
                == (tmp_path / "b" / "maps" / "im000.png").read_bytes())

    def test_export_empty_rejected(self, tmp_path):
        with pytest.raises(PipelineError):
            export_dataset([], tmp_path / "ds")
