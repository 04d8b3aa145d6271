import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plumewatch.errors import FitError
from plumewatch.evaluation import (
    PoDCurve,
    ScoredScene,
    average_precision,
    confusion_metrics,
    fit_pod,
    mbmp_baseline_score,
    recall_by_flux,
    segmentation_metrics,
    workload_curve,
)
from plumewatch.retrieval import RetrievalProduct


def _scenes(scores, labels, fluxes=None):
    fluxes = fluxes or [None] * len(scores)
    return [
        ScoredScene(scene_ref=f"s{i}", score=s, has_plume=bool(l), flux_t_per_h=f)
        for i, (s, l, f) in enumerate(zip(scores, labels, fluxes))
    ]


class TestConfusionMetrics:
    def test_hand_enumerated_case(self):
        m = confusion_metrics(_scenes([0.9, 0.6, 0.4], [1, 1, 0]), threshold=0.5)
        assert m["precision"] == 1.0
        assert m["recall"] == 1.0
        assert m["fpr"] == 0.0
        assert m["accuracy"] == 1.0

    def test_all_negative_labels_give_recall_sentinel(self):
        m = confusion_metrics(_scenes([0.9, 0.2], [0, 0]), threshold=0.5)
        assert m["recall"] is None
        assert m["fpr"] == 0.5

    def test_no_predictions_give_precision_sentinel(self):
        m = confusion_metrics(_scenes([0.1, 0.2], [1, 0]), threshold=0.5)
        assert m["precision"] is None

    def test_recall_and_fpr_non_increasing_in_threshold(self):
        rng = np.random.default_rng(0)
        scenes = _scenes(rng.random(200).tolist(), (rng.random(200) < 0.3).tolist())
        prev_recall, prev_fpr = 1.1, 1.1
        for t in (0.5, 0.9, 0.98):
            m = confusion_metrics(scenes, threshold=t)
            assert m["recall"] <= prev_recall
            assert m["fpr"] <= prev_fpr
            prev_recall, prev_fpr = m["recall"], m["fpr"]


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision(_scenes([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])) == 1.0

    def test_inverted_ranking_single_positive(self):
        n = 5
        scores = [0.9, 0.8, 0.7, 0.6, 0.5]
        labels = [0, 0, 0, 0, 1]
        assert average_precision(_scenes(scores, labels)) == pytest.approx(1 / n)

    def test_no_positives_sentinel(self):
        assert average_precision(_scenes([0.5], [0])) is None

    def test_ties_grouped(self):
        # one positive and one negative sharing a score: precision at that
        # threshold counts both
        ap = average_precision(_scenes([0.7, 0.7], [1, 0]))
        assert ap == pytest.approx(0.5)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 200))
    def test_matches_bruteforce_enumeration(self, seed, n):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.random(n), 2)  # force ties
        labels = rng.random(n) < 0.4
        if not labels.any():
            labels[0] = True
        scenes = _scenes(scores.tolist(), labels.tolist())

        # oracle: walk thresholds, accumulate step-curve area
        n_pos = int(labels.sum())
        ap = 0.0
        prev_recall = 0.0
        for t in sorted(set(scores), reverse=True):
            pred = scores >= t
            tp = int((pred & labels).sum())
            precision = tp / int(pred.sum())
            recall = tp / n_pos
            ap += (recall - prev_recall) * precision
            prev_recall = recall
        assert average_precision(scenes) == pytest.approx(ap, abs=1e-12)


class TestSegmentationMetrics:
    def test_identical_masks(self):
        mask = np.random.default_rng(0).random((8, 8)) < 0.4
        m = segmentation_metrics(mask, mask)
        assert m["iou"] == 1.0
        assert m["recall"] == (1.0 if mask.any() else None)

    def test_disjoint_masks(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        assert segmentation_metrics(a, b)["iou"] == 0.0

    def test_half_overlap_rectangles(self):
        pred = np.zeros((8, 8), dtype=bool)
        true = np.zeros((8, 8), dtype=bool)
        pred[0:4, 0:4] = True       # 16 px
        true[0:4, 2:6] = True       # 16 px, overlap 8 -> union 24
        assert segmentation_metrics(pred, true)["iou"] == pytest.approx(1 / 3)

    def test_empty_union_iou_is_one(self):
        empty = np.zeros((4, 4), dtype=bool)
        assert segmentation_metrics(empty, empty)["iou"] == 1.0


class TestRecallByFlux:
    def test_all_detected_above_five(self):
        scenes = _scenes([0.9, 0.8, 0.1], [1, 1, 0], fluxes=[6.0, 9.0, None])
        rows = recall_by_flux(scenes, [5.0])
        assert rows[0]["recall"] == 1.0

    def test_recall_direction_with_flux(self):
        rng = np.random.default_rng(1)
        fluxes = rng.uniform(0.5, 10, 300)
        detected = rng.random(300) < np.clip(fluxes / 8, 0, 1)  # big plumes easier
        scenes = _scenes(
            [0.9 if d else 0.1 for d in detected], [1] * 300, fluxes=fluxes.tolist()
        )
        rows = recall_by_flux(scenes, [0.0, 5.0])
        assert rows[1]["recall"] >= rows[0]["recall"]

    def test_empty_bucket_sentinel(self):
        scenes = _scenes([0.9], [1], fluxes=[1.0])
        rows = recall_by_flux(scenes, [5.0])
        assert rows[0]["recall"] is None


class TestWorkloadCurve:
    def test_perfect_scorer_prefix(self):
        scenes = _scenes([0.9, 0.8, 0.7, 0.2, 0.1], [1, 1, 1, 0, 0])
        wl = workload_curve(scenes)
        assert wl["curve"][:3] == [(1, 1), (2, 2), (3, 3)]

    def test_constant_scores_keep_input_order(self):
        scenes = _scenes([0.5] * 4, [0, 1, 0, 1])
        wl = workload_curve(scenes)
        assert [c for _, c in wl["curve"]] == [0, 1, 1, 2]

    def test_curve_bounded_and_monotone(self):
        rng = np.random.default_rng(2)
        scenes = _scenes(rng.random(50).tolist(), (rng.random(50) < 0.3).tolist())
        wl = workload_curve(scenes)
        counts = [c for _, c in wl["curve"]]
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] == wl["n_positives"]

    def test_review_reduction_perfect_scorer(self):
        # 10 positives in 100 scenes, perfectly ranked: 80% found after 8
        # reviews vs 80 expected at random -> factor 10
        scores = [1.0] * 10 + [0.0] * 90
        labels = [1] * 10 + [0] * 90
        wl = workload_curve(_scenes(scores, labels))
        assert wl["review_reduction_at_80pct"] == pytest.approx(10.0)


class TestPodFit:
    def _draws(self, rng, n=2000, q50=2.0, s=0.3, flux_range=(0.25, 4.5)):
        flux = rng.uniform(*flux_range, size=n)
        p = 1.0 / (1.0 + np.exp(-(flux - q50) / s))
        return list(zip(flux.tolist(), (rng.random(n) < p).tolist()))

    def test_recovers_generator_parameters(self):
        rng = np.random.default_rng(0)
        pod = fit_pod(self._draws(rng))
        assert pod.q50 == pytest.approx(2.0, abs=0.1)
        assert pod.s == pytest.approx(0.3, abs=0.1)

    def test_q90_identity(self):
        pod = PoDCurve(q50=2.0, s=0.3, covariance=np.eye(2))
        assert pod.q90 == 2.0 + 0.3 * np.log(9.0)

    def test_symmetric_data_puts_half_probability_at_q50(self):
        rng = np.random.default_rng(1)
        pod = fit_pod(self._draws(rng, n=4000))
        assert pod.probability(pod.q50) == pytest.approx(0.5, abs=1e-9)
        assert 0.4 < float(pod.probability(2.0)) < 0.6

    def test_degenerate_all_detected_raises(self):
        with pytest.raises(FitError):
            fit_pod([(float(f), True) for f in np.linspace(1, 5, 30)])

    def test_too_few_points_raises(self):
        with pytest.raises(FitError):
            fit_pod([(1.0, True), (2.0, False)])

    def test_recovery_across_seeds(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            pod = fit_pod(self._draws(rng))
            if abs(pod.q50 - 2.0) <= 0.1 and abs(pod.s - 0.3) <= 0.1:
                hits += 1
        assert hits >= 18


class TestMbmpBaseline:
    def test_unit_ratio_is_negative(self):
        product = RetrievalProduct(ratio=np.ones((64, 64)), method="MBMP")
        assert mbmp_baseline_score(product) is False

    def test_low_ratio_blob_detected(self):
        ratio = np.ones((64, 64))
        ratio[10:25, 10:20] = 0.95  # 150 px
        product = RetrievalProduct(ratio=ratio, method="MBMP")
        assert mbmp_baseline_score(product, threshold=0.99, k=100) is True

    def test_small_blob_not_detected(self):
        ratio = np.ones((64, 64))
        ratio[10:15, 10:20] = 0.9  # 50 px
        product = RetrievalProduct(ratio=ratio, method="MBMP")
        assert mbmp_baseline_score(product, threshold=0.99, k=100) is False

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            ratio = 1.0 + 0.05 * rng.standard_normal((48, 48))
            product = RetrievalProduct(ratio=ratio, method="MBMP")
            at_090 = mbmp_baseline_score(product, threshold=0.90, k=25)
            at_099 = mbmp_baseline_score(product, threshold=0.99, k=25)
            if at_090:
                assert at_099  # {ratio<=0.90} is a subset of {ratio<=0.99}

    def test_nan_pixels_never_count(self):
        ratio = np.full((32, 32), np.nan)
        product = RetrievalProduct(ratio=ratio, method="MBMP")
        assert mbmp_baseline_score(product, k=1) is False
