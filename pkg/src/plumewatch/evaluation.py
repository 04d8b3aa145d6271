"""Scene-level and segmentation metrics, workload curves and the logistic
probability-of-detection fit.

Undefined metrics (empty denominators, no positives) are returned as ``None``
and rendered as a "n/a" marker in reports — never silently as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .analysis import connected_components
from .errors import FitError
from .validation import check_binary_mask, check_same_shape

NOT_APPLICABLE = "n/a"


@dataclass(frozen=True)
class ScoredScene:
    """One evaluated scene: model score vs ground truth."""

    scene_ref: str
    score: float
    has_plume: bool
    flux_t_per_h: float | None = None
    pred_mask: np.ndarray | None = None
    true_mask: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def confusion_metrics(scenes: list[ScoredScene], threshold: float = 0.5) -> dict:
    """precision/recall/FPR/accuracy at ``prediction = score >= threshold``."""
    if not scenes:
        raise ValueError("no scenes to evaluate")
    pred = np.array([s.score >= threshold for s in scenes])
    truth = np.array([s.has_plume for s in scenes])
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))

    def ratio(num, den):
        return num / den if den else None

    return {
        "precision": ratio(tp, tp + fp),
        "recall": ratio(tp, tp + fn),
        "fpr": ratio(fp, fp + tn),
        "accuracy": (tp + tn) / len(scenes),
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
    }


def average_precision(scenes: list[ScoredScene]) -> float | None:
    """Area under the precision-recall step curve over distinct thresholds.

    Equal scores are grouped so ordering inside a tie cannot change the
    result; returns None when there are no positives.
    """
    n_pos = sum(s.has_plume for s in scenes)
    if n_pos == 0:
        return None
    scores = np.array([s.score for s in scenes])
    truth = np.array([s.has_plume for s in scenes])
    order = np.argsort(-scores, kind="stable")
    scores, truth = scores[order], truth[order]

    ap = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    n = len(scenes)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(truth[i:j].sum())
        fp += (j - i) - int(truth[i:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return ap


def segmentation_metrics(pred_mask: np.ndarray, true_mask: np.ndarray) -> dict:
    """Pixel-level counts; IoU of two empty masks is 1 by convention."""
    pred_mask = check_binary_mask(pred_mask, "pred_mask")
    true_mask = check_binary_mask(true_mask, "true_mask")
    check_same_shape(pred_mask, true_mask, names=["pred_mask", "true_mask"])
    tp = int(np.sum(pred_mask & true_mask))
    fp = int(np.sum(pred_mask & ~true_mask))
    fn = int(np.sum(~pred_mask & true_mask))
    tn = int(np.sum(~pred_mask & ~true_mask))
    union = tp + fp + fn

    def ratio(num, den):
        return num / den if den else None

    return {
        "precision": ratio(tp, tp + fp),
        "recall": ratio(tp, tp + fn),
        "accuracy": (tp + tn) / pred_mask.size,
        "fpr": ratio(fp, fp + tn),
        "iou": tp / union if union else 1.0,
    }


def recall_by_flux(scenes: list[ScoredScene], flux_edges, threshold: float = 0.5) -> list[dict]:
    """Cumulative recall over positives with flux >= q, for each edge q."""
    out = []
    for q in flux_edges:
        eligible = [s for s in scenes if s.has_plume and s.flux_t_per_h is not None and s.flux_t_per_h >= q]
        if not eligible:
            out.append({"flux_min": q, "recall": None, "n": 0})
            continue
        detected = sum(s.score >= threshold for s in eligible)
        out.append({"flux_min": q, "recall": detected / len(eligible), "n": len(eligible)})
    return out


def workload_curve(scenes: list[ScoredScene]) -> dict:
    """Plumes found vs images reviewed when ordered by descending score.

    Ties keep the input order (stable sort). Also reports the review-reduction
    factor vs the random-order expectation at 80% of plumes found.
    """
    order = np.argsort([-s.score for s in scenes], kind="stable")
    truth = np.array([scenes[i].has_plume for i in order])
    cumulative = np.cumsum(truth)
    n_pos = int(truth.sum())
    n = len(scenes)
    curve = [(int(i + 1), int(c)) for i, c in enumerate(cumulative)]
    reduction = None
    if n_pos > 0:
        target = int(np.ceil(0.8 * n_pos))
        reviewed = int(np.searchsorted(cumulative, target) + 1)
        # under random ordering, finding a fraction f of plumes takes f*n reviews
        expected_random = target / n_pos * n
        reduction = expected_random / reviewed
    return {
        "curve": curve,
        "n_positives": n_pos,
        "review_reduction_at_80pct": reduction,
    }


# ---------------------------------------------------------------------------
# probability of detection


@dataclass(frozen=True)
class PoDCurve:
    """Logistic detection-probability curve PoD(q) = 1/(1+exp(-(q-q50)/s))."""

    q50: float
    s: float
    covariance: np.ndarray

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("logistic scale must be positive")

    @property
    def q90(self) -> float:
        return self.q50 + self.s * float(np.log(9.0))

    def probability(self, flux):
        return 1.0 / (1.0 + np.exp(-(np.asarray(flux) - self.q50) / self.s))


def _logistic(q, q50, s):
    return 1.0 / (1.0 + np.exp(-(q - q50) / s))


def fit_pod(detections: list[tuple[float, bool]], min_bins: int = 8) -> PoDCurve:
    """Least-squares logistic fit to binned detection frequencies.

    ``detections`` pairs a flux (t/h) with whether that plume was detected.
    Bins are equal-count; needs at least 10 points including both outcomes.
    """
    if len(detections) < 10:
        raise FitError(f"need >= 10 points, got {len(detections)}")
    flux = np.array([d[0] for d in detections], dtype=np.float64)
    hit = np.array([bool(d[1]) for d in detections])
    if hit.all() or not hit.any():
        raise FitError("degenerate data: all detected or none detected")

    n_bins = max(min_bins, min(20, len(detections) // 50))
    n_bins = min(n_bins, len(detections) // 2)
    order = np.argsort(flux)
    splits = np.array_split(order, n_bins)
    centers = np.array([flux[idx].mean() for idx in splits if len(idx)])
    freqs = np.array([hit[idx].mean() for idx in splits if len(idx)])

    q50_guess = float(centers[np.argmin(np.abs(freqs - 0.5))])
    s_guess = max(0.1, float(np.std(flux) / 2))
    try:
        popt, pcov = curve_fit(
            _logistic, centers, freqs, p0=[q50_guess, s_guess],
            bounds=([-np.inf, 1e-6], [np.inf, np.inf]), maxfev=10000,
        )
    except RuntimeError as exc:
        raise FitError(f"logistic fit failed: {exc}") from exc
    return PoDCurve(q50=float(popt[0]), s=float(popt[1]), covariance=pcov)


# ---------------------------------------------------------------------------
# physics-threshold baseline


def mbmp_baseline_score(
    retrieval,
    threshold: float = 0.99,
    k: int = 100,
    valid: np.ndarray | None = None,
) -> bool:
    """Positive iff the {ratio <= threshold} mask has a >= k component.

    The direct physics baseline: low ratio means methane absorption, so the
    mask collects pixels at or below the threshold.
    """
    ratio = np.asarray(retrieval.ratio, dtype=np.float64)
    mask = np.isfinite(ratio) & (ratio <= threshold)
    if valid is not None:
        mask &= check_binary_mask(valid)
    if int(mask.sum()) < k:
        return False
    _, sizes = connected_components(mask, 8)
    return bool(len(sizes) and sizes.max() >= k)


# ---------------------------------------------------------------------------
# report output


def _display(value):
    return NOT_APPLICABLE if value is None else value


def write_metrics_json(path, metrics: dict) -> None:
    Path(path).write_text(json.dumps(metrics, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_threshold_sweep_csv(path, scenes: list[ScoredScene], thresholds) -> None:
    """CSV table of AP/precision/recall/FPR across decision thresholds."""
    ap = average_precision(scenes)
    lines = ["threshold,ap,precision,recall,fpr,accuracy"]
    for t in thresholds:
        m = confusion_metrics(scenes, threshold=t)
        lines.append(
            f"{t},{_display(ap)},{_display(m['precision'])},"
            f"{_display(m['recall'])},{_display(m['fpr'])},{m['accuracy']}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
