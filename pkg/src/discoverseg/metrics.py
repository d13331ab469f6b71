"""Masked segmentation metrics and dataset-level cluster matching.

Known and unknown actions are evaluated separately: when scoring one scope,
frames whose ground-truth label belongs to the other scope are replaced by
an ignore sentinel in both sequences. Ignored runs act as separators, so a
segment interrupted by a masked gap counts as two segments and never merges
across the gap. Discovered unknown classes are aligned to ground-truth
unknown classes once per dataset by maximum-overlap Hungarian matching; the
mapping exists only for evaluation.

Conventions: label sequences are plain integer arrays; ground-truth ids are
non-negative and discovered ids must not collide with them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Interval, Segment, iou_unbalanced

IGNORE = -1
DEFAULT_THRESHOLDS = (0.10, 0.25, 0.50)


@dataclass(frozen=True)
class ClusterMapping:
    """Injective map from discovered ids to ground-truth unknown class ids."""

    pairs: dict[int, int]
    unmatched: frozenset[int]

    def translate(self, labels: np.ndarray) -> np.ndarray:
        """Replace discovered ids by their matched gt id.

        Unmatched discovered ids become unique negative sentinels (below the
        ignore sentinel) so they can never coincide with a ground-truth id.
        """
        out = np.array(labels, dtype=np.int64, copy=True)
        for disc, gt in self.pairs.items():
            out[labels == disc] = gt
        for disc in self.unmatched:
            out[labels == disc] = -disc - 2
        return out


@dataclass(frozen=True)
class ScopeMetrics:
    mof: float | None
    edit: float | None
    f1: dict[float, float | None]


@dataclass(frozen=True)
class MetricsReport:
    known: ScopeMetrics
    unknown: ScopeMetrics
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS

    def to_flat(self) -> dict[str, float | None]:
        flat: dict[str, float | None] = {}
        for scope_name, scope in (("known", self.known), ("unknown", self.unknown)):
            flat[f"mof.{scope_name}"] = scope.mof
            flat[f"edit.{scope_name}"] = scope.edit
            for t in self.thresholds:
                flat[f"f1_{int(round(t * 100))}.{scope_name}"] = scope.f1[t]
        return flat


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of ``min(n, m)`` pairs.

    Rectangular matrices are padded to square with a constant exceeding the
    maximum cost, which leaves the optimum over real pairs unchanged.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n, m = cost.shape
    size = max(n, m)
    padded = np.full((size, size), cost.max() + 1.0)
    padded[:n, :m] = cost
    rows, cols = linear_sum_assignment(padded)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m)


def match_unknown_clusters(
    pred_seqs: list[np.ndarray],
    gt_seqs: list[np.ndarray],
    gt_unknown_ids: set[int],
    discovered_ids: set[int],
) -> ClusterMapping:
    """Dataset-level alignment of discovered ids to gt unknown classes.

    The overlap matrix counts, over every video at once, the frames where
    the ground truth carries an unknown class and the prediction carries a
    discovered id; the Hungarian algorithm then maximizes the matched frame
    count. Surplus ids on either side stay unmatched.
    """
    disc = sorted(discovered_ids)
    unk = sorted(gt_unknown_ids)
    if not disc or not unk:
        warnings.warn("nothing to match: no discovered ids or no gt unknown classes")
        return ClusterMapping({}, frozenset(disc))
    overlap = np.zeros((len(disc), len(unk)), dtype=np.float64)
    disc_arr = np.asarray(disc)
    unk_arr = np.asarray(unk)
    for pred, gt in zip(pred_seqs, gt_seqs, strict=True):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError("prediction and ground truth differ in length")
        sel = np.isin(gt, unk_arr) & np.isin(pred, disc_arr)
        if not sel.any():
            continue
        rows = np.searchsorted(disc_arr, pred[sel])
        cols = np.searchsorted(unk_arr, gt[sel])
        np.add.at(overlap, (rows, cols), 1.0)
    if overlap.sum() == 0:
        warnings.warn("no overlapping unknown frames; mapping is empty")
        return ClusterMapping({}, frozenset(disc))
    pairs = {disc[r]: unk[c] for r, c in hungarian(-overlap)}
    return ClusterMapping(pairs, frozenset(d for d in disc if d not in pairs))


def mof(pred: np.ndarray, gt: np.ndarray, eval_mask: np.ndarray) -> float | None:
    """Percentage of correct frames inside the mask; ``None`` when it is empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    eval_mask = np.asarray(eval_mask, dtype=bool)
    if not pred.shape == gt.shape == eval_mask.shape:
        raise ValueError("sequences differ in length")
    total = int(eval_mask.sum())
    if total == 0:
        return None
    return 100.0 * float((pred[eval_mask] == gt[eval_mask]).sum()) / total


def edit_score(pred_labels, gt_labels) -> float:
    """Normalized Levenshtein similarity of two segment-label sequences.

    ``100 * (1 - d / max(len_p, len_g))`` with unit-cost dynamic programming;
    two empty sequences score 100 by convention.
    """
    p = list(pred_labels)
    g = list(gt_labels)
    if not p and not g:
        return 100.0
    dp = np.zeros((len(p) + 1, len(g) + 1), dtype=np.int64)
    dp[:, 0] = np.arange(len(p) + 1)
    dp[0, :] = np.arange(len(g) + 1)
    for i in range(1, len(p) + 1):
        for j in range(1, len(g) + 1):
            sub = dp[i - 1, j - 1] + (p[i - 1] != g[j - 1])
            dp[i, j] = min(dp[i - 1, j] + 1, dp[i, j - 1] + 1, sub)
    return 100.0 * (1.0 - dp[-1, -1] / max(len(p), len(g)))


def _f1_counts(
    pred_segments: list[Segment], gt_segments: list[Segment], threshold: float
) -> tuple[int, int, int]:
    """Greedy TP/FP/FN counting: each prediction claims its best-IoU unmatched
    same-label gt segment; each gt segment is matched at most once."""
    matched = [False] * len(gt_segments)
    tp = fp = 0
    for pred in pred_segments:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gt_segments):
            if matched[j] or gt.label != pred.label:
                continue
            iou = iou_unbalanced(pred.interval, gt.interval)
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= threshold:
            tp += 1
            matched[best_j] = True
        else:
            fp += 1
    fn = matched.count(False)
    return tp, fp, fn


def f1_at(
    pred_segments: list[Segment], gt_segments: list[Segment], threshold: float
) -> float:
    """Segmental F1 at one IoU threshold, 0 when precision + recall is 0."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    tp, fp, fn = _f1_counts(pred_segments, gt_segments, threshold)
    return _f1_from_counts(tp, fp, fn)


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def masked_segments(labels: np.ndarray, keep: np.ndarray) -> list[Segment]:
    """Run-length segments with masked-out frames acting as separators."""
    masked = np.where(np.asarray(keep, dtype=bool), labels, IGNORE)
    boundaries = np.flatnonzero(masked[1:] != masked[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [masked.size]))
    return [
        Segment(Interval(int(s), int(e)), int(masked[s]))
        for s, e in zip(starts, ends)
        if masked[s] != IGNORE
    ]


def _scope_metrics(
    preds: list[np.ndarray],
    gts: list[np.ndarray],
    keeps: list[np.ndarray],
    thresholds: tuple[float, ...],
) -> ScopeMetrics:
    correct = 0
    total = 0
    edit_scores: list[float] = []
    counts = {t: [0, 0, 0] for t in thresholds}
    for pred, gt, keep in zip(preds, gts, keeps, strict=True):
        total += int(keep.sum())
        correct += int((pred[keep] == gt[keep]).sum())
        pred_segs = masked_segments(pred, keep)
        gt_segs = masked_segments(gt, keep)
        if pred_segs or gt_segs:
            edit_scores.append(edit_score([s.label for s in pred_segs], [s.label for s in gt_segs]))
            for t in thresholds:
                tp, fp, fn = _f1_counts(pred_segs, gt_segs, t)
                counts[t][0] += tp
                counts[t][1] += fp
                counts[t][2] += fn
    mof_value = 100.0 * correct / total if total else None
    edit_value = float(np.mean(edit_scores)) if edit_scores else None
    f1_values: dict[float, float | None] = {}
    for t in thresholds:
        tp, fp, fn = counts[t]
        f1_values[t] = _f1_from_counts(tp, fp, fn) if (tp + fp + fn) else None
    return ScopeMetrics(mof_value, edit_value, f1_values)


def masked_report(
    preds: list[np.ndarray],
    gts: list[np.ndarray],
    known_ids: set[int],
    mapping: ClusterMapping,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> MetricsReport:
    """Known- and unknown-scope metrics over a whole split.

    Predictions may contain discovered ids; they are translated through
    ``mapping`` before scoring. The known scope masks frames whose gt label
    is not in ``known_ids``; the unknown scope masks the complement. MoF
    pools frames over all videos, Edit averages per video (videos with no
    segments in either masked sequence contribute nothing), and F1 pools
    TP/FP/FN counts.
    """
    gts = [np.asarray(g, dtype=np.int64) for g in gts]
    mapped = [mapping.translate(np.asarray(p, dtype=np.int64)) for p in preds]
    for pred, gt in zip(mapped, gts, strict=True):
        if pred.shape != gt.shape:
            raise ValueError("prediction and ground truth differ in length")
    known_arr = np.asarray(sorted(known_ids))
    keep_known = [np.isin(g, known_arr) for g in gts]
    keep_unknown = [~k for k in keep_known]
    return MetricsReport(
        known=_scope_metrics(mapped, gts, keep_known, thresholds),
        unknown=_scope_metrics(mapped, gts, keep_unknown, thresholds),
        thresholds=thresholds,
    )
