"""Benchmark harness: agreement labels, boundary matching, PR metrics,
semantic per-class scores, segmentation IOU, and proposal recall.

Matching follows the usual boundary-benchmark convention: predictions are
binarized per threshold, thinned, and greedily matched to ground-truth
pixels within a pixel tolerance (ascending distance, row-major ties, each
pixel used once). The default tolerance is round(0.0075 * image diagonal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .candidates import CandidateSet, nms_thin

DEFAULT_THRESHOLDS = np.arange(1, 34, dtype=np.float64) / 33.0


def default_tolerance(dims) -> int:
    h, w = dims
    return int(round(0.0075 * math.hypot(h, w)))


def _as_annotators(annotators) -> np.ndarray:
    ann = np.asarray(annotators)
    if ann.ndim == 2:
        ann = ann[None]
    if ann.ndim != 3:
        raise ValueError(f"annotators must be [K, H, W], got {ann.shape}")
    if ann.shape[0] < 1:
        raise ValueError("need at least one annotator")
    return ann > 0.5


def agreement_labels(annotators, cands: CandidateSet,
                     tol_px: float = 1.0) -> np.ndarray:
    """Fraction of annotators with a boundary pixel within tol of each
    candidate. Labels live on the grid {0, 1/K, ..., 1}."""
    ann = _as_annotators(annotators)
    k = ann.shape[0]
    n = len(cands)
    if n == 0:
        return np.zeros(0)
    pts = np.column_stack([cands.ys, cands.xs])
    hits = np.zeros(n, dtype=np.int64)
    for a in range(k):
        coords = np.argwhere(ann[a])
        if not len(coords):
            continue
        tree = cKDTree(coords.astype(np.float64))
        dist, _ = tree.query(pts, k=1)
        hits += dist <= tol_px
    return hits / k


def any_gt(annotators) -> np.ndarray:
    """Union of all annotators' boundary pixels."""
    return _as_annotators(annotators).any(axis=0)


def consensus_gt(annotators, tol_px: float = 0.0) -> np.ndarray:
    """Pixels marked by at least one annotator and within tol of every
    annotator's boundary set."""
    ann = _as_annotators(annotators)
    near_all = np.ones(ann.shape[1:], dtype=bool)
    for a in range(ann.shape[0]):
        if not ann[a].any():
            return np.zeros(ann.shape[1:], dtype=bool)
        dist = distance_transform_edt(~ann[a])
        near_all &= dist <= tol_px
    return near_all & ann.any(axis=0)


@dataclass
class MatchResult:
    matched_pred: np.ndarray  # bool raster
    matched_gt: np.ndarray    # bool raster
    tp: int
    fp: int
    fn: int


def match_boundaries(pred_binary, gt_binary, tol_px: float) -> MatchResult:
    """Greedy one-to-one matching of pred and gt pixels within tol_px.

    Pairs are taken in ascending distance, ties broken row-major on the
    pred pixel then the gt pixel. Squared distances between integer pixels
    are exact, so the order is deterministic.
    """
    pred = np.asarray(pred_binary) > 0
    gt = np.asarray(gt_binary) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    pred_pts = np.argwhere(pred)
    gt_pts = np.argwhere(gt)
    matched_pred = np.zeros(pred.shape, dtype=bool)
    matched_gt = np.zeros(gt.shape, dtype=bool)
    if len(pred_pts) and len(gt_pts):
        tree = cKDTree(gt_pts.astype(np.float64))
        pairs = tree.query_ball_point(pred_pts.astype(np.float64), r=tol_px)
        cand = []
        for p_idx, g_list in enumerate(pairs):
            py, px = pred_pts[p_idx]
            for g_idx in g_list:
                gy, gx = gt_pts[g_idx]
                d2 = int(py - gy) ** 2 + int(px - gx) ** 2
                cand.append((d2, p_idx, g_idx))
        cand.sort()
        used_p = np.zeros(len(pred_pts), dtype=bool)
        used_g = np.zeros(len(gt_pts), dtype=bool)
        for d2, p_idx, g_idx in cand:
            if used_p[p_idx] or used_g[g_idx]:
                continue
            used_p[p_idx] = True
            used_g[g_idx] = True
            matched_pred[tuple(pred_pts[p_idx])] = True
            matched_gt[tuple(gt_pts[g_idx])] = True
    tp = int(matched_pred.sum())
    fp = int(len(pred_pts) - tp)
    fn = int(len(gt_pts) - matched_gt.sum())
    return MatchResult(matched_pred, matched_gt, tp, fp, fn)


def _rate(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class PRCurve:
    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def precision(self) -> np.ndarray:
        return np.array([_rate(t, t + f) for t, f in zip(self.tp, self.fp)])

    @property
    def recall(self) -> np.ndarray:
        return np.array([_rate(t, t + f) for t, f in zip(self.tp, self.fn)])

    @property
    def f1(self) -> np.ndarray:
        return np.array([f1_score(p, r)
                         for p, r in zip(self.precision, self.recall)])


@dataclass
class BenchMetrics:
    ods_f: float
    ods_threshold: float
    ois_f: float
    ap: float


def pr_curve(values, annotators, mode: str = "any", thresholds=None,
             tol_px: float | None = None) -> PRCurve:
    """Binarize -> thin -> match at every threshold against the chosen GT."""
    vals = np.asarray(values, dtype=np.float32)
    ann = _as_annotators(annotators)
    if vals.shape != ann.shape[1:]:
        raise ValueError(
            f"prediction {vals.shape} does not match annotations {ann.shape[1:]}")
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLDS
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(thresholds) == 0:
        raise ValueError("threshold list is empty")
    if thresholds.min() <= 0 or thresholds.max() > 1 or \
            np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be ascending values in (0, 1]")
    if tol_px is None:
        tol_px = default_tolerance(vals.shape)
    if mode == "any":
        gt = any_gt(ann)
    elif mode == "consensus":
        gt = consensus_gt(ann, tol_px)
    else:
        raise ValueError(f"mode must be 'any' or 'consensus', got {mode!r}")
    tps, fps, fns = [], [], []
    for t in thresholds:
        pred_bin = (vals > t).astype(np.float32)
        thinned = nms_thin(pred_bin) > 0
        res = match_boundaries(thinned, gt, tol_px)
        tps.append(res.tp)
        fps.append(res.fp)
        fns.append(res.fn)
    return PRCurve(thresholds, np.asarray(tps, dtype=np.int64),
                   np.asarray(fps, dtype=np.int64),
                   np.asarray(fns, dtype=np.int64))


def _envelope_ap(recalls, precisions) -> float:
    """Area under precision(recall): the max-precision envelope integrated
    over recall, with recall beyond the last measured point worth 0."""
    pts = sorted(zip(recalls, precisions))
    best = 0.0
    env = {}
    for r, p in reversed(pts):
        best = max(best, p)
        env[r] = best
    area = 0.0
    prev_r = 0.0
    for r in sorted(env):
        if r > prev_r:
            area += (r - prev_r) * env[r]
            prev_r = r
    return area


def aggregate(curves: Sequence[PRCurve]) -> BenchMetrics:
    """Dataset metrics from per-image curves sharing one threshold grid."""
    if not curves:
        raise ValueError("no curves to aggregate")
    grid = curves[0].thresholds
    for c in curves[1:]:
        if len(c.thresholds) != len(grid) or np.any(c.thresholds != grid):
            raise ValueError("curves use inconsistent threshold grids")
    tp = np.sum([c.tp for c in curves], axis=0)
    fp = np.sum([c.fp for c in curves], axis=0)
    fn = np.sum([c.fn for c in curves], axis=0)
    precisions = np.array([_rate(t, t + f) for t, f in zip(tp, fp)])
    recalls = np.array([_rate(t, t + f) for t, f in zip(tp, fn)])
    fs = np.array([f1_score(p, r) for p, r in zip(precisions, recalls)])
    ods_idx = int(np.argmax(fs))
    ods_f = float(fs[ods_idx])
    ods_threshold = float(grid[ods_idx])

    ois_tp = ois_fp = ois_fn = 0
    for c in curves:
        best = int(np.argmax(c.f1))
        ois_tp += int(c.tp[best])
        ois_fp += int(c.fp[best])
        ois_fn += int(c.fn[best])
    ois_p = _rate(ois_tp, ois_tp + ois_fp)
    ois_r = _rate(ois_tp, ois_tp + ois_fn)
    ois_f = f1_score(ois_p, ois_r)

    ap = _envelope_ap(recalls, precisions)
    return BenchMetrics(ods_f, ods_threshold, float(ois_f), float(ap))


@dataclass
class SemanticReport:
    per_class: dict  # class id -> (mf, ap)
    mean_mf: float
    mean_ap: float
    skipped: list


def semantic_pr(class_maps: Mapping[int, Sequence[np.ndarray]],
                class_gt: Mapping[int, Sequence[np.ndarray]],
                tol_px: float | None = None,
                thresholds=None) -> SemanticReport:
    """Per-class boundary PR. A class with no GT pixels and no predicted
    pixels anywhere is skipped from the means."""
    per_class = {}
    skipped = []
    for cls in sorted(class_maps):
        maps = class_maps[cls]
        gts = class_gt[cls]
        if len(maps) != len(gts):
            raise ValueError(f"class {cls}: {len(maps)} maps vs {len(gts)} GT")
        has_gt = any(_as_annotators(g).any() for g in gts)
        has_pred = any(np.asarray(m).max() > 0 for m in maps)
        if not has_gt and not has_pred:
            skipped.append(cls)
            continue
        curves = [pr_curve(m, g, mode="any", thresholds=thresholds,
                           tol_px=tol_px) for m, g in zip(maps, gts)]
        bench = aggregate(curves)
        per_class[cls] = (bench.ods_f, bench.ap)
    if per_class:
        mean_mf = float(np.mean([v[0] for v in per_class.values()]))
        mean_ap = float(np.mean([v[1] for v in per_class.values()]))
    else:
        mean_mf = mean_ap = 0.0
    return SemanticReport(per_class, mean_mf, mean_ap, skipped)


def segmentation_iou(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                     classes=None, mode: str = "per_pixel") -> dict:
    """Class-wise intersection-over-union, label 0 = background.

    per_pixel sums counts over the whole image list before dividing;
    per_image averages each class's IOU over the images where it appears
    in the ground truth or the prediction.
    """
    if mode not in ("per_pixel", "per_image"):
        raise ValueError(f"mode must be per_pixel or per_image, got {mode!r}")
    if len(preds) != len(gts):
        raise ValueError("prediction and GT lists differ in length")
    preds = [np.asarray(p).astype(np.int64) for p in preds]
    gts = [np.asarray(g).astype(np.int64) for g in gts]
    for p, g in zip(preds, gts):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if classes is None:
        present = set()
        for arr in (*preds, *gts):
            present |= set(np.unique(arr).tolist())
        classes = sorted(c for c in present if c != 0)
    out = {}
    for cls in classes:
        if mode == "per_pixel":
            inter = sum(int(np.count_nonzero((p == cls) & (g == cls)))
                        for p, g in zip(preds, gts))
            union = sum(int(np.count_nonzero((p == cls) | (g == cls)))
                        for p, g in zip(preds, gts))
            if union > 0:
                out[cls] = inter / union
        else:
            ious = []
            for p, g in zip(preds, gts):
                union = int(np.count_nonzero((p == cls) | (g == cls)))
                if union == 0:
                    continue
                inter = int(np.count_nonzero((p == cls) & (g == cls)))
                ious.append(inter / union)
            if ious:
                out[cls] = float(np.mean(ious))
    mean = float(np.mean(list(out.values()))) if out else 0.0
    return {"per_class": out, "mean": mean}


def _box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def _validate_boxes(boxes) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(arr) and (np.any(arr[:, 2] <= arr[:, 0]) or
                     np.any(arr[:, 3] <= arr[:, 1])):
        raise ValueError("malformed box: need x1 > x0 and y1 > y0")
    return arr


@dataclass
class ProposalMetrics:
    auc: float
    n_at_75: float  # math.inf when recall 0.75 is never reached
    max_recall: float


def proposal_metrics(proposals: Sequence, gt_boxes: Sequence,
                     iou_thresholds=(0.65, 0.7, 0.75),
                     budget: int = 5000) -> dict[float, ProposalMetrics]:
    """Ranked-proposal coverage of ground-truth boxes, per IoU threshold.

    recall(n) counts GT boxes covered by each image's top-n proposals under
    greedy one-to-one assignment in rank order. AUC is the mean of
    recall(n) over n = 1..budget.
    """
    if len(proposals) != len(gt_boxes):
        raise ValueError("proposal and GT lists differ in length")
    prop = [_validate_boxes(p) for p in proposals]
    gts = [_validate_boxes(g) for g in gt_boxes]
    n_gt = sum(len(g) for g in gts)
    out = {}
    for thr in iou_thresholds:
        cover_ranks = []
        for boxes, gt in zip(prop, gts):
            taken = np.zeros(len(gt), dtype=bool)
            for rank, box in enumerate(boxes[:budget], start=1):
                best_iou, best_g = 0.0, -1
                for g_idx in range(len(gt)):
                    if taken[g_idx]:
                        continue
                    iou = _box_iou(box, gt[g_idx])
                    if iou > best_iou:
                        best_iou, best_g = iou, g_idx
                if best_g >= 0 and best_iou >= thr:
                    taken[best_g] = True
                    cover_ranks.append(rank)
        if n_gt == 0:
            out[thr] = ProposalMetrics(0.0, math.inf, 0.0)
            continue
        ranks = np.sort(np.asarray(cover_ranks, dtype=np.int64))
        auc = float(np.sum(budget - ranks + 1)) / (budget * n_gt)
        max_recall = len(ranks) / n_gt
        need = math.ceil(0.75 * n_gt)
        n_at_75 = float(ranks[need - 1]) if len(ranks) >= need else math.inf
        out[thr] = ProposalMetrics(auc, n_at_75, max_recall)
    return out
