"""Removal-order evaluation: frame-level detection and ranking analytics.

Given a stop-motion sequence and ground-truth footprints, the detector
recovers the frame at which each object disappears; Order Accuracy then
scores whether less important objects vanished before more important ones.
Inter-rater agreement (Kendall's tau-b, symmetrized confusion matrices)
and pairwise-preference tables cover the human-study side.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from . import raster
from .scene import LEVEL_NAMES, SemanticLevel, level_from_name

CHOICE_A = "a_first"
CHOICE_B = "b_first"
CHOICE_EQUAL = "equal"
CHOICES = (CHOICE_A, CHOICE_B, CHOICE_EQUAL)


@dataclass(slots=True, frozen=True)
class DetectionParams:
    """Thresholds for the cumulative-difference removal detector."""

    tau_cov: float = 0.4
    tau_act: float = 0.4
    tau_stab: float = 0.1
    window: int = 2
    frame_diff_threshold: float = 0.05
    morph_radius: int = 1

    def __post_init__(self) -> None:
        for name in ("tau_cov", "tau_act", "tau_stab"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.frame_diff_threshold <= 0.0:
            raise ValueError("frame_diff_threshold must be positive")
        if self.morph_radius < 0:
            raise ValueError("morph_radius must be >= 0")


@dataclass(slots=True, frozen=True)
class RemovalDetection:
    """Detected disappearance of one object: (t*, level), t* 1-based or None."""

    object_id: str
    t_star: Optional[int]
    level: SemanticLevel

    def to_json(self) -> dict:
        return {"object_id": self.object_id, "t_star": self.t_star, "level": LEVEL_NAMES[self.level]}


@dataclass(slots=True, frozen=True)
class OrderAccuracy:
    score: float
    n_pairs: int
    n_inversions: int
    n_equal: int

    def to_json(self) -> dict:
        return {
            "score": self.score,
            "n_pairs": self.n_pairs,
            "n_inversions": self.n_inversions,
            "n_equal": self.n_equal,
        }


@dataclass(slots=True, frozen=True)
class SequenceReport:
    detections: list[RemovalDetection]
    accuracy: OrderAccuracy

    def to_json(self) -> dict:
        return {"detections": [d.to_json() for d in self.detections], "accuracy": self.accuracy.to_json()}


@dataclass(slots=True, frozen=True)
class RaterAnnotation:
    rater: str
    element: str
    level: SemanticLevel


@dataclass(slots=True, frozen=True)
class PairJudgment:
    """One pairwise comparison: which element should disappear first."""

    level_a: SemanticLevel
    level_b: SemanticLevel
    choice: str
    pair_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}")


def frame_diff_mask(
    f_prev: np.ndarray, f_cur: np.ndarray, params: Optional[DetectionParams] = None
) -> np.ndarray:
    """Thresholded channel-max difference between consecutive frames, opened."""
    params = params or DetectionParams()
    f_prev = raster.ensure_image(f_prev)
    f_cur = raster.ensure_image(f_cur)
    raster.check_same_shape(f_prev, f_cur)
    mask = raster.channel_abs_diff(f_prev, f_cur) >= params.frame_diff_threshold
    if params.morph_radius > 0:
        mask = raster.open_mask(mask, params.morph_radius)
    return mask


def cumulative_mask(diff_masks: Sequence[np.ndarray]) -> np.ndarray:
    """Union of difference masks D_1..D_t."""
    if not diff_masks:
        raise ValueError("need at least one difference mask")
    out = raster.ensure_mask(diff_masks[0]).copy()
    for m in diff_masks[1:]:
        out |= raster.ensure_mask(m)
    return out


def frame_diff_stack(frames: Sequence[np.ndarray], params: Optional[DetectionParams] = None) -> list[np.ndarray]:
    """D_t for t = 1..N; D_1 is empty (no predecessor frame)."""
    params = params or DetectionParams()
    if not frames:
        raise ValueError("need at least one frame")
    imgs = [raster.ensure_image(f) for f in frames]
    for f in imgs[1:]:
        raster.check_same_shape(imgs[0], f)
    diffs = [np.zeros(imgs[0].shape[:2], dtype=bool)]
    for t in range(1, len(imgs)):
        diffs.append(frame_diff_mask(imgs[t - 1], imgs[t], params))
    return diffs


def _first_qualifying(diffs: Sequence[np.ndarray], footprint: np.ndarray, params: DetectionParams) -> Optional[int]:
    """First 1-based frame satisfying coverage, activity, and stability."""
    m = footprint
    area_m = int(m.sum())
    inverse = ~m
    area_mc = int(inverse.sum())
    n = len(diffs)
    cum = np.zeros_like(m)
    for t0 in range(n):
        cum |= diffs[t0]
        if int((cum & m).sum()) / area_m < params.tau_cov:
            continue
        lo = max(0, t0 - params.window)
        hi = min(n - 1, t0 + params.window)
        local = np.zeros_like(m)
        for k in range(lo, hi + 1):
            local |= diffs[k]
        activity = int((local & m).sum()) / area_m
        spill = int((local & inverse).sum()) / area_mc if area_mc else 0.0
        if activity >= params.tau_act and spill <= params.tau_stab:
            return t0 + 1
    return None


def detect_removal_frame(
    frames: Sequence[np.ndarray], footprint: np.ndarray, params: Optional[DetectionParams] = None
) -> Optional[int]:
    """Removal frame t* (1-based) for a footprint, or None if never removed.

    t* is the first frame whose cumulative change covers tau_cov of the
    footprint while change within +-window frames is active inside it
    (tau_act) and quiet outside it (tau_stab).
    """
    params = params or DetectionParams()
    m = raster.ensure_mask(footprint)
    if not m.any():
        raise ValueError("footprint mask is empty")
    diffs = frame_diff_stack(frames, params)
    raster.check_same_shape(diffs[0], m)
    return _first_qualifying(diffs, m, params)


def _effective_t(t_star: Optional[int]) -> float:
    return math.inf if t_star is None else float(t_star)


def order_accuracy(detections: Iterable[RemovalDetection]) -> OrderAccuracy:
    """1 - (inversions + ties)/pairs over pairs with different levels.

    Never-removed counts as t* = +inf: a pair where only the less important
    object survives is an inversion; both surviving is a tie.
    """
    dets = list(detections)
    n_pairs = n_inv = n_eq = 0
    for a, b in combinations(dets, 2):
        if a.level == b.level:
            continue
        low, high = (a, b) if a.level < b.level else (b, a)
        n_pairs += 1
        t_low, t_high = _effective_t(low.t_star), _effective_t(high.t_star)
        if t_low == t_high:
            n_eq += 1
        elif t_high < t_low:
            n_inv += 1
    if n_pairs == 0:
        raise ValueError("order accuracy undefined: no cross-level pairs")
    return OrderAccuracy(
        score=1.0 - (n_inv + n_eq) / n_pairs,
        n_pairs=n_pairs,
        n_inversions=n_inv,
        n_equal=n_eq,
    )


def detect_removals(
    frames: Sequence[np.ndarray],
    ground_truth: Sequence[tuple[np.ndarray, SemanticLevel]],
    params: Optional[DetectionParams] = None,
    ids: Optional[Sequence[str]] = None,
    skip_empty: bool = True,
) -> list[RemovalDetection]:
    """Removal frame per ground-truth object, sharing one difference stack.

    Empty footprints (fully occluded objects) are undetectable and skipped
    by default; pass skip_empty=False to make them an error instead.
    """
    params = params or DetectionParams()
    if not ground_truth:
        raise ValueError("need at least one ground-truth object")
    if ids is not None and len(ids) != len(ground_truth):
        raise ValueError("ids and ground_truth lengths differ")
    diffs = frame_diff_stack(frames, params)
    detections = []
    for idx, (mask, level) in enumerate(ground_truth):
        m = raster.ensure_mask(mask)
        raster.check_same_shape(diffs[0], m)
        if not m.any():
            if skip_empty:
                continue
            raise ValueError(f"ground-truth footprint {idx} is empty")
        oid = ids[idx] if ids is not None else f"object_{idx}"
        detections.append(RemovalDetection(oid, _first_qualifying(diffs, m, params), SemanticLevel(level)))
    return detections


def evaluate_sequence(
    frames: Sequence[np.ndarray],
    ground_truth: Sequence[tuple[np.ndarray, SemanticLevel]],
    params: Optional[DetectionParams] = None,
    ids: Optional[Sequence[str]] = None,
    skip_empty: bool = True,
) -> SequenceReport:
    """Detect every object's removal frame, then score the ordering."""
    detections = detect_removals(frames, ground_truth, params, ids, skip_empty)
    return SequenceReport(detections=detections, accuracy=order_accuracy(detections))


def _count_inversions(seq: list) -> int:
    """Pairs (i < j) with seq[i] > seq[j], by in-place merge sort."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    i = j = 0
    merged = []
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            inv += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return inv


def _tie_term(values: Iterable) -> int:
    return sum(c * (c - 1) // 2 for c in Counter(values).values())


def kendall_tau_b(x: Sequence, y: Sequence) -> float:
    """Tie-corrected Kendall correlation between two ordinal lists.

    Counts are exact integers (merge-sort inversion counting), so results
    are reproducible to the bit.
    """
    xs, ys = list(x), list(y)
    if len(xs) != len(ys):
        raise ValueError("x and y must have equal length")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two observations")
    n0 = n * (n - 1) // 2
    n1 = _tie_term(xs)
    n2 = _tie_term(ys)
    n3 = _tie_term(zip(xs, ys))
    if n0 == n1 or n0 == n2:
        raise ValueError("tau-b undefined: one list is entirely tied")
    order = sorted(range(n), key=lambda i: (xs[i], ys[i]))
    discordant = _count_inversions([ys[i] for i in order])
    concordant = n0 - n1 - n2 + n3 - discordant
    return (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))


def _levels_by_rater(annotations: Iterable[RaterAnnotation]) -> dict[str, dict[str, SemanticLevel]]:
    by_rater: dict[str, dict[str, SemanticLevel]] = {}
    for ann in annotations:
        labels = by_rater.setdefault(ann.rater, {})
        if ann.element in labels and labels[ann.element] != ann.level:
            raise ValueError(f"rater {ann.rater!r} labels element {ann.element!r} twice with different levels")
        labels[ann.element] = SemanticLevel(ann.level)
    return by_rater


@dataclass(slots=True, frozen=True)
class ConfusionMatrices:
    raw: np.ndarray
    normalized: np.ndarray

    def to_json(self) -> dict:
        return {
            "levels": [LEVEL_NAMES[lv] for lv in SemanticLevel],
            "raw": self.raw.tolist(),
            "normalized": self.normalized.tolist(),
        }


def aggregate_confusion(annotations: Iterable[RaterAnnotation]) -> ConfusionMatrices:
    """Symmetrized confusion counts summed over all rater pairs.

    Each pairwise cross-tabulation enters as M + M^T, so the raw matrix is
    symmetric by construction.  Rows of the normalized matrix sum to 1;
    levels never annotated leave all-zero rows.
    """
    by_rater = _levels_by_rater(annotations)
    raters = sorted(by_rater)
    if len(raters) < 2:
        raise ValueError("need annotations from at least two raters")
    k = len(SemanticLevel)
    raw = np.zeros((k, k), dtype=np.int64)
    overlap = False
    for a, b in combinations(raters, 2):
        for element in by_rater[a].keys() & by_rater[b].keys():
            overlap = True
            la, lb = by_rater[a][element], by_rater[b][element]
            raw[la, lb] += 1
            raw[lb, la] += 1
    if not overlap:
        raise ValueError("no element is annotated by two raters")
    normalized = raw.astype(np.float64)
    sums = normalized.sum(axis=1, keepdims=True)
    np.divide(normalized, sums, out=normalized, where=sums > 0)
    return ConfusionMatrices(raw=raw, normalized=normalized)


def rater_tau_matrix(annotations: Iterable[RaterAnnotation]) -> dict[tuple[str, str], Optional[float]]:
    """Kendall tau-b for every rater pair over their shared elements.

    Degenerate pairs (fewer than two shared elements, or one rater entirely
    tied) map to None.
    """
    by_rater = _levels_by_rater(annotations)
    raters = sorted(by_rater)
    if len(raters) < 2:
        raise ValueError("need annotations from at least two raters")
    out: dict[tuple[str, str], Optional[float]] = {}
    for a, b in combinations(raters, 2):
        shared = sorted(by_rater[a].keys() & by_rater[b].keys())
        try:
            out[(a, b)] = kendall_tau_b(
                [int(by_rater[a][e]) for e in shared], [int(by_rater[b][e]) for e in shared]
            )
        except ValueError:
            out[(a, b)] = None
    return out


@dataclass(slots=True, frozen=True)
class PreferenceTable:
    """Win percentages per ordered level pair, NaN where no data exists."""

    percentages: np.ndarray
    equal_rate_same_level: Optional[float]
    equal_rate_cross_level: Optional[float]

    def to_json(self) -> dict:
        table = [[None if math.isnan(v) else v for v in row] for row in self.percentages.tolist()]
        return {
            "levels": [LEVEL_NAMES[lv] for lv in SemanticLevel],
            "percentages": table,
            "equal_rate_same_level": self.equal_rate_same_level,
            "equal_rate_cross_level": self.equal_rate_cross_level,
        }


def preference_table(judgments: Iterable[PairJudgment]) -> PreferenceTable:
    """Remove-first percentages over decisive cross-level judgments.

    Cell (r, c) is the share of decisive r-vs-c comparisons where the
    r-level element was chosen to disappear first, so populated cells obey
    table(r, c) + table(c, r) = 100.  Equal choices are reported separately
    as rates per stratum (same-level vs cross-level pairs).
    """
    k = len(SemanticLevel)
    wins = np.zeros((k, k), dtype=np.int64)
    eq = {True: 0, False: 0}
    totals = {True: 0, False: 0}
    for j in judgments:
        la, lb = SemanticLevel(j.level_a), SemanticLevel(j.level_b)
        same = la == lb
        totals[same] += 1
        if j.choice == CHOICE_EQUAL:
            eq[same] += 1
        elif not same:
            winner, loser = (la, lb) if j.choice == CHOICE_A else (lb, la)
            wins[winner, loser] += 1
    percentages = np.full((k, k), np.nan)
    for r in range(k):
        for c in range(k):
            if r == c:
                continue
            decisive = wins[r, c] + wins[c, r]
            if decisive:
                percentages[r, c] = 100.0 * wins[r, c] / decisive
    def rate(same: bool) -> Optional[float]:
        return 100.0 * eq[same] / totals[same] if totals[same] else None

    return PreferenceTable(
        percentages=percentages,
        equal_rate_same_level=rate(True),
        equal_rate_cross_level=rate(False),
    )


def load_annotations_csv(path: raster.PathLike) -> list[RaterAnnotation]:
    """Rows of rater_id, element_id, level (level name or integer)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                RaterAnnotation(
                    rater=row["rater_id"].strip(),
                    element=row["element_id"].strip(),
                    level=parse_level(row["level"]),
                )
            )
    return out


def load_judgments_csv(path: raster.PathLike) -> list[PairJudgment]:
    """Rows of pair_id, level_a, level_b, choice."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                PairJudgment(
                    level_a=parse_level(row["level_a"]),
                    level_b=parse_level(row["level_b"]),
                    choice=row["choice"].strip(),
                    pair_id=(row.get("pair_id") or "").strip() or None,
                )
            )
    return out


def parse_level(text: str) -> SemanticLevel:
    text = text.strip()
    if text.lstrip("-").isdigit():
        return SemanticLevel(int(text))
    return level_from_name(text)


__all__ = [
    "CHOICES",
    "ConfusionMatrices",
    "DetectionParams",
    "OrderAccuracy",
    "PairJudgment",
    "PreferenceTable",
    "RaterAnnotation",
    "RemovalDetection",
    "SequenceReport",
    "aggregate_confusion",
    "cumulative_mask",
    "detect_removal_frame",
    "detect_removals",
    "evaluate_sequence",
    "frame_diff_mask",
    "frame_diff_stack",
    "kendall_tau_b",
    "load_annotations_csv",
    "load_judgments_csv",
    "order_accuracy",
    "parse_level",
    "preference_table",
    "rater_tau_matrix",
]
