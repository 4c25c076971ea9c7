"""Layout quality metrics for draft compositions.

The headline number is the inverse-order pair ratio: among element pairs
that overlap, the fraction whose predicted stacking order contradicts the
reference order. Reports also carry its complement as correct_pair_ratio,
since both orientations circulate in practice.

The five r-measures are this toolkit's declared formulas (METRICS.md spells
out each one and its conventions): overlap between content boxes, alignment
slack across six axes, underlay validity, saliency occlusion, and text-zone
complexity. All of them are deterministic pure functions; corpus aggregation
uses exact summation so results do not depend on case arrival order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .draft import DraftProtocol, Placement
from .errors import DimensionMismatch, EmptyCorpus, IdMismatch
from .raster import CoverageMask, RgbaImage, luma_map, resize

__all__ = [
    "OverlapPredicateConfig",
    "MetricReport",
    "CorpusSummary",
    "overlap",
    "inverse_order_counts",
    "iopr",
    "r_ove",
    "r_ali",
    "r_und",
    "r_occ",
    "r_com",
    "corpus_summary",
]

# Roles excluded from the box-overlap measure: underlays exist to sit under
# content, and the background is the canvas itself, not a layout element.
OVERLAP_EXEMPT_ROLES = ("underlay", "background")

# Roles whose boxes are expected to hold text and therefore want calm pixels.
TEXT_ZONE_ROLES = ("text_like", "underlay")

UNDERLAY_CONTAINMENT = 0.9


@dataclass(frozen=True)
class OverlapPredicateConfig:
    """How two placements count as overlapping.

    bbox mode uses axis-aligned intersection area, strictly greater than
    min_intersection_px. alpha mode additionally requires a pixel where both
    resized alphas exceed alpha_threshold (on a 0..1 scale) and needs the
    assets to be supplied.
    """

    mode: str = "bbox"
    alpha_threshold: float = 0.1
    min_intersection_px: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("bbox", "alpha"):
            raise ValueError(f"unknown overlap mode {self.mode!r}")
        if not 0.0 <= self.alpha_threshold <= 1.0:
            raise ValueError("alpha_threshold must lie in [0, 1]")
        if self.min_intersection_px < 0:
            raise ValueError("min_intersection_px must be >= 0")


def _intersection(i: Placement, j: Placement) -> tuple[int, int, int, int]:
    x0 = max(i.x, j.x)
    y0 = max(i.y, j.y)
    x1 = min(i.x + i.w, j.x + j.w)
    y1 = min(i.y + i.h, j.y + j.h)
    return x0, y0, x1, y1


def intersection_area(i: Placement, j: Placement) -> int:
    x0, y0, x1, y1 = _intersection(i, j)
    if x1 <= x0 or y1 <= y0:
        return 0
    return (x1 - x0) * (y1 - y0)


def overlap(
    i: Placement,
    j: Placement,
    cfg: OverlapPredicateConfig | None = None,
    assets: Mapping[str, RgbaImage] | None = None,
) -> bool:
    """Overlap predicate between two placements. Edge contact is not overlap."""
    cfg = cfg or OverlapPredicateConfig()
    area = intersection_area(i, j)
    if area <= cfg.min_intersection_px:
        return False
    if cfg.mode == "bbox":
        return True
    if assets is None:
        raise ValueError("alpha-mode overlap requires the element assets")
    x0, y0, x1, y1 = _intersection(i, j)
    ai = resize(assets[i.element_id], i.w, i.h).array[:, :, 3]
    aj = resize(assets[j.element_id], j.w, j.h).array[:, :, 3]
    sub_i = ai[y0 - i.y : y1 - i.y, x0 - i.x : x1 - i.x].astype(np.float64) / 255.0
    sub_j = aj[y0 - j.y : y1 - j.y, x0 - j.x : x1 - j.x].astype(np.float64) / 255.0
    return bool(np.any((sub_i > cfg.alpha_threshold) & (sub_j > cfg.alpha_threshold)))


def inverse_order_counts(
    predicted: DraftProtocol,
    reference_order: Mapping[str, int],
    cfg: OverlapPredicateConfig | None = None,
    assets: Mapping[str, RgbaImage] | None = None,
) -> tuple[int, int]:
    """Count (inverted, overlapping) pairs of the predicted draft.

    The overlap predicate runs on the predicted geometry. A pair counts as
    inverted when the reference puts one element before the other and the
    predicted hierarchy disagrees.
    """
    ids = [p.element_id for p in predicted.placements]
    if set(ids) != set(reference_order):
        missing = set(reference_order) - set(ids)
        extra = set(ids) - set(reference_order)
        raise IdMismatch(
            f"element sets differ (missing from prediction: {sorted(missing)}, "
            f"unknown to reference: {sorted(extra)})"
        )
    if len(set(reference_order.values())) != len(reference_order):
        raise ValueError("reference ranks must be distinct")
    cfg = cfg or OverlapPredicateConfig()
    ps = predicted.placements
    inverted = 0
    overlapping = 0
    for a in range(len(ps)):
        for b in range(a + 1, len(ps)):
            if not overlap(ps[a], ps[b], cfg, assets):
                continue
            overlapping += 1
            ref_delta = reference_order[ps[a].element_id] - reference_order[ps[b].element_id]
            pred_delta = ps[a].hierarchy - ps[b].hierarchy
            if ref_delta * pred_delta < 0:
                inverted += 1
    return inverted, overlapping


def iopr(
    predicted: DraftProtocol,
    reference_order: Mapping[str, int],
    cfg: OverlapPredicateConfig | None = None,
    assets: Mapping[str, RgbaImage] | None = None,
) -> float:
    """Inverse-order pair ratio in [0, 1]; 0 when no pairs overlap."""
    num, den = inverse_order_counts(predicted, reference_order, cfg, assets)
    return num / den if den else 0.0


def _role_of(roles: Mapping[str, str] | None, element_id: str) -> str | None:
    if roles is None:
        return None
    value = roles.get(element_id)
    return None if value is None else str(value)


def r_ove(d: DraftProtocol, roles: Mapping[str, str] | None = None) -> float:
    """Mean pairwise overlap ratio among content elements, in [0, 1].

    Each unordered pair contributes intersection area over the smaller box
    area. Elements with an underlay or background role are exempt; with no
    roles given, every element counts as content. Fewer than two eligible
    elements give 0.
    """
    eligible = [
        p for p in d.placements if _role_of(roles, p.element_id) not in OVERLAP_EXEMPT_ROLES
    ]
    if len(eligible) < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for a in range(len(eligible)):
        for b in range(a + 1, len(eligible)):
            i, j = eligible[a], eligible[b]
            smaller = min(i.w * i.h, j.w * j.h)
            total += intersection_area(i, j) / smaller
            pairs += 1
    return total / pairs


def r_ali(d: DraftProtocol) -> float:
    """Mean nearest-axis misalignment, normalized by the canvas diagonal.

    For every element, take the minimum absolute difference to any other
    element across six like-for-like axes (left, x-center, right, top,
    y-center, bottom). 0 for fewer than two elements.
    """
    n = len(d.placements)
    if n < 2:
        return 0.0
    axes = np.empty((n, 6), dtype=np.float64)
    for i, p in enumerate(d.placements):
        axes[i] = (p.x, p.x + p.w / 2.0, p.x + p.w, p.y, p.y + p.h / 2.0, p.y + p.h)
    diag = math.hypot(d.canvas.width, d.canvas.height)
    total = 0.0
    for i in range(n):
        diffs = np.abs(axes - axes[i])
        diffs[i, :] = np.inf
        total += float(diffs.min())
    return total / (n * diag)


def r_und(d: DraftProtocol, roles: Mapping[str, str]) -> float:
    """Fraction of underlays that actually underlie something, in [0, 1].

    An underlay is valid when at least one non-underlay element placed above
    it in hierarchy has at least 90 percent of its box area inside the
    underlay's box. No underlays at all count as vacuous success (1.0).
    """
    underlays = [p for p in d.placements if _role_of(roles, p.element_id) == "underlay"]
    if not underlays:
        return 1.0
    content = [p for p in d.placements if _role_of(roles, p.element_id) != "underlay"]
    valid = 0
    for u in underlays:
        for c in content:
            if c.hierarchy <= u.hierarchy:
                continue
            if intersection_area(u, c) >= UNDERLAY_CONTAINMENT * (c.w * c.h):
                valid += 1
                break
    return valid / len(underlays)


def r_occ(d: DraftProtocol, saliency: np.ndarray, mask: CoverageMask) -> float:
    """Fraction of saliency mass left unoccluded, in [0, 1]; higher is better.

    A pixel counts as occluded when the mask's top-most covering layer has
    hierarchy above 0, i.e. anything but the base layer covers it. Zero total
    saliency mass returns 1.0 by convention.
    """
    sal = np.asarray(saliency, dtype=np.float64)
    expected = (d.canvas.height, d.canvas.width)
    if sal.shape != expected:
        raise DimensionMismatch(f"saliency shape {sal.shape} != canvas {expected}")
    if (mask.height, mask.width) != expected:
        raise DimensionMismatch(f"mask {mask.width}x{mask.height} != canvas {expected}")
    total = float(sal.sum())
    if total <= 0.0:
        return 1.0
    ranks = np.array([p.hierarchy for p in d.placements], dtype=np.int64)
    covered = np.zeros(mask.top_index.shape, dtype=bool)
    valid = mask.top_index >= 0
    covered[valid] = ranks[mask.top_index[valid]] > 0
    return 1.0 - float(sal[covered].sum()) / total


def r_com(render: RgbaImage, d: DraftProtocol, roles: Mapping[str, str]) -> float:
    """Mean grayscale standard deviation under text and underlay boxes.

    The render should be the composition flattened without its text layers,
    so the measure sees what the text would sit on. Boxes are clipped to the
    canvas; boxes with no visible pixels are skipped, and no regions at all
    give 0. Uses population standard deviation on the 0..255 luma scale.
    """
    if (render.height, render.width) != (d.canvas.height, d.canvas.width):
        raise DimensionMismatch(
            f"render {render.width}x{render.height} does not match canvas "
            f"{d.canvas.width}x{d.canvas.height}"
        )
    gray = luma_map(render)
    values = []
    for p in d.placements:
        if _role_of(roles, p.element_id) not in TEXT_ZONE_ROLES:
            continue
        x0, y0 = max(p.x, 0), max(p.y, 0)
        x1, y1 = min(p.x + p.w, d.canvas.width), min(p.y + p.h, d.canvas.height)
        if x0 >= x1 or y0 >= y1:
            continue
        values.append(float(gray[y0:y1, x0:x1].std()))
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


@dataclass(frozen=True)
class MetricReport:
    """Per-case metric bundle plus the pair counts behind the ratio."""

    iopr: float
    r_com: float
    r_occ: float
    r_ali: float
    r_ove: float
    r_und: float
    overlapping_pairs: int
    elements: int

    @property
    def correct_pair_ratio(self) -> float:
        return 1.0 - self.iopr

    def to_json_dict(self) -> dict:
        return {
            "iopr": self.iopr,
            "correct_pair_ratio": self.correct_pair_ratio,
            "r_com": self.r_com,
            "r_occ": self.r_occ,
            "r_ali": self.r_ali,
            "r_ove": self.r_ove,
            "r_und": self.r_und,
            "counts": {
                "overlapping_pairs": self.overlapping_pairs,
                "elements": self.elements,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    TSV_HEADER = "iopr\tcorrect_pair_ratio\tr_com\tr_occ\tr_ali\tr_ove\tr_und\toverlapping_pairs\telements"

    def to_tsv(self) -> str:
        cells = (
            self.iopr,
            self.correct_pair_ratio,
            self.r_com,
            self.r_occ,
            self.r_ali,
            self.r_ove,
            self.r_und,
            self.overlapping_pairs,
            self.elements,
        )
        return "\t".join(str(c) for c in cells)


@dataclass(frozen=True)
class CorpusSummary:
    """Corpus-level aggregates: order accuracy extremes plus measure means."""

    n_cases: int
    iopr_min: float
    iopr_avg: float
    r_com_mean: float
    r_occ_mean: float
    r_ali_mean: float
    r_ove_mean: float
    r_und_mean: float

    @property
    def correct_pair_avg(self) -> float:
        return 1.0 - self.iopr_avg

    def to_json_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "iopr_min": self.iopr_min,
            "iopr_avg": self.iopr_avg,
            "correct_pair_avg": self.correct_pair_avg,
            "r_com_mean": self.r_com_mean,
            "r_occ_mean": self.r_occ_mean,
            "r_ali_mean": self.r_ali_mean,
            "r_ove_mean": self.r_ove_mean,
            "r_und_mean": self.r_und_mean,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    TSV_HEADER = (
        "n_cases\tiopr_min\tiopr_avg\tcorrect_pair_avg"
        "\tr_com_mean\tr_occ_mean\tr_ali_mean\tr_ove_mean\tr_und_mean"
    )

    def to_tsv(self) -> str:
        cells = (
            self.n_cases,
            self.iopr_min,
            self.iopr_avg,
            self.correct_pair_avg,
            self.r_com_mean,
            self.r_occ_mean,
            self.r_ali_mean,
            self.r_ove_mean,
            self.r_und_mean,
        )
        return "\t".join(str(c) for c in cells)


def _exact_mean(values: Iterable[float]) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals)


def corpus_summary(reports: Sequence[MetricReport]) -> CorpusSummary:
    """Aggregate per-case reports; raises EmptyCorpus on an empty sequence.

    Means use exact (fsum) summation, so the result is independent of the
    order reports arrive in.
    """
    reports = list(reports)
    if not reports:
        raise EmptyCorpus("no reports to aggregate")
    iopr_values = [r.iopr for r in reports]
    return CorpusSummary(
        n_cases=len(reports),
        iopr_min=min(iopr_values),
        iopr_avg=_exact_mean(iopr_values),
        r_com_mean=_exact_mean(r.r_com for r in reports),
        r_occ_mean=_exact_mean(r.r_occ for r in reports),
        r_ali_mean=_exact_mean(r.r_ali for r in reports),
        r_ove_mean=_exact_mean(r.r_ove for r in reports),
        r_und_mean=_exact_mean(r.r_und for r in reports),
    )
