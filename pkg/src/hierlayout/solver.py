"""Heuristic layout generator: role inference plus simulated annealing.

Given a bag of RGBA elements and a canvas, produce a full draft: a stacking
order and a geometry for every element. The pipeline is deliberately
transparent, a rule table for roles, a fixed template for the starting
placement, and a small annealer over translate, rescale, and rank-swap moves
scored by the metrics module. It is a runnable, testable baseline, with no
learned parts and no aesthetic ambitions.

Two entry points differ in who owns the stacking order. anneal() infers it
(roles first, then class order with area tie-breaks) and may refine it with
rank swaps; its result does not depend on the order elements are passed in.
solve_glg() treats the input order as the layer order, freezes it, and only
optimizes geometry.

Determinism: one PCG64 generator seeded from the config drives every draw,
in a fixed order per move (kind, target, parameters, then the acceptance
uniform only for uphill moves). Same elements, canvas, and config give a
byte-identical draft on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .draft import CanvasSpec, DraftProtocol, Placement, canonicalize, validate_draft
from .errors import EmptyInput
from .metrics import r_ali, r_occ, r_ove
from .raster import (
    DEFAULT_COVER_ALPHA,
    ElementStats,
    RgbaImage,
    composite,
    element_stats,
    resize,
    saliency_proxy,
)

__all__ = [
    "ROLES",
    "CLASS_ORDER",
    "SolverConfig",
    "infer_roles",
    "initial_order",
    "balance_term",
    "offcanvas_fraction",
    "default_saliency",
    "score",
    "anneal",
    "solve_glg",
]

ROLES = ("background", "underlay", "image", "decoration", "text_like")

# Stacking classes from bottom to top. Text goes on top of everything,
# decorations above images, underlays just over the background.
CLASS_ORDER = {
    "background": 0,
    "underlay": 1,
    "image": 2,
    "decoration": 3,
    "text_like": 4,
}

# Role rule thresholds. The rules fire in order; first match wins.
BACKGROUND_MIN_COVERAGE = 0.98
BACKGROUND_ASPECT_SLACK = 0.25
UNDERLAY_MIN_AREA_FRAC = 0.25
UNDERLAY_MIN_COVERAGE = 0.9
UNDERLAY_MAX_SALIENCY = 0.08
TEXT_MIN_ASPECT = 3.0
TEXT_MAX_COVERAGE = 0.6
DECOR_MAX_COVERAGE = 0.3
DECOR_MAX_AREA_FRAC = 0.05

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

TRANSLATE_SIGMA_FRAC = 0.05
RESCALE_FACTORS = (0.9, 1.1)


@dataclass(frozen=True)
class SolverConfig:
    """Objective weights, annealing schedule, and the RNG seed."""

    w_overlap: float = 1.0
    w_misalign: float = 0.5
    w_occlusion: float = 2.0
    w_imbalance: float = 0.5
    w_offcanvas: float = 1.0
    t_initial: float = 1.0
    cooling: float = 0.97
    steps: int = 200
    moves_per_temp: int = 16
    seed: int = 0

    WEIGHT_FIELDS = ("w_overlap", "w_misalign", "w_occlusion", "w_imbalance", "w_offcanvas")

    def __post_init__(self) -> None:
        for name in self.WEIGHT_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.t_initial <= 0:
            raise ValueError("t_initial must be positive")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie strictly between 0 and 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.moves_per_temp < 1:
            raise ValueError("moves_per_temp must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def to_json_dict(self) -> dict:
        return {
            "weights": {
                "overlap": self.w_overlap,
                "misalign": self.w_misalign,
                "occlusion": self.w_occlusion,
                "imbalance": self.w_imbalance,
                "offcanvas": self.w_offcanvas,
            },
            "schedule": {
                "t_initial": self.t_initial,
                "cooling": self.cooling,
                "steps": self.steps,
            },
            "moves_per_temp": self.moves_per_temp,
            "seed": self.seed,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "SolverConfig":
        """Build a config from the nested dict shape used by config files.

        Recognized keys: a "weights" table (overlap, misalign, occlusion,
        imbalance, offcanvas), a "schedule" table (t_initial, cooling,
        steps), and top-level moves_per_temp and seed. Anything else is an
        error, so typos do not silently fall back to defaults.
        """
        kwargs: dict = {}
        for key, value in mapping.items():
            if key == "weights":
                for wk, wv in value.items():
                    field = f"w_{wk}"
                    if field not in cls.WEIGHT_FIELDS:
                        raise ValueError(f"unknown weight {wk!r}")
                    kwargs[field] = float(wv)
            elif key == "schedule":
                for sk, sv in value.items():
                    if sk not in ("t_initial", "cooling", "steps"):
                        raise ValueError(f"unknown schedule key {sk!r}")
                    kwargs[sk] = int(sv) if sk == "steps" else float(sv)
            elif key == "moves_per_temp":
                kwargs[key] = int(value)
            elif key == "seed":
                kwargs[key] = int(value)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kwargs)


def infer_roles(
    elements: Mapping[str, tuple[RgbaImage, ElementStats]], canvas: CanvasSpec
) -> dict[str, str]:
    """Assign one role per element from its pixels alone.

    The rule table runs top to bottom and the first hit wins: near-opaque
    canvas-shaped elements are the background; big, well-covered, visually
    quiet ones are underlays; wide sparse strips read as text; small sparse
    bits are decoration; everything else is an image.
    """
    if not elements:
        raise EmptyInput("no elements to classify")
    canvas_aspect = canvas.width / canvas.height
    canvas_area = canvas.width * canvas.height
    roles: dict[str, str] = {}
    for element_id, (img, stats) in elements.items():
        area_frac = (img.width * img.height) / canvas_area
        if (
            stats.alpha_coverage >= BACKGROUND_MIN_COVERAGE
            and abs(stats.aspect / canvas_aspect - 1.0) <= BACKGROUND_ASPECT_SLACK
        ):
            roles[element_id] = "background"
        elif (
            area_frac >= UNDERLAY_MIN_AREA_FRAC
            and stats.alpha_coverage >= UNDERLAY_MIN_COVERAGE
            and float(saliency_proxy(img).mean()) <= UNDERLAY_MAX_SALIENCY
        ):
            roles[element_id] = "underlay"
        elif stats.aspect > TEXT_MIN_ASPECT and stats.alpha_coverage < TEXT_MAX_COVERAGE:
            roles[element_id] = "text_like"
        elif stats.alpha_coverage < DECOR_MAX_COVERAGE and area_frac < DECOR_MAX_AREA_FRAC:
            roles[element_id] = "decoration"
        else:
            roles[element_id] = "image"
    return roles


def initial_order(
    roles: Mapping[str, str], areas: Mapping[str, int] | None = None
) -> dict[str, int]:
    """Rank elements by class order, then descending area, then id."""
    def key(element_id: str) -> tuple:
        area = areas[element_id] if areas is not None else 0
        return (CLASS_ORDER[roles[element_id]], -area, element_id)

    return {element_id: rank for rank, element_id in enumerate(sorted(roles, key=key))}


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _clipped_box(p: Placement, canvas: CanvasSpec) -> tuple[int, int, int, int]:
    x0, y0 = max(p.x, 0), max(p.y, 0)
    x1 = min(p.x + p.w, canvas.width)
    y1 = min(p.y + p.h, canvas.height)
    return x0, y0, x1, y1


def balance_term(d: DraftProtocol, roles: Mapping[str, str]) -> float:
    """Distance of the area-weighted foreground centroid from the canvas
    center, normalized by the half-diagonal. 0 when nothing is foreground."""
    fg = [p for p in d.placements if roles.get(p.element_id) != "background"]
    if not fg:
        return 0.0
    total = float(sum(p.w * p.h for p in fg))
    cx = math.fsum((p.x + p.w / 2.0) * (p.w * p.h) for p in fg) / total
    cy = math.fsum((p.y + p.h / 2.0) * (p.w * p.h) for p in fg) / total
    dist = math.hypot(cx - d.canvas.width / 2.0, cy - d.canvas.height / 2.0)
    return dist / (math.hypot(d.canvas.width, d.canvas.height) / 2.0)


def offcanvas_fraction(d: DraftProtocol, roles: Mapping[str, str]) -> float:
    """Mean fraction of non-background element area clipped off the canvas."""
    fractions = []
    for p in d.placements:
        if roles.get(p.element_id) == "background":
            continue
        x0, y0, x1, y1 = _clipped_box(p, d.canvas)
        visible = max(0, x1 - x0) * max(0, y1 - y0)
        fractions.append(1.0 - visible / (p.w * p.h))
    if not fractions:
        return 0.0
    return math.fsum(fractions) / len(fractions)


def default_saliency(
    d: DraftProtocol, assets: Mapping[str, RgbaImage], roles: Mapping[str, str]
) -> np.ndarray:
    """Saliency proxy of the background layers composited alone.

    Foreground placement should avoid busy background spots, so saliency is
    measured before any foreground lands. Without a background element the
    map is all zeros (a blank canvas has nothing to protect).
    """
    bg = sorted(
        (p for p in d.placements if roles.get(p.element_id) == "background"),
        key=lambda p: p.hierarchy,
    )
    if not bg:
        return np.zeros((d.canvas.height, d.canvas.width), dtype=np.float64)
    ranked = tuple(replace(p, hierarchy=k) for k, p in enumerate(bg))
    render, _ = composite(DraftProtocol(canvas=d.canvas, placements=ranked), assets)
    return saliency_proxy(render)


def _weighted_sum(
    cfg: SolverConfig, ove: float, ali: float, occ_val: float, bal: float, off: float
) -> float:
    return (
        cfg.w_overlap * ove
        + cfg.w_misalign * ali
        + cfg.w_occlusion * (1.0 - occ_val)
        + cfg.w_imbalance * bal
        + cfg.w_offcanvas * off
    )


def score(
    d: DraftProtocol,
    assets: Mapping[str, RgbaImage],
    saliency: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
    roles: Mapping[str, str] | None = None,
) -> float:
    """Composite objective, lower is better; 0 is attainable.

    Terms: content overlap, misalignment, occluded saliency mass, centroid
    imbalance, and off-canvas clipping, each weighted from the config. Roles
    are inferred from the assets when not supplied; saliency defaults to the
    background-only proxy map.
    """
    cfg = cfg or SolverConfig()
    if roles is None:
        roles = infer_roles(
            {i: (img, element_stats(img)) for i, img in assets.items()}, d.canvas
        )
    sal = default_saliency(d, assets, roles) if saliency is None else np.asarray(
        saliency, dtype=np.float64
    )
    _, mask = composite(d, assets)
    occ_val = r_occ(d, sal, mask)
    return _weighted_sum(
        cfg, r_ove(d, roles), r_ali(d), occ_val, balance_term(d, roles),
        offcanvas_fraction(d, roles),
    )


class _Objective:
    """Annealer-side scorer: same number as score(), cheaper occlusion.

    Instead of a full composite pass per candidate, occlusion is the saliency
    mass under the union of above-base footprints (resized alpha over the
    cover threshold), cached per element and size. A pixel's top-most coverer
    has hierarchy above 0 exactly when some above-base element covers it, so
    the union route selects the same pixels as the coverage-mask route.
    """

    def __init__(
        self,
        canvas: CanvasSpec,
        assets: Mapping[str, RgbaImage],
        roles: Mapping[str, str],
        saliency: np.ndarray,
        cfg: SolverConfig,
    ) -> None:
        self.canvas = canvas
        self.assets = assets
        self.roles = roles
        self.cfg = cfg
        self.sal = np.asarray(saliency, dtype=np.float64)
        self.sal_total = float(self.sal.sum())
        self._footprints: dict[tuple[str, int, int], np.ndarray] = {}

    def _footprint(self, element_id: str, w: int, h: int) -> np.ndarray:
        key = (element_id, w, h)
        fp = self._footprints.get(key)
        if fp is None:
            fp = resize(self.assets[element_id], w, h).array[:, :, 3] > DEFAULT_COVER_ALPHA
            self._footprints[key] = fp
        return fp

    def _occ_val(self, d: DraftProtocol) -> float:
        if self.sal_total <= 0.0:
            return 1.0
        covered = np.zeros(self.sal.shape, dtype=bool)
        for p in d.placements:
            if p.hierarchy == 0:
                continue
            x0, y0, x1, y1 = _clipped_box(p, self.canvas)
            if x0 >= x1 or y0 >= y1:
                continue
            fp = self._footprint(p.element_id, p.w, p.h)
            covered[y0:y1, x0:x1] |= fp[y0 - p.y : y1 - p.y, x0 - p.x : x1 - p.x]
        return 1.0 - float(self.sal[covered].sum()) / self.sal_total

    def score(self, d: DraftProtocol) -> float:
        return _weighted_sum(
            self.cfg, r_ove(d, self.roles), r_ali(d), self._occ_val(d),
            balance_term(d, self.roles), offcanvas_fraction(d, self.roles),
        )


def _fill_template_cells(
    geometry: dict[str, tuple[int, int, int, int]],
    order_fg: list[str],
    elements: Mapping[str, RgbaImage],
    canvas: CanvasSpec,
) -> None:
    """Place foreground elements on a centered golden-section grid.

    The grid region is the canvas shrunk by the golden ratio and centered;
    cells fill row-major. Each element scales down (never up) to fit its
    cell, keeping aspect, and sits at the cell center.
    """
    k = len(order_fg)
    if k == 0:
        return
    region_w = max(1, _round_half_up(canvas.width / GOLDEN_RATIO))
    region_h = max(1, _round_half_up(canvas.height / GOLDEN_RATIO))
    region_x = (canvas.width - region_w) // 2
    region_y = (canvas.height - region_h) // 2
    cols = math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    cell_w = region_w / cols
    cell_h = region_h / rows
    for idx, element_id in enumerate(order_fg):
        row, col = divmod(idx, cols)
        nat_w, nat_h = elements[element_id].width, elements[element_id].height
        scale = min(cell_w / nat_w, cell_h / nat_h, 1.0)
        w = max(1, _round_half_up(nat_w * scale))
        h = max(1, _round_half_up(nat_h * scale))
        x = _round_half_up(region_x + col * cell_w + (cell_w - w) / 2.0)
        y = _round_half_up(region_y + row * cell_h + (cell_h - h) / 2.0)
        geometry[element_id] = (x, y, w, h)


def _build_draft(
    canvas: CanvasSpec,
    geometry: Mapping[str, tuple[int, int, int, int]],
    order_by_rank: list[str],
    meta: dict | None = None,
) -> DraftProtocol:
    placements = tuple(
        Placement(element_id, *geometry[element_id], hierarchy=rank)
        for rank, element_id in enumerate(order_by_rank)
    )
    return DraftProtocol(canvas=canvas, placements=placements, meta=meta)


def _run(
    elements: dict[str, RgbaImage],
    canvas: CanvasSpec,
    cfg: SolverConfig,
    mode: str,
) -> DraftProtocol:
    if not elements:
        raise EmptyInput("no elements to place")
    stats = {i: element_stats(img) for i, img in elements.items()}
    roles = infer_roles({i: (elements[i], stats[i]) for i in elements}, canvas)

    if mode == "hlg":
        fg_order = sorted(
            (i for i in elements if roles[i] != "background"),
            key=lambda i: (
                CLASS_ORDER[roles[i]],
                -(elements[i].width * elements[i].height),
                i,
            ),
        )
    else:
        fg_order = [i for i in elements if roles[i] != "background"]

    geometry: dict[str, tuple[int, int, int, int]] = {
        i: (0, 0, canvas.width, canvas.height)
        for i in elements
        if roles[i] == "background"
    }
    _fill_template_cells(geometry, fg_order, elements, canvas)

    if mode == "hlg":
        areas = {i: geometry[i][2] * geometry[i][3] for i in elements}
        ranks = initial_order(roles, areas)
    else:
        ranks = {i: rank for rank, i in enumerate(elements)}
    order_by_rank: list[str] = [""] * len(elements)
    for element_id, rank in ranks.items():
        order_by_rank[rank] = element_id

    meta = {"solver": {"mode": mode, **cfg.to_json_dict()}}
    template = _build_draft(canvas, geometry, order_by_rank)
    if len(elements) == 1:
        return canonicalize(_build_draft(canvas, geometry, order_by_rank, meta))

    saliency = default_saliency(template, elements, roles)
    objective = _Objective(canvas, elements, roles, saliency, cfg)

    swap_positions = (
        [
            r
            for r in range(len(order_by_rank) - 1)
            if CLASS_ORDER[roles[order_by_rank[r]]] == CLASS_ORDER[roles[order_by_rank[r + 1]]]
        ]
        if mode == "hlg"
        else []
    )
    kinds: list[str] = []
    if fg_order:
        kinds.extend(("translate", "rescale"))
    if swap_positions:
        kinds.append("swap")

    current_geom = dict(geometry)
    current_order = list(order_by_rank)
    current_score = objective.score(template)
    best_geom, best_order, best_score = dict(current_geom), list(current_order), current_score

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if kinds:
        for step in range(cfg.steps):
            temperature = cfg.t_initial * cfg.cooling**step
            for _ in range(cfg.moves_per_temp):
                kind = kinds[int(rng.integers(0, len(kinds)))]
                cand_geom = current_geom
                cand_order = current_order
                if kind == "translate":
                    target = fg_order[int(rng.integers(0, len(fg_order)))]
                    dx = _round_half_up(rng.normal(0.0, TRANSLATE_SIGMA_FRAC * canvas.width))
                    dy = _round_half_up(rng.normal(0.0, TRANSLATE_SIGMA_FRAC * canvas.height))
                    x, y, w, h = current_geom[target]
                    cand_geom = dict(current_geom)
                    cand_geom[target] = (x + dx, y + dy, w, h)
                elif kind == "rescale":
                    target = fg_order[int(rng.integers(0, len(fg_order)))]
                    factor = RESCALE_FACTORS[int(rng.random() >= 0.5)]
                    x, y, w, h = current_geom[target]
                    new_w = max(1, _round_half_up(w * factor))
                    new_h = max(1, _round_half_up(h * factor))
                    cand_geom = dict(current_geom)
                    cand_geom[target] = (
                        x + _round_half_up((w - new_w) / 2.0),
                        y + _round_half_up((h - new_h) / 2.0),
                        new_w,
                        new_h,
                    )
                else:
                    pos = swap_positions[int(rng.integers(0, len(swap_positions)))]
                    cand_order = list(current_order)
                    cand_order[pos], cand_order[pos + 1] = cand_order[pos + 1], cand_order[pos]
                candidate = _build_draft(canvas, cand_geom, cand_order)
                cand_score = objective.score(candidate)
                delta = cand_score - current_score
                if delta <= 0.0 or rng.random() < math.exp(-delta / temperature):
                    if __debug__:
                        validate_draft(candidate)
                    current_geom, current_order = cand_geom, cand_order
                    current_score = cand_score
                    if cand_score < best_score:
                        best_geom = dict(cand_geom)
                        best_order = list(cand_order)
                        best_score = cand_score

    return canonicalize(_build_draft(canvas, best_geom, best_order, meta))


def anneal(
    elements: Mapping[str, RgbaImage],
    canvas: CanvasSpec,
    cfg: SolverConfig | None = None,
) -> DraftProtocol:
    """Produce a draft for an unordered element set, inferring the hierarchy.

    The result is independent of the order the mapping iterates in; only the
    element contents, the canvas, and the config matter.
    """
    return _run(dict(elements), canvas, cfg or SolverConfig(), mode="hlg")


def solve_glg(
    elements: Mapping[str, RgbaImage],
    canvas: CanvasSpec,
    cfg: SolverConfig | None = None,
) -> DraftProtocol:
    """Optimize geometry only: the mapping's iteration order is the layer
    order, bottom first, and comes back in the output unchanged."""
    return _run(dict(elements), canvas, cfg or SolverConfig(), mode="glg")
